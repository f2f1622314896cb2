from typing import Optional

from apsm.core.lifecycle import register_app
from apsm.permissions import Manifest
from apsm.world import DeviceWorld


def install(world: DeviceWorld, name: str, key: Optional[str] = None, perms=(), **kw):
    """Install a third-party app signed by ``key`` (default: a per-app key)."""
    manifest = Manifest(name, list(perms), kw.pop("declared", []), kw.pop("target_sdk", 30),
                        kw.pop("shared_uid", None), False, kw.pop("queries", []))
    return register_app(world, key or f"key-{name}", manifest, **kw)
