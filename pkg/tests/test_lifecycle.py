import pytest

from apsm.core.consent import ConsentResponse
from apsm.core.lifecycle import factory_reset, reset_party, uninstall
from apsm.device import ota, read_frp, reboot, set_frp
from apsm.errors import DuplicatePackageName, FrpAccessDenied, UnknownParty
from apsm.keystore import KeyEntry
from apsm.permissions import PermStatus, request_runtime, status
from apsm.sandbox import DpcPolicy, create_work_profile, new_object
from apsm.world import DeviceWorld, RetainedState
from support import install


def _populated(world):
    install(world, "com.a", perms=["CAMERA"])
    install(world, "com.b")
    uid = world.uid_of("com.a")
    world.add_object(new_object(world, "/data/user/0/com.a/f", uid, b"x"))
    world.add_object(new_object(world, "/storage/emulated/0/DCIM/p.jpg", uid, b"p"))
    world.set_foreground("com.a")
    request_runtime(world, uid, "CAMERA", "allow")
    world.consents.set("app:com.b", "share", ConsentResponse.ALLOW_ALWAYS)
    world.consents.set("user:0", "share", ConsentResponse.ALLOW_ALWAYS, about={"app:com.a"})
    world.keystore.generate(KeyEntry("k", uid))
    return world


def test_developer_reset_removes_everything_of_that_party(world):
    w = _populated(world)
    uid = w.uid_of("com.a")
    reset_party(w, "app:com.a")
    assert "com.a" not in w.packages and "app:com.a" not in w.parties
    assert not any(p.startswith(("/data/user/0/com.a/", "/data/user_de/0/com.a/")) for p in w.fs)
    assert "/data/user/0/com.a" not in w.fs and "/data/user_de/0/com.a" not in w.fs
    # media the app wrote belongs to the user and stays
    assert "/storage/emulated/0/DCIM/p.jpg" in w.fs
    assert "k" not in w.keystore.entries
    assert w.consents.peek("user:0", f"perm:{uid}:CAMERA") is None
    assert w.consents.peek("user:0", "share") is None
    assert w.consents.peek("app:com.b", "share") is not None


def test_reinstall_after_reset_starts_clean(world):
    w = _populated(world)
    uid = w.uid_of("com.a")
    reset_party(w, "app:com.a")
    install(w, "com.a", perms=["CAMERA"])
    assert w.uid_of("com.a") == uid
    assert status(w, uid, "CAMERA") is PermStatus.ASK


def test_user_reset_keeps_apps_and_drops_user_data(world):
    w = _populated(world)
    reset_party(w, "user:0")
    assert "com.a" in w.packages
    assert status(w, w.uid_of("com.a"), "CAMERA") is PermStatus.ASK
    assert "/storage/emulated/0/DCIM/p.jpg" not in w.fs
    assert "/data/user/0/com.a/f" in w.fs


def test_org_reset_removes_profile(world):
    install(world, "com.dpc")
    profile = create_work_profile(world, "com.dpc", DpcPolicy())
    reset_party(world, "org:com.dpc")
    assert profile not in world.users and "org:com.dpc" not in world.parties
    assert "com.dpc" in world.packages


def test_unknown_party(world):
    with pytest.raises(UnknownParty):
        reset_party(world, "app:ghost")


def test_factory_reset_matches_fresh_device_with_same_hardware(world):
    w = _populated(world)
    ota(w, 2, rollback_index=3)
    reboot(w)
    set_frp(w, w.platform_id, "owner@example")
    w.clock = 1234
    retained = RetainedState.of(w)
    system_digest = w.images["vbmeta"]
    factory_reset(w)
    assert w.digest() == DeviceWorld.fresh(retained=retained, seed=w.seed).digest()
    assert w.images["vbmeta"] == system_digest
    assert w.image.os_version == 2 and w.boot.rollback.get(0) == 3
    assert read_frp(w, w.platform_id) == "owner@example"


def test_frp_reserved_to_platform(world):
    install(world, "com.a")
    with pytest.raises(FrpAccessDenied):
        set_frp(world, "app:com.a", "x")
    with pytest.raises(FrpAccessDenied):
        read_frp(world, "app:com.a")


def test_duplicate_package_name(world):
    install(world, "com.a")
    with pytest.raises(DuplicatePackageName):
        install(world, "com.a", key="other")


def test_uninstall_for_one_user_keeps_party(world):
    from apsm.core.lifecycle import install_for_user

    install(world, "com.a")
    world.add_user(1)
    install_for_user(world, "com.a", 1)
    uninstall(world, "com.a", 1)
    assert "app:com.a" in world.parties and world.packages["com.a"].users == {0}
