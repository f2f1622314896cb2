import functools
import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsm.core.consent import Verdict
from apsm.core.lifecycle import update_app
from apsm.device import reboot
from apsm.errors import (
    BackgroundRequest,
    NotRequestable,
    NotUserRevocable,
    RegistrySyntaxError,
    UnknownPermission,
)
from apsm.permissions import (
    BACKGROUND,
    FOREGROUND,
    AppContext,
    Manifest,
    PermissionDef,
    PermissionRegistry,
    PermStatus,
    ProtectionLevel,
    check_permission,
    request_runtime,
    revoke,
    set_from_settings,
    settings_toggle,
    status,
)
from apsm.world import DeviceWorld
from support import install

LOCATION = ("ACCESS_FINE_LOCATION", "ACCESS_COARSE_LOCATION")


def _app(world, perms, **kw):
    install(world, "com.a", perms=perms, **kw)
    world.set_foreground("com.a")
    return world.uid_of("com.a")


def test_normal_granted_at_install(world):
    uid = _app(world, ["INTERNET"])
    assert status(world, uid, "INTERNET") is PermStatus.GRANTED
    assert check_permission(world, uid, "INTERNET") is Verdict.ALLOW


def test_dangerous_starts_at_ask_and_denies(world):
    uid = _app(world, ["ACCESS_FINE_LOCATION"])
    assert status(world, uid, "ACCESS_FINE_LOCATION") is PermStatus.ASK
    assert check_permission(world, uid, "ACCESS_FINE_LOCATION") is Verdict.DENY


def test_special_needs_settings_toggle(world):
    uid = _app(world, ["SYSTEM_ALERT_WINDOW"])
    assert status(world, uid, "SYSTEM_ALERT_WINDOW") is PermStatus.DENIED
    with pytest.raises(NotRequestable):
        request_runtime(world, uid, "SYSTEM_ALERT_WINDOW", "allow")
    settings_toggle(world, uid, "SYSTEM_ALERT_WINDOW", True)
    assert check_permission(world, uid, "SYSTEM_ALERT_WINDOW") is Verdict.ALLOW


def test_signature_privileged_needs_platform_key_or_allowlist(world):
    uid = _app(world, ["WRITE_SECURE_SETTINGS", "BLUETOOTH_PRIVILEGED"])
    assert status(world, uid, "WRITE_SECURE_SETTINGS") is PermStatus.DENIED
    phone = world.uid_of("com.android.phone")
    assert world.packages["com.android.phone"].signing_key != world.image.platform_key
    assert status(world, phone, "BLUETOOTH_PRIVILEGED") is PermStatus.GRANTED
    assert status(world, phone, "MODIFY_PHONE_STATE") is PermStatus.GRANTED
    settings = world.uid_of("com.android.settings")
    assert status(world, settings, "WRITE_SECURE_SETTINGS") is PermStatus.GRANTED


def test_privileged_denied_for_third_party(world):
    uid = _app(world, ["MODIFY_PHONE_STATE"])
    assert check_permission(world, uid, "MODIFY_PHONE_STATE") is Verdict.DENY


def test_app_declared_signature_permission(world):
    decl = PermissionDef("com.a.SYNC", ProtectionLevel.SIGNATURE, declarer="com.a")
    install(world, "com.a", key="k-shared", declared=[decl])
    install(world, "com.b", key="k-shared", perms=["com.a.SYNC"])
    install(world, "com.c", key="k-other", perms=["com.a.SYNC"])
    assert status(world, world.uid_of("com.b"), "com.a.SYNC") is PermStatus.GRANTED
    assert status(world, world.uid_of("com.c"), "com.a.SYNC") is PermStatus.DENIED


def test_unknown_permission_rejected(world):
    with pytest.raises(UnknownPermission):
        install(world, "com.a", perms=["NOT_A_PERMISSION"])


def test_foreground_only_follows_context(world):
    uid = _app(world, ["CAMERA"])
    request_runtime(world, uid, "CAMERA", "allow-foreground-only")
    assert check_permission(world, uid, "CAMERA") is Verdict.ALLOW
    world.set_foreground(None)
    assert check_permission(world, uid, "CAMERA") is Verdict.DENY
    svc = AppContext(foreground=False, foreground_service=True)
    assert check_permission(world, uid, "CAMERA", svc) is Verdict.ALLOW


def test_one_time_expires_at_reboot(world):
    uid = _app(world, ["CAMERA"])
    request_runtime(world, uid, "CAMERA", "allow-one-time")
    assert check_permission(world, uid, "CAMERA") is Verdict.ALLOW
    reboot(world)
    assert status(world, uid, "CAMERA") is PermStatus.ASK


def test_group_shares_one_answer(world):
    uid = _app(world, list(LOCATION))
    request_runtime(world, uid, "ACCESS_COARSE_LOCATION", "allow")
    assert all(status(world, uid, p) is PermStatus.GRANTED for p in LOCATION)


def test_new_group_member_inherits(world):
    uid = _app(world, ["ACCESS_COARSE_LOCATION"])
    request_runtime(world, uid, "ACCESS_COARSE_LOCATION", "allow")
    update_app(world, "key-com.a", Manifest("com.a", list(LOCATION)))
    assert status(world, uid, "ACCESS_FINE_LOCATION") is PermStatus.GRANTED


@pytest.mark.parametrize("covers,expected", [(True, PermStatus.DENIED), (False, PermStatus.ASK)])
def test_denied_group_and_later_member(world, covers, expected):
    world.group_deny_covers_new_members = covers
    uid = _app(world, ["ACCESS_COARSE_LOCATION"])
    request_runtime(world, uid, "ACCESS_COARSE_LOCATION", "deny-always")
    update_app(world, "key-com.a", Manifest("com.a", list(LOCATION)))
    assert status(world, uid, "ACCESS_FINE_LOCATION") is expected
    assert status(world, uid, "ACCESS_COARSE_LOCATION") is PermStatus.DENIED


def test_background_request_refused(world):
    uid = _app(world, ["CAMERA"])
    with pytest.raises(BackgroundRequest):
        request_runtime(world, uid, "CAMERA", "allow", BACKGROUND)


def test_deny_always_suppresses_prompts(world):
    uid = _app(world, ["CAMERA"])
    request_runtime(world, uid, "CAMERA", "deny-always")
    before = world.stats.get("prompts", 0)
    request_runtime(world, uid, "CAMERA", "allow")
    assert world.stats.get("prompts", 0) == before
    assert status(world, uid, "CAMERA") is PermStatus.DENIED


def test_revoke_then_rerequest(world):
    uid = _app(world, ["CAMERA", "INTERNET"])
    request_runtime(world, uid, "CAMERA", "allow")
    revoke(world, uid, "CAMERA")
    assert check_permission(world, uid, "CAMERA") is Verdict.DENY
    before = world.stats.get("prompts", 0)
    request_runtime(world, uid, "CAMERA", "allow")
    assert world.stats["prompts"] == before + 1
    with pytest.raises(NotUserRevocable):
        revoke(world, uid, "INTERNET")


def test_settings_grant_of_runtime_permission(world):
    uid = _app(world, ["CAMERA"])
    set_from_settings(world, uid, "CAMERA", "allow")
    assert check_permission(world, uid, "CAMERA", BACKGROUND) is Verdict.ALLOW


def test_unrequested_permission_denied(world):
    uid = _app(world, ["INTERNET"])
    assert check_permission(world, uid, "CAMERA") is Verdict.DENY


# hand-enumerated: (status, app active?) -> verdict
CHECK_TABLE = {
    (PermStatus.GRANTED, True): Verdict.ALLOW,
    (PermStatus.GRANTED, False): Verdict.ALLOW,
    (PermStatus.FOREGROUND_ONLY, True): Verdict.ALLOW,
    (PermStatus.FOREGROUND_ONLY, False): Verdict.DENY,
    (PermStatus.ONE_TIME, True): Verdict.ALLOW,
    (PermStatus.ONE_TIME, False): Verdict.DENY,
    (PermStatus.ASK, True): Verdict.DENY,
    (PermStatus.ASK, False): Verdict.DENY,
    (PermStatus.DENIED, True): Verdict.DENY,
    (PermStatus.DENIED, False): Verdict.DENY,
}
RESPONSE_FOR = {
    PermStatus.GRANTED: "allow",
    PermStatus.FOREGROUND_ONLY: "allow-foreground-only",
    PermStatus.ONE_TIME: "allow-one-time",
    PermStatus.ASK: "deny",
    PermStatus.DENIED: "deny-always",
}


@pytest.mark.parametrize("st_,active", list(itertools.product(PermStatus, [True, False])))
def test_check_truth_table(world, st_, active):
    uid = _app(world, ["CAMERA"])
    request_runtime(world, uid, "CAMERA", RESPONSE_FOR[st_])
    assert status(world, uid, "CAMERA") is st_
    ctx = FOREGROUND if active else BACKGROUND
    assert check_permission(world, uid, "CAMERA", ctx) is CHECK_TABLE[(st_, active)]


def test_registry_parse_errors():
    with pytest.raises(RegistrySyntaxError):
        PermissionRegistry.parse("perm X bogus-level\n")
    with pytest.raises(RegistrySyntaxError):
        PermissionRegistry.parse("perm X normal flags=unknownflag\n")


ops = st.lists(st.tuples(st.sampled_from(["request", "revoke", "settings"]),
                         st.sampled_from(["CAMERA", *LOCATION]),
                         st.sampled_from(["allow", "allow-foreground-only", "allow-one-time",
                                          "deny", "deny-always"])), max_size=12)


@functools.cache
def _base_world():
    w = DeviceWorld.fresh(seed=1)
    _app(w, ["CAMERA", *LOCATION])
    return w


@given(ops)
def test_group_members_always_agree(seq):
    world = _base_world().snapshot()
    uid = world.uid_of("com.a")
    for op, perm, resp in seq:
        if op == "request":
            request_runtime(world, uid, perm, resp)
        elif op == "revoke":
            revoke(world, uid, perm)
        else:
            set_from_settings(world, uid, perm, resp)
        assert status(world, uid, LOCATION[0]) is status(world, uid, LOCATION[1])
