import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsm.authn import (
    HOUR,
    BiometricClass,
    Modality,
    ModalityKind,
    Tier,
    TokenStrength,
    classify_biometric,
)
from apsm.device import reboot, sign_trh_firmware, trh_update
from apsm.errors import BadSignature, NotEnrolled, TierLockout
from apsm.keystore import KeyBacking, KeyEntry
from apsm.world import DeviceWorld
from oracles import TierModel

PIN = Modality(ModalityKind.PIN)
FACE = Modality(ModalityKind.BIOMETRIC, BiometricClass.STRONG)
PLACE = Modality(ModalityKind.TRUSTED_PLACE)


@pytest.fixture
def enrolled(world):
    world.auth.set_credential(0, "pin", "1234")
    world.auth.enroll(0, FACE)
    world.auth.enroll(0, PLACE)
    reboot(world)
    return world


def _auth(w, modality, dt=0, **kw):
    w.clock += dt
    return w.auth.authenticate(0, modality, w.clock, **kw)


def test_tiers_and_strengths():
    assert PIN.tier is Tier.PRIMARY and PIN.strength is TokenStrength.PRIMARY
    assert FACE.tier is Tier.SECONDARY and FACE.strength is TokenStrength.STRONG
    assert PLACE.tier is Tier.TERTIARY and PLACE.strength is TokenStrength.TERTIARY
    assert [s.value for s in sorted(TokenStrength, reverse=True)] == [5, 4, 3, 2, 1]


@pytest.mark.parametrize("sar,secure,expected", [
    (0.05, True, BiometricClass.STRONG),
    (0.07, True, BiometricClass.STRONG),
    (0.10, True, BiometricClass.WEAK),
    (0.20, True, BiometricClass.WEAK),
    (0.30, True, BiometricClass.CONVENIENCE),
    (0.01, False, BiometricClass.CONVENIENCE),
])
def test_classify_biometric(sar, secure, expected):
    assert classify_biometric(sar, secure) is expected


def test_modality_needs_class_iff_biometric():
    with pytest.raises(ValueError):
        Modality(ModalityKind.BIOMETRIC)
    with pytest.raises(ValueError):
        Modality(ModalityKind.PIN, BiometricClass.STRONG)
    assert Modality.parse("biometric:weak").biometric_class is BiometricClass.WEAK


def test_pin_pass_and_fail(enrolled):
    assert not _auth(enrolled, PIN, factor="0000")
    assert not enrolled.auth.ce_available(0)
    r = _auth(enrolled, PIN, factor="1234")
    assert r and r.ce_unlocked_now and r.token.strength is TokenStrength.PRIMARY


def test_first_unlock_after_reboot_needs_primary(enrolled):
    with pytest.raises(TierLockout):
        _auth(enrolled, FACE)
    with pytest.raises(TierLockout):
        _auth(enrolled, PLACE)
    assert _auth(enrolled, PIN, factor="1234")
    assert _auth(enrolled, FACE).tier is Tier.SECONDARY


def test_biometric_locked_out_after_72h(enrolled):
    _auth(enrolled, PIN, factor="1234")
    assert _auth(enrolled, FACE, dt=71 * HOUR)
    with pytest.raises(TierLockout):
        _auth(enrolled, FACE, dt=2 * HOUR)
    assert _auth(enrolled, PIN, factor="1234")
    assert _auth(enrolled, FACE)


def test_trusted_place_locked_out_after_5h_idle(enrolled):
    _auth(enrolled, PIN, factor="1234")
    assert _auth(enrolled, PLACE, dt=3 * HOUR)
    with pytest.raises(TierLockout):
        _auth(enrolled, PLACE, dt=5 * HOUR)


def test_failed_match_changes_nothing(enrolled):
    _auth(enrolled, PIN, factor="1234")
    before = enrolled.auth.users[0].state.canonical()
    assert not _auth(enrolled, FACE, dt=60, match=False)
    assert enrolled.auth.users[0].state.canonical() == before


def test_secondary_needs_primary_credential(world):
    with pytest.raises(NotEnrolled):
        world.auth.enroll(0, FACE)
    with pytest.raises(NotEnrolled):
        world.auth.authenticate(0, FACE, 0)


def test_tokens_die_at_reboot(enrolled):
    token = _auth(enrolled, PIN, factor="1234").token
    assert enrolled.auth.token_valid(token)
    reboot(enrolled)
    assert not enrolled.auth.token_valid(token)


def test_ce_key_entangles_credential(world):
    a = world.auth.ce_key(0, "1234")
    assert a != world.auth.ce_key(0, "1235")
    assert a != DeviceWorld.fresh(seed=world.seed + 1).auth.ce_key(0, "1234")


# -- secure-element firmware -------------------------------------------------


def _strongbox(w):
    w.keystore.generate(KeyEntry("sb", 10000, KeyBacking.STRONGBOX))


def test_update_with_credential_keeps_secrets(enrolled):
    _strongbox(enrolled)
    fw = b"fw-2"
    assert trh_update(enrolled, fw, sign_trh_firmware(enrolled, fw), (0, "1234"))
    assert "sb" in enrolled.keystore.entries
    assert _auth(enrolled, PIN, factor="1234").ce_unlocked_now


def test_update_without_credential_wipes_secrets(enrolled):
    _strongbox(enrolled)
    fw = b"fw-2"
    epoch = enrolled.auth.epoch
    assert not trh_update(enrolled, fw, sign_trh_firmware(enrolled, fw))
    assert "sb" not in enrolled.keystore.entries
    assert enrolled.auth.epoch == epoch + 1
    # the same pin no longer opens CE storage
    assert not _auth(enrolled, PIN, factor="1234")
    assert not enrolled.auth.ce_available(0)


def test_wrong_credential_counts_as_none(enrolled):
    fw = b"fw-2"
    assert not trh_update(enrolled, fw, sign_trh_firmware(enrolled, fw), (0, "9999"))


def test_unsigned_update_rejected(enrolled):
    _strongbox(enrolled)
    fw_before = enrolled.auth.trh_firmware
    with pytest.raises(BadSignature):
        trh_update(enrolled, b"evil", b"\0" * 32, (0, "1234"))
    assert enrolled.auth.trh_firmware == fw_before and "sb" in enrolled.keystore.entries


# -- lockout property against the reference model --------------------------

steps = st.lists(st.tuples(st.sampled_from(["primary", "secondary", "tertiary", "reboot"]),
                           st.integers(0, 80 * HOUR)), max_size=20)


@pytest.fixture(scope="module")
def auth_base():
    w = DeviceWorld.fresh(seed=5)
    w.auth.set_credential(0, "pin", "1234")
    w.auth.enroll(0, FACE)
    w.auth.enroll(0, PLACE)
    reboot(w)
    return w


MODALITY = {"primary": PIN, "secondary": FACE, "tertiary": PLACE}


@given(steps)
def test_lockout_matches_reference_model(auth_base, seq):
    w = auth_base.snapshot()
    model = TierModel()
    for kind, dt in seq:
        w.clock += dt
        if kind == "reboot":
            reboot(w)
            model.reboot()
            continue
        expected = model.attempt(kind, w.clock)
        try:
            r = w.auth.authenticate(0, MODALITY[kind], w.clock, factor="1234")
            got = "ok" if r else "fail"
        except TierLockout:
            got = "lockout"
        assert got == expected, (kind, w.clock)
