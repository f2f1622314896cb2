import hashlib
import json
from dataclasses import replace

import pytest

from apsm.boot.attestation import AttestationRecord, attest_result, verify_attestation
from apsm.boot.chain import verify_boot_chain
from apsm.boot.images import make_fixture, read_image_dir
from apsm.device import attest, exploit_kernel, unlock_bootloader
from apsm.errors import KeystoreUnavailable


def test_record_fields(world):
    rec = attest(world, "nonce-1")
    assert rec.deviceLocked is True
    assert rec.verifiedBootState == "GREEN"
    assert rec.challenge == "nonce-1"
    assert rec.verifiedBootHash == world.last_boot.vbmeta_digest.hex()
    assert verify_attestation(rec, world.scheme, world.attestation_key,
                              world.last_boot.vbmeta_digest, "nonce-1", require_green=True).ok


def test_json_roundtrip(world):
    rec = attest(world, "n")
    assert AttestationRecord.from_json(rec.to_json()) == rec
    assert set(json.loads(rec.to_json())) == {
        "deviceLocked", "verifiedBootState", "verifiedBootHash", "challenge",
        "attestation_key", "signature"}


@pytest.mark.parametrize("field,value", [
    ("deviceLocked", False),
    ("verifiedBootState", "ORANGE"),
    ("verifiedBootHash", "00" * 32),
    ("challenge", "other"),
])
def test_tampered_record_rejected(world, field, value):
    rec = replace(attest(world, "n"), **{field: value})
    check = verify_attestation(rec, world.scheme, world.attestation_key)
    assert not check.ok and "bad-signature" in check.reasons


def test_untrusted_key_and_challenge(world):
    rec = attest(world, "n")
    assert verify_attestation(rec, world.scheme, "other").reasons[0] == "untrusted-key"
    assert verify_attestation(rec, world.scheme, world.attestation_key,
                              challenge="m").reasons == ("challenge-mismatch",)


def test_unlocked_device_reports_honestly(world):
    unlock_bootloader(world)
    rec = attest(world)
    assert (rec.deviceLocked, rec.verifiedBootState) == (False, "ORANGE")
    check = verify_attestation(rec, world.scheme, world.attestation_key, require_green=True)
    assert check.reasons == ("not-green-locked",)


def test_kernel_compromise_cannot_forge_lock_state(world):
    unlock_bootloader(world)
    exploit_kernel(world)
    lied = replace(attest(world), deviceLocked=True, verifiedBootState="GREEN")
    assert not verify_attestation(lied, world.scheme, world.attestation_key).ok


def test_no_attestation_without_boot():
    with pytest.raises(KeystoreUnavailable):
        attest_result(None, "k", None)


def test_digest_recomputed_from_fixture_images(tmp_path):
    make_fixture(tmp_path, seed=4)
    d = read_image_dir(tmp_path)
    result = verify_boot_chain(d.chain, d.images, d.scheme)
    # top-level struct first, then the chained one
    expected = hashlib.sha256(d.images["vbmeta"] + d.images["vbmeta_vendor"]).digest()
    assert result.vbmeta_digest == expected
    rec = attest_result(result, d.attestation_key, d.scheme, "c")
    assert verify_attestation(rec, d.scheme, d.attestation_key, expected, "c",
                              require_green=True).ok
