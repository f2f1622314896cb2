import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsm.boot.vbmeta import (
    BootloaderStage,
    ChainDescriptor,
    HashDescriptor,
    HashtreeDescriptor,
    VbMeta,
    decode_stage,
    decode_vbmeta,
    encode_stage,
    encode_vbmeta,
)
from apsm.crypto import KeyedDigestScheme
from apsm.errors import MalformedImage

SCHEME = KeyedDigestScheme(0)

SAMPLE = VbMeta("k-vb", 7, (
    HashtreeDescriptor("system", 4096, 16384, b"\x11" * 32),
    HashDescriptor("boot", 17, b"\x22" * 32),
    ChainDescriptor("vendor", "k-part", 1),
), 0)


def test_roundtrip_and_signature():
    blob = encode_vbmeta(SAMPLE, SCHEME)
    vb, signed = decode_vbmeta(blob)
    assert vb == SAMPLE
    assert signed.verifies(SCHEME, "k-vb")
    assert not signed.verifies(SCHEME, "k-other")


def test_header_layout():
    blob = encode_vbmeta(SAMPLE, SCHEME)
    assert blob[:4] == b"AVBM"
    assert blob[4:8] == (1).to_bytes(4, "big")
    assert blob[8:12] == (0).to_bytes(4, "big")
    assert blob[12:20] == (7).to_bytes(8, "big")


def test_signing_key_override():
    blob = encode_vbmeta(SAMPLE, SCHEME, signing_key="user-root")
    _, signed = decode_vbmeta(blob)
    assert signed.verifies(SCHEME, "user-root") and not signed.verifies(SCHEME, "k-vb")


def test_body_flip_breaks_signature():
    blob = bytearray(encode_vbmeta(SAMPLE, SCHEME))
    blob[15] ^= 1  # inside the rollback index
    vb, signed = decode_vbmeta(bytes(blob))
    assert not signed.verifies(SCHEME, "k-vb")


@pytest.mark.parametrize("mangle", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + (2).to_bytes(4, "big") + b[8:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:10],
    lambda b: b"",
])
def test_malformed_inputs_raise(mangle):
    with pytest.raises(MalformedImage):
        decode_vbmeta(mangle(encode_vbmeta(SAMPLE, SCHEME)))


def test_unknown_descriptor_tag():
    blob = bytearray(encode_vbmeta(VbMeta("k", 0, (HashDescriptor("b", 1, b"\0" * 32),)), SCHEME))
    tag_at = 4 + 4 + 4 + 8 + 2 + 1 + 4
    assert blob[tag_at] == 2
    blob[tag_at] = 9
    with pytest.raises(MalformedImage):
        decode_vbmeta(bytes(blob))


def test_negative_rollback_index_rejected():
    with pytest.raises(ValueError):
        VbMeta("k", -1, ())


def test_stage_roundtrip():
    stage = BootloaderStage("bootloader0", "rom", "next", b"payload")
    got, signed = decode_stage(encode_stage(stage, SCHEME))
    assert got == stage and signed.verifies(SCHEME, "rom")
    with pytest.raises(MalformedImage):
        decode_stage(encode_vbmeta(SAMPLE, SCHEME))


names = st.text(st.characters(min_codepoint=33, max_codepoint=0x2FFF), min_size=1, max_size=12)
descs = st.one_of(
    st.builds(HashtreeDescriptor, names, st.integers(1, 2**32 - 1), st.integers(0, 2**64 - 1),
              st.binary(min_size=32, max_size=32)),
    st.builds(HashDescriptor, names, st.integers(0, 2**64 - 1), st.binary(min_size=32, max_size=32)),
    st.builds(ChainDescriptor, names, names, st.integers(0, 2**32 - 1)),
)


@given(names, st.integers(0, 2**64 - 1), st.lists(descs, max_size=6), st.integers(0, 2**32 - 1))
def test_roundtrip_property(signer, idx, ds, loc):
    vb = VbMeta(signer, idx, tuple(ds), loc)
    assert decode_vbmeta(encode_vbmeta(vb, SCHEME))[0] == vb


@given(st.binary(max_size=200))
def test_decoder_never_crashes_unexpectedly(blob):
    try:
        decode_vbmeta(blob)
    except MalformedImage:
        pass
