import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superseg import GridLayout, SuperImage, Volume, to_super_image
from superseg.errors import BadChannel, BadMagic, BadVersion, DimOverflow, ManifestError, TruncatedFile
from superseg.store import (
    HEADER_SIZE,
    decode_volume,
    encode_volume,
    export_pgm,
    load_manifest,
    read_pgm,
    read_volume,
    write_manifest,
    write_volume,
)


def test_header_is_36_bytes(tmp_path):
    v = Volume(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2))
    path = tmp_path / "v.svol"
    write_volume(v, path)
    raw = path.read_bytes()
    assert HEADER_SIZE == 36
    assert len(raw) == 68
    assert raw[:4] == b"SVOL"
    assert struct.unpack_from("<I4I3f", raw, 4) == (1, 2, 2, 2, 1, 1.0, 1.0, 1.0)


def test_dims_order_and_payload_layout():
    data = np.random.default_rng(0).standard_normal((2, 3, 4, 5)).astype(np.float32)  # C, D, H, W
    raw = encode_volume(Volume(data, (0.5, 0.75, 2.0)))
    assert struct.unpack_from("<4I", raw, 8) == (4, 5, 3, 2)
    assert struct.unpack_from("<3f", raw, 24) == (0.5, 0.75, 2.0)
    assert np.array_equal(np.frombuffer(raw, "<f4", offset=36), data.ravel())


@settings(max_examples=60, deadline=None)
@given(
    dims=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 3)),
    spacing=st.tuples(*[st.floats(0.01, 100.0)] * 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_roundtrip_fuzz(dims, spacing, seed):
    h, w, d, c = dims
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((c, d, h, w)).astype(np.float32)
    data.ravel()[:: max(1, data.size // 3)] = np.float32(-0.0)
    v = Volume(data, spacing)
    back = decode_volume(encode_volume(v))
    assert back.equals(v)


def test_roundtrip_through_file(tmp_path):
    v = Volume(np.random.default_rng(1).standard_normal((2, 4, 3, 5)), (1.5, 1.5, 3.0))
    write_volume(v, tmp_path / "a.svol")
    assert read_volume(tmp_path / "a.svol").equals(v)


def test_rejects_bad_magic():
    raw = bytearray(encode_volume(Volume(np.zeros((1, 1, 2, 2)))))
    raw[:4] = b"XXXX"
    with pytest.raises(BadMagic):
        decode_volume(bytes(raw))


def test_rejects_bad_version():
    raw = bytearray(encode_volume(Volume(np.zeros((1, 1, 2, 2)))))
    raw[4:8] = struct.pack("<I", 2)
    with pytest.raises(BadVersion):
        decode_volume(bytes(raw))


def test_rejects_length_mismatch():
    raw = encode_volume(Volume(np.zeros((1, 2, 2, 2))))
    with pytest.raises(TruncatedFile):
        decode_volume(raw[:-1])
    with pytest.raises(TruncatedFile):
        decode_volume(raw + b"\0\0\0\0")
    with pytest.raises(TruncatedFile):
        decode_volume(raw[:20])


def test_rejects_bad_dims():
    raw = bytearray(encode_volume(Volume(np.zeros((1, 1, 1, 1)))))
    raw[8:24] = struct.pack("<4I", 0, 1, 1, 1)
    with pytest.raises(DimOverflow):
        decode_volume(bytes(raw))
    raw[8:24] = struct.pack("<4I", 2**32 - 1, 2**32 - 1, 2**32 - 1, 2**32 - 1)
    with pytest.raises(DimOverflow):
        decode_volume(bytes(raw))


def test_pgm_constant_image_is_black(tmp_path):
    si = SuperImage(np.full((1, 4, 6), 3.5), 2, 3, GridLayout(2, 2))
    export_pgm(si, 0, tmp_path / "c.pgm")
    assert np.all(read_pgm(tmp_path / "c.pgm") == 0)


def test_pgm_scaling(tmp_path):
    # samples are float32; scale exactly what is stored
    vals = np.array([[0.0, 0.25, 0.5, 1.0], [0.1, 0.9, 0.002, 0.998]], dtype=np.float32).astype(np.float64)
    si = SuperImage(vals[None], 2, 4, GridLayout(1, 1))
    export_pgm(si, 0, tmp_path / "s.pgm")
    np.testing.assert_array_equal(read_pgm(tmp_path / "s.pgm"), np.rint(255 * vals).astype(np.uint8))


def test_pgm_header_width_first(tmp_path):
    v = Volume(np.random.default_rng(0).random((2, 48, 80, 80)))
    si = to_super_image(v, GridLayout(6, 8))
    export_pgm(si, 1, tmp_path / "si.pgm")
    raw = (tmp_path / "si.pgm").read_bytes()
    assert raw.split()[:4] == [b"P5", b"640", b"480", b"255"]
    assert read_pgm(tmp_path / "si.pgm").shape == (480, 640)
    with pytest.raises(BadChannel):
        export_pgm(si, 2, tmp_path / "bad.pgm")


def _write_pair(tmp_path, name):
    v = Volume(np.zeros((1, 2, 2, 2)))
    write_volume(v, tmp_path / f"{name}_img.svol")
    write_volume(v, tmp_path / f"{name}_mask.svol")
    return {"id": name, "image_path": f"{name}_img.svol", "mask_path": f"{name}_mask.svol"}


def test_manifest_roundtrip(tmp_path):
    recs = [_write_pair(tmp_path, "a"), _write_pair(tmp_path, "b")]
    write_manifest(recs, tmp_path / "manifest.json")
    doc = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert doc == recs
    loaded = load_manifest(tmp_path / "manifest.json")
    assert [r.id for r in loaded] == ["a", "b"]
    assert loaded[0].image_path == (tmp_path / "a_img.svol").resolve()


def test_manifest_rejects_duplicates_missing_and_extra_keys(tmp_path):
    rec = _write_pair(tmp_path, "a")
    (tmp_path / "dup.json").write_text(json.dumps([rec, rec]))
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "dup.json")
    (tmp_path / "missing.json").write_text(json.dumps([{**rec, "mask_path": "nope.svol"}]))
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "missing.json")
    (tmp_path / "extra.json").write_text(json.dumps([{**rec, "label": 1}]))
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "extra.json")
    with pytest.raises(ManifestError):
        write_manifest([rec, rec], tmp_path / "out.json")
