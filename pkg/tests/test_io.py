import struct

import numpy as np
import pytest

from stereosal.io import (
    quantize,
    read_disparity,
    read_flo,
    read_frame,
    read_map_image,
    read_pgm,
    read_raw,
    write_disparity_pgm,
    write_flo,
    write_frame,
    write_map_image,
    write_pgm,
    write_raw,
)


class TestRawContainer:
    def test_roundtrip_is_lossless_for_float32(self, tmp_path, rng):
        m = rng.random((7, 5)).astype(np.float32)
        write_raw(tmp_path / "m.f32", m)
        np.testing.assert_array_equal(read_raw(tmp_path / "m.f32"), m)

    def test_header_layout(self, tmp_path):
        write_raw(tmp_path / "m.f32", np.zeros((3, 4)))
        data = (tmp_path / "m.f32").read_bytes()
        assert struct.unpack("<II", data[:8]) == (4, 3)
        assert len(data) == 8 + 4 * 12

    def test_truncated_rejected(self, tmp_path):
        write_raw(tmp_path / "m.f32", np.zeros((3, 4)))
        p = tmp_path / "m.f32"
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(ValueError, match="expected 4x3"):
            read_raw(p)


class TestPgm:
    @pytest.mark.parametrize("maxval", [255, 65535])
    def test_roundtrip(self, tmp_path, rng, maxval):
        img = rng.integers(0, maxval + 1, (6, 9))
        write_pgm(tmp_path / "a.pgm", img, maxval)
        np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)

    def test_sixteen_bit_is_big_endian(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.array([[258]]), 65535)
        assert (tmp_path / "a.pgm").read_bytes()[-2:] == b"\x01\x02"

    def test_comment_in_header(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x05\x07")
        np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[5, 7]])


class TestMapImages:
    @pytest.mark.parametrize("suffix,bits", [(".png", 8), (".png", 16), (".pgm", 8), (".pgm", 16)])
    def test_roundtrip_within_quantization(self, tmp_path, rng, suffix, bits):
        m = rng.random((5, 6))
        m[0, 0], m[0, 1] = 0.0, 1.0
        p = tmp_path / f"m{suffix}"
        write_map_image(p, m, bits)
        np.testing.assert_allclose(read_map_image(p), m, atol=0.5 / (2**bits - 1) + 1e-12)

    def test_unnormalized_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_map_image(tmp_path / "m.png", np.array([[0.0, 1.5]]))

    def test_quantize_endpoints(self):
        np.testing.assert_array_equal(quantize(np.array([[0.0, 1.0]]), 8), [[0, 255]])


class TestFramesAndDisparity:
    def test_frame_roundtrip(self, tmp_path, rng):
        f = rng.integers(0, 256, (4, 5, 3)).astype(float)
        write_frame(tmp_path / "f.png", f)
        np.testing.assert_array_equal(read_frame(tmp_path / "f.png"), f)

    def test_disparity_scale_and_offset(self, tmp_path):
        d = np.array([[-3.5, 0.0], [10.25, 20.0]])
        write_disparity_pgm(tmp_path / "d.pgm", d, scale=1000.0, offset=-32.0)
        np.testing.assert_allclose(read_disparity(tmp_path / "d.pgm", 1000.0, -32.0), d, atol=1e-9)

    def test_raw_disparity(self, tmp_path):
        d = np.array([[1.5, -2.0]], dtype=np.float32)
        write_raw(tmp_path / "d.f32", d)
        np.testing.assert_array_equal(read_disparity(tmp_path / "d.f32"), d)


class TestFlo:
    def test_roundtrip(self, tmp_path, rng):
        dx, dy = rng.normal(size=(2, 4, 6)).astype(np.float32)
        write_flo(tmp_path / "a.flo", dx, dy)
        rx, ry = read_flo(tmp_path / "a.flo")
        np.testing.assert_array_equal(rx, dx)
        np.testing.assert_array_equal(ry, dy)
        assert (tmp_path / "a.flo").read_bytes()[:4] == b"PIEH"

    def test_bad_magic(self, tmp_path):
        (tmp_path / "b.flo").write_bytes(b"XXXX" + struct.pack("<ii", 1, 1) + b"\0" * 8)
        with pytest.raises(ValueError, match="magic"):
            read_flo(tmp_path / "b.flo")
