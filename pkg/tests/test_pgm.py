import numpy as np
import pytest

from tvwass.pgm import (PGMError, from_unit_interval, read_pgm,
                        to_unit_interval, write_pgm)


def test_p5_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(30)
    img = rng.integers(0, 256, size=(17, 23)).astype(np.uint16)
    path = tmp_path / "a.pgm"
    write_pgm(path, img, maxval=255, binary=True)
    back, maxval = read_pgm(path)
    assert maxval == 255
    np.testing.assert_array_equal(back, img)
    # writing the re-read image reproduces the same bytes
    path2 = tmp_path / "b.pgm"
    write_pgm(path2, back, maxval=255, binary=True)
    assert path.read_bytes() == path2.read_bytes()


def test_p2_and_p5_agree(tmp_path):
    rng = np.random.default_rng(31)
    img = rng.integers(0, 200, size=(9, 9)).astype(np.uint16)
    pa = tmp_path / "ascii.pgm"
    pb = tmp_path / "bin.pgm"
    write_pgm(pa, img, binary=False)
    write_pgm(pb, img, binary=True)
    a, _ = read_pgm(pa)
    b, _ = read_pgm(pb)
    np.testing.assert_array_equal(a, b)


def test_16_bit_round_trip(tmp_path):
    rng = np.random.default_rng(32)
    img = rng.integers(0, 40000, size=(5, 7)).astype(np.uint16)
    path = tmp_path / "deep.pgm"
    write_pgm(path, img, maxval=65535)
    back, maxval = read_pgm(path)
    assert maxval == 65535
    np.testing.assert_array_equal(back, img)


def test_comments_and_whitespace(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P2 # magic\n# a comment line\n 2 2\n255\n0 10\n20 30\n")
    img, maxval = read_pgm(path)
    np.testing.assert_array_equal(img, [[0, 10], [20, 30]])


def test_truncated_raster_reports_offset(tmp_path):
    path = tmp_path / "t.pgm"
    header = b"P5\n4 4\n255\n"
    path.write_bytes(header + b"\x01\x02\x03")  # 3 of 16 payload bytes
    with pytest.raises(PGMError) as err:
        read_pgm(path)
    assert err.value.offset == len(header) + 3
    assert "offset" in str(err.value)


def test_truncated_ascii_reports_offset(tmp_path):
    path = tmp_path / "t2.pgm"
    path.write_bytes(b"P2\n2 2\n255\n1 2 3\n")
    with pytest.raises(PGMError) as err:
        read_pgm(path)
    assert err.value.offset is not None


def test_bad_magic_and_header(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P6\n2 2\n255\n")
    with pytest.raises(PGMError):
        read_pgm(path)
    path.write_bytes(b"P2\n-2 2\n255\n")
    with pytest.raises(PGMError):
        read_pgm(path)
    path.write_bytes(b"P2\n2 2\n70000\n")
    with pytest.raises(PGMError):
        read_pgm(path)


def test_write_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.array([[300]]), maxval=255)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))


def test_unit_interval_round_trip():
    img = np.array([[0, 128, 255]], dtype=np.uint16)
    u = to_unit_interval(img, 255)
    assert u.min() == 0.0 and u.max() == 1.0
    np.testing.assert_array_equal(from_unit_interval(u), img)
