import gzip

import numpy as np
import pytest

from desmat.datasets import (DatasetParseError, load_dataset, load_idx_images, load_idx_labels,
                             load_pgm, read_idx, save_pgm, write_idx)

from conftest import MNIST_IMAGES, MNIST_LABELS


def test_single_pixel_pgm(tmp_path):
    p = tmp_path / "one.pgm"
    p.write_bytes(b"P5\n1 1\n255\n\xff")
    img = load_pgm(p)
    assert img.shape == (1, 1) and img[0, 0] == 1.0
    assert load_dataset(p, "pgm").shape == (1, 1, 1)


def test_pgm_comments_and_sixteen_bit(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n# another\n65535\n\x00\x00\xff\xff")
    assert load_pgm(p).tolist() == [[0.0, 1.0]]


def test_pgm_round_trip(tmp_path, rng):
    img = np.round(rng.random((5, 7)) * 255) / 255
    save_pgm(tmp_path / "r.pgm", img)
    assert np.allclose(load_pgm(tmp_path / "r.pgm"), img, atol=1e-12)


def test_pgm_errors(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n1 1\n255\n1")
    with pytest.raises(DatasetParseError) as exc:
        load_pgm(p)
    assert exc.value.offset == 0
    p.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(DatasetParseError) as exc:
        load_pgm(p)
    assert exc.value.offset == 13 and "byte 13" in str(exc.value)


def test_idx_round_trip(tmp_path, rng):
    arr = rng.integers(0, 256, size=(3, 4, 5)).astype(np.uint8)
    for compress in (False, True):
        p = tmp_path / f"i{compress}.idx"
        write_idx(p, arr, compress=compress)
        assert np.array_equal(read_idx(p), arr)
    labels = np.array([3, 1, 4], dtype=np.uint8)
    write_idx(tmp_path / "l.idx", labels)
    assert load_idx_labels(tmp_path / "l.idx").tolist() == [3, 1, 4]
    with pytest.raises(DatasetParseError):
        load_idx_images(tmp_path / "l.idx")


def test_idx_truncated_and_bad_magic(tmp_path):
    arr = np.zeros((2, 3, 3), dtype=np.uint8)
    p = tmp_path / "t.idx"
    write_idx(p, arr)
    data = p.read_bytes()
    p.write_bytes(data[:-4])
    with pytest.raises(DatasetParseError) as exc:
        read_idx(p)
    assert exc.value.offset == len(data) - 4
    p.write_bytes(b"\x00\x00\x08\x05" + data[4:])
    with pytest.raises(DatasetParseError) as exc:
        read_idx(p)
    assert exc.value.offset == 0 and "magic" in str(exc.value)
    p.write_bytes(data[:10])
    with pytest.raises(DatasetParseError) as exc:
        read_idx(p)
    assert exc.value.offset == 10


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError) as exc:
        read_idx(tmp_path / "nope.idx")
    assert "nope.idx" in str(exc.value)
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "x", "png")


@pytest.mark.skipif(not MNIST_IMAGES.exists(), reason="vendored MNIST subset not present")
def test_vendored_mnist_subset():
    imgs = load_dataset(MNIST_IMAGES, "IDX")
    labels = load_idx_labels(MNIST_LABELS)
    assert imgs.shape[1:] == (28, 28) and imgs.shape[0] == labels.size
    assert imgs.min() >= 0.0 and imgs.max() <= 1.0
    assert (labels == 0).sum() >= 350
    with gzip.open(MNIST_IMAGES, "rb") as fh:
        assert fh.read(4) == b"\x00\x00\x08\x03"
