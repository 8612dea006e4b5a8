import gzip
import struct

import numpy as np
import pytest

from szlab.data import (DataFormatError, Dataset, load_cifar10, load_cifar10_bin, load_mnist, load_mnist_idx,
                        synthetic_blobs, write_cifar10_bin, write_mnist_idx)


def _idx_files(tmp_path, n_img=1, n_lab=1, label=7, magic=0x803):
    img = tmp_path / "img"
    lab = tmp_path / "lab"
    img.write_bytes(struct.pack(">4I", magic, n_img, 28, 28) + bytes(28 * 28 * n_img))
    lab.write_bytes(struct.pack(">2I", 0x801, n_lab) + bytes([label] * n_lab))
    return img, lab


def test_mnist_single_zero_image(tmp_path):
    ds = load_mnist_idx(*_idx_files(tmp_path))
    assert ds.images.shape == (1, 28, 28, 1) and np.all(ds.images == 0)
    assert ds.labels.tolist() == [7]


def test_mnist_count_mismatch(tmp_path):
    with pytest.raises(DataFormatError):
        load_mnist_idx(*_idx_files(tmp_path, n_img=2, n_lab=1))


def test_mnist_bad_magic(tmp_path):
    with pytest.raises(DataFormatError, match="magic"):
        load_mnist_idx(*_idx_files(tmp_path, magic=0x801))


def test_mnist_truncated_and_huge_declared_count(tmp_path):
    img, lab = _idx_files(tmp_path)
    img.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(DataFormatError):
        load_mnist_idx(img, lab)
    # declared count far beyond file length is rejected before allocating
    img.write_bytes(struct.pack(">4I", 0x803, 2**31, 28, 28) + bytes(100))
    with pytest.raises(DataFormatError):
        load_mnist_idx(img, lab)
    img.write_bytes(b"\x00\x00")
    with pytest.raises(DataFormatError):
        load_mnist_idx(img, lab)


def test_mnist_gzip_and_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (5, 28, 28, 1)).astype(np.float32) / 255.0
    ds = Dataset(px, rng.integers(0, 10, 5))
    write_mnist_idx(ds, tmp_path / "train-images-idx3-ubyte", tmp_path / "train-labels-idx1-ubyte")
    back = load_mnist(tmp_path, "train")
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.labels, ds.labels)
    raw = (tmp_path / "train-images-idx3-ubyte").read_bytes()
    (tmp_path / "train-images-idx3-ubyte").unlink()
    (tmp_path / "train-images-idx3-ubyte.gz").write_bytes(gzip.compress(raw))
    np.testing.assert_array_equal(load_mnist(tmp_path, "train").images, ds.images)


def test_cifar_single_record(tmp_path):
    p = tmp_path / "one.bin"
    p.write_bytes(bytes([3]) + bytes([255]) * 3072)
    ds = load_cifar10_bin(p)
    assert ds.images.shape == (1, 32, 32, 3) and np.all(ds.images == 1.0)
    assert ds.labels.tolist() == [3]


def test_cifar_channel_planes(tmp_path):
    rec = np.zeros(3073, np.uint8)
    rec[0] = 1
    rec[1:1025] = 10       # R plane
    rec[1025:2049] = 20    # G plane
    rec[2049 + 32 + 2] = 30  # B plane, row 1, column 2
    p = tmp_path / "r.bin"
    p.write_bytes(rec.tobytes())
    img = load_cifar10_bin(p).images[0] * 255
    assert np.allclose(img[..., 0], 10) and np.allclose(img[..., 1], 20)
    assert img[1, 2, 2] == pytest.approx(30) and np.count_nonzero(img[..., 2]) == 1


def test_cifar_errors(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(bytes(3072))
    with pytest.raises(DataFormatError):
        load_cifar10_bin(p)
    p.write_bytes(bytes([10]) + bytes(3072))
    with pytest.raises(DataFormatError, match="label"):
        load_cifar10_bin(p)


def test_cifar_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    ds = Dataset(rng.integers(0, 256, (4, 32, 32, 3)).astype(np.float32) / 255.0, rng.integers(0, 10, 4))
    d = tmp_path / "cifar-10-batches-bin"
    d.mkdir()
    for i in range(1, 6):
        write_cifar10_bin(ds, d / f"data_batch_{i}.bin")
    write_cifar10_bin(ds, d / "test_batch.bin")
    train = load_cifar10(tmp_path, "train")
    assert len(train) == 20
    np.testing.assert_array_equal(train.images[:4], ds.images)
    np.testing.assert_array_equal(load_cifar10(tmp_path, "test").labels, ds.labels)


def test_blobs():
    a = synthetic_blobs(101, 3, 5, seed=4)
    b = synthetic_blobs(101, 3, 5, seed=4)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    counts = np.bincount(a.labels)
    assert counts.max() - counts.min() <= 1
    assert a.images.min() >= 0 and a.images.max() <= 1
    with pytest.raises(ValueError):
        synthetic_blobs(10, 1, 5, 0)


def test_blobs_linearly_separable():
    d = synthetic_blobs(2000, 2, 30, seed=0, separation=10)
    x = d.images.reshape(len(d), -1).astype(np.float64)
    m0, m1 = x[d.labels == 0].mean(0), x[d.labels == 1].mean(0)
    proj = (x - (m0 + m1) / 2) @ (m1 - m0)
    assert np.mean((proj > 0) == (d.labels == 1)) > 0.999
