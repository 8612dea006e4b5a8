"""MNIST IDX and CIFAR-10 binary readers/writers plus a synthetic blob set."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (n, h, w, c), values in [0, 1]
    labels: np.ndarray  # (n,) int64
    name: str = ""
    split: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self) -> tuple:
        return self.images.shape[1:]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def head(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.name, self.split)


def _read(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as g:
                return g.read()
        return f.read()


def _idx(path, magic: int, ndim: int) -> np.ndarray:
    raw = _read(path)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX header")
    got_magic, *dims = struct.unpack(f">{1 + ndim}I", raw[:header])
    if got_magic != magic:
        raise DataFormatError(f"{path}: bad magic 0x{got_magic:08x}, expected 0x{magic:08x}")
    expected = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header != expected:
        raise DataFormatError(f"{path}: header declares {expected} bytes of data, file has {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path, name: str = "mnist", split: str = "") -> Dataset:
    """Read an IDX image/label file pair (optionally gzip-compressed)."""
    images = _idx(images_path, IDX_IMAGE_MAGIC, 3)
    labels = _idx(labels_path, IDX_LABEL_MAGIC, 1)
    if len(images) != len(labels):
        raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    if len(labels) and labels.max() > 9:
        raise DataFormatError(f"{labels_path}: label {labels.max()} out of range 0..9")
    x = (images.astype(np.float32) / 255.0)[..., None]
    return Dataset(x, labels.astype(np.int64), name, split)


def load_cifar10_bin(paths, name: str = "cifar10", split: str = "") -> Dataset:
    """Read one or more CIFAR-10 binary batch files (3073-byte records)."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    xs, ys = [], []
    for path in paths:
        raw = _read(path)
        if len(raw) % CIFAR_RECORD:
            raise DataFormatError(f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels = rec[:, 0]
        if len(labels) and labels.max() > 9:
            raise DataFormatError(f"{path}: label {labels.max()} out of range 0..9")
        planes = rec[:, 1:].reshape(-1, 3, 32, 32)
        xs.append(planes.transpose(0, 2, 3, 1))
        ys.append(labels)
    images = np.concatenate(xs) if xs else np.zeros((0, 32, 32, 3), np.uint8)
    labels = np.concatenate(ys) if ys else np.zeros(0, np.uint8)
    return Dataset(images.astype(np.float32) / 255.0, labels.astype(np.int64), name, split)


def _to_bytes(images: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_mnist_idx(ds: Dataset, images_path, labels_path):
    px = _to_bytes(ds.images.reshape(len(ds), ds.shape[0], ds.shape[1]))
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGE_MAGIC, *px.shape))
        f.write(px.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABEL_MAGIC, len(ds)))
        f.write(ds.labels.astype(np.uint8).tobytes())


def write_cifar10_bin(ds: Dataset, path):
    if ds.shape != (32, 32, 3):
        raise ValueError(f"CIFAR-10 records are 32x32x3, dataset is {ds.shape}")
    planes = _to_bytes(ds.images).transpose(0, 3, 1, 2).reshape(len(ds), -1)
    rec = np.concatenate([ds.labels.astype(np.uint8)[:, None], planes], axis=1)
    Path(path).write_bytes(rec.tobytes())


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(data_dir: Path, stem: str) -> Path:
    for sub in ("", "mnist", "MNIST", "MNIST/raw"):
        for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
            p = data_dir / sub / name
            if p.is_file():
                return p
    raise FileNotFoundError(f"{stem} not found under {data_dir}")


def load_mnist(data_dir, split: str = "train") -> Dataset:
    data_dir = Path(data_dir)
    img, lab = MNIST_FILES[split]
    return load_mnist_idx(_find(data_dir, img), _find(data_dir, lab), "mnist", split)


def load_cifar10(data_dir, split: str = "train") -> Dataset:
    data_dir = Path(data_dir)
    for sub in ("cifar-10-batches-bin", "cifar10", ""):
        base = data_dir / sub
        names = [f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train" else ["test_batch.bin"]
        paths = [base / n for n in names]
        if all(p.is_file() for p in paths):
            return load_cifar10_bin(paths, "cifar10", split)
    raise FileNotFoundError(f"CIFAR-10 {split} batches not found under {data_dir}")


def synthetic_blobs(n: int, classes: int, dim: int, seed: int, separation: float = 10.0,
                    shape: tuple | None = None) -> Dataset:
    """Gaussian class clusters in [0, 1]^dim.

    Class means sit ``separation`` noise standard deviations apart (minimum
    over pairs), so classes are linearly separable for separation >= 4.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if shape is None:
        shape = (dim, 1, 1)
    if int(np.prod(shape)) != dim:
        raise ValueError(f"shape {shape} does not hold {dim} values")
    rng = np.random.default_rng(seed)
    while True:
        signs = rng.choice([-1.0, 1.0], size=(classes, dim))
        if len({s.tobytes() for s in signs}) == classes:
            break
    unit = signs / np.sqrt(dim)
    dmin = min(np.linalg.norm(unit[a] - unit[b]) for a in range(classes) for b in range(a + 1, classes))
    # keep means + 4 sigma inside [0, 1]
    sigma = 0.5 / (separation / (dmin * np.sqrt(dim)) + 4.0)
    means = 0.5 + unit * (separation * sigma / dmin)
    labels = rng.permutation(np.arange(n) % classes)
    x = means[labels] + sigma * rng.standard_normal((n, dim))
    x = np.clip(x, 0.0, 1.0).astype(np.float32).reshape((n, *shape))
    return Dataset(x, labels.astype(np.int64), "blobs", "")
