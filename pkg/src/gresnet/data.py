"""MNIST IDX reading/writing and mini-batching."""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IDXError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (n, rows*cols) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64
    split: str = "train"
    image_shape: tuple = (28, 28)

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[0] != self.labels.shape[0]:
            raise IDXError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, n):
        return Dataset(self.images[:n], self.labels[:n], self.split, self.image_shape)


def _read_bytes(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(raw, magic, ndim, path):
    if len(raw) < 4:
        raise IDXError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise IDXError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IDXError(f"{path}: truncated payload, expected {size} bytes, found {len(raw) - header}")
    if len(raw) - header > size:
        raise IDXError(f"{path}: {len(raw) - header - size} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def read_idx_images(path):
    return _parse_idx(_read_bytes(path), IMAGES_MAGIC, 3, path)


def read_idx_labels(path):
    return _parse_idx(_read_bytes(path), LABELS_MAGIC, 1, path)


def load_idx(images_path, labels_path, split="train"):
    pixels = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise IDXError(
            f"count mismatch: {pixels.shape[0]} images in {images_path}, "
            f"{labels.shape[0]} labels in {labels_path}"
        )
    n, rows, cols = pixels.shape
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(images, labels.astype(np.int64), split, (rows, cols))


def images_to_idx_bytes(ds):
    rows, cols = ds.image_shape
    pixels = np.rint(ds.images * 255.0).astype(np.uint8)
    return struct.pack(">IIII", IMAGES_MAGIC, len(ds), rows, cols) + pixels.tobytes()


def labels_to_idx_bytes(ds):
    return struct.pack(">II", LABELS_MAGIC, len(ds)) + ds.labels.astype(np.uint8).tobytes()


def write_idx(ds, images_path, labels_path):
    with open(images_path, "wb") as f:
        f.write(images_to_idx_bytes(ds))
    with open(labels_path, "wb") as f:
        f.write(labels_to_idx_bytes(ds))


def _find(data_dir, name):
    for candidate in (name, name + ".gz", name.replace("-idx", ".idx")):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"MNIST file {name} (or {name}.gz) not found in {data_dir}")


def load_mnist(data_dir, split="train"):
    """Load one split from a directory holding the four canonical IDX files."""
    if split not in MNIST_FILES:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    img_name, lbl_name = MNIST_FILES[split]
    return load_idx(_find(data_dir, img_name), _find(data_dir, lbl_name), split)


def batches(ds, batch_size, rng=None, shuffle=True):
    """Yield ``(images, labels)`` covering every sample once; the last batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    n = len(ds)
    if n == 0:
        raise ValueError("cannot batch an empty dataset")
    if shuffle:
        if rng is None:
            raise ValueError("shuffling needs an Rng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield ds.images[idx], ds.labels[idx]
