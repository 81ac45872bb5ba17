"""Dense float64 matrix helpers and a seedable random source.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64, laid out
batch-first (rows are samples, columns are features).
"""

import numpy as np

DTYPE = np.float64
RNG_ALGORITHM = "numpy.PCG64/SeedSequence"


class ShapeError(ValueError):
    pass


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=DTYPE)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(a, b, op):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if op not in _OPS:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_OPS)}")
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op} needs equal shapes, got {a.shape} and {b.shape}")
    return _OPS[op](a, b)


def scale(a, s):
    return as_matrix(a) * DTYPE(s)


class Rng:
    """Seeded random stream.

    Backed by numpy's PCG64 bit generator, whose output for a given seed is
    fixed across platforms. ``stream`` selects an independent sub-stream of the
    same seed so that, e.g., weight init and batch shuffling never share draws.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, rows, cols, lo, hi):
        if not lo < hi:
            raise ValueError(f"uniform bounds need lo < hi, got lo={lo}, hi={hi}")
        return self._gen.uniform(lo, hi, size=(rows, cols))

    def normal(self, rows, cols, mean=0.0, std=1.0):
        return self._gen.normal(mean, std, size=(rows, cols))

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"


def draw_uniform(rng, rows, cols, lo, hi):
    return rng.uniform(rows, cols, lo, hi)
