"""Shared value types, seeded randomness and small vector helpers.

Images are plain ``(side, side)`` float64 arrays and sinogram blocks are
``(n_angles, n_dtc)`` float64 arrays.  The helpers :func:`check_image` and
:func:`check_sinogram` enforce the shape/finiteness invariants at module
boundaries; everything in between is ordinary numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stream identifiers mixed into every seed sequence.  Angle draws and noise
# draws never share a stream, so adding realizations or changing one kind of
# draw leaves the other untouched.
ANGLE_STREAM = 1
NOISE_STREAM = 2
PROBE_STREAM = 3


class DimensionError(ValueError):
    """Array shapes or lengths are inconsistent."""


class ConvergenceError(RuntimeError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(RuntimeError):
    """An iterative method blew up."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CapabilityError(RuntimeError):
    """The request is outside what the routine supports (size, p, ...)."""


@dataclass(frozen=True)
class RngSeed:
    """A reproducible random stream: ``(seed, stream_id)`` plus optional keys.

    The extra ``keys`` (e.g. ``(N, realization)``) select an independent
    child stream, so task results never depend on scheduling order.
    """

    seed: int
    stream_id: int = 0
    keys: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def child(self, *keys) -> "RngSeed":
        return RngSeed(self.seed, self.stream_id, self.keys + tuple(int(k) for k in keys))

    def with_stream(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.seed, int(stream_id), self.keys)

    def generator(self) -> np.random.Generator:
        entropy = [int(self.seed), int(self.stream_id), *map(int, self.keys)]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class AngleSet:
    """Sorted, distinct indices into a fine angle grid of size ``n_theta``."""

    indices: tuple
    n_theta: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1 or idx.size > self.n_theta:
            raise ValueError(f"need 1 <= len(indices) <= {self.n_theta}, got {idx.size}")
        if idx.min() < 0 or idx.max() >= self.n_theta:
            raise ValueError(f"angle indices must lie in [0, {self.n_theta})")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("angle indices must be strictly increasing")
        object.__setattr__(self, "indices", tuple(int(i) for i in idx))

    def __len__(self):
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    @classmethod
    def full(cls, n_theta: int) -> "AngleSet":
        return cls(tuple(range(n_theta)), n_theta)


def check_image(f, side=None) -> np.ndarray:
    """Return ``f`` as a finite ``(side, side)`` float64 array or raise."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        n = int(round(np.sqrt(f.size)))
        if n * n != f.size:
            raise DimensionError(f"flat image of length {f.size} is not a square")
        f = f.reshape(n, n)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise DimensionError(f"image must be square, got shape {f.shape}")
    if side is not None and f.shape[0] != side:
        raise DimensionError(f"image side {f.shape[0]} != expected {side}")
    if not np.all(np.isfinite(f)):
        raise ValueError("image contains non-finite values")
    return f


def check_sinogram(g, n_angles=None, n_dtc=None) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise DimensionError(f"sinogram block must be 2-D, got shape {g.shape}")
    if (n_angles is not None and g.shape[0] != n_angles) or (
        n_dtc is not None and g.shape[1] != n_dtc
    ):
        raise DimensionError(f"sinogram shape {g.shape} != ({n_angles}, {n_dtc})")
    if not np.all(np.isfinite(g)):
        raise ValueError("sinogram contains non-finite values")
    return g


def dot(a, b) -> float:
    """Euclidean pairing of two equally sized arrays (any shape)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size != b.size:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.dot(a.ravel(), b.ravel()))


def weighted_residual_norm_sq(r) -> float:
    """Squared norm in the empirical sinogram space: ``(1/N) sum_i ||r_i||^2``.

    ``r`` has one row per sampled angle.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
        raise DimensionError(f"need a non-empty (n_angles, n_dtc) block, got {r.shape}")
    return float(np.sum(r * r) / r.shape[0])


def sample_angles(n: int, n_theta: int, rng: RngSeed) -> AngleSet:
    """Draw ``n`` distinct angle indices out of ``n_theta`` without replacement."""
    if not 1 <= n <= n_theta:
        raise ValueError(f"need 1 <= N <= N_theta, got N={n}, N_theta={n_theta}")
    idx = rng.generator().choice(n_theta, size=n, replace=False)
    return AngleSet(tuple(np.sort(idx)), n_theta)


def gaussian_noise(length, rng: RngSeed) -> np.ndarray:
    """i.i.d. standard normal draws (numpy's ziggurat sampler on PCG64)."""
    if isinstance(length, tuple):
        size = length
        total = int(np.prod(length))
    else:
        size = int(length)
        total = size
    if total < 1:
        raise ValueError("noise length must be positive")
    return rng.generator().standard_normal(size)
