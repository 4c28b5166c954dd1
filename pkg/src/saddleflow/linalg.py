"""Dense vector/matrix helpers and a reproducible random number generator.

Vectors and matrices are plain ``numpy`` arrays (float64, row-major). The
random stream is a PCG32 generator so that problem instances are
bit-reproducible from a seed independently of numpy's RNG implementation.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = 0xFFFF_FFFF_FFFF_FFFF
_MASK32 = 0xFFFF_FFFF
_PCG_MULT = 6364136223846793005


class Pcg32:
    """PCG-XSH-RR generator with 64-bit state and 32-bit output.

    Follows the reference ``pcg32_srandom_r`` seeding, so the first outputs
    for a given ``(seed, stream)`` match the published C implementation.

    Args:
        seed: initial state, an unsigned 64-bit integer.
        stream: sequence selector, an unsigned 63-bit integer.
    """

    def __init__(self, seed: int, stream: int = 54):
        if not 0 <= seed <= _MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        if not 0 <= stream < 2**63:
            raise ValueError(f"stream must be in [0, 2**63), got {stream}")
        self.seed = seed
        self.stream = stream
        self.state = 0
        self.inc = ((stream << 1) | 1) & _MASK64
        self.next_u32()
        self.state = (self.state + seed) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * _PCG_MULT + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        hi = self.next_u32() >> 5
        lo = self.next_u32() >> 6
        return (hi * 67108864.0 + lo) / 9007199254740992.0

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()


def normal_sample(rng: Pcg32) -> float:
    """One standard-normal variate by Box-Muller (cosine branch only)."""
    u1 = 1.0 - rng.uniform()  # (0, 1]: log is finite
    u2 = rng.uniform()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def normal_array(rng: Pcg32, shape) -> np.ndarray:
    """Array of standard normals filled in row-major order."""
    size = int(np.prod(shape))
    return np.array([normal_sample(rng) for _ in range(size)], dtype=float).reshape(shape)


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def _as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def matvec(A, v) -> np.ndarray:
    """Return ``A @ v`` after checking that ``A.cols == len(v)``."""
    A, v = _as_matrix(A), _as_vector(v)
    if A.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector of length {v.shape[0]}")
    return A @ v


def rmatvec(A, v) -> np.ndarray:
    """Return ``A.T @ v`` (the adjoint action) after a dimension check."""
    A, v = _as_matrix(A), _as_vector(v)
    if A.shape[0] != v.shape[0]:
        raise ValueError(f"dimension mismatch: transpose of {A.shape} times vector of length {v.shape[0]}")
    return A.T @ v


def qr_orthonormal(rng: Pcg32, rows: int, cols: int, *, rank_tol: float = 1e-10) -> np.ndarray:
    """Matrix with orthonormal columns from the QR factorisation of a Gaussian matrix.

    The signs are normalised so that ``R`` has a nonnegative diagonal, which
    makes ``Q`` a deterministic function of the drawn Gaussian entries. A
    numerically rank-deficient draw is retried once.
    """
    if not rows >= cols >= 1:
        raise ValueError(f"need rows >= cols >= 1, got rows={rows}, cols={cols}")
    for _ in range(2):
        G = normal_array(rng, (rows, cols))
        Q, R = np.linalg.qr(G, mode="reduced")
        d = np.abs(np.diag(R))
        if d.min() > rank_tol * max(d.max(), 1.0):
            signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
            return Q * signs
    raise np.linalg.LinAlgError("Gaussian draw rank deficient twice in qr_orthonormal")
