"""Dense complex linear algebra helpers and reproducible random streams.

Everything downstream (propagation matrices, channel sampling, gradient
checks) runs in double precision on plain numpy arrays; the helpers here
add the validation and determinism guarantees the rest of the package
relies on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericalError(ValueError):
    """Input violates a numerical precondition (non-finite, indefinite, ...)."""


def cvector(data) -> np.ndarray:
    """Validate and return a finite 1-D complex128 vector."""
    v = np.asarray(data, dtype=np.complex128)
    if v.ndim != 1:
        raise DimensionError(f"expected 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v.view(np.float64))):
        raise NumericalError("vector contains non-finite entries")
    return v


def cmatrix(data) -> np.ndarray:
    """Validate and return a finite 2-D complex128 matrix."""
    m = np.asarray(data, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionError(f"expected 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m.view(np.float64))):
        raise NumericalError("matrix contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Dense product A @ B with explicit dimension checking."""
    a = cmatrix(a)
    b = cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


@dataclass(frozen=True)
class EigDecomp:
    """Hermitian eigendecomposition, eigenvalues sorted descending."""

    values: np.ndarray   # real, descending
    vectors: np.ndarray  # columns are orthonormal eigenvectors, same order

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def hermitian_eig(a) -> EigDecomp:
    """Eigendecomposition of a Hermitian matrix.

    Rejects inputs whose anti-Hermitian part exceeds 1e-8 relative
    Frobenius norm instead of silently symmetrizing them.
    """
    a = cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix is not square: {a.shape}")
    norm = np.linalg.norm(a)
    if norm > 0 and np.linalg.norm(a - a.conj().T) / norm >= 1e-8:
        raise NumericalError("matrix is not Hermitian")
    w, v = np.linalg.eigh(a)
    order = np.argsort(w)[::-1]
    return EigDecomp(values=w[order].copy(), vectors=v[:, order].copy())


def psd_sqrt(a) -> np.ndarray:
    """Hermitian square root S of a PSD matrix, S @ S^H == A.

    Slightly negative eigenvalues (round-off from correlation builds) are
    clipped to zero; anything below -1e-8 * max eigenvalue is treated as a
    genuinely indefinite input and rejected.
    """
    dec = hermitian_eig(a)
    w = dec.values
    top = max(w[0], 0.0)
    if w[-1] < -1e-8 * max(top, 1e-300):
        raise NumericalError(
            f"matrix is significantly indefinite (min eig {w[-1]:.3e}, max {top:.3e})"
        )
    s = np.sqrt(np.clip(w, 0.0, None))
    return (dec.vectors * s) @ dec.vectors.conj().T


def _stream_token(part) -> int:
    """Map a stream-id component (int or str) to a stable uint32."""
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    raise TypeError(f"stream id components must be int or str, got {type(part)!r}")


@dataclass(frozen=True)
class SeededRng:
    """Counter-based splittable random source.

    A (seed, stream) pair fully determines the sample sequence; sub-streams
    are derived by appending identifiers, so e.g. every (experiment, trial)
    pair draws from its own independent, reproducible stream.
    """

    seed: int
    stream: tuple = field(default_factory=tuple)

    def split(self, *parts) -> "SeededRng":
        return SeededRng(self.seed, self.stream + tuple(parts))

    @property
    def generator(self) -> np.random.Generator:
        key = tuple(_stream_token(p) for p in self.stream)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))


def sample_cn(rng: SeededRng, n: int) -> np.ndarray:
    """n i.i.d. CN(0, 1) samples (real and imaginary parts ~ N(0, 1/2))."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    g = rng.generator
    z = g.standard_normal(n) + 1j * g.standard_normal(n)
    return z / np.sqrt(2.0)
