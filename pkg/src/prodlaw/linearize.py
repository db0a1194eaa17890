"""Block-cyclic linearization of matrix products and its hermitization.

The nm-by-nm matrix ``W`` places the factors ``X1 .. X(m-1)`` on the
block superdiagonal and ``Xm`` in the lower-left corner, each scaled by
``1/sqrt(n)``.  Its m-th power has the eigenvalues of the scaled product
``n**(-m/2) X1 ... Xm``, each with multiplicity m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProductModel",
    "BlockLinearization",
    "ShiftedMatrix",
    "Hermitization",
    "build_linearization",
    "product_matrix",
    "shift",
    "hermitize",
    "sample_unit_disk",
]


@dataclass(frozen=True)
class ProductModel:
    """A tuple of m square factors of equal dimension n."""

    factors: tuple[np.ndarray, ...]

    def __init__(self, factors):
        factors = tuple(np.asarray(f, dtype=np.float64) for f in factors)
        if not factors:
            raise ValueError("at least one factor required")
        n = factors[0].shape[0]
        for f in factors:
            if f.ndim != 2 or f.shape != (n, n):
                raise ValueError(
                    f"all factors must be {n}x{n} square matrices, got {f.shape}"
                )
        object.__setattr__(self, "factors", factors)

    @property
    def n(self) -> int:
        return self.factors[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.factors)


@dataclass(frozen=True)
class BlockLinearization:
    W: np.ndarray
    n: int
    m: int

    @property
    def dim(self) -> int:
        return self.n * self.m


@dataclass(frozen=True)
class ShiftedMatrix:
    """``W - r*zeta*I - z*I`` with the shift materialized in ``matrix``."""

    base: BlockLinearization
    z: complex
    r: float
    zeta: complex
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.base.dim


@dataclass(frozen=True)
class Hermitization:
    """``[[0, A], [A*, 0]]`` for a shifted matrix A; exactly Hermitian."""

    source: ShiftedMatrix
    V: np.ndarray

    @property
    def dim(self) -> int:
        return self.V.shape[0]


def build_linearization(model: ProductModel) -> BlockLinearization:
    """Assemble the block-cyclic linearization of the product."""
    n, m = model.n, model.m
    scale = 1.0 / math.sqrt(n)
    W = np.zeros((n * m, n * m), dtype=np.float64)
    if m == 1:
        W[:, :] = model.factors[0] * scale
    else:
        for q in range(m - 1):
            W[q * n : (q + 1) * n, (q + 1) * n : (q + 2) * n] = (
                model.factors[q] * scale
            )
        W[(m - 1) * n :, :n] = model.factors[m - 1] * scale
    return BlockLinearization(W=W, n=n, m=m)


def product_matrix(model: ProductModel) -> np.ndarray:
    """The scaled product ``n**(-m/2) X1 X2 ... Xm``."""
    prod = model.factors[0].copy()
    for f in model.factors[1:]:
        prod = prod @ f
    return prod * float(model.n) ** (-model.m / 2.0)


def shift(
    lin: BlockLinearization,
    z: complex,
    r: float = 0.0,
    zeta: complex = 0j,
) -> ShiftedMatrix:
    """Shift the linearization by ``(z + r*zeta)`` on the diagonal."""
    z = complex(z)
    zeta = complex(zeta)
    if r < 0:
        raise ValueError("regularizer r must be non-negative")
    if abs(zeta) > 1.0 + 1e-12:
        raise ValueError(f"|zeta| = {abs(zeta):.6g} exceeds 1")
    total = z + r * zeta
    if total.imag == 0.0:
        matrix = lin.W.copy()
        idx = np.arange(lin.dim)
        matrix[idx, idx] -= total.real
    else:
        matrix = lin.W.astype(np.complex128)
        idx = np.arange(lin.dim)
        matrix[idx, idx] -= total
    return ShiftedMatrix(base=lin, z=z, r=float(r), zeta=zeta, matrix=matrix)


def hermitize(shifted: ShiftedMatrix) -> Hermitization:
    """Embed A into ``[[0, A], [A*, 0]]``; eigenvalues are +-singular values of A."""
    A = shifted.matrix
    k = A.shape[0]
    V = np.zeros((2 * k, 2 * k), dtype=A.dtype)
    V[:k, k:] = A
    V[k:, :k] = A.conj().T
    return Hermitization(source=shifted, V=V)


def sample_unit_disk(rng: np.random.Generator, size=None):
    """Uniform draws from the closed unit disk via radial-sqrt sampling."""
    rad = np.sqrt(rng.random(size))
    theta = 2.0 * np.pi * rng.random(size)
    return rad * np.exp(1j * theta)
