"""Singular spectra, empirical Stieltjes transforms and resolvent diagnostics.

One Hermitian eigendecomposition per (trial, z) yields the full
symmetrized spectrum plus per-block eigenvector masses; every
w-dependent quantity (trace resolvent, partial traces) is then an
O(n*m) evaluation from the cached eigen-data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linearize import Hermitization, ShiftedMatrix, hermitize

__all__ = [
    "SingularSpectrum",
    "ComplexSpectrum",
    "singular_spectrum",
    "singular_values",
    "esd_cdf",
    "esd_cdf_left",
    "empirical_stieltjes",
    "partial_trace",
    "partial_traces",
    "product_eigenvalues",
    "extreme_value_monitor",
    "resolvent",
    "resolvent_row_check",
    "resolvent_identity_check",
    "descent_property_check",
    "write_spectra_csv",
]

# Full eigenvectors are retained only below this Hermitization dimension,
# where entrywise resolvent diagnostics are feasible by dense inversion.
DIAGNOSTIC_DIM = 128


class EigensolverError(RuntimeError):
    """Raised when the dense Hermitian eigensolver fails on a trial."""


@dataclass
class SingularSpectrum:
    """Spectral decomposition data of one hermitized shifted matrix.

    ``values`` holds the nm singular values in non-increasing order;
    ``eigenvalues`` the raw 2nm eigenvalues of the hermitization in
    ascending order; ``block_weights[a, k]`` the squared eigenvector
    mass of eigenpair k aggregated over block a (a = 0..2m-1).
    """

    z: complex
    r: float
    n: int
    m: int
    values: np.ndarray
    eigenvalues: np.ndarray
    block_weights: np.ndarray
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.n * self.m

    @classmethod
    def from_values(
        cls, values, z: complex = 0j, r: float = 0.0, n: int | None = None, m: int = 1
    ) -> "SingularSpectrum":
        """Synthetic spectrum from singular values alone.

        Eigenvalues are the exact symmetrization and block weights are
        uniform, so partial traces coincide with the full trace.  Used
        by oracles and tests that bypass the eigensolver.
        """
        vals = np.sort(np.asarray(values, dtype=np.float64))[::-1]
        if n is None:
            n = vals.size // m
        if n * m != vals.size:
            raise ValueError("number of values must equal n*m")
        eigs = np.concatenate([-vals, vals[::-1]])
        weights = np.full((2 * m, 2 * n * m), 1.0 / (2 * m))
        return cls(
            z=complex(z),
            r=float(r),
            n=n,
            m=m,
            values=vals,
            eigenvalues=eigs,
            block_weights=weights,
        )


def singular_spectrum(source) -> SingularSpectrum:
    """Full spectrum and block weights from one Hermitian eigensolve.

    Accepts a :class:`ShiftedMatrix` or a :class:`Hermitization`.
    """
    if isinstance(source, ShiftedMatrix):
        herm = hermitize(source)
    elif isinstance(source, Hermitization):
        herm = source
    else:
        raise TypeError("expected ShiftedMatrix or Hermitization")
    shifted = herm.source
    n = shifted.base.n
    m = shifted.base.m
    try:
        eigvals, eigvecs = np.linalg.eigh(herm.V)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(str(exc)) from exc
    nm = n * m
    values = eigvals[nm:][::-1].copy()
    # values of a hermitization are >= 0 up to eigensolver noise
    np.maximum(values, 0.0, out=values)
    mass = np.abs(eigvecs) ** 2
    weights = mass.reshape(2 * m, n, 2 * nm).sum(axis=1)
    keep_vectors = herm.dim <= DIAGNOSTIC_DIM
    return SingularSpectrum(
        z=shifted.z,
        r=shifted.r,
        n=n,
        m=m,
        values=values,
        eigenvalues=eigvals,
        block_weights=weights,
        eigenvectors=eigvecs if keep_vectors else None,
    )


def singular_values(shifted: ShiftedMatrix) -> np.ndarray:
    """Singular values only, via SVD; cheaper when block weights are not needed."""
    return np.linalg.svd(shifted.matrix, compute_uv=False)


def esd_cdf(spec: SingularSpectrum, x: float) -> float:
    """Symmetrized empirical CDF: fraction of +-s_j that are <= x."""
    asc = spec.values[::-1]
    n_pos = np.searchsorted(asc, x, side="right")
    n_neg = asc.size - np.searchsorted(asc, -x, side="left")
    return (n_pos + n_neg) / (2.0 * asc.size)


def esd_cdf_left(spec: SingularSpectrum, x: float) -> float:
    """Left limit of the symmetrized empirical CDF at x."""
    asc = spec.values[::-1]
    n_pos = np.searchsorted(asc, x, side="left")
    n_neg = asc.size - np.searchsorted(asc, -x, side="right")
    return (n_pos + n_neg) / (2.0 * asc.size)


def _require_upper(w: complex):
    if np.imag(w) <= 0:
        raise ValueError(f"w must lie in the upper half-plane, got {w}")


def empirical_stieltjes(spec: SingularSpectrum, w: complex) -> complex:
    """Trace of the resolvent over 2nm: mean of 1/(+-s_j - w)."""
    _require_upper(w)
    s = spec.values
    total = np.sum(1.0 / (s - w)) + np.sum(1.0 / (-s - w))
    return complex(total / (2.0 * s.size))


def empirical_stieltjes_many(spec: SingularSpectrum, w: np.ndarray) -> np.ndarray:
    """Vectorized ``empirical_stieltjes`` over an array of spectral points."""
    w = np.asarray(w, dtype=np.complex128)
    if np.any(w.imag <= 0):
        raise ValueError("all w must lie in the upper half-plane")
    s = spec.values[:, None]
    flat = w.ravel()[None, :]
    total = np.sum(1.0 / (s - flat), axis=0) + np.sum(1.0 / (-s - flat), axis=0)
    return (total / (2.0 * spec.values.size)).reshape(w.shape)


def partial_trace(spec: SingularSpectrum, alpha: int, w: complex) -> complex:
    """Per-block resolvent trace ``(1/n) sum_j R_{j_a j_a}`` for block alpha in 1..2m."""
    if not 1 <= alpha <= 2 * spec.m:
        raise ValueError(f"block index alpha={alpha} outside 1..{2 * spec.m}")
    _require_upper(w)
    weights = spec.block_weights[alpha - 1]
    total = np.sum(weights / (spec.eigenvalues - w))
    return complex(total / spec.n)


def partial_traces(spec: SingularSpectrum, w) -> np.ndarray:
    """All 2m partial traces at once; result shape (2m,) or (2m, len(w))."""
    w = np.asarray(w, dtype=np.complex128)
    if np.any(w.imag <= 0):
        raise ValueError("all w must lie in the upper half-plane")
    kernel = 1.0 / (spec.eigenvalues[:, None] - w.ravel()[None, :])
    out = (spec.block_weights @ kernel) / spec.n
    if w.ndim == 0:
        return out[:, 0]
    return out.reshape((2 * spec.m,) + w.shape)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Eigenvalues of the scaled product matrix in the complex plane."""

    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def count_in_disk(self, center: complex, radius: float) -> int:
        return int(np.sum(np.abs(self.eigenvalues - center) <= radius))

    def count_in_rectangle(self, re_lo, re_hi, im_lo, im_hi) -> int:
        lam = self.eigenvalues
        return int(
            np.sum(
                (lam.real >= re_lo)
                & (lam.real <= re_hi)
                & (lam.imag >= im_lo)
                & (lam.imag <= im_hi)
            )
        )


def product_eigenvalues(X: np.ndarray) -> ComplexSpectrum:
    """Full complex spectrum of a (generally non-Hermitian) matrix."""
    try:
        lam = np.linalg.eigvals(np.asarray(X))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(str(exc)) from exc
    return ComplexSpectrum(eigenvalues=lam)


def extreme_value_monitor(
    spec: SingularSpectrum, K: float, c_threshold: float
) -> dict:
    """Smallest/largest singular value and the well-conditioning event flag.

    The event holds when the least singular value stays above the
    threshold and the largest (the available norm proxy for the shifted
    matrix) stays below K.
    """
    s_min = float(spec.values[-1])
    s_max = float(spec.values[0])
    return {
        "s_min": s_min,
        "s_max": s_max,
        "omega_event": bool(s_min >= c_threshold and s_max <= K),
    }


def resolvent(V: np.ndarray, w: complex) -> np.ndarray:
    """Dense resolvent ``(V - w I)^{-1}`` by direct inversion (oracle path)."""
    _require_upper(w)
    V = np.asarray(V)
    k = V.shape[0]
    return np.linalg.inv(V.astype(np.complex128) - w * np.eye(k))


def resolvent_row_check(V: np.ndarray, w: complex, j: int) -> dict:
    """Row-sum inequality: sum_k |R_jk|^2 <= Im(R_jj) / Im(w)."""
    R = resolvent(V, w)
    v = float(np.imag(w))
    lhs = float(np.sum(np.abs(R[j]) ** 2))
    rhs = float(np.imag(R[j, j]) / v)
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + 1e-10)}


def resolvent_identity_check(V: np.ndarray, w1: complex, w2: complex) -> float:
    """Max entrywise residual of R(w1) - R(w2) - (w1 - w2) R(w1) R(w2)."""
    R1 = resolvent(V, w1)
    R2 = resolvent(V, w2)
    resid = R1 - R2 - (w1 - w2) * (R1 @ R2)
    return float(np.max(np.abs(resid)))


def descent_property_check(
    V: np.ndarray, u: float, v: float, s_factor: float, j: int
) -> bool:
    """1-descent inequalities for the j-th diagonal resolvent entry.

    Checks ``|R_jj(u + iv/s)| <= s |R_jj(u + iv)|`` and the same for
    the imaginary parts.
    """
    if s_factor < 1.0:
        raise ValueError("descent factor must be >= 1")
    if v <= 0:
        raise ValueError("v must be positive")
    R_hi = resolvent(V, complex(u, v))
    R_lo = resolvent(V, complex(u, v / s_factor))
    a_hi, a_lo = R_hi[j, j], R_lo[j, j]
    tol = 1e-12 * max(1.0, abs(a_hi), abs(a_lo))
    mod_ok = abs(a_lo) <= s_factor * abs(a_hi) + tol
    imag_ok = np.imag(a_lo) <= s_factor * np.imag(a_hi) + tol
    return bool(mod_ok and imag_ok)


def write_spectra_csv(spectra, path, weights_path=None):
    """Serialize spectra as (trial, z_re, z_im, r, index, s_value) rows.

    ``spectra`` is an iterable of (trial, SingularSpectrum).  Block
    weights go to the companion file when a path is given.
    """
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trial", "z_re", "z_im", "r", "index", "s_value"])
        for trial, spec in spectra:
            for idx, s in enumerate(spec.values, start=1):
                wr.writerow(
                    [
                        trial,
                        f"{spec.z.real:.17g}",
                        f"{spec.z.imag:.17g}",
                        f"{spec.r:.17g}",
                        idx,
                        f"{s:.17g}",
                    ]
                )
    if weights_path is not None:
        with open(weights_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["trial", "z_re", "z_im", "block", "eig_index", "weight"])
            for trial, spec in spectra:
                for a in range(spec.block_weights.shape[0]):
                    for k in range(spec.block_weights.shape[1]):
                        wr.writerow(
                            [
                                trial,
                                f"{spec.z.real:.17g}",
                                f"{spec.z.imag:.17g}",
                                a + 1,
                                k,
                                f"{spec.block_weights[a, k]:.17g}",
                            ]
                        )
