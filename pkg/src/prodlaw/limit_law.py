"""Deterministic limiting objects for the symmetrized singular-value law.

Centerpiece: the Stieltjes transform s(z, w) solving

    s * ((w + s)^2 - |z|^2) + (w + s) = 0,

equivalently ``s^3 + 2w s^2 + (w^2 - |z|^2 + 1) s + w = 0``, with the
branch Im s > 0 on the upper half-plane.  The support of the associated
density lives between the endpoints ``lambda_minus, lambda_plus``
derived from ``alpha = sqrt(1 + 8|z|^2)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

__all__ = [
    "LimitLawAtZ",
    "StieltjesEvaluation",
    "LocalLawGrid",
    "density_p",
    "radial_cdf",
    "support_endpoints",
    "gamma_edge",
    "solve_s",
    "stieltjes_many",
    "limiting_density_g",
    "limiting_cdf_G",
    "log_potential_limit",
    "disk_log_potential",
    "default_epsilon",
    "build_domain_grid",
    "descent_schedule",
]

# Imaginary offset for Stieltjes inversion of the limiting density.
DENSITY_ETA = 1e-9

# Aspect ratio constant entering the smoothing inequality precondition.
SMOOTHING_A = math.sqrt(2.0) + 1.0

_OMEGA = cmath.exp(2j * math.pi / 3.0)


def density_p(m: int, z: complex) -> float:
    """Radial density of the m-th power of the uniform disk law.

    ``(1/(pi*m)) |z|**(2/m - 2)`` on the closed unit disk, 0 outside.
    Diverges (integrably) at the origin for m >= 2.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    az = abs(z)
    if az > 1.0:
        return 0.0
    if az == 0.0:
        return 1.0 / math.pi if m == 1 else math.inf
    return az ** (2.0 / m - 2.0) / (math.pi * m)


def radial_cdf(m: int, rad: float) -> float:
    """Probability of a disk of radius ``rad`` under the m-th power law."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 <= rad <= 1.0:
        raise ValueError(f"radius {rad} outside [0, 1]")
    return float(rad) ** (2.0 / m)


def _cubic_coeffs(z: complex, w: np.ndarray):
    az2 = abs(z) ** 2
    a = 2.0 * w
    b = w * w - az2 + 1.0
    c = w
    return a, b, c


def _cubic_roots(a, b, c) -> np.ndarray:
    """All three roots of ``s^3 + a s^2 + b s + c`` (complex Cardano).

    Works elementwise on arrays; shape of the result is (3,) + shape(a).
    """
    a = np.asarray(a, dtype=np.complex128)
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    disc = np.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3)
    # pick the branch of u = -q/2 +- disc with larger magnitude to avoid
    # catastrophic cancellation
    u1 = -q / 2.0 + disc
    u2 = -q / 2.0 - disc
    u = np.where(np.abs(u1) >= np.abs(u2), u1, u2)
    C = u ** (1.0 / 3.0)
    roots = np.empty((3,) + np.shape(a), dtype=np.complex128)
    for k in range(3):
        Ck = C * _OMEGA**k
        with np.errstate(divide="ignore", invalid="ignore"):
            t = Ck - p / (3.0 * Ck)
        t = np.where(np.abs(Ck) == 0.0, 0.0, t)
        roots[k] = t - a / 3.0
    return roots


def _polish(roots: np.ndarray, a, b, c, steps: int = 2) -> np.ndarray:
    for _ in range(steps):
        f = ((roots + a) * roots + b) * roots + c
        fp = (3.0 * roots + 2.0 * a) * roots + b
        upd = np.where(np.abs(fp) > 0, f / np.where(fp == 0, 1, fp), 0.0)
        roots = roots - upd
    return roots


def _cubic_residual(s, z: complex, w) -> np.ndarray:
    return np.abs(s * ((w + s) ** 2 - abs(z) ** 2) + (w + s))


def _select_by_homotopy(z: complex, w: complex) -> complex:
    """Track the Stieltjes root down a vertical homotopy from large Im."""
    u, v = w.real, w.imag
    law_top = 4.0 + 2.0 * abs(z)
    v_path = np.geomspace(max(law_top, 2.0 * v), v, 32)
    s_prev = None
    for vk in v_path:
        wk = complex(u, vk)
        a, b, c = _cubic_coeffs(z, np.asarray(wk))
        roots = _polish(_cubic_roots(a, b, c), a, b, c)
        if s_prev is None:
            target = -1.0 / wk
            s_prev = roots[np.argmin(np.abs(roots - target))]
        else:
            s_prev = roots[np.argmin(np.abs(roots - s_prev))]
    return complex(s_prev)


def stieltjes_many(z: complex, w) -> np.ndarray:
    """Vectorized Stieltjes-branch root of the cubic at each spectral point."""
    w_arr = np.asarray(w, dtype=np.complex128)
    if np.any(w_arr.imag <= 0):
        raise ValueError("all w must lie in the upper half-plane")
    flat = w_arr.ravel()
    a, b, c = _cubic_coeffs(z, flat)
    roots = _polish(_cubic_roots(a, b, c), a, b, c)
    pos = roots.imag > 0
    counts = pos.sum(axis=0)
    # among positive-imaginary roots take the one with largest Im; unique
    # in the generic case, ties resolved below by homotopy continuation
    choice = np.argmax(np.where(pos, roots.imag, -np.inf), axis=0)
    s = roots[choice, np.arange(flat.size)]
    ambiguous = np.nonzero(counts != 1)[0]
    for idx in ambiguous:
        s[idx] = _select_by_homotopy(z, complex(flat[idx]))
    if np.any(s.imag <= 0):
        bad = flat[s.imag <= 0]
        raise ArithmeticError(
            f"no upper-half-plane root found at w={bad[:3]}; cubic branch lost"
        )
    return s.reshape(w_arr.shape)


@dataclass(frozen=True)
class StieltjesEvaluation:
    w: complex
    s: complex
    residual: float


def solve_s(z: complex, w: complex) -> StieltjesEvaluation:
    """Stieltjes transform of the limiting law at a single point."""
    s = complex(stieltjes_many(z, np.asarray(complex(w)))[()])
    resid = float(_cubic_residual(np.asarray(s), z, np.asarray(complex(w)))[()])
    return StieltjesEvaluation(w=complex(w), s=s, residual=resid)


def support_endpoints(z: complex) -> "LimitLawAtZ":
    """Per-z analytic package: endpoints, regime, evaluators."""
    az = abs(z)
    if az == 1.0:
        raise ValueError("support endpoints are undefined on the unit circle |z| = 1")
    alpha = math.sqrt(1.0 + 8.0 * az * az)
    lambda_plus = math.sqrt((alpha + 3.0) ** 3 / (8.0 * (alpha + 1.0)))
    if az > 1.0:
        lambda_minus = math.sqrt((alpha - 3.0) ** 3 / (8.0 * (alpha - 1.0)))
        regime = "outside"
    else:
        lambda_minus = None
        regime = "inside"
    return LimitLawAtZ(
        z=complex(z),
        alpha=alpha,
        lambda_plus=lambda_plus,
        lambda_minus=lambda_minus,
        regime=regime,
        tau_margin=abs(az - 1.0),
    )


def gamma_edge(z: complex, u: float) -> float:
    """Distance from u to the nearest support edge of the law at z."""
    return support_endpoints(z).gamma(u)


@dataclass(frozen=True)
class LimitLawAtZ:
    """Limiting symmetrized singular-value law of the shifted linearization."""

    z: complex
    alpha: float
    lambda_plus: float
    lambda_minus: float | None
    regime: str
    tau_margin: float

    def gamma(self, u: float) -> float:
        d_plus = abs(abs(u) - self.lambda_plus)
        if self.regime == "outside":
            return min(d_plus, abs(abs(u) - self.lambda_minus))
        return d_plus

    def support_intervals(self) -> list[tuple[float, float]]:
        lp = self.lambda_plus
        if self.regime == "outside":
            lm = self.lambda_minus
            return [(-lp, -lm), (lm, lp)]
        return [(-lp, lp)]

    def in_support(self, x: float) -> bool:
        return any(a <= x <= b for a, b in self.support_intervals())

    def stieltjes(self, w):
        return stieltjes_many(self.z, w)

    def density(self, x):
        """Limiting density by Stieltjes inversion at height DENSITY_ETA."""
        x_arr = np.asarray(x, dtype=np.float64)
        s = stieltjes_many(self.z, x_arr + 1j * DENSITY_ETA)
        out = s.imag / math.pi
        if np.ndim(x) == 0:
            return float(out)
        return out

    @cached_property
    def _cdf_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense cumulative table of the density, edge-clustered nodes.

        Chebyshev-type spacing absorbs the square-root edge behavior, so
        the trapezoid cumulative is accurate to well below 1e-6.
        """
        xs_all = []
        cum_all = []
        total = 0.0
        for a_end, b_end in self.support_intervals():
            mid = 0.5 * (a_end + b_end)
            half = 0.5 * (b_end - a_end)
            theta = np.linspace(0.0, math.pi, 4097)
            x = mid - half * np.cos(theta)
            dens = self.density(x)
            integrand = dens * half * np.sin(theta)
            cum = integrate.cumulative_trapezoid(integrand, theta, initial=0.0)
            xs_all.append(x)
            cum_all.append(total + cum)
            total += cum[-1]
        return np.concatenate(xs_all), np.concatenate(cum_all)

    @property
    def total_mass(self) -> float:
        return float(self._cdf_grid[1][-1])

    def cdf(self, x):
        """Fast cumulative evaluator from the cached table."""
        xs, cum = self._cdf_grid
        out = np.interp(np.asarray(x, dtype=np.float64), xs, cum, left=0.0, right=cum[-1])
        out = np.clip(out, 0.0, 1.0)
        if np.ndim(x) == 0:
            return float(out)
        return out

    def quantile(self, q):
        xs, cum = self._cdf_grid
        q_arr = np.asarray(q, dtype=np.float64)
        if np.any((q_arr < 0) | (q_arr > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        out = np.interp(q_arr * cum[-1], cum, xs)
        if np.ndim(q) == 0:
            return float(out)
        return out

    def log_potential(self) -> float:
        return log_potential_limit(self.z, law=self)


def limiting_density_g(z: complex, x: float) -> float:
    """Module-level density evaluator; see LimitLawAtZ.density."""
    s = stieltjes_many(z, np.asarray(complex(x, DENSITY_ETA)))[()]
    return float(s.imag / math.pi)


def limiting_cdf_G(z: complex, x: float) -> float:
    """Distribution function by adaptive quadrature of the density."""
    law = support_endpoints(z)
    lp = law.lambda_plus
    if x <= -lp:
        return 0.0
    if x >= lp:
        return 1.0
    if x > 0.0:
        return 1.0 - limiting_cdf_G(z, -x)
    dens = lambda t: limiting_density_g(z, t)
    if law.regime == "inside":
        val, _ = integrate.quad(dens, -lp, x, limit=200)
    else:
        lm = law.lambda_minus
        if x <= -lm:
            val, _ = integrate.quad(dens, -lp, min(x, -lm), limit=200)
        else:
            val, _ = integrate.quad(dens, -lp, -lm, limit=200)
    return float(min(max(val, 0.0), 1.0))


def disk_log_potential(z: complex) -> float:
    """Closed-form logarithmic potential of the uniform unit-disk law."""
    az = abs(z)
    if az <= 1.0:
        return 0.5 * (1.0 - az * az)
    return -math.log(az)


def log_potential_limit(z: complex, law: LimitLawAtZ | None = None) -> float:
    """``-int log|x| dG(z, x)`` by quadrature, log singularity split off."""
    if law is None:
        law = support_endpoints(z)
    lp = law.lambda_plus
    dens = lambda t: limiting_density_g(z, t)
    if law.regime == "outside":
        lm = law.lambda_minus
        val, _ = integrate.quad(
            lambda t: math.log(t) * dens(t), lm, lp, limit=200
        )
        return -2.0 * val
    # inside: integrable log singularity at 0; substitute x = c u^3 near 0
    c = min(0.5, lp / 2.0)
    inner, _ = integrate.quad(
        lambda u: 3.0 * c * u * u * math.log(c * u**3) * dens(c * u**3) if u > 0 else 0.0,
        0.0,
        1.0,
        limit=200,
    )
    outer, _ = integrate.quad(lambda t: math.log(t) * dens(t), c, lp, limit=200)
    return -2.0 * (inner + outer)


def default_epsilon(v0: float) -> float:
    """Edge-exclusion width paired with v0 in the smoothing inequality."""
    return (2.0 * v0 * SMOOTHING_A) ** (2.0 / 3.0)


def optimal_v0(n: int, A0: float) -> float:
    """Smallest resolvable spectral scale ``A0 * log(n)^2 / n`` (natural log)."""
    return A0 * math.log(n) ** 2 / n


@dataclass(frozen=True)
class LocalLawGrid:
    """Lattice discretizing the admissible (u, v) region at one z."""

    z: complex
    n: int
    A0: float
    V: float
    epsilon: float
    s_factor: float
    v0: float
    law: LimitLawAtZ
    u_nodes: np.ndarray
    v_nodes: tuple[np.ndarray, ...]

    def in_domain(self, u: float, v: float) -> bool:
        gam = self.law.gamma(u)
        if gam < self.epsilon / 2.0 or not self.law.in_support(u):
            return False
        return self.v0 / math.sqrt(gam) <= v <= self.V * (1 + 1e-12)

    def nodes(self):
        """Flat (u, v) pairs in deterministic order."""
        for u, vs in zip(self.u_nodes, self.v_nodes):
            for v in vs:
                yield float(u), float(v)

    @property
    def size(self) -> int:
        return sum(vs.size for vs in self.v_nodes)


def build_domain_grid(
    z: complex,
    n: int,
    A0: float = 4.0,
    V: float = 2.0,
    epsilon: float | None = None,
    nodes_per_decade: int = 12,
    u_count: int = 9,
    s_factor: float = 2.0,
) -> LocalLawGrid:
    """Discretize the local-law region with log-spaced vertical ladders."""
    law = support_endpoints(z)
    v0 = optimal_v0(n, A0)
    if epsilon is None:
        epsilon = default_epsilon(v0)
    if V < v0:
        raise ValueError(f"V={V} below the optimal scale v0={v0:.4g}")
    half_eps = epsilon / 2.0
    u_segments = []
    for a_end, b_end in law.support_intervals():
        lo, hi = a_end + half_eps, b_end - half_eps
        if lo < hi:
            u_segments.append((lo, hi))
    if not u_segments:
        raise ValueError(f"epsilon={epsilon:.4g} leaves no admissible u interval")
    per_seg = max(2, u_count // len(u_segments)) if u_count > 1 else 1
    u_list = []
    for lo, hi in u_segments:
        if per_seg == 1:
            u_list.append(np.asarray([0.5 * (lo + hi)]))
        else:
            u_list.append(np.linspace(lo, hi, per_seg))
    u_nodes = np.concatenate(u_list)
    v_nodes = []
    kept_u = []
    for u in u_nodes:
        v_lo = v0 / math.sqrt(law.gamma(float(u)))
        if v_lo > V:
            continue
        count = max(2, int(math.ceil(math.log10(V / v_lo) * nodes_per_decade)) + 1)
        v_nodes.append(np.geomspace(v_lo, V, count))
        kept_u.append(u)
    if not kept_u:
        raise ValueError("no admissible (u, v) nodes; grid parameters inconsistent")
    return LocalLawGrid(
        z=complex(z),
        n=n,
        A0=A0,
        V=V,
        epsilon=epsilon,
        s_factor=s_factor,
        v0=v0,
        law=law,
        u_nodes=np.asarray(kept_u),
        v_nodes=tuple(v_nodes),
    )


def descent_schedule(v: float, s_factor: float, V: float) -> np.ndarray:
    """Geometric ladder ``v * s**k`` for k = 0..K_v, K_v = min{l : v s^l >= V}."""
    if v <= 0:
        raise ValueError("v must be positive")
    if s_factor <= 1.0:
        raise ValueError("ladder ratio must exceed 1")
    levels = [v]
    while levels[-1] < V:
        levels.append(levels[-1] * s_factor)
    return np.asarray(levels)
