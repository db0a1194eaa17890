"""Statistics comparing empirical spectra against the limiting objects.

Includes the local-law error sweep, self-consistency residuals of the
partial-trace system, Kolmogorov distances, the smoothing-inequality
bound, smoothed linear eigenvalue statistics, logarithmic potentials and
moment-inequality probes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .ensembles import EntryLaw
from .limit_law import (
    LimitLawAtZ,
    LocalLawGrid,
    SMOOTHING_A,
    descent_schedule,
    density_p,
    disk_log_potential,
    stieltjes_many,
    support_endpoints,
)
from .spectra import ComplexSpectrum, SingularSpectrum, partial_traces

__all__ = [
    "LambdaRecord",
    "DistanceReport",
    "BumpProfile",
    "SmoothedTestFunction",
    "ZeroSingularValueError",
    "lambda_sweep",
    "mn1_residual",
    "selfconsistency_residual",
    "ks_distance",
    "kolmogorov_distance",
    "smoothing_bound",
    "smoothed_statistic",
    "log_potential_empirical",
    "green_identity_check",
    "scaling_regression",
    "moment_inequality_probe",
]


class ZeroSingularValueError(ArithmeticError):
    """A zero singular value makes the log-determinant infinite."""


@dataclass(frozen=True)
class LambdaRecord:
    """One node of a local-law sweep."""

    u: float
    v: float
    m_n: complex
    s: complex
    lambda_abs: float
    lambda_vec_max: float
    normalized: float
    indicator: bool

    @property
    def w(self) -> complex:
        return complex(self.u, self.v)


def lambda_sweep(
    spec: SingularSpectrum,
    grid: LocalLawGrid,
    tau: float = 0.5,
) -> list[LambdaRecord]:
    """Evaluate the Stieltjes-transform error at every grid node.

    The trace error is the block average of the partial-trace errors,
    so ``lambda_abs <= lambda_vec_max`` holds by construction.  The
    indicator flag realizes the geometric-ladder condition: the error
    vector stays below ``tau * Im s`` at every ladder rung up to V.
    """
    if abs(complex(grid.z) - complex(spec.z)) > 1e-12:
        raise ValueError(f"grid z={grid.z} does not match spectrum z={spec.z}")
    z = spec.z
    out: list[LambdaRecord] = []
    log2n = math.log(spec.n) ** 2
    for u, v_base in zip(grid.u_nodes, grid.v_nodes):
        ladders = [descent_schedule(float(v), grid.s_factor, grid.V) for v in v_base]
        all_v = np.unique(np.concatenate([v_base] + ladders))
        w_all = float(u) + 1j * all_v
        traces = partial_traces(spec, w_all)
        s_all = stieltjes_many(z, w_all)
        vec_err = np.max(np.abs(traces - s_all[None, :]), axis=0)
        rung_ok = vec_err <= tau * s_all.imag
        m_all = traces.mean(axis=0)
        for v, ladder in zip(v_base, ladders):
            pos = np.searchsorted(all_v, v)
            indicator = bool(np.all(rung_ok[np.searchsorted(all_v, ladder)]))
            lam = abs(m_all[pos] - s_all[pos])
            out.append(
                LambdaRecord(
                    u=float(u),
                    v=float(v),
                    m_n=complex(m_all[pos]),
                    s=complex(s_all[pos]),
                    lambda_abs=float(lam),
                    lambda_vec_max=float(vec_err[pos]),
                    normalized=float(spec.n * v * lam / log2n),
                    indicator=indicator,
                )
            )
    return out


def _cyclic(index: int, m: int) -> int:
    """Wrap an integer into 1..m."""
    return (index - 1) % m + 1


def mn1_residual(traces: np.ndarray, z: complex, w: complex) -> dict:
    """Perturbation terms solving the partial-trace system exactly.

    For measured partial traces t_1..t_2m, returns the values T_a such
    that ``t_a = -(1 - T_a) / (w + t_{[a+1]+m} - |z|^2 / (w + t_{[a-1]}))``
    holds identically, for a = 1..m.  Vanishes when every trace equals
    the limiting transform.
    """
    traces = np.asarray(traces, dtype=np.complex128)
    m = traces.size // 2
    az2 = abs(z) ** 2
    resid = np.empty(m, dtype=np.complex128)
    degenerate = np.zeros(m, dtype=bool)
    for a in range(1, m + 1):
        up = traces[_cyclic(a + 1, m) + m - 1]
        down = traces[_cyclic(a - 1, m) - 1]
        denom = w + down
        if abs(denom) < 1e-12:
            degenerate[a - 1] = True
            resid[a - 1] = np.nan
            continue
        resid[a - 1] = 1.0 + traces[a - 1] * (w + up - az2 / denom)
    return {"residuals": resid, "degenerate": degenerate}


def selfconsistency_residual(spec: SingularSpectrum, z: complex, w: complex) -> dict:
    """Residuals of the self-consistent system from one measured spectrum."""
    traces = partial_traces(spec, complex(w))
    return mn1_residual(traces, z, w)


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Exact two-sided Kolmogorov distance of an empirical sample to a CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    g = np.asarray(cdf(x), dtype=np.float64)
    right = np.searchsorted(x, x, side="right") / n
    left = np.searchsorted(x, x, side="left") / n
    return float(max(np.max(np.abs(g - right)), np.max(np.abs(g - left))))


def kolmogorov_distance(spec: SingularSpectrum, law: LimitLawAtZ) -> float:
    """Sup distance between the symmetrized ESD and the limiting CDF.

    Exact over the jump points of the empirical CDF; the limiting CDF
    comes from the law's cached cumulative table.
    """
    atoms = np.concatenate([-spec.values, spec.values])
    return ks_distance(atoms, law.cdf)


@dataclass(frozen=True)
class DistanceReport:
    """Outcome of one smoothing-inequality evaluation."""

    delta_star: float
    term_horizontal: float
    term_vertical: float
    term_v: float
    term_eps: float
    C1: float
    C2: float
    v: float
    epsilon: float
    V: float

    @property
    def rhs(self) -> float:
        return self.term_horizontal + self.term_vertical + self.term_v + self.term_eps

    @property
    def holds(self) -> bool:
        return self.rhs >= self.delta_star - 1e-12


def _empirical_stieltjes_atoms(atoms: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Stieltjes transform of the empirical measure of a point set."""
    return np.mean(1.0 / (atoms[:, None] - w[None, :]), axis=0)


def _gauss_legendre_panels(a: float, b: float, panels: int, order: int = 16):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    return x, wts


def _geom_panels(a: float, b: float, panels: int, order: int = 16):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.geomspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    return x, wts


def smoothing_bound(
    atoms: np.ndarray,
    law: LimitLawAtZ,
    v: float,
    epsilon: float,
    V: float,
    C1: float,
    C2: float,
    x_grid_count: int = 40,
) -> DistanceReport:
    """Bound the Kolmogorov distance through Stieltjes-transform integrals.

    Requires the aspect condition ``2 v a <= eps^(3/2)`` with
    ``a = sqrt(2) + 1``.  The two integral terms use fixed-order
    composite Gauss-Legendre rules, vectorized over the whole node set.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    if 2.0 * v * SMOOTHING_A > epsilon**1.5 * (1 + 1e-12):
        raise ValueError(
            f"aspect condition violated: 2*v*a = {2 * v * SMOOTHING_A:.4g} "
            f"> eps^1.5 = {epsilon ** 1.5:.4g}"
        )
    intervals = law.support_intervals()
    min_band = min(b - a for a, b in intervals)
    if epsilon > 0.5 * min_band:
        raise ValueError(
            f"epsilon={epsilon:.4g} exceeds half the minimal band width {min_band:.4g}"
        )

    def diff_abs(w: np.ndarray) -> np.ndarray:
        return np.abs(
            _empirical_stieltjes_atoms(atoms, w) - stieltjes_many(law.z, w)
        )

    # horizontal integral at height V over the whole real line (truncated
    # where the integrand has decayed to O(1/L^2))
    span = max(law.lambda_plus, float(np.max(np.abs(atoms)))) if atoms.size else 1.0
    L = max(10.0 * V, span + 25.0)
    u_nodes, u_wts = _gauss_legendre_panels(-L, L, panels=60)
    term_horizontal = 2.0 * float(np.sum(diff_abs(u_nodes + 1j * V) * u_wts))

    # vertical integrals from v' up to V, sup over the eps/2-interior
    xs = []
    for a_end, b_end in intervals:
        lo, hi = a_end + epsilon / 2.0, b_end - epsilon / 2.0
        if lo < hi:
            xs.append(np.linspace(lo, hi, x_grid_count))
    x_grid = np.concatenate(xs)
    best = 0.0
    for x in x_grid:
        gam = law.gamma(float(x))
        v_lo = v / math.sqrt(gam)
        if v_lo >= V:
            continue
        vv, vw = _geom_panels(v_lo, V, panels=12)
        val = float(np.sum(diff_abs(x + 1j * vv) * vw))
        best = max(best, val)
    term_vertical = 2.0 * best

    delta = ks_distance(atoms, law.cdf)
    return DistanceReport(
        delta_star=delta,
        term_horizontal=term_horizontal,
        term_vertical=term_vertical,
        term_v=C1 * v,
        term_eps=C2 * epsilon**1.5,
        C1=C1,
        C2=C2,
        v=v,
        epsilon=epsilon,
        V=V,
    )


class BumpProfile:
    """Radial compactly supported smooth bump ``exp(-1/(1 - (r/R)^2))``."""

    def __init__(self, radius: float = 1.0, amplitude: float = 1.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = radius
        self.amplitude = amplitude

    def value(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        t = rho / self.radius
        inside = t < 1.0
        out = np.zeros_like(t)
        ts = np.where(inside, t, 0.0)
        out[inside] = np.exp(-1.0 / (1.0 - ts[inside] ** 2))
        return self.amplitude * out

    def laplacian(self, rho):
        """Two-dimensional radial Laplacian ``f'' + f'/r``."""
        rho = np.asarray(rho, dtype=np.float64)
        t = rho / self.radius
        inside = t < 0.9999999
        out = np.zeros_like(t)
        ts = t[inside]
        one = 1.0 - ts * ts
        g1 = -2.0 * ts / one**2
        g2 = -2.0 / one**2 - 8.0 * ts * ts / one**3
        bump = np.exp(-1.0 / one)
        # f'/r term: g'(t)/t -> -2/(1-t^2)^2 as t -> 0
        g1_over_t = -2.0 / one**2
        lap = bump * (g2 + g1 * g1 + g1_over_t)
        out[inside] = lap
        return self.amplitude * out / self.radius**2

    def eval_at(self, points, center: complex = 0j):
        return self.value(np.abs(np.asarray(points) - center))

    @cached_property
    def mass(self) -> float:
        val, _ = integrate.quad(
            lambda r: self.value(r) * r, 0.0, self.radius, limit=200
        )
        return 2.0 * math.pi * val

    @cached_property
    def laplacian_l1(self) -> float:
        """``int |Lap f| dA``; precomputed once by quadrature."""
        val, _ = integrate.quad(
            lambda r: abs(float(self.laplacian(r))) * r,
            0.0,
            self.radius,
            limit=400,
        )
        return 2.0 * math.pi * val


@dataclass(frozen=True)
class SmoothedTestFunction:
    """Rescaled bump ``n^(2a) f((z - z0) n^a)`` concentrating at z0."""

    profile: BumpProfile
    z0: complex
    a: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.a < 0.5:
            raise ValueError("localization exponent a must lie in (0, 1/2)")

    @property
    def scale(self) -> float:
        return float(self.n) ** self.a

    def value(self, points):
        pts = np.asarray(points)
        return self.scale**2 * self.profile.eval_at(pts * self.scale, self.z0 * self.scale)

    @property
    def mass(self) -> float:
        """Invariant under the rescaling."""
        return self.profile.mass

    @property
    def laplacian_l1(self) -> float:
        """Grows as n^(2a) relative to the base profile."""
        return self.scale**2 * self.profile.laplacian_l1


def smoothed_statistic(
    eigs: ComplexSpectrum,
    tf: SmoothedTestFunction,
    m: int,
    c_qn: float = 1.0,
    log_power: float = 5.0,
    tau: float = 0.1,
) -> dict:
    """Smoothed linear eigenvalue statistic against the limiting measure.

    ``lhs`` is the absolute deviation of the empirical average of the
    localized test function from its integral against the m-th power
    disk law; ``bound`` is the configurable rate envelope
    ``c * log(n)^power * ||Lap f||_L1 / n^(1-2a)``.
    """
    if abs(abs(tf.z0) - 1.0) < tau:
        warnings.warn(
            f"z0={tf.z0} lies within {tau} of the unit circle; the rate "
            "statement does not apply near the edge",
            stacklevel=2,
        )
    emp = float(np.mean(tf.value(eigs.eigenvalues).real))
    shrink = 1.0 / tf.scale

    def integrand(rho, theta):
        zeta = rho * np.exp(1j * theta)
        return float(
            tf.profile.value(rho) * density_p(m, tf.z0 + zeta * shrink) * rho
        )

    limit_val, _ = integrate.dblquad(
        lambda theta, rho: integrand(rho, theta),
        0.0,
        tf.profile.radius,
        0.0,
        2.0 * math.pi,
        epsabs=1e-8,
    )
    lhs = abs(emp - limit_val)
    n = tf.n
    bound = c_qn * math.log(n) ** log_power * tf.profile.laplacian_l1 / n ** (1.0 - 2.0 * tf.a)
    return {"lhs": lhs, "limit_integral": limit_val, "empirical": emp, "bound": bound,
            "ratio": lhs / bound if bound > 0 else math.inf}


def log_potential_empirical(spec: SingularSpectrum) -> float:
    """``-(1/nm) sum log s_j``, the log-potential of the shifted spectrum."""
    if np.any(spec.values <= 0.0):
        raise ZeroSingularValueError(
            "zero singular value: log-determinant diverges (conditioning event failed)"
        )
    return float(-np.mean(np.log(spec.values)))


def _log_potential_of_measure(measure: dict):
    kind = measure["kind"]
    if kind == "point":
        w0 = complex(measure["w0"])
        return lambda pts: -np.log(np.abs(np.asarray(pts) - w0))
    if kind == "disk":
        return lambda pts: np.vectorize(disk_log_potential)(np.asarray(pts))
    if kind == "empirical":
        atoms = np.asarray(measure["atoms"])

        def u_emp(pts):
            pts = np.atleast_1d(np.asarray(pts))
            return -np.mean(np.log(np.abs(pts[:, None] - atoms[None, :])), axis=1)

        return u_emp
    raise ValueError(f"unknown measure kind {kind!r}")


def _integral_against_measure(profile: BumpProfile, center: complex, measure: dict) -> float:
    kind = measure["kind"]
    if kind == "point":
        return float(profile.eval_at(np.asarray(complex(measure["w0"])), center))
    if kind == "empirical":
        return float(np.mean(profile.eval_at(measure["atoms"], center)))
    # uniform disk law

    def integrand(theta, rho):
        z = center + rho * np.exp(1j * theta)
        ind = 1.0 if abs(z) <= 1.0 else 0.0
        return float(profile.value(rho)) * ind * rho / math.pi

    val, _ = integrate.dblquad(
        integrand, 0.0, profile.radius, 0.0, 2.0 * math.pi, epsabs=1e-8
    )
    return val


def green_identity_check(
    profile: BumpProfile, center: complex, measure: dict
) -> dict:
    """Recover ``int f dnu`` from ``(1/2pi) int Lap(f) U_nu dA``.

    ``measure`` is ``{"kind": "point", "w0": ...}``, ``{"kind": "disk"}``
    or ``{"kind": "empirical", "atoms": ...}``.
    """
    lhs = _integral_against_measure(profile, center, measure)
    potential = _log_potential_of_measure(measure)

    def integrand(theta, rho):
        z = center + rho * np.exp(1j * theta)
        return float(profile.laplacian(rho)) * float(potential(z)) * rho

    val, _ = integrate.dblquad(
        integrand, 0.0, profile.radius, 0.0, 2.0 * math.pi, epsabs=1e-8
    )
    rhs = val / (2.0 * math.pi)
    return {"lhs": lhs, "rhs": rhs, "abs_err": abs(lhs - rhs)}


def scaling_regression(points) -> dict:
    """OLS fit of log y against log x."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points for a scaling regression")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("scaling regression requires positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    fit = slope * lx + intercept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def moment_inequality_probe(
    kind: str,
    law: EntryLaw,
    n: int,
    p_list,
    trials: int,
    seed: int = 0,
    coefficients: np.ndarray | None = None,
) -> dict:
    """Monte Carlo scaling check of linear/quadratic form moment bounds.

    Ratios of estimated p-th moments to the scaling envelopes should be
    bounded uniformly in p; no sharp constant is asserted.
    """
    if kind not in ("linear_rosenthal", "quadratic_form"):
        raise ValueError(f"unknown probe kind {kind!r}")
    p_list = [float(p) for p in p_list]
    for p in p_list:
        if p * math.log(n) > 30.0:
            warnings.warn(
                f"p={p} with n={n} exceeds the reliable Monte Carlo range",
                stacklevel=2,
            )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    presample = law.draw(rng, 10**6)
    mu = {p: float(np.mean(np.abs(presample) ** p)) for p in p_list}
    X = law.draw(rng, (trials, n))
    result: dict = {"kind": kind, "n": n, "trials": trials, "mu_p": mu, "ratios": {}}
    if kind == "linear_rosenthal":
        a = (
            np.full(n, n**-0.5)
            if coefficients is None
            else np.asarray(coefficients, dtype=np.float64)
        )
        S = X @ a
        a_norm = float(np.linalg.norm(a))
        a_max = float(np.max(np.abs(a)))
        for p in p_list:
            lhs = float(np.mean(np.abs(S) ** p)) ** (1.0 / p)
            envelope = math.sqrt(p) * a_norm + p * mu[p] ** (1.0 / p) * a_max
            result["ratios"][p] = lhs / envelope
        return result
    # quadratic form with zero diagonal
    if coefficients is None:
        A = (np.ones((n, n)) - np.eye(n)) / n
    else:
        A = np.asarray(coefficients, dtype=np.float64).copy()
        np.fill_diagonal(A, 0.0)
    Q = np.einsum("ti,ij,tj->t", X, A, X)
    a_fro = float(np.linalg.norm(A))
    a_max = float(np.max(np.abs(A)))
    for p in p_list:
        lhs = float(np.mean(np.abs(Q) ** p)) ** (1.0 / p)
        envelope = p * a_fro + p * p * mu[p] ** (2.0 / p) * a_max
        result["ratios"][p] = lhs / envelope
    exact_second = float(np.sum(A * (A + A.T)))
    result["second_moment_mc"] = float(np.mean(Q**2))
    result["second_moment_exact"] = exact_second
    result["second_moment_ratio"] = result["second_moment_mc"] / exact_second
    return result
