"""Experiment orchestration: deterministic parallel trials, CSV/JSON artifacts.

Report statistics are a pure function of (config, base_seed): the unit
of parallelism is a (trial, z) pair with its own derived RNG stream,
and reductions happen after a deterministic sort of the results.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .ensembles import EnsembleSpec, EntryLaw, sample_factors
from .limit_law import (
    build_domain_grid,
    solve_s,
    stieltjes_many,
    support_endpoints,
)
from .linearize import ProductModel, build_linearization, hermitize, product_matrix, shift
from .spectra import (
    SingularSpectrum,
    descent_property_check,
    esd_cdf,
    esd_cdf_left,
    partial_traces,
    product_eigenvalues,
    resolvent_identity_check,
    resolvent_row_check,
    singular_spectrum,
    write_spectra_csv,
)
from .verification import (
    BumpProfile,
    SmoothedTestFunction,
    ZeroSingularValueError,
    ks_distance,
    kolmogorov_distance,
    lambda_sweep,
    mn1_residual,
    log_potential_empirical,
    moment_inequality_probe,
    scaling_regression,
    smoothed_statistic,
)

__all__ = [
    "VerificationReport",
    "run",
    "run_invariant_checks",
    "emit_plot_data",
    "resolve_workers",
]

WORKERS_ENV = "PRODLAW_WORKERS"

_FLOAT = "{:.17g}".format


@dataclass
class VerificationReport:
    """Serialized outcome of one experiment."""

    config: dict
    kind: str
    statistics: dict
    pass_flags: dict
    seeds: list
    wall_clock: float
    version: str
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "kind": self.kind,
            "statistics": self.statistics,
            "pass_flags": self.pass_flags,
            "passed": self.passed,
            "seeds": self.seeds,
            "wall_clock_s": self.wall_clock,
            "version": self.version,
            "files": self.files,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj)}")


def resolve_workers(config_workers: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, config_workers)


def spectrum_for(ens: EnsembleSpec, z: complex, trial: int) -> SingularSpectrum:
    """Sample factors, linearize, shift by z, hermitize and solve."""
    model = ProductModel(sample_factors(ens, trial))
    lin = build_linearization(model)
    return singular_spectrum(shift(lin, z))


def _parallel_map(fn, tasks, workers: int):
    """Order-preserving map; results are merged independently of scheduling."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# per-kind tasks (module level so they pickle into worker processes)


def _macro_task(args):
    cfg, trial = args
    ens = cfg.ensemble
    X = product_matrix(ProductModel(sample_factors(ens, trial)))
    eigs = product_eigenvalues(X)
    lam = eigs.eigenvalues
    m = ens.m

    def radial(x):
        return np.clip(x, 0.0, 1.0) ** (2.0 / m)

    def angular(t):
        return (np.asarray(t) + math.pi) / (2.0 * math.pi)

    return {
        "trial": trial,
        "eigs": lam,
        "ks_abs": ks_distance(np.abs(lam), radial),
        "ks_arg": ks_distance(np.angle(lam), angular),
        "frac_in_disk": float(np.mean(np.abs(lam) <= 1.0)),
    }


def _local_task(args):
    cfg, z, trial = args
    ens = cfg.ensemble
    spec = spectrum_for(ens, z, trial)
    g = cfg.grid
    grid = build_domain_grid(
        z,
        ens.n,
        A0=g.A0,
        V=g.V,
        epsilon=g.epsilon,
        nodes_per_decade=g.nodes_per_decade,
        u_count=g.u_count,
        s_factor=g.s_factor,
    )
    if g.u_fixed is not None:
        grid = _override_u(grid, g.u_fixed)
    records = lambda_sweep(spec, grid, tau=cfg.constants.tau)
    return {"trial": trial, "z": z, "records": records}


def _override_u(grid, u_fixed):
    from .limit_law import LocalLawGrid

    v_nodes = []
    kept = []
    for u in u_fixed:
        gam = grid.law.gamma(float(u))
        v_lo = grid.v0 / math.sqrt(gam)
        if v_lo > grid.V:
            continue
        count = max(2, int(math.ceil(math.log10(grid.V / v_lo) * 12)) + 1)
        v_nodes.append(np.geomspace(v_lo, grid.V, count))
        kept.append(float(u))
    return LocalLawGrid(
        z=grid.z,
        n=grid.n,
        A0=grid.A0,
        V=grid.V,
        epsilon=grid.epsilon,
        s_factor=grid.s_factor,
        v0=grid.v0,
        law=grid.law,
        u_nodes=np.asarray(kept),
        v_nodes=tuple(v_nodes),
    )


def _distance_task(args):
    cfg, z, trial = args
    ens = cfg.ensemble
    spec = spectrum_for(ens, z, trial)
    law = support_endpoints(z)
    delta = kolmogorov_distance(spec, law)
    s_min = float(spec.values[-1])
    s_max = float(spec.values[0])
    omega = bool(
        s_min >= cfg.constants.omega_threshold and s_max <= cfg.constants.K
    )
    try:
        u_n = log_potential_empirical(spec)
    except ZeroSingularValueError:
        u_n = math.inf
    return {
        "trial": trial,
        "z": z,
        "delta_star": delta,
        "s_min": s_min,
        "s_max": s_max,
        "omega_event": omega,
        "log_potential": u_n,
        "values": spec.values,
    }


def _linear_task(args):
    cfg, trial = args
    ens = cfg.ensemble
    z0 = cfg.z_points[0]
    X = product_matrix(ProductModel(sample_factors(ens, trial)))
    eigs = product_eigenvalues(X)
    tf = SmoothedTestFunction(
        profile=BumpProfile(), z0=z0, a=cfg.constants.a_exponent, n=ens.n
    )
    stat = smoothed_statistic(
        eigs, tf, ens.m, c_qn=cfg.constants.c_qn, log_power=cfg.constants.log_power
    )
    stat["trial"] = trial
    return stat


# ---------------------------------------------------------------------------
# experiment drivers


def run(config: ExperimentConfig, out_dir=None) -> VerificationReport:
    """Execute one experiment and write its artifacts."""
    t0 = time.perf_counter()
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = resolve_workers(config.workers)
    runner = {
        "macro_law": _run_macro,
        "local_law": _run_local,
        "distance": _run_distance,
        "linear_statistic": _run_linear,
        "invariants": _run_invariants,
        "probes": _run_probes,
    }[config.kind]
    statistics, pass_flags, files = runner(config, out, workers)
    report = VerificationReport(
        config=config.to_dict(),
        kind=config.kind,
        statistics=statistics,
        pass_flags=pass_flags,
        seeds=[config.ensemble.base_seed + 0, *range(config.trials)],
        wall_clock=time.perf_counter() - t0,
        version=f"prodlaw-{__version__}",
        files=[str(f) for f in files],
    )
    report_path = out / "report.json"
    report.save(report_path)
    _write_manifest(out, [*files, report_path], config)
    return report


def _write_manifest(out: Path, files, config: ExperimentConfig):
    digest = config.digest()
    with open(out / "MANIFEST.txt", "w") as fh:
        for f in files:
            fh.write(
                f"{Path(f).name} config={digest} seed={config.ensemble.base_seed} "
                f"version=prodlaw-{__version__}\n"
            )


def _threshold(config: ExperimentConfig, key: str, default: float) -> float:
    return float(config.thresholds.get(key, default))


def _run_macro(config, out, workers):
    tasks = [(config, t) for t in range(config.trials)]
    results = _parallel_map(_macro_task, tasks, workers)
    results.sort(key=lambda r: r["trial"])
    path = out / "eigenvalues.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trial", "re", "im"])
        for r in results:
            for lam in r["eigs"]:
                wr.writerow([r["trial"], _FLOAT(lam.real), _FLOAT(lam.imag)])
    ks_abs = [r["ks_abs"] for r in results]
    ks_arg = [r["ks_arg"] for r in results]
    stats = {
        "ks_abs_median": float(np.median(ks_abs)),
        "ks_arg_median": float(np.median(ks_arg)),
        "ks_abs": ks_abs,
        "ks_arg": ks_arg,
        "frac_in_disk_median": float(np.median([r["frac_in_disk"] for r in results])),
    }
    flags = {
        "ks_abs": stats["ks_abs_median"] <= _threshold(config, "ks_abs_median", 0.08),
        "ks_arg": stats["ks_arg_median"] <= _threshold(config, "ks_arg_median", 0.08),
    }
    return stats, flags, [path]


def _run_local(config, out, workers):
    tasks = [
        (config, z, t) for z in config.z_points for t in range(config.trials)
    ]
    results = _parallel_map(_local_task, tasks, workers)
    results.sort(key=lambda r: (r["z"].real, r["z"].imag, r["trial"]))
    path = out / "lambda.csv"
    rows_by_v: dict = {}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(
            ["z_re", "z_im", "u", "v", "lambda_abs", "normalized", "indicator", "trial"]
        )
        for r in results:
            for rec in r["records"]:
                wr.writerow(
                    [
                        _FLOAT(r["z"].real),
                        _FLOAT(r["z"].imag),
                        _FLOAT(rec.u),
                        _FLOAT(rec.v),
                        _FLOAT(rec.lambda_abs),
                        _FLOAT(rec.normalized),
                        int(rec.indicator),
                        r["trial"],
                    ]
                )
                rows_by_v.setdefault((rec.u, rec.v), []).append(rec.lambda_abs)
    max_norm = max(
        rec.normalized for r in results for rec in r["records"]
    )
    medians = {
        (u, v): float(np.median(vals)) for (u, v), vals in rows_by_v.items()
    }
    slopes = []
    for u in {u for u, _ in medians}:
        pts = sorted((v, medians[(uu, v)]) for uu, v in medians if uu == u)
        if len(pts) >= 3 and all(y > 0 for _, y in pts):
            slopes.append(scaling_regression(pts)["slope"])
    stats = {
        "max_normalized": float(max_norm),
        "median_slope_lambda_vs_v": float(np.median(slopes)) if slopes else math.nan,
        "node_count": sum(len(r["records"]) for r in results),
    }
    lo = _threshold(config, "slope_lo", -1.25)
    hi = _threshold(config, "slope_hi", -0.70)
    flags = {"slope_in_range": bool(slopes) and lo <= stats["median_slope_lambda_vs_v"] <= hi}
    if "max_normalized" in config.thresholds:
        flags["max_normalized"] = stats["max_normalized"] <= _threshold(
            config, "max_normalized", math.inf
        )
    return stats, flags, [path]


def _run_distance(config, out, workers):
    tasks = [
        (config, z, t) for z in config.z_points for t in range(config.trials)
    ]
    results = _parallel_map(_distance_task, tasks, workers)
    results.sort(key=lambda r: (r["z"].real, r["z"].imag, r["trial"]))
    dist_path = out / "distances.csv"
    with open(dist_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["z_re", "z_im", "n", "trial", "delta_star"])
        for r in results:
            wr.writerow(
                [
                    _FLOAT(r["z"].real),
                    _FLOAT(r["z"].imag),
                    config.ensemble.n,
                    r["trial"],
                    _FLOAT(r["delta_star"]),
                ]
            )
    spectra_path = out / "spectra.csv"
    spec_rows = []
    for r in results:
        synth = SingularSpectrum.from_values(
            r["values"], z=r["z"], n=config.ensemble.n, m=config.ensemble.m
        )
        spec_rows.append((r["trial"], synth))
    write_spectra_csv(spec_rows, spectra_path)
    deltas = [r["delta_star"] for r in results]
    stats = {
        "delta_median": float(np.median(deltas)),
        "delta_all": deltas,
        "omega_failures": int(sum(not r["omega_event"] for r in results)),
        "s_min_median": float(np.median([r["s_min"] for r in results])),
        "s_max_median": float(np.median([r["s_max"] for r in results])),
        "log_potential_median": float(np.median([r["log_potential"] for r in results])),
    }
    flags = {
        "delta_median": stats["delta_median"] <= _threshold(config, "delta_median", 0.1)
    }
    return stats, flags, [dist_path, spectra_path]


def _run_linear(config, out, workers):
    tasks = [(config, t) for t in range(config.trials)]
    results = _parallel_map(_linear_task, tasks, workers)
    results.sort(key=lambda r: r["trial"])
    path = out / "linear_stats.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["trial", "n", "lhs", "bound", "ratio"])
        for r in results:
            wr.writerow(
                [
                    r["trial"],
                    config.ensemble.n,
                    _FLOAT(r["lhs"]),
                    _FLOAT(r["bound"]),
                    _FLOAT(r["ratio"]),
                ]
            )
    stats = {
        "lhs_median": float(np.median([r["lhs"] for r in results])),
        "bound": results[0]["bound"],
        "ratio_median": float(np.median([r["ratio"] for r in results])),
    }
    flags = {"within_bound": stats["ratio_median"] <= _threshold(config, "ratio_median", 1.0)}
    return stats, flags, [path]


def _run_invariants(config, out, workers):
    checks = run_invariant_checks(seed=config.ensemble.base_seed)
    stats = {name: {"passed": ok, "detail": detail} for name, ok, detail in checks}
    flags = {name: ok for name, ok, _ in checks}
    return stats, flags, []


def _run_probes(config, out, workers):
    law = config.ensemble.law
    lin = moment_inequality_probe(
        "linear_rosenthal",
        law,
        n=config.ensemble.n,
        p_list=[2, 4, 8],
        trials=10**5,
        seed=config.ensemble.base_seed,
    )
    quad = moment_inequality_probe(
        "quadratic_form",
        law,
        n=min(config.ensemble.n, 256),
        p_list=[2, 4],
        trials=2 * 10**4,
        seed=config.ensemble.base_seed + 1,
    )
    ratios = list(lin["ratios"].values())
    spread = max(ratios) / min(ratios)
    stats = {"linear": lin, "quadratic": quad, "linear_ratio_spread": spread}
    flags = {
        "linear_ratios_bounded": spread <= _threshold(config, "ratio_spread", 3.0),
        "quadratic_p2_exact": abs(quad["second_moment_ratio"] - 1.0)
        <= _threshold(config, "p2_tolerance", 0.05),
    }
    return stats, flags, []


# ---------------------------------------------------------------------------
# exact-identity suite (the `check` subcommand)


def _match_multisets(a, b, tol: float) -> float:
    """Greedy nearest matching; returns the largest matched distance."""
    a = list(a)
    b = list(b)
    if len(a) != len(b):
        return math.inf
    worst = 0.0
    used = [False] * len(b)
    for x in a:
        best_j, best_d = -1, math.inf
        for j, y in enumerate(b):
            if not used[j]:
                d = abs(x - y)
                if d < best_d:
                    best_j, best_d = j, d
        used[best_j] = True
        worst = max(worst, best_d)
    return worst


def run_invariant_checks(seed: int = 7) -> list[tuple[str, bool, str]]:
    """Small-matrix algebraic identities, every one checked exhaustively."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    checks: list[tuple[str, bool, str]] = []

    # hermitization multiset identity at nm <= 16
    ens = EnsembleSpec(n=8, m=2, law=EntryLaw("gaussian"), base_seed=seed)
    lin = build_linearization(ProductModel(sample_factors(ens, 0)))
    shifted = shift(lin, 0.7 + 0.3j)
    herm = hermitize(shifted)
    eig = np.sort(np.linalg.eigvalsh(herm.V))
    sv = np.linalg.svd(shifted.matrix, compute_uv=False)
    expected = np.sort(np.concatenate([-sv, sv]))
    err = float(np.max(np.abs(eig - expected)))
    checks.append(("hermitization_multiset", err <= 1e-10, f"max err {err:.3e}"))

    # eigenvalue correspondence of the linearization, m in {1, 2, 3}
    worst = 0.0
    for m in (1, 2, 3):
        e2 = EnsembleSpec(n=6, m=m, law=EntryLaw("gaussian"), base_seed=seed + m)
        model = ProductModel(sample_factors(e2, 0))
        W = build_linearization(model).W
        Wm = np.linalg.matrix_power(W, m)
        lam_w = np.linalg.eigvals(Wm)
        lam_x = np.linalg.eigvals(product_matrix(model))
        worst = max(worst, _match_multisets(lam_w, np.repeat(lam_x, m), 1e-8))
    checks.append(
        ("power_eigenvalue_multiplicity", worst <= 1e-8, f"max match err {worst:.3e}")
    )

    # resolvent identity and row-sum inequality at nm <= 64
    ens64 = EnsembleSpec(n=32, m=2, law=EntryLaw("gaussian"), base_seed=seed + 11)
    lin64 = build_linearization(ProductModel(sample_factors(ens64, 0)))
    V64 = hermitize(shift(lin64, 0.4)).V
    resid = resolvent_identity_check(V64, 1j, 0.5 + 2j)
    checks.append(("resolvent_identity", resid <= 1e-10, f"residual {resid:.3e}"))

    rows_ok = True
    worst_gap = 0.0
    for _ in range(100):
        w = complex(rng.uniform(-2, 2), rng.uniform(0.05, 2.0))
        j = int(rng.integers(0, V64.shape[0]))
        res = resolvent_row_check(V64, w, j)
        rows_ok &= res["holds"]
        worst_gap = max(worst_gap, res["lhs"] - res["rhs"])
    checks.append(
        ("resolvent_row_sum", rows_ok, f"max lhs-rhs {worst_gap:.3e} over 100 draws")
    )

    # 1-descent property for every diagonal entry
    descent_ok = True
    for s_factor in (1.5, 2.0, 4.0):
        for j in range(V64.shape[0]):
            descent_ok &= descent_property_check(V64, 0.3, 0.5, s_factor, j)
    checks.append(
        ("descent_property", descent_ok, "all diagonal entries, s in {1.5, 2, 4}")
    )

    # partial-trace decomposition of the trace resolvent
    ens42 = EnsembleSpec(n=4, m=2, law=EntryLaw("gaussian"), base_seed=seed + 3)
    spec42 = spectrum_for(ens42, 0.3, 0)
    w = 0.3 + 0.5j
    traces = partial_traces(spec42, w)
    direct = np.mean(1.0 / (spec42.eigenvalues - w))
    gap = abs(traces.mean() - direct)
    checks.append(("partial_trace_sum", gap <= 1e-10, f"gap {gap:.3e}"))

    # self-consistent fixed point of the partial-trace system
    worst_fp = 0.0
    for z, wv in [(0.5, 0.3 + 0.4j), (2.0, -1.0 + 0.05j), (0.0, 1j)]:
        s = solve_s(z, wv).s
        for m in (1, 2, 3):
            res = mn1_residual(np.full(2 * m, s), z, wv)
            worst_fp = max(worst_fp, float(np.max(np.abs(res["residuals"]))))
    checks.append(
        ("selfconsistency_fixed_point", worst_fp <= 1e-10, f"max residual {worst_fp:.3e}")
    )

    # symmetry of the symmetrized empirical distribution
    sym_ok = True
    for x in np.linspace(-3, 3, 41):
        lhs = esd_cdf(spec42, -x) + esd_cdf_left(spec42, x)
        sym_ok &= lhs == 1.0
    checks.append(("esd_symmetry", sym_ok, "F(-x) + F(x-) = 1 exactly"))

    # cubic solver residual spot check
    worst_cubic = 0.0
    for _ in range(200):
        z = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        wv = complex(rng.uniform(-3, 3), 10 ** rng.uniform(-3, 1))
        worst_cubic = max(worst_cubic, solve_s(z, wv).residual)
    checks.append(
        ("cubic_residual", worst_cubic <= 1e-10, f"max residual {worst_cubic:.3e}")
    )

    return checks


# ---------------------------------------------------------------------------
# plot data


def emit_plot_data(kind: str, run_dirs, out_path=None) -> Path:
    """Produce columnar plot files from a run's CSV artifacts."""
    if isinstance(run_dirs, (str, Path)):
        run_dirs = [run_dirs]
    dirs = [Path(d) for d in run_dirs]
    first = dirs[0]
    if out_path is None:
        out_path = first / f"plot_{kind}.csv"
    out_path = Path(out_path)
    if kind == "scatter":
        rows = _read_csv(first / "eigenvalues.csv")
        with open(out_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re", "im", "abs_lambda", "in_unit_disk"])
            for r in rows:
                re, im = float(r["re"]), float(r["im"])
                mod = math.hypot(re, im)
                wr.writerow([_FLOAT(re), _FLOAT(im), _FLOAT(mod), int(mod <= 1.0)])
        return out_path
    if kind == "density_compare":
        rows = _read_csv(first / "spectra.csv")
        z = complex(float(rows[0]["z_re"]), float(rows[0]["z_im"]))
        vals = np.array([float(r["s_value"]) for r in rows])
        sym = np.concatenate([-vals, vals])
        law = support_endpoints(z)
        lo, hi = -law.lambda_plus - 0.5, law.lambda_plus + 0.5
        hist, edges = np.histogram(sym, bins=80, range=(lo, hi), density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        g = law.density(centers)
        with open(out_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "g_limit", "g_empirical"])
            for x, gl, ge in zip(centers, g, hist):
                wr.writerow([_FLOAT(x), _FLOAT(gl), _FLOAT(ge)])
        return out_path
    if kind == "lambda_vs_v":
        rows = _read_csv(first / "lambda.csv")
        by_v: dict = {}
        for r in rows:
            by_v.setdefault(float(r["v"]), []).append(float(r["lambda_abs"]))
        with open(out_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["v", "lambda_abs_median", "count"])
            for v in sorted(by_v):
                wr.writerow([_FLOAT(v), _FLOAT(float(np.median(by_v[v]))), len(by_v[v])])
        return out_path
    if kind == "distance_vs_n":
        by_n: dict = {}
        for d in dirs:
            for r in _read_csv(d / "distances.csv"):
                by_n.setdefault(int(r["n"]), []).append(float(r["delta_star"]))
        with open(out_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["n", "delta_star_median", "count"])
            for n in sorted(by_n):
                wr.writerow([n, _FLOAT(float(np.median(by_n[n]))), len(by_n[n])])
        return out_path
    raise ValueError(f"unknown plot kind {kind!r}")


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
