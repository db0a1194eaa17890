"""JSON experiment configuration with strict round-trip validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .ensembles import EnsembleSpec, EntryLaw, TruncationPolicy

__all__ = ["ExperimentConfig", "GridConfig", "ConstantsConfig", "ConfigError"]

EXPERIMENT_KINDS = (
    "macro_law",
    "local_law",
    "distance",
    "linear_statistic",
    "invariants",
    "probes",
)


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _take(d: dict, section: str, allowed: dict):
    """Pop known keys with defaults; reject anything unknown."""
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")
    return {k: d.get(k, v) for k, v in allowed.items()}


@dataclass(frozen=True)
class GridConfig:
    A0: float = 4.0
    V: float = 2.0
    s_factor: float = 2.0
    epsilon: float | None = None
    u_count: int = 9
    nodes_per_decade: int = 12
    u_fixed: tuple[float, ...] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        vals = _take(
            d,
            "grid",
            {
                "A0": 4.0,
                "V": 2.0,
                "s_factor": 2.0,
                "epsilon": None,
                "u_count": 9,
                "nodes_per_decade": 12,
                "u_fixed": None,
            },
        )
        if vals["u_fixed"] is not None:
            vals["u_fixed"] = tuple(float(u) for u in vals["u_fixed"])
        return cls(**vals)


@dataclass(frozen=True)
class ConstantsConfig:
    tau: float = 0.5
    C1: float = 20.0
    C2: float = 20.0
    c_qn: float = 1.0
    log_power: float = 5.0
    K: float = 10.0
    omega_threshold: float = 1e-8
    a_exponent: float = 0.25

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantsConfig":
        vals = _take(
            d,
            "constants",
            {
                "tau": 0.5,
                "C1": 20.0,
                "C2": 20.0,
                "c_qn": 1.0,
                "log_power": 5.0,
                "K": 10.0,
                "omega_threshold": 1e-8,
                "a_exponent": 0.25,
            },
        )
        return cls(**vals)


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSpec
    kind: str
    z_points: tuple[complex, ...]
    trials: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    thresholds: dict = field(default_factory=dict)
    output_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}"
            )
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        vals = _take(
            d,
            "config",
            {
                "ensemble": None,
                "kind": None,
                "z_points": [[0.0, 0.0]],
                "trials": 1,
                "grid": {},
                "constants": {},
                "thresholds": {},
                "output_dir": "out",
                "workers": 1,
            },
        )
        if vals["ensemble"] is None or vals["kind"] is None:
            raise ConfigError("config requires 'ensemble' and 'kind'")
        ens = _take(
            dict(vals["ensemble"]),
            "ensemble",
            {
                "n": None,
                "m": 1,
                "law": {"kind": "gaussian"},
                "truncation": {},
                "base_seed": 0,
            },
        )
        if ens["n"] is None:
            raise ConfigError("ensemble requires 'n'")
        law_dict = _take(
            dict(ens["law"]),
            "ensemble.law",
            {"kind": "gaussian", "tail_exponent": None, "p": None},
        )
        trunc_dict = _take(
            dict(ens["truncation"]),
            "ensemble.truncation",
            {"enabled": False, "D": 1.0, "phi": 0.1, "delta0": None},
        )
        try:
            ensemble = EnsembleSpec(
                n=int(ens["n"]),
                m=int(ens["m"]),
                law=EntryLaw(**law_dict),
                truncation=TruncationPolicy(**trunc_dict),
                base_seed=int(ens["base_seed"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        z_points = tuple(complex(p[0], p[1]) for p in vals["z_points"])
        if not isinstance(vals["thresholds"], dict):
            raise ConfigError("thresholds must be a mapping")
        return cls(
            ensemble=ensemble,
            kind=vals["kind"],
            z_points=z_points,
            trials=int(vals["trials"]),
            grid=GridConfig.from_dict(dict(vals["grid"])),
            constants=ConstantsConfig.from_dict(dict(vals["constants"])),
            thresholds=dict(vals["thresholds"]),
            output_dir=str(vals["output_dir"]),
            workers=int(vals["workers"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("top-level config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        ens = self.ensemble
        return {
            "ensemble": {
                "n": ens.n,
                "m": ens.m,
                "law": {
                    "kind": ens.law.kind,
                    "tail_exponent": ens.law.tail_exponent,
                    "p": ens.law.p,
                },
                "truncation": asdict(ens.truncation),
                "base_seed": ens.base_seed,
            },
            "kind": self.kind,
            "z_points": [[z.real, z.imag] for z in self.z_points],
            "trials": self.trials,
            "grid": {
                "A0": self.grid.A0,
                "V": self.grid.V,
                "s_factor": self.grid.s_factor,
                "epsilon": self.grid.epsilon,
                "u_count": self.grid.u_count,
                "nodes_per_decade": self.grid.nodes_per_decade,
                "u_fixed": list(self.grid.u_fixed) if self.grid.u_fixed else None,
            },
            "constants": asdict(self.constants),
            "thresholds": dict(self.thresholds),
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        """Stable content hash of the configuration."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]
