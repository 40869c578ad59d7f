"""Run configuration, validation, and file output.

Config files are nested YAML; unknown keys are rejected so misspelled
parameters cannot silently fall back to defaults.  Every output file embeds
the 12-hex config hash (JSON field, or a leading ``# config_hash=..`` comment
line in CSVs); floats are rendered with 17 significant digits.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from .lattice import TiltProfile, constant_tilt, grid_tilt, smoothstep_tilt

OUTPUT_ROOT_ENV = "POLARSSEP_OUT_ROOT"

SCHEMA = {
    "T": float,
    "r_max": float,
    "alpha": float,
    "seed": int,
    "replicas": int,
    "delta": float,
    "workers": (int, type(None)),
    "out_dir": (str, type(None)),
    "observables": list,
    "figures": bool,
    "tilt": (dict, str, type(None)),
}

TILT_KEYS = {"preset", "type", "beta", "r0", "r1", "r", "gamma"}

DEFAULT_OBSERVABLES = ["occupations", "bonds", "density", "girsanov"]

TILT_PRESETS = {
    "lln": dict(type="smoothstep", beta=0.25, r0=0.05, r1=0.30),
    "mild": dict(type="smoothstep", beta=0.60, r0=0.10, r1=0.30),
    "bump-0.8": dict(type="smoothstep", beta=0.80, r0=0.10, r1=0.35),
}


class ConfigError(ValueError):
    """Invalid or unknown configuration content (CLI exit code 2)."""


@dataclass
class RunConfig:
    T: float = 100.0
    r_max: float = 0.55
    alpha: float = 0.5
    seed: int = 0
    replicas: int = 4
    delta: float = 0.05
    workers: Optional[int] = None
    out_dir: Optional[str] = None
    observables: List[str] = field(default_factory=lambda: list(DEFAULT_OBSERVABLES))
    figures: bool = True
    tilt: Optional[dict] = None

    def validate(self) -> "RunConfig":
        if not self.T > 1.0:
            raise ConfigError(f"T must exceed 1, got {self.T}")
        if not 0.5 < self.r_max < 1.0:
            raise ConfigError(f"r_max must lie in (1/2, 1), got {self.r_max}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.replicas < 1:
            raise ConfigError("replicas must be positive")
        if not 0.0 < self.delta < 0.25:
            raise ConfigError(f"delta must lie in (0, 1/4), got {self.delta}")
        unknown = set(self.observables) - {"occupations", "bonds", "density", "girsanov"}
        if unknown:
            raise ConfigError(f"unknown observables: {sorted(unknown)}")
        if self.tilt is not None:
            self.tilt_profile()  # raises ConfigError on bad specs
        return self

    def tilt_profile(self) -> Optional[TiltProfile]:
        return tilt_from_spec(self.alpha, self.tilt)

    def canonical(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def tilt_from_spec(alpha: float, spec) -> Optional[TiltProfile]:
    """Tilt from a preset name or a {type/preset|grid} mapping."""
    if spec is None or spec == "none":
        return None
    if isinstance(spec, str):
        if spec not in TILT_PRESETS:
            raise ConfigError(f"unknown tilt preset {spec!r}; have {sorted(TILT_PRESETS)}")
        spec = TILT_PRESETS[spec]
    if not isinstance(spec, dict):
        raise ConfigError(f"tilt must be a preset name or mapping, got {spec!r}")
    unknown = set(spec) - TILT_KEYS
    if unknown:
        raise ConfigError(f"unknown tilt keys: {sorted(unknown)}")
    if "preset" in spec:
        return tilt_from_spec(alpha, spec["preset"])
    kind = spec.get("type", "smoothstep")
    try:
        if kind == "smoothstep":
            return smoothstep_tilt(alpha, float(spec["beta"]), float(spec["r0"]), float(spec["r1"]))
        if kind == "grid":
            return grid_tilt(alpha, spec["r"], spec["gamma"])
        if kind == "constant":
            return constant_tilt(alpha)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad tilt spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown tilt type {kind!r}")


def _check_keys(data: dict):
    unknown = set(data) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, value in data.items():
        want = SCHEMA[key]
        if key in ("T", "r_max", "alpha", "delta") and isinstance(value, (int, float)):
            continue
        if not isinstance(value, want):
            raise ConfigError(f"config key {key!r} has type {type(value).__name__}")
    if isinstance(data.get("tilt"), dict):
        unknown = set(data["tilt"]) - TILT_KEYS
        if unknown:
            raise ConfigError(f"unknown tilt keys: {sorted(unknown)}")


def load_config(path) -> RunConfig:
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _check_keys(data)
    cfg = RunConfig(**data)
    return cfg.validate()


def resolve_out_dir(cfg_out: Optional[str], cli_out: Optional[str], default: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    chosen = cli_out or cfg_out or default
    path = Path(root) / chosen if root and not os.path.isabs(chosen) else Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# writers

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_occupations_csv(path, ball, occ_mean, config_hash: str):
    with open(path, "w") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        handle.write("x1,x2,radius,sigma,occ_time\n")
        r = np.sqrt(ball.r2)
        for i in range(ball.n_sites):
            handle.write(f"{ball.x1[i]},{ball.x2[i]},{_fmt(r[i])},{_fmt(ball.sigma[i])},{_fmt(occ_mean[i])}\n")


def write_bonds_csv(path, ball, disag_mean, signed_mean, config_hash: str):
    with open(path, "w") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        handle.write("x1,x2,direction,disagreement_time,signed_time\n")
        for b in range(ball.n_bonds):
            u = ball.bond_u[b]
            handle.write(f"{ball.x1[u]},{ball.x2[u]},{int(ball.bond_dir[b])},"
                         f"{_fmt(disag_mean[b])},{_fmt(signed_mean[b])}\n")


def write_girsanov_csv(path, breakdowns, config_hash: str):
    with open(path, "w") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        handle.write("replica_id,log_psi_stat,log_psi_pot,log_psi_dyn,log_rn_total,scaled_total\n")
        for i, d in enumerate(breakdowns):
            handle.write(f"{i},{_fmt(d.log_psi_stat)},{_fmt(d.log_psi_pot)},"
                         f"{_fmt(d.log_psi_dyn)},{_fmt(d.log_rn_total)},{_fmt(d.scaled_total)}\n")


def write_measure_csv(path, measure, config_hash: str):
    with open(path, "w") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        handle.write("sigma,weight,radius\n")
        for s, w, r in zip(measure.sigma, measure.weight, measure.radius):
            handle.write(f"{_fmt(s)},{_fmt(w)},{_fmt(r)}\n")


def write_density_csv(path, density, config_hash: str):
    with open(path, "w") as handle:
        handle.write(f"# config_hash={config_hash}\n")
        handle.write("r,m\n")
        for r, m in zip(density.grid, density.values):
            handle.write(f"{_fmt(r)},{_fmt(m)}\n")


def write_summary(path, payload: dict):
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
