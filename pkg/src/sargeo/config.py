"""Run configuration: YAML schema, validation, flag overrides.

Precedence is built-in defaults < config file < command-line flags. The
schema is flat sections of scalar keys (see `SCHEMA`); unknown sections
or keys are rejected so typos fail loudly at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .geometry import ViewGeometry
from .rays import MonteCarloSpec
from .scatter import ScatterParams


@dataclass(frozen=True)
class RunConfig:
    mesh_path: str | None = None
    azimuth_deg: float = 0.0
    depression_deg: float = 30.0
    range: float = 0.0            # 0 means auto: 10 x bounding radius
    grid_step_deg: float = 0.2
    mc_count: int = 200_000
    mc_sigma: float = 0.05
    mu: float = 0.01
    zeta: float = 0.1
    k_max: int = 4
    tau_min: float = 1e-3
    tau_energy: float = 1e-4
    rho: float = 0.6
    w_base: float = 1.0
    alpha_edge: float = 1.5
    tau_area: float = 0.05
    alpha_vert: float = 2.0
    gain_horizontal: float = 0.3
    tau_vert: float = 0.3
    alpha_struct: float = 2.5
    dihedral_tolerance_deg: float = 15.0
    width: int = 256
    height: int = 256
    mode: str = "sum"
    log_compress: bool = True
    bit_depth: int = 8
    image_format: str = "png"
    out_dir: str = "out"
    ply_format: str = "binary"
    ply_colors: bool = False
    seed: int = 0
    workers: int = 1

    def scatter_params(self) -> ScatterParams:
        return ScatterParams(
            mu=self.mu, zeta=self.zeta, k_max=self.k_max, tau_min=self.tau_min,
            tau_energy=self.tau_energy, rho=self.rho, w_base=self.w_base,
            alpha_edge=self.alpha_edge, tau_area=self.tau_area,
            alpha_vert=self.alpha_vert, gain_horizontal=self.gain_horizontal,
            tau_vert=self.tau_vert, alpha_struct=self.alpha_struct,
        )

    def view_geometry(self, bounding_radius: float, azimuth_deg: float | None = None) -> ViewGeometry:
        rng = self.range if self.range > 0 else 10.0 * bounding_radius
        return ViewGeometry(
            azimuth_deg=self.azimuth_deg if azimuth_deg is None else azimuth_deg,
            depression_deg=self.depression_deg,
            range=rng,
            grid_step_deg=self.grid_step_deg,
        )

    def monte_carlo_spec(self) -> MonteCarloSpec | None:
        if self.mc_count == 0:
            return None
        return MonteCarloSpec(count=self.mc_count, sigma=self.mc_sigma, seed=self.seed)


# section -> {config key -> RunConfig field}
SCHEMA: dict[str, dict[str, str]] = {
    "mesh": {"path": "mesh_path"},
    "geometry": {
        "azimuth_deg": "azimuth_deg",
        "depression_deg": "depression_deg",
        "range": "range",
        "grid_step_deg": "grid_step_deg",
    },
    "monte_carlo": {"count": "mc_count", "sigma": "mc_sigma"},
    "scatter": {
        key: key for key in (
            "mu", "zeta", "k_max", "tau_min", "tau_energy", "rho", "w_base",
            "alpha_edge", "tau_area", "alpha_vert", "gain_horizontal",
            "tau_vert", "alpha_struct", "dihedral_tolerance_deg",
        )
    },
    "projection": {
        key: key for key in ("width", "height", "mode", "log_compress", "bit_depth", "image_format")
    },
    "output": {
        "directory": "out_dir",
        "ply_format": "ply_format",
        "ply_colors": "ply_colors",
    },
    "run": {"seed": "seed", "workers": "workers"},
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(field_name: str, value):
    current = getattr(RunConfig(), field_name)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{field_name} must be a boolean, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{field_name} must be an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{field_name} must be a number, got {value!r}")
        return float(value)
    if current is None or isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{field_name} must be a string, got {value!r}")
        return value
    raise ConfigError(f"unsupported config field {field_name}")


def load_config(path) -> RunConfig:
    """Parse and validate a YAML config file against the schema."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    updates = {}
    for section, content in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        for key, value in content.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            field_name = SCHEMA[section][key]
            updates[field_name] = _coerce(field_name, value)
    cfg = replace(RunConfig(), **updates)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.mode not in ("sum", "max"):
        raise ConfigError(f"projection mode must be 'sum' or 'max', got {cfg.mode!r}")
    if cfg.bit_depth not in (8, 16):
        raise ConfigError("bit_depth must be 8 or 16")
    if cfg.image_format not in ("png", "pgm"):
        raise ConfigError("image_format must be 'png' or 'pgm'")
    if cfg.ply_format not in ("binary", "ascii"):
        raise ConfigError("ply_format must be 'binary' or 'ascii'")
    if cfg.width < 1 or cfg.height < 1:
        raise ConfigError("projection width/height must be >= 1")
    if cfg.mc_count < 0:
        raise ConfigError("monte_carlo count must be >= 0 (0 disables the beam)")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    cfg.scatter_params()  # range-checks all scattering knobs


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply non-None flag overrides on top of a config."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    for key in updates:
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown override {key!r}")
    out = replace(cfg, **updates)
    validate_config(out)
    return out
