"""Declarative scenario configuration (JSON key-value tree).

Every quantity carries the package units (nm, us, rad/us, Gauss);
field names spell the unit out where mistakes are cheap to make
(b0_gauss, gradient_g_per_nm, tau_us, ...). Unknown keys are rejected
with the path to the offending field, applied defaults are recorded so
the run manifest can echo a fully resolved configuration.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

from .constants import (
    DEFAULT_B0,
    DEFAULT_DEPTH_Z0,
    DEFAULT_DW,
    DEFAULT_GRADIENT,
    DEFAULT_RHO_2D,
    DEFAULT_RHO_W,
    DEFAULT_TAU_SCAN,
    DEFAULT_A_LATTICE,
    DEFAULT_C_LATTICE,
    PhysicalConstants,
)
from .errors import ConfigError

SCENARIOS = ("liquid", "solid", "mixed", "scan")


@dataclass
class GeometryConfig:
    depth_z0: float = DEFAULT_DEPTH_Z0
    a_lattice: float = DEFAULT_A_LATTICE
    c_lattice: float = DEFAULT_C_LATTICE
    n_layers: int | None = None  # scenario-dependent default
    lateral_radius: float | None = None  # default 4 * depth_z0
    placement: str = "layered"
    grouping: str = "bilayer"
    rho_2d: float = DEFAULT_RHO_2D
    oh_bond: float = 0.101
    detection_radius: float | None = None  # default 2 * depth_z0
    reference_radius: float | None = None  # default 10 * depth_z0


@dataclass
class PhysicsConfig:
    b0_gauss: float = DEFAULT_B0
    rabi_omega: float | None = None  # default: Hartmann-Hahn, gamma_H * B0
    gradient_g_per_nm: float = 0.0
    gamma_e: float | None = None
    gamma_h: float | None = None
    transverse_scale: float | None = None


@dataclass
class LiquidConfig:
    kind: str = "uniform"
    d_w: float = DEFAULT_DW
    d_min: float | None = None
    kappa: float | None = None
    z_prime: float | None = None
    rho_w: float = DEFAULT_RHO_W
    n_trajectories: int = 16000
    dt_us: float | None = None  # default tau_c_prior / 25
    t_total_us: float | None = None  # default 320 * tau_c_prior
    box_half_width: float | None = None  # default 4 * floor
    box_height: float | None = None  # default 4 * floor
    max_lag_us: float | None = None
    seed: int | None = None


@dataclass
class SolverConfig:
    t_max_us: float | None = None  # liquid: 8000, solid/mixed: 30
    n_times: int = 301
    tau_us: float = DEFAULT_TAU_SCAN
    omega_min: float | None = None
    omega_max: float | None = None
    n_omega: int = 400
    dt_us: float | None = None
    max_protons: int = 20000
    max_spin_dim: int = 2**13
    engine: str = "auto"


@dataclass
class ScenarioConfig:
    scenario: str
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    liquid: LiquidConfig = field(default_factory=LiquidConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "."
    applied_defaults: list[str] = field(default_factory=list)

    # ---- resolved quantities -------------------------------------------
    def constants(self) -> PhysicalConstants:
        kw: dict[str, float] = {}
        if self.physics.gamma_e is not None:
            kw["gamma_e"] = self.physics.gamma_e
        if self.physics.gamma_h is not None:
            kw["gamma_h"] = self.physics.gamma_h
        if self.physics.transverse_scale is not None:
            kw["transverse_scale"] = self.physics.transverse_scale
        return PhysicalConstants(**kw)

    def omega_n(self) -> float:
        return self.constants().gamma_h * self.physics.b0_gauss

    def rabi_omega(self) -> float:
        if self.physics.rabi_omega is not None:
            return self.physics.rabi_omega
        return self.omega_n()

    def n_layers(self) -> int:
        if self.geometry.n_layers is not None:
            return self.geometry.n_layers
        return {"liquid": 1, "solid": 8, "mixed": 1, "scan": 6}[self.scenario]

    def lateral_radius(self) -> float:
        if self.geometry.lateral_radius is not None:
            return self.geometry.lateral_radius
        return 4.0 * self.geometry.depth_z0

    def detection_radius(self) -> float:
        if self.geometry.detection_radius is not None:
            return self.geometry.detection_radius
        return 2.0 * self.geometry.depth_z0

    def reference_radius(self) -> float:
        if self.geometry.reference_radius is not None:
            return self.geometry.reference_radius
        return 10.0 * self.geometry.depth_z0

    def liquid_floor(self) -> float:
        """Distance NV -> liquid: above the ice slab for mixed runs."""
        if self.scenario == "mixed":
            return (
                self.geometry.depth_z0
                + self.n_layers() * self.geometry.c_lattice / 2.0
            )
        return self.geometry.depth_z0

    def t_max(self) -> float:
        if self.solver.t_max_us is not None:
            return self.solver.t_max_us
        return 8000.0 if self.scenario == "liquid" else 30.0


_SCHEMA = {
    "scenario": str,
    "geometry": GeometryConfig,
    "physics": PhysicsConfig,
    "liquid": LiquidConfig,
    "solver": SolverConfig,
    "output_dir": str,
}

_POSITIVE_FIELDS = {
    "geometry.depth_z0",
    "geometry.a_lattice",
    "geometry.c_lattice",
    "geometry.rho_2d",
    "physics.b0_gauss",
    "liquid.d_w",
    "liquid.rho_w",
    "solver.t_max_us",
    "solver.tau_us",
}


def _coerce_section(cls, data: dict, path: str, applied: list[str]):
    obj = cls()
    valid = set(obj.__dataclass_fields__)
    for key in data:
        if key not in valid:
            raise ConfigError(f"unknown key '{path}.{key}'")
    for name in valid:
        if name in data:
            val = data[name]
            if isinstance(val, bool):
                raise ConfigError(f"'{path}.{name}' must be a number or string")
            setattr(obj, name, val)
        else:
            applied.append(f"{path}.{name}")
    return obj


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario configuration."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top-level config must be an object")

    for key in data:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key '{key}'")
    scenario = data.get("scenario", "")
    if not scenario:
        raise ConfigError("missing required field 'scenario'")
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"'scenario' must be one of {SCENARIOS}, got {scenario!r}"
        )

    applied: list[str] = []
    cfg = ScenarioConfig(
        scenario=scenario,
        geometry=_coerce_section(GeometryConfig,
                                 data.get("geometry", {}) or {},
                                 "geometry", applied),
        physics=_coerce_section(PhysicsConfig,
                                data.get("physics", {}) or {},
                                "physics", applied),
        liquid=_coerce_section(LiquidConfig,
                               data.get("liquid", {}) or {},
                               "liquid", applied),
        solver=_coerce_section(SolverConfig,
                               data.get("solver", {}) or {},
                               "solver", applied),
        output_dir=data.get("output_dir", "."),
    )
    cfg.applied_defaults = sorted(applied)
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig) -> None:
    sections = {
        "geometry": cfg.geometry,
        "physics": cfg.physics,
        "liquid": cfg.liquid,
        "solver": cfg.solver,
    }
    for path in _POSITIVE_FIELDS:
        sec, name = path.split(".")
        val = getattr(sections[sec], name)
        if val is not None and val <= 0:
            raise ConfigError(f"'{path}' must be positive, got {val}")
    if cfg.geometry.placement not in ("layered", "tetrahedral"):
        raise ConfigError("'geometry.placement' must be layered|tetrahedral")
    if cfg.geometry.grouping not in ("bilayer", "sublayer"):
        raise ConfigError("'geometry.grouping' must be bilayer|sublayer")
    if cfg.liquid.kind not in ("uniform", "interface"):
        raise ConfigError("'liquid.kind' must be uniform|interface")
    if cfg.physics.gradient_g_per_nm < 0:
        raise ConfigError("'physics.gradient_g_per_nm' must be >= 0")
    if cfg.scenario in ("liquid", "mixed") and cfg.liquid.seed is None:
        raise ConfigError(
            f"'liquid.seed' is required for the {cfg.scenario} scenario "
            "(wall-clock seeding is not supported)"
        )
    if cfg.solver.engine not in ("auto", "dense", "arrowhead"):
        raise ConfigError("'solver.engine' must be auto|dense|arrowhead")
    if cfg.geometry.n_layers is not None and cfg.geometry.n_layers < 1:
        raise ConfigError("'geometry.n_layers' must be >= 1")


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical JSON of the resolved configuration (round-trip stable)."""
    data = asdict(cfg)
    data.pop("applied_defaults", None)
    return json.dumps(data, indent=2, sort_keys=True)


def resolved_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Config with every scenario-dependent default made explicit."""
    data = asdict(cfg)
    geo = data["geometry"]
    geo["n_layers"] = cfg.n_layers()
    geo["lateral_radius"] = cfg.lateral_radius()
    geo["detection_radius"] = cfg.detection_radius()
    geo["reference_radius"] = cfg.reference_radius()
    data["physics"]["rabi_omega"] = cfg.rabi_omega()
    data["solver"]["t_max_us"] = cfg.t_max()
    return data
