"""Scenario orchestration: build the system, run, persist results.

Four scenarios share one configuration schema:

* liquid  - trajectory Monte Carlo -> correlation functions -> rates ->
            exponential depolarization n(t)
* solid   - static slab, closed covariance propagation of the exchange
            dynamics at the Hartmann-Hahn condition
* mixed   - ice slab exchange plus the liquid-induced NV depolarization
            acting through the dissipative covariance equation
* scan    - Rabi-frequency sweep of the slab under a field gradient

Every run writes a JSON manifest carrying the fully resolved
configuration, seeds, derived quantities and output inventory, enough
to reproduce the run bit for bit at a fixed thread count.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, resolved_dict
from .constants import PhysicalConstants
from .couplings import FieldProfile, build_coupling_set, nv_couplings
from .errors import ConfigError, ResourceLimitError
from .gaussian import (
    InitialState,
    assemble_V,
    nv_population_dissipative,
    nv_population_unitary,
    write_population_csv,
)
from .lattice import (
    DetectionVolume,
    LatticeSpec,
    NvPlacement,
    ProtonSet,
    build_ice_lattice,
    interaction_fraction,
    layer_table,
    truncate_to_volume,
    write_protons,
)
from .liquid import (
    DiffusionModel,
    SimulationBox,
    build_rate_table,
    estimate_correlations,
    populate_liquid,
    simulate_trajectories,
    write_correlation_csv,
    write_rates_csv,
)
from .magnetometry import (
    ScanConfig,
    default_omega_grid,
    rabi_scan,
    resolution_check,
    write_peaks_csv,
    write_spectrum_csv,
)

TAU_C_PREFACTOR = 0.45


def _lattice_spec(cfg: ScenarioConfig, lateral: float | None = None) -> LatticeSpec:
    return LatticeSpec(
        a_lattice=cfg.geometry.a_lattice,
        c_lattice=cfg.geometry.c_lattice,
        n_layers=cfg.n_layers(),
        lateral_radius=lateral if lateral is not None else cfg.lateral_radius(),
        placement=cfg.geometry.placement,
        rho_2d=cfg.geometry.rho_2d,
        grouping=cfg.geometry.grouping,
        oh_bond=cfg.geometry.oh_bond,
    )


def build_solid_system(cfg: ScenarioConfig) -> ProtonSet:
    """Slab truncated to the detection hemisphere, capped by the solver."""
    slab = build_ice_lattice(_lattice_spec(cfg), NvPlacement(cfg.geometry.depth_z0))
    protons = truncate_to_volume(slab, DetectionVolume(cfg.detection_radius()))
    if len(protons) > cfg.solver.max_protons:
        raise ResourceLimitError(
            f"detection volume holds {len(protons)} protons "
            f"(solver cap {cfg.solver.max_protons})"
        )
    if len(protons) == 0:
        raise ConfigError("detection volume contains no protons")
    return protons


def _diffusion_model(cfg: ScenarioConfig) -> DiffusionModel:
    liq = cfg.liquid
    if liq.kind == "uniform":
        return DiffusionModel(kind="uniform", d_w=liq.d_w)
    floor = cfg.liquid_floor()
    return DiffusionModel(
        kind="interface",
        d_w=liq.d_w,
        d_min=liq.d_min if liq.d_min is not None else 0.1 * liq.d_w,
        kappa=liq.kappa if liq.kappa is not None else 2.5,
        z_prime=liq.z_prime if liq.z_prime is not None else floor + 0.4,
    )


def _liquid_rates(cfg: ScenarioConfig, consts: PhysicalConstants):
    """Monte Carlo correlations and the Markov rate table."""
    floor = cfg.liquid_floor()
    liq = cfg.liquid
    box = SimulationBox(
        floor=floor,
        half_width=liq.box_half_width or 4.0 * floor,
        height=liq.box_height or 4.0 * floor,
    )
    model = _diffusion_model(cfg)
    tau_prior = TAU_C_PREFACTOR * floor**2 / model.d_w
    dt = liq.dt_us or tau_prior / 25.0
    t_total = liq.t_total_us or 320.0 * tau_prior
    ensemble = simulate_trajectories(
        model, box, liq.n_trajectories, dt, t_total, seed=int(liq.seed)
    )
    pair = estimate_correlations(ensemble, consts, ("x", "z"),
                                 max_lag=liq.max_lag_us)
    corr_x, corr_z = pair["x"], pair["z"]
    n_eff = liq.rho_w * box.volume
    table = build_rate_table(
        corr_x, corr_z,
        omega_rabi=cfg.rabi_omega(),
        delta=cfg.rabi_omega() - cfg.omega_n(),
        n_eff=n_eff,
    )
    return ensemble, corr_x, corr_z, table


def _solid_population(cfg: ScenarioConfig, protons: ProtonSet,
                      consts: PhysicalConstants, times, alpha=None):
    field = FieldProfile(b0=cfg.physics.b0_gauss, grad_lambda=0.0)
    cs = build_coupling_set(protons, consts, field, use_gradient=False)
    v = assemble_V(cs, cfg.rabi_omega())
    if alpha is None:
        engine = cfg.solver.engine
        return cs, nv_population_unitary(v, times, InitialState(),
                                         engine=engine)
    return cs, nv_population_dissipative(v, alpha, times, InitialState(),
                                         dt=cfg.solver.dt_us)


def _lambda_fraction(cfg: ScenarioConfig, consts: PhysicalConstants) -> float:
    """Interaction fraction inside the detection radius against the
    extended reference slab."""
    r_ref = cfg.reference_radius()
    depth = cfg.geometry.depth_z0
    d = cfg.geometry.c_lattice / 2.0
    n_ref = max(cfg.n_layers(), int(np.ceil((4.0 * depth) / d)) + 1)
    spec = LatticeSpec(
        a_lattice=cfg.geometry.a_lattice,
        c_lattice=cfg.geometry.c_lattice,
        n_layers=n_ref,
        lateral_radius=r_ref * 1.02,
        placement="layered",
        rho_2d=cfg.geometry.rho_2d,
        grouping=cfg.geometry.grouping,
    )
    slab = build_ice_lattice(spec, NvPlacement(depth))
    return interaction_fraction(
        slab, cfg.detection_radius(),
        lambda pos: nv_couplings(pos, consts), r_ref, mode="rss",
    )


def run_scenario(cfg: ScenarioConfig, out_dir, threads: int = 1) -> dict:
    """Execute the configured scenario; returns the manifest dict."""
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    consts = cfg.constants()
    outputs: list[str] = []
    derived: dict = {"omega_n": cfg.omega_n(), "rabi_omega": cfg.rabi_omega()}

    times = np.linspace(0.0, cfg.t_max(), cfg.solver.n_times)

    if cfg.scenario == "liquid":
        _, corr_x, corr_z, table = _liquid_rates(cfg, consts)
        pops = populate_liquid(table.alpha_markov, 1.0, times)
        write_population_csv(out / "population.csv", times, pops)
        write_correlation_csv(out / "correlation_x.csv", corr_x)
        write_correlation_csv(out / "correlation_z.csv", corr_z)
        write_rates_csv(out / "rates.csv", table)
        outputs += ["population.csv", "correlation_x.csv",
                    "correlation_z.csv", "rates.csv"]
        derived.update(
            tau_c_x=table.tau_c_x, tau_c_z=table.tau_c_z,
            alpha_markov=table.alpha_markov,
            alpha_inverse_ms=1e-3 / table.alpha_markov
            if table.alpha_markov > 0 else float("inf"),
            n_eff=table.n_eff,
        )

    elif cfg.scenario == "solid":
        protons = build_solid_system(cfg)
        cs, pops = _solid_population(cfg, protons, consts, times)
        write_population_csv(out / "population.csv", times, pops)
        outputs.append("population.csv")
        derived.update(
            n_protons=len(protons),
            sum_g_rss=float(np.sqrt(np.sum(np.abs(cs.g) ** 2))),
            lambda_fraction=_lambda_fraction(cfg, consts),
        )

    elif cfg.scenario == "mixed":
        protons = build_solid_system(cfg)
        _, corr_x, corr_z, table = _liquid_rates(cfg, consts)
        cs, pops_mixed = _solid_population(cfg, protons, consts, times,
                                           alpha=table.alpha_markov)
        _, pops_solid = _solid_population(cfg, protons, consts, times)
        write_population_csv(out / "population.csv", times, pops_mixed)
        write_population_csv(out / "population_solid_reference.csv",
                             times, pops_solid)
        write_rates_csv(out / "rates.csv", table)
        outputs += ["population.csv", "population_solid_reference.csv",
                    "rates.csv"]
        derived.update(
            n_protons=len(protons),
            sum_g_rss=float(np.sqrt(np.sum(np.abs(cs.g) ** 2))),
            alpha_markov=table.alpha_markov,
            tau_c_x=table.tau_c_x,
            n_eff=table.n_eff,
            max_liquid_effect=float(np.max(np.abs(pops_mixed - pops_solid))),
        )

    elif cfg.scenario == "scan":
        protons = build_solid_system(cfg)
        field = FieldProfile(b0=cfg.physics.b0_gauss,
                             grad_lambda=cfg.physics.gradient_g_per_nm)
        if cfg.solver.omega_min is not None and cfg.solver.omega_max is not None:
            omegas = np.linspace(cfg.solver.omega_min, cfg.solver.omega_max,
                                 cfg.solver.n_omega)
        else:
            omegas = default_omega_grid(protons, field, consts,
                                        n_points=cfg.solver.n_omega)
        scan = rabi_scan(ScanConfig(protons=protons, field=field,
                                    tau=cfg.solver.tau_us, omegas=omegas,
                                    consts=consts))
        write_spectrum_csv(out / "spectrum.csv", scan)
        write_peaks_csv(out / "peaks.csv", scan)
        outputs += ["spectrum.csv", "peaks.csv"]
        g = nv_couplings(protons, consts)
        derived.update(
            n_protons=len(protons),
            n_peaks=len(scan.peaks),
            grid_too_coarse=scan.grid_too_coarse,
            sum_g_rss=float(np.sqrt(np.sum(np.abs(g) ** 2))),
            lambda_fraction=_lambda_fraction(cfg, consts),
        )
        if field.grad_lambda > 0 and len(layer_table(protons)) >= 2:
            rep = resolution_check(protons, field, consts)
            derived["resolution_ratios"] = [float(r) for r in rep.ratios]
            derived["resolution_passed"] = rep.passed
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError(f"unknown scenario {cfg.scenario!r}")

    manifest = {
        "artifact_version": __version__,
        "scenario": cfg.scenario,
        "config": resolved_dict(cfg),
        "applied_defaults": cfg.applied_defaults,
        "seed": cfg.liquid.seed,
        "threads": threads,
        "derived": derived,
        "outputs": outputs,
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def verify(cfg: ScenarioConfig) -> dict:
    """Dry run: counts, margins and resource estimates, no heavy compute."""
    consts = cfg.constants()
    report: dict = {
        "scenario": cfg.scenario,
        "omega_n": cfg.omega_n(),
        "rabi_omega": cfg.rabi_omega(),
        "warnings": [],
    }
    if cfg.scenario == "liquid":
        floor = cfg.liquid_floor()
        box_w = cfg.liquid.box_half_width or 4.0 * floor
        box_h = cfg.liquid.box_height or 4.0 * floor
        volume = (2 * box_w) ** 2 * box_h
        report["n_eff"] = cfg.liquid.rho_w * volume
        tau_prior = TAU_C_PREFACTOR * floor**2 / cfg.liquid.d_w
        report["tau_c_prior_us"] = tau_prior
        steps = (cfg.liquid.t_total_us or 320 * tau_prior) / (
            cfg.liquid.dt_us or tau_prior / 25.0
        )
        report["total_steps"] = cfg.liquid.n_trajectories * steps
        return report

    try:
        protons = build_solid_system(cfg)
    except ResourceLimitError as exc:
        report["warnings"].append(f"resource cap: {exc}")
        report["resource_cap_exceeded"] = True
        return report
    report["n_protons"] = len(protons)
    report["layers"] = [
        {"z": rec.z, "rho_2d": rec.rho_2d, "count": rec.count}
        for rec in layer_table(protons)
    ]
    report["lambda_fraction"] = _lambda_fraction(cfg, consts)
    dim = len(protons) + 1
    report["covariance_memory_mb"] = 16.0 * dim * dim / 1e6
    report["estimated_eigh_seconds"] = (dim / 3000.0) ** 3 * 8.0

    if cfg.scenario == "scan":
        field = FieldProfile(b0=cfg.physics.b0_gauss,
                             grad_lambda=cfg.physics.gradient_g_per_nm)
        if field.grad_lambda == 0:
            report["warnings"].append(
                "gradient is zero: layers are degenerate, expect a single dip"
            )
        elif len(layer_table(protons)) >= 2:
            rep = resolution_check(protons, field, consts)
            report["resolution_ratios"] = [float(r) for r in rep.ratios]
            report["resolution_passed"] = rep.passed
            if not rep.passed:
                report["warnings"].append(
                    "adjacent layers are not resolved at the 5x margin"
                )
    if cfg.scenario == "mixed":
        report["liquid_floor"] = cfg.liquid_floor()
    return report


def export_protons(cfg: ScenarioConfig, path) -> int:
    """Write the scenario's solid proton set in the columnar text format."""
    protons = build_solid_system(cfg)
    write_protons(protons, path)
    return len(protons)
