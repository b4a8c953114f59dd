"""Stochastic hyperfine fluctuations from diffusing water protons.

Protons perform reflected Brownian motion in a box above the diamond
surface; the NV sits a distance z_floor below the liquid. Sampling the
dipolar field components along the trajectories yields autocorrelation
functions whose cosine transforms are the depolarization rates

    gamma_beta(w, t) = int_0^t <A_beta(tau) A_beta(0)> cos(w tau) dtau,

and the NV population obeys dn/dt + alpha(t) n = alpha(t)/2 with
alpha = (N/4) [gamma_x(Delta) + gamma_x(2 Omega - Delta) + gamma_z(Omega)].

The per-proton variance scales as 1/V while N = rho_w * V, so the
product entering alpha is independent of the sampling volume once the
box is large enough (boundary contributions to <A^2> below a few
percent for the default 8 z0 x 8 z0 x 4 z0 box).

The correlation time scales as z_floor^2 / D; defaults for step size,
burn-in and lag windows derive from that estimate so parameter sweeps
stay self-similar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .constants import PhysicalConstants
from .couplings import hyperfine_field
from .errors import NumericalError

TAU_C_PREFACTOR = 0.45  # tau_c ~ 0.45 z^2 / D, used only for grid defaults


@dataclass(frozen=True)
class DiffusionModel:
    """Uniform or interface-softened diffusion coefficient (nm^2/us).

    The interface profile is the sigmoid
    D(z) = d_min + (d_w - d_min) / (1 + exp(-2 kappa (z - z_prime))).
    """

    kind: str = "uniform"
    d_w: float = 2.0e3
    d_min: float | None = None
    kappa: float | None = None
    z_prime: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "interface"):
            raise ValueError(f"unknown diffusion kind {self.kind!r}")
        if self.d_w <= 0:
            raise ValueError("d_w must be positive")
        if self.kind == "interface":
            if self.d_min is None or self.kappa is None or self.z_prime is None:
                raise ValueError("interface model needs d_min, kappa, z_prime")
            if not 0 < self.d_min <= self.d_w:
                raise ValueError("need 0 < d_min <= d_w")
            if self.kappa <= 0:
                raise ValueError("kappa must be positive")


def interface_diffusion(z, model: DiffusionModel):
    """D(z) for the interface model; rejects uniform models."""
    if model.kind != "interface":
        raise ValueError("interface_diffusion requires an interface-kind model")
    z = np.asarray(z, dtype=float)
    return model.d_min + (model.d_w - model.d_min) / (
        1.0 + np.exp(-2.0 * model.kappa * (z - model.z_prime))
    )


def _interface_diffusion_gradient(z, model: DiffusionModel):
    s = 1.0 / (1.0 + np.exp(-2.0 * model.kappa * (z - model.z_prime)))
    return (model.d_w - model.d_min) * 2.0 * model.kappa * s * (1.0 - s)


@dataclass(frozen=True)
class SimulationBox:
    """Reflecting box: |x|,|y| <= half_width, floor <= z <= floor+height."""

    floor: float
    half_width: float
    height: float

    def __post_init__(self):
        if self.floor <= 0 or self.half_width <= 0 or self.height <= 0:
            raise ValueError("box dimensions must be positive")

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** 2 * self.height


def default_box(z_floor: float) -> SimulationBox:
    return SimulationBox(floor=z_floor, half_width=4.0 * z_floor,
                         height=4.0 * z_floor)


def _fold(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Exact reflection of coordinates into [lo, hi]."""
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


@dataclass
class TrajectoryEnsemble:
    """Lazy, seed-reproducible ensemble of reflected Brownian paths.

    Positions are regenerated on demand from per-trajectory RNG streams
    spawned from (seed, trajectory index), so iteration order and chunk
    size never change the statistics.
    """

    model: DiffusionModel
    box: SimulationBox
    n_traj: int
    dt: float
    n_steps: int
    seed: int
    chunk_size: int = 256
    meta: dict = field(default_factory=dict)

    @property
    def t_total(self) -> float:
        return self.n_steps * self.dt

    def _streams(self, lo: int, hi: int):
        root = np.random.SeedSequence(self.seed)
        children = root.spawn(self.n_traj)
        return [np.random.default_rng(children[k]) for k in range(lo, hi)]

    def _chunk_paths(self, lo: int, hi: int) -> np.ndarray:
        m = hi - lo
        rngs = self._streams(lo, hi)
        starts = np.empty((m, 3))
        steps = np.empty((m, self.n_steps, 3))
        for k, rng in enumerate(rngs):
            starts[k, 0] = rng.uniform(-self.box.half_width, self.box.half_width)
            starts[k, 1] = rng.uniform(-self.box.half_width, self.box.half_width)
            starts[k, 2] = rng.uniform(self.box.floor,
                                       self.box.floor + self.box.height)
            steps[k] = rng.standard_normal((self.n_steps, 3))

        pos = np.empty((m, self.n_steps + 1, 3))
        pos[:, 0, :] = starts
        if self.model.kind == "uniform":
            sigma = np.sqrt(2.0 * self.model.d_w * self.dt)
            raw = starts[:, None, :] + np.cumsum(sigma * steps, axis=1)
            pos[:, 1:, :] = raw
        else:
            cur = starts.copy()
            for k in range(self.n_steps):
                d = interface_diffusion(cur[:, 2], self.model)
                sig = np.sqrt(2.0 * d * self.dt)
                nxt = cur + sig[:, None] * steps[:, k, :]
                # drift keeps the uniform density stationary for D(z)
                nxt[:, 2] += _interface_diffusion_gradient(cur[:, 2],
                                                           self.model) * self.dt
                nxt[:, 2] = _fold(nxt[:, 2], self.box.floor,
                                  self.box.floor + self.box.height)
                pos[:, k + 1, :] = nxt
                cur = nxt
        pos[:, :, 0] = _fold(pos[:, :, 0], -self.box.half_width,
                             self.box.half_width)
        pos[:, :, 1] = _fold(pos[:, :, 1], -self.box.half_width,
                             self.box.half_width)
        pos[:, :, 2] = _fold(pos[:, :, 2], self.box.floor,
                             self.box.floor + self.box.height)
        return pos

    def iter_chunks(self) -> Iterator[tuple[int, np.ndarray]]:
        for lo in range(0, self.n_traj, self.chunk_size):
            hi = min(lo + self.chunk_size, self.n_traj)
            yield lo, self._chunk_paths(lo, hi)


def simulate_trajectories(
    model: DiffusionModel,
    box: SimulationBox,
    n_traj: int,
    dt: float,
    t_total: float,
    seed: int,
    chunk_size: int = 256,
) -> TrajectoryEnsemble:
    """Build a reproducible trajectory ensemble (validated, lazy)."""
    if dt <= 0 or t_total <= 0:
        raise ValueError("dt and t_total must be positive")
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    tau_c_prior = TAU_C_PREFACTOR * box.floor**2 / model.d_w
    if dt > tau_c_prior / 5.0:
        raise ValueError(
            f"dt {dt:g} too coarse for estimated correlation time "
            f"{tau_c_prior:g}"
        )
    n_steps = int(np.ceil(t_total / dt))
    return TrajectoryEnsemble(
        model=model, box=box, n_traj=n_traj, dt=dt, n_steps=n_steps,
        seed=seed, chunk_size=chunk_size,
        meta={"tau_c_prior": tau_c_prior},
    )


@dataclass
class CorrelationFunction:
    """Sampled autocorrelation of one hyperfine component.

    values[k] ~ <A_beta(lags[k]) A_beta(0)> in (rad/us)^2; values[0] is
    the variance. tau_c is the fitted exponential decay time.
    """

    component: str
    lags: np.ndarray
    values: np.ndarray
    n_trajectories: int
    tau_c: float
    variance: float
    stderr: np.ndarray
    decayed: bool = True

    @property
    def dt_lag(self) -> float:
        return float(self.lags[1] - self.lags[0])


def autocorrelation(series: np.ndarray, n_lags: int) -> np.ndarray:
    """Unbiased per-row autocorrelation over lags 0..n_lags (FFT based)."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    m, t = series.shape
    if n_lags >= t:
        raise ValueError("n_lags must be < series length")
    nfft = 1
    while nfft < t + n_lags + 1:
        nfft *= 2
    f = np.fft.rfft(series, nfft, axis=1)
    raw = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, : n_lags + 1]
    norm = t - np.arange(n_lags + 1)
    return raw / norm[None, :]


def fit_correlation_time(lags: np.ndarray, values: np.ndarray) -> float:
    """Exponential fit c0 exp(-tau/tau_c) over the initial decay."""
    c0 = values[0]
    if c0 <= 0:
        raise NumericalError("non-positive variance, cannot fit tau_c")
    norm = values / c0
    below = np.nonzero(norm < np.exp(-1.0))[0]
    tau_guess = lags[below[0]] if len(below) else lags[-1] / 3.0
    cut = np.searchsorted(lags, 5.0 * tau_guess)
    cut = int(np.clip(cut, 4, len(lags)))
    try:
        popt, _ = curve_fit(
            lambda x, a, tc: a * np.exp(-x / tc),
            lags[:cut],
            norm[:cut],
            p0=(1.0, max(tau_guess, lags[1])),
            maxfev=10000,
        )
        tau_c = float(popt[1])
    except Exception as exc:  # pragma: no cover - fit pathologies
        raise NumericalError(f"correlation-time fit failed: {exc}") from exc
    if tau_c <= 0:
        raise NumericalError("fitted tau_c is non-positive")
    return tau_c


def estimate_correlations(
    ensemble: TrajectoryEnsemble,
    consts: PhysicalConstants,
    components: Sequence[str] = ("x", "z"),
    max_lag: float | None = None,
    burn: float | None = None,
) -> dict[str, CorrelationFunction]:
    """Trajectory-averaged hyperfine autocorrelations, one pass.

    Component "x" averages the two transverse components (statistically
    identical by axial symmetry, half the variance of either alone);
    "z" uses the axial component with its ensemble mean removed, so the
    zero-lag value is the variance in both cases. Burn-in (default 10
    estimated correlation times) is discarded before averaging.
    """
    for comp in components:
        if comp not in ("x", "z"):
            raise ValueError("components must be 'x' or 'z'")
    tau_prior = ensemble.meta.get(
        "tau_c_prior",
        TAU_C_PREFACTOR * ensemble.box.floor**2 / ensemble.model.d_w,
    )
    if burn is None:
        burn = 10.0 * tau_prior
    if max_lag is None:
        max_lag = 24.0 * tau_prior
    burn_steps = int(np.ceil(burn / ensemble.dt))
    n_lags = int(np.round(max_lag / ensemble.dt))
    usable = ensemble.n_steps + 1 - burn_steps
    if n_lags < 4 or usable < 4 * n_lags:
        raise ValueError(
            "too few samples for the requested lag grid; extend t_total "
            "or reduce max_lag"
        )

    sums = {c: np.zeros(n_lags + 1) for c in components}
    sums_sq = {c: np.zeros(n_lags + 1) for c in components}
    sum_mean_z = 0.0
    n_done = 0
    for _, chunk in ensemble.iter_chunks():
        pts = chunk[:, burn_steps:, :]
        m, t, _ = pts.shape
        a = hyperfine_field(pts.reshape(-1, 3), consts).reshape(m, t, 3)
        for comp in components:
            if comp == "x":
                # transverse means vanish by axial symmetry
                rows = 0.5 * (
                    autocorrelation(a[:, :, 0], n_lags)
                    + autocorrelation(a[:, :, 1], n_lags)
                )
            else:
                rows = autocorrelation(a[:, :, 2], n_lags)
                sum_mean_z += float(np.sum(np.mean(a[:, :, 2], axis=1)))
            sums[comp] += rows.sum(axis=0)
            sums_sq[comp] += (rows**2).sum(axis=0)
        n_done += m

    lags = np.arange(n_lags + 1) * ensemble.dt
    out = {}
    for comp in components:
        corr = sums[comp] / n_done
        if comp == "z":
            corr = corr - (sum_mean_z / n_done) ** 2
        var_rows = sums_sq[comp] / n_done - (sums[comp] / n_done) ** 2
        stderr = np.sqrt(np.clip(var_rows, 0.0, None) / n_done)
        tau_c = fit_correlation_time(lags, corr)
        out[comp] = CorrelationFunction(
            component=comp,
            lags=lags,
            values=corr,
            n_trajectories=n_done,
            tau_c=tau_c,
            variance=float(corr[0]),
            stderr=stderr,
            decayed=bool(abs(corr[-1]) < 0.05 * corr[0]),
        )
    return out


def estimate_correlation(
    ensemble: TrajectoryEnsemble,
    component: str,
    consts: PhysicalConstants,
    max_lag: float | None = None,
    burn: float | None = None,
) -> CorrelationFunction:
    """Single-component autocorrelation (see estimate_correlations)."""
    return estimate_correlations(
        ensemble, consts, components=(component,), max_lag=max_lag, burn=burn
    )[component]


def _fitted_tail(corr: CorrelationFunction):
    """Amplitude of the fitted exponential at the last sampled lag."""
    t_last = corr.lags[-1]
    return corr.variance * np.exp(-t_last / corr.tau_c), t_last


def _check_alias(corr: CorrelationFunction, omega: float) -> None:
    limit = np.pi / corr.dt_lag
    if abs(omega) > limit:
        raise NumericalError(
            f"omega {omega:g} beyond the lag-grid Nyquist limit {limit:g}"
        )


def rate_gamma(corr: CorrelationFunction, omega: float,
               t: float | None = None) -> float:
    """Cosine transform of the correlation up to time t.

    t = None takes the Markov limit: trapezoidal quadrature over the
    sampled lags plus the analytic tail of the fitted exponential.
    """
    _check_alias(corr, omega)
    kernel = corr.values * np.cos(omega * corr.lags)
    if t is None:
        base = np.trapezoid(kernel, corr.lags)
        amp, t_last = _fitted_tail(corr)
        tc = corr.tau_c
        tail = amp * tc * (
            np.cos(omega * t_last) - omega * tc * np.sin(omega * t_last)
        ) / (1.0 + (omega * tc) ** 2)
        return float(base + tail)
    if t < 0 or t > corr.lags[-1] + 1e-12:
        raise ValueError("t beyond the sampled lag range; use the Markov limit")
    k = np.searchsorted(corr.lags, t, side="right")
    return float(np.trapezoid(kernel[:k], corr.lags[:k]))


def shift_omega(corr: CorrelationFunction, omega: float,
                t: float | None = None) -> float:
    """Sine-kernel companion of rate_gamma (level-shift integral)."""
    _check_alias(corr, omega)
    kernel = corr.values * np.sin(omega * corr.lags)
    if t is None:
        base = np.trapezoid(kernel, corr.lags)
        amp, t_last = _fitted_tail(corr)
        tc = corr.tau_c
        tail = amp * tc * (
            np.sin(omega * t_last) + omega * tc * np.cos(omega * t_last)
        ) / (1.0 + (omega * tc) ** 2)
        return float(base + tail)
    if t < 0 or t > corr.lags[-1] + 1e-12:
        raise ValueError("t beyond the sampled lag range; use the Markov limit")
    k = np.searchsorted(corr.lags, t, side="right")
    return float(np.trapezoid(kernel[:k], corr.lags[:k]))


@dataclass
class RateTable:
    """Depolarization rates and shifts at the driving frequencies."""

    omega_rabi: float
    delta: float
    gamma_x_delta: float
    gamma_x_mirror: float
    gamma_z_omega: float
    shift_x: float
    shift_z: float
    alpha_markov: float
    n_eff: float
    tau_c_x: float
    tau_c_z: float
    alpha_times: np.ndarray | None = None
    alpha_values: np.ndarray | None = None


def depolarization_alpha(
    gamma_x_delta: float,
    gamma_x_mirror: float,
    gamma_z_omega: float,
    n_eff: float,
) -> float:
    """alpha = (N/4)(gamma_x(Delta) + gamma_x(2W-Delta) + gamma_z(W))."""
    if n_eff <= 0:
        raise ValueError("n_eff must be positive")
    return 0.25 * n_eff * (gamma_x_delta + gamma_x_mirror + gamma_z_omega)


def build_rate_table(
    corr_x: CorrelationFunction,
    corr_z: CorrelationFunction,
    omega_rabi: float,
    delta: float,
    n_eff: float,
    alpha_times: np.ndarray | None = None,
) -> RateTable:
    """Markov rates, shifts and alpha; optionally alpha(t) on a grid."""
    gx_d = rate_gamma(corr_x, delta)
    gx_m = rate_gamma(corr_x, 2.0 * omega_rabi - delta)
    gz = rate_gamma(corr_z, omega_rabi)
    table = RateTable(
        omega_rabi=omega_rabi,
        delta=delta,
        gamma_x_delta=gx_d,
        gamma_x_mirror=gx_m,
        gamma_z_omega=gz,
        shift_x=shift_omega(corr_x, delta),
        shift_z=shift_omega(corr_z, omega_rabi),
        alpha_markov=depolarization_alpha(gx_d, gx_m, gz, n_eff),
        n_eff=n_eff,
        tau_c_x=corr_x.tau_c,
        tau_c_z=corr_z.tau_c,
    )
    if alpha_times is not None:
        alpha_times = np.asarray(alpha_times, dtype=float)
        vals = np.empty_like(alpha_times)
        t_max = corr_x.lags[-1]
        for k, t in enumerate(alpha_times):
            if t >= t_max:
                vals[k] = table.alpha_markov
            else:
                vals[k] = depolarization_alpha(
                    rate_gamma(corr_x, delta, t),
                    rate_gamma(corr_x, 2.0 * omega_rabi - delta, t),
                    rate_gamma(corr_z, omega_rabi, t),
                    n_eff,
                )
        table.alpha_times = alpha_times
        table.alpha_values = vals
    return table


def populate_liquid(alpha, n0: float, times) -> np.ndarray:
    """NV population under dn/dt + alpha n = alpha/2.

    alpha may be a constant rate (closed form), a callable of time, or
    a (t_grid, values) pair; time-dependent rates integrate the exact
    exponent by cumulative trapezoid on a refined grid.
    """
    if not 0.0 <= n0 <= 1.0:
        raise ValueError("n0 must lie in [0, 1]")
    times = np.asarray(times, dtype=float)
    if np.isscalar(alpha) or isinstance(alpha, float):
        a = float(alpha)
        if a < 0:
            raise ValueError("alpha must be >= 0")
        return 0.5 + (n0 - 0.5) * np.exp(-a * times)

    if callable(alpha):
        grid = np.linspace(times[0], times[-1], max(4 * len(times), 400))
        vals = np.asarray([alpha(t) for t in grid], dtype=float)
    else:
        grid, vals = (np.asarray(alpha[0], dtype=float),
                      np.asarray(alpha[1], dtype=float))
    if np.any(vals < 0):
        raise ValueError("alpha must be >= 0")
    cumulative = np.concatenate(
        [[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))]
    )
    expo = np.interp(times, grid, cumulative)
    return 0.5 + (n0 - 0.5) * np.exp(-expo)


def mean_square_displacement(ensemble: TrajectoryEnsemble,
                             max_chunks: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """MSD(t) from the first chunks, for diffusion regression tests."""
    acc = None
    n = 0
    for ci, (_, chunk) in enumerate(ensemble.iter_chunks()):
        disp = chunk - chunk[:, :1, :]
        sq = np.sum(disp**2, axis=2)
        acc = sq.sum(axis=0) if acc is None else acc + sq.sum(axis=0)
        n += chunk.shape[0]
        if ci + 1 >= max_chunks:
            break
    t = np.arange(ensemble.n_steps + 1) * ensemble.dt
    return t, acc / n


def write_correlation_csv(path, corr: CorrelationFunction) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tau,value\n")
        for tau, val in zip(corr.lags, corr.values):
            fh.write(f"{tau:.12g},{val:.12g}\n")


def write_rates_csv(path, table: RateTable) -> None:
    """One row per named rate/shift: quantity, omega, value."""
    rows = [
        ("gamma_x_delta", table.delta, table.gamma_x_delta),
        ("gamma_x_mirror", 2.0 * table.omega_rabi - table.delta,
         table.gamma_x_mirror),
        ("gamma_z_omega", table.omega_rabi, table.gamma_z_omega),
        ("shift_x", table.delta, table.shift_x),
        ("shift_z", table.omega_rabi, table.shift_z),
        ("alpha_markov", 0.0, table.alpha_markov),
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("quantity,omega,value\n")
        for name, omega, val in rows:
            fh.write(f"{name},{omega:.12g},{val:.12g}\n")
