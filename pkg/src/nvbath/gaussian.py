"""Gaussian engine for the bosonized NV + bath system.

After the Holstein-Primakoff mapping (spin raising -> boson creation,
valid near full polarization and adequate for thermal spin-1/2 baths)
the system is quadratic,

    H = W a0+ a0 + sum_i w_i ai+ ai + sum_i (g_i a0+ ai + h.c.)
        + (1/8) sum_{i<j} h_ij (ai+ aj + h.c.),

mode 0 being the NV. The state is fully described by the covariance
matrix gamma with occupations on the diagonal; NV population reads
n = gamma[0, 0]. Closed evolution conjugates gamma with exp(-iVt)
obtained from one eigendecomposition of the Hermitian mode matrix V.
Liquid-induced NV depolarization at rate alpha(t) adds

    d(gamma)/dt += -(alpha/2) {P0, gamma} + (alpha/2) P0,

where P0 projects on the NV mode; with V = 0 this reproduces
n(t) = 1/2 + (n(0) - 1/2) exp(-alpha t) exactly.

For the product initial state (NV occupation n0, every bath mode at
occupation 1/2, no coherences) the dynamics reduces to a single-mode
amplitude, which the nv_population_* fast paths exploit; they stay
numerically identical to the dense propagators and let slabs with
thousands of protons run in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .couplings import CouplingSet
from .errors import NumericalError

HERMITICITY_TOL = 1e-9
_DENSE_AMPLITUDE_LIMIT = 1200


@dataclass(frozen=True)
class InitialState:
    """Product initial state: polarized NV over a thermal bath."""

    nv_occupation: float = 1.0
    bath_occupation: float = 0.5

    def covariance(self, n_modes: int) -> np.ndarray:
        diag = np.full(n_modes, self.bath_occupation, dtype=complex)
        diag[0] = self.nv_occupation
        return np.diag(diag)


def assemble_V(couplings: CouplingSet, omega_rabi: float) -> np.ndarray:
    """Hermitian mode matrix: V[0,0]=Rabi, V[0,i]=g_i, bath block
    diag(omega) + h/8."""
    n = len(couplings)
    vals = [omega_rabi, couplings.g, couplings.h, couplings.omega]
    for v in vals:
        if not np.all(np.isfinite(np.atleast_1d(v))):
            raise ValueError("non-finite coupling input")
    v = np.zeros((n + 1, n + 1), dtype=complex)
    v[0, 0] = omega_rabi
    v[0, 1:] = couplings.g
    v[1:, 0] = np.conj(couplings.g)
    bath = couplings.h / 8.0 + np.diag(couplings.omega)
    v[1:, 1:] = bath
    return v


def _require_hermitian(v: np.ndarray, tol: float = 1e-10) -> None:
    drift = np.max(np.abs(v - v.conj().T)) if v.size else 0.0
    if drift > tol:
        raise NumericalError(f"matrix is not Hermitian (drift {drift:.3e})")


def nv_population(gamma: np.ndarray) -> float:
    """NV occupation, the (0, 0) covariance entry."""
    return float(np.real(gamma[0, 0]))


def propagate_unitary(v: np.ndarray, gamma0: np.ndarray, times) -> np.ndarray:
    """Closed-system covariance series gamma(t) = e^{-iVt} gamma0 e^{iVt}.

    One eigendecomposition of V, exact conjugation at each output time.
    Returns an array of shape (len(times), N+1, N+1).
    """
    _require_hermitian(v)
    times = np.asarray(times, dtype=float)
    lam, u = np.linalg.eigh(v)
    m = u.conj().T @ gamma0 @ u
    out = np.empty((len(times), *v.shape), dtype=complex)
    for k, t in enumerate(times):
        phase = np.exp(-1j * lam * t)
        core = (phase[:, None] * m) * np.conj(phase)[None, :]
        out[k] = u @ core @ u.conj().T
    return out


def _amplitude_series_dense(v: np.ndarray, times: np.ndarray) -> np.ndarray:
    lam, u = np.linalg.eigh(v)
    w0 = np.abs(u[0, :]) ** 2
    return np.exp(-1j * np.outer(times, lam)) @ w0


def _amplitude_series_arrowhead(v: np.ndarray, times: np.ndarray) -> np.ndarray:
    """NV return amplitude via one bath-block eigendecomposition plus
    sparse exponentials of the resulting arrowhead matrix."""
    n = v.shape[0] - 1
    bath = v[1:, 1:]
    if np.max(np.abs(bath.imag)) < 1e-14:
        mu, w = sla.eigh(np.ascontiguousarray(bath.real))
    else:
        mu, w = sla.eigh(bath)
    g_t = v[0, 1:] @ w
    shift = float(np.real(v[0, 0]))
    a = _arrowhead_sparse(0.0, mu - shift, g_t)
    psi = np.zeros(n + 1, dtype=complex)
    psi[0] = 1.0
    out = np.empty(len(times), dtype=complex)
    t_prev = 0.0
    times = np.asarray(times, dtype=float)
    for k, t in enumerate(times):
        dt = t - t_prev
        if dt != 0.0:
            psi = expm_multiply((-1j * dt) * a, psi)
        out[k] = psi[0]
        t_prev = t
    # undo the diagonal shift used for conditioning
    return out * np.exp(-1j * shift * times)


def _arrowhead_sparse(v00: float, mu: np.ndarray, g_t: np.ndarray) -> sp.csr_matrix:
    n = len(mu)
    rows = np.concatenate([np.zeros(n, dtype=int), np.arange(1, n + 1),
                           np.arange(n + 1)])
    cols = np.concatenate([np.arange(1, n + 1), np.zeros(n, dtype=int),
                           np.arange(n + 1)])
    data = np.concatenate([g_t, np.conj(g_t),
                           np.concatenate([[v00], mu])]).astype(complex)
    return sp.csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))


def nv_return_amplitude(v: np.ndarray, times, engine: str = "auto") -> np.ndarray:
    """<0| e^{-iVt} |0> on the given time grid (monotone nondecreasing).

    engine "dense" diagonalizes the full mode matrix; "arrowhead"
    diagonalizes only the bath block and steps a sparse bordered matrix,
    which is the economical route for thousands of modes. "auto" picks
    by size; the two agree to machine precision.
    """
    _require_hermitian(v)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be nondecreasing")
    if engine not in ("auto", "dense", "arrowhead"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "dense" or (
        engine == "auto" and v.shape[0] <= _DENSE_AMPLITUDE_LIMIT
    ):
        return _amplitude_series_dense(v, times)
    return _amplitude_series_arrowhead(v, times)


def nv_population_unitary(
    v: np.ndarray, times, initial: InitialState = InitialState(),
    engine: str = "auto",
) -> np.ndarray:
    """n(t) under closed evolution for the product initial state.

    For gamma0 = nB*I + (n0-nB)|0><0| the covariance stays in that
    family, giving n(t) = nB + (n0-nB) |<0|e^{-iVt}|0>|^2. Identical to
    reading gamma[0,0] from propagate_unitary, at single-mode cost.
    """
    x = nv_return_amplitude(v, times, engine=engine)
    n0, nb = initial.nv_occupation, initial.bath_occupation
    return nb + (n0 - nb) * np.abs(x) ** 2


def _alpha_callable(alpha):
    if callable(alpha):
        return alpha
    val = float(alpha)
    if val < 0:
        raise ValueError("alpha must be >= 0")
    return lambda t: val


def propagate_dissipative(
    v: np.ndarray,
    gamma0: np.ndarray,
    alpha,
    times,
    dt: float | None = None,
    hermiticity_tol: float = 1e-6,
) -> np.ndarray:
    """Covariance series under unitary evolution plus NV depolarization.

    Integrates d(gamma)/dt = -i[V, gamma] - (alpha(t)/2){P0, gamma}
    + (alpha(t)/2) P0 with classical RK4 at fixed step, projecting onto
    the Hermitian part after each step. ``alpha`` is a rate (1/us) or a
    callable of time. Steps are rejected if the pre-projection
    Hermiticity drift exceeds ``hermiticity_tol``.
    """
    _require_hermitian(v)
    times = np.asarray(times, dtype=float)
    afun = _alpha_callable(alpha)

    norm_v = np.linalg.norm(v - np.mean(np.diag(v)).real * np.eye(v.shape[0]), 2)
    alpha_max = max(float(np.max([afun(t) for t in times])), 1e-30)
    if dt is None:
        dt = min(0.01 / max(norm_v, 1e-12), 0.01 / alpha_max)
        dt = min(dt, (times[-1] - times[0]) / max(len(times) - 1, 1) or dt)
    if dt <= 0:
        raise ValueError("dt must be positive")

    def rhs(t, g):
        comm = v @ g - g @ v
        out = -1j * comm
        a = afun(t)
        if a:
            out[0, :] -= 0.5 * a * g[0, :]
            out[:, 0] -= 0.5 * a * g[:, 0]
            out[0, 0] += 0.5 * a
        return out

    gamma = np.array(gamma0, dtype=complex)
    out = np.empty((len(times), *gamma.shape), dtype=complex)
    t = float(times[0])
    out[0] = gamma
    for k in range(1, len(times)):
        target = float(times[k])
        while t < target - 1e-15:
            step = min(dt, target - t)
            k1 = rhs(t, gamma)
            k2 = rhs(t + step / 2, gamma + step / 2 * k1)
            k3 = rhs(t + step / 2, gamma + step / 2 * k2)
            k4 = rhs(t + step, gamma + step * k3)
            gamma = gamma + (step / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            drift = np.max(np.abs(gamma - gamma.conj().T))
            if drift > hermiticity_tol:
                raise NumericalError(
                    f"Hermiticity drift {drift:.3e} exceeds tolerance; "
                    "reduce dt"
                )
            gamma = 0.5 * (gamma + gamma.conj().T)
            t += step
        out[k] = gamma
    return out


def nv_population_dissipative(
    v: np.ndarray,
    alpha,
    times,
    initial: InitialState = InitialState(),
    dt: float | None = None,
) -> np.ndarray:
    """n(t) with NV depolarization for the standard product initial state.

    Requires bath occupation 1/2 (the depolarization fixed point), for
    which gamma(t) = I/2 + c phi(t) phi(t)+ stays rank-one around the
    fixed point and a single mode vector phi evolves under the
    non-Hermitian generator V - i alpha(t)/2 |0><0|.
    """
    if abs(initial.bath_occupation - 0.5) > 1e-12:
        raise ValueError("fast path requires bath occupation 1/2")
    _require_hermitian(v)
    times = np.asarray(times, dtype=float)
    afun = _alpha_callable(alpha)

    dim = v.shape[0]
    shift = float(np.mean(np.real(np.diag(v))))
    v_s = v - shift * np.eye(dim)
    norm_v = np.linalg.norm(v_s, 2)
    if dt is None:
        dt = 0.02 / max(norm_v, 1e-6)

    def rhs(t, phi):
        out = -1j * (v_s @ phi)
        out[0] -= 0.5 * afun(t) * phi[0]
        return out

    phi = np.zeros(dim, dtype=complex)
    phi[0] = 1.0
    out = np.empty(len(times), dtype=float)
    t = float(times[0])
    amp = initial.nv_occupation - 0.5
    out[0] = 0.5 + amp * np.abs(phi[0]) ** 2
    for k in range(1, len(times)):
        target = float(times[k])
        while t < target - 1e-15:
            step = min(dt, target - t)
            k1 = rhs(t, phi)
            k2 = rhs(t + step / 2, phi + step / 2 * k1)
            k3 = rhs(t + step / 2, phi + step / 2 * k2)
            k4 = rhs(t + step, phi + step * k3)
            phi = phi + (step / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += step
        out[k] = 0.5 + amp * np.abs(phi[0]) ** 2
    return out


def hermiticity_drift(series: np.ndarray) -> float:
    """Largest |gamma - gamma^dagger| entry across a covariance series."""
    return float(
        max(np.max(np.abs(g - g.conj().T)) for g in np.atleast_3d(series))
    )


def write_population_csv(path, times, populations) -> None:
    """CSV export `t,n` with 12 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,n\n")
        for t, n in zip(times, populations):
            fh.write(f"{t:.12g},{n:.12g}\n")


def write_covariance_snapshot(path, gamma: np.ndarray, time: float) -> None:
    """Binary dump: int64 dimension, float64 time, then row-major
    complex128 entries."""
    with open(path, "wb") as fh:
        np.asarray([gamma.shape[0]], dtype=np.int64).tofile(fh)
        np.asarray([time], dtype=np.float64).tofile(fh)
        np.ascontiguousarray(gamma, dtype=np.complex128).tofile(fh)


def read_covariance_snapshot(path):
    with open(path, "rb") as fh:
        dim = int(np.fromfile(fh, dtype=np.int64, count=1)[0])
        time = float(np.fromfile(fh, dtype=np.float64, count=1)[0])
        gamma = np.fromfile(fh, dtype=np.complex128, count=dim * dim)
    return gamma.reshape(dim, dim), time
