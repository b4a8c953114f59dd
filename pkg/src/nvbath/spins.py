"""Exact dense dynamics of the NV qubit plus N static spin-1/2 nuclei.

Serves as the validation oracle for the Gaussian engine: same flip-flop
couplings, full 2^(N+1) Hilbert space, practical up to N = 12. The
default Hamiltonian keeps only energy-conserving exchange so that any
disagreement with the bosonized engine isolates the bosonization error;
a non-RWA variant with the full transverse coupling is available for
documentation runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .couplings import CouplingSet
from .errors import ResourceLimitError
from .gaussian import InitialState, assemble_V, nv_population_unitary

_SP = np.array([[0.0, 1.0], [0.0, 0.0]])  # raises |down> -> |up>
_SM = _SP.T
_SZ = np.diag([0.5, -0.5])
_SX = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]])
_SY = 0.5 * np.array([[0.0, -1.0j], [1.0j, 0.0]])
_ID = np.eye(2)

DEFAULT_DIM_CAP = 2**13


def _site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-spin operator at ``site`` (0 = NV) in the chain."""
    out = np.array([[1.0 + 0.0j]])
    for k in range(n_sites):
        out = np.kron(out, op if k == site else _ID)
    return out


@dataclass
class SpinSystem:
    """NV + N nuclei with a dense Hamiltonian in rad/us."""

    n: int
    omega_rabi: float
    couplings: CouplingSet
    hamiltonian: np.ndarray

    @property
    def dim(self) -> int:
        return 2 ** (self.n + 1)


@dataclass
class BathEnsemble:
    """Computational-basis bath configurations with weights.

    states is an (M, N) 0/1 array, 1 meaning nuclear spin up
    (one excitation); weights sum to one.
    """

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("weights must sum to one")


def thermal_ensemble(n: int, max_states: int = 256, seed: int = 0) -> BathEnsemble:
    """Infinite-temperature bath: exact mixture for 2^n <= max_states,
    otherwise a uniform random subsample without replacement."""
    total = 2**n
    if total <= max_states:
        idx = np.arange(total)
        weights = np.full(total, 1.0 / total)
    else:
        rng = np.random.default_rng(seed)
        idx = rng.choice(total, size=max_states, replace=False)
        weights = np.full(max_states, 1.0 / max_states)
    states = ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(int)
    return BathEnsemble(states=states, weights=weights)


def build_spin_hamiltonian(
    couplings: CouplingSet,
    omega_rabi: float,
    rwa: bool = True,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> SpinSystem:
    """Dense Hamiltonian

    H = W Sz + sum_i w_i Iz_i + sum_i (g_i S+ I-_i + h.c.)
        + (1/8) sum_{i<j} h_ij (I+_i I-_j + h.c.)

    With rwa=False the NV-nuclear part is replaced by the full secular
    transverse form (Sx - 1/2) * (Ax Ix + Ay Iy + Az Iz) rebuilt from the
    couplings (Az recovered from the Larmor shifts), for documentation
    runs only.
    """
    n = len(couplings)
    dim = 2 ** (n + 1)
    if dim > dim_cap:
        raise ResourceLimitError(
            f"Hilbert dimension {dim} exceeds cap {dim_cap}"
        )
    sites = n + 1
    h = omega_rabi * _site_operator(_SZ, 0, sites)
    for i in range(n):
        h = h + couplings.omega[i] * _site_operator(_SZ, i + 1, sites)

    if rwa:
        sp0 = _site_operator(_SP, 0, sites)
        for i in range(n):
            im = _site_operator(_SM, i + 1, sites)
            term = couplings.g[i] * (sp0 @ im)
            h = h + term + term.conj().T
    else:
        sx0 = _site_operator(_SX, 0, sites) - 0.5 * np.eye(dim)
        for i in range(n):
            gi = couplings.g[i]
            ax, ay = 4.0 * gi.real, -4.0 * gi.imag
            h = h + sx0 @ (
                ax * _site_operator(_SX, i + 1, sites)
                + ay * _site_operator(_SY, i + 1, sites)
            )

    for i in range(n):
        for j in range(i + 1, n):
            hij = couplings.h[i, j]
            if hij == 0.0:
                continue
            term = (hij / 8.0) * (
                _site_operator(_SP, i + 1, sites)
                @ _site_operator(_SM, j + 1, sites)
            )
            h = h + term + term.conj().T

    return SpinSystem(n=n, omega_rabi=omega_rabi, couplings=couplings,
                      hamiltonian=h)


def _basis_index(nv_up: bool, bath_state: np.ndarray) -> int:
    """Index of |nv> x |b_1 ... b_N> with spin-up as the first basis
    state of each site and site 0 the leftmost kron factor."""
    bits = [0 if nv_up else 1] + [0 if b else 1 for b in bath_state]
    idx = 0
    for b in bits:
        idx = 2 * idx + b
    return idx


def evolve_exact(system: SpinSystem, bath: BathEnsemble, times) -> np.ndarray:
    """Bath-averaged NV population n(t) = 1/2 + <Sz>(t).

    One eigendecomposition of H; every bath configuration starts with
    the NV up and evolves in parallel.
    """
    times = np.asarray(times, dtype=float)
    lam, u = np.linalg.eigh(system.hamiltonian)
    sz_diag = np.real(np.diag(_site_operator(_SZ, 0, system.n + 1)))

    cols = np.array([_basis_index(True, b) for b in bath.states])
    amps0 = u.conj().T[:, cols]  # eigenbasis amplitudes per configuration
    out = np.empty(len(times), dtype=float)
    for k, t in enumerate(times):
        psi = u @ (np.exp(-1j * lam * t)[:, None] * amps0)
        probs = np.abs(psi) ** 2
        sz = sz_diag @ probs
        out[k] = 0.5 + float(sz @ bath.weights)
    return out


def compare_hpa(
    system: SpinSystem,
    bath: BathEnsemble,
    times,
    eps: float = 1.0,
) -> float:
    """Max relative deviation between the Gaussian and exact engines.

    Deviation is |n_hpa - n_exact| / (n_exact - 1/2 + eps). The default
    eps = 1.0 keeps the denominator at the full population scale, so
    the measure is a conservative fraction of the 0..1 range and stays
    finite when the exchange completes.
    """
    n_exact = evolve_exact(system, bath, times)
    v = assemble_V(system.couplings, system.omega_rabi)
    n_hpa = nv_population_unitary(v, times, InitialState())
    denom = n_exact - 0.5 + eps
    return float(np.max(np.abs(n_hpa - n_exact) / denom))
