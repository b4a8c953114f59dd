"""Dipolar couplings between the driven NV qubit and proton spins.

The NV quantization axis is +z. For a proton at r = (x, y, z) the
secular point-dipole hyperfine components are

    A_z = C (1 - 3 z^2/r^2) / r^3
    A_x = 3 C z x / r^5,   A_y = 3 C z y / r^5

with C the electron-proton dipolar prefactor at 1 nm. The transverse
magnitude is 3 C |z| sqrt(x^2+y^2) / r^5 and the phase follows
atan2(y, x). Under Hartmann-Hahn driving the exchange coupling is the
complex g = (1/4)(A_x - i A_y); only relative phases among the g_i are
observable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import PhysicalConstants
from .lattice import ProtonSet


@dataclass(frozen=True)
class HyperfineVector:
    """Secular dipolar field components (rad/us)."""

    a_x: float
    a_y: float
    a_z: float

    @property
    def transverse(self) -> float:
        return float(np.hypot(self.a_x, self.a_y))


@dataclass(frozen=True)
class FieldProfile:
    """Static field B0 (G) plus an optional linear gradient dB/dz (G/nm)."""

    b0: float
    grad_lambda: float = 0.0

    def __post_init__(self):
        if self.b0 <= 0:
            raise ValueError("b0 must be positive")
        if self.grad_lambda < 0:
            raise ValueError("grad_lambda must be >= 0")


@dataclass
class CouplingSet:
    """All dipolar quantities of an NV + N proton system.

    g : complex NV-proton exchange couplings (rad/us)
    h : symmetric proton-proton coupling matrix, zero diagonal (rad/us)
    omega : per-proton Larmor frequencies (rad/us)
    """

    g: np.ndarray
    h: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=complex).reshape(-1)
        self.omega = np.asarray(self.omega, dtype=float).reshape(-1)
        self.h = np.asarray(self.h, dtype=float)
        n = len(self.g)
        if self.h.shape != (n, n):
            raise ValueError("h must be (N, N)")
        if len(self.omega) != n:
            raise ValueError("omega length mismatch")

    def __len__(self) -> int:
        return len(self.g)


def hyperfine_field(positions: np.ndarray, consts: PhysicalConstants) -> np.ndarray:
    """Vectorized hyperfine components for an (N, 3) position array.

    Returns an (N, 3) array of (A_x, A_y, A_z) in rad/us.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    r2 = np.einsum("ij,ij->i", pos, pos)
    if np.any(r2 <= 0.0):
        raise ValueError("proton at the NV origin (dipolar singularity)")
    r5 = r2 ** 2.5
    out = np.empty_like(pos)
    out[:, 0] = 3.0 * consts.c_en * pos[:, 2] * pos[:, 0] / r5
    out[:, 1] = 3.0 * consts.c_en * pos[:, 2] * pos[:, 1] / r5
    out[:, 2] = consts.c_en * (1.0 - 3.0 * pos[:, 2] ** 2 / r2) / r2 ** 1.5
    return out


def hyperfine_vector(r, consts: PhysicalConstants) -> HyperfineVector:
    """Hyperfine components for a single position (3-vector, nm)."""
    a = hyperfine_field(np.asarray(r, dtype=float).reshape(1, 3), consts)[0]
    return HyperfineVector(a_x=float(a[0]), a_y=float(a[1]), a_z=float(a[2]))


def nv_couplings(protons, consts: PhysicalConstants) -> np.ndarray:
    """Complex exchange couplings g_i = (1/4)(A_x - i A_y) per proton.

    Accepts a ProtonSet or a raw (N, 3) position array.
    """
    pos = protons.positions if isinstance(protons, ProtonSet) else protons
    a = hyperfine_field(pos, consts)
    return 0.25 * consts.transverse_scale * (a[:, 0] - 1j * a[:, 1])


def internuclear_couplings(protons, consts: PhysicalConstants) -> np.ndarray:
    """Secular proton-proton flip-flop strengths h_ij (rad/us).

    h_ij = C_nn (1 - 3 z_ij^2 / r_ij^2) / r_ij^3 for i != j; the
    diagonal is zero. Computed in row blocks to bound memory for large
    slabs.
    """
    pos = protons.positions if isinstance(protons, ProtonSet) else protons
    pos = np.asarray(pos, dtype=float).reshape(-1, 3)
    n = len(pos)
    if n < 2:
        raise ValueError("need at least two protons")
    h = np.empty((n, n), dtype=float)
    block = max(1, int(2e7 // max(n, 1)))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d = pos[lo:hi, None, :] - pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        rows = np.arange(lo, hi)
        diag_mask = np.zeros_like(r2, dtype=bool)
        diag_mask[np.arange(hi - lo), rows] = True
        if np.any(r2[~diag_mask] <= 0.0):
            raise ValueError("coincident protons")
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = consts.c_nn * (1.0 - 3.0 * d[:, :, 2] ** 2 / r2) / r2 ** 1.5
        vals[diag_mask] = 0.0
        h[lo:hi] = vals
    return h


def effective_larmor(a_z, b0: float, consts: PhysicalConstants) -> np.ndarray:
    """Hyperfine-shifted Larmor frequencies w_i = gamma_H B0 - A_z/2."""
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    return consts.gamma_h * b0 - 0.5 * np.asarray(a_z, dtype=float)


def gradient_larmor(z, field: FieldProfile, consts: PhysicalConstants) -> np.ndarray:
    """Larmor frequency under a linear field gradient:
    w(z) = gamma_H (B0 + lambda z)."""
    return consts.gamma_h * (field.b0 + field.grad_lambda * np.asarray(z, dtype=float))


def build_coupling_set(
    protons,
    consts: PhysicalConstants,
    field: FieldProfile,
    use_gradient: bool = False,
    include_internuclear: bool = True,
) -> CouplingSet:
    """Assemble g, h and omega for a proton set.

    With use_gradient the Larmor frequencies follow the field gradient
    only (the layer-spectroscopy model); otherwise they carry the
    hyperfine shift -A_z/2 on top of gamma_H B0. Setting
    include_internuclear=False skips the O(N^2) h matrix and leaves it
    zero.
    """
    pos = protons.positions if isinstance(protons, ProtonSet) else protons
    pos = np.asarray(pos, dtype=float).reshape(-1, 3)
    g = nv_couplings(pos, consts)
    if include_internuclear and len(pos) >= 2:
        h = internuclear_couplings(pos, consts)
    else:
        h = np.zeros((len(pos), len(pos)))
    if use_gradient:
        omega = gradient_larmor(pos[:, 2], field, consts)
    else:
        a = hyperfine_field(pos, consts)
        omega = effective_larmor(a[:, 2], field.b0, consts)
    return CouplingSet(g=g, h=h, omega=omega)
