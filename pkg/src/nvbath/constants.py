"""Physical constants in the package unit system (nm, us, rad/us, Gauss).

Gyromagnetic ratios are CODATA values converted from rad s^-1 T^-1.
Dipolar prefactors are derived in __post_init__ so that overriding a
gyromagnetic ratio propagates consistently; both can also be overridden
directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# SI ingredients
_MU0_OVER_4PI = 1.00000000055e-7  # T m A^-1
_HBAR = 1.054571817e-34  # J s

# rad s^-1 T^-1  ->  rad us^-1 G^-1 is a factor 1e-10
GAMMA_E_DEFAULT = 1.76085963023e11 * 1e-10  # electron, 17.6086 rad/us/G
GAMMA_H_DEFAULT = 2.6752218744e8 * 1e-10  # proton, 0.0267522 rad/us/G


def _dipolar_prefactor(gamma1: float, gamma2: float) -> float:
    """Coupling strength C at 1 nm separation, rad/us nm^3.

    C = (mu0/4pi) * gamma1 * gamma2 * hbar with the gammas in SI units;
    the 1e21 factor converts rad s^-1 m^3 to rad us^-1 nm^3.
    """
    g1_si = gamma1 * 1e10
    g2_si = gamma2 * 1e10
    return _MU0_OVER_4PI * g1_si * g2_si * _HBAR * 1e21


@dataclass(frozen=True)
class PhysicalConstants:
    """Gyromagnetic ratios and dipolar prefactors.

    Attributes
    ----------
    gamma_e, gamma_h : rad us^-1 G^-1
    c_en : electron-proton dipolar coupling at 1 nm, rad/us nm^3
    c_nn : proton-proton dipolar coupling at 1 nm, rad/us nm^3
    transverse_scale : multiplier on the transverse NV-nuclear coupling
        magnitude relative to the default |g| = (1/4) sqrt(Ax^2 + Ay^2).
        Leave at 1.0 for the standard dressed-state convention.
    """

    gamma_e: float = GAMMA_E_DEFAULT
    gamma_h: float = GAMMA_H_DEFAULT
    c_en: float = field(default=0.0)
    c_nn: float = field(default=0.0)
    transverse_scale: float = 1.0

    def __post_init__(self):
        if self.gamma_e <= 0 or self.gamma_h <= 0:
            raise ValueError("gyromagnetic ratios must be positive")
        if self.transverse_scale <= 0:
            raise ValueError("transverse_scale must be positive")
        if self.c_en == 0.0:
            object.__setattr__(
                self, "c_en", _dipolar_prefactor(self.gamma_e, self.gamma_h)
            )
        if self.c_nn == 0.0:
            object.__setattr__(
                self, "c_nn", _dipolar_prefactor(self.gamma_h, self.gamma_h)
            )
        if self.c_en <= 0 or self.c_nn <= 0:
            raise ValueError("dipolar prefactors must be positive")

    def larmor_field(self, omega_n: float) -> float:
        """Field (G) at which the proton Larmor frequency equals omega_n."""
        return omega_n / self.gamma_h


DEFAULT_CONSTANTS = PhysicalConstants()

# Paper-scale defaults used across scenario configs
DEFAULT_DEPTH_Z0 = 3.0  # nm
DEFAULT_B0 = 234.86595139286462  # G, proton Larmor at 1 MHz (2*pi rad/us)
DEFAULT_DW = 2.0e3  # nm^2/us, bulk water self-diffusion
DEFAULT_RHO_W = 66.7  # protons/nm^3, bulk water
DEFAULT_GRADIENT = 60.0  # G/nm
DEFAULT_TAU_SCAN = 30.0  # us
DEFAULT_A_LATTICE = 0.4518  # nm, hexagonal ice in-plane constant
DEFAULT_C_LATTICE = 0.7356  # nm, hexagonal ice stacking constant
DEFAULT_RHO_2D = 15.2  # protons/nm^2 per stabilized layer
