"""
opolock.crystal

The chi(2) crystal: coupling strength g, phase-mismatch factor g', thermal
index drift and the crystal input-output maps at frequency degeneracy
(omega1 = omega2 = omega0 / 2).

x denotes the half mismatch phase Delta k * l / 2 throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.constants as const
from scipy.optimize import brentq

from .errors import ConfigError

# Below this |x| the removable singularities are evaluated by series.
SERIES_CUTOFF = 1e-3


@dataclass(frozen=True)
class CrystalParams:
    """Type-II crystal. Indices: n0 pump, n1 signal (ordinary), n2 idler (extraordinary)."""

    length_m: float = 0.01
    n0: float = 1.75
    n1: float = 1.75
    n2: float = 1.75
    chi2_m_per_V: float = 6.4e-12
    dn1_dT: float = 1.3e-5
    dn2_dT: float = 1.6e-5
    pump_wavelength_m: float = 531.7e-9
    dn0_dT: float = 0.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigError(f"crystal.{name}", f"must be finite, got {value!r}")
        if self.length_m <= 0.0:
            raise ConfigError("crystal.length_m", "must be > 0")
        for name in ("n0", "n1", "n2"):
            if getattr(self, name) <= 1.0:
                raise ConfigError(f"crystal.{name}", "must be > 1")
        if self.pump_wavelength_m <= 0.0:
            raise ConfigError("crystal.pump_wavelength_m", "must be > 0")
        if self.chi2_m_per_V < 0.0:
            raise ConfigError("crystal.chi2_m_per_V", "must be >= 0")

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * const.c / self.pump_wavelength_m

    @property
    def signal_wavelength_m(self) -> float:
        return 2.0 * self.pump_wavelength_m

    @property
    def mean_index(self) -> float:
        return (self.n1 + self.n2) / 2.0


@dataclass(frozen=True)
class PhaseMatchModel:
    """sinc^2 phase matching, linear in temperature around t_pm_K."""

    t_pm_K: float = 0.0
    fwhm_K: float = 15.0
    enabled: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.t_pm_K):
            raise ConfigError("phase_match.t_pm_K", "must be finite")
        if self.enabled and not (self.fwhm_K > 0.0 and math.isfinite(self.fwhm_K)):
            raise ConfigError("phase_match.fwhm_K", "must be > 0 when phase matching is enabled")


@dataclass(frozen=True)
class CouplingConstants:
    g: float
    g_prime: complex


def sinc(x):
    """sin(x)/x with sinc(0) = 1; accepts scalars or arrays."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


@lru_cache(maxsize=None)
def sinc2_half_width() -> float:
    """x > 0 where sinc^2(x) = 1/2 (about 1.39156)."""
    return brentq(lambda x: math.sin(x) ** 2 / x**2 - 0.5, 1.0, 2.0, xtol=1e-15)


def coupling_g(cp: CrystalParams) -> float:
    """Per-pass nonlinear gain g = l chi2 sqrt(hbar w0 w1 w2 / (2 c^3 eps0 n0 n1 n2))."""
    w0 = cp.omega0
    w1 = w2 = w0 / 2.0
    root = math.sqrt(
        const.hbar * w0 * w1 * w2 / (2.0 * const.c**3 * const.epsilon_0 * cp.n0 * cp.n1 * cp.n2)
    )
    return cp.length_m * cp.chi2_m_per_V * root


def g_prime(g: float, x):
    """g' = g exp(ix) sinc(x)."""
    x = np.asarray(x, dtype=float)
    value = g * np.exp(1j * x) * sinc(x)
    return complex(value) if value.ndim == 0 else value


def second_order_f(x):
    """f(x) = exp(ix)/(ix) * (exp(ix) - sinc(x)), with f(0) = 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    direct = np.exp(1j * safe) / (1j * safe) * (np.exp(1j * safe) - sinc(safe))
    series = 1.0 + (4j / 3.0) * x - x**2 - (8j / 15.0) * x**3
    value = np.where(small, series, direct)
    return complex(value) if value.ndim == 0 else value


def propagate_crystal_full(a0: complex, a1: complex, a2: complex, g: float, x: float):
    """Crystal output to second order in g, all three fields taken at the input face."""
    first = g * np.exp(1j * x) * sinc(x)
    f = second_order_f(x)
    half_g2 = g * g / 2.0
    i0, i1, i2 = abs(a0) ** 2, abs(a1) ** 2, abs(a2) ** 2
    a0_out = a0 - np.conj(first) * a1 * a2 - half_g2 * np.conj(f) * (i1 + i2) * a0
    a1_out = a1 + first * a0 * np.conj(a2) + half_g2 * f * (i0 - i2) * a1
    a2_out = a2 + first * a0 * np.conj(a1) + half_g2 * f * (i0 - i1) * a2
    return complex(a0_out), complex(a1_out), complex(a2_out)


def propagate_crystal_simple(a0_mid: complex, a1: complex, a2: complex, gp: complex):
    """Signal/idler output with the pump taken at the crystal center."""
    return a1 + gp * a0_mid * np.conj(a2), a2 + gp * a0_mid * np.conj(a1)


def integrate_three_wave(
    a0: complex, a1: complex, a2: complex, g: float, x: float, steps: int = 2000
) -> tuple[complex, complex, complex]:
    """RK4 integration of the envelope equations over the crystal (z normalized to 1).

    dA1/dz = g e^{i 2x z} A0 A2*, dA2/dz = g e^{i 2x z} A0 A1*, dA0/dz = -g e^{-i 2x z} A1 A2
    """
    dk = 2.0 * x

    def rhs(z: float, y: np.ndarray) -> np.ndarray:
        p, s, i = y
        ph = np.exp(1j * dk * z)
        return np.array(
            [-g * np.conj(ph) * s * i, g * ph * p * np.conj(i), g * ph * p * np.conj(s)],
            dtype=complex,
        )

    y = np.array([a0, a1, a2], dtype=complex)
    h = 1.0 / steps
    for n in range(steps):
        z = n * h
        k1 = rhs(z, y)
        k2 = rhs(z + h / 2, y + h / 2 * k1)
        k3 = rhs(z + h / 2, y + h / 2 * k2)
        k4 = rhs(z + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return complex(y[0]), complex(y[1]), complex(y[2])


def delta_k_of_T(pm: PhaseMatchModel, dT):
    """Half mismatch phase x = kappa (dT - T_pm), kappa set by the sinc^2 FWHM."""
    dT = np.asarray(dT, dtype=float)
    if not pm.enabled:
        x = np.zeros_like(dT)
    else:
        kappa = 2.0 * sinc2_half_width() / pm.fwhm_K
        x = kappa * (dT - pm.t_pm_K)
    return float(x) if x.ndim == 0 else x


def coupling_constants(cp: CrystalParams, pm: PhaseMatchModel, dT: float) -> CouplingConstants:
    g = coupling_g(cp)
    return CouplingConstants(g=g, g_prime=g_prime(g, delta_k_of_T(pm, dT)))
