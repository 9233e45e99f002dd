"""
opolock.cavity

Steady-state round-trip equations of the ring and linear cavities, assembled
as a real 4x4 map acting on x = (Re A1, Im A1, Re A2, Im A2).

Both cavities are written as

    A = R A + p S A*

with R the passive round trip, S the parametric gain matrix and p = g * A0
(A0 the real intracavity pump amplitude). The complex ratio g'/g and the pump
phase are folded into S. Conjugation makes the map real-linear only, hence
the real representation: M(p) = M0 + p * M1.

Everything here broadcasts: phases may be numpy arrays, and the matrices then
carry the leading array shape (..., 4, 4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.constants as const

from .crystal import CrystalParams, PhaseMatchModel, delta_k_of_T, sinc
from .errors import ConfigError
from .polarization import WaveplateParams, waveplate_coeffs

CavityKind = Literal["ring", "linear"]
Origin = Literal["compensated", "bare"]


@dataclass(frozen=True)
class MirrorParams:
    """Coupling mirror amplitude reflectivity r, round-trip loss mu and
    reflection phase shifts (rad) for pump, signal and idler."""

    reflectivity: float = 0.9
    loss: float = 0.0
    zeta0: float = 0.0
    zeta1: float = 0.0
    zeta2: float = 0.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"mirror.{name}", "must be finite")
        if not 0.0 < self.reflectivity <= 1.0:
            raise ConfigError("mirror.reflectivity", "must be in (0, 1]")
        if not 0.0 <= self.loss < 1.0:
            raise ConfigError("mirror.loss", "must be in [0, 1)")

    @property
    def r_prime(self) -> float:
        return self.reflectivity * (1.0 - self.loss)

    @property
    def finesse(self) -> float:
        rp = self.r_prime
        return math.pi * rp / (1.0 - rp * rp)


@dataclass(frozen=True)
class OperatingPoint:
    dL_m: float = 0.0
    dT_K: float = 0.0
    xi_override: Optional[float] = None
    pump_level: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dL_m) and math.isfinite(self.dT_K)):
            raise ConfigError("point", "dL_m and dT_K must be finite")
        if self.xi_override is not None and not math.isfinite(self.xi_override):
            raise ConfigError("point.xi_rad", "must be finite")
        if not self.pump_level >= 0.0:
            raise ConfigError("pump.sigma", "must be >= 0")


@dataclass(frozen=True)
class CavityConfig:
    """The full physical configuration of one OPO."""

    crystal: CrystalParams = field(default_factory=CrystalParams)
    waveplate: WaveplateParams = field(
        default_factory=lambda: WaveplateParams(retardance=math.pi, angle=math.radians(5.0))
    )
    mirrors: MirrorParams = field(default_factory=MirrorParams)
    phase_match: PhaseMatchModel = field(default_factory=PhaseMatchModel)
    kind: CavityKind = "ring"
    origin: Origin = "compensated"

    def __post_init__(self) -> None:
        if self.kind not in ("ring", "linear"):
            raise ConfigError("cavity.kind", f"must be 'ring' or 'linear', got {self.kind!r}")
        if self.origin not in ("compensated", "bare"):
            raise ConfigError("cavity.origin", f"must be 'compensated' or 'bare', got {self.origin!r}")
        if not self.mirrors.r_prime < 1.0:
            raise ConfigError("mirror.reflectivity", "r * (1 - loss) must be < 1 (passive cavity)")

    @property
    def length_period_m(self) -> float:
        """Cavity-length period of the threshold (delta advances by 2 pi)."""
        lam = self.crystal.signal_wavelength_m
        return lam if self.kind == "ring" else lam / 2.0


@dataclass(frozen=True)
class DerivedPhases:
    """Round-trip phases of one operating point (arrays when derived on a grid).

    delta_prime and xi are only meaningful for the linear cavity. gain_factor is g'/g.
    """

    kind: CavityKind
    delta: float
    theta: float
    delta_prime: float
    xi: float
    alpha0: float
    psi: float
    epsilon: complex
    gain_factor: complex = 1.0 + 0.0j


@dataclass(frozen=True)
class RoundTripSystem:
    """Fixed-point condition (I - M0 - p M1) x = 0."""

    m0: np.ndarray
    m1: np.ndarray
    kind: CavityKind

    @property
    def shape(self) -> tuple[int, ...]:
        return self.m0.shape[:-2]

    def matrix(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)[..., None, None]
        return self.m0 + p * self.m1

    def apply(self, x: np.ndarray, p: float) -> np.ndarray:
        return self.matrix(p) @ x


def wrap_phase(phi):
    """Reduce to (-pi, pi] for reporting."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2.0 * np.pi)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def derive_phases_grid(config: CavityConfig, dL, dT, xi_override=None) -> DerivedPhases:
    """derive_phases over broadcast arrays of dL (m), dT (K) and optional xi (rad)."""
    cp, mp = config.crystal, config.mirrors
    dL = np.asarray(dL, dtype=float)
    dT = np.asarray(dT, dtype=float)
    k_s = cp.omega0 / (2.0 * const.c)  # 2 pi / lambda_signal
    mean_slope = (cp.dn1_dT + cp.dn2_dT) / 2.0
    biref_slope = cp.dn1_dT - cp.dn2_dT

    passes = "single" if config.kind == "ring" else "double"
    coeffs = waveplate_coeffs(config.waveplate, passes)

    delta = k_s * (dL + cp.length_m * mean_slope * dT)
    theta = k_s * cp.length_m * biref_slope * dT
    if config.kind == "linear":
        delta = 2.0 * delta
    if config.origin == "compensated":
        theta = theta + (2.0 * coeffs.psi if config.kind == "ring" else coeffs.psi)
    delta_prime = theta - coeffs.psi

    if xi_override is not None:
        xi = np.asarray(xi_override, dtype=float) + np.zeros_like(dT)
    else:
        wp = config.waveplate
        xi0 = (
            k_s * (2.0 * cp.n0 - 2.0 * cp.mean_index) * cp.length_m
            - 2.0 * k_s * wp.mean_index * 2.0 * wp.thickness_m
            + mp.zeta0
            - 2.0 * mp.zeta2
        )
        xi = wrap_phase(xi0) + 2.0 * k_s * cp.length_m * (cp.dn0_dT - mean_slope) * dT

    x = delta_k_of_T(config.phase_match, dT)
    gain_factor = np.exp(1j * np.asarray(x)) * sinc(x)

    delta, theta, delta_prime, xi, gain_factor = np.broadcast_arrays(
        delta, theta, delta_prime, xi, gain_factor
    )
    return DerivedPhases(
        kind=config.kind,
        delta=delta,
        theta=theta,
        delta_prime=delta_prime,
        xi=xi,
        alpha0=coeffs.alpha0,
        psi=coeffs.psi,
        epsilon=coeffs.epsilon,
        gain_factor=gain_factor,
    )


def derive_phases(
    cp: CrystalParams,
    wp: WaveplateParams,
    mp: MirrorParams,
    op: OperatingPoint,
    kind: CavityKind,
    *,
    phase_match: Optional[PhaseMatchModel] = None,
    origin: Origin = "compensated",
) -> DerivedPhases:
    config = CavityConfig(
        crystal=cp,
        waveplate=wp,
        mirrors=mp,
        phase_match=phase_match or PhaseMatchModel(),
        kind=kind,
        origin=origin,
    )
    grid = derive_phases_grid(config, op.dL_m, op.dT_K, op.xi_override)
    return DerivedPhases(
        kind=kind,
        delta=float(grid.delta),
        theta=float(grid.theta),
        delta_prime=float(grid.delta_prime),
        xi=float(grid.xi),
        alpha0=grid.alpha0,
        psi=grid.psi,
        epsilon=grid.epsilon,
        gain_factor=complex(grid.gain_factor),
    )


def _complex_block(m: np.ndarray) -> np.ndarray:
    """Real 2x2 blocks of z -> m z."""
    re, im = m.real, m.imag
    return np.stack([np.stack([re, -im], -1), np.stack([im, re], -1)], -2)


def _conjugate_block(m: np.ndarray) -> np.ndarray:
    """Real 2x2 blocks of z -> m conj(z)."""
    re, im = m.real, m.imag
    return np.stack([np.stack([re, im], -1), np.stack([im, -re], -1)], -2)


def _to_real(c: np.ndarray, block) -> np.ndarray:
    """(..., 2, 2) complex -> (..., 4, 4) real using the given block form."""
    rows = [np.concatenate([block(c[..., i, 0]), block(c[..., i, 1])], -1) for i in range(2)]
    return np.concatenate(rows, -2)


def _matrix(a11, a12, a21, a22) -> np.ndarray:
    a11, a12, a21, a22 = np.broadcast_arrays(
        *(np.asarray(v, dtype=complex) for v in (a11, a12, a21, a22))
    )
    return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)


def ring_matrices(phases: DerivedPhases, mp: MirrorParams, pump_phase: float = 0.0):
    """Complex R and S of the ring cavity."""
    rp = mp.r_prime
    d, t, psi = np.asarray(phases.delta), np.asarray(phases.theta), phases.psi
    a0, eps = phases.alpha0, phases.epsilon
    r11 = rp * a0 * np.exp(1j * (d - t / 2 + psi))
    r12 = rp * eps * np.exp(1j * (d + t / 2))
    r21 = rp * eps * np.exp(1j * (d - t / 2))
    r22 = rp * a0 * np.exp(1j * (d + t / 2 - psi))
    gain = np.asarray(phases.gain_factor) * np.exp(1j * pump_phase)
    r = _matrix(r11, r12, r21, r22)
    # the gain enters as (A1 + g'A0 A2*, A2 + g'A0 A1*): S = R sigma_x
    s = _matrix(r12, r11, r22, r21) * gain[..., None, None]
    return r, s


def linear_matrices(phases: DerivedPhases, mp: MirrorParams, pump_phase: float = 0.0):
    """Complex R and S of the linear cavity (two crystal passes per round trip)."""
    rp = mp.r_prime
    d, dp, xi = np.asarray(phases.delta), np.asarray(phases.delta_prime), np.asarray(phases.xi)
    a0, eps = phases.alpha0, phases.epsilon
    plus = 1.0 + np.exp(1j * xi)
    minus = 1.0 - np.exp(1j * xi)
    diag1 = rp * a0 * np.exp(1j * (d - dp))
    diag2 = rp * a0 * np.exp(1j * (d + dp))
    cross = rp * eps * np.exp(1j * d)
    gain = np.asarray(phases.gain_factor) * np.exp(1j * pump_phase)
    r = _matrix(diag1, cross, cross, diag2)
    s = _matrix(cross * minus, diag1 * plus, diag2 * plus, cross * minus) * gain[..., None, None]
    return r, s


def _system(r: np.ndarray, s: np.ndarray, kind: CavityKind) -> RoundTripSystem:
    return RoundTripSystem(m0=_to_real(r, _complex_block), m1=_to_real(s, _conjugate_block), kind=kind)


def build_ring_system(
    phases: DerivedPhases, mp: MirrorParams, *, pump_phase: float = 0.0
) -> RoundTripSystem:
    return _system(*ring_matrices(phases, mp, pump_phase), "ring")


def build_linear_system(
    phases: DerivedPhases, mp: MirrorParams, *, pump_phase: float = 0.0
) -> RoundTripSystem:
    return _system(*linear_matrices(phases, mp, pump_phase), "linear")


def build_system(phases: DerivedPhases, mp: MirrorParams, *, pump_phase: float = 0.0) -> RoundTripSystem:
    if phases.kind == "ring":
        return build_ring_system(phases, mp, pump_phase=pump_phase)
    return build_linear_system(phases, mp, pump_phase=pump_phase)


def round_trip_rhs(
    phases: DerivedPhases, mp: MirrorParams, a1: complex, a2: complex, p: float
) -> tuple[complex, complex]:
    """Right-hand side of the steady-state equations evaluated in complex arithmetic."""
    rp, a0, eps = mp.r_prime, phases.alpha0, phases.epsilon
    d, psi = phases.delta, phases.psi
    gp = phases.gain_factor * p
    if phases.kind == "ring":
        t = phases.theta
        b1 = a1 + gp * np.conj(a2)
        b2 = a2 + gp * np.conj(a1)
        out1 = rp * a0 * np.exp(1j * (d - t / 2 + psi)) * b1 + rp * eps * np.exp(1j * (d + t / 2)) * b2
        out2 = rp * a0 * np.exp(1j * (d + t / 2 - psi)) * b2 + rp * eps * np.exp(1j * (d - t / 2)) * b1
    else:
        dp, xi = phases.delta_prime, phases.xi
        plus, minus = 1 + np.exp(1j * xi), 1 - np.exp(1j * xi)
        out1 = rp * a0 * np.exp(1j * (d - dp)) * (a1 + plus * gp * np.conj(a2)) + rp * eps * np.exp(
            1j * d
        ) * (a2 + minus * gp * np.conj(a1))
        out2 = rp * a0 * np.exp(1j * (d + dp)) * (a2 + plus * gp * np.conj(a1)) + rp * eps * np.exp(
            1j * d
        ) * (a1 + minus * gp * np.conj(a2))
    return complex(out1), complex(out2)


def to_state(a1: complex, a2: complex) -> np.ndarray:
    return np.array([a1.real, a1.imag, a2.real, a2.imag])


def from_state(x: np.ndarray) -> tuple[complex, complex]:
    return complex(x[0], x[1]), complex(x[2], x[3])
