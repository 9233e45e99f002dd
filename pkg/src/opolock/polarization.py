"""
opolock.polarization

Jones-matrix algebra for the intracavity birefringent plate, written in the
crystal-axis basis (C1 ordinary/signal, C2 extraordinary/idler).

Matrices are plain numpy complex arrays of shape (2, 2). The plate is assumed
to act as a full-wave plate on the pump, so no pump matrix is modeled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError

Passes = Literal["single", "double"]

# |alpha| below this is treated as alpha = 0 (psi set to 0 by convention).
ALPHA_ZERO_TOL = 1e-14


@dataclass(frozen=True)
class WaveplateParams:
    """Birefringent plate: retardance (rad), axis angle to the crystal axes (rad),
    mean index and thickness (m)."""

    retardance: float
    angle: float
    mean_index: float = 1.54
    thickness_m: float = 1.0e-3

    def __post_init__(self) -> None:
        for name in ("retardance", "angle", "mean_index", "thickness_m"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigError(f"waveplate.{name}", f"must be finite, got {value!r}")
        if self.mean_index < 1.0:
            raise ConfigError("waveplate.mean_index", "must be >= 1")
        if self.thickness_m <= 0.0:
            raise ConfigError("waveplate.thickness_m", "must be > 0")


@dataclass(frozen=True)
class WaveplateCoeffs:
    """alpha = alpha0 * exp(i psi) and the signal/idler coupling epsilon."""

    alpha: complex
    epsilon: complex
    alpha0: float
    psi: float

    @property
    def coupling(self) -> float:
        # epsilon is purely imaginary: epsilon = i * coupling
        return self.epsilon.imag


def polar_split(alpha: complex) -> tuple[float, float]:
    """Return (alpha0, psi) with alpha0 >= 0 and psi in (-pi, pi]."""
    alpha0 = abs(alpha)
    if alpha0 < ALPHA_ZERO_TOL:
        return 0.0, 0.0
    psi = math.atan2(alpha.imag, alpha.real)
    if psi <= -math.pi:
        psi += 2.0 * math.pi
    return alpha0, psi


def waveplate_coeffs(wp: WaveplateParams, passes: Passes = "single") -> WaveplateCoeffs:
    """Plate coefficients for one pass, or for the two passes of a linear cavity
    (where the half retardance is replaced by the full retardance)."""
    if passes == "single":
        half = wp.retardance / 2.0
    elif passes == "double":
        half = wp.retardance
    else:
        raise ValueError(f"passes must be 'single' or 'double', got {passes!r}")
    s = math.sin(half)
    alpha = complex(math.cos(half), math.cos(2.0 * wp.angle) * s)
    epsilon = complex(0.0, s * math.sin(2.0 * wp.angle))
    alpha0, psi = polar_split(alpha)
    return WaveplateCoeffs(alpha=alpha, epsilon=epsilon, alpha0=alpha0, psi=psi)


def waveplate_matrix(wp: WaveplateParams, k: float) -> np.ndarray:
    """Single-pass Jones matrix exp(i k n e) [[alpha, eps], [eps, alpha*]]."""
    c = waveplate_coeffs(wp, "single")
    phase = np.exp(1j * k * wp.mean_index * wp.thickness_m)
    return phase * np.array(
        [[c.alpha, c.epsilon], [c.epsilon, c.alpha.conjugate()]], dtype=complex
    )


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]], dtype=complex)


def retarder(retardance: float) -> np.ndarray:
    """Plate in its own axes, global phase removed."""
    half = retardance / 2.0
    return np.diag([np.exp(1j * half), np.exp(-1j * half)])


def rotated_retarder(wp: WaveplateParams) -> np.ndarray:
    """The plate expressed in the crystal basis by rotating into its axes and back."""
    return rotation(-wp.angle) @ retarder(wp.retardance) @ rotation(wp.angle)


def is_unitary(m: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.all(np.abs(m.conj().T @ m - np.eye(m.shape[0])) <= tol))
