"""
opolock.solver

Oscillation thresholds from the round-trip fixed-point condition.

det(I - M0 - p M1) is an even polynomial of degree 4 in p, so five samples
determine it exactly. The quadratic in I = p^2 gives the two thresholds, each
root is polished by bisection on the determinant itself, and the result is
normalized by the standard-OPO threshold.

The batched entry point (solve_batch) works on any leading array shape so the
sweeps can push whole grids through at once; threshold_roots wraps it for one
system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .cavity import MirrorParams, RoundTripSystem
from .errors import (
    FitDegenerateError,
    NegativeDiscriminantError,
    NormalizationError,
    ResidualTooLargeError,
)

SAMPLE_FRACTIONS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
RESIDUAL_TOL = 1e-9
DOUBLE_ROOT_TOL = 1e-10
NOISE_FLOOR = 1e-12
COND_LIMIT = 1e12
# odd coefficients relative to the even ones; above this the quartic model is broken
ODD_RATIO_TOL = 1e-10
POLISH_SPANS = (1e-6, 1e-4)
POLISH_ITERS = 60


class ThresholdStatus(str, Enum):
    NO_OSCILLATION = "no_oscillation"
    ONE_ROOT = "one_root"
    TWO_ROOTS = "two_roots"


@dataclass(frozen=True)
class NormalizationContext:
    """Standard-OPO threshold intensity in p^2 units (p = g * A0)."""

    sigma0_intensity: float

    def __post_init__(self) -> None:
        if not (self.sigma0_intensity > 0.0 and math.isfinite(self.sigma0_intensity)):
            raise NormalizationError(f"sigma0_intensity must be > 0, got {self.sigma0_intensity!r}")

    @property
    def p_star(self) -> float:
        return math.sqrt(self.sigma0_intensity)


@dataclass(frozen=True)
class ThresholdResult:
    roots: tuple[float, ...]
    det_residuals: tuple[float, ...]
    status: ThresholdStatus
    odd_ratio: float = 0.0

    @property
    def lower(self) -> Optional[float]:
        return self.roots[0] if self.roots else None


@dataclass(frozen=True)
class ThresholdBatch:
    """Normalized thresholds over an array of systems; NaN where no root exists."""

    lower: np.ndarray
    upper: np.ndarray
    lower_residual: np.ndarray
    upper_residual: np.ndarray
    residual_flag: np.ndarray
    odd_ratio: np.ndarray

    @property
    def count(self) -> np.ndarray:
        return np.isfinite(self.lower).astype(int) + np.isfinite(self.upper).astype(int)


def standard_threshold(mp: MirrorParams, g_prime_mag: float = 1.0) -> NormalizationContext:
    """Threshold of the same cavity without the plate, on resonance and phase matched:
    r'(1 + p) = 1, i.e. p^2 = ((1 - r') / r')^2."""
    rp = mp.r_prime
    if not 0.0 < rp < 1.0:
        raise NormalizationError(f"standard threshold undefined for r' = {rp!r}")
    if not g_prime_mag > 0.0:
        raise NormalizationError("standard threshold needs a nonzero gain")
    return NormalizationContext(sigma0_intensity=((1.0 - rp) / rp) ** 2)


def _identity_minus(sys: RoundTripSystem, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.eye(4) - (sys.m0 + p[..., None, None] * sys.m1)


def det_at(sys: RoundTripSystem, p):
    """det(I - M0 - p M1); p broadcasts against the system's leading shape."""
    value = np.linalg.det(_identity_minus(sys, p))
    return float(value) if np.ndim(value) == 0 else value


def _sample_points(norm: NormalizationContext, scale: float) -> np.ndarray:
    return SAMPLE_FRACTIONS * 4.0 * norm.p_star * scale


def _fit(sys: RoundTripSystem, ps: np.ndarray):
    """Sampled determinants and the polynomial coefficients c0..c4 in p."""
    if np.linalg.cond(np.vander(ps, 5, increasing=True)) > COND_LIMIT:
        raise FitDegenerateError(f"ill-conditioned interpolation at p_max={ps[-1]:.3e}")
    stacked = sys.m0[..., None, :, :] + ps[:, None, None] * sys.m1[..., None, :, :]
    dets = np.linalg.det(np.eye(4) - stacked)
    # solve in t = p / p_max, then undo the scaling per power
    p_max = ps[-1]
    scaled = np.vander(ps / p_max, 5, increasing=True)
    coeffs = (dets @ np.linalg.inv(scaled).T) / p_max ** np.arange(5)
    return dets, coeffs


def _quadratic_roots(c0, c2, c4):
    """Real non-negative roots of c4 I^2 + c2 I + c0 as (low, high), NaN where absent.

    A discriminant within DOUBLE_ROOT_TOL of zero (relative to c2^2) is a double
    root, returned once as the low root. Without the plate the real determinant
    is a perfect square, so every threshold lands here.
    """
    disc = c2 * c2 - 4.0 * c4 * c0
    linear = c4 == 0
    safe_c4 = np.where(linear, 1.0, c4)
    double = ~linear & (np.abs(disc) <= DOUBLE_ROOT_TOL * c2 * c2)
    real = ~linear & ~double & (disc > 0)

    sq = np.sqrt(np.where(real, disc, 0.0))
    q = -0.5 * (c2 + np.copysign(sq, c2))
    safe_q = np.where(q == 0, 1.0, q)
    r1 = q / safe_c4
    r2 = c0 / safe_q
    lo = np.where(real, np.minimum(r1, r2), np.nan)
    hi = np.where(real, np.maximum(r1, r2), np.nan)
    lo = np.where(double, -c2 / (2.0 * safe_c4), lo)

    safe_c2 = np.where(c2 == 0, 1.0, c2)
    lo = np.where(linear, np.where(c2 == 0, np.nan, -c0 / safe_c2), lo)

    lo = np.where(lo >= 0, lo, np.nan)
    hi = np.where(hi >= 0, hi, np.nan)
    # a negative low root leaves the high one as the only physical root
    return np.where(np.isnan(lo), hi, lo), np.where(np.isnan(lo), np.nan, hi)


def _polish(sys: RoundTripSystem, p_root: np.ndarray) -> np.ndarray:
    """Bisection on det inside [p(1 - span), p(1 + span)] where det changes sign.

    The narrowest span in POLISH_SPANS showing a sign change is used.
    """
    valid = np.isfinite(p_root) & (p_root > 0)
    p = np.where(valid, p_root, 0.0)
    a = np.array(p, copy=True)
    b = np.array(p, copy=True)
    fa = np.zeros_like(p)
    bracketed = np.zeros(p.shape, dtype=bool)
    for span in POLISH_SPANS:
        lo, hi = p * (1.0 - span), p * (1.0 + span)
        f_lo = np.linalg.det(_identity_minus(sys, lo))
        f_hi = np.linalg.det(_identity_minus(sys, hi))
        new = valid & ~bracketed & (np.sign(f_lo) * np.sign(f_hi) < 0)
        a, b, fa = np.where(new, lo, a), np.where(new, hi, b), np.where(new, f_lo, fa)
        bracketed |= new
    if not np.any(bracketed):
        return p_root
    for _ in range(POLISH_ITERS):
        mid = 0.5 * (a + b)
        fm = np.linalg.det(_identity_minus(sys, mid))
        left = np.sign(fa) * np.sign(fm) <= 0
        b = np.where(bracketed & left, mid, b)
        a = np.where(bracketed & ~left, mid, a)
        fa = np.where(bracketed & ~left, fm, fa)
    return np.where(bracketed, 0.5 * (a + b), p_root)


def solve_batch(sys: RoundTripSystem, norm: NormalizationContext) -> ThresholdBatch:
    """Thresholds for every system in the batch. Never raises on a single bad
    system: residual failures and fits with a non-negligible odd part are
    reported in residual_flag."""
    try:
        ps = _sample_points(norm, 1.0)
        dets, coeffs = _fit(sys, ps)
    except FitDegenerateError:
        ps = _sample_points(norm, 4.0)
        dets, coeffs = _fit(sys, ps)

    p_max = ps[-1]
    c0, c1, c2, c3, c4 = (coeffs[..., k] for k in range(5))
    even_scale = np.maximum.reduce([np.abs(c0), np.abs(c2) * p_max**2, np.abs(c4) * p_max**4])
    odd = np.maximum(np.abs(c1) * p_max, np.abs(c3) * p_max**3)
    odd_ratio = odd / np.where(even_scale > 0, even_scale, 1.0)

    det_scale = np.max(np.abs(dets), axis=-1)
    # coefficients at the interpolation noise level are zero (no gain: S = 0)
    floor = NOISE_FLOOR * det_scale
    c2 = np.where(np.abs(c2) * p_max**2 <= floor, 0.0, c2)
    c4 = np.where(np.abs(c4) * p_max**4 <= floor, 0.0, c4)
    i_lo, i_hi = _quadratic_roots(c0, c2, c4)

    sigma, residual = [], []
    flags = np.broadcast_to(odd_ratio > ODD_RATIO_TOL, i_lo.shape).copy()
    for intensity in (i_lo, i_hi):
        p = _polish(sys, np.sqrt(intensity))
        res = np.abs(np.linalg.det(_identity_minus(sys, np.where(np.isfinite(p), p, 0.0))))
        res = np.where(np.isfinite(p), res, np.nan)
        flags |= np.isfinite(p) & (res > RESIDUAL_TOL * det_scale)
        sigma.append(p * p / norm.sigma0_intensity)
        residual.append(res)

    return ThresholdBatch(
        lower=sigma[0],
        upper=sigma[1],
        lower_residual=residual[0],
        upper_residual=residual[1],
        residual_flag=flags,
        odd_ratio=odd_ratio,
    )


def threshold_roots(sys: RoundTripSystem, norm: NormalizationContext) -> ThresholdResult:
    """Normalized threshold roots (ascending) of one round-trip system."""
    if sys.shape != ():
        raise ValueError(f"threshold_roots expects a single system, got shape {sys.shape}")
    batch = solve_batch(sys, norm)
    if float(batch.odd_ratio) > ODD_RATIO_TOL:
        raise FitDegenerateError(
            f"determinant fit has an odd part {float(batch.odd_ratio):.3e} > {ODD_RATIO_TOL:.0e}"
        )
    if bool(batch.residual_flag):
        raise ResidualTooLargeError(
            f"polished roots fail the determinant tolerance: residuals "
            f"{float(batch.lower_residual):.3e}, {float(batch.upper_residual):.3e}"
        )
    roots, residuals = [], []
    for s, r in ((batch.lower, batch.lower_residual), (batch.upper, batch.upper_residual)):
        if np.isfinite(s):
            roots.append(float(s))
            residuals.append(float(r))
    status = (ThresholdStatus.NO_OSCILLATION, ThresholdStatus.ONE_ROOT, ThresholdStatus.TWO_ROOTS)[
        len(roots)
    ]
    return ThresholdResult(
        roots=tuple(roots),
        det_residuals=tuple(residuals),
        status=status,
        odd_ratio=float(batch.odd_ratio),
    )


def appendix_terms(
    alpha0: float,
    psi: float,
    epsilon: complex,
    r_prime: float,
    delta: float,
    theta: float,
    *,
    verbatim: bool = False,
) -> tuple[float, float]:
    """The pair (u, v) of the closed-form ring threshold; v < 0 outside the locking zone.

    epsilon enters through |epsilon|^2. The default form uses cos(theta/2 - psi)
    in u and an unsquared cos(theta - 2 psi) in the bracket of v, which is what
    the determinant gives; verbatim=True evaluates the variant with
    cos(theta/2 - 2 psi) in u and cos^2(theta - 2 psi) in the bracket.
    """
    e2 = abs(epsilon) ** 2
    rp = r_prime
    half = math.cos(theta / 2.0 - psi)
    full = math.cos(theta - 2.0 * psi)
    cd = math.cos(delta)

    u_half = math.cos(theta / 2.0 - 2.0 * psi) if verbatim else half
    u = e2 + rp**2 - 2.0 * rp * alpha0 * cd * u_half + alpha0**2 * full
    bracket = rp**2 + e2 - 2.0 * rp * alpha0 * cd * half + alpha0**2 * (full**2 if verbatim else full)
    v = (
        bracket**2
        - 1.0
        - rp**4
        - 2.0 * rp**2 * alpha0**2
        - 2.0 * rp * (rp * math.cos(2.0 * delta) + alpha0 * (rp * alpha0 * full - 2.0 * (1.0 + rp**2) * cd * half))
    )
    return u, v


def appendix_lower_threshold(
    alpha0: float,
    psi: float,
    epsilon: complex,
    r_prime: float,
    delta: float,
    theta: float,
    g_prime_mag: float = 1.0,
    *,
    verbatim: bool = False,
) -> float:
    """Closed-form lower ring-cavity threshold I = (u - sqrt(v)) / (g'^2 r'^2), see appendix_terms."""
    rp = r_prime
    u, v = appendix_terms(alpha0, psi, epsilon, rp, delta, theta, verbatim=verbatim)
    if v < 0.0:
        # rounding at the zone edge where the two roots merge
        if v > -1e-12 * (1.0 + rp**2) ** 2:
            v = 0.0
        else:
            raise NegativeDiscriminantError(f"v = {v:.3e} < 0: outside the locking zone")
    return (u - math.sqrt(v)) / (g_prime_mag**2 * rp**2)
