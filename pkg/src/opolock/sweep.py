"""
opolock.sweep

Scans over the control parameters: locking-zone maps on the (dL, dT) plane,
thresholds on resonance (minimum over the cavity length), cross sections and
zone widths.

All scans are evaluated in chunks of independent cells. Chunks may run on a
thread pool; results are placed by index so the output does not depend on the
thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Callable, Literal, Optional, Sequence

import numpy as np

from . import __version__
from .cavity import CavityConfig, build_system, derive_phases_grid
from .errors import ConfigError, NotInZoneError, WindowTooNarrowError
from .solver import NormalizationContext, ThresholdBatch, solve_batch, standard_threshold

ScanKind = Literal["dT", "xi"]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0

ROWS_PER_CHUNK = 16
SAMPLES_PER_CHUNK = 128


@dataclass(frozen=True)
class AxisRange:
    start: float
    stop: float
    count: int
    name: str = field(default="grid", compare=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError(self.name, f"range bounds must be finite, got ({self.start!r}, {self.stop!r})")
        if self.stop <= self.start:
            raise ConfigError(self.name, f"range must satisfy start < stop, got ({self.start!r}, {self.stop!r})")
        if int(self.count) != self.count or self.count < 2:
            raise ConfigError(self.name, f"count must be an integer >= 2, got {self.count!r}")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, int(self.count))

    @property
    def extent(self) -> float:
        return self.stop - self.start


@dataclass(frozen=True)
class GridSpec:
    """A (dL, dT) grid plus the physical configuration held fixed over it.

    xi_fixed overrides the computed linear-cavity phase xi for every cell.
    """

    config: CavityConfig = field(default_factory=CavityConfig)
    dL: AxisRange = field(default_factory=lambda: AxisRange(-30e-9, 30e-9, 401, "grid.dL"))
    dT: AxisRange = field(default_factory=lambda: AxisRange(-0.5, 0.5, 401, "grid.dT"))
    xi: Optional[AxisRange] = None
    xi_fixed: Optional[float] = None

    @property
    def cell_count(self) -> int:
        return int(self.dL.count) * int(self.dT.count)


@dataclass(frozen=True)
class ZoneMap:
    """Lower threshold per cell, shape (count_dT, count_dL); NaN marks no oscillation."""

    dL_values: np.ndarray
    dT_values: np.ndarray
    sigma_th: np.ndarray
    flags: np.ndarray
    pump_level: float
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def in_zone(self) -> np.ndarray:
        return np.isfinite(self.sigma_th) & (np.nan_to_num(self.sigma_th, nan=np.inf) <= self.pump_level)

    @property
    def in_zone_fraction(self) -> float:
        return float(np.count_nonzero(self.in_zone)) / self.in_zone.size

    @property
    def in_zone_area(self) -> float:
        """Zone area in m*K, counting each in-zone cell at the grid spacing."""
        cell = (self.dL_values[1] - self.dL_values[0]) * (self.dT_values[1] - self.dT_values[0])
        return float(np.count_nonzero(self.in_zone)) * cell

    @property
    def flagged_count(self) -> int:
        return int(np.count_nonzero(self.flags))


@dataclass(frozen=True)
class ResonanceCurve:
    """sigma_res per scan sample with the minimizing dL. NaN marks samples where no
    threshold exists anywhere in the window."""

    scan: ScanKind
    values: np.ndarray
    sigma_res: np.ndarray
    argmin_dL: np.ndarray
    bracketed: np.ndarray
    fixed: dict[str, Optional[float]] = field(default_factory=dict)


@dataclass(frozen=True)
class ResonanceSurface:
    xi_values: np.ndarray
    dT_values: np.ndarray
    sigma_res: np.ndarray  # (count_xi, count_dT)
    argmin_dL: np.ndarray

    def best_over_dT(self) -> tuple[np.ndarray, np.ndarray]:
        """Per xi, the lowest sigma_res over temperature and the temperature reaching it."""
        filled = np.nan_to_num(self.sigma_res, nan=np.inf)
        idx = np.argmin(filled, axis=1)
        best = filled[np.arange(filled.shape[0]), idx]
        return np.where(np.isfinite(best), best, np.nan), self.dT_values[idx]


@dataclass(frozen=True)
class CrossSection:
    dT_K: float
    dL_values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class ZoneWidths:
    dL_m: float
    dT_K: float
    center_dL_m: float
    center_dT_K: float
    sigma_min: float
    capped_dL: bool = False
    capped_dT: bool = False

    def __iter__(self):
        return iter((self.dL_m, self.dT_K))


def _workers(threads: int) -> int:
    if threads < 0:
        raise ConfigError("run.threads", f"must be >= 0, got {threads!r}")
    return threads or (os.cpu_count() or 1)


def _map_chunks(fn: Callable, chunks: Sequence, threads: int) -> list:
    workers = _workers(threads)
    if workers == 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _slices(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _solve(config: CavityConfig, norm: NormalizationContext, dL, dT, xi=None) -> ThresholdBatch:
    phases = derive_phases_grid(config, dL, dT, xi)
    return solve_batch(build_system(phases, config.mirrors), norm)


def _lower_or_inf(config: CavityConfig, norm: NormalizationContext, dL, dT, xi=None) -> np.ndarray:
    lower = _solve(config, norm, dL, dT, xi).lower
    return np.where(np.isfinite(lower), lower, np.inf)


def _resonance_center(config: CavityConfig, dT) -> np.ndarray:
    """dL at which the common-mode phase delta vanishes."""
    cp = config.crystal
    return -cp.length_m * (cp.dn1_dT + cp.dn2_dT) / 2.0 * np.asarray(dT, dtype=float)


def _check_sigma(sigma: float) -> None:
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ConfigError("pump.sigma", f"must be a finite value > 0, got {sigma!r}")


def zone_scan(
    spec: GridSpec, sigma: float, kind=None, *, threads: int = 1
) -> ZoneMap:
    """Lower threshold on every cell of the grid; cells at or below sigma are in the zone."""
    _check_sigma(sigma)
    config = spec.config if kind is None else replace(spec.config, kind=kind)
    norm = standard_threshold(config.mirrors)
    dL = spec.dL.values()
    dT = spec.dT.values()

    def run(rows: slice) -> ThresholdBatch:
        return _solve(config, norm, dL[None, :], dT[rows, None], spec.xi_fixed)

    batches = _map_chunks(run, _slices(dT.size, ROWS_PER_CHUNK), threads)
    sigma_th = np.concatenate([b.lower for b in batches], axis=0)
    flags = np.concatenate([b.residual_flag for b in batches], axis=0)

    metadata = {
        "kind": config.kind,
        "origin": config.origin,
        "sigma": sigma,
        "cells": spec.cell_count,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    return ZoneMap(
        dL_values=dL,
        dT_values=dT,
        sigma_th=sigma_th,
        flags=flags,
        pump_level=sigma,
        metadata=metadata,
    )


def _golden_min(f: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray, tol: float):
    """Golden-section search run in lockstep over arrays of brackets [a, b]."""
    h = b - a
    widest = float(np.max(h)) if h.size else 0.0
    n = 0 if widest <= tol else int(math.ceil(math.log(tol / widest) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = f(c), f(d)
    for _ in range(n):
        left = yc < yd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        h = INV_PHI * h
        x_new = np.where(left, a + INV_PHI2 * h, a + INV_PHI * h)
        y_new = f(x_new)
        c, d = np.where(left, x_new, d), np.where(left, c, x_new)
        yc, yd = np.where(left, y_new, yd), np.where(left, yc, y_new)
    take_c = yc < yd
    return np.where(take_c, c, d), np.where(take_c, yc, yd)


def _minimize_over_dL(
    config: CavityConfig,
    norm: NormalizationContext,
    dT: np.ndarray,
    xi: Optional[np.ndarray],
    window_m: float,
    coarse: int,
    tol_m: float,
):
    """Coarse grid over the window, then golden section in the best coarse bracket."""
    center = _resonance_center(config, dT)
    offsets = np.linspace(-window_m / 2.0, window_m / 2.0, coarse)
    step = offsets[1] - offsets[0]
    grid = center[:, None] + offsets[None, :]
    xi_col = None if xi is None else xi[:, None]
    values = _lower_or_inf(config, norm, grid, dT[:, None], xi_col)

    j = np.argmin(values, axis=1)
    rows = np.arange(dT.size)
    coarse_best = values[rows, j]
    coarse_x = grid[rows, j]

    a = coarse_x - step
    b = coarse_x + step

    def f(x: np.ndarray) -> np.ndarray:
        return _lower_or_inf(config, norm, x, dT, xi)

    x_min, y_min = _golden_min(f, a, b, tol_m)
    use_coarse = coarse_best < y_min
    x_min = np.where(use_coarse, coarse_x, x_min)
    y_min = np.where(use_coarse, coarse_best, y_min)
    bracketed = (y_min <= f(a)) & (y_min <= f(b))

    none = ~np.isfinite(y_min)
    return (
        np.where(none, np.nan, y_min),
        np.where(none, np.nan, x_min),
        bracketed & ~none,
    )


def _resonance_samples(
    config: CavityConfig,
    dT: np.ndarray,
    xi: Optional[np.ndarray],
    *,
    window_m: Optional[float],
    coarse: int,
    tol_m: float,
    threads: int,
):
    period = config.length_period_m
    window = period if window_m is None else float(window_m)
    if not window >= period * (1.0 - 1e-12):
        raise WindowTooNarrowError(
            f"dL window {window:.6e} m is shorter than one period {period:.6e} m"
        )
    if coarse < 3:
        raise ConfigError("resonance.coarse", f"must be >= 3, got {coarse!r}")
    norm = standard_threshold(config.mirrors)

    def run(chunk: slice):
        return _minimize_over_dL(
            config, norm, dT[chunk], None if xi is None else xi[chunk], window, coarse, tol_m
        )

    parts = _map_chunks(run, _slices(dT.size, SAMPLES_PER_CHUNK), threads)
    sigma_res = np.concatenate([p[0] for p in parts])
    argmin = np.concatenate([p[1] for p in parts])
    bracketed = np.concatenate([p[2] for p in parts])
    return sigma_res, argmin, bracketed


def resonance_curve(
    config: CavityConfig,
    scan: ScanKind,
    values,
    *,
    window_m: Optional[float] = None,
    fixed_dT: float = 0.0,
    fixed_xi: Optional[float] = None,
    coarse: int = 64,
    tol_m: float = 1e-12,
    threads: int = 1,
) -> ResonanceCurve:
    """sigma_res (minimum of the lower threshold over dL) along a dT or xi scan.

    The dL window defaults to one period centered on the resonance of the sample.
    """
    values = np.asarray(values, dtype=float).ravel()
    if scan == "dT":
        dT = values
        xi = None if fixed_xi is None else np.full(values.shape, float(fixed_xi))
        fixed = {"xi": fixed_xi}
    elif scan == "xi":
        dT = np.full(values.shape, float(fixed_dT))
        xi = values
        fixed = {"dT": fixed_dT}
    else:
        raise ConfigError("resonance.scan", f"must be 'dT' or 'xi', got {scan!r}")

    sigma_res, argmin, bracketed = _resonance_samples(
        config, dT, xi, window_m=window_m, coarse=coarse, tol_m=tol_m, threads=threads
    )
    return ResonanceCurve(
        scan=scan,
        values=values,
        sigma_res=sigma_res,
        argmin_dL=argmin,
        bracketed=bracketed,
        fixed=fixed,
    )


def resonance_surface(
    config: CavityConfig,
    xi_values,
    dT_values,
    *,
    window_m: Optional[float] = None,
    coarse: int = 64,
    tol_m: float = 1e-12,
    threads: int = 1,
) -> ResonanceSurface:
    xi_values = np.asarray(xi_values, dtype=float).ravel()
    dT_values = np.asarray(dT_values, dtype=float).ravel()
    xi_grid, dT_grid = np.meshgrid(xi_values, dT_values, indexing="ij")
    sigma_res, argmin, _ = _resonance_samples(
        config,
        dT_grid.ravel(),
        xi_grid.ravel(),
        window_m=window_m,
        coarse=coarse,
        tol_m=tol_m,
        threads=threads,
    )
    shape = xi_grid.shape
    return ResonanceSurface(
        xi_values=xi_values,
        dT_values=dT_values,
        sigma_res=sigma_res.reshape(shape),
        argmin_dL=argmin.reshape(shape),
    )


def cross_section(config: CavityConfig, dT: float, dL_values, xi: Optional[float] = None) -> CrossSection:
    """Both thresholds against dL at a fixed temperature."""
    dL_values = np.asarray(dL_values, dtype=float).ravel()
    norm = standard_threshold(config.mirrors)
    batch = _solve(config, norm, dL_values, float(dT), xi)
    return CrossSection(dT_K=float(dT), dL_values=dL_values, lower=batch.lower, upper=batch.upper)


def _edge(
    inside: Callable[[np.ndarray], np.ndarray], span: float, points: int, tol: float
) -> tuple[float, bool]:
    """Distance to the first zone boundary along one direction, capped at span."""
    steps = np.linspace(0.0, span, points + 1)[1:]
    outside = np.flatnonzero(~inside(steps))
    if outside.size == 0:
        return span, True
    k = int(outside[0])
    lo = float(steps[k - 1]) if k > 0 else 0.0
    hi = float(steps[k])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bool(inside(np.array([mid]))[0]):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def _temperature_span(config: CavityConfig) -> float:
    cp = config.crystal
    slope = abs(cp.dn1_dT - cp.dn2_dT)
    if slope == 0.0:
        return 50.0
    return min(cp.signal_wavelength_m / (cp.length_m * slope) / 2.0, 50.0)


def zone_widths(
    config: CavityConfig,
    sigma: float,
    at_dT: float,
    *,
    xi: Optional[float] = None,
    points: int = 512,
    tol_dL_m: float = 1e-13,
    tol_dT_K: float = 1e-7,
) -> ZoneWidths:
    """Zone extent along dL and along dT through the minimum-threshold point at at_dT."""
    _check_sigma(sigma)
    curve = resonance_curve(
        config, "dT", [at_dT], fixed_xi=xi
    )
    sigma_min = float(curve.sigma_res[0])
    if not (math.isfinite(sigma_min) and sigma_min <= sigma):
        raise NotInZoneError(
            f"minimum threshold {sigma_min:.6g} at dT={at_dT!r} K is above sigma={sigma!r}"
        )
    dL0 = float(curve.argmin_dL[0])
    dT0 = float(at_dT)
    norm = standard_threshold(config.mirrors)

    def along_dL(sign: float):
        def inside(steps: np.ndarray) -> np.ndarray:
            return _lower_or_inf(config, norm, dL0 + sign * steps, dT0, xi) <= sigma

        return inside

    def along_dT(sign: float):
        def inside(steps: np.ndarray) -> np.ndarray:
            return _lower_or_inf(config, norm, dL0, dT0 + sign * steps, xi) <= sigma

        return inside

    half_period = config.length_period_m / 2.0
    right, cap_r = _edge(along_dL(+1.0), half_period, points, tol_dL_m)
    left, cap_l = _edge(along_dL(-1.0), half_period, points, tol_dL_m)
    span_T = _temperature_span(config)
    up, cap_u = _edge(along_dT(+1.0), span_T, points, tol_dT_K)
    down, cap_d = _edge(along_dT(-1.0), span_T, points, tol_dT_K)

    return ZoneWidths(
        dL_m=left + right,
        dT_K=up + down,
        center_dL_m=dL0,
        center_dT_K=dT0,
        sigma_min=sigma_min,
        capped_dL=cap_l or cap_r,
        capped_dT=cap_u or cap_d,
    )
