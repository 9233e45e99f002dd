"""
opolock.config

RunConfig ingestion. A config file is a flat list of dotted, unit-suffixed
keys:

    cavity.kind=ring
    crystal.length_m=0.01
    waveplate.angle_deg=5

parsed with python-dotenv, or a JSON document (flat, nested, or a previous
run's sidecar with its "config" object). Every key has a default in DEFAULTS;
unknown keys are rejected. Angles may be given as *_rad or *_deg.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import dotenv_values

from .cavity import CavityConfig, MirrorParams, OperatingPoint
from .crystal import CrystalParams, PhaseMatchModel
from .errors import ConfigError
from .polarization import WaveplateParams
from .sweep import AxisRange, GridSpec

DEFAULTS: dict[str, Any] = {
    "cavity.kind": "ring",
    "cavity.origin": "compensated",
    "crystal.length_m": 0.01,
    "crystal.n0": 1.75,
    "crystal.n1": 1.75,
    "crystal.n2": 1.75,
    "crystal.chi2_m_per_V": 6.4e-12,
    "crystal.dn0_dT": 0.0,
    "crystal.dn1_dT": 1.3e-5,
    "crystal.dn2_dT": 1.6e-5,
    "crystal.pump_wavelength_m": 531.7e-9,
    "waveplate.retardance_rad": math.pi,
    "waveplate.angle_rad": math.radians(5.0),
    "waveplate.mean_index": 1.54,
    "waveplate.thickness_m": 1.0e-3,
    "mirror.reflectivity": 0.9,
    "mirror.loss": 0.0,
    "mirror.zeta0_rad": 0.0,
    "mirror.zeta1_rad": 0.0,
    "mirror.zeta2_rad": 0.0,
    "phase_match.enabled": False,
    "phase_match.t_pm_K": 0.0,
    "phase_match.fwhm_K": 15.0,
    "point.dL_m": 0.0,
    "point.dT_K": 0.0,
    "point.xi_rad": None,
    "pump.sigma": 3.0,
    "grid.dL_min_m": -30e-9,
    "grid.dL_max_m": 30e-9,
    "grid.dL_count": 401,
    "grid.dT_min_K": -0.5,
    "grid.dT_max_K": 0.5,
    "grid.dT_count": 401,
    "grid.xi_rad": None,
    "grid.xi_min_rad": 0.0,
    "grid.xi_max_rad": 2.0 * math.pi,
    "grid.xi_count": 101,
    "resonance.scan": "dT",
    "resonance.dT_min_K": -10.0,
    "resonance.dT_max_K": 10.0,
    "resonance.dT_count": 201,
    "resonance.xi_min_rad": 0.0,
    "resonance.xi_max_rad": 2.0 * math.pi,
    "resonance.xi_count": 101,
    "resonance.fixed_dT_K": 0.0,
    "resonance.fixed_xi_rad": None,
    "resonance.window_m": None,
    "resonance.coarse": 64,
    "resonance.tol_m": 1e-12,
    "widths.dT_K": 0.0,
    "output.format": "csv",
    "output.dir": "out",
    "run.threads": 1,
}

RESONANCE_SCANS = ("dT", "xi", "surface", "section")
OUTPUT_FORMATS = ("csv", "json")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class ResonanceSettings:
    scan: str
    dT: AxisRange
    xi: AxisRange
    fixed_dT_K: float
    fixed_xi_rad: Optional[float]
    window_m: Optional[float]
    coarse: int
    tol_m: float


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration of one command, with the flat key mapping it came from."""

    values: Mapping[str, Any]
    cavity: CavityConfig
    point: OperatingPoint
    sigma: float
    grid: GridSpec
    resonance: ResonanceSettings
    widths_dT_K: float
    output_format: str
    output_dir: Path
    threads: int


def _coerce(key: str, raw: Any) -> Any:
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
    if default is None:
        if raw is None or (isinstance(raw, str) and raw.lower() in ("", "none", "null")):
            return None
        default = 0.0
    if raw is None:
        raise ConfigError(key, "missing value")
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            return int(raw) if not isinstance(raw, str) else int(raw, 10)
        if isinstance(default, float):
            if isinstance(raw, bool):
                raise ValueError(raw)
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        kind = type(default).__name__
        raise ConfigError(key, f"expected {kind}, got {raw!r}") from None


def normalize(raw: Mapping[str, Any]) -> dict[str, Any]:
    """Defaults overlaid with the given keys, *_deg folded into *_rad, values typed."""
    values = dict(DEFAULTS)
    seen: set[str] = set()
    for key, value in raw.items():
        key = key.strip()
        if key.endswith("_deg"):
            target = key[: -len("_deg")] + "_rad"
            if target not in DEFAULTS:
                raise ConfigError(key, "unknown configuration key")
            if target in seen:
                raise ConfigError(key, f"given together with {target}")
            deg = _coerce(target, value)
            values[target] = None if deg is None else math.radians(deg)
            seen.add(target)
            continue
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown configuration key")
        if key in seen:
            raise ConfigError(key, "given more than once (as _rad and _deg)")
        values[key] = _coerce(key, value)
        seen.add(key)
    return values


def _flatten(obj: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def read_config_file(path: Path | str) -> dict[str, Any]:
    """Raw key/value pairs from a key=value file or a JSON document."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError("--config", f"invalid JSON in {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("--config", "JSON config must be an object")
        if isinstance(data.get("config"), dict):
            data = data["config"]
        return _flatten(data)
    return dict(dotenv_values(path))


def build_run_config(raw: Mapping[str, Any]) -> RunConfig:
    """Validate every section; physical parameters go through their own invariants."""
    v = normalize(raw)

    crystal = CrystalParams(
        length_m=v["crystal.length_m"],
        n0=v["crystal.n0"],
        n1=v["crystal.n1"],
        n2=v["crystal.n2"],
        chi2_m_per_V=v["crystal.chi2_m_per_V"],
        dn1_dT=v["crystal.dn1_dT"],
        dn2_dT=v["crystal.dn2_dT"],
        pump_wavelength_m=v["crystal.pump_wavelength_m"],
        dn0_dT=v["crystal.dn0_dT"],
    )
    waveplate = WaveplateParams(
        retardance=v["waveplate.retardance_rad"],
        angle=v["waveplate.angle_rad"],
        mean_index=v["waveplate.mean_index"],
        thickness_m=v["waveplate.thickness_m"],
    )
    mirrors = MirrorParams(
        reflectivity=v["mirror.reflectivity"],
        loss=v["mirror.loss"],
        zeta0=v["mirror.zeta0_rad"],
        zeta1=v["mirror.zeta1_rad"],
        zeta2=v["mirror.zeta2_rad"],
    )
    phase_match = PhaseMatchModel(
        t_pm_K=v["phase_match.t_pm_K"],
        fwhm_K=v["phase_match.fwhm_K"],
        enabled=v["phase_match.enabled"],
    )
    cavity = CavityConfig(
        crystal=crystal,
        waveplate=waveplate,
        mirrors=mirrors,
        phase_match=phase_match,
        kind=v["cavity.kind"],
        origin=v["cavity.origin"],
    )
    point = OperatingPoint(
        dL_m=v["point.dL_m"],
        dT_K=v["point.dT_K"],
        xi_override=v["point.xi_rad"],
    )

    sigma = v["pump.sigma"]
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ConfigError("pump.sigma", f"must be a finite value > 0, got {sigma!r}")

    grid = GridSpec(
        config=cavity,
        dL=AxisRange(v["grid.dL_min_m"], v["grid.dL_max_m"], v["grid.dL_count"], "grid.dL"),
        dT=AxisRange(v["grid.dT_min_K"], v["grid.dT_max_K"], v["grid.dT_count"], "grid.dT"),
        xi=AxisRange(v["grid.xi_min_rad"], v["grid.xi_max_rad"], v["grid.xi_count"], "grid.xi"),
        xi_fixed=v["grid.xi_rad"],
    )

    scan = v["resonance.scan"]
    if scan not in RESONANCE_SCANS:
        raise ConfigError("resonance.scan", f"must be one of {', '.join(RESONANCE_SCANS)}, got {scan!r}")
    if scan in ("xi", "surface") and cavity.kind != "linear":
        raise ConfigError("resonance.scan", f"'{scan}' scans need cavity.kind=linear")
    window = v["resonance.window_m"]
    if window is not None and not (math.isfinite(window) and window > 0.0):
        raise ConfigError("resonance.window_m", "must be > 0")
    if v["resonance.coarse"] < 3:
        raise ConfigError("resonance.coarse", "must be >= 3")
    if not v["resonance.tol_m"] > 0.0:
        raise ConfigError("resonance.tol_m", "must be > 0")
    resonance = ResonanceSettings(
        scan=scan,
        dT=AxisRange(v["resonance.dT_min_K"], v["resonance.dT_max_K"], v["resonance.dT_count"], "resonance.dT"),
        xi=AxisRange(v["resonance.xi_min_rad"], v["resonance.xi_max_rad"], v["resonance.xi_count"], "resonance.xi"),
        fixed_dT_K=v["resonance.fixed_dT_K"],
        fixed_xi_rad=v["resonance.fixed_xi_rad"],
        window_m=window,
        coarse=v["resonance.coarse"],
        tol_m=v["resonance.tol_m"],
    )

    fmt = v["output.format"]
    if fmt not in OUTPUT_FORMATS:
        raise ConfigError("output.format", f"must be 'csv' or 'json', got {fmt!r}")
    if v["run.threads"] < 0:
        raise ConfigError("run.threads", "must be >= 0 (0 = one per CPU)")
    if not math.isfinite(v["widths.dT_K"]):
        raise ConfigError("widths.dT_K", "must be finite")

    return RunConfig(
        values=v,
        cavity=cavity,
        point=point,
        sigma=sigma,
        grid=grid,
        resonance=resonance,
        widths_dT_K=v["widths.dT_K"],
        output_format=fmt,
        output_dir=Path(v["output.dir"]),
        threads=v["run.threads"],
    )


def load_config(path: Optional[Path | str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Read a config file (or start from the defaults) and apply overrides on top."""
    raw: dict[str, Any] = {} if path is None else read_config_file(path)
    if overrides:
        raw.update(overrides)
    return build_run_config(raw)


def to_flat(rc: RunConfig) -> dict[str, Any]:
    """The complete flat key mapping, suitable for a sidecar and for re-running."""
    return {key: rc.values[key] for key in DEFAULTS}
