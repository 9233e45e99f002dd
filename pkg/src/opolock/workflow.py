from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np

from .cavity import build_system, derive_phases
from .config import RunConfig, to_flat
from .crystal import coupling_g
from .errors import NegativeDiscriminantError, StageOutputError
from .output import dumps, sidecar, write_csv, write_json
from .solver import appendix_lower_threshold, standard_threshold, threshold_roots
from .sweep import cross_section, resonance_curve, resonance_surface, zone_scan, zone_widths

COMMANDS = ("threshold", "zone", "resonance", "widths")


class OpoPipeline:
    """
    One command per run:
    config -> stage (threshold | zone | resonance | widths) -> write -> check result

    The session is a dict with a "state" key filled by the stage and a "meta"
    key listing the files written.
    """

    def __init__(self, rc: RunConfig, *, debug: bool = False) -> None:
        self.rc = rc
        self.debug = debug
        self.flat = to_flat(rc)
        # Short run identifier derived from the config so logs and sidecars correlate
        digest = hashlib.sha256(json.dumps(self.flat, sort_keys=True).encode("utf-8"))
        self.run_id = digest.hexdigest()[:8]
        self._stages: Dict[str, Callable[[Dict[str, Any]], None]] = {
            "threshold": self._threshold,
            "zone": self._zone,
            "resonance": self._resonance,
            "widths": self._widths,
        }

    def run(self, command: str) -> Dict[str, Any]:
        if command not in self._stages:
            raise ValueError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        session: Dict[str, Any] = {"state": {"command": command, "run_id": self.run_id}}
        self._log("CONFIG", f"run={self.run_id} command={command} kind={self.rc.cavity.kind}")
        self._stages[command](session)
        _require_result(session, command)
        return session

    def _log(self, tag: str, message: str) -> None:
        if self.debug:
            print(f"[{tag}] {message}", file=sys.stderr)

    def _path(self, name: str) -> Path:
        return self.rc.output_dir / name

    def _write_sidecar(self, session: Dict[str, Any], name: str, extra: Dict[str, Any]) -> None:
        extra = {"run_id": self.run_id, **extra}
        path = write_json(self._path(name), sidecar(session["state"]["command"], self.flat, extra))
        self._record(session, path)

    def _record(self, session: Dict[str, Any], path: Path) -> None:
        session.setdefault("meta", {}).setdefault("files", []).append(str(path))
        self._log("WRITE", str(path))

    # Stages

    def _threshold(self, session: Dict[str, Any]) -> None:
        cavity = self.rc.cavity
        phases = derive_phases(
            cavity.crystal,
            cavity.waveplate,
            cavity.mirrors,
            self.rc.point,
            cavity.kind,
            phase_match=cavity.phase_match,
            origin=cavity.origin,
        )
        norm = standard_threshold(cavity.mirrors)
        result = threshold_roots(build_system(phases, cavity.mirrors), norm)
        gain_mag = abs(phases.gain_factor)

        report: Dict[str, Any] = {
            "kind": cavity.kind,
            "status": result.status.value,
            "roots": list(result.roots),
            "det_residuals": list(result.det_residuals),
            "phases": {
                "delta": phases.delta,
                "theta": phases.theta,
                "psi": phases.psi,
                "xi": phases.xi,
                "delta_prime": phases.delta_prime,
            },
            "alpha0": phases.alpha0,
            "epsilon_im": phases.epsilon.imag,
            "g": coupling_g(cavity.crystal),
            "g_prime_abs": coupling_g(cavity.crystal) * gain_mag,
            "sigma0_intensity": norm.sigma0_intensity,
        }
        if cavity.kind == "ring":
            report["appendix_check"] = None
            if gain_mag > 0.0:
                try:
                    intensity = appendix_lower_threshold(
                        phases.alpha0,
                        phases.psi,
                        phases.epsilon,
                        cavity.mirrors.r_prime,
                        phases.delta,
                        phases.theta,
                        gain_mag,
                    )
                    report["appendix_check"] = intensity / norm.sigma0_intensity
                except NegativeDiscriminantError as e:
                    report["appendix_note"] = str(e)
        self._log("CONFIG", f"status={result.status.value} roots={list(result.roots)}")
        session["state"]["result"] = report

    def _zone(self, session: Dict[str, Any]) -> None:
        rc = self.rc
        self._log("ZONE", f"grid {rc.grid.dT.count}x{rc.grid.dL.count} sigma={rc.sigma} threads={rc.threads}")
        zmap = zone_scan(rc.grid, rc.sigma, threads=rc.threads)
        in_zone = zmap.in_zone
        self._log("ZONE", f"in-zone fraction={zmap.in_zone_fraction:.6f} flagged={zmap.flagged_count}")

        if rc.output_format == "csv":
            dT_col, dL_col = np.meshgrid(zmap.dT_values, zmap.dL_values, indexing="ij")
            path = write_csv(
                self._path("zone.csv"),
                {"dL_m": dL_col, "dT_K": dT_col, "sigma_th": zmap.sigma_th, "in_zone": in_zone},
            )
        else:
            path = write_json(
                self._path("zone.json"),
                {
                    "dL_m": zmap.dL_values,
                    "dT_K": zmap.dT_values,
                    "sigma_th": zmap.sigma_th,
                    "in_zone": in_zone,
                },
            )
        self._record(session, path)

        summary = {
            "cells": int(zmap.sigma_th.size),
            "in_zone_cells": int(np.count_nonzero(in_zone)),
            "in_zone_fraction": zmap.in_zone_fraction,
            "in_zone_area_m_K": zmap.in_zone_area,
            "flagged_cells": zmap.flagged_count,
            "min_sigma_th": float(np.nanmin(zmap.sigma_th)) if np.isfinite(zmap.sigma_th).any() else None,
        }
        self._write_sidecar(session, "zone.sidecar.json", {**zmap.metadata, **summary})
        session["state"]["result"] = summary

    def _resonance(self, session: Dict[str, Any]) -> None:
        rc, res = self.rc, self.rc.resonance
        common = dict(window_m=res.window_m, coarse=res.coarse, tol_m=res.tol_m, threads=rc.threads)
        self._log("RESONANCE", f"scan={res.scan} window={res.window_m} coarse={res.coarse}")

        if res.scan in ("dT", "xi"):
            values = res.dT.values() if res.scan == "dT" else res.xi.values()
            curve = resonance_curve(
                rc.cavity, res.scan, values, fixed_dT=res.fixed_dT_K, fixed_xi=res.fixed_xi_rad, **common
            )
            columns = {"scan_value": curve.values, "sigma_res": curve.sigma_res, "argmin_dL_m": curve.argmin_dL}
            finite = curve.sigma_res[np.isfinite(curve.sigma_res)]
            summary = {
                "scan": res.scan,
                "samples": int(curve.values.size),
                "no_root_samples": int(curve.values.size - finite.size),
                "unbracketed_samples": int(np.count_nonzero(~curve.bracketed & np.isfinite(curve.sigma_res))),
                "min_sigma_res": float(finite.min()) if finite.size else None,
                "max_sigma_res": float(finite.max()) if finite.size else None,
            }
        elif res.scan == "surface":
            surface = resonance_surface(rc.cavity, rc.grid.xi.values(), res.dT.values(), **common)
            xi_col, dT_col = np.meshgrid(surface.xi_values, surface.dT_values, indexing="ij")
            columns = {"xi_rad": xi_col.ravel(), "dT_K": dT_col.ravel(), "sigma_res": surface.sigma_res.ravel()}
            best, best_dT = surface.best_over_dT()
            self._write_table(
                session,
                "resonance_best",
                {"xi_rad": surface.xi_values, "sigma_res": best, "dT_K": best_dT},
            )
            finite = surface.sigma_res[np.isfinite(surface.sigma_res)]
            summary = {
                "scan": "surface",
                "samples": int(surface.sigma_res.size),
                "min_sigma_res": float(finite.min()) if finite.size else None,
                "max_sigma_res": float(finite.max()) if finite.size else None,
            }
        else:
            section = cross_section(rc.cavity, rc.point.dT_K, rc.grid.dL.values(), rc.point.xi_override)
            columns = {"dL_m": section.dL_values, "sigma_th": section.lower, "sigma_th_upper": section.upper}
            finite = section.lower[np.isfinite(section.lower)]
            summary = {
                "scan": "section",
                "dT_K": section.dT_K,
                "samples": int(section.dL_values.size),
                "min_sigma_th": float(finite.min()) if finite.size else None,
            }

        self._write_table(session, "resonance", columns)
        self._write_sidecar(session, "resonance.sidecar.json", summary)
        session["state"]["result"] = summary

    def _widths(self, session: Dict[str, Any]) -> None:
        rc = self.rc
        self._log("WIDTHS", f"sigma={rc.sigma} at dT={rc.widths_dT_K} K")
        widths = zone_widths(rc.cavity, rc.sigma, rc.widths_dT_K, xi=rc.point.xi_override)
        finesse = rc.cavity.mirrors.finesse
        report = {
            "dL_width_m": widths.dL_m,
            "dT_width_K": widths.dT_K,
            "center_dL_m": widths.center_dL_m,
            "center_dT_K": widths.center_dT_K,
            "sigma_min": widths.sigma_min,
            "capped_dL": widths.capped_dL,
            "capped_dT": widths.capped_dT,
            "finesse": finesse,
            "lambda_over_finesse_m": rc.cavity.crystal.signal_wavelength_m / finesse,
        }
        self._log("WIDTHS", f"dL={widths.dL_m:.6e} m dT={widths.dT_K:.6e} K")
        self._write_table(session, "widths", {k: [v] for k, v in report.items()})
        self._write_sidecar(session, "widths.sidecar.json", {})
        session["state"]["result"] = report

    def _write_table(self, session: Dict[str, Any], stem: str, columns: Dict[str, Any]) -> None:
        if self.rc.output_format == "csv":
            path = write_csv(self._path(f"{stem}.csv"), columns)
        else:
            path = write_json(self._path(f"{stem}.json"), columns)
        self._record(session, path)


def run_command(rc: RunConfig, command: str, *, debug: bool = False) -> Dict[str, Any]:
    return OpoPipeline(rc, debug=debug).run(command)


def render(session: Dict[str, Any]) -> str:
    """The command's stdout: its result object plus the files written."""
    state = session.get("state", {})
    payload: Dict[str, Any] = dict(state.get("result", {}))
    files: Optional[list] = session.get("meta", {}).get("files")
    if files:
        payload["files"] = files
    return dumps(payload)


def _require_result(session: Dict[str, Any], command: str) -> None:
    """Every stage leaves a dict under state["result"]; anything else is a bug in the stage."""
    result = session.get("state", {}).get("result")
    if not isinstance(result, dict):
        raise StageOutputError(f"stage {command!r} produced {type(result).__name__} instead of a result dict")
