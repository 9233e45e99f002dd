import math

import numpy as np
import pytest

from opolock.cavity import CavityConfig, DerivedPhases, MirrorParams
from opolock.crystal import CrystalParams, PhaseMatchModel
from opolock.polarization import WaveplateParams, waveplate_coeffs
from opolock.solver import standard_threshold


def read_csv(path):
    """Header and records of a CSV written by opolock.output.write_csv."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return list(data.dtype.names), np.atleast_1d(data)


def ring_config(angle_deg: float = 5.0, retardance: float = math.pi, **kwargs) -> CavityConfig:
    return CavityConfig(
        waveplate=WaveplateParams(retardance=retardance, angle=math.radians(angle_deg)),
        kind="ring",
        **kwargs,
    )


def linear_config(angle_deg: float = 5.0, retardance: float = math.pi, **kwargs) -> CavityConfig:
    return CavityConfig(
        waveplate=WaveplateParams(retardance=retardance, angle=math.radians(angle_deg)),
        kind="linear",
        **kwargs,
    )


def ring_phases(
    delta: float,
    beta: float,
    *,
    angle_deg: float = 5.0,
    retardance: float = math.pi,
    gain_factor: complex = 1.0,
) -> DerivedPhases:
    """Ring phases given delta and beta = theta/2 - psi directly."""
    c = waveplate_coeffs(WaveplateParams(retardance=retardance, angle=math.radians(angle_deg)))
    theta = 2.0 * (beta + c.psi)
    return DerivedPhases(
        kind="ring",
        delta=delta,
        theta=theta,
        delta_prime=theta - c.psi,
        xi=0.0,
        alpha0=c.alpha0,
        psi=c.psi,
        epsilon=c.epsilon,
        gain_factor=gain_factor,
    )


@pytest.fixture
def mirrors() -> MirrorParams:
    return MirrorParams(reflectivity=0.9)


@pytest.fixture
def norm(mirrors):
    return standard_threshold(mirrors)


@pytest.fixture
def crystal() -> CrystalParams:
    return CrystalParams()


@pytest.fixture
def phase_matched() -> PhaseMatchModel:
    return PhaseMatchModel(t_pm_K=0.0, fwhm_K=15.0, enabled=True)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("OPOLOCK_OUT_DIR", raising=False)
    return tmp_path / "out"
