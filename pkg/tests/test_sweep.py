import math

import numpy as np
import pytest

from conftest import linear_config, ring_config
from opolock.cavity import MirrorParams, derive_phases_grid, wrap_phase
from opolock.crystal import CrystalParams, PhaseMatchModel
from opolock.errors import ConfigError, NotInZoneError, WindowTooNarrowError
from opolock.sweep import (
    AxisRange,
    GridSpec,
    cross_section,
    resonance_curve,
    resonance_surface,
    zone_scan,
    zone_widths,
)

PHASE_MATCH = PhaseMatchModel(t_pm_K=0.0, fwhm_K=15.0, enabled=True)


def _small_grid(config, n_dL=41, n_dT=21):
    return GridSpec(
        config=config,
        dL=AxisRange(-30e-9, 30e-9, n_dL, "grid.dL"),
        dT=AxisRange(-0.5, 0.5, n_dT, "grid.dT"),
    )


def _temperature_period(cp: CrystalParams) -> float:
    return cp.signal_wavelength_m / (cp.length_m * abs(cp.dn1_dT - cp.dn2_dT))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(first, last) index of every run of True."""
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def test_axis_range_validation():
    assert AxisRange(0.0, 1.0, 3).values().tolist() == [0.0, 0.5, 1.0]
    with pytest.raises(ConfigError) as err:
        AxisRange(1.0, 0.0, 5, "grid.dL")
    assert err.value.field == "grid.dL"
    with pytest.raises(ConfigError):
        AxisRange(0.0, 1.0, 1, "grid.dT")
    with pytest.raises(ConfigError):
        AxisRange(0.0, math.inf, 5)


def test_zone_map_shape_and_metadata():
    spec = _small_grid(ring_config(5.0))
    zmap = zone_scan(spec, 3.0)
    assert zmap.sigma_th.shape == (21, 41)
    assert zmap.metadata["kind"] == "ring"
    assert zmap.metadata["cells"] == spec.cell_count == 861
    assert 0.0 < zmap.in_zone_fraction < 1.0
    assert zmap.in_zone_area > 0.0
    assert zmap.flagged_count == 0


def test_no_plate_coupling_locks_only_at_compensation():
    zmap = zone_scan(_small_grid(ring_config(0.0)), 3.0)
    row = int(np.argmin(np.abs(zmap.dT_values)))
    assert zmap.in_zone[row].any()
    others = np.delete(zmap.in_zone, row, axis=0)
    assert not others.any()
    assert np.isnan(np.delete(zmap.sigma_th, row, axis=0)).all()


def test_zone_grows_with_plate_angle():
    small = zone_scan(_small_grid(ring_config(1.0)), 3.0)
    large = zone_scan(_small_grid(ring_config(5.0)), 3.0)
    assert large.in_zone_area > small.in_zone_area > 0.0


def test_half_wave_plate_locks_over_a_larger_zone_than_quarter_wave():
    def area(retardance):
        spec = GridSpec(
            config=ring_config(5.0, retardance),
            dL=AxisRange(-200e-9, 200e-9, 161, "grid.dL"),
            dT=AxisRange(-1.2, 1.2, 97, "grid.dT"),
        )
        return zone_scan(spec, 2.0).in_zone_area

    half, quarter = area(math.pi), area(math.pi / 2)
    assert half > quarter > 0.0


def test_linear_cavity_zone_lobes_are_unequal():
    config = linear_config(5.0, math.pi / 2)
    spec = GridSpec(
        config=config,
        dL=AxisRange(-120e-9, 120e-9, 161, "grid.dL"),
        dT=AxisRange(-1.0, 1.0, 81, "grid.dT"),
        xi_fixed=math.pi / 4,
    )
    zmap = zone_scan(spec, 3.0)
    delta = wrap_phase(derive_phases_grid(config, zmap.dL_values[None, :], zmap.dT_values[:, None]).delta)
    inside = zmap.in_zone
    total = np.count_nonzero(inside)
    positive = np.count_nonzero(inside & (delta > 0.0))
    negative = np.count_nonzero(inside & (delta <= 0.0))
    assert total > 0
    assert abs(positive - negative) > 0.01 * total


@pytest.mark.slow
def test_zone_grows_with_plate_angle_on_default_grid():
    small = zone_scan(GridSpec(config=ring_config(1.0)), 3.0, threads=0)
    large = zone_scan(GridSpec(config=ring_config(5.0)), 3.0, threads=0)
    assert large.in_zone_area > small.in_zone_area > 0.0


def test_zone_nests_with_pump_level():
    spec = _small_grid(ring_config(5.0))
    low = zone_scan(spec, 2.0).in_zone
    high = zone_scan(spec, 3.0).in_zone
    assert not (low & ~high).any()
    assert high.sum() > low.sum()


def test_zone_scan_does_not_depend_on_threads():
    spec = _small_grid(ring_config(5.0), n_dT=41)
    serial = zone_scan(spec, 3.0, threads=1)
    pooled = zone_scan(spec, 3.0, threads=3)
    again = zone_scan(spec, 3.0, threads=1)
    np.testing.assert_array_equal(serial.sigma_th, pooled.sigma_th)
    np.testing.assert_array_equal(serial.sigma_th, again.sigma_th)


def test_zone_scan_rejects_bad_arguments():
    spec = _small_grid(ring_config(5.0))
    with pytest.raises(ConfigError) as err:
        zone_scan(spec, 0.0)
    assert err.value.field == "pump.sigma"
    with pytest.raises(ConfigError) as err:
        zone_scan(spec, 3.0, threads=-1)
    assert err.value.field == "run.threads"


def test_weak_coupling_row_splits_into_two_runs():
    config = ring_config(1.0)
    cp = config.crystal
    dT = 0.1
    center = -cp.length_m * (cp.dn1_dT + cp.dn2_dT) / 2.0 * dT
    offsets = np.linspace(-40e-9, 40e-9, 1601)
    section = cross_section(config, dT, center + offsets)
    inside = np.isfinite(section.lower) & (np.nan_to_num(section.lower, nan=np.inf) <= 2.0)
    runs = _runs(inside)
    assert len(runs) == 2
    (a0, a1), (b0, b1) = runs
    assert offsets[a1] < 0.0 < offsets[b0]
    assert 2e-9 < -offsets[a1] < 8e-9
    assert 2e-9 < offsets[b0] < 8e-9


def test_cross_section_orders_roots():
    config = ring_config(5.0)
    section = cross_section(config, 0.05, np.linspace(-40e-9, 40e-9, 81))
    finite = np.isfinite(section.lower)
    assert finite.any()
    assert np.all(section.lower[finite] >= 1.0 - 1e-9)
    both = finite & np.isfinite(section.upper)
    assert np.all(section.upper[both] >= section.lower[both])


@pytest.mark.parametrize("angle_deg", [1.0, 5.0, 30.0])
def test_unit_threshold_on_resonance_at_compensation(angle_deg):
    curve = resonance_curve(ring_config(angle_deg), "dT", [0.0])
    assert curve.sigma_res[0] == pytest.approx(1.0, abs=1e-6)
    assert curve.bracketed[0]
    # minimum sits where cos(k dL) equals the plate transmission alpha0
    chi = math.acos(math.cos(2.0 * math.radians(angle_deg)))
    k_s = 2.0 * math.pi / ring_config().crystal.signal_wavelength_m
    assert abs(curve.argmin_dL[0]) * k_s == pytest.approx(chi, rel=1e-3)


def test_resonance_repeats_with_temperature_period():
    config = ring_config(30.0)
    period = _temperature_period(config.crystal)
    assert period == pytest.approx(35.447, rel=1e-3)
    curve = resonance_curve(config, "dT", [0.3, 0.3 + period, 1.7, 1.7 + period])
    assert curve.sigma_res[1] == pytest.approx(curve.sigma_res[0], rel=1e-6)
    assert curve.sigma_res[3] == pytest.approx(curve.sigma_res[2], rel=1e-6)


def test_phase_matching_breaks_the_temperature_period():
    config = ring_config(30.0, phase_match=PHASE_MATCH)
    period = _temperature_period(config.crystal)
    curve = resonance_curve(config, "dT", [0.3, 0.3 + period])
    assert curve.sigma_res[1] / curve.sigma_res[0] > 1.05


def test_half_wave_plate_at_45_degrees_locks_everywhere():
    curve = resonance_curve(ring_config(45.0), "dT", np.linspace(-10.0, 10.0, 9))
    np.testing.assert_allclose(curve.sigma_res, 1.0, atol=1e-6)


def test_half_wave_plate_at_45_degrees_follows_phase_matching():
    config = ring_config(45.0, phase_match=PHASE_MATCH)
    dT = np.linspace(8.0, 14.0, 7)
    curve = resonance_curve(config, "dT", dT)
    x = 2.0 * 1.3915573 / 15.0 * dT
    expected = 1.0 / (np.sin(x) / x) ** 2
    np.testing.assert_allclose(curve.sigma_res, expected, rtol=1e-5)
    assert np.all(np.diff(curve.sigma_res) > 0)
    assert curve.sigma_res[-1] > 10.0


def test_quarter_wave_plate_in_linear_cavity():
    config = linear_config(45.0, math.pi / 2)
    xi = np.array([math.pi / 2, 2 * math.pi / 3, math.pi, 4 * math.pi / 3])
    curve = resonance_curve(config, "xi", xi, fixed_dT=0.7)
    np.testing.assert_allclose(curve.sigma_res, 1.0 / (4.0 * np.sin(xi / 2.0) ** 2), rtol=1e-6)
    assert curve.fixed == {"dT": 0.7}
    assert np.isnan(resonance_curve(config, "xi", [0.0]).sigma_res[0])


def test_quarter_wave_surface_is_flat_in_temperature():
    config = linear_config(45.0, math.pi / 2)
    surface = resonance_surface(config, [math.pi / 2, math.pi], [-1.0, 0.0, 2.0])
    assert surface.sigma_res.shape == (2, 3)
    np.testing.assert_allclose(surface.sigma_res[0], 0.5, rtol=1e-6)
    np.testing.assert_allclose(surface.sigma_res[1], 0.25, rtol=1e-6)
    best, _ = surface.best_over_dT()
    np.testing.assert_allclose(best, [0.5, 0.25], rtol=1e-6)


def test_resonance_window_must_cover_a_period():
    with pytest.raises(WindowTooNarrowError):
        resonance_curve(ring_config(), "dT", [0.0], window_m=100e-9)
    with pytest.raises(ConfigError):
        resonance_curve(ring_config(), "dT", [0.0], coarse=2)
    with pytest.raises(ConfigError):
        resonance_curve(ring_config(), "length", [0.0])


def test_zone_widths_near_cavity_linewidth():
    config = ring_config(1.0)
    widths = zone_widths(config, 2.0, 0.0)
    dL, dT = widths
    linewidth = config.crystal.signal_wavelength_m / config.mirrors.finesse
    assert dL == pytest.approx(47.5e-9, rel=0.1)
    assert 0.5 < dL / linewidth < 2.0
    assert 0.0 < dT < 1.0
    assert not widths.capped_dL and not widths.capped_dT
    assert widths.sigma_min == pytest.approx(1.0, abs=1e-6)


def test_zone_widths_at_ninety_percent_intensity_reflectivity():
    # R = r^2 = 0.9
    config = ring_config(1.0, mirrors=MirrorParams(reflectivity=math.sqrt(0.9)))
    widths = zone_widths(config, 2.0, 0.0)
    linewidth = config.crystal.signal_wavelength_m / config.mirrors.finesse
    assert 0.5 <= widths.dL_m / linewidth <= 2.0
    assert 0.025 <= widths.dT_K <= 0.1
    assert not widths.capped_dL and not widths.capped_dT


def test_zone_widths_grow_with_pump_level():
    config = ring_config(1.0)
    narrow = zone_widths(config, 2.0, 0.0)
    wide = zone_widths(config, 3.0, 0.0)
    assert wide.dL_m > narrow.dL_m
    assert wide.dT_K > narrow.dT_K


def test_zone_widths_vanish_at_threshold():
    widths = zone_widths(ring_config(5.0), 1.0 + 1e-6, 0.0)
    assert 0.0 < widths.dL_m < 1e-9
    assert 0.0 < widths.dT_K < 1e-3


def test_zone_widths_outside_zone():
    with pytest.raises(NotInZoneError):
        zone_widths(ring_config(5.0), 0.5, 0.0)
