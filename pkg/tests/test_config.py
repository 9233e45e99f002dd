import json
import math

import pytest

from opolock.config import DEFAULTS, build_run_config, load_config, normalize, read_config_file, to_flat
from opolock.errors import ConfigError


def test_defaults():
    rc = load_config()
    assert rc.cavity.kind == "ring"
    assert rc.cavity.origin == "compensated"
    assert rc.sigma == 3.0
    assert rc.grid.dL.count == 401
    assert rc.grid.dT.count == 401
    assert rc.cavity.waveplate.angle == pytest.approx(math.radians(5.0))
    assert rc.output_format == "csv"
    assert rc.threads == 1
    assert set(to_flat(rc)) == set(DEFAULTS)


def test_degrees_are_converted():
    values = normalize({"waveplate.angle_deg": "30", "point.xi_deg": 90})
    assert values["waveplate.angle_rad"] == pytest.approx(math.radians(30.0))
    assert values["point.xi_rad"] == pytest.approx(math.pi / 2)
    assert "waveplate.angle_deg" not in values


@pytest.mark.parametrize(
    "raw",
    [
        {"waveplate.angle_deg": 5, "waveplate.angle_rad": 0.1},
        {"waveplate.angle_rad": 0.1, "waveplate.angle_deg": 5},
    ],
)
def test_angle_given_twice(raw):
    with pytest.raises(ConfigError):
        normalize(raw)


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as err:
        normalize({"crystal.lenght_m": 0.01})
    assert err.value.field == "crystal.lenght_m"
    with pytest.raises(ConfigError):
        normalize({"crystal.length_deg": 1})


def test_value_coercion():
    values = normalize(
        {
            "phase_match.enabled": "yes",
            "grid.dL_count": "21",
            "point.xi_rad": "none",
            "mirror.reflectivity": "0.95",
        }
    )
    assert values["phase_match.enabled"] is True
    assert values["grid.dL_count"] == 21
    assert values["point.xi_rad"] is None
    assert values["mirror.reflectivity"] == 0.95
    with pytest.raises(ConfigError) as err:
        normalize({"grid.dL_count": "many"})
    assert err.value.field == "grid.dL_count"
    with pytest.raises(ConfigError):
        normalize({"grid.dL_count": 2.5})


@pytest.mark.parametrize(
    "key, value",
    [
        ("crystal.length_m", "-1"),
        ("mirror.reflectivity", "1.0"),
        ("pump.sigma", "0"),
        ("cavity.kind", "bowtie"),
        ("grid.dT_count", "1"),
        ("output.format", "xml"),
        ("run.threads", "-2"),
        ("resonance.coarse", "2"),
    ],
)
def test_invalid_values_name_their_field(key, value):
    with pytest.raises(ConfigError) as err:
        build_run_config({key: value})
    assert err.value.field.split(".")[0] == key.split(".")[0]


def test_xi_scans_need_a_linear_cavity():
    with pytest.raises(ConfigError) as err:
        build_run_config({"resonance.scan": "surface"})
    assert err.value.field == "resonance.scan"
    rc = build_run_config({"resonance.scan": "surface", "cavity.kind": "linear"})
    assert rc.resonance.scan == "surface"


def test_dotenv_file(tmp_path):
    path = tmp_path / "opo.env"
    path.write_text("cavity.kind=linear\nwaveplate.angle_deg=45\n# comment\npump.sigma=2\n", encoding="utf-8")
    rc = load_config(path, {"pump.sigma": "2.5"})
    assert rc.cavity.kind == "linear"
    assert rc.cavity.waveplate.angle == pytest.approx(math.pi / 4)
    assert rc.sigma == 2.5


def test_nested_json_and_sidecar(tmp_path):
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"cavity": {"kind": "linear"}, "mirror": {"reflectivity": 0.8}}))
    raw = read_config_file(nested)
    assert raw == {"cavity.kind": "linear", "mirror.reflectivity": 0.8}

    rc = load_config(nested)
    side = tmp_path / "run.sidecar.json"
    side.write_text(json.dumps({"command": "zone", "config": to_flat(rc)}))
    again = load_config(side)
    assert to_flat(again) == to_flat(rc)


def test_missing_file():
    with pytest.raises(ConfigError) as err:
        load_config("/nonexistent/opo.env")
    assert err.value.field == "--config"
