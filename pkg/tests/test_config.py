import json
import math

import pytest
from hypothesis import given, strategies as st

from mcv2x.config import (
    SOLVER_FIELDS,
    SYSTEM_FIELDS,
    ConfigError,
    SolverConfig,
    SystemConfig,
    config_from_dict,
    config_to_dict,
    db_to_linear,
    dbm_to_watts,
    displaced_intensity,
    linear_to_db,
    load_config,
    validate,
)

# reference constants evaluated at 30 significant digits (mpmath)
P_23DBM = 0.199526231496887980537864081245
P_M96DBM = 2.51188643150958216591502799795e-13


def test_dbm_to_watts_examples():
    assert dbm_to_watts(0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watts(23) == pytest.approx(P_23DBM, rel=1e-14)
    assert dbm_to_watts(-96) == pytest.approx(P_M96DBM, rel=1e-14)
    assert round(dbm_to_watts(23), 7) == 0.1995262


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_conversions_reject_non_finite(bad):
    with pytest.raises(ValueError):
        dbm_to_watts(bad)
    with pytest.raises(ValueError):
        db_to_linear(bad)


@pytest.mark.parametrize("db, lin", [(0, 1.0), (10, 10.0), (40, 10000.0)])
def test_db_to_linear(db, lin):
    assert db_to_linear(db) == pytest.approx(lin, rel=1e-15)
    assert linear_to_db(lin) == pytest.approx(db, abs=1e-12)


@given(st.floats(-200, 100))
def test_decade_scaling(p):
    assert dbm_to_watts(p + 10) == pytest.approx(10 * dbm_to_watts(p), rel=1e-12)


def test_displaced_intensity_examples():
    assert displaced_intensity(3, 3.5, 0, 0) == 3.0
    assert displaced_intensity(3, 3.5, 0, 2) == pytest.approx(3.02608119920691937856, rel=1e-12)
    # mpmath reference: 6*exp(0.5*(2 ln10/40)^2) = 6.0398962936...
    assert displaced_intensity(6, 4.0, 0, 2) == pytest.approx(6.03989629360367982721, rel=1e-12)


@given(st.floats(0.01, 100), st.floats(2.01, 8), st.floats(0, 10), st.floats(0, 10))
def test_displaced_intensity_monotone_in_std(d, alpha, s1, s2):
    lo, hi = sorted((s1, s2))
    assert displaced_intensity(d, alpha, 0, lo) <= displaced_intensity(d, alpha, 0, hi)
    assert displaced_intensity(d, alpha, 0, lo) >= d


@given(st.floats(1e-3, 1e3), st.floats(0.1, 10))
def test_displaced_intensity_identity(d, alpha):
    assert displaced_intensity(d, alpha, 0, 0) == d


def test_validate_examples(defaults):
    assert validate(defaults) == []
    v = validate(defaults.replace(pathloss_exponent=2.0))
    assert [x.field for x in v] == ["pathloss_exponent"]
    v = validate(defaults.replace(dbs_density_per_km=-1))
    assert [x.field for x in v] == ["dbs_density_per_km"]


@pytest.mark.parametrize("field, value", [
    ("fading_rate", 0.0), ("shadow_std_db", -1.0), ("antenna_height_m", -0.5),
    ("road_length_km", 0.0), ("connectivity_order", 0), ("connectivity_order", 1.5),
    ("vehicle_density_per_km", math.nan), ("tx_power_dbm", math.inf),
])
def test_validate_flags_field(defaults, field, value):
    assert field in [v.field for v in validate(defaults.replace(**{field: value}))]


def test_link_budget_units(defaults):
    link = defaults.link
    assert link.p_tx == pytest.approx(P_23DBM)
    assert link.noise == pytest.approx(P_M96DBM)
    assert link.lambda_d == pytest.approx(3e-3)
    assert link.lambda_c == pytest.approx(6e-3)
    assert link.road_length == pytest.approx(30_000)
    assert link.lambda_D == pytest.approx(displaced_intensity(3, 4, 0, 2) / 1000)
    assert link.lambda_C >= link.lambda_c


def test_round_trip(tmp_path, defaults):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config_to_dict(defaults, SolverConfig(rel_tol=1e-5))))
    cfg, solver = load_config(path)
    assert cfg == defaults
    assert solver.rel_tol == 1e-5


def test_missing_field_is_named(defaults):
    data = config_to_dict(defaults)
    del data["noise_power_dbm"]
    with pytest.raises(ConfigError, match="missing required field: noise_power_dbm") as exc:
        config_from_dict(data)
    assert exc.value.field == "noise_power_dbm"


def test_unknown_keys_rejected(defaults):
    data = config_to_dict(defaults)
    data["colour"] = "red"
    with pytest.raises(ConfigError, match="colour"):
        config_from_dict(data)
    data = config_to_dict(defaults)
    data["solver"]["speed"] = 3
    with pytest.raises(ConfigError, match="speed"):
        config_from_dict(data)


def test_invalid_values_rejected(defaults):
    data = config_to_dict(defaults)
    data["pathloss_exponent"] = 1.5
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert exc.value.field == "pathloss_exponent"
    data = config_to_dict(defaults)
    data["solver"]["expectation_method"] = "magic"
    with pytest.raises(ConfigError, match="expectation_method"):
        config_from_dict(data)


def test_field_lists():
    assert "threshold_db" in SYSTEM_FIELDS
    assert "t_integral_cutoff_policy" in SOLVER_FIELDS


def test_bad_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_solver_policy_validation():
    assert SolverConfig(t_integral_cutoff_policy=20.0).violations() == []
    assert SolverConfig(t_integral_cutoff_policy=-1).violations()
    assert SolverConfig(t_integral_cutoff_policy="fixed").violations()


@pytest.mark.parametrize("alpha", [0.0, -2.0])
def test_displaced_intensity_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        displaced_intensity(3, alpha, 0, 2)
