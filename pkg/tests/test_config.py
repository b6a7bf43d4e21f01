import dataclasses
import math

import pytest

from secure_uav_ee.config import (ConfigError, load_config, load_config_with_extras, parse_config,
                                  scenario_from_dict, scenario_to_dict)
from secure_uav_ee.model import Scenario


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("# nothing here\n\n")
    sc = load_config(p)
    assert sc == Scenario()
    assert (sc.K, sc.N_F, sc.N, sc.tau, sc.V_max) == (3, 128, 50, 2.0, 50.0)


def test_db_and_dbm_keys():
    sc, _ = parse_config("gamma_th_db = -40\nn0_dbm = -110\np_max_dbm = 65\nbeta0_db = -50\n")
    assert sc.Gamma_th == pytest.approx(1e-4)
    assert sc.N0 == pytest.approx(1e-14)
    assert sc.P_max == pytest.approx(10 ** 3.5)
    assert sc.beta0 == pytest.approx(1e-5)


def test_single_override_changes_only_that_field():
    sc, _ = parse_config("Q_E = 400  # larger disc\n")
    base = dataclasses.asdict(Scenario())
    got = dataclasses.asdict(sc)
    assert {k for k in base if base[k] != got[k]} == {"Q_E"}
    sc, _ = parse_config("p_peak = 0.01")
    assert sc.P_peak == 0.01


def test_points_users_and_extras():
    sc, extras = parse_config("user_positions = 1, 2; 3, 4\nt0 = -5, 5\nseed = 7\neps_tol = 1e-4\n"
                              "J_max_algo2 = 4\nP_o = 600\n")
    assert sc.K == 2 and sc.user_positions == ((1.0, 2.0), (3.0, 4.0))
    assert sc.t0 == (-5.0, 5.0) and extras == {"seed": 7}
    assert sc.iter.eps_tol == 1e-4 and sc.iter.J_max_algo2 == 4 and sc.flight.P_o == 600.0
    sc, _ = parse_config("gamma_th = inf")
    assert math.isinf(sc.Gamma_th)


@pytest.mark.parametrize("text, fragment", [
    ("Q_E 400", ":1: expected 'key = value'"),
    ("\nfoo = 1", ":2 (foo): unknown key"),
    ("Q_E = 1\nq_e = 2", "already set on line 1"),
    ("Q_E = abc", "not a number"),
    ("N = 2.5", "expected an integer"),
    ("q_e_db = 3", "does not accept a db value"),
    ("W_dbm = 3", "does not accept a dbm value"),
    ("t0 = 1, 2, 3", "expected 'x, y'"),
    ("Q_E =", "empty value"),
])
def test_parse_errors_have_context(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "x.cfg")
    assert fragment in str(err.value)
    assert str(err.value).startswith("x.cfg:")


def test_validation_failures_reported(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("N = 5\np_peak = 1e5\n")
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert "reachability" in str(err.value) and "P_peak" in str(err.value)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_config_with_extras(tmp_path / "missing.cfg")


def test_dict_round_trip():
    for sc in (Scenario(), Scenario(Gamma_th=math.inf, Q_E=0.0, user_positions=((1.0, 2.0),), K=1)):
        assert scenario_from_dict(scenario_to_dict(sc)) == sc
