import math

import pytest

import exprate


@pytest.fixture(scope="module")
def sim():
    portfolio, truth, spec = exprate.simulate(n_policies=1500, base_frequency=0.10, seed=7)
    return portfolio, truth, spec


def test_simulate_is_deterministic(sim):
    portfolio, truth, spec = sim
    again, truth2, _ = exprate.simulate(n_policies=1500, base_frequency=0.10, seed=7)
    assert len(portfolio) == len(again)
    assert portfolio.claim_counts == again.claim_counts
    assert truth["mean_freq"] == truth2["mean_freq"]
    assert spec["n_policies"] == 1500
    assert portfolio.covariate_names == ["age", "male", "urban", "value"]


def test_unknown_spec_key_is_a_schema_error():
    with pytest.raises(exprate.SchemaError):
        exprate.simulate(colour="red")
    with pytest.raises(exprate.ExprateError):
        exprate.simulate(n_policies=-3)


def test_level_trajectory_by_hand():
    s = exprate.BmsStructure(3, 95, 106)
    assert exprate.level_trajectory([0, 2, 0, 0, 0, 0, 0, 1, 0, 3, 1, 4], s) == [
        100, 99, 105, 104, 103, 102, 101, 101, 98, 98, 106, 106,
    ]
    with pytest.raises(exprate.ArgumentError):
        exprate.BmsStructure(3, 101, 106)


def test_fit_score_and_round_trip(sim):
    portfolio, _, _ = sim
    train, test = exprate.split_train_test(portfolio, 0.75, 3)
    assert len(train) + len(test) == len(portfolio)
    cov = ["age", "urban"]
    std = exprate.fit_standard(train, "frequency", cov, min_calendar_year=2014)
    bms = exprate.fit_bms(train, "frequency", cov, psi=[2, 3], l_min=[95], l_max=[105, 106],
                          min_calendar_year=2014)
    assert bms.kind == "bms"
    assert len(bms.profile_table) == 4
    assert bms.labels == ["intercept", "age", "urban", "level"]
    assert bms.n_params == std.n_params + 1 + 3
    assert math.isclose(exprate.model_loglik(bms, train), bms.loglik, rel_tol=1e-10)
    assert exprate.logarithmic_score(bms, test) > 0

    back = exprate.ExperienceModel.from_json(bms.to_json())
    assert back.structure == bms.structure
    assert list(back.beta) == list(bms.beta)

    mu = exprate.predict_contracts(std, train)
    assert mu.shape == (len(train),)


def test_relativities_and_density():
    t = exprate.relativity_table(0.094, exprate.BmsStructure(3, 95, 106))
    assert t["levels"][0] == 95 and t["levels"][-1] == 106
    assert abs(t["surcharge_per_claim"] - 0.324) < 0.005
    assert abs(t["max_relativity"] - 1.753) < 0.005
    assert math.isclose(exprate.joint_log_density(0.0, 0, 1.0, 1.0, 1.5), -2.0, rel_tol=1e-14)
    assert math.isclose(exprate.p_from_shape(1.0), 1.5)
    assert math.isclose(exprate.off_balance_factor([40.0, 50.0], [60.0, 40.0]), 10.0 / 9.0)
