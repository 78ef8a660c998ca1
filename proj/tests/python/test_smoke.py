import math

import pytest
from scipy import stats

import countsel as cs


def test_pmf_matches_scipy():
    for y in range(15):
        assert cs.log_pmf(cs.Family.POISSON, y, 3.2) == pytest.approx(
            stats.poisson.logpmf(y, 3.2), abs=1e-12)
        # NB2 with mean lam and size nu: scipy's (n=nu, p=nu/(nu+lam)).
        assert cs.log_pmf(cs.Family.NB2, y, 3.2, nu=1.7) == pytest.approx(
            stats.nbinom.logpmf(y, 1.7, 1.7 / (1.7 + 3.2)), abs=1e-12)
    zip0 = math.log(0.3 + 0.7 * math.exp(-2.0))
    assert cs.log_pmf(cs.Family.ZIP, 0, 2.0, omega=0.3) == pytest.approx(zip0, abs=1e-14)


def test_bad_parameters_raise():
    with pytest.raises(ValueError):
        cs.log_pmf(cs.Family.POISSON, 1, -1.0)
    with pytest.raises(ValueError):
        cs.CountDataset([1, -1], [0.0, 1.0])


def test_saturated_poisson_fit():
    d = cs.CountDataset([2, 4], [0.0, 1.0])
    f = cs.fit(cs.Family.POISSON, d)
    assert f.converged
    assert f.params.beta0 == pytest.approx(math.log(2), abs=1e-8)
    assert f.params.beta_x == pytest.approx(math.log(2), abs=1e-8)
    assert f.cov.shape == (2, 2)


def test_vuong_hand_example():
    v = cs.vuong_from_logdl([0.1, -0.2, 0.3, 0.0, 0.05], 0)
    assert v.raw.statistic == pytest.approx(0.620174, abs=1e-6)
    assert v.raw.p_value == pytest.approx(0.267572, abs=1e-6)
    assert v.raw.direction == 1


def test_mc_se():
    assert cs.mc_se(0.05, 15000) == pytest.approx(0.00178, abs=5e-6)
    assert cs.mc_se(0.5, 100) == pytest.approx(0.05)


def test_selection_on_simulated_data():
    y = cs.sample(cs.Family.NB2, 500, 4.0, nu=1.0, seed=7)
    x = [v / 100.0 for v in cs.sample(cs.Family.POISSON, 500, 50.0, seed=8)]
    out = cs.analyze(y, x)
    assert out["dean_lawless"].rejects
    assert out["seven_step"].chosen in (cs.Family.NB2, cs.Family.ZINB)
    assert out["lowest_aic"].chosen in (cs.Family.NB2, cs.Family.ZINB)
    assert out["fits"][cs.Family.NB2].loglik >= out["fits"][cs.Family.POISSON].loglik
    assert "ZINB" in cs.fit_report(cs.CountDataset(y, x))


def test_simulation_is_deterministic_and_worker_independent():
    levels = cs.GridLevels()
    levels.n = [50]
    levels.beta0 = [0.5, 1.0]
    levels.phi = [math.inf]
    levels.omega = [0.0, 0.2]
    grid = cs.build_grid(levels, reps=20, seed=11)
    assert [s.scenario_id for s in grid] == [1, 2, 3, 4]
    a = cs.run_scenarios(grid, workers=1)
    b = cs.run_scenarios(grid, workers=3)
    assert a == b
    assert cs.results_csv(grid, a) == cs.results_csv(grid, b)
    r = a[0].rates()
    assert r.reps == 20
    assert sum(r.seven_step.selection_prob) == pytest.approx(1.0)
    assert list(cs.simulate_dataset(grid[1], 3).y) == list(cs.simulate_dataset(grid[1], 3).y)


def test_read_dataset_csv():
    d = cs.read_dataset_csv("y,x\n0,1.5\n3,-2\n")
    assert d.y == [0, 3] and d.x == [1.5, -2.0]
    with pytest.raises(ValueError, match="3"):
        cs.read_dataset_csv("y,x\n0,1\n-1,2\n")
