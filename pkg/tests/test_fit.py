import numpy as np
import pytest

from tests.conftest import random_mixed_dataset
from vusni.data import Dataset
from vusni.errors import InsufficientData
from vusni.fit import FitOptions, fit, lrt_from_logliks, lrt_ignorability
from vusni.model import param_slices, score
from vusni.simulation import builtin_scenario, generate


@pytest.fixture(scope="module")
def scenario2_data():
    return generate(builtin_scenario(2), 1500, seed=404).observed


@pytest.fixture(scope="module")
def scenario2_fit(scenario2_data):
    return fit(scenario2_data, FitOptions(seed=11, restarts=5))


class TestFit:
    def test_recovers_generating_parameters_within_three_se(self, scenario2_fit):
        true = np.array([-2.5, -1.0, 1.0, 1.2, -1.5, 4.6, -3.3, -6.4, 4.0, -1.7, -3.2])
        se = scenario2_fit.standard_errors()
        z = np.abs(scenario2_fit.xi_hat.to_flat() - true) / se
        assert np.all(z < 3.0), z

    def test_score_zero_at_optimum(self, scenario2_data, scenario2_fit):
        g = score(scenario2_fit.xi_hat, scenario2_data)
        assert np.max(np.abs(g)) / scenario2_data.n <= 1e-6
        assert scenario2_fit.grad_norm <= 1e-6
        assert scenario2_fit.converged

    def test_seed_deterministic(self, scenario2_data, scenario2_fit):
        again = fit(scenario2_data, FitOptions(seed=11, restarts=5))
        assert np.array_equal(again.xi_hat.to_flat(), scenario2_fit.xi_hat.to_flat())
        assert again.loglik == scenario2_fit.loglik

    def test_info_symmetric(self, scenario2_fit):
        assert np.array_equal(scenario2_fit.info, scenario2_fit.info.T)

    def test_mar_nested_below_ni(self, scenario2_data, scenario2_fit):
        mar = fit(scenario2_data, FitOptions(constrain_mar=True, seed=11))
        assert mar.xi_hat.lam.tolist() == [0.0, 0.0]
        assert scenario2_fit.loglik >= mar.loglik

    def test_constrain_mar_fully_verified_matches_multinomial_oracle(self, rng):
        import statsmodels.api as sm

        n = 300
        t = rng.normal(size=n)
        a = rng.normal(size=(n, 1))
        d = rng.integers(1, 4, size=n)
        data = Dataset.from_arrays(t, a, np.ones(n, dtype=int), d)
        result = fit(data, FitOptions(constrain_mar=True, seed=0))

        # statsmodels MNLogit with class 3 recoded as the base category
        codes = np.where(d == 3, 0, d)
        exog = np.column_stack([np.ones(n), t, a])
        oracle = sm.MNLogit(codes, exog).fit(method="newton", disp=False, tol=1e-12)
        sl = param_slices(1)
        flat = result.xi_hat.to_flat()
        assert flat[sl["tau_rho1"]] == pytest.approx(oracle.params[:, 0], abs=1e-6)
        assert flat[sl["tau_rho2"]] == pytest.approx(oracle.params[:, 1], abs=1e-6)

    def test_insufficient_rows(self, rng):
        data = random_mixed_dataset(9, 1, rng)
        with pytest.raises(InsufficientData):
            fit(data)

    def test_unconstrained_needs_unverified_subjects(self, rng):
        n = 60
        data = Dataset.from_arrays(
            rng.normal(size=n), rng.normal(size=(n, 1)),
            np.ones(n, dtype=int), rng.integers(1, 4, size=n),
        )
        with pytest.raises(InsufficientData):
            fit(data)

    def test_each_class_needs_a_verified_subject(self, rng):
        n = 60
        d = rng.integers(1, 3, size=n)  # class 3 never appears
        v = (rng.random(n) < 0.6).astype(int)
        data = Dataset.from_arrays(rng.normal(size=n), rng.normal(size=(n, 1)), v, d)
        with pytest.raises(InsufficientData):
            fit(data)

    def test_restart_validation(self):
        with pytest.raises(ValueError):
            FitOptions(restarts=0)

    def test_identifiability_warning_when_classes_ignore_test_result(self):
        from vusni.data import ParamVector
        from vusni.simulation import ScenarioSpec, generate

        spec = ScenarioSpec(
            name="flat", mean=np.zeros(2), cov=np.eye(2),
            xi_true=ParamVector(lam=(0.0, 0.0), tau_pi=np.array([0.5, 0.5, 0.3]),
                                tau_rho1=np.array([0.3, 0.0, 0.0]),
                                tau_rho2=np.array([0.2, 0.0, 0.0])),
            mu_true=None, theta_true=None, verif_rate=None,
        )
        sim = generate(spec, 400, seed=1)
        result = fit(sim.observed, FitOptions(seed=1, restarts=3))
        assert result.identifiability_warning is not None

    def test_no_identifiability_warning_on_informative_data(self, scenario2_fit):
        assert scenario2_fit.identifiability_warning is None


class TestLrt:
    def test_equal_logliks_give_zero_stat_unit_pvalue(self):
        result = lrt_from_logliks(-100.0, -100.0)
        assert result.stat == 0.0
        assert result.p_value == 1.0
        assert result.df == 2

    def test_pvalue_is_chi2_two_df_upper_tail(self):
        result = lrt_from_logliks(-90.0, -92.5)
        assert result.stat == pytest.approx(5.0)
        assert result.p_value == pytest.approx(np.exp(-2.5), rel=1e-12)

    def test_rejects_negative_statistic_beyond_tolerance(self):
        from vusni.errors import NonConvergence

        with pytest.raises(NonConvergence):
            lrt_from_logliks(-100.0, -99.0)

    def test_on_nonignorable_data(self, scenario2_data):
        result = lrt_ignorability(scenario2_data, FitOptions(seed=11, restarts=3))
        assert result.stat >= 0.0
        assert result.p_value == pytest.approx(np.exp(-result.stat / 2.0), rel=1e-12)
        assert result.ni_fit.loglik >= result.mar_fit.loglik
        # lambda = (-2.5, -1) generated this sample; the test should reject
        assert result.p_value < 0.05
