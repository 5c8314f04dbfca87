import itertools

import numpy as np
import pytest

from tests.conftest import random_mixed_dataset, random_xi
from vusni.data import Dataset, ParamVector
from vusni.errors import SingularInformation
from vusni.estimators import METHODS, pseudo_labels, vus_estimate
from vusni.fit import FitOptions, fit
from vusni.inference import (
    _rho0_derivatives,
    confidence_interval,
    dG_dxi,
    estimating_kernel_terms,
    influence_values,
)
from vusni.model import ProbTable, param_slices
from vusni.simulation import builtin_scenario, generate
from vusni.trisum import TripleWeights, kernel, kernel_weighted_sum, product_sum


@pytest.fixture(scope="module")
def fitted():
    data = generate(builtin_scenario(2), 500, seed=15).observed
    return data, fit(data, FitOptions(seed=2))


def averaged_g(method, mu, flat, p, data):
    xi = ParamVector.from_flat(flat, p)
    probs = ProbTable(xi, data)
    labels = pseudo_labels(method, data, None, probs=probs)
    w = TripleWeights(labels.dtilde[:, 0], labels.dtilde[:, 1], labels.dtilde[:, 2])
    n = data.n
    return (kernel_weighted_sum(data.t, w) - mu * product_sum(w)) / ((n - 1) * (n - 2))


class TestEstimatingKernelTerms:
    def test_triple_average_vanishes_at_the_estimate(self, fitted):
        data, mf = fitted
        for method in METHODS:
            est = vus_estimate(method, data, mf, with_se=False)
            kt = estimating_kernel_terms(method, est.mu_hat, mf.xi_hat, data)
            assert abs(kt.triple_average(data.t)) <= 1e-9, method

    def test_single_triple_hand_value(self, rng):
        data = random_mixed_dataset(6, 1, rng)
        xi = random_xi(1, rng)
        probs = ProbTable(xi, data)
        kt = estimating_kernel_terms("fi", 0.4, xi, data, probs=probs)
        i, l, r = 1, 3, 5
        hand = (
            probs.rho[i, 0] * probs.rho[l, 1] * probs.rho[r, 2]
            * (kernel(data.t[i], data.t[l], data.t[r]) - 0.4)
        )
        assert kt.evaluate(i, l, r, data.t) == pytest.approx(hand, rel=1e-12)

    def test_unbiased_at_the_generating_truth(self):
        # Monte Carlo check of E[G(mu0, xi0)] = 0 over independent samples
        spec = builtin_scenario(2)
        values = []
        for rep in range(40):
            sim = generate(spec, 60, seed=(81, rep))
            kt = estimating_kernel_terms("fi", spec.mu_true, spec.xi_true, sim.observed)
            values.append(kt.triple_average(sim.observed.t))
        values = np.asarray(values)
        se = values.std(ddof=1) / np.sqrt(len(values))
        assert abs(values.mean()) <= 3 * se

    def test_affine_in_mu_with_product_sum_slope(self, fitted):
        data, mf = fitted
        kt1 = estimating_kernel_terms("fi", 0.2, mf.xi_hat, data)
        kt2 = estimating_kernel_terms("fi", 0.7, mf.xi_hat, data)
        n = data.n
        w = TripleWeights(kt1.weights[:, 0], kt1.weights[:, 1], kt1.weights[:, 2])
        slope = product_sum(w) / (n * (n - 1) * (n - 2))
        observed = (kt2.triple_average(data.t) - kt1.triple_average(data.t)) / (0.7 - 0.2)
        assert observed == pytest.approx(-slope, rel=1e-12)


class TestDgDxi:
    def test_matches_finite_differences(self, rng):
        for method in METHODS:
            for trial in range(3):
                p = trial % 2
                data = random_mixed_dataset(20, p, rng)
                xi = random_xi(p, rng, 0.6)
                mu = 0.3
                analytic = dG_dxi(method, mu, xi, data)
                flat = xi.to_flat()
                h = 1e-6
                for j in range(flat.size):
                    hi, lo = flat.copy(), flat.copy()
                    hi[j] += h
                    lo[j] -= h
                    fd = (
                        averaged_g(method, mu, hi, p, data)
                        - averaged_g(method, mu, lo, p, data)
                    ) / (2 * h)
                    assert analytic[j] == pytest.approx(fd, rel=1e-4, abs=1e-9), (method, j)

    def test_rho0_tau_pi_derivative_vanishes_at_mar(self, rng):
        # common verification probability cancels from the conditional, so
        # its tau_pi sensitivity is exactly zero at lambda = (0, 0)
        flat = rng.normal(size=11)
        flat[0:2] = 0.0
        xi = ParamVector.from_flat(flat, 1)
        data = random_mixed_dataset(15, 1, rng)
        probs = ProbTable(xi, data)
        sl = param_slices(1)
        for dk in _rho0_derivatives(probs, 1):
            assert np.max(np.abs(dk[:, sl["tau_pi"]])) <= 1e-12


def loop_kernel_part(method, mu, dtilde, t):
    """Direct triple-loop evaluation of the projected kernel sums."""
    n = len(t)
    out = np.zeros(n)
    for i, l, r in itertools.permutations(range(n), 3):
        g = dtilde[i, 0] * dtilde[l, 1] * dtilde[r, 2] * (kernel(t[i], t[l], t[r]) - mu)
        out[i] += g
        out[l] += g
        out[r] += g
    return out / ((n - 1) * (n - 2))


class TestInfluenceValues:
    def test_mean_influence_negligible(self, fitted):
        data, mf = fitted
        for method in METHODS:
            est = vus_estimate(method, data, mf, with_se=False)
            bd = influence_values(method, est, mf, data)
            assert abs(np.mean(bd.q)) <= 1e-6 * np.std(bd.q), method
            assert bd.lambda_hat >= 0.0

    def test_kernel_part_matches_triple_loop(self, rng):
        data = generate(builtin_scenario(2), 15, seed=33).observed
        big = generate(builtin_scenario(2), 500, seed=34).observed
        mf = fit(big, FitOptions(seed=4))
        probs = ProbTable(mf.xi_hat, data)
        for method in ("fi", "ipw", "pdr"):
            labels = pseudo_labels(method, data, None, probs=probs)
            est = vus_estimate(method, data, mf, probs=probs, with_se=False)
            bd = influence_values(method, est, mf, data, probs=probs, labels=labels)
            loop = loop_kernel_part(method, est.mu_hat, labels.dtilde, data.t)
            assert np.max(np.abs(bd.kernel_part - loop)) <= 1e-10 * max(
                1.0, np.max(np.abs(loop))
            ), method

    def test_reorder_invariance(self, fitted, rng):
        data, mf = fitted
        est = vus_estimate("fi", data, mf, with_se=False)
        bd = influence_values("fi", est, mf, data)
        perm = rng.permutation(data.n)
        shuffled = Dataset.from_arrays(
            data.t[perm], data.a[perm], data.v[perm], data.d[perm]
        )
        est_s = vus_estimate("fi", shuffled, mf, with_se=False)
        bd_s = influence_values("fi", est_s, mf, shuffled)
        assert est_s.mu_hat == pytest.approx(est.mu_hat, rel=1e-12)
        assert bd_s.lambda_hat == pytest.approx(bd.lambda_hat, rel=1e-9)

    def test_mar_constrained_fit_restricts_to_free_coordinates(self, fitted):
        data, _ = fitted
        mar = fit(data, FitOptions(constrain_mar=True, seed=2))
        est = vus_estimate("fi", data, mar, with_se=False)
        bd = influence_values("fi", est, mar, data)
        assert abs(np.mean(bd.q)) <= 1e-6 * np.std(bd.q)
        assert np.isfinite(bd.lambda_hat)

    def test_singular_information_raises(self, fitted):
        import dataclasses

        data, mf = fitted
        est = vus_estimate("fi", data, mf, with_se=False)
        broken = dataclasses.replace(mf, info=np.zeros_like(mf.info))
        with pytest.raises(SingularInformation):
            influence_values("fi", est, broken, data)

    def test_estimate_se_equals_breakdown_se(self, fitted):
        data, mf = fitted
        est = vus_estimate("msi", data, mf)
        bd = influence_values("msi", est, mf, data)
        assert est.se == pytest.approx(np.sqrt(bd.lambda_hat / data.n), rel=1e-12)


class TestConfidenceInterval:
    def test_frozen_z_value_arithmetic(self):
        lo, hi = confidence_interval(0.5, 0.1, 0.95)
        assert lo == pytest.approx(0.3040036015459946, abs=1e-12)
        assert hi == pytest.approx(0.6959963984540054, abs=1e-12)

    def test_zero_se_degenerate(self):
        assert confidence_interval(0.42, 0.0, 0.95) == (0.42, 0.42)

    def test_truncated_to_unit_interval(self):
        lo, hi = confidence_interval(0.05, 0.2, 0.99)
        assert lo == 0.0
        lo, hi = confidence_interval(0.97, 0.2, 0.99)
        assert hi == 1.0

    def test_accepts_breakdown(self, fitted):
        data, mf = fitted
        est = vus_estimate("fi", data, mf)
        bd = influence_values("fi", est, mf, data)
        assert confidence_interval(est, bd, 0.95) == pytest.approx(est.ci, abs=1e-12)

    def test_level_validation(self):
        with pytest.raises(ValueError):
            confidence_interval(0.5, 0.1, 0.0)
