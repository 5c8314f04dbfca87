import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vusni.trisum import (
    TripleWeights,
    kernel,
    kernel_weighted_sum,
    kernel_weighted_sum_bruteforce,
    per_subject_conditional_sums,
    per_subject_conditional_sums_bruteforce,
    per_subject_product_sums,
    product_sum,
    product_sum_bruteforce,
)


class TestKernel:
    def test_strict_ordering(self):
        assert kernel(1, 2, 3) == 1.0

    def test_all_tied(self):
        assert kernel(2, 2, 2) == pytest.approx(1 / 6)

    def test_leading_tie(self):
        assert kernel(1, 1, 2) == 0.5

    def test_trailing_tie(self):
        assert kernel(1, 2, 2) == 0.5

    def test_reversed(self):
        assert kernel(3, 2, 1) == 0.0

    @given(st.lists(st.sampled_from([0.0, 1.0, 2.5]), min_size=3, max_size=3))
    def test_total_mass_over_orderings(self, values):
        total = sum(kernel(*perm) for perm in itertools.permutations(values))
        assert total == pytest.approx(1.0)


def _random_t(rng, n, style):
    if style == 0:
        return rng.normal(size=n)
    if style == 1:
        return rng.integers(0, 4, size=n).astype(float)
    if style == 2:
        return rng.integers(0, 2, size=n).astype(float)
    return np.full(n, 1.25)


class TestKernelWeightedSum:
    def test_sorted_unit_weights(self):
        assert kernel_weighted_sum(np.array([1.0, 2.0, 3.0]), TripleWeights.ones(3)) == 1.0

    def test_all_tied_unit_weights(self):
        total = kernel_weighted_sum(np.array([7.0, 7.0, 7.0]), TripleWeights.ones(3))
        assert total == pytest.approx(1.0)

    def test_matches_bruteforce(self, rng):
        for trial in range(60):
            n = int(rng.integers(3, 51))
            t = _random_t(rng, n, trial % 4)
            w = TripleWeights(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))
            fast = kernel_weighted_sum(t, w)
            brute = kernel_weighted_sum_bruteforce(t, w)
            assert fast == pytest.approx(brute, rel=1e-10, abs=1e-10)

    def test_vector_weights_componentwise(self, rng):
        n, m = 20, 4
        t = _random_t(rng, n, 1)
        w1, w2, w3 = (rng.normal(size=(n, m)) for _ in range(3))
        stacked = kernel_weighted_sum(t, TripleWeights(w1, w2, w3))
        for j in range(m):
            single = kernel_weighted_sum(t, TripleWeights(w1[:, j], w2[:, j], w3[:, j]))
            assert stacked[j] == pytest.approx(single, rel=1e-12)

    def test_relabeling_invariance(self, rng):
        n = 17
        t = _random_t(rng, n, 1)
        w = TripleWeights(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))
        perm = rng.permutation(n)
        permuted = TripleWeights(w.w1[perm], w.w2[perm], w.w3[perm])
        assert kernel_weighted_sum(t[perm], permuted) == pytest.approx(
            kernel_weighted_sum(t, w), rel=1e-12
        )

    def test_monotone_transform_invariance(self, rng):
        n = 23
        t = rng.integers(0, 5, size=n).astype(float)
        w = TripleWeights(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))
        base = kernel_weighted_sum(t, w)
        assert kernel_weighted_sum(2.0 * t + 1.0, w) == pytest.approx(base, rel=1e-12)
        assert kernel_weighted_sum(t ** 3, w) == pytest.approx(base, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kernel_weighted_sum(np.array([1.0, 2.0, 3.0, 4.0]), TripleWeights.ones(3))

    def test_unknown_engine(self):
        with pytest.raises(ValueError):
            kernel_weighted_sum(np.array([1.0, 2.0, 3.0]), TripleWeights.ones(3), engine="magic")

    def test_bruteforce_size_cap(self):
        t = np.arange(101, dtype=float)
        with pytest.raises(ValueError):
            kernel_weighted_sum_bruteforce(t, TripleWeights.ones(101))


class TestProductSum:
    def test_unit_weights(self):
        assert product_sum(TripleWeights.ones(3)) == 6.0

    def test_single_surviving_triple(self):
        w = TripleWeights(
            np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])
        )
        assert product_sum(w) == 1.0

    def test_matches_bruteforce(self, rng):
        for _ in range(40):
            n = int(rng.integers(3, 51))
            w = TripleWeights(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))
            assert product_sum(w) == pytest.approx(
                product_sum_bruteforce(w), rel=1e-10, abs=1e-10
            )


class TestPerSubjectSums:
    def test_sorted_unit_weights(self):
        slots = per_subject_conditional_sums(np.array([1.0, 2.0, 3.0]), TripleWeights.ones(3))
        assert np.allclose(slots[0], [1, 0, 0])
        assert np.allclose(slots[1], [0, 1, 0])
        assert np.allclose(slots[2], [0, 0, 1])

    def test_all_tied_unit_weights(self):
        slots = per_subject_conditional_sums(np.full(3, 2.0), TripleWeights.ones(3))
        for s in slots:
            assert np.allclose(s, 1 / 3)

    def test_matches_bruteforce(self, rng):
        for trial in range(40):
            n = int(rng.integers(3, 31))
            t = _random_t(rng, n, trial % 4)
            w = TripleWeights(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))
            fast = per_subject_conditional_sums(t, w)
            brute = per_subject_conditional_sums_bruteforce(t, w)
            for a, b in zip(fast, brute):
                assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(b)))

    def test_own_weight_contraction_recovers_full_sums(self, rng):
        # summing u_k[j] * slot_k[j] over j recovers the full triple sum in
        # every slot; this ties the per-subject sums to kernel_weighted_sum
        n = 25
        t = _random_t(rng, n, 1)
        w = TripleWeights(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))
        full = kernel_weighted_sum(t, w)
        slots = per_subject_conditional_sums(t, w)
        for own, slot in zip((w.w1, w.w2, w.w3), slots):
            assert np.sum(own * slot) == pytest.approx(full, rel=1e-10)
        plain = product_sum(w)
        for own, slot in zip((w.w1, w.w2, w.w3), per_subject_product_sums(w)):
            assert np.sum(own * slot) == pytest.approx(plain, rel=1e-10)


@settings(max_examples=40)
@given(
    st.lists(st.sampled_from([-1.0, 0.0, 0.5, 2.0]), min_size=3, max_size=12),
    st.integers(min_value=0, max_value=2 ** 32 - 1),
)
def test_fast_path_equals_bruteforce_property(t_values, seed):
    t = np.array(t_values)
    rng = np.random.default_rng(seed)
    w = TripleWeights(*(rng.normal(size=t.size) for _ in range(3)))
    fast = kernel_weighted_sum(t, w)
    brute = kernel_weighted_sum_bruteforce(t, w)
    assert fast == pytest.approx(brute, rel=1e-10, abs=1e-10)
