import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disentangle_eval.discretize import BinnedCodes, discretize_codes
from disentangle_eval.errors import UndefinedMetric, ValidationError
from disentangle_eval.information import (
    MIMatrix,
    dataset_mig,
    dimension_cells,
    entropy,
    jemmig,
    joint_entropy,
    mi_matrix,
    mig,
    mutual_information,
)
from disentangle_eval.oracles import brute_force_mi
from disentangle_eval.synth import entangled_spec, generate, identity_spec

from conftest import make_dataset


@st.composite
def paired_columns(draw, max_n=64, max_bins=4):
    n = draw(st.integers(1, max_n))
    bv = draw(st.integers(1, max_bins))
    bz = draw(st.integers(1, max_bins))
    v = draw(st.lists(st.integers(0, bv - 1), min_size=n, max_size=n))
    z = draw(st.lists(st.integers(0, bz - 1), min_size=n, max_size=n))
    return np.array(v), np.array(z), bv, bz


def _binned(bins, eff):
    bins = np.asarray(bins, dtype=np.int64)
    return BinnedCodes(bins, tuple(np.empty(0) for _ in range(bins.shape[1])),
                       np.asarray(eff, dtype=np.int64))


# worked case: three samples per factor value, z spread over three bins
V6 = np.array([0, 0, 0, 1, 1, 1])
Z6 = np.array([0, 0, 1, 1, 2, 2])


class TestEntropy:
    def test_fair_binary(self):
        assert entropy([0, 1, 0, 1], 2) == pytest.approx(1.0)

    def test_deterministic(self):
        assert entropy([0, 0, 0, 0], 1) == 0.0

    def test_skewed(self):
        expected = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
        assert entropy([0, 0, 0, 1], 2) == pytest.approx(expected, abs=1e-12)
        assert entropy([0, 0, 0, 1], 2) == pytest.approx(0.8113, abs=1e-4)

    def test_empty(self):
        with pytest.raises(ValidationError):
            entropy([], 2)

    @settings(max_examples=100, deadline=None)
    @given(paired_columns())
    def test_bounded_by_log_cardinality(self, case):
        v, _, bv, _ = case
        assert 0.0 <= entropy(v, bv) <= math.log2(bv) + 1e-12


class TestMutualInformation:
    def test_perfect_copy(self):
        assert mutual_information([0, 0, 1, 1], [0, 0, 1, 1], 2, 2) == pytest.approx(1.0)

    def test_independent(self):
        assert mutual_information([0, 0, 1, 1], [0, 1, 0, 1], 2, 2) == 0.0

    def test_worked_case(self):
        assert mutual_information(V6, Z6, 2, 3) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError, match="length"):
            mutual_information([0, 1], [0], 2, 2)

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            mutual_information([0, 2], [0, 1], 2, 2)

    def test_joint_entropy_worked_case(self):
        expected = 2 * (1 / 3) * math.log2(3) + 2 * (1 / 6) * math.log2(6)
        assert joint_entropy(V6, Z6, 2, 3) == pytest.approx(expected, abs=1e-12)
        assert joint_entropy(V6, Z6, 2, 3) == pytest.approx(1.9183, abs=1e-4)

    @settings(max_examples=200, deadline=None)
    @given(paired_columns())
    def test_matches_brute_force(self, case):
        v, z, bv, bz = case
        assert abs(mutual_information(v, z, bv, bz) - brute_force_mi(v, z, bv, bz)) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(paired_columns())
    def test_symmetry(self, case):
        v, z, bv, bz = case
        assert abs(mutual_information(v, z, bv, bz) - mutual_information(z, v, bz, bv)) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(paired_columns())
    def test_bounds(self, case):
        v, z, bv, bz = case
        i = mutual_information(v, z, bv, bz)
        assert 0.0 <= i <= min(entropy(v, bv), entropy(z, bz)) + 1e-9

    @settings(max_examples=100, deadline=None)
    @given(paired_columns(), st.randoms(use_true_random=False))
    def test_relabeling_invariance(self, case, rnd):
        v, z, bv, bz = case
        perm = list(range(bz))
        rnd.shuffle(perm)
        relabeled = np.array(perm)[z]
        assert abs(mutual_information(v, z, bv, bz)
                   - mutual_information(v, relabeled, bv, bz)) < 1e-12


class TestMIMatrix:
    def test_identity_diagonal_dominates(self):
        ft, ct, _ = generate(identity_spec([4, 3, 5], n_dims=6, n_samples=3000, seed=1))
        ds = make_dataset(ft.factors, ct.values, list(ft.factor_names))
        mi = mi_matrix(ds, discretize_codes(ct))
        for i in range(3):
            off = np.delete(mi.values[i], i)
            assert mi.values[i, i] > off.max() + 0.5

    def test_constant_codes_give_zero(self, rng):
        v = rng.integers(0, 3, 200)
        ds = make_dataset(v, np.ones((200, 4)))
        mi = mi_matrix(ds, discretize_codes(ds.codes))
        np.testing.assert_array_equal(mi.values, 0.0)

    def test_single_copy(self):
        v = np.array([0, 1, 1, 0, 1])
        ds = make_dataset(v, v[:, None].astype(float))
        mi = mi_matrix(ds, discretize_codes(ds.codes))
        assert mi.shape == (1, 1)
        assert mi.values[0, 0] == pytest.approx(entropy(v, 2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_within_invariant_bounds(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(5, 80))
        factors = np.stack([r.integers(0, 3, n), r.integers(0, 4, n)], axis=1)
        ds = make_dataset(factors, r.standard_normal((n, 3)), cards=[3, 4])
        binned = discretize_codes(ds.codes)
        mi = mi_matrix(ds, binned)
        for i, card in enumerate([3, 4]):
            assert 0.0 <= mi.factor_entropies[i] <= math.log2(card) + 1e-12
            for j in range(3):
                cap = min(mi.factor_entropies[i], math.log2(binned.effective_bins[j]))
                assert -1e-12 <= mi.values[i, j] <= cap + 1e-9


class TestMIG:
    def _mi(self, row, h=1.0, bins=2):
        row = np.asarray([row], dtype=float)
        return MIMatrix(row, np.array([h]), np.full(row.shape[1], bins))

    def test_one_perfect(self):
        assert mig(self._mi([1.0, 0.0, 0.0]), 0) == 1.0

    def test_redundant(self):
        assert mig(self._mi([1.0, 1.0, 0.0]), 0) == 0.0

    def test_worked_gap(self):
        assert mig(self._mi([0.6667, 0.0]), 0) == pytest.approx(0.6667)

    def test_zero_entropy_undefined(self):
        with pytest.raises(UndefinedMetric) as exc:
            mig(self._mi([0.0, 0.0], h=0.0), 0)
        assert exc.value.reason == "zero entropy"

    def test_needs_two_dims(self):
        with pytest.raises(ValidationError):
            mig(self._mi([1.0]), 0)

    def test_dataset_mean_skips_undefined(self):
        mi = MIMatrix(np.array([[1.0, 0.0], [0.0, 0.0], [0.5, 0.25]]),
                      np.array([1.0, 0.0, 0.5]), np.array([2, 2]))
        assert dataset_mig(mi) == pytest.approx((1.0 + 0.5) / 2)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=8), st.floats(1e-3, 1))
    def test_bounds(self, row, h):
        row = np.minimum(np.array(row), h)
        assert 0.0 <= mig(self._mi(row, h), 0) <= 1.0


class TestJEMMIG:
    def _worked(self):
        # dimension 0 is the worked case (3 bins), dimension 1 is constant
        ds = make_dataset(V6, np.zeros((6, 2)))
        binned = _binned(np.stack([Z6, np.zeros(6, dtype=int)], axis=1), [3, 1])
        return ds, binned, mi_matrix(ds, binned)

    def test_worked_case(self):
        ds, binned, mi = self._worked()
        raw, norm = jemmig(ds, binned, mi, 0)
        h_joint = 2 * (1 / 3) * math.log2(3) + 2 * (1 / 6) * math.log2(6)
        assert raw == pytest.approx(h_joint - 2 / 3, abs=1e-12)
        assert norm == pytest.approx(1 - (h_joint - 2 / 3) / (1 + math.log2(3)), abs=1e-12)
        assert norm == pytest.approx(0.5158, abs=1e-3)

    def test_perfect_copy(self):
        v = np.array([0, 1, 0, 1, 1, 0])
        ds = make_dataset(v, np.zeros((6, 2)))
        binned = _binned(np.stack([v, np.zeros(6, dtype=int)], axis=1), [2, 1])
        raw, norm = jemmig(ds, binned, mi_matrix(ds, binned), 0)
        assert raw == pytest.approx(0.0, abs=1e-12)
        assert norm == pytest.approx(1.0)

    def test_independent_best_dim(self):
        v = np.array([0, 0, 1, 1])
        z = np.array([0, 1, 0, 1])
        ds = make_dataset(v, np.zeros((4, 2)))
        binned = _binned(np.stack([z, np.zeros(4, dtype=int)], axis=1), [2, 1])
        raw, norm = jemmig(ds, binned, mi_matrix(ds, binned), 0)
        assert raw == pytest.approx(2.0)
        assert norm == 0.0

    def test_dimension_cells_match_all_row_at_best(self):
        ds, binned, mi = self._worked()
        share, raw, norm = dimension_cells(ds, binned, mi, 0)
        assert share[0] == pytest.approx(2 / 3)
        all_raw, all_norm = jemmig(ds, binned, mi, 0)
        assert raw[0] == pytest.approx(all_raw) and norm[0] == pytest.approx(all_norm)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_relabeling_invariance(self, seed):
        r = np.random.default_rng(seed)
        n = 60
        v = r.integers(0, 3, n)
        bins = np.stack([np.clip(v + r.integers(-1, 2, n), 0, 3), r.integers(0, 4, n)], axis=1)
        ds = make_dataset(v, np.zeros((n, 2)), cards=[3])
        perm = r.permutation(4)
        a = _binned(bins, [4, 4])
        b = _binned(perm[bins], [4, 4])
        mia, mib = mi_matrix(ds, a), mi_matrix(ds, b)
        np.testing.assert_allclose(mia.values, mib.values, atol=1e-12)
        if mia.factor_entropies[0] > 0:
            assert mig(mia, 0) == pytest.approx(mig(mib, 0), abs=1e-12)
            np.testing.assert_allclose(jemmig(ds, a, mia, 0), jemmig(ds, b, mib, 0), atol=1e-12)


@pytest.fixture(scope="module")
def identity():
    ft, ct, _ = generate(identity_spec([25, 4, 2], n_dims=16, n_samples=10000, seed=0))
    return make_dataset(ft.factors, ct.values, list(ft.factor_names))


class TestFixtures:
    def test_subsample_consistency(self, identity):
        full = dataset_mig(mi_matrix(identity, discretize_codes(identity.codes)))
        r = np.random.default_rng(7)
        for _ in range(3):
            idx = np.sort(r.choice(identity.n_samples, identity.n_samples // 2, replace=False))
            sub = make_dataset(identity.factors.factors[idx], identity.codes.values[idx],
                               list(identity.factors.factor_names), list(identity.factors.cardinalities))
            half = dataset_mig(mi_matrix(sub, discretize_codes(sub.codes)))
            assert abs(half - full) < 0.05

    def test_entangled_has_no_gap(self):
        ft, ct, oracle = generate(entangled_spec([25, 4, 2], n_samples=10000, seed=0))
        assert oracle.expect_mig == "near_zero"
        ds = make_dataset(ft.factors, ct.values, list(ft.factor_names))
        assert dataset_mig(mi_matrix(ds, discretize_codes(ct))) <= 0.05
