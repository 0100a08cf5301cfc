import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randens.errors import InsufficientData, ShapeMismatch, ZeroActual
from randens.evaluation import ape_distribution, compute_metrics, gw_matrix, gw_test


class TestMetrics:
    def test_worked_example(self):
        r = compute_metrics([[100.0, 200.0]], [[110.0, 190.0]])
        assert r.mape == pytest.approx(7.5)
        assert r.mpe == pytest.approx(-2.5)
        assert r.median_ape == pytest.approx(7.5)
        assert r.rmse == pytest.approx(10.0)
        assert r.std_pe == pytest.approx(7.5)
        assert (r.n_days, r.n_points) == (1, 2)

    def test_perfect(self):
        A = np.random.default_rng(0).uniform(10, 20, (3, 24))
        r = compute_metrics(A, A)
        assert r.mape == r.median_ape == r.rmse == r.mpe == r.std_pe == 0.0

    def test_underprediction_sign(self):
        A = np.random.default_rng(1).uniform(10, 20, (3, 24))
        assert compute_metrics(A, 0.9 * A).mpe > 0

    def test_errors(self):
        with pytest.raises(ZeroActual):
            compute_metrics([[0.0, 1.0]], [[1.0, 1.0]])
        with pytest.raises(ShapeMismatch):
            compute_metrics([[1.0, 2.0]], [[1.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_invariants_and_day_permutation(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.uniform(50, 150, (8, 24))
        F = A * (1 + rng.normal(0, 0.05, A.shape))
        r = compute_metrics(A, F)
        assert r.mape >= abs(r.mpe) and min(r.mape, r.median_ape, r.rmse, r.std_pe) >= 0
        perm = rng.permutation(8)
        p = compute_metrics(A[perm], F[perm])
        for key in ("mape", "mpe", "std_pe", "rmse", "median_ape"):
            assert getattr(p, key) == pytest.approx(getattr(r, key), rel=1e-12)

    def test_affine_decode_path(self):
        rng = np.random.default_rng(3)
        y_hat = rng.normal(size=(5, 24))
        mean, disp = rng.uniform(500, 1500, (5, 1)), rng.uniform(10, 50, (5, 1))
        A = rng.uniform(500, 1500, (5, 24))
        decoded = y_hat * disp + mean
        r1 = compute_metrics(A, decoded)
        errors = A - decoded
        assert r1.rmse == pytest.approx(math.sqrt(np.mean(errors**2)), rel=1e-12)


class TestApeDistribution:
    def test_median(self):
        A = np.full(5, 100.0)
        d = ape_distribution(A, A - np.array([1, 2, 3, 4, 5.0]))
        assert d.quantiles[50] == pytest.approx(3.0)

    def test_constant(self):
        d = ape_distribution(np.full(10, 100.0), np.full(10, 96.0))
        assert all(v == pytest.approx(4.0) for v in d.quantiles.values())

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        A = rng.uniform(50, 150, 10_000)
        F = A * (1 + rng.normal(0, 0.03, A.size))
        d = ape_distribution(A, F)
        sample = sorted(abs(100 * (a - f) / a) for a, f in zip(A, F))
        for q in (5, 25, 50, 75, 95):
            pos = q / 100 * (len(sample) - 1)
            lo = int(pos)
            hi = min(lo + 1, len(sample) - 1)
            expected = sample[lo] + (pos - lo) * (sample[hi] - sample[lo])
            assert d.quantiles[q] == pytest.approx(expected, rel=1e-12)
        assert np.all(np.diff(d.sample) >= 0)


class TestGW:
    def test_equal_losses_degenerate(self):
        L = np.random.default_rng(0).random((30, 24))
        r = gw_test(L, L)
        assert r.degenerate and r.p_value == 1.0

    def test_constant_gap_favours_b(self):
        B = np.random.default_rng(1).random((100, 24))
        r = gw_test(B + 1.0, B)
        assert r.p_value < 0.01 and r.direction == "B"
        assert r.regularized

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        A, B = rng.random((60, 24)), rng.random((60, 24)) + 0.05
        ab, ba = gw_test(A, B), gw_test(B, A)
        assert ab.statistic == pytest.approx(ba.statistic, rel=1e-10)
        assert ab.p_value + ba.p_value == pytest.approx(1.0, abs=1e-12)
        assert {ab.direction, ba.direction} == {"A", "B"}

    def test_statistic_by_hand(self):
        rng = np.random.default_rng(3)
        d = rng.normal(0.2, 1.0, 40)
        z = np.array([[d[t + 1], d[t] * d[t + 1]] for t in range(39)])
        omega = sum(np.outer(row, row) for row in z) / 39
        zbar = z.mean(axis=0)
        expected = 39 * zbar @ np.linalg.inv(omega) @ zbar
        r = gw_test(d[:, None], np.zeros((40, 1)))
        assert r.statistic == pytest.approx(expected, rel=1e-10) and r.dof == 2

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            gw_test(np.ones((5, 24)), np.zeros((5, 24)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            gw_test(np.ones((20, 24)), np.zeros((20, 23)))

    def test_matrix_structure(self):
        rng = np.random.default_rng(4)
        losses = {k: rng.random((30, 24)) + s for k, s in zip("abc", (0.0, 0.1, 0.2))}
        names, P = gw_matrix(losses)
        assert names == ["a", "b", "c"] and P.shape == (3, 3)
        np.testing.assert_array_equal(np.diag(P), 1.0)
        np.testing.assert_allclose(P + P.T, 1.0 + np.eye(3), atol=1e-12)
