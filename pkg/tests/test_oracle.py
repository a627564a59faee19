import numpy as np
import pytest

from rtm import _kernels
from rtm.core import RtmConfig, cross_moment, second_moment, train_ridge, train_rtm
from rtm.errors import CapacityError, ValidationError
from rtm.oracle import (
    CorruptionRun,
    accumulate_moments,
    corrupt_dropout,
    enumerate_expectation,
    mask_weights,
    mc_convergence,
    train_mc,
)

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


class TestCorruptDropout:
    def test_p_zero_is_identity(self, rng, backend):
        Z = rng.standard_normal((5, 30))
        for seed in (0, 1, 2**63 + 5):
            np.testing.assert_array_equal(corrupt_dropout(Z, 0.0, seed, backend=backend).values, Z)

    def test_drop_fraction(self, backend):
        Z = np.ones((4, 10_000))
        out = corrupt_dropout(Z, 0.5, 2024, backend=backend).values
        frac = np.mean(out == 0)
        assert 0.49 <= frac <= 0.51

    def test_retained_entries_unchanged(self, rng, backend):
        Z = rng.standard_normal((6, 50)) + 10
        out = corrupt_dropout(Z, 0.3, 9, backend=backend).values
        kept = out != 0
        np.testing.assert_array_equal(out[kept], Z[kept])

    def test_same_seed_same_bits(self, rng, backend):
        Z = rng.standard_normal((6, 50))
        a = corrupt_dropout(Z, 0.4, 77, backend=backend).values
        b = corrupt_dropout(Z, 0.4, 77, backend=backend).values
        assert a.tobytes() == b.tobytes()
        c = corrupt_dropout(Z, 0.4, 78, backend=backend).values
        assert not np.array_equal(a, c)

    def test_bad_p(self):
        with pytest.raises(ValidationError):
            corrupt_dropout(np.ones((2, 2)), 1.0, 0)


class TestEnumeration:
    def test_single_feature_example(self, backend):
        m = enumerate_expectation(np.array([[2.0]]), np.array([[1.0]]), 0.25, backend=backend)
        np.testing.assert_allclose(m.P, [[1.5]], rtol=1e-15)
        np.testing.assert_allclose(m.Q, [[3.0]], rtol=1e-15)

    def test_two_feature_example(self, backend):
        m = enumerate_expectation(np.array([[1.0], [2.0]]), np.array([[1.0], [0.0]]), 0.5, backend=backend)
        np.testing.assert_allclose(m.Q, [[0.5, 0.5], [0.5, 2.0]], atol=1e-15)
        np.testing.assert_allclose(m.P, [[0.5, 1.0], [0.0, 0.0]], atol=1e-15)

    def test_p_zero(self, problem, backend):
        Z, Y = problem(3, 5, 8, 3)
        m = enumerate_expectation(Z, Y, 0.0, backend=backend)
        np.testing.assert_array_equal(m.P, Y.one_hot @ Z.values.T)
        np.testing.assert_allclose(m.Q, Z.values @ Z.values.T, rtol=0, atol=1e-13)

    @pytest.mark.parametrize("p", [i / 20 for i in range(1, 20)])
    def test_matches_closed_form(self, problem, p, backend):
        for seed in range(3):
            Z, Y = problem(seed, 3 + 2 * seed, 12, 3)
            m = enumerate_expectation(Z, Y, p, backend=backend)
            np.testing.assert_allclose(m.P, cross_moment(Z, Y, p), atol=1e-10, rtol=0)
            np.testing.assert_allclose(m.Q, second_moment(Z, p), atol=1e-10, rtol=0)

    @pytest.mark.parametrize("k", [1, 4, 10, 16])
    @pytest.mark.parametrize("p", [0.05, 0.5, 0.95])
    def test_weights_sum_to_one(self, k, p, backend):
        w = mask_weights(k, p, backend=backend)
        assert w.shape == (2**k,)
        assert abs(w.sum() - 1.0) <= 1e-14

    def test_capacity(self):
        with pytest.raises(CapacityError):
            enumerate_expectation(np.ones((21, 2)), np.eye(2), 0.5)
        with pytest.raises(CapacityError):
            mask_weights(21, 0.5)


class TestMonteCarlo:
    def test_single_uncorrupted_copy_is_ridge(self, problem, backend):
        Z, Y = problem(0, 6, 40, 3)
        for seed in (0, 5):
            W = train_mc(Z, Y, RtmConfig(0.0, 1.0), CorruptionRun(1, seed, 0.0), backend=backend).W
            Wr = train_ridge(Z, Y, 1.0).W
            np.testing.assert_allclose(W, Wr, rtol=1e-12, atol=1e-14)

    def test_same_seed_same_bits(self, problem, backend):
        Z, Y = problem(1, 6, 40, 3)
        run = CorruptionRun(50, 3, 0.5)
        a = train_mc(Z, Y, RtmConfig(0.5, 1.0), run, backend=backend).W
        b = train_mc(Z, Y, RtmConfig(0.5, 1.0), run, backend=backend).W
        assert a.tobytes() == b.tobytes()

    def test_copy_order_irrelevant(self, problem, backend):
        Z, Y = problem(2, 7, 30, 3)
        copies = np.arange(200)
        P1, Q1 = accumulate_moments(Z, Y, 0.4, 11, copies, backend=backend)
        perm = np.random.default_rng(0).permutation(copies)
        P2, Q2 = accumulate_moments(Z, Y, 0.4, 11, perm, backend=backend)
        np.testing.assert_allclose(P2, P1, rtol=1e-8, atol=1e-8 * np.abs(P1).max())
        np.testing.assert_allclose(Q2, Q1, rtol=1e-8, atol=1e-8 * np.abs(Q1).max())

    def test_accumulation_matches_explicit_copies(self, problem, backend):
        """The streamed sum equals ridge moments of the materialized nJ-column matrix."""
        Z, Y = problem(3, 5, 20, 2)
        J = 25
        Zt = np.hstack([corrupt_dropout(Z, 0.3, 8, copy=j).values for j in range(J)])
        Yt = np.tile(Y.one_hot, J)
        P, Q = accumulate_moments(Z, Y, 0.3, 8, np.arange(J), backend=backend)
        np.testing.assert_allclose(P, Yt @ Zt.T, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(Q, Zt @ Zt.T, rtol=1e-12, atol=1e-12)

    def test_mismatched_p(self, problem):
        Z, Y = problem(0, 3, 10, 2)
        with pytest.raises(ValidationError):
            train_mc(Z, Y, RtmConfig(0.5, 1.0), CorruptionRun(10, 0, 0.4))

    @pytest.mark.parametrize("J, seed, p", [(0, 1, 0.5), (5, 1, 1.0), (5, 1.5, 0.5)])
    def test_run_validation(self, J, seed, p):
        with pytest.raises(ValidationError):
            CorruptionRun(J, seed, p)

    def test_provenance_records_generator(self, problem):
        Z, Y = problem(0, 3, 10, 2)
        m = train_mc(Z, Y, RtmConfig(0.5, 1.0), CorruptionRun(3, 9, 0.5))
        assert m.trained_on.rng == _kernels.RNG_NAME

    def test_convergence_checkpoints_match_train_mc(self, problem):
        Z, Y = problem(4, 5, 30, 3)
        cfg = RtmConfig(0.5, 1.0)
        ref = train_rtm(Z, Y, cfg).W
        rows = mc_convergence(Z, Y, cfg, [7, 40], seeds=[3])
        for J, err, _ in rows:
            W = train_mc(Z, Y, cfg, CorruptionRun(J, 3, 0.5)).W
            assert abs(np.linalg.norm(W - ref) / np.linalg.norm(ref) - err) < 1e-9

    def test_error_shrinks_with_J(self, problem):
        Z, Y = problem(5, 6, 60, 3)
        rows = mc_convergence(Z, Y, RtmConfig(0.5, 1.0), [10, 100, 1000, 10000], seeds=range(3))
        errs = [e for _, e, _ in rows]
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 0.05
