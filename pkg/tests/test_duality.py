import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netduality.duality import (
    INFINITE,
    ctrb_matrix,
    duality_report,
    finite_horizon_gramians,
    gramian,
    gramian_split,
    infinite_horizon_gramian,
    is_functionally_observable,
    is_output_controllable,
    obsv_matrix,
)
from netduality.errors import DimensionError, InputError, NotHurwitzError
from netduality.numkernel import expm

from helpers import five_state, random_triple, stable_matrix, unobservable_triple

E = np.eye(5)
C5, F2 = E[[4]], E[[1]]


class TestRankTests:
    def test_krylov_shapes(self):
        A = five_state(-1.0)
        assert ctrb_matrix(A, E[:, [0]]).shape == (5, 5)
        assert obsv_matrix(C5, A).shape == (5, 5)
        assert np.array_equal(obsv_matrix(C5, A), ctrb_matrix(A.T, C5.T).T)

    @pytest.mark.parametrize("a22, rank_o, fo", [(-1.0, 4, True), (0.0, 3, False)])
    def test_five_state_observability(self, a22, rank_o, fo):
        A = five_state(a22)
        assert np.linalg.matrix_rank(obsv_matrix(C5, A)) == rank_o
        assert is_functionally_observable(C5, A, F2) is fo
        assert is_output_controllable(A.T, C5.T, F2)

    def test_scale_invariance(self):
        A = five_state(-1.0)
        for s in (1e-6, 1e6):
            assert is_functionally_observable(s * C5, s * A, F2)
            assert not is_functionally_observable(C5, s * five_state(0.0), F2)

    def test_f_identity_reduces_to_full_rank(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((4, 4))
        C = rng.standard_normal((1, 4))
        assert is_functionally_observable(C, A, np.eye(4)) == (np.linalg.matrix_rank(obsv_matrix(C, A)) == 4)
        assert not is_functionally_observable(C, np.diag([1.0, 1.0, 2.0, 3.0]), np.eye(4))

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            is_output_controllable(np.eye(3), np.ones((2, 1)), np.eye(3))


class TestGramians:
    def test_scalar_closed_form(self):
        Wc, Wo = finite_horizon_gramians([[-1.0]], [[1.0]], [[1.0]], 10.0)
        assert abs(Wc[0, 0] - (1 - np.exp(-20.0)) / 2) < 1e-14
        assert abs(Wo[0, 0] - Wc[0, 0]) < 1e-15

    def test_against_quadrature(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((4, 4))
        B = rng.standard_normal((4, 2))
        t = np.linspace(0.0, 1.5, 3001)
        vals = np.array([expm(A, s) @ B @ B.T @ expm(A.T, s) for s in t])
        h = t[1] - t[0]
        ref = h / 3 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum(0) + 2 * vals[2:-1:2].sum(0))
        assert np.allclose(gramian(A, B @ B.T, 1.5), ref, rtol=1e-9, atol=1e-12)

    def test_long_horizon_converges_to_lyapunov(self):
        A = stable_matrix(np.random.default_rng(3), 5)
        Q = np.eye(5)
        assert np.allclose(gramian(A, Q, 200.0), infinite_horizon_gramian(A, Q), rtol=1e-8, atol=1e-12)

    def test_unstable_long_horizon_finite(self):
        W = gramian(np.eye(2), np.eye(2), 300.0)
        assert np.all(np.isfinite(W))

    def test_infinite_needs_hurwitz(self):
        with pytest.raises(NotHurwitzError):
            infinite_horizon_gramian(np.zeros((2, 2)), np.eye(2))

    def test_infinite_identity(self):
        assert np.allclose(infinite_horizon_gramian(-np.eye(3), np.eye(3)), np.eye(3) / 2)

    def test_split_partition(self):
        W = np.diag([3.0, 1e-12, 0.5])
        sp = gramian_split(W)
        assert sp.rank == 2 and sp.U2.shape[1] == 1
        assert abs(abs(sp.U2[1, 0]) - 1) < 1e-12

    def test_split_rejects_asymmetric(self):
        with pytest.raises(InputError):
            gramian_split(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestFiveStateReport:
    @pytest.mark.parametrize("t1", [1.0, 10.0, 100.0])
    def test_strong_case(self, t1):
        rep = duality_report(C5, five_state(-1.0), F2, t1)
        assert (rep.dim_CF, rep.dim_OF, rep.gap, rep.strong) == (1, 1, 0, True)
        assert rep.functionally_observable and rep.output_controllable_dual

    @pytest.mark.parametrize("t1", [1.0, 10.0, 100.0])
    def test_gap_case(self, t1):
        rep = duality_report(C5, five_state(0.0), F2, t1)
        assert (rep.dim_CF, rep.dim_OF, rep.gap, rep.strong) == (1, 0, 1, False)
        assert not rep.functionally_observable and rep.output_controllable_dual

    def test_infinite_horizon(self):
        A = five_state(-1.0, -3.0, -3.0)
        rep = duality_report(C5, A, F2, INFINITE)
        assert rep.strong and rep.horizon == "infinite"
        assert rep.to_dict()["gap"] == 0


seeds = st.integers(0, 2**32 - 1)


class TestDualityProperties:
    @settings(max_examples=200)
    @given(seeds)
    def test_weak_duality(self, seed):
        C, A, F = random_triple(seed)
        rep = duality_report(C, A, F, INFINITE)
        assert rep.dim_OF <= rep.dim_CF

    @settings(max_examples=200)
    @given(seeds)
    def test_strong_iff_zero_gap(self, seed):
        C, A, F = random_triple(seed)
        rep = duality_report(C, A, F, 10.0)
        assert rep.strong == (rep.gap == 0)

    @settings(max_examples=200)
    @given(seeds)
    def test_functional_observability_implies_strong(self, seed):
        C, A, F = random_triple(seed)
        rep = duality_report(C, A, F, INFINITE)
        if rep.functionally_observable:
            assert rep.strong and rep.gap == 0
        # the dual of a functionally observable triple is output controllable
        if rep.functionally_observable:
            assert rep.output_controllable_dual

    @settings(max_examples=100)
    @given(seeds)
    def test_identity_target_has_no_gap(self, seed):
        C, A, _ = random_triple(seed)
        n = A.shape[0]
        rep = duality_report(C, A, np.eye(n), INFINITE)
        assert rep.gap == 0 and rep.strong
        assert rep.functionally_observable == (np.linalg.matrix_rank(obsv_matrix(C, A / np.linalg.norm(A, 2))) == n)
        # with F = I both sets are Im(W)
        W = infinite_horizon_gramian(A.T, C.T @ C)
        assert rep.dim_CF == rep.dim_OF == gramian_split(W).rank

    def test_output_controllable_dual_matches_image(self):
        # C_F is F Im(W); its dimension is the output-controllability rank
        rng = np.random.default_rng(5)
        for _ in range(30):
            C, A, F = unobservable_triple(rng, 6, 3, 1, 2, "generic")
            rep = duality_report(C, A, F, INFINITE)
            assert (rep.dim_CF == F.shape[0]) == rep.output_controllable_dual
