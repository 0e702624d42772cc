import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netduality.duality import ctrb_matrix, finite_horizon_gramians, is_functionally_observable
from netduality.errors import DimensionError, InfeasibleError, InputError
from netduality.numkernel import integrate_lti, spectrum_distance
from netduality.targetctl import (
    MeasurementRecord,
    min_energy_control,
    parse_poles,
    place_poles_full,
    place_target_poles,
    reconstruct_target,
    right_modal_eigenvalues,
    setpoint_feedforward,
    sigma_set,
    staircase_decompose,
)

from helpers import five_state, modal_instance, rotation, stable_matrix, unobservable_triple

E5 = np.eye(5)


def _simpson(v, h):
    return h / 3 * (v[0] + v[-1] + 4 * v[1:-1:2].sum(0) + 2 * v[2:-1:2].sum(0))


class TestMinimumEnergy:
    def test_scalar(self):
        u = min_energy_control([[-1.0]], [[1.0]], [[1.0]], [1.0], 1.0)
        assert abs(u.energy - 2 / (1 - np.exp(-2.0))) < 1e-12
        tr = integrate_lti([[-1.0]], [[1.0]], u, None, 1.0, 1e-3)
        assert abs(tr.final[0] - 1.0) < 1e-9

    def test_random_endpoint_and_energy(self):
        rng = np.random.default_rng(0)
        for _ in range(4):
            n = int(rng.integers(3, 7))
            A = rng.standard_normal((n, n)) / np.sqrt(n)
            B = rng.standard_normal((n, 2))
            F = rng.standard_normal((2, n))
            z = rng.standard_normal(2)
            u = min_energy_control(A, B, F, z, 2.0)
            tr = integrate_lti(A, B, u, None, 2.0, 1e-3)
            assert np.linalg.norm(F @ tr.final - z) <= 1e-6 * (1 + np.linalg.norm(z))
            U = np.array([u(t) for t in tr.times])
            realized = _simpson((U**2).sum(1), tr.times[1])
            assert abs(realized - u.energy) <= 1e-6 * u.energy

    def test_not_output_controllable(self):
        with pytest.raises(InfeasibleError):
            min_energy_control(np.diag([-1.0, -2.0]), [[1.0], [0.0]], [[0.0, 1.0]], [1.0], 1.0)


class TestReconstruction:
    def _case(self, seed, mode):
        rng = np.random.default_rng(seed)
        C, A, F = unobservable_triple(rng, 5, 3 if mode == "observable" else 5, 2, 2, mode)
        B = rng.standard_normal((5, 1))
        x0 = rng.standard_normal(5)
        u = lambda t: np.array([np.sin(2 * t) + 0.5])  # noqa: E731
        tr = integrate_lti(A, B, u, x0, 5.0, 1e-3)
        return C, A, B, F, x0, u, tr

    @pytest.mark.parametrize("seed, mode", [(0, "generic"), (1, "observable"), (2, "observable")])
    def test_recovers_initial_target(self, seed, mode):
        C, A, B, F, x0, u, tr = self._case(seed, mode)
        rec = MeasurementRecord.from_trajectory(tr, C, u)
        zhat = reconstruct_target(C, A, F, rec, B=B)
        assert np.linalg.norm(zhat - F @ x0) <= 1e-6 * (1 + np.linalg.norm(F @ x0))

    def test_free_response(self):
        C, A, B, F, x0, u, _ = self._case(3, "generic")
        tr = integrate_lti(A, x0=x0, t1=3.0, dt=1e-3)
        zhat = reconstruct_target(C, A, F, MeasurementRecord.from_trajectory(tr, C))
        assert np.allclose(zhat, F @ x0, atol=1e-7)

    def test_requires_functional_observability(self):
        rng = np.random.default_rng(4)
        C, A, F = unobservable_triple(rng, 5, 3, 1, 1, "kernel")
        tr = integrate_lti(A, x0=np.ones(5), t1=1.0, dt=1e-2)
        with pytest.raises(InfeasibleError):
            reconstruct_target(C, A, F, MeasurementRecord.from_trajectory(tr, C))

    def test_input_without_matrix(self):
        C, A, B, F, x0, u, tr = self._case(5, "generic")
        with pytest.raises(DimensionError):
            reconstruct_target(C, A, F, MeasurementRecord.from_trajectory(tr, C, u))

    def test_record_validation(self):
        with pytest.raises(InputError):
            MeasurementRecord(times=[0.0, 0.1, 0.3], y=np.zeros((3, 1)))

    def test_coarse_record_warns(self):
        A = -np.eye(1) * 5
        tr = integrate_lti(A, x0=[1.0], t1=2.0, dt=0.25)
        with pytest.warns(RuntimeWarning):
            reconstruct_target([[1.0]], A, [[1.0]], MeasurementRecord.from_trajectory(tr, [[1.0]]))


class TestStaircase:
    def test_five_state(self, loop_system):
        st_ = staircase_decompose(loop_system.A, loop_system.B, F=loop_system.F)
        assert st_.m == 3
        P = st_.P
        assert np.allclose(P @ P.T, np.eye(5), atol=1e-12)
        Abar = P @ loop_system.A @ P.T
        assert np.allclose(Abar[3:, :3], 0, atol=1e-12)
        assert np.allclose(P @ loop_system.B, np.vstack([st_.B_c, np.zeros((2, 1))]), atol=1e-12)
        assert np.allclose(st_.F_u, 0, atol=1e-12)  # the target only sees controllable coordinates
        assert spectrum_distance(np.linalg.eigvals(st_.A_u), [-3, -3]) < 1e-9

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_krylov_rank(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        k = int(rng.integers(1, n + 1))
        C, A, _ = unobservable_triple(rng, n, k, int(rng.integers(1, 3)), 1)
        B = C.T  # the dual pair has a controllable subspace of dimension k
        st_ = staircase_decompose(A.T, B)
        assert st_.m == k == np.linalg.matrix_rank(ctrb_matrix(A.T, B), tol=1e-8 * np.linalg.norm(ctrb_matrix(A.T, B)))
        spec = np.concatenate([np.linalg.eigvals(st_.A_c), np.linalg.eigvals(st_.A_u)])
        assert spectrum_distance(spec, np.linalg.eigvals(A)) < 1e-6
        assert st_.discarded < 1e-8 * max(1.0, np.linalg.norm(A))


class TestSigma:
    def test_five_state(self, loop_system):
        sig = sigma_set(loop_system.A, loop_system.F)
        assert spectrum_distance(sig.eigenvalues, [-2, -0.5 + 0.8660254j, -0.5 - 0.8660254j]) < 1e-6
        assert spectrum_distance(sig.excluded, [-3, -3]) < 1e-9

    def test_identity_target_takes_everything(self):
        A = five_state(-1.0, -3.0, -3.0)
        assert len(sigma_set(A, np.eye(5))) == 5

    def test_matches_right_eigenvectors_for_symmetric_systems(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = 6
            V = rotation(rng, n)
            lam = -np.arange(1.0, n + 1)
            A = V @ np.diag(lam) @ V.T
            hidden = rng.random(n) < 0.4
            if (~hidden).sum() < 2:
                hidden[:2] = False
            F = rng.standard_normal((2, (~hidden).sum())) @ V[:, ~hidden].T
            sig = np.sort(sigma_set(A, F).eigenvalues.real)
            right = np.sort(right_modal_eigenvalues(A, F).real)
            assert np.allclose(sig, right)

    def test_right_eigenvectors_differ_for_coupled_modes(self, loop_system):
        # the -3 modes reach z through x5, but their left eigenvectors are
        # orthogonal to row(F), so Sigma leaves them out
        right = right_modal_eigenvalues(loop_system.A, loop_system.F)
        assert np.any(np.abs(right + 3) < 1e-9)
        assert not np.any(np.abs(sigma_set(loop_system.A, loop_system.F).eigenvalues + 3) < 1e-9)

    def test_repeated_semisimple_eigenvalue(self):
        # a double eigenvalue whose eigenspace meets row(F) in one direction
        A = np.diag([-1.0, -1.0, -2.0])
        sig = sigma_set(A, [[1.0, 0.0, 0.0]])
        assert len(sig) == 1 and abs(sig.eigenvalues[0] + 1) < 1e-12
        cl = next(c for c in sig.clusters if abs(c.eigenvalue + 1) < 1e-9)
        assert (cl.algebraic, cl.geometric, cl.selected) == (2, 2, 1)


class TestPlacementFeasibility:
    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_feasible_iff_dual_rank_test(self, seed):
        rng = np.random.default_rng(seed)
        A, B, F, lam, unc, hid = modal_instance(rng)
        oracle = not np.any(unc & ~hid)  # every uncontrollable mode is invisible to the target
        assert is_functionally_observable(B.T, A.T, F) == oracle
        sig = sigma_set(A, F)
        assert spectrum_distance(np.sort(sig.eigenvalues.real), np.sort(lam[~hid])) < 1e-6
        desired = -5.0 - np.arange(len(sig))
        if oracle:
            design = place_target_poles(A, B, F, desired)
            assert spectrum_distance(
                design.achieved_spectrum, np.concatenate([desired, design.defaults, lam[unc]])
            ) < 1e-5
        else:
            with pytest.raises(InfeasibleError):
                place_target_poles(A, B, F, desired)


class TestFiveStateFeedback:
    def test_places_sigma(self, loop_system, reference_gain):
        d = place_target_poles(loop_system.A, loop_system.B, loop_system.F, [-4, -5, -6])
        assert spectrum_distance(d.achieved_spectrum, [-4, -5, -6, -3, -3]) < 1e-6
        assert np.allclose(d.K, reference_gain, atol=1e-8)
        assert spectrum_distance(np.linalg.eigvals(loop_system.A - loop_system.B @ reference_gain), [-4, -5, -6, -3, -3]) < 1e-6

    def test_feedforward(self, loop_system, reference_gain):
        r = setpoint_feedforward(loop_system.A, loop_system.B, reference_gain, loop_system.F, [1.0])
        assert abs(r[0] + 120) < 1e-6

    def test_wrong_arity(self, loop_system):
        with pytest.raises(InputError):
            place_target_poles(loop_system.A, loop_system.B, loop_system.F, [-4, -5])

    def test_conjugate_closure(self, loop_system):
        with pytest.raises(InputError):
            place_target_poles(loop_system.A, loop_system.B, loop_system.F, [-4, -1 + 1j, -1 + 2j])

    def test_unstable_non_sigma_modes_are_stabilised(self):
        # x3 is controllable but not seen by the target; it starts unstable
        A = np.array([[-1.0, 1.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 0.5]])
        B = np.array([[0.0], [1.0], [1.0]])
        F = np.array([[1.0, 0.0, 0.0]])
        # x2 drives x1 but its left eigenvector is orthogonal to row(F)
        d = place_target_poles(A, B, F, [-3.0])
        assert np.max(d.achieved_spectrum.real) < 0
        # -2 is kept, 0.5 is moved to the first free slot -1 - index
        assert spectrum_distance(d.defaults, [-2.0, -4.0]) < 1e-12
        assert spectrum_distance(d.achieved_spectrum, [-2.0, -3.0, -4.0]) < 1e-6


def test_parse_poles():
    assert np.allclose(parse_poles("-4, -0.5+0.866i,-0.5-0.866i"), [-4, -0.5 + 0.866j, -0.5 - 0.866j])
    with pytest.raises(InputError):
        parse_poles("-4,abc")


def test_full_placement_repeated_poles_single_input():
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 2.0, 3.0]])
    B = np.array([[0.0], [0.0], [1.0]])
    K = place_poles_full(A, B, [-2, -2, -2])
    assert spectrum_distance(np.linalg.eigvals(A - B @ K), [-2, -2, -2]) < 1e-4


def test_full_placement_multi_input():
    rng = np.random.default_rng(3)
    A = stable_matrix(rng, 5)
    B = rng.standard_normal((5, 2))
    poles = [-1, -2, -3, -1 + 1j, -1 - 1j]
    K = place_poles_full(A, B, poles)
    assert spectrum_distance(np.linalg.eigvals(A - B @ K), poles) < 1e-8


def test_finite_gramian_used_for_energy():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    u = min_energy_control(A, B, [[1.0, 0.0]], [1.0], 1.0)
    Wc, _ = finite_horizon_gramians(A, B, None, 1.0)
    assert abs(u.energy - 1 / Wc[0, 0]) < 1e-10
    assert abs(u.energy - 3.0) < 1e-10  # double integrator: W_11 = t^3 / 3
