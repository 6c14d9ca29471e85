import numpy as np
import pytest
from scipy.linalg import solve_continuous_are

from koopsyn import plants, verify
from koopsyn.controller import DesignResult
from koopsyn.lifting import identity_lifting


@pytest.fixture(scope="module")
def scalar_plant():
    def f(x):
        return -np.asarray(x, dtype=float)

    def g(x):
        return np.zeros(np.shape(x))

    return plants.Plant(name="decay", n=1, m=1, f=f, g=(g,),
                        state_box=[[-1.0, 1.0]], input_box=[[-1.0, 1.0]])


def zero_design(n):
    return DesignResult(theorem=1, P=np.eye(n), L=np.zeros((1, n)), tau=1.0,
                        nu=1.0, lam=1.0)


class TestSimulate:
    def test_equilibrium_stays(self, plant_cooked, design_cooked, lifting_cooked):
        traj = verify.simulate(plant_cooked, design_cooked, lifting_cooked,
                               np.zeros(2), horizon=1.0)
        assert np.max(np.abs(traj.states)) == 0.0

    def test_linear_decay_closed_form(self, scalar_plant):
        L = identity_lifting(1)
        traj = verify.simulate(scalar_plant, zero_design(1), L, np.array([1.0]),
                               horizon=1.0)
        idx = np.argmin(np.abs(traj.t - 1.0))
        assert traj.t[-1] >= 1.0 - 1e-9
        assert abs(traj.states[-1, 0] - np.exp(-traj.t[-1])) < 1e-6
        assert abs(traj.states[idx, 0] - np.exp(-traj.t[idx])) < 1e-6

    def test_converged_status(self, scalar_plant):
        L = identity_lifting(1)
        traj = verify.simulate(scalar_plant, zero_design(1), L, np.array([1.0]),
                               horizon=50.0)
        assert traj.reason == "converged"
        assert np.linalg.norm(traj.final_state) <= 1.1e-8

    def test_certified_start_converges(self, plant_pendulum,
                                       design_pendulum_shaped, lifting_pendulum):
        traj = verify.simulate(plant_pendulum, design_pendulum_shaped,
                               lifting_pendulum, np.array([1.0, -1.0]),
                               rtol=1e-8, atol=1e-8)
        assert traj.reason == "converged"
        audit = verify.lyapunov_audit(traj)
        assert audit.ok

    def test_escape_status(self, scalar_plant):
        grow = plants.Plant(name="grow", n=1, m=1,
                            f=lambda x: np.asarray(x, dtype=float),
                            g=scalar_plant.g, state_box=[[-1.0, 1.0]],
                            input_box=[[-1.0, 1.0]])
        L = identity_lifting(1)
        traj = verify.simulate(grow, zero_design(1), L, np.array([1.0]),
                               horizon=50.0, escape_radius=100.0)
        assert traj.reason == "left_domain"

    def test_integrator_order(self, scalar_plant):
        # fixed-step reading: halving the step cuts the error by >= 4x
        errs = []
        for h in (0.5, 0.25):
            traj = verify.simulate_feedback(scalar_plant,
                                            lambda x: np.zeros(1),
                                            np.array([1.0]), horizon=4.0,
                                            rtol=10.0, atol=10.0, max_step=h,
                                            converged_tol=0.0)
            errs.append(abs(traj.states[-1, 0] - np.exp(-traj.t[-1])))
        assert errs[1] > 0.0
        assert errs[1] <= errs[0] / 4.0

    def test_tolerance_scaling(self, scalar_plant):
        L = identity_lifting(1)
        errs = []
        for rtol in (1.6e-6, 1e-7):
            traj = verify.simulate(scalar_plant, zero_design(1), L,
                                   np.array([1.0]), horizon=1.0, rtol=rtol,
                                   atol=rtol)
            errs.append(abs(traj.states[-1, 0] - np.exp(-traj.t[-1])))
        assert errs[1] <= errs[0] / 4.0


class TestLyapunovAudit:
    def test_equilibrium_zero_increase(self, plant_cooked, design_cooked,
                                       lifting_cooked):
        traj = verify.simulate(plant_cooked, design_cooked, lifting_cooked,
                               np.zeros(2), horizon=1.0)
        rep = verify.lyapunov_audit(traj)
        assert rep.ok and rep.max_increase == 0.0

    def test_certified_design_passes(self, plant_cooked, design_cooked,
                                     lifting_cooked):
        traj = verify.simulate(plant_cooked, design_cooked, lifting_cooked,
                               np.array([5.0, 5.0]), rtol=1e-8, atol=1e-8)
        assert verify.lyapunov_audit(traj).ok

    def test_destabilizing_gain_fails(self, plant_cooked, design_cooked,
                                      lifting_cooked):
        import dataclasses

        flipped = dataclasses.replace(design_cooked, L=-design_cooked.L)
        traj = verify.simulate(plant_cooked, flipped, lifting_cooked,
                               np.array([0.1, 0.1]), horizon=5.0,
                               escape_radius=1e3)
        assert not verify.lyapunov_audit(traj).ok

    def test_requires_in_roa_start(self, plant_cooked, design_cooked,
                                   lifting_cooked):
        traj = verify.simulate(plant_cooked, design_cooked, lifting_cooked,
                               np.array([100.0, 100.0]), horizon=0.1,
                               escape_radius=1e9)
        with pytest.raises(ValueError):
            verify.lyapunov_audit(traj)


class TestCARE:
    def test_scalar_closed_form(self):
        P, info = verify.solve_care(np.array([[-1.0]]), np.array([[1.0]]),
                                    np.eye(1), np.eye(1))
        assert P[0, 0] == pytest.approx(np.sqrt(2.0) - 1.0, abs=1e-12)

    def test_scalar_integrator(self):
        P, _ = verify.solve_care(np.array([[0.0]]), np.array([[1.0]]),
                                 np.eye(1), np.eye(1))
        assert P[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_residual_bound(self, surrogate_pendulum):
        K, P, info = verify.lqr_baseline(surrogate_pendulum)
        assert info["relative_residual"] <= 1e-8

    def test_matches_scipy(self, surrogate_pendulum):
        A, B = surrogate_pendulum.A, surrogate_pendulum.B0
        Q = np.eye(3)
        R = np.eye(1)
        P, _ = verify.solve_care(A, B, Q, R)
        P_ref = solve_continuous_are(A, B, Q, R)
        assert np.max(np.abs(P - P_ref)) <= 1e-8 * max(1.0, np.max(np.abs(P_ref)))

    def test_unstabilizable_rejected(self):
        A = np.diag([1.0, -1.0])
        B = np.array([[0.0], [1.0]])
        assert not verify.hautus_stabilizable(A, B)
        with pytest.raises(ValueError):
            verify.solve_care(A, B, np.eye(2), np.eye(1))

    def test_closed_loop_stable(self, surrogate_pendulum):
        K, _, _ = verify.lqr_baseline(surrogate_pendulum)
        Acl = surrogate_pendulum.A - surrogate_pendulum.B0 @ K
        assert np.max(np.linalg.eigvals(Acl).real) < 0.0


class TestRoAInvariance:
    def test_monte_carlo_stays_inside(self, plant_cooked, design_cooked,
                                      lifting_cooked):
        from conftest import sample_roa_starts

        starts = sample_roa_starts(design_cooked, lifting_cooked, 25, seed=31)
        for x0 in starts:
            traj = verify.simulate(plant_cooked, design_cooked, lifting_cooked,
                                   x0, rtol=1e-8, atol=1e-8)
            assert np.nanmax(traj.V) <= 1.0 + 1e-4
