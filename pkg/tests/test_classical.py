import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm, solve_continuous_are

from snnfilter.classical import (
    FilterState,
    GainRule,
    ekf_gain,
    filter_step,
    innovation_covariance,
    msif_gain,
    pseudo_inverse,
    riccati_step,
    run_filter,
    saturate,
    sif_gain,
)
from snnfilter.errors import DivergenceError, RankDeficientWarning, SingularMatrixError
from snnfilter.systems import NoiseSpec, SystemModel, Trajectory, VanDerPol


class LTI(SystemModel):
    """Autonomous linear test plant ``x' = A x``, ``z = C x``."""

    linear = True

    def __init__(self, A, C):
        self._A = np.asarray(A, float)
        self._C = np.asarray(C, float)
        self.n_x = self._A.shape[0]
        self.n_z = self._C.shape[0]
        self.n_u = 1

    def f(self, x, u=None):
        return self._A @ x

    def h(self, x):
        return self._C @ x

    def A(self, x=None, u=None):
        return self._A

    def B(self, x=None, u=None):
        return np.zeros((self.n_x, 1))

    def C(self, x=None):
        return self._C


def care_residual(P, A, Q, C, R):
    return A @ P + P @ A.T + Q - P @ C.T @ np.linalg.inv(R) @ C @ P


class TestRiccati:
    def test_zero_is_fixed_point(self):
        Z = np.zeros((2, 2))
        P = riccati_step(Z, np.eye(2), Z, np.eye(2), np.eye(2), 0.1)
        np.testing.assert_array_equal(P, Z)

    def test_pure_measurement_update(self):
        # P' = -P^2 at P = I
        P = riccati_step(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), np.eye(2), 0.01)
        np.testing.assert_allclose(P, 0.99 * np.eye(2), rtol=0, atol=1e-15)

    def test_singular_R(self):
        with pytest.raises(SingularMatrixError):
            riccati_step(np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2)), 0.01)
        with pytest.raises(SingularMatrixError):
            ekf_gain(np.eye(2), np.eye(2), np.zeros((2, 2)))

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            riccati_step(np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2), 0.0)

    def test_steady_state_vdp_matrices(self):
        vdp = VanDerPol()
        A, C = vdp.A(np.zeros(2)), vdp.C()
        Q, R = np.eye(2) / 100, np.array([[0.1]])
        P = np.diag([0.01, 0.01])
        for _ in range(200000):
            P_next = riccati_step(P, A, Q, C, R, 0.01)
            done = np.linalg.norm(P_next - P) < 1e-10
            P = P_next
            if done:
                break
        assert done
        assert np.abs(care_residual(P, A, Q, C, R)).max() < 1e-8
        np.testing.assert_allclose(P, solve_continuous_are(A.T, C.T, Q, R), rtol=1e-6)

    def test_steady_state_full_measurement(self):
        A = np.array([[-0.5, 1.0], [-1.0, -0.2]])
        Q, R, C = np.diag([0.3, 0.1]), np.diag([0.2, 0.5]), np.eye(2)
        P = np.eye(2)
        for _ in range(20000):
            P = riccati_step(P, A, Q, C, R, 0.01)
        assert np.linalg.norm(care_residual(P, A, Q, C, R)) < 1e-6

    def test_symmetry_enforced(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(3, 3))
        M = rng.normal(size=(3, 3))
        P = riccati_step(M @ M.T, A, np.eye(3), rng.normal(size=(2, 3)), np.eye(2), 0.01)
        np.testing.assert_array_equal(P, P.T)

    def test_clipping(self):
        P = np.diag([1.0, -0.5])
        Z = np.zeros((2, 2))
        P_next = riccati_step(P, Z, Z, np.eye(2), np.eye(2) * 1e12, 1e-3, clip_eigenvalues=True)
        assert np.linalg.eigvalsh(P_next).min() >= 0.0


class TestGains:
    def test_ekf_gain_examples(self):
        np.testing.assert_array_equal(ekf_gain(np.eye(2), np.eye(2), np.eye(2)), np.eye(2))
        np.testing.assert_array_equal(ekf_gain(np.zeros((2, 2)), np.eye(2), np.eye(2)), np.zeros((2, 2)))
        K = ekf_gain(np.diag([2.0, 3.0]), np.array([[1.0, 0.0]]), np.array([[0.1]]))
        np.testing.assert_allclose(K, [[20.0], [0.0]])

    def test_innovation_covariance_examples(self):
        R = np.array([[0.3, 0.1], [0.1, 0.2]])
        np.testing.assert_array_equal(innovation_covariance(np.zeros((2, 2)), np.eye(2), R), R)
        P = np.diag([1.0, 4.0])
        np.testing.assert_array_equal(innovation_covariance(P, np.eye(2), R), P + R)
        Pzz = innovation_covariance(np.diag([2.0, 3.0]), np.array([[1.0, 0.0]]), 0.1)
        np.testing.assert_allclose(Pzz, [[2.1]])

    @pytest.mark.parametrize("vec, expected", [(0.02, 0.4), (10.0, 1.0), (0.05, 1.0), (-3.0, -1.0)])
    def test_saturate_examples(self, vec, expected):
        assert saturate(vec, 0.05) == pytest.approx(expected)

    def test_saturate_requires_positive_delta(self):
        with pytest.raises(ValueError):
            saturate(1.0, 0.0)

    @given(
        arrays(float, 5, elements=st.floats(0, 1e6, allow_nan=False)),
        arrays(float, 5, elements=st.floats(0, 1e3, allow_nan=False)),
        st.floats(1e-4, 10),
    )
    def test_saturate_range_and_monotone(self, vec, bump, delta):
        a = saturate(vec, delta)
        b = saturate(vec + bump, delta)
        assert np.all((a >= 0) & (a <= 1))
        assert np.all(b >= a)

    def test_sif_gain_examples(self):
        C = np.array([[1.0, 0.0]])
        np.testing.assert_array_equal(sif_gain(C, [0.0], 0.05), np.zeros((2, 1)))
        np.testing.assert_allclose(sif_gain(C, [0.2], 0.05), [[1.0], [0.0]])
        np.testing.assert_allclose(sif_gain(C, [-0.2], 0.05), [[1.0], [0.0]])
        np.testing.assert_allclose(sif_gain(np.eye(3), np.full(3, 0.025), 0.05), 0.5 * np.eye(3))

    def test_msif_gain_examples(self):
        C = np.array([[1.0, 0.0]])
        np.testing.assert_allclose(msif_gain(C, [[0.025]], 0.05), [[0.5], [0.0]])
        np.testing.assert_array_equal(msif_gain(C, [[0.0]], 0.05), np.zeros((2, 1)))
        C3 = np.hstack([np.eye(3), np.zeros((3, 3))])
        np.testing.assert_allclose(msif_gain(C3, np.eye(3), 0.1), np.linalg.pinv(C3))

    @given(
        arrays(float, (2, 4), elements=st.floats(-3, 3, allow_nan=False)),
        arrays(float, 2, elements=st.floats(-100, 100, allow_nan=False)),
        st.floats(1e-3, 5),
    )
    def test_gains_bounded_by_pinv(self, C, innov, delta):
        if np.linalg.matrix_rank(C) < 2:
            return
        bound = np.linalg.norm(np.linalg.pinv(C), 2) * (1 + 1e-12)
        assert np.linalg.norm(sif_gain(C, innov, delta), 2) <= bound
        Pzz = np.diag(np.abs(innov))
        assert np.linalg.norm(msif_gain(C, Pzz, delta), 2) <= bound

    @given(
        arrays(float, (2, 3), elements=st.floats(-3, 3, allow_nan=False)),
        arrays(float, 2, elements=st.floats(1e-3, 10, allow_nan=False)),
        st.floats(1e-3, 5),
        st.floats(0.1, 10),
    )
    def test_msif_sign_pattern_invariant_under_delta(self, C, diag, delta, scale):
        if np.linalg.matrix_rank(C) < 2:
            return
        K1 = msif_gain(C, np.diag(diag), delta)
        K2 = msif_gain(C, np.diag(diag), delta * scale)
        np.testing.assert_array_equal(np.sign(K1), np.sign(K2))

    def test_rank_deficient_warns_and_proceeds(self):
        C = np.array([[1.0, 0.0], [2.0, 0.0]])
        with pytest.warns(RankDeficientWarning):
            K = sif_gain(C, [1.0, 1.0], 0.5)
        np.testing.assert_allclose(K, np.linalg.pinv(C))

    def test_pseudo_inverse_cached_and_read_only(self):
        C = np.array([[1.0, 0.0]])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            a = pseudo_inverse(C)
            b = pseudo_inverse(C.copy())
        assert a is b
        assert not a.flags.writeable


class TestFilterStep:
    def test_zero_innovation_is_pure_propagation(self, vdp, vdp_noise):
        state = FilterState(np.array([0.5, -0.3]), np.eye(2) * 0.01, 0.0)
        z = vdp.h(state.x_hat)
        new = filter_step(state, vdp, np.zeros(1), z, GainRule("kalman"), vdp_noise, 0.01)
        np.testing.assert_allclose(new.x_hat, state.x_hat + 0.01 * vdp.f(state.x_hat))
        assert new.t == pytest.approx(0.01)

    def test_divergence(self, vdp):
        noise = NoiseSpec(np.eye(2), np.array([[1e-30]]))
        state = FilterState(np.array([0.0, 0.0]), np.eye(2) * 1e20, 0.0)
        with pytest.raises(DivergenceError):
            filter_step(state, vdp, np.zeros(1), [1e10], GainRule("kalman"), noise, 0.01)

    def test_gain_rule_validation(self):
        with pytest.raises(ValueError):
            GainRule("msif", delta=0.0)
        GainRule("kalman", delta=0.0)

    def test_covariance_stays_symmetric_psd(self, vdp, vdp_noise):
        from snnfilter.systems import simulate_truth

        traj = simulate_truth(vdp, [2.0, 2.0], vdp_noise, 0.01, 20.0, seed=3)
        for rule in (GainRule("kalman"), GainRule("msif", 0.05)):
            _, cov = run_filter(vdp, traj, rule, vdp_noise, [0.0, 0.0], np.diag([0.01, 0.01]))
            assert np.array_equal(cov, np.swapaxes(cov, 1, 2))
            assert np.linalg.eigvalsh(cov).min() >= -1e-9


def _discrete_kf(A, C, Q, R, x0, P0, z, dt):
    """Textbook discrete KF with the sampled-data equivalents of (Q, R)."""
    F = expm(A * dt)
    Qd, Rd = Q * dt, R / dt
    x, P = np.array(x0, float), np.array(P0, float)
    out = [x.copy()]
    for k in range(1, len(z)):
        x = F @ x
        P = F @ P @ F.T + Qd
        S = C @ P @ C.T + Rd
        K = P @ C.T @ np.linalg.inv(S)
        x = x + K @ (z[k] - C @ x)
        P = (np.eye(len(x)) - K @ C) @ P
        out.append(x.copy())
    return np.array(out)


def test_continuous_filter_matches_discrete_oracle():
    A = np.array([[0.0, 1.0], [-1.0, -0.3]])
    C = np.array([[1.0, 0.0]])
    Q, R = np.diag([0.05, 0.1]), np.array([[0.2]])
    model = LTI(A, C)
    noise = NoiseSpec(Q, R)
    diffs = []
    for dt in (0.01, 0.005):
        t = np.arange(0.0, 5.0 + dt / 2, dt)
        # smooth deterministic measurement record, so both filters share a limit
        z = (np.cos(t) + 0.3 * np.sin(3 * t))[:, None]
        traj = Trajectory(t, np.zeros((len(t), 2)), np.zeros((len(t), 1)), z, None, dt)
        est, _ = run_filter(model, traj, GainRule("kalman"), noise, [1.0, 0.0], np.eye(2))
        oracle = _discrete_kf(A, C, Q, R, [1.0, 0.0], np.eye(2), z, dt)
        diffs.append(np.abs(est - oracle).max())
    assert diffs[0] < 0.05
    # first-order agreement: halving dt roughly halves the gap
    assert 1.6 < diffs[0] / diffs[1] < 2.4
