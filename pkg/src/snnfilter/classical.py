"""Non-spiking continuous-time filters.

The extended Kalman filter (EKF) and the sliding-innovation family (SIF,
MSIF) share one Euler-discretized estimator equation::

    x_hat' = x_hat + dt * (f(x_hat, u) + K (z - h(x_hat)))

and differ only in the gain ``K``.  The covariance ``P`` is propagated by the
continuous Riccati flow for every rule; the MSIF gain reads the diagonal of the
innovation covariance built from it.  EMSIF is :func:`filter_step` with the
MSIF rule on a nonlinear model.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError, RankDeficientWarning, SingularMatrixError
from .systems import DIVERGENCE_LIMIT, NoiseSpec, SystemModel


class GainKind(str, enum.Enum):
    KALMAN = "kalman"
    SIF = "sif"
    MSIF = "msif"


@dataclass(frozen=True)
class GainRule:
    """Which gain to use, and the boundary layer ``delta`` for SIF/MSIF."""

    kind: GainKind = GainKind.KALMAN
    delta: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "kind", GainKind(self.kind))
        if self.kind is not GainKind.KALMAN and not self.delta > 0:
            raise ValueError(f"boundary layer delta must be positive, got {self.delta}")


@dataclass(frozen=True, eq=False)
class FilterState:
    x_hat: np.ndarray
    P: np.ndarray
    t: float = 0.0


def symmetrize(M):
    return 0.5 * (M + M.T)


def _inverse(R):
    R = np.atleast_2d(R)
    try:
        Rinv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("measurement covariance is singular") from exc
    if not np.all(np.isfinite(Rinv)):
        raise SingularMatrixError("measurement covariance is singular")
    return Rinv


def riccati_step(P, A, Q, C, R, dt, clip_eigenvalues=False, R_inv=None):
    """One Euler step of ``P' = AP + PA^T + Q - P C^T R^-1 C P``.

    The result is symmetrized.  With ``clip_eigenvalues`` negative
    eigenvalues are set to zero (off by default).  ``R_inv`` may be passed
    to skip inverting a constant ``R`` on every step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    PCt = P @ C.T
    if R_inv is None:
        R_inv = _inverse(R)
    AP = A @ P
    Pdot = AP + AP.T + Q - PCt @ R_inv @ PCt.T
    P_next = symmetrize(P + dt * Pdot)
    if clip_eigenvalues:
        w, V = np.linalg.eigh(P_next)
        P_next = symmetrize((V * np.clip(w, 0.0, None)) @ V.T)
    return P_next


def ekf_gain(P, C, R, R_inv=None):
    """Kalman gain ``P C^T R^-1``."""
    return P @ C.T @ (_inverse(R) if R_inv is None else R_inv)


def innovation_covariance(P, C, R):
    """Innovation covariance ``C P C^T + R``."""
    return C @ P @ C.T + np.atleast_2d(R)


def saturate(vec, delta):
    """Saturation ``clip(vec / delta, -1, 1)``, elementwise."""
    if not delta > 0:
        raise ValueError(f"boundary layer delta must be positive, got {delta}")
    return np.clip(np.asarray(vec, dtype=float) / delta, -1.0, 1.0)


_PINV_CACHE = {}


def pseudo_inverse(C):
    """Moore-Penrose inverse of ``C``; warns when ``C`` lacks full row rank.

    Results are memoized on the matrix contents, since measurement
    Jacobians are usually constant along a run.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    key = (C.shape, C.tobytes())
    hit = _PINV_CACHE.get(key)
    if hit is not None:
        Cp, full_rank = hit
    else:
        Cp = np.linalg.pinv(C)
        Cp.setflags(write=False)
        full_rank = np.linalg.matrix_rank(C) == C.shape[0]
        if len(_PINV_CACHE) > 256:
            _PINV_CACHE.clear()
        _PINV_CACHE[key] = (Cp, full_rank)
    if not full_rank:
        warnings.warn(
            f"measurement Jacobian of shape {C.shape} is rank deficient; "
            "using least-squares pseudo-inverse",
            RankDeficientWarning,
            stacklevel=3,
        )
    return Cp


def sif_gain(C, innovation, delta, C_pinv=None):
    """SIF gain ``C^+ diag(sat(|z - z_hat| / delta))`` of shape ``(n_x, n_z)``."""
    if C_pinv is None:
        C_pinv = pseudo_inverse(C)
    return C_pinv * saturate(np.abs(np.ravel(innovation)), delta)


def msif_gain(C, Pzz, delta, C_pinv=None):
    """MSIF gain ``C^+ diag(sat(diag(Pzz) / delta))``."""
    if C_pinv is None:
        C_pinv = pseudo_inverse(C)
    return C_pinv * saturate(np.diag(np.atleast_2d(Pzz)), delta)


def filter_gain(rule: GainRule, P, C, R, innovation, C_pinv=None):
    if rule.kind is GainKind.KALMAN:
        return ekf_gain(P, C, R)
    if rule.kind is GainKind.MSIF:
        return msif_gain(C, innovation_covariance(P, C, R), rule.delta, C_pinv)
    return sif_gain(C, innovation, rule.delta, C_pinv)


def filter_step(
    state: FilterState,
    model: SystemModel,
    u,
    z,
    rule: GainRule,
    noise_used: NoiseSpec,
    dt,
    clip_eigenvalues=False,
):
    """Advance a classical filter by one Euler step.

    ``z`` is the measurement taken at ``state.t``, so the right-hand side of
    the estimator ODE is evaluated consistently at one instant.

    Returns
    -------
    FilterState
        Estimate and covariance at ``state.t + dt``.
    """
    x_hat = state.x_hat
    A = model.A(x_hat, u)
    C = model.C(x_hat)
    P_next = riccati_step(state.P, A, noise_used.Q, C, noise_used.R, dt, clip_eigenvalues)
    innovation = np.asarray(z, dtype=float) - model.h(x_hat)
    K = filter_gain(rule, P_next, C, noise_used.R, innovation)
    x_next = x_hat + dt * (model.f(x_hat, u) + K @ innovation)
    if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"estimate diverged at t={state.t + dt:.6g}")
    return replace(state, x_hat=x_next, P=P_next, t=state.t + dt)


def run_filter(model, trajectory, rule, noise_used, x_hat0, P0, clip_eigenvalues=False):
    """Run a classical filter over a whole trajectory.

    Returns
    -------
    estimates : ndarray, shape (steps + 1, n_x)
    covariances : ndarray, shape (steps + 1, n_x, n_x)
    """
    steps = trajectory.steps
    est = np.empty((steps + 1, model.n_x))
    cov = np.empty((steps + 1, model.n_x, model.n_x))
    state = FilterState(np.asarray(x_hat0, dtype=float), np.asarray(P0, dtype=float), 0.0)
    est[0], cov[0] = state.x_hat, state.P
    for k in range(steps):
        try:
            state = filter_step(
                state,
                model,
                trajectory.inputs[k],
                trajectory.measurements[k],
                rule,
                noise_used,
                trajectory.dt,
                clip_eigenvalues,
            )
        except DivergenceError as exc:
            raise DivergenceError(str(exc), step=k + 1) from None
        est[k + 1], cov[k + 1] = state.x_hat, state.P
    return est, cov
