"""Dynamical-system models and ground-truth simulation.

Two plants are provided:

* :class:`VanDerPol` -- the weakly damped Van der Pol oscillator with the
  first state measured.
* :class:`Rendezvous` -- Clohessy-Wiltshire relative motion about a circular
  target orbit, position measured, driven by a linear state-feedback
  controller.

Every model exposes ``f(x, u)``, ``h(x)`` and the Jacobians ``A(x, u)``,
``B(x, u)``, ``C(x)``.  Truth trajectories are generated by
:func:`simulate_truth` with explicit Euler-Maruyama integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidStateError

MU_EARTH = 398600.0  # km^3/s^2
DEFAULT_ORBIT_RADIUS = 6778.137  # km, ~400 km altitude
DIVERGENCE_LIMIT = 1e12


def _as_state(x, n=None, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (n is not None and x.shape[0] != n):
        raise InvalidStateError(f"{name} must be a {n}-vector, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise InvalidStateError(f"{name} contains non-finite entries: {x}")
    return x


# ----------------------------------------------------------------------------
# Van der Pol
# ----------------------------------------------------------------------------


def vdp_dynamics(x, u=None, mu=0.005):
    """State derivative of the Van der Pol oscillator.

    ``x = [position, velocity]``; the input ``u`` is ignored.
    """
    x1, x2 = _as_state(x, 2)
    return np.array([x2, mu * (1.0 - x1 * x1) * x2 - x1])


def vdp_jacobian(x, mu=0.005):
    """Jacobian of :func:`vdp_dynamics` with respect to the state."""
    x1, x2 = _as_state(x, 2)
    return np.array([[0.0, 1.0], [-(2.0 * mu * x1 * x2 + 1.0), mu * (1.0 - x1 * x1)]])


# ----------------------------------------------------------------------------
# Clohessy-Wiltshire rendezvous
# ----------------------------------------------------------------------------


def mean_motion(R_o, mu_earth=MU_EARTH):
    """Mean motion ``sqrt(mu_earth / R_o**3)`` of a circular orbit, in rad/s.

    Parameters
    ----------
    R_o : float
        Orbital radius in km.
    mu_earth : float
        Gravitational parameter in km^3/s^2.
    """
    if not R_o > 0:
        raise ValueError(f"orbital radius must be positive, got {R_o}")
    return float(np.sqrt(mu_earth / R_o**3))


CW_VARIANTS = ("velocity", "textbook")
_CW_ALIASES = {"paper": "velocity"}


def cw_variant_name(variant):
    """Canonical CW variant name; raises ConfigError for unknown names."""
    name = _CW_ALIASES.get(variant, variant)
    if name not in CW_VARIANTS:
        raise ConfigError(f"unknown cw_variant {variant!r}; expected one of {CW_VARIANTS}")
    return name


def cw_matrices(n, variant="velocity"):
    """State-space matrices of the CW equations.

    The state is ``[x, y, z, vx, vy, vz]`` and the input is the specific force
    ``[fx, fy, fz]``.

    ``variant="velocity"`` (the default) uses a form in which the
    out-of-plane and radial rows couple to velocities::

        vx' =  2n vz
        vy' = -n^2 vy
        vz' = -2n vx + 2n^2 vz

    ``variant="textbook"`` uses the classical position coupling
    ``vy' = -n^2 y`` and ``vz' = -2n vx + 3n^2 z``.
    """
    if n < 0:
        raise ValueError(f"mean motion must be nonnegative, got {n}")
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    variant = cw_variant_name(variant)
    if variant == "velocity":
        A[3, 5] = 2.0 * n
        A[4, 4] = -(n**2)
        A[5, 3] = -2.0 * n
        A[5, 5] = 2.0 * n**2
    elif variant == "textbook":
        A[3, 5] = 2.0 * n
        A[4, 1] = -(n**2)
        A[5, 3] = -2.0 * n
        A[5, 2] = 3.0 * n**2
    B = np.zeros((6, 3))
    B[3:, :] = np.eye(3)
    return A, B


def lqr_control(K_ctrl, x_hat):
    """Linear state feedback ``u = -K x_hat``."""
    K_ctrl = np.asarray(K_ctrl, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if K_ctrl.ndim != 2 or K_ctrl.shape[1] != x_hat.shape[-1]:
        raise ConfigError(
            f"controller gain shape {K_ctrl.shape} incompatible with state of size {x_hat.shape[-1]}"
        )
    return -K_ctrl @ x_hat


# ----------------------------------------------------------------------------
# Model containers
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Process and measurement noise covariances.

    ``Q`` is a continuous-time intensity; ``R`` is the covariance of each
    measurement sample.  Both must be symmetric positive semidefinite.  A
    filter additionally requires the ``R`` it uses to be invertible.
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape[0] != M.shape[1]:
                raise ConfigError(f"{name} must be square, got shape {M.shape}")
            if not np.allclose(M, M.T, atol=1e-12, rtol=0):
                raise ConfigError(f"{name} must be symmetric")
            if M.size and np.linalg.eigvalsh(M).min() < -1e-12 * max(1.0, np.abs(M).max()):
                raise ConfigError(f"{name} must be positive semidefinite")
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    def scaled(self, alpha_q=1.0, alpha_r=1.0):
        """Return the mismatched covariances ``(alpha_q Q, alpha_r R)``."""
        return NoiseSpec(alpha_q * self.Q, alpha_r * self.R)


class SystemModel:
    """Contract for a continuous-time plant ``x' = f(x, u) + w``, ``z = h(x) + v``.

    Subclasses set ``n_x``, ``n_u``, ``n_z`` and implement :meth:`f`,
    :meth:`h`, :meth:`A`, :meth:`B` and :meth:`C`.  ``linear`` is true when
    the Jacobians do not depend on the operating point.
    """

    name = "abstract"
    n_x: int
    n_u: int
    n_z: int
    linear = False

    def f(self, x, u):
        raise NotImplementedError

    def h(self, x):
        raise NotImplementedError

    def A(self, x, u=None):
        raise NotImplementedError

    def B(self, x=None, u=None):
        raise NotImplementedError

    def C(self, x=None):
        raise NotImplementedError

    def control(self, x_hat):
        """Input applied when the plant is driven by an estimate (zero by default)."""
        return np.zeros(self.n_u)


@dataclass(frozen=True)
class VanDerPol(SystemModel):
    """Van der Pol oscillator, ``x = [x, x']``, with ``z = x_1``."""

    mu: float = 0.005
    name = "van_der_pol"
    n_x = 2
    n_u = 1
    n_z = 1

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ConfigError(f"mu must be finite, got {self.mu}")

    def f(self, x, u=None):
        return vdp_dynamics(x, u, self.mu)

    def h(self, x):
        return np.array([x[0]], dtype=float)

    def A(self, x, u=None):
        return vdp_jacobian(x, self.mu)

    def B(self, x=None, u=None):
        return np.zeros((2, 1))

    def C(self, x=None):
        return np.array([[1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Rendezvous(SystemModel):
    """Linear CW relative motion with position measurements.

    Parameters
    ----------
    n : float
        Mean motion of the target orbit (rad/s).  Zero is accepted and
        gives a free double integrator.
    K_ctrl : array_like, shape (3, 6)
        State-feedback gain, used as ``u = -K_ctrl x``.
    variant : {"velocity", "textbook"}
        Which CW matrix to use, see :func:`cw_matrices`.
    """

    n: float
    K_ctrl: np.ndarray = field(default_factory=lambda: np.zeros((3, 6)))
    variant: str = "velocity"
    name = "rendezvous"
    n_x = 6
    n_u = 3
    n_z = 3
    linear = True

    def __post_init__(self):
        if not self.n >= 0 or not np.isfinite(self.n):
            raise ConfigError(f"mean motion must be finite and nonnegative, got {self.n}")
        K = np.asarray(self.K_ctrl, dtype=float)
        if K.shape != (3, 6) or not np.all(np.isfinite(K)):
            raise ConfigError(f"K_ctrl must be a finite 3x6 matrix, got shape {K.shape}")
        A, B = cw_matrices(self.n, self.variant)
        for M in (K, A, B):
            M.setflags(write=False)
        object.__setattr__(self, "K_ctrl", K)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_B", B)
        C = np.hstack([np.eye(3), np.zeros((3, 3))])
        C.setflags(write=False)
        object.__setattr__(self, "_C", C)

    def f(self, x, u):
        return self._A @ x + self._B @ np.asarray(u, dtype=float)

    def h(self, x):
        return x[:3].astype(float)

    def A(self, x=None, u=None):
        return self._A

    def B(self, x=None, u=None):
        return self._B

    def C(self, x=None):
        return self._C

    def control(self, x_hat):
        return lqr_control(self.K_ctrl, x_hat)


def make_system(name, **params):
    """Build a model from its config name (``"van_der_pol"`` or ``"rendezvous"``)."""
    if name == "van_der_pol":
        return VanDerPol(mu=params.get("mu", 0.005))
    if name == "rendezvous":
        n = mean_motion(params.get("R_o", DEFAULT_ORBIT_RADIUS), params.get("mu_earth", MU_EARTH))
        return Rendezvous(
            n=n,
            K_ctrl=np.asarray(params.get("K_ctrl", np.zeros((3, 6))), dtype=float),
            variant=params.get("cw_variant", "velocity"),
        )
    raise ConfigError(f"unknown system {name!r}; expected 'van_der_pol' or 'rendezvous'")


def numerical_jacobian(fun: Callable, x, step=1e-6):
    """Central finite-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        J[:, j] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step)
    return J


# ----------------------------------------------------------------------------
# Truth simulation
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled ground truth.

    All arrays share the leading dimension ``steps + 1``; index ``k`` refers
    to time ``times[k] = k * dt``.  ``inputs[k]`` is held over
    ``[t_k, t_{k+1})`` and ``measurements[k] = h(states[k]) + v_k``.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    measurements: np.ndarray
    seed: Optional[int]
    dt: float

    @property
    def steps(self):
        return len(self.times) - 1

    def __len__(self):
        return len(self.times)


def _noise_factor(M):
    # Factor of a PSD matrix that tolerates singular Q (e.g. Q = 0).
    w, V = np.linalg.eigh(M)
    return V * np.sqrt(np.clip(w, 0.0, None))


def n_steps(dt, T):
    """Number of Euler steps covering ``[0, T]`` at spacing ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T < dt:
        raise ValueError(f"horizon T={T} shorter than one step dt={dt}")
    return int(round(T / dt))


def simulate_truth(
    model: SystemModel,
    x0,
    noise: NoiseSpec,
    dt,
    T,
    seed=None,
    controller=None,
    process_noise="intensity",
):
    """Integrate the plant with explicit Euler-Maruyama.

    ``x_{k+1} = x_k + f(x_k, u_k) dt + w_k`` and ``z_k = h(x_k) + v_k``.

    Parameters
    ----------
    controller : array_like or None
        Feedback gain ``K``; the plant receives ``u_k = -K x_k`` computed
        from the true state.  ``None`` means zero input.
    process_noise : {"intensity", "sampled"}
        ``"intensity"`` treats ``Q`` as a continuous intensity, so
        ``w_k ~ N(0, Q dt)``.  ``"sampled"`` holds a ``N(0, Q)`` disturbance
        on the derivative over the step, so ``w_k ~ N(0, Q dt^2)``.

    Raises
    ------
    DivergenceError
        If the state norm exceeds ``1e12``.
    """
    steps = n_steps(dt, T)
    x = _as_state(x0, model.n_x, "x0").copy()
    rng = np.random.default_rng(seed)
    if process_noise == "intensity":
        w_scale = np.sqrt(dt)
    elif process_noise == "sampled":
        w_scale = dt
    else:
        raise ConfigError(f"unknown process_noise {process_noise!r}")
    W = rng.standard_normal((steps, model.n_x)) @ _noise_factor(noise.Q).T * w_scale
    V = rng.standard_normal((steps + 1, model.n_z)) @ _noise_factor(noise.R).T
    K = None if controller is None else np.asarray(controller, dtype=float)

    states = np.empty((steps + 1, model.n_x))
    inputs = np.zeros((steps + 1, model.n_u))
    meas = np.empty((steps + 1, model.n_z))
    for k in range(steps + 1):
        states[k] = x
        meas[k] = model.h(x) + V[k]
        if K is not None:
            inputs[k] = lqr_control(K, x)
        if k == steps:
            break
        x = x + model.f(x, inputs[k]) * dt + W[k]
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"truth simulation diverged at step {k + 1}", step=k + 1)
    times = dt * np.arange(steps + 1)
    for arr in (times, states, inputs, meas):
        arr.setflags(write=False)
    return Trajectory(times, states, inputs, meas, seed, float(dt))
