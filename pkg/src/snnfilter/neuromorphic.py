"""Spiking filters built on the spike-coding network.

The network membrane equation becomes the estimator::

    v' = -lam v + F u + Omega_s r + Omega_f s + Omega_k r + F_k z + eta

with the weights derived from the model linearization at the decoded estimate
``x_hat = D r`` and from a filter gain ``K``:

=============  ==================================
``F``          ``D^T B``
``Omega_s``    ``D^T (A + lam I) D``
``Omega_f``    ``-D^T D``
``Omega_k``    ``-D^T K C D``
``F_k``        ``D^T K``
=============  ==================================

``K`` is the Kalman gain (SNN-EKF), the MSIF gain from the innovation
covariance (SNN-EMSIF), or the SIF gain from the raw innovation
(SNN-EMSIF*, which needs no covariance at all).  The measurement map is taken
to be linear in the state, so ``K C x_hat`` equals ``K h(x_hat)``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .classical import (
    FilterState,
    _inverse,
    ekf_gain,
    innovation_covariance,
    msif_gain,
    pseudo_inverse,
    riccati_step,
    sif_gain,
)
from .errors import ConfigError, DivergenceError
from .scn import (
    DecodingMatrix,
    NetworkState,
    SilencingEvent,
    SpikeRaster,
    init_network,
    lif_step,
    sample_decoder,
    thresholds,
)
from .systems import DIVERGENCE_LIMIT, NoiseSpec, SystemModel


class SnnKind(str, enum.Enum):
    SNN_EKF = "snn_ekf"
    SNN_EMSIF = "snn_emsif"
    SNN_EMSIF_STAR = "snn_emsif_star"


@dataclass(frozen=True)
class SnnFilterConfig:
    kind: SnnKind = SnnKind.SNN_EMSIF
    N: int = 100
    lam: float = 0.5
    delta: float = 0.05
    sigma_D: float = 0.5
    eta_sigma: float = 0.0
    spike_mode: str = "sequential"
    max_iters: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SnnKind(self.kind))
        if self.lam < 0:
            raise ConfigError(f"leak rate lambda must be nonnegative, got {self.lam}")
        if self.kind is not SnnKind.SNN_EKF and not self.delta > 0:
            raise ConfigError(f"delta must be positive for {self.kind.value}, got {self.delta}")


@dataclass(frozen=True, eq=False)
class WeightSet:
    F: np.ndarray
    Omega_s: np.ndarray
    Omega_f: np.ndarray
    Omega_k: np.ndarray
    F_k: np.ndarray


def static_weights(D, A, B, lam):
    """Input encoder ``F``, slow recurrence ``Omega_s`` and fast recurrence
    ``Omega_f``."""
    F = D.T @ B
    Omega_s = D.T @ ((A + lam * np.eye(A.shape[0])) @ D)
    Omega_f = -(D.T @ D)
    return F, Omega_s, Omega_f


def _update_weights(D, K, C):
    F_k = D.T @ K
    Omega_k = -(F_k @ (C @ D))
    return Omega_k, F_k


def kalman_update_weights(D, P, C, R):
    """Measurement-update weights for SNN-EKF."""
    return _update_weights(D, ekf_gain(P, C, R), C)


def emsif_update_weights(D, C, Pzz, delta, C_pinv=None):
    """Measurement-update weights for SNN-EMSIF."""
    return _update_weights(D, msif_gain(C, Pzz, delta, C_pinv), C)


def emsif_star_update_weights(D, C, z, z_hat, delta, C_pinv=None):
    """Measurement-update weights for SNN-EMSIF* (innovation-driven, no covariance)."""
    innovation = np.asarray(z, dtype=float) - np.asarray(z_hat, dtype=float)
    return _update_weights(D, sif_gain(C, innovation, delta, C_pinv), C)


class SnnFilter:
    """A spiking estimator bound to one model, one decoder and one noise model.

    Parameters
    ----------
    config : SnnFilterConfig
    model : SystemModel
    noise_used : NoiseSpec
        Covariances assumed by the filter (possibly mismatched).
    decoder : DecodingMatrix, optional
        Drawn from ``config.sigma_D`` and ``config.seed`` when omitted.
    """

    def __init__(self, config: SnnFilterConfig, model: SystemModel, noise_used: NoiseSpec, decoder=None):
        if config.N < model.n_x:
            raise ConfigError(f"N={config.N} is smaller than the state dimension {model.n_x}")
        self.config = config
        self.model = model
        self.noise_used = noise_used
        if decoder is None:
            decoder = sample_decoder(model.n_x, config.N, config.sigma_D, config.seed)
        if not isinstance(decoder, DecodingMatrix):
            decoder = DecodingMatrix(decoder)
        if decoder.D.shape != (model.n_x, config.N):
            raise ConfigError(f"decoder shape {decoder.D.shape} != ({model.n_x}, {config.N})")
        self.decoder = decoder
        self.D = decoder.D
        self.T = thresholds(decoder)
        self.Omega_f = -(self.D.T @ self.D)
        self._static = None
        if model.linear:
            F, Omega_s, _ = static_weights(self.D, model.A(), model.B(), config.lam)
            self._static = (F, Omega_s)
        self._shifted = np.eye(model.n_x) * config.lam
        self.R_inv = _inverse(noise_used.R)
        self._slow = np.empty((config.N, config.N))

    @property
    def uses_covariance(self):
        return self.config.kind is not SnnKind.SNN_EMSIF_STAR

    def initial_state(self, x_hat0):
        return init_network(self.D, x_hat0)

    def gain(self, x_hat, P=None, z=None):
        """Filter gain ``K`` at the decoded estimate, shape ``(n_x, n_z)``."""
        model, cfg = self.model, self.config
        C = model.C(x_hat)
        if cfg.kind is SnnKind.SNN_EKF:
            return ekf_gain(P, C, self.noise_used.R, self.R_inv)
        if cfg.kind is SnnKind.SNN_EMSIF:
            Pzz = innovation_covariance(P, C, self.noise_used.R)
            return msif_gain(C, Pzz, cfg.delta, pseudo_inverse(C))
        innovation = np.asarray(z, dtype=float) - model.h(x_hat)
        return sif_gain(C, innovation, cfg.delta, pseudo_inverse(C))

    def weights(self, x_hat, u, P=None, z=None):
        """Full weight set at the current operating point.

        ``P`` is the covariance already propagated for this step (ignored by
        SNN-EMSIF*); ``z`` is only needed by SNN-EMSIF*.
        """
        model, cfg = self.model, self.config
        if self._static is not None:
            F, Omega_s = self._static
        else:
            F, Omega_s, _ = static_weights(self.D, model.A(x_hat, u), model.B(x_hat, u), cfg.lam)
        Omega_k, F_k = _update_weights(self.D, self.gain(x_hat, P, z), model.C(x_hat))
        return WeightSet(F, Omega_s, self.Omega_f, Omega_k, F_k)

    def network_inputs(self, x_hat, u, P=None, z=None, A=None):
        """Feed-forward drive ``F u + F_k z`` and the summed slow recurrence
        ``Omega_s + Omega_k``.

        Uses ``Omega_s + Omega_k = D^T (A + lam I - K C) D``, so only one
        ``N x N`` matrix is formed per step, written into a buffer owned by
        the filter.  The returned matrix is overwritten by the next call.
        """
        model = self.model
        D = self.D
        K = self.gain(x_hat, P, z)
        if A is None:
            A = model.A(x_hat, u)
        B = model.B(x_hat, u)
        M = (A + self._shifted - K @ model.C(x_hat)) @ D
        np.matmul(D.T, M, out=self._slow)
        drive = D.T @ (B @ u + K @ np.asarray(z, dtype=float))
        return drive, self._slow


def snn_filter_step(net: NetworkState, filt: SnnFilter, classical: Optional[FilterState], u, z, dt, rng=None, step=None):
    """One closed-loop step of a spiking filter.

    Decodes the estimate, linearizes there, propagates the companion
    covariance (except for SNN-EMSIF*), rebuilds the weights and advances the
    network.

    Returns
    -------
    net : NetworkState
    classical : FilterState or None
        Companion covariance carrier (``None`` for SNN-EMSIF*).
    x_hat : ndarray
        Decoded estimate after the step.
    saturated : bool
    """
    model, cfg = filt.model, filt.config
    x_hat = filt.D @ net.r
    u = np.asarray(u, dtype=float)
    P = None
    A = model.A(x_hat, u)
    if filt.uses_covariance:
        P = riccati_step(
            classical.P, A, filt.noise_used.Q, model.C(x_hat), filt.noise_used.R, dt, R_inv=filt.R_inv
        )
        classical = FilterState(x_hat, P, classical.t + dt)
    drive, slow = filt.network_inputs(x_hat, u, P, z, A)
    net, saturated = lif_step(
        net,
        drive,
        slow,
        filt.Omega_f,
        filt.T,
        cfg.lam,
        dt,
        cfg.eta_sigma,
        rng,
        cfg.spike_mode,
        cfg.max_iters,
        step,
    )
    x_next = filt.D @ net.r
    if not np.abs(x_next).max() <= DIVERGENCE_LIMIT:  # also catches NaN
        raise DivergenceError(f"decoded estimate diverged at step {step}", step=step)
    return net, classical, x_next, saturated


@dataclass(eq=False)
class SnnRun:
    """Everything recorded by :func:`run_snn_filter`."""

    estimates: np.ndarray
    covariances: Optional[np.ndarray]
    raster: SpikeRaster
    step_times: np.ndarray
    saturated_steps: int


def run_snn_filter(
    filt: SnnFilter,
    trajectory,
    x_hat0,
    P0=None,
    silencing: Optional[SilencingEvent] = None,
    noise_seed=None,
):
    """Run a spiking filter over a trajectory.

    Per-step wall-clock times cover :func:`snn_filter_step` only.
    """
    model = filt.model
    steps = trajectory.steps
    dt = trajectory.dt
    est = np.empty((steps + 1, model.n_x))
    cov = np.empty((steps + 1, model.n_x, model.n_x)) if filt.uses_covariance else None
    raster = SpikeRaster(filt.config.N, steps, dt)
    step_times = np.empty(steps)
    rng = np.random.default_rng(noise_seed)
    net = filt.initial_state(x_hat0)
    classical = None
    if filt.uses_covariance:
        if P0 is None:
            raise ConfigError(f"{filt.config.kind.value} needs an initial covariance P0")
        classical = FilterState(filt.D @ net.r, np.asarray(P0, dtype=float), 0.0)
        cov[0] = classical.P
    est[0] = filt.D @ net.r
    pending = silencing
    saturated = 0
    perf = time.perf_counter
    for k in range(steps):
        if pending is not None and trajectory.times[k] >= pending.time - 1e-9 * dt:
            net = pending.apply(net)
            pending = None
        t0 = perf()
        net, classical, x_next, sat = snn_filter_step(
            net, filt, classical, trajectory.inputs[k], trajectory.measurements[k], dt, rng, k + 1
        )
        step_times[k] = perf() - t0
        saturated += sat
        est[k + 1] = x_next
        if cov is not None:
            cov[k + 1] = classical.P
        raster.record(k, net.s)
    return SnnRun(est, cov, raster, step_times, saturated)
