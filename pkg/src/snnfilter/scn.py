"""Spike-coding network substrate.

A population of ``N`` leaky integrate-and-fire neurons whose filtered spike
trains ``r`` are read out linearly, ``x_hat = D r``.  Neuron ``i`` fires when
its membrane crosses ``T_i = |D_i|^2 / 2``; the fast recurrence
``Omega_f = -D^T D`` then subtracts ``D_i^T D_j`` from every membrane, which
is also the only reset mechanism.

Time stepping (one call of :func:`lif_step`)::

    v <- v + dt (-lam v + drive + Omega_s r) + eta
    s, v <- spike_resolution(v)          # fast connections act within the step
    r <- r - dt lam r + s                # each spike adds unit mass
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigError, DivergenceError

EPSILON_COL = 1e-8
SPIKE_MODES = ("sequential", "simultaneous")


@dataclass(frozen=True, eq=False)
class DecodingMatrix:
    """Readout kernels, one column per neuron, shape ``(n_x, N)``."""

    D: np.ndarray
    column_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        if D.ndim != 2:
            raise ValueError(f"decoder must be 2-D, got shape {D.shape}")
        D.setflags(write=False)
        norms = np.einsum("ij,ij->j", D, D)
        norms.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "column_norms", norms)

    @property
    def n_x(self):
        return self.D.shape[0]

    @property
    def N(self):
        return self.D.shape[1]


def sample_decoder(n_x, N, sigma_D, seed=None, epsilon_col=EPSILON_COL):
    """Draw ``D`` with i.i.d. ``N(0, sigma_D^2)`` entries.

    Columns whose squared norm falls below ``epsilon_col`` are redrawn, since
    they would have a near-zero threshold.
    """
    if N < n_x:
        raise ConfigError(f"need at least n_x={n_x} neurons, got N={N}")
    if not sigma_D > 0:
        raise ConfigError(f"sigma_D must be positive, got {sigma_D}")
    rng = np.random.default_rng(seed)
    D = rng.normal(0.0, sigma_D, size=(n_x, N))
    bad = np.einsum("ij,ij->j", D, D) < epsilon_col
    while bad.any():
        D[:, bad] = rng.normal(0.0, sigma_D, size=(n_x, int(bad.sum())))
        bad = np.einsum("ij,ij->j", D, D) < epsilon_col
    return DecodingMatrix(D)


def thresholds(D):
    """Firing thresholds ``T_i = D_i^T D_i / 2``."""
    D = D.D if isinstance(D, DecodingMatrix) else np.asarray(D, dtype=float)
    return 0.5 * np.einsum("ij,ij->j", D, D)


def decode(D, r):
    """Linear readout ``D r``."""
    D = D.D if isinstance(D, DecodingMatrix) else D
    return D @ r


@dataclass(eq=False)
class NetworkState:
    """Membrane potentials ``v``, traces ``r``, last spike counts ``s`` and the
    live-neuron mask."""

    v: np.ndarray
    r: np.ndarray
    s: np.ndarray
    alive: np.ndarray
    t: float = 0.0

    @property
    def N(self):
        return self.v.shape[0]


def init_network(D, x_hat0=None, alive=None):
    """Network at rest whose readout equals ``x_hat0``.

    ``v = 0`` and ``r >= 0`` solves ``D r = x_hat0`` by non-negative least
    squares, which is exact whenever ``x_hat0`` lies in the cone of the
    decoder columns (almost surely for random ``D`` with ``N >> n_x``).
    """
    D = D.D if isinstance(D, DecodingMatrix) else np.asarray(D, dtype=float)
    N = D.shape[1]
    r = np.zeros(N)
    if x_hat0 is not None and np.any(np.asarray(x_hat0) != 0):
        r, _ = nnls(D, np.asarray(x_hat0, dtype=float))
    if alive is None:
        alive = np.ones(N, dtype=bool)
    r = np.where(alive, r, 0.0)
    return NetworkState(np.zeros(N), r, np.zeros(N, dtype=np.int64), np.asarray(alive, bool).copy())


def spike_resolution(v, T, Omega_f, alive=None, mode="sequential", max_iters=None):
    """Emit the spikes of one time step and apply fast recurrence.

    ``sequential`` repeatedly lets the live neuron with the largest
    ``v_i - T_i > 0`` fire and updates ``v += Omega_f[:, i]``, at most
    ``max_iters`` times (default ``N``).  ``simultaneous`` fires every
    supra-threshold neuron at once and applies ``Omega_f s``.

    Returns
    -------
    s : ndarray of int
        Spike counts of this step.
    v : ndarray
        Membrane potentials after the fast recurrence.
    saturated : bool
        True when neurons were still above threshold when resolution stopped.
    """
    v = np.array(v, dtype=float)
    N = v.shape[0]
    s = np.zeros(N, dtype=np.int64)
    if alive is None:
        alive = np.ones(N, dtype=bool)
    if mode == "sequential":
        max_iters = N if max_iters is None else max_iters
        margin = np.where(alive, v - T, -np.inf)
        if not margin.max() > 0:
            return s, v, False
        for _ in range(max_iters):
            i = int(np.argmax(margin))
            if not margin[i] > 0:
                return s, v, False
            s[i] += 1
            col = Omega_f[:, i]
            v += col
            margin += col
        return s, v, bool(np.any(margin > 0))
    if mode == "simultaneous":
        fired = (v > T) & alive
        s[fired] = 1
        if fired.any():
            v += Omega_f[:, fired].sum(axis=1)
        return s, v, bool(np.any((v > T) & alive))
    raise ConfigError(f"unknown spike mode {mode!r}; expected one of {SPIKE_MODES}")


def lif_step(
    net: NetworkState,
    drive,
    Omega_s,
    Omega_f,
    T,
    lam,
    dt,
    eta_sigma=0.0,
    rng=None,
    mode="sequential",
    max_iters=None,
    step=None,
):
    """Advance the network by one Euler step.

    ``drive`` must already contain every input term (``F u + F_k z``); all
    trace-driven recurrence is passed in ``Omega_s``.

    Returns
    -------
    NetworkState, bool
        The new state and the spike-resolution saturation flag.
    """
    alive = net.alive
    v = net.v + dt * (-lam * net.v + drive + Omega_s @ net.r)
    if eta_sigma > 0:
        v = v + eta_sigma * np.sqrt(dt) * rng.standard_normal(v.shape[0])
    v = np.where(alive, v, 0.0)
    if not np.isfinite(v).all():
        where = f" at step {step}" if step is not None else ""
        raise DivergenceError(f"membrane potential diverged{where}", step=step)
    s, v, saturated = spike_resolution(v, T, Omega_f, alive, mode, max_iters)
    r = net.r - dt * lam * net.r + s
    return NetworkState(v, r, s, alive, net.t + dt), saturated


@dataclass(frozen=True, eq=False)
class SilencingEvent:
    """Neurons ``indices`` stop firing from ``time`` onward.

    Their membranes are held at zero and they receive no further spikes, so
    their traces only leak: a fully silenced network decodes an estimate
    that decays to zero at rate ``lam``.
    """

    indices: np.ndarray
    time: float

    def apply(self, net: NetworkState):
        alive = net.alive.copy()
        alive[self.indices] = False
        v = np.where(alive, net.v, 0.0)
        s = np.where(alive, net.s, 0)
        return replace(net, v=v, s=s, alive=alive)


def silence_neurons(net_or_N, indices, at_time):
    """Schedule permanent silencing of ``indices`` at ``at_time``.

    ``net_or_N`` is a :class:`NetworkState` or a neuron count, used only to
    validate the indices.
    """
    N = net_or_N.N if isinstance(net_or_N, NetworkState) else int(net_or_N)
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size and (idx.min() < 0 or idx.max() >= N):
        raise ConfigError(f"silencing indices out of range [0, {N}): {idx}")
    return SilencingEvent(idx, float(at_time))


def random_silencing(N, fraction, at_time, seed=None):
    """Silence ``round(fraction * N)`` neurons chosen uniformly at random."""
    if not 0 <= fraction <= 1:
        raise ConfigError(f"silencing fraction must lie in [0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    k = int(round(fraction * N))
    return silence_neurons(N, rng.choice(N, size=k, replace=False), at_time)


@dataclass(eq=False)
class SpikeRaster:
    """Sparse record of emitted spikes.

    ``steps[j]`` and ``neurons[j]`` locate spike ``j``.  A neuron that fires
    several times within one step appears in several rows.
    """

    N: int
    n_steps: int
    dt: float
    steps: list = field(default_factory=list)
    neurons: list = field(default_factory=list)

    def record(self, k, s):
        if not s.any():
            return
        idx = np.flatnonzero(s)
        if idx.size:
            counts = s[idx]
            rep = np.repeat(idx, counts)
            self.steps.extend([k] * rep.size)
            self.neurons.extend(rep.tolist())

    @property
    def total_spikes(self):
        return len(self.steps)

    def as_arrays(self):
        return np.asarray(self.steps, dtype=np.int64), np.asarray(self.neurons, dtype=np.int64)

    def active_slots(self):
        """Number of distinct (step, neuron) pairs that carry a spike."""
        if not self.steps:
            return 0
        k, i = self.as_arrays()
        return int(np.unique(k * self.N + i).size)
