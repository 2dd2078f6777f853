"""Monte-Carlo orchestration and metrics.

Every run ``k`` derives its own seeds from ``(master_seed, k)`` through
:class:`numpy.random.SeedSequence`, so results do not depend on the order
or the process in which runs execute.  All filters of one run see the same
truth trajectory and measurement stream; SNN filters of one run also share
one decoding matrix.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classical import GainKind, GainRule, run_filter
from .config import CLASSICAL_FILTERS, SNN_FILTERS, ScenarioConfig, SilencingSettings
from .errors import DivergenceError
from .neuromorphic import SnnFilter, SnnFilterConfig, run_snn_filter
from .scn import SpikeRaster, random_silencing, sample_decoder
from .systems import NoiseSpec, simulate_truth

log = logging.getLogger(__name__)

_GAIN = {"ekf": GainKind.KALMAN, "emsif": GainKind.MSIF, "sif": GainKind.SIF}
SILENCED_SUFFIX = "_silenced"


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------


def combined_rmse(per_state):
    """Euclidean norm of per-state RMSEs, ``sqrt(sum_i delta_i^2)``."""
    v = np.asarray(per_state, dtype=float)
    if np.any(v < 0):
        raise ValueError("RMSE components must be nonnegative")
    m = float(v.max()) if v.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return m
    # scaled to avoid under/overflow when squaring
    return m * float(np.sqrt(np.sum((v / m) ** 2)))


def sigma_bounds_check(errors, P_series):
    """Fraction of (step, state) pairs with ``|error| <= 3 sqrt(P_ii)``.

    Parameters
    ----------
    errors : array_like, shape (steps, n_x)
    P_series : array_like, shape (steps, n_x, n_x)
    """
    e = np.abs(np.asarray(errors, dtype=float))
    P = np.asarray(P_series, dtype=float)
    if e.size == 0:
        return 1.0
    var = np.clip(np.diagonal(P, axis1=-2, axis2=-1), 0.0, None)
    return float(np.mean(e <= 3.0 * np.sqrt(var)))


def spike_efficiency(raster, N=None, steps=None):
    """Share of the ``N * steps`` spike slots that were used.

    ``raster`` is a :class:`~snnfilter.scn.SpikeRaster` or a spike count.
    For a raster a slot counts once even if the neuron fired several times
    in that step, which keeps the fraction inside ``[0, 1]``; with at most
    one spike per slot this equals ``total_spikes / (N steps)``.
    """
    if isinstance(raster, SpikeRaster):
        N = raster.N if N is None else N
        steps = raster.n_steps if steps is None else steps
        used = raster.active_slots()
    else:
        used = int(raster)
    if N is None or steps is None:
        raise ValueError("N and steps are required with a plain spike count")
    if N * steps == 0:
        return 0.0
    return used / (N * steps)


@dataclass(eq=False)
class FilterMetrics:
    """Aggregates for one filter over the non-divergent runs.

    ``rmse`` has shape ``(steps + 1, n_x)``; ``window_rmse`` is its time
    average over the scenario window.
    """

    name: str
    rmse: np.ndarray
    window_rmse: np.ndarray
    delta_x: float
    coverage: float
    spikes_total: int
    spike_fraction: float
    step_time_mean: float
    step_time_p95: float
    divergences: int
    runs_used: int


@dataclass(eq=False)
class MetricsRecord:
    scenario: str
    times: np.ndarray
    runs: int
    window: float
    coverage_window: float
    filters: dict = field(default_factory=dict)

    def __getitem__(self, name) -> FilterMetrics:
        return self.filters[name]

    @property
    def all_diverged(self):
        return bool(self.filters) and all(m.runs_used == 0 for m in self.filters.values())


# ----------------------------------------------------------------------------
# Single runs
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSeeds:
    truth: int
    decoder: int
    noise: int
    silencing: int


def run_seeds(master_seed, k):
    """Seeds of run ``k``; independent of every other run index."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(k),))
    words = ss.generate_state(4, dtype=np.uint64)
    return RunSeeds(*(int(w) for w in words))


@dataclass(eq=False)
class FilterRun:
    estimates: Optional[np.ndarray]
    covariances: Optional[np.ndarray]
    raster: Optional[SpikeRaster] = None
    step_times: Optional[np.ndarray] = None
    diverged: bool = False
    diverged_step: Optional[int] = None


@dataclass(eq=False)
class RunResult:
    index: int
    seeds: RunSeeds
    truth: object
    filters: dict


def _snn_config(cfg: ScenarioConfig, kind, N, seed):
    s = cfg.snn
    return SnnFilterConfig(
        kind=kind,
        N=N,
        lam=s.lam,
        delta=cfg.delta,
        sigma_D=s.sigma_D,
        eta_sigma=s.eta_sigma,
        spike_mode=s.spike_mode,
        max_iters=s.max_iters,
        seed=seed,
    )


def _filter_labels(cfg, silencing):
    labels = list(cfg.filters)
    if silencing is not None:
        labels += [f + SILENCED_SUFFIX for f in cfg.filters if f in SNN_FILTERS]
    return labels


def single_run(cfg: ScenarioConfig, k, silencing: Optional[SilencingSettings] = None):
    """Simulate run ``k`` of a scenario and run every configured filter.

    With ``silencing`` each SNN filter is run a second time, under the label
    ``<name>_silenced``, with a random subset of neurons silenced; both
    copies use the same decoder.
    """
    seeds = run_seeds(cfg.master_seed, k)
    model = cfg.model()
    truth_noise = NoiseSpec(cfg.Q_array, cfg.R_array)
    used = truth_noise.scaled(cfg.alpha_q, cfg.alpha_r)
    traj = simulate_truth(
        model, cfg.x0, truth_noise, cfg.dt, cfg.T, seeds.truth, cfg.controller, cfg.process_noise
    )
    decoder = sample_decoder(model.n_x, cfg.snn.N, cfg.snn.sigma_D, seeds.decoder)
    out = {}
    for label in _filter_labels(cfg, silencing):
        name = label[: -len(SILENCED_SUFFIX)] if label.endswith(SILENCED_SUFFIX) else label
        try:
            if name in CLASSICAL_FILTERS:
                rule = GainRule(_GAIN[name], cfg.delta)
                est, cov = run_filter(model, traj, rule, used, cfg.x_hat0, cfg.P0_array, cfg.clip_covariance)
                out[label] = FilterRun(est, cov)
            else:
                filt = SnnFilter(_snn_config(cfg, name, cfg.snn.N, seeds.decoder), model, used, decoder)
                event = None
                if label != name:
                    event = random_silencing(cfg.snn.N, silencing.fraction, silencing.onset, seeds.silencing)
                res = run_snn_filter(filt, traj, cfg.x_hat0, cfg.P0_array, event, seeds.noise)
                out[label] = FilterRun(res.estimates, res.covariances, res.raster, res.step_times)
        except DivergenceError as exc:
            log.warning("scenario %s run %d: %s diverged (%s)", cfg.name, k, label, exc)
            out[label] = FilterRun(None, None, diverged=True, diverged_step=exc.step)
    return RunResult(k, seeds, traj, out)


def _run_worker(args):
    cfg, k, silencing = args
    return single_run(cfg, k, silencing)


# ----------------------------------------------------------------------------
# Monte Carlo
# ----------------------------------------------------------------------------


def _window_mask(times, T, window):
    if window is None or window <= 0:
        return np.ones_like(times, dtype=bool)
    return times >= T - window - 1e-9


def aggregate(cfg: ScenarioConfig, runs, labels=None):
    """Reduce run results into a :class:`MetricsRecord`.

    Runs are processed in index order, so the result does not depend on the
    order in which they were computed.
    """
    runs = sorted(runs, key=lambda r: r.index)
    if not runs:
        raise ValueError("no runs to aggregate")
    times = np.asarray(runs[0].truth.times)
    labels = list(runs[0].filters) if labels is None else labels
    cov_window = cfg.coverage_window if cfg.coverage_window is not None else cfg.window
    w_mask = _window_mask(times, cfg.T, cfg.window)
    c_mask = _window_mask(times, cfg.T, cov_window)
    record = MetricsRecord(cfg.name, times, len(runs), cfg.window, cov_window)
    steps = len(times) - 1
    for label in labels:
        sq = np.zeros((len(times), runs[0].truth.states.shape[1]))
        used = 0
        coverages, fractions, spikes, step_times = [], [], 0, []
        for run in runs:
            fr = run.filters[label]
            if fr.diverged:
                continue
            err = run.truth.states - fr.estimates
            sq += err * err
            used += 1
            if fr.covariances is not None:
                coverages.append(sigma_bounds_check(err[c_mask], fr.covariances[c_mask]))
            if fr.raster is not None:
                spikes += fr.raster.total_spikes
                fractions.append(spike_efficiency(fr.raster, fr.raster.N, steps))
            if fr.step_times is not None:
                step_times.append(fr.step_times)
        if used:
            rmse = np.sqrt(sq / used)
            window_rmse = rmse[w_mask].mean(axis=0)
            delta_x = combined_rmse(window_rmse)
        else:
            rmse = np.full_like(sq, np.nan)
            window_rmse = np.full(sq.shape[1], np.nan)
            delta_x = float("nan")
        st = np.concatenate(step_times) if step_times else np.array([])
        record.filters[label] = FilterMetrics(
            name=label,
            rmse=rmse,
            window_rmse=window_rmse,
            delta_x=delta_x,
            coverage=float(np.mean(coverages)) if coverages else float("nan"),
            spikes_total=int(spikes),
            spike_fraction=float(np.mean(fractions)) if fractions else float("nan"),
            step_time_mean=float(st.mean()) if st.size else float("nan"),
            step_time_p95=float(np.percentile(st, 95)) if st.size else float("nan"),
            divergences=len(runs) - used,
            runs_used=used,
        )
    return record


def execute_runs(cfg: ScenarioConfig, indices, silencing=None, workers=None):
    """Compute :func:`single_run` for each index, in parallel when asked."""
    workers = cfg.workers if workers is None else workers
    indices = list(indices)
    if workers <= 1 or len(indices) <= 1:
        return [single_run(cfg, k, silencing) for k in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_worker, [(cfg, k, silencing) for k in indices]))


def monte_carlo(cfg: ScenarioConfig, silencing: Optional[SilencingSettings] = None, keep_runs=False, workers=None):
    """Run ``cfg.mc_runs`` paired runs and aggregate them.

    ``RMSE_i(t) = sqrt(mean_k (x_i(t) - x_hat_i(t))^2)`` over the runs in
    which the filter did not diverge.  Returns the :class:`MetricsRecord`,
    plus the list of :class:`RunResult` when ``keep_runs`` is true.
    """
    runs = execute_runs(cfg, range(cfg.mc_runs), silencing, workers)
    record = aggregate(cfg, runs, _filter_labels(cfg, silencing))
    return (record, runs) if keep_runs else record


def neuron_sweep(cfg: ScenarioConfig, N_list=None, workers=None):
    """Combined ``delta_x`` of each SNN filter for each neuron count.

    Returns
    -------
    dict
        ``{filter: [(N, delta_x), ...]}`` in the order of ``N_list``.
    """
    N_list = cfg.sweep if N_list is None else N_list
    if N_list is None:
        raise ValueError("no neuron counts given and the scenario has no sweep list")
    snn = tuple(f for f in cfg.filters if f in SNN_FILTERS)
    curve = {f: [] for f in snn}
    if not snn:
        return curve
    for N in N_list:
        rec = monte_carlo(cfg.with_overrides(N=int(N), filters=snn), workers=workers)
        for f in snn:
            curve[f].append((int(N), rec[f].delta_x))
    return curve


@dataclass(eq=False)
class ProfileEntry:
    filter: str
    N: int
    mean: float
    p95: float
    repeat_means: tuple


def runtime_profile(cfg: ScenarioConfig, N_list=None, filters=None, repeats=None, steps=None):
    """Per-step wall time of SNN filters for several neuron counts.

    Runs strictly serially.  One truth trajectory (run 0) is shared by all
    measurements and only :func:`~snnfilter.neuromorphic.snn_filter_step` is
    timed.  Each configuration gets one untimed warm-up run; within every
    repeat the configurations then run one after another, so slow drifts in
    machine load spread over all of them.

    ``mean`` is the smallest of the per-repeat means (the usual
    best-of-``repeats`` convention) and ``p95`` is taken over the steps of
    that repeat.

    Parameters
    ----------
    steps : int, optional
        Truncate the trajectory to this many steps.
    """
    N_list = list(cfg.profile_N if N_list is None else N_list)
    filters = list(SNN_FILTERS if filters is None else filters)
    repeats = cfg.profile_repeats if repeats is None else repeats
    if not N_list or not filters:
        return []
    seeds = run_seeds(cfg.master_seed, 0)
    model = cfg.model()
    noise = NoiseSpec(cfg.Q_array, cfg.R_array)
    used = noise.scaled(cfg.alpha_q, cfg.alpha_r)
    T = cfg.T if steps is None else min(cfg.T, steps * cfg.dt)
    traj = simulate_truth(model, cfg.x0, noise, cfg.dt, T, seeds.truth, cfg.controller, cfg.process_noise)
    built = {}
    for N in N_list:
        dec = sample_decoder(model.n_x, N, cfg.snn.sigma_D, seeds.decoder)
        for f in filters:
            filt = SnnFilter(_snn_config(cfg, f, N, seeds.decoder), model, used, dec)
            run_snn_filter(filt, traj, cfg.x_hat0, cfg.P0_array, None, seeds.noise)
            built[(f, N)] = filt
    samples = {key: [] for key in built}
    for _ in range(max(1, repeats)):
        for key, filt in built.items():
            res = run_snn_filter(filt, traj, cfg.x_hat0, cfg.P0_array, None, seeds.noise)
            samples[key].append(res.step_times)
    out = []
    for (f, N), reps in samples.items():
        means = [float(r.mean()) for r in reps]
        best = int(np.argmin(means))
        out.append(ProfileEntry(f, N, means[best], float(np.percentile(reps[best], 95)), tuple(means)))
    return out


def profile_table(entries):
    """``{filter: {N: mean}}`` view of :func:`runtime_profile` output."""
    table = {}
    for e in entries:
        table.setdefault(e.filter, {})[e.N] = e.mean
    return table

