"""Artifact writers.

Numbers are written with 17 significant digits (``%.17g``), which round-trips
every IEEE double, so CSV bodies are byte-identical across reruns with the
same seed.  Timestamps and other run metadata live only in
``manifest.json``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, config_to_dict, dump_config

FLOAT_FMT = "%.17g"


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return FLOAT_FMT % float(x)


class ArtifactWriter:
    """Writes CSVs under one directory and remembers what it wrote."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = []

    def write_csv(self, name, header, rows, preamble=()):
        path = self.out_dir / name
        with path.open("w", newline="") as fh:
            for line in preamble:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
        self.artifacts.append(name)
        return path

    def write_manifest(self, cfg: ScenarioConfig, command, extra=None):
        (self.out_dir / "config.cfg").write_text(dump_config(cfg))
        manifest = {
            "scenario": cfg.name,
            "command": command,
            "config_hash": cfg.config_hash(),
            "master_seed": cfg.master_seed,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "artifacts": sorted(set(self.artifacts + ["config.cfg"])),
            "config": config_to_dict(cfg),
        }
        if extra:
            manifest.update(extra)
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n")
        return path


def state_labels(n_x):
    return [f"x{i + 1}" for i in range(n_x)]


def write_rmse(writer: ArtifactWriter, record):
    """One ``rmse_<filter>.csv`` per filter: time and per-state RMSE."""
    for name, m in record.filters.items():
        header = ["t"] + [f"rmse_{s}" for s in state_labels(m.rmse.shape[1])]
        rows = ([t, *vals] for t, vals in zip(record.times, m.rmse))
        writer.write_csv(f"rmse_{name}.csv", header, rows)


SUMMARY_HEADER = [
    "filter",
    "runs_used",
    "divergences",
    "window_s",
    "delta_x",
    "coverage_3sigma",
    "spikes_total",
    "spike_fraction",
]


def summary_rows(record, filters=None):
    names = list(record.filters) if filters is None else filters
    n_x = next(iter(record.filters.values())).window_rmse.shape[0]
    rows = []
    for name in names:
        m = record.filters[name]
        rows.append(
            [
                name,
                m.runs_used,
                m.divergences,
                record.window,
                *m.window_rmse,
                m.delta_x,
                m.coverage,
                m.spikes_total,
                m.spike_fraction,
            ]
        )
    header = SUMMARY_HEADER[:4] + [f"rmse_{s}" for s in state_labels(n_x)] + SUMMARY_HEADER[4:]
    return header, rows


def write_summary(writer: ArtifactWriter, record, name="summary.csv", filters=None):
    """Window RMSEs, delta_x, coverage and sparsity, one row per filter.

    Wall-clock step times go to ``timing.csv`` instead, so that this file is
    reproducible byte for byte.
    """
    header, rows = summary_rows(record, filters)
    return writer.write_csv(name, header, rows)


def write_timing(writer: ArtifactWriter, record, filters=None):
    names = list(record.filters) if filters is None else filters
    rows = [
        [n, record.filters[n].step_time_mean, record.filters[n].step_time_p95]
        for n in names
        if np.isfinite(record.filters[n].step_time_mean)
    ]
    return writer.write_csv("timing.csv", ["filter", "step_time_mean_s", "step_time_p95_s"], rows)


def write_estimates(writer: ArtifactWriter, run, filters=None):
    """Estimate, truth and error of one run per filter, plus the 3-sigma
    half-width when the filter carries a covariance."""
    times = run.truth.times
    X = run.truth.states
    labels = state_labels(X.shape[1])
    for name, fr in run.filters.items():
        if filters is not None and name not in filters:
            continue
        if fr.diverged:
            continue
        header = (
            ["t"]
            + [f"est_{s}" for s in labels]
            + [f"true_{s}" for s in labels]
            + [f"err_{s}" for s in labels]
        )
        cols = [times[:, None], fr.estimates, X, X - fr.estimates]
        if fr.covariances is not None:
            header += [f"sigma3_{s}" for s in labels]
            var = np.clip(np.diagonal(fr.covariances, axis1=1, axis2=2), 0.0, None)
            cols.append(3.0 * np.sqrt(var))
        writer.write_csv(f"estimates_{name}.csv", header, np.hstack(cols))


def write_rasters(writer: ArtifactWriter, run):
    """``raster_<filter>.csv`` with one ``(step, t, neuron)`` row per spike."""
    for name, fr in run.filters.items():
        if fr.raster is None:
            continue
        ras = fr.raster
        k, i = ras.as_arrays()
        pre = [f"N={ras.N} dt={fmt(ras.dt)} steps={ras.n_steps} total_spikes={ras.total_spikes}"]
        rows = ([int(kk), (kk + 1) * ras.dt, int(ii)] for kk, ii in zip(k, i))
        writer.write_csv(f"raster_{name}.csv", ["step", "t", "neuron"], rows, preamble=pre)


def write_sweep(writer: ArtifactWriter, curve):
    rows = [[f, N, d] for f, pts in curve.items() for N, d in pts]
    return writer.write_csv("sweep.csv", ["filter", "N", "delta_x"], rows)


def write_profile(writer: ArtifactWriter, entries):
    rows = [[e.filter, e.N, e.mean, e.p95] for e in entries]
    return writer.write_csv("profile.csv", ["filter", "N", "step_time_mean_s", "step_time_p95_s"], rows)
