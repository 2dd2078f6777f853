"""Batch front end.

::

    snnfilter validate --config van_der_pol
    snnfilter run      --config van_der_pol --out out/vdp_run
    snnfilter mc       --config rendezvous --runs 10
    snnfilter sweep    --config van_der_pol --runs 10
    snnfilter profile  --config van_der_pol

``--config`` takes a path or the name of a bundled config.  Exit status is 0
on success, 2 for configuration errors, 3 when every run of every filter
diverged and 4 for I/O failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from . import io as artifacts
from .config import SNN_FILTERS, bundled_config_path, parse_config
from .errors import ConfigError, DivergenceError, SingularMatrixError
from .systems import NoiseSpec, numerical_jacobian

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

JACOBIAN_RTOL = 1e-5


def _resolve_config_path(arg):
    p = Path(arg)
    if p.exists() or p.suffix or "/" in arg:
        return p
    return bundled_config_path(arg)


def load_command_config(args):
    cfg = parse_config(_resolve_config_path(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.runs is not None:
        if args.runs < 1:
            raise ConfigError("--runs must be at least 1")
        overrides["mc_runs"] = args.runs
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    return cfg.with_overrides(**overrides) if overrides else cfg


def _say(args, *lines):
    if not args.quiet:
        for line in lines:
            print(line, flush=True)


def format_table(header, rows):
    cells = [[str(h) for h in header]] + [
        [c if isinstance(c, str) else f"{c:.6g}" for c in row] for row in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# Verbs
# ----------------------------------------------------------------------------


def jacobian_self_test(cfg, points=5, seed=0):
    """Compare analytic Jacobians with central differences around ``x0``.

    Returns the worst relative error of ``A`` and ``C``.
    """
    model = cfg.model()
    rng = np.random.default_rng(seed)
    x0 = np.asarray(cfg.x0, dtype=float)
    u = np.zeros(model.n_u)
    worst = 0.0
    for j in range(points):
        x = x0 + (rng.standard_normal(model.n_x) * (1.0 + np.abs(x0)) if j else 0.0)
        pairs = [
            (model.A(x, u), numerical_jacobian(lambda y: model.f(y, u), x)),
            (model.C(x), numerical_jacobian(model.h, x)),
        ]
        for exact, approx in pairs:
            scale = max(np.abs(exact).max(), 1e-12)
            worst = max(worst, float(np.abs(exact - approx).max() / scale))
    return worst


def cmd_validate(cfg, args):
    NoiseSpec(cfg.Q_array, cfg.R_array).scaled(cfg.alpha_q, cfg.alpha_r)
    np.linalg.cholesky(cfg.R_array * cfg.alpha_r)
    err = jacobian_self_test(cfg)
    if not err < JACOBIAN_RTOL:
        raise ConfigError(f"Jacobian self-test failed: relative error {err:.3g} >= {JACOBIAN_RTOL}")
    _say(args, f"{cfg.name}: config ok, Jacobian self-test max relative error {err:.2e}")
    return EXIT_OK


def _print_summary(args, record, filters=None):
    header, rows = artifacts.summary_rows(record, filters)
    keep = [i for i, h in enumerate(header) if h not in ("window_s", "spikes_total")]
    _say(args, format_table([header[i] for i in keep], [[r[i] for i in keep] for r in rows]))


def cmd_run(cfg, args):
    cfg = cfg.with_overrides(mc_runs=1)
    record, runs = harness.monte_carlo(cfg, keep_runs=True, workers=1)
    w = artifacts.ArtifactWriter(cfg.output_dir)
    artifacts.write_estimates(w, runs[0])
    artifacts.write_rasters(w, runs[0])
    artifacts.write_rmse(w, record)
    artifacts.write_summary(w, record)
    artifacts.write_timing(w, record)
    w.write_manifest(cfg, "run", {"run_index": 0})
    _say(args, f"{cfg.name}: single run, window = last {cfg.window:g} s")
    _print_summary(args, record)
    return EXIT_DIVERGED if record.all_diverged else EXIT_OK


def cmd_mc(cfg, args):
    record, runs = harness.monte_carlo(cfg, silencing=cfg.silencing, keep_runs=True)
    base = list(cfg.filters)
    w = artifacts.ArtifactWriter(cfg.output_dir)
    artifacts.write_rmse(w, record)
    artifacts.write_summary(w, record, filters=base)
    artifacts.write_timing(w, record, filters=base)
    artifacts.write_rasters(w, runs[0])
    silenced = [f for f in record.filters if f.endswith(harness.SILENCED_SUFFIX)]
    if silenced:
        pairs = [n for f in silenced for n in (f[: -len(harness.SILENCED_SUFFIX)], f)]
        artifacts.write_summary(w, record, name="silencing.csv", filters=pairs)
    w.write_manifest(cfg, "mc")
    _say(args, f"{cfg.name}: {cfg.mc_runs} Monte-Carlo runs, window = last {cfg.window:g} s")
    _print_summary(args, record, base)
    if silenced:
        _say(args, f"silencing {cfg.silencing.fraction:g} of neurons at t = {cfg.silencing.onset:g} s")
        _print_summary(args, record, pairs)
    return EXIT_DIVERGED if record.all_diverged else EXIT_OK


def cmd_sweep(cfg, args):
    if cfg.sweep is None:
        raise ConfigError(f"{cfg.name}: config has no 'sweep' list")
    if not any(f in SNN_FILTERS for f in cfg.filters):
        raise ConfigError(f"{cfg.name}: sweep needs at least one SNN filter")
    curve = harness.neuron_sweep(cfg)
    w = artifacts.ArtifactWriter(cfg.output_dir)
    artifacts.write_sweep(w, curve)
    w.write_manifest(cfg, "sweep")
    rows = [[f, N, d] for f, pts in curve.items() for N, d in pts]
    _say(args, f"{cfg.name}: neuron sweep, {cfg.mc_runs} runs per point")
    _say(args, format_table(["filter", "N", "delta_x"], rows))
    if all(not np.isfinite(d) for pts in curve.values() for _, d in pts):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_profile(cfg, args):
    entries = harness.runtime_profile(cfg)
    w = artifacts.ArtifactWriter(cfg.output_dir)
    artifacts.write_profile(w, entries)
    w.write_manifest(cfg, "profile", {"timing_scope": "filter step only, truth simulation excluded"})
    rows = [[e.filter, e.N, e.mean * 1e3, e.p95 * 1e3] for e in entries]
    _say(args, f"{cfg.name}: per-step wall time (filter step only)")
    _say(args, format_table(["filter", "N", "mean_ms", "p95_ms"], rows))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "mc": cmd_mc,
    "sweep": cmd_sweep,
    "profile": cmd_profile,
    "validate": cmd_validate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="snnfilter", description="Spiking and classical state estimators.")
    p.add_argument("verb", choices=sorted(COMMANDS), help="operation to perform")
    p.add_argument("--config", required=True, help="scenario file, or the name of a bundled config")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--runs", type=int, help="Monte-Carlo run count (overrides the config)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    cfg = None
    try:
        cfg = load_command_config(args)
        return COMMANDS[args.verb](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularMatrixError, np.linalg.LinAlgError) as exc:
        print(f"error: {_where(cfg, args)}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {_where(cfg, args)}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {_where(cfg, args)}: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


def _where(cfg, args):
    return cfg.name if cfg is not None else args.config

if __name__ == "__main__":
    sys.exit(main())
