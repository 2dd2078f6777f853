"""
Monte-Carlo batches, sweeps and artifacts
=========================================

Shows the harness API behind the ``snnfilter`` command line: a small batch
with neuron silencing, a two-point neuron sweep and the CSV writers.  The
same results come from::

    snnfilter mc --config van_der_pol --runs 4 --out out/demo
    snnfilter sweep --config van_der_pol --runs 2

When matplotlib is installed the per-state RMSE curves are plotted.
"""

from pathlib import Path

from snnfilter import load_bundled, monte_carlo, neuron_sweep
from snnfilter import io as artifacts

cfg = load_bundled("van_der_pol").with_overrides(mc_runs=4, output_dir="out/demo")
record, runs = monte_carlo(cfg, silencing=cfg.silencing, keep_runs=True)
for name, m in record.filters.items():
    print(f"{name:20s} delta_x={m.delta_x:.4f}  runs used={m.runs_used}")

writer = artifacts.ArtifactWriter(cfg.output_dir)
artifacts.write_rmse(writer, record)
artifacts.write_summary(writer, record)
artifacts.write_rasters(writer, runs[0])
writer.write_manifest(cfg, "demo")
print("wrote", sorted(p.name for p in Path(cfg.output_dir).iterdir()))

curve = neuron_sweep(cfg.with_overrides(mc_runs=2), [50, 200])
for name, points in curve.items():
    print(name, ", ".join(f"N={N}: {d:.4f}" for N, d in points))

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, axes = plt.subplots(2, 1, sharex=True)
    for name in cfg.filters:
        for i, ax in enumerate(axes):
            ax.semilogy(record.times, record[name].rmse[:, i], label=name)
    axes[0].legend()
    axes[1].set_xlabel("t [s]")
    fig.savefig(Path(cfg.output_dir) / "rmse.png", dpi=120)
    print("saved", Path(cfg.output_dir) / "rmse.png")
