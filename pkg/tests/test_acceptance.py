"""Monte-Carlo acceptance checks at desk scale.

Each test evaluates one criterion, records a PASS/FAIL line (printed in the
terminal summary) and then asserts it.  Batches are shared through
module-scoped fixtures.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from snnfilter.config import load_bundled
from snnfilter.harness import monte_carlo, neuron_sweep, profile_table, runtime_profile, spike_efficiency

pytestmark = pytest.mark.slow

# Largest accepted ratio of silenced to intact last-window RMSE.  Frozen
# after a single measurement (about 1.01 at 5 runs) with generous headroom.
SILENCING_FACTOR = 3.0

TESTS = Path(__file__).parent


def ratios(record, num, den):
    return record[num].window_rmse / record[den].window_rmse


def fmt(v):
    return "[" + ", ".join(f"{x:.3g}" for x in np.atleast_1d(v)) + "]"


@pytest.fixture(scope="module")
def vdp_nominal():
    cfg = load_bundled("van_der_pol")
    return monte_carlo(cfg, silencing=cfg.silencing, keep_runs=True)


@pytest.fixture(scope="module")
def vdp_q():
    return monte_carlo(load_bundled("van_der_pol_q_mismatch"))


@pytest.fixture(scope="module")
def vdp_r():
    return monte_carlo(load_bundled("van_der_pol_r_mismatch"))


@pytest.fixture(scope="module")
def rendezvous():
    return monte_carlo(load_bundled("rendezvous"))


def test_criterion_1_baseline(vdp_nominal, report):
    rec, _ = vdp_nominal
    robust = ratios(rec, "emsif", "ekf")
    snn_ekf = ratios(rec, "snn_ekf", "ekf")
    snn_emsif = ratios(rec, "snn_emsif", "emsif")
    ok = (
        np.all(robust <= 0.2)
        and np.all((snn_ekf >= 0.25) & (snn_ekf <= 4))
        and np.all((snn_emsif >= 0.25) & (snn_emsif <= 4))
    )
    detail = f"EMSIF/EKF={fmt(robust)} (<=0.2), SNN-EKF/EKF={fmt(snn_ekf)}, SNN-EMSIF/EMSIF={fmt(snn_emsif)} (within 4x)"
    assert report(1, ok, detail), detail


@pytest.mark.parametrize("number, fixture, threshold", [(2, "vdp_q", 50.0), (3, "vdp_r", 100.0)])
def test_criteria_2_3_mismatch(number, fixture, threshold, request, report):
    rec = request.getfixturevalue(fixture)
    classical = ratios(rec, "ekf", "emsif")
    spiking = ratios(rec, "snn_ekf", "snn_emsif")
    ok = np.all(classical >= threshold) and np.all(spiking >= threshold)
    detail = f"EKF/EMSIF={fmt(classical)}, SNN-EKF/SNN-EMSIF={fmt(spiking)} (>= {threshold:g})"
    assert report(number, ok, detail), detail


def test_criterion_4_rendezvous(rendezvous, report):
    rec = rendezvous
    pos = ratios(rec, "snn_emsif", "snn_ekf")[:3]
    cov = {f: rec[f].coverage for f in ("snn_ekf", "snn_emsif")}
    ok = np.all(pos <= 0.2) and all(c > 0.9 for c in cov.values())
    detail = (
        f"SNN-EMSIF/SNN-EKF position={fmt(pos)} (<=0.2), coverage SNN-EKF={cov['snn_ekf']:.3f} "
        f"SNN-EMSIF={cov['snn_emsif']:.3f} (>0.9)"
    )
    assert report(4, ok, detail), detail


def test_criterion_5_sparsity(vdp_nominal, report):
    _, runs = vdp_nominal
    raster = runs[0].filters["snn_emsif"].raster
    frac = spike_efficiency(raster)
    ok = raster.N == 100 and raster.n_steps == 2000 and frac < 0.30
    detail = f"spike fraction {frac:.4f} ({raster.total_spikes} spikes, N={raster.N}, {raster.n_steps} steps; < 0.30)"
    assert report(5, ok, detail), detail


def test_criterion_6_sweep(report):
    cfg = load_bundled("van_der_pol").with_overrides(mc_runs=10)
    curve = neuron_sweep(cfg)
    ends = {f: (dict(pts)[50], dict(pts)[500]) for f, pts in curve.items()}
    gain = {f: a / b for f, (a, b) in ends.items()}
    ok = all(b <= a for a, b in ends.values()) and gain["snn_ekf"] > gain["snn_emsif"]
    detail = "; ".join(
        f"{f}: delta_x(50)={a:.4g} delta_x(500)={b:.4g} ratio={gain[f]:.3g}" for f, (a, b) in ends.items()
    )
    assert report(6, ok, detail), detail


def test_criterion_7_runtime(report):
    cfg = load_bundled("van_der_pol")
    table = profile_table(runtime_profile(cfg, N_list=[50, 100, 300]))
    mono = all(t[50] < t[100] < t[300] for t in table.values())
    star = all(table["snn_emsif_star"][N] < table["snn_emsif"][N] for N in (50, 100, 300))
    detail = "; ".join(f"{f}: " + "/".join(f"{t[N] * 1e6:.1f}" for N in (50, 100, 300)) + " us" for f, t in table.items())
    assert report(7, mono and star, detail), detail


PROPERTY_TESTS = [
    "test_systems.py::TestVanDerPol::test_jacobians_match_finite_differences",
    "test_systems.py::TestRendezvous::test_jacobians_and_measurement",
    "test_classical.py::TestRiccati::test_steady_state_full_measurement",
    "test_classical.py::TestGains::test_saturate_range_and_monotone",
    "test_scn.py::TestSpikeResolution::test_reset_arithmetic",
    "test_neuromorphic.py::TestUpdateWeights::test_omega_k_identity",
    "test_cli.py::test_mc_reproducible_and_manifest",
    "test_classical.py::test_continuous_filter_matches_discrete_oracle",
]


def test_criterion_8_property_suite(report):
    ids = [str(TESTS / t) for t in PROPERTY_TESTS]
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *ids],
        capture_output=True, text=True, cwd=TESTS.parent,
    )
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    ok = proc.returncode == 0 and "passed" in tail and "deselected" not in tail
    assert report(8, ok, tail), proc.stdout + proc.stderr


def test_criterion_9_silencing(vdp_nominal, report):
    rec, _ = vdp_nominal
    intact, silenced = rec["snn_emsif"], rec["snn_emsif_silenced"]
    factor = silenced.window_rmse / intact.window_rmse
    ok = silenced.divergences == 0 and np.all(factor < SILENCING_FACTOR)
    detail = f"divergences={silenced.divergences}, RMSE factor={fmt(factor)} (< {SILENCING_FACTOR:g})"
    assert report(9, ok, detail), detail
