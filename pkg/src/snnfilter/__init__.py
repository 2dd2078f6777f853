"""Spiking-network state estimators and their classical baselines.

The package builds SNN-EKF and SNN-EMSIF filters on a spike-coding network
of leaky integrate-and-fire neurons, runs them next to the continuous EKF and
EMSIF, and provides a Monte-Carlo harness for accuracy, robustness, sparsity
and runtime experiments on a Van der Pol oscillator and a spacecraft
rendezvous problem.
"""

from .classical import FilterState, GainKind, GainRule, filter_step, run_filter
from .config import ScenarioConfig, dump_config, load_bundled, parse_config, parse_config_text
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidStateError,
    RankDeficientWarning,
    SingularMatrixError,
    SnnFilterError,
)
from .harness import (
    MetricsRecord,
    combined_rmse,
    monte_carlo,
    neuron_sweep,
    runtime_profile,
    sigma_bounds_check,
    single_run,
    spike_efficiency,
)
from .neuromorphic import SnnFilter, SnnFilterConfig, SnnKind, run_snn_filter
from .scn import (
    DecodingMatrix,
    NetworkState,
    SpikeRaster,
    decode,
    init_network,
    lif_step,
    random_silencing,
    sample_decoder,
    silence_neurons,
    spike_resolution,
    thresholds,
)
from .systems import NoiseSpec, Rendezvous, VanDerPol, make_system, simulate_truth

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DecodingMatrix",
    "DivergenceError",
    "FilterState",
    "GainKind",
    "GainRule",
    "InvalidStateError",
    "MetricsRecord",
    "NetworkState",
    "NoiseSpec",
    "RankDeficientWarning",
    "Rendezvous",
    "ScenarioConfig",
    "SingularMatrixError",
    "SnnFilter",
    "SnnFilterConfig",
    "SnnFilterError",
    "SnnKind",
    "SpikeRaster",
    "VanDerPol",
    "combined_rmse",
    "decode",
    "dump_config",
    "filter_step",
    "init_network",
    "lif_step",
    "load_bundled",
    "make_system",
    "monte_carlo",
    "neuron_sweep",
    "parse_config",
    "parse_config_text",
    "random_silencing",
    "run_filter",
    "run_snn_filter",
    "runtime_profile",
    "sample_decoder",
    "sigma_bounds_check",
    "silence_neurons",
    "simulate_truth",
    "single_run",
    "spike_efficiency",
    "spike_resolution",
    "thresholds",
]
