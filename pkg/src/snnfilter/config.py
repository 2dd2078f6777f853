"""Scenario configuration files.

A scenario is a YAML mapping with the sections below.  Parsing is strict:
unknown keys, missing required keys and type mismatches raise
:class:`~snnfilter.errors.ConfigError` naming the file and line.

.. code-block:: yaml

    name: van_der_pol
    system:      {name: van_der_pol, mu: 0.005}
    simulation:  {dt: 0.01, T: 20.0, x0: [2, 2], process_noise: intensity}
    noise:       {Q: [0.01, 0.01], R: 0.1}
    filters:     {list: [ekf, emsif, snn_ekf, snn_emsif], x_hat0: [0, 0],
                  P0: [0.01, 0.01], delta: 0.05, alpha_q: 1.0, alpha_r: 1.0}
    snn:         {N: 100, lambda: 0.5, sigma_D: 0.5}
    monte_carlo: {runs: 25, master_seed: 1, window: 10.0}

Matrices may be written as a full nested list, as a list (the diagonal) or
as a scalar (a multiple of the identity).  They are stored fully expanded, so
:func:`dump_config` followed by :func:`parse_config` reproduces the same
:class:`ScenarioConfig`.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError
from .systems import DEFAULT_ORBIT_RADIUS, MU_EARTH, Rendezvous, VanDerPol, cw_variant_name, make_system

CLASSICAL_FILTERS = ("ekf", "emsif", "sif")
SNN_FILTERS = ("snn_ekf", "snn_emsif", "snn_emsif_star")
ALL_FILTERS = CLASSICAL_FILTERS + SNN_FILTERS
_DIMS = {"van_der_pol": (VanDerPol.n_x, VanDerPol.n_z), "rendezvous": (Rendezvous.n_x, Rendezvous.n_z)}
_DEFAULT_WINDOW = {"van_der_pol": 10.0, "rendezvous": 60.0}


@dataclass(frozen=True)
class SnnSettings:
    N: int = 100
    lam: float = 0.5
    sigma_D: float = 0.5
    eta_sigma: float = 0.0
    spike_mode: str = "sequential"
    max_iters: Optional[int] = None


@dataclass(frozen=True)
class SilencingSettings:
    fraction: float
    onset: float


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved experiment description (immutable, hashable)."""

    name: str
    system: str
    dt: float
    T: float
    x0: tuple
    Q: tuple
    R: tuple
    filters: tuple
    x_hat0: tuple
    P0: tuple
    delta: float
    snn: SnnSettings
    mc_runs: int
    master_seed: int
    mu: float = 0.005
    R_o: float = DEFAULT_ORBIT_RADIUS
    mu_earth: float = MU_EARTH
    K_ctrl: Optional[tuple] = None
    cw_variant: str = "velocity"
    process_noise: str = "intensity"
    alpha_q: float = 1.0
    alpha_r: float = 1.0
    clip_covariance: bool = False
    window: float = 10.0
    coverage_window: Optional[float] = None
    workers: int = 1
    sweep: Optional[tuple] = None
    silencing: Optional[SilencingSettings] = None
    profile_N: tuple = (50, 100, 300)
    profile_repeats: int = 3
    output_dir: str = "out"

    # array views -------------------------------------------------------
    @property
    def Q_array(self):
        return np.array(self.Q, dtype=float)

    @property
    def R_array(self):
        return np.array(self.R, dtype=float)

    @property
    def P0_array(self):
        return np.array(self.P0, dtype=float)

    def model(self):
        params = {"mu": self.mu, "R_o": self.R_o, "mu_earth": self.mu_earth, "cw_variant": self.cw_variant}
        if self.K_ctrl is not None:
            params["K_ctrl"] = np.array(self.K_ctrl, dtype=float)
        return make_system(self.system, **params)

    @property
    def controller(self):
        return None if self.K_ctrl is None else np.array(self.K_ctrl, dtype=float)

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def with_overrides(self, **kw):
        """Copy with top-level fields replaced; ``N``/``lam``/... go to ``snn``."""
        snn_keys = {f.name for f in fields(SnnSettings)}
        snn_kw = {k: kw.pop(k) for k in list(kw) if k in snn_keys}
        cfg = replace(self, **kw)
        if snn_kw:
            cfg = replace(cfg, snn=replace(cfg.snn, **snn_kw))
        return cfg

    def config_hash(self):
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


# ----------------------------------------------------------------------------
# Schema
# ----------------------------------------------------------------------------

# (section, key) -> (kind, required, default)
_REQ = object()
_SCHEMA = {
    None: {
        "name": ("str", False, None),
        "system": ("section", True, None),
        "simulation": ("section", True, None),
        "noise": ("section", True, None),
        "filters": ("section", True, None),
        "snn": ("section", False, {}),
        "monte_carlo": ("section", True, None),
        "sweep": ("int_list", False, None),
        "silencing": ("section", False, None),
        "profile": ("section", False, {}),
        "output_dir": ("str", False, None),
    },
    "system": {
        "name": ("str", True, None),
        "mu": ("float", False, 0.005),
        "R_o": ("float", False, DEFAULT_ORBIT_RADIUS),
        "mu_earth": ("float", False, MU_EARTH),
        "K_ctrl": ("gain", False, None),
        "cw_variant": ("str", False, "velocity"),
    },
    "simulation": {
        "dt": ("float", True, None),
        "T": ("float", True, None),
        "x0": ("state", True, None),
        "process_noise": ("str", False, "intensity"),
    },
    "noise": {
        "Q": ("state_matrix", True, None),
        "R": ("meas_matrix", True, None),
    },
    "filters": {
        "list": ("str_list", True, None),
        "x_hat0": ("state", True, None),
        "P0": ("state_matrix", True, None),
        "delta": ("float", True, None),
        "alpha_q": ("float", False, 1.0),
        "alpha_r": ("float", False, 1.0),
        "clip_covariance": ("bool", False, False),
    },
    "snn": {
        "N": ("int", False, 100),
        "lambda": ("float", False, 0.5),
        "sigma_D": ("float", False, 0.5),
        "eta_sigma": ("float", False, 0.0),
        "spike_mode": ("str", False, "sequential"),
        "max_iters": ("int", False, None),
    },
    "monte_carlo": {
        "runs": ("int", True, None),
        "master_seed": ("int", True, None),
        "window": ("float", False, None),
        "coverage_window": ("float", False, None),
        "workers": ("int", False, 1),
    },
    "silencing": {
        "fraction": ("float", True, None),
        "onset": ("float", True, None),
    },
    "profile": {
        "N": ("int_list", False, [50, 100, 300]),
        "repeats": ("int", False, 3),
    },
}


class _Ctx:
    def __init__(self, source):
        self.source = source

    def fail(self, node, msg):
        line = node.start_mark.line + 1 if node is not None else 1
        raise ConfigError(f"{self.source}:{line}: {msg}")


def _scalar(loader, ctx, node, kind, path):
    if not isinstance(node, yaml.ScalarNode):
        ctx.fail(node, f"{path}: expected a {kind}, got a {node.id}")
    value = loader.construct_object(node)
    if kind == "str":
        if not isinstance(value, str):
            ctx.fail(node, f"{path}: expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            ctx.fail(node, f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        # YAML 1.1 reads "1e-12" (no dot) as a string
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                ctx.fail(node, f"{path}: expected a number, got {value!r}")
        else:
            ctx.fail(node, f"{path}: expected a number, got {value!r}")
    if kind == "int":
        if isinstance(value, float) and not value.is_integer():
            ctx.fail(node, f"{path}: expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not np.isfinite(value):
        ctx.fail(node, f"{path}: value must be finite")
    return value


def _seq(loader, ctx, node, path, item_kind):
    if not isinstance(node, yaml.SequenceNode):
        ctx.fail(node, f"{path}: expected a list")
    return [_scalar(loader, ctx, n, item_kind, f"{path}[{i}]") for i, n in enumerate(node.value)]


def _matrix(loader, ctx, node, path, dim, cols=None):
    cols = dim if cols is None else cols
    if isinstance(node, yaml.ScalarNode):
        if cols != dim:
            ctx.fail(node, f"{path}: expected a {dim}x{cols} matrix")
        return (_scalar(loader, ctx, node, "float", path) * np.eye(dim)).tolist()
    if not isinstance(node, yaml.SequenceNode):
        ctx.fail(node, f"{path}: expected a matrix")
    if node.value and all(isinstance(n, yaml.ScalarNode) for n in node.value):
        if cols != dim:
            ctx.fail(node, f"{path}: expected a {dim}x{cols} matrix")
        diag = _seq(loader, ctx, node, path, "float")
        if len(diag) != dim:
            ctx.fail(node, f"{path}: diagonal must have {dim} entries, got {len(diag)}")
        return np.diag(diag).tolist()
    rows = []
    for i, row in enumerate(node.value):
        vals = _seq(loader, ctx, row, f"{path}[{i}]", "float")
        if len(vals) != cols:
            ctx.fail(row, f"{path}[{i}]: expected {cols} columns, got {len(vals)}")
        rows.append(vals)
    if len(rows) != dim:
        ctx.fail(node, f"{path}: expected {dim} rows, got {len(rows)}")
    return rows


def _mapping(loader, ctx, node, section):
    if not isinstance(node, yaml.MappingNode):
        ctx.fail(node, f"{section or 'top level'}: expected a mapping")
    schema = _SCHEMA[section]
    seen = {}
    for key_node, value_node in node.value:
        key = key_node.value
        where = f"{section}.{key}" if section else key
        if key not in schema:
            ctx.fail(key_node, f"unknown key '{where}' (allowed: {', '.join(schema)})")
        if key in seen:
            ctx.fail(key_node, f"duplicate key '{where}'")
        seen[key] = value_node
    missing = [k for k, (_, req, _) in schema.items() if req and k not in seen]
    if missing:
        label = f"section '{section}'" if section else "config"
        ctx.fail(node, f"{label} is missing required keys: {', '.join(missing)}")
    return seen


def _read_section(loader, ctx, nodes, section, dims):
    out = {}
    schema = _SCHEMA[section]
    for key, (kind, _req, default) in schema.items():
        node = nodes.get(key)
        path = f"{section}.{key}"
        if node is None:
            out[key] = default
            continue
        if kind in ("float", "int", "str", "bool"):
            out[key] = _scalar(loader, ctx, node, kind, path)
        elif kind == "int_list":
            out[key] = _seq(loader, ctx, node, path, "int")
        elif kind == "str_list":
            out[key] = _seq(loader, ctx, node, path, "str")
        elif kind == "state":
            vals = _seq(loader, ctx, node, path, "float")
            if len(vals) != dims[0]:
                ctx.fail(node, f"{path}: expected {dims[0]} entries, got {len(vals)}")
            out[key] = vals
        elif kind == "state_matrix":
            out[key] = _matrix(loader, ctx, node, path, dims[0])
        elif kind == "meas_matrix":
            out[key] = _matrix(loader, ctx, node, path, dims[1])
        elif kind == "gain":
            out[key] = _matrix(loader, ctx, node, path, 3, 6)
        out[f"__node_{key}"] = node
    return out


def _tup(M):
    if M is None:
        return None
    if isinstance(M, (list, tuple)) and M and isinstance(M[0], (list, tuple)):
        return tuple(tuple(float(v) for v in row) for row in M)
    return tuple(M)


def parse_config_text(text, source="<string>"):
    """Parse scenario YAML text into a :class:`ScenarioConfig`."""
    ctx = _Ctx(source)
    loader = yaml.SafeLoader(text)
    try:
        root = loader.get_single_node()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: malformed YAML: {exc}") from None
    finally:
        loader.dispose()
    if root is None:
        required = [k for k, (_, req, _) in _SCHEMA[None].items() if req]
        raise ConfigError(f"{source}:1: empty config; required keys: {', '.join(required)}")
    top_nodes = _mapping(loader, ctx, root, None)
    top = _read_top(loader, ctx, top_nodes)

    sys_nodes = _mapping(loader, ctx, top_nodes["system"], "system")
    system = _read_section(loader, ctx, sys_nodes, "system", (0, 0))
    if system["name"] not in _DIMS:
        ctx.fail(sys_nodes["name"], f"system.name: unknown system {system['name']!r}; expected one of {sorted(_DIMS)}")
    dims = _DIMS[system["name"]]
    try:
        system["cw_variant"] = cw_variant_name(system["cw_variant"])
    except ConfigError as exc:
        ctx.fail(sys_nodes["cw_variant"], f"system.{exc}")

    sections = {}
    for sec in ("simulation", "noise", "filters", "snn", "monte_carlo", "silencing", "profile"):
        node = top_nodes.get(sec)
        if node is None:
            sections[sec] = None if sec == "silencing" else _defaults(sec)
            continue
        sections[sec] = _read_section(loader, ctx, _mapping(loader, ctx, node, sec), sec, dims)
    sim, noise, filt, snn, mc = (sections[k] for k in ("simulation", "noise", "filters", "snn", "monte_carlo"))
    sil, prof = sections["silencing"], sections["profile"]

    def check(cond, sec, key, msg):
        if not cond:
            node = sec.get(f"__node_{key}") if sec else None
            ctx.fail(node, msg)

    check(sim["dt"] > 0, sim, "dt", "simulation.dt must be positive")
    check(sim["T"] >= sim["dt"], sim, "T", "simulation.T must be at least one time step")
    check(sim["process_noise"] in ("intensity", "sampled"), sim, "process_noise",
          "simulation.process_noise must be 'intensity' or 'sampled'")
    for f in filt["list"]:
        check(f in ALL_FILTERS, filt, "list", f"filters.list: unknown filter {f!r}; expected one of {ALL_FILTERS}")
    check(len(filt["list"]) > 0, filt, "list", "filters.list must not be empty")
    check(filt["alpha_q"] > 0 and filt["alpha_r"] > 0, filt, "alpha_q", "filters.alpha_q and alpha_r must be positive")
    check(filt["delta"] > 0, filt, "delta", "filters.delta must be positive")
    check(snn["N"] >= dims[0], snn, "N", f"snn.N must be at least the state dimension {dims[0]}")
    check(snn["lambda"] >= 0, snn, "lambda", "snn.lambda must be nonnegative")
    check(snn["sigma_D"] > 0, snn, "sigma_D", "snn.sigma_D must be positive")
    check(snn["eta_sigma"] >= 0, snn, "eta_sigma", "snn.eta_sigma must be nonnegative")
    check(snn["spike_mode"] in ("sequential", "simultaneous"), snn, "spike_mode",
          "snn.spike_mode must be 'sequential' or 'simultaneous'")
    check(mc["runs"] >= 1, mc, "runs", "monte_carlo.runs must be at least 1")
    check(mc["workers"] >= 1, mc, "workers", "monte_carlo.workers must be at least 1")
    if top["sweep"] is not None:
        check(all(n >= dims[0] for n in top["sweep"]), None, None, f"sweep: every N must be >= {dims[0]}")
    if sil is not None:
        check(0 <= sil["fraction"] <= 1, sil, "fraction", "silencing.fraction must lie in [0, 1]")
    if system["name"] == "rendezvous" and system["K_ctrl"] is None:
        ctx.fail(top_nodes["system"], "system.K_ctrl is required for the rendezvous system")

    window = mc["window"] if mc["window"] is not None else _DEFAULT_WINDOW[system["name"]]
    return ScenarioConfig(
        name=top["name"] or system["name"],
        system=system["name"],
        mu=system["mu"],
        R_o=system["R_o"],
        mu_earth=system["mu_earth"],
        K_ctrl=_tup(system["K_ctrl"]),
        cw_variant=system["cw_variant"],
        dt=sim["dt"],
        T=sim["T"],
        x0=_tup(sim["x0"]),
        process_noise=sim["process_noise"],
        Q=_tup(noise["Q"]),
        R=_tup(noise["R"]),
        filters=tuple(filt["list"]),
        x_hat0=_tup(filt["x_hat0"]),
        P0=_tup(filt["P0"]),
        delta=filt["delta"],
        alpha_q=filt["alpha_q"],
        alpha_r=filt["alpha_r"],
        clip_covariance=filt["clip_covariance"],
        snn=SnnSettings(
            N=snn["N"],
            lam=snn["lambda"],
            sigma_D=snn["sigma_D"],
            eta_sigma=snn["eta_sigma"],
            spike_mode=snn["spike_mode"],
            max_iters=snn["max_iters"],
        ),
        mc_runs=mc["runs"],
        master_seed=mc["master_seed"],
        window=window,
        coverage_window=mc["coverage_window"],
        workers=mc["workers"],
        sweep=None if top["sweep"] is None else tuple(top["sweep"]),
        silencing=None if sil is None else SilencingSettings(sil["fraction"], sil["onset"]),
        profile_N=tuple(prof["N"]),
        profile_repeats=prof["repeats"],
        output_dir=top["output_dir"] or f"out/{top['name'] or system['name']}",
    )


def _read_top(loader, ctx, nodes):
    out = {}
    for key in ("name", "sweep", "output_dir"):
        kind = _SCHEMA[None][key][0]
        node = nodes.get(key)
        if node is None:
            out[key] = None
        elif kind == "str":
            out[key] = _scalar(loader, ctx, node, "str", key)
        else:
            out[key] = _seq(loader, ctx, node, key, "int")
    return out


def _defaults(section):
    return {k: d for k, (_, _, d) in _SCHEMA[section].items()}


def parse_config(path):
    """Read and strictly validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from None
    return parse_config_text(text, str(path))


def config_to_dict(cfg: ScenarioConfig):
    """Nested mapping in the file layout, with every value resolved."""

    def lists(x):
        if isinstance(x, tuple):
            return [lists(v) for v in x]
        return x

    system = {"name": cfg.system}
    if cfg.system == "van_der_pol":
        system["mu"] = cfg.mu
    else:
        system.update(R_o=cfg.R_o, mu_earth=cfg.mu_earth, cw_variant=cfg.cw_variant)
    if cfg.K_ctrl is not None:
        system["K_ctrl"] = lists(cfg.K_ctrl)
    out = {
        "name": cfg.name,
        "system": system,
        "simulation": {"dt": cfg.dt, "T": cfg.T, "x0": lists(cfg.x0), "process_noise": cfg.process_noise},
        "noise": {"Q": lists(cfg.Q), "R": lists(cfg.R)},
        "filters": {
            "list": list(cfg.filters),
            "x_hat0": lists(cfg.x_hat0),
            "P0": lists(cfg.P0),
            "delta": cfg.delta,
            "alpha_q": cfg.alpha_q,
            "alpha_r": cfg.alpha_r,
            "clip_covariance": cfg.clip_covariance,
        },
        "snn": {
            "N": cfg.snn.N,
            "lambda": cfg.snn.lam,
            "sigma_D": cfg.snn.sigma_D,
            "eta_sigma": cfg.snn.eta_sigma,
            "spike_mode": cfg.snn.spike_mode,
        },
        "monte_carlo": {
            "runs": cfg.mc_runs,
            "master_seed": cfg.master_seed,
            "window": cfg.window,
            "workers": cfg.workers,
        },
        "profile": {"N": list(cfg.profile_N), "repeats": cfg.profile_repeats},
        "output_dir": cfg.output_dir,
    }
    if cfg.snn.max_iters is not None:
        out["snn"]["max_iters"] = cfg.snn.max_iters
    if cfg.coverage_window is not None:
        out["monte_carlo"]["coverage_window"] = cfg.coverage_window
    if cfg.sweep is not None:
        out["sweep"] = list(cfg.sweep)
    if cfg.silencing is not None:
        out["silencing"] = asdict(cfg.silencing)
    return out


def dump_config(cfg: ScenarioConfig):
    """Serialize a resolved config; :func:`parse_config_text` inverts it."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None, width=120)


def bundled_config_path(name):
    """Path of a config shipped with the package (e.g. ``"van_der_pol"``)."""
    p = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not p.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return p


def load_bundled(name):
    return parse_config(bundled_config_path(name))
