"""Named scenario configurations shared by the CLI, demos, and tests.

A scenario bundles a state region, cost model, terminal cost, initial
distribution, and solver/equilibrium options.  Scenarios are described by a
plain JSON-able dict (schema below) and can be resolved from a built-in
preset name or a config file.

Config schema (``schema_version`` 1)::

    {
      "schema_version": 1,
      "name": "interval-congestion",
      "seed": 7,
      "domain": {"preset": "interval"},
      "lagrangian": {"preset": "quadratic-congestion", "c1": 0.01,
                      "amplitude": 0.1, "horizon": 1.0},
      "terminal": {"preset": "saturating-ramp", "target": [1.2],
                    "direction": [-1.0]},
      "initial_distribution": {"type": "uniform", "count": 50,
                                "low": [0.05], "high": [0.95]},
      "solver": {"num_nodes": 200, "pg_tolerance": 1e-7, "num_starts": 3},
      "equilibrium": {"damping": "harmonic", "max_iterations": 200,
                       "exploitability_tolerance": 1e-3,
                       "prune_threshold": 1e-6,
                       "value_time_points": 3, "value_space_points": 11,
                       "mild_gap_tolerance": 5e-3},
      "output_dir": "runs/interval-congestion"
    }

Initial distributions are either explicit ``{"type": "atoms", "points",
"weights"}`` or sampled ``{"type": "uniform", "count", "low", "high"}``
using the scenario seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import geometry, lagrangian
from .equilibrium import EquilibriumConfig
from .errors import ConfigError
from .geometry import Domain
from .lagrangian import LagrangianModel, TerminalCost
from .measures import StateMeasure
from .trajopt import ControlPath, SolveOptions

SCHEMA_VERSION = 1


@dataclass
class Scenario:
    name: str
    seed: int
    domain: Domain
    model: LagrangianModel
    terminal: TerminalCost
    m0: StateMeasure
    num_nodes: int
    equilibrium: EquilibriumConfig
    solver: SolveOptions
    config: dict = field(repr=False, default_factory=dict)


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"missing key '{path}.{key}'")
    return cfg[key]


def _build_terminal(cfg: dict, domain: Domain) -> TerminalCost:
    preset = _require(cfg, "preset", "terminal")
    if preset == "saturating-ramp":
        return lagrangian.saturating_ramp(
            target=cfg.get("target", [0.0] * domain.dimension),
            direction=cfg.get("direction"),
        )
    if preset == "quadratic-distance":
        return lagrangian.quadratic_distance(_require(cfg, "target", "terminal"),
                                             domain)
    if preset == "zero":
        return lagrangian.zero_terminal(domain.dimension)
    raise ConfigError(f"unknown terminal preset 'terminal.preset = {preset}'")


def _build_model(cfg: dict, domain: Domain) -> LagrangianModel:
    preset = _require(cfg, "preset", "lagrangian")
    d = domain.dimension
    horizon = float(cfg.get("horizon", 1.0))
    if preset == "quadratic":
        return lagrangian.quadratic(
            d, weights=cfg.get("weights"), horizon=horizon,
            n1=float(cfg.get("n1", 1.0)), c=float(cfg.get("c", 2.0)),
            k1=float(cfg.get("k1", 1.0)), kappa1=float(cfg.get("kappa1", 1.0)),
            c1=float(cfg.get("c1", 0.0)),
        )
    if preset == "shifted-quadratic":
        return lagrangian.shifted_quadratic(
            d, drift=_require(cfg, "drift", "lagrangian"), horizon=horizon,
            c=float(cfg.get("c", 2.0)), c1=float(cfg.get("c1", 0.0)),
        )
    if preset == "quadratic-congestion":
        return lagrangian.quadratic_congestion(
            d, c1=float(cfg.get("c1", 0.01)),
            amplitude=float(cfg.get("amplitude", 0.1)), horizon=horizon,
            n1=float(cfg.get("n1", 1.0)), c=float(cfg.get("c", 2.0)),
            k1=float(cfg.get("k1", 1.0)), kappa1=float(cfg.get("kappa1", 1.0)),
        )
    if preset == "quadratic-potential":
        return lagrangian.quadratic_with_potential(
            d, target=_require(cfg, "target", "lagrangian"),
            weight=float(cfg.get("weight", 0.5)), horizon=horizon,
            c=float(cfg.get("c", 2.0)),
        )
    raise ConfigError(f"unknown lagrangian preset 'lagrangian.preset = {preset}'")


def _build_m0(cfg: dict, domain: Domain, seed: int) -> StateMeasure:
    kind = _require(cfg, "type", "initial_distribution")
    if kind == "atoms":
        return StateMeasure(
            points=np.asarray(_require(cfg, "points", "initial_distribution"),
                              dtype=float),
            weights=np.asarray(_require(cfg, "weights", "initial_distribution"),
                               dtype=float),
        )
    if kind == "uniform":
        if "seed" not in cfg and seed is None:
            raise ConfigError("sampled initial_distribution requires a seed")
        rng = np.random.default_rng(int(cfg.get("seed", seed)))
        n = int(_require(cfg, "count", "initial_distribution"))
        lo = np.asarray(_require(cfg, "low", "initial_distribution"), dtype=float)
        hi = np.asarray(_require(cfg, "high", "initial_distribution"), dtype=float)
        pts = lo + rng.uniform(size=(n, domain.dimension)) * (hi - lo)
        if np.any(domain.signed_distance(pts) < 0):
            raise ConfigError("sampled initial atoms leave the region; "
                              "shrink initial_distribution.low/high")
        return StateMeasure(points=pts, weights=np.full(n, 1.0 / n))
    raise ConfigError(f"unknown initial_distribution.type '{kind}'")


def from_config(cfg: dict) -> Scenario:
    """Resolve a config dict into a runnable scenario."""
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got "
            f"{cfg.get('schema_version')!r}"
        )
    name = cfg.get("name", "unnamed")
    seed = int(cfg.get("seed", 0))
    dom_cfg = _require(cfg, "domain", "")
    preset = _require(dom_cfg, "preset", "domain")
    try:
        domain = geometry.domain_preset(preset)
    except KeyError:
        raise ConfigError(f"unknown domain preset 'domain.preset = {preset}'")
    model = _build_model(_require(cfg, "lagrangian", ""), domain)
    terminal = _build_terminal(_require(cfg, "terminal", ""), domain)
    m0 = _build_m0(_require(cfg, "initial_distribution", ""), domain, seed)

    sol = cfg.get("solver", {})
    solver = SolveOptions(
        num_starts=int(sol.get("num_starts", 3)),
        pg_tol=float(sol.get("pg_tolerance", 1e-7)),
        max_inner=int(sol.get("max_inner_iterations", 800)),
        penalty_weights=tuple(sol.get("penalty_weights", (1e2, 1e3, 1e4))),
        max_multiplier_rounds=int(sol.get("max_multiplier_rounds", 25)),
        seed=seed,
    )
    eq = cfg.get("equilibrium", {})
    equilibrium = EquilibriumConfig(
        damping=eq.get("damping", "harmonic"),
        max_iterations=int(eq.get("max_iterations", 200)),
        exploitability_tolerance=float(eq.get("exploitability_tolerance", 1e-3)),
        prune_threshold=float(eq.get("prune_threshold", 1e-6)),
        seed=seed,
        value_time_points=int(eq.get("value_time_points", 3)),
        value_space_points=int(eq.get("value_space_points", 11)),
        mild_gap_tolerance=float(eq.get("mild_gap_tolerance", 5e-3)),
    )
    return Scenario(
        name=name, seed=seed, domain=domain, model=model, terminal=terminal,
        m0=m0, num_nodes=int(sol.get("num_nodes", 200)),
        equilibrium=equilibrium, solver=solver, config=copy.deepcopy(cfg),
    )


# ---------------------------------------------------------------------------
# built-in preset configs
# ---------------------------------------------------------------------------

def preset_config(name: str, seed: int | None = None) -> dict:
    if name not in PRESET_CONFIGS:
        raise ConfigError(
            f"unknown scenario preset '{name}'; available: "
            + ", ".join(sorted(PRESET_CONFIGS))
        )
    cfg = copy.deepcopy(PRESET_CONFIGS[name])
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


PRESET_CONFIGS: dict[str, dict] = {
    "frozen-constants": {
        "schema_version": 1,
        "name": "frozen-constants",
        "seed": 7,
        "domain": {"preset": "interval"},
        "lagrangian": {"preset": "quadratic", "horizon": 1.0, "n1": 1.0,
                       "c": 2.0, "k1": 1.0, "kappa1": 1.0, "c1": 0.01},
        "terminal": {"preset": "saturating-ramp", "target": [1.2],
                     "direction": [-1.0]},
        "initial_distribution": {"type": "atoms", "points": [[0.5]],
                                 "weights": [1.0]},
        "solver": {"num_nodes": 200},
        "equilibrium": {"max_iterations": 50,
                        "exploitability_tolerance": 1e-6},
    },
    "interval-decoupled": {
        "schema_version": 1,
        "name": "interval-decoupled",
        "seed": 7,
        "domain": {"preset": "interval"},
        "lagrangian": {"preset": "quadratic", "horizon": 1.0, "c1": 0.0},
        "terminal": {"preset": "saturating-ramp", "target": [1.2],
                     "direction": [-1.0]},
        "initial_distribution": {"type": "uniform", "count": 50,
                                 "low": [0.05], "high": [0.95]},
        "solver": {"num_nodes": 200},
        "equilibrium": {"max_iterations": 50,
                        "exploitability_tolerance": 1e-6,
                        "value_time_points": 3, "value_space_points": 11},
    },
    "interval-congestion": {
        "schema_version": 1,
        "name": "interval-congestion",
        "seed": 7,
        "domain": {"preset": "interval"},
        "lagrangian": {"preset": "quadratic-congestion", "c1": 0.01,
                       "amplitude": 0.1, "horizon": 1.0},
        "terminal": {"preset": "saturating-ramp", "target": [1.2],
                     "direction": [-1.0]},
        "initial_distribution": {"type": "uniform", "count": 50,
                                 "low": [0.05], "high": [0.95]},
        "solver": {"num_nodes": 200},
        "equilibrium": {"max_iterations": 200,
                        "exploitability_tolerance": 1e-3,
                        "value_time_points": 3, "value_space_points": 11},
    },
    "disk-target-chase": {
        "schema_version": 1,
        "name": "disk-target-chase",
        "seed": 7,
        "domain": {"preset": "disk"},
        "lagrangian": {"preset": "quadratic", "horizon": 1.0, "c1": 0.0},
        "terminal": {"preset": "quadratic-distance", "target": [2.0, 0.0]},
        "initial_distribution": {"type": "atoms",
                                 "points": [[0.0, 0.0], [0.0, 0.9]],
                                 "weights": [0.5, 0.5]},
        "solver": {"num_nodes": 200},
        "equilibrium": {"max_iterations": 20,
                        "exploitability_tolerance": 1e-6,
                        "value_time_points": 2, "value_space_points": 7},
    },
    "disk-potential-arc": {
        "schema_version": 1,
        "name": "disk-potential-arc",
        "seed": 7,
        "domain": {"preset": "disk"},
        "lagrangian": {"preset": "quadratic-potential", "target": [2.0, 0.0],
                       "weight": 1.0, "horizon": 1.0},
        "terminal": {"preset": "quadratic-distance", "target": [2.0, 0.0]},
        "initial_distribution": {"type": "atoms", "points": [[0.0, 0.9]],
                                 "weights": [1.0]},
        "solver": {"num_nodes": 200},
        "equilibrium": {"max_iterations": 20,
                        "exploitability_tolerance": 1e-6,
                        "value_time_points": 2, "value_space_points": 7},
    },
}


# ---------------------------------------------------------------------------
# boundary-hugging trajectory for the path-approximation audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryHugScenario:
    """Smooth disk trajectory that approaches, hugs, and leaves the boundary.

    The reference control stays within the (1, 1) budget with slack, crosses
    the collar in both directions, and rides at distance ``margin`` from the
    boundary in between, so the approximation construction exercises all
    four of its interval cases.
    """

    domain: Domain
    atlas: object
    control: ControlPath
    start: np.ndarray
    budget: tuple[float, float]
    margin: float


def _smoothstep(w):
    w = np.clip(w, 0.0, 1.0)
    return 6.0 * w**5 - 15.0 * w**4 + 10.0 * w**3


def _smoothstep_deriv(w):
    wc = np.clip(w, 0.0, 1.0)
    inside = (w >= 0.0) & (w <= 1.0)
    return np.where(inside, 30.0 * wc**4 - 60.0 * wc**3 + 30.0 * wc**2, 0.0)


def boundary_hug(margin: float = 1e-4, num_nodes: int = 400,
                 chart_radius: float = 0.2) -> BoundaryHugScenario:
    domain = geometry.disk()
    atlas = geometry.build_atlas(domain, chart_radius)
    T = 4.0
    ts = np.linspace(0.0, T, num_nodes + 1)
    r_in, r_peak, r_out = 0.58, 1.0 - margin, 0.55
    rise, fall = r_peak - r_in, r_peak - r_out
    omega = 0.2

    def radius(t):
        return (r_in + rise * _smoothstep((t - 0.2) / 1.7)
                - fall * _smoothstep((t - 2.2) / 1.7))

    def radius_rate(t):
        return (rise * _smoothstep_deriv((t - 0.2) / 1.7) / 1.7
                - fall * _smoothstep_deriv((t - 2.2) / 1.7) / 1.7)

    def control_at(t):
        t = np.asarray(t, dtype=float)
        ph = omega * t
        e_r = np.stack([np.cos(ph), np.sin(ph)], axis=-1)
        e_t = np.stack([-np.sin(ph), np.cos(ph)], axis=-1)
        return (radius_rate(t)[..., None] * e_r
                + (radius(t) * omega)[..., None] * e_t)

    control = ControlPath(times=ts, values=control_at(ts), budget=(1.0, 1.0))
    return BoundaryHugScenario(
        domain=domain, atlas=atlas, control=control,
        start=np.array([r_in, 0.0]), budget=(1.0, 1.0), margin=margin,
    )
