"""Deterministic Monte Carlo trials over mitigation methods.

Each trial draws initial positions from its own counter-based generator keyed
by ``(base_seed, trial_index)``, so every method sees the same starts and the
results do not depend on execution order.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .attacks import SpoofAttack, active_targets, corrupt_broadcasts, validate_attacks
from .detection import (
    ThresholdProfile,
    bootstrap,
    calibrate,
    neighbor_residuals,
    propagate_prediction,
    update_flags,
)
from .dynamics import StepParams, apply_update
from .errors import ConfigurationError, MetricError
from .formation import FormationSpec, VMetric, regular_polygon_spec
from .graph import Graph, build_complete, build_ring
from .mitigation import (
    METHODS,
    MitigationConfig,
    broadcast_aggregate,
    effective_readings_sosh,
    huber_aggregate,
    raw_readings,
    readings_aggregate,
    wmsr_aggregate,
)

log = logging.getLogger(__name__)

METRICS = ("V100", "Vinf", "AUC", "T1pct")
VINF_WINDOW = (150, 200)
AUC_LAST = 100
MIN_STEPS = VINF_WINDOW[1]


@dataclass(frozen=True)
class GraphConfig:
    kind: str = "complete"
    n_nodes: int = 5
    edges: Optional[tuple[tuple[int, int], ...]] = None

    def build(self) -> Graph:
        if self.kind == "complete":
            g = build_complete(self.n_nodes)
        elif self.kind == "ring":
            g = build_ring(self.n_nodes)
        elif self.kind == "explicit":
            if not self.edges:
                raise ConfigurationError("explicit graph needs an edge list", "graph.edges")
            g = Graph.from_edges(self.n_nodes, self.edges)
        else:
            raise ConfigurationError(f"unknown graph kind {self.kind!r}", "graph.kind")
        if not g.is_connected():
            raise ConfigurationError("communication graph must be connected", "graph")
        return g


@dataclass(frozen=True)
class FormationConfig:
    radius: float = 1.0
    dim: int = 2
    positions: Optional[tuple[tuple[float, ...], ...]] = None

    def build(self, n_agents: int) -> FormationSpec:
        if self.positions is not None:
            spec = FormationSpec(np.array(self.positions, dtype=float))
            if spec.n_agents != n_agents:
                raise ConfigurationError(
                    f"{spec.n_agents} formation positions for {n_agents} agents", "formation.positions"
                )
            return spec
        return regular_polygon_spec(n_agents, self.dim, self.radius)


@dataclass(frozen=True)
class DetectionConfig:
    kappa: float = 4.0
    window: int = 50
    noise_std: float = 0.0
    floor: float = 1e-6


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a Monte Carlo study.

    Defaults describe the five-agent pentagon benchmark with agent 2 spoofed
    by ``[3, 3]`` from the first step.
    """

    graph: GraphConfig = field(default_factory=GraphConfig)
    formation: FormationConfig = field(default_factory=FormationConfig)
    dt: float = 0.05
    steps: int = 200
    attacks: tuple[SpoofAttack, ...] = (SpoofAttack(target=2, offset=(3.0, 3.0)),)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    mitigation: MitigationConfig = field(default_factory=MitigationConfig)
    init_low: tuple[float, ...] = (-0.5, -0.5)
    init_high: tuple[float, ...] = (1.5, 1.5)
    trials: int = 30
    base_seed: int = 0
    methods: tuple[str, ...] = METHODS

    def validate(self) -> None:
        if self.steps < MIN_STEPS:
            raise ConfigurationError(f"steps must be >= {MIN_STEPS} for the steady-state window", "steps")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1", "trials")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}", "dt")
        if self.detection.window < 2:
            raise ConfigurationError("calibration window must be >= 2", "detection.window")
        if self.detection.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0", "detection.noise_std")
        dim = self.formation.dim if self.formation.positions is None else len(self.formation.positions[0])
        if len(self.init_low) != dim or len(self.init_high) != dim:
            raise ConfigurationError(f"init box must have {dim} bounds per corner", "init")
        if any(lo > hi for lo, hi in zip(self.init_low, self.init_high)):
            raise ConfigurationError("init box lower corner exceeds upper corner", "init")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}; expected one of {METHODS}", "methods")
        g = self.graph.build()
        validate_attacks(self.attacks, g.n_nodes, dim)
        self.formation.build(g.n_nodes)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Built, validated objects for simulation."""

    graph: Graph
    spec: FormationSpec
    params: StepParams
    attacks: tuple
    detection: DetectionConfig
    steps: int

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "Scenario":
        cfg.validate()
        g = cfg.graph.build()
        return cls(
            graph=g,
            spec=cfg.formation.build(g.n_nodes),
            params=StepParams(cfg.dt),
            attacks=tuple(cfg.attacks),
            detection=cfg.detection,
            steps=cfg.steps,
        )

    def relabeled(self, perm) -> "Scenario":
        """Same scenario with agent ``u`` renamed ``perm[u]``."""
        attacks = tuple(replace(a, target=int(perm[a.target])) for a in self.attacks)
        return replace(self, graph=self.graph.relabeled(perm), spec=self.spec.relabeled(perm), attacks=attacks)


@dataclass(eq=False)
class MetricsRecord:
    V100: float
    Vinf: float
    AUC: float
    T1pct: Optional[int]
    trajectory: np.ndarray
    method: str = ""
    trial: int = 0
    diverged: bool = False
    diverged_step: Optional[int] = None

    def values(self) -> dict:
        return {"V100": self.V100, "Vinf": self.Vinf, "AUC": self.AUC, "T1pct": self.T1pct}


@dataclass(eq=False)
class TrialResult:
    record: MetricsRecord
    flag_step: np.ndarray
    flag_residual: np.ndarray
    positions: Optional[np.ndarray] = None
    holding: int = 0


def trial_generator(base_seed: int, trial_index: int, stream: str = "init") -> np.random.Generator:
    """Philox generator keyed by a BLAKE2 hash of ``(base_seed, trial_index, stream)``."""
    digest = hashlib.blake2b(f"{base_seed}:{trial_index}:{stream}".encode(), digest_size=16).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


def initial_positions(cfg: ScenarioConfig, n_agents: int, trial_index: int) -> np.ndarray:
    u = trial_generator(cfg.base_seed, trial_index, "init").uniform(size=(n_agents, len(cfg.init_low)))
    lo, hi = np.asarray(cfg.init_low), np.asarray(cfg.init_high)
    return lo + (hi - lo) * u


def compute_metrics(V, dt: float) -> MetricsRecord:
    """Point error at k=100, mean over k=150..199, AUC over k=0..100, first 1% crossing."""
    V = np.asarray(V, dtype=float)
    if V.ndim != 1 or V.size < MIN_STEPS:
        raise MetricError(f"trajectory needs at least {MIN_STEPS} steps, got {V.size}")
    lo, hi = VINF_WINDOW
    hits = np.flatnonzero(V <= 0.01 * V[0])
    return MetricsRecord(
        V100=float(V[100]),
        Vinf=float(V[lo:hi].mean()),
        AUC=float(V[: AUC_LAST + 1].sum() * dt),
        T1pct=int(hits[0]) if hits.size else None,
        trajectory=V,
    )


def calibrate_thresholds(scn: Scenario, x0: np.ndarray, rng: np.random.Generator) -> ThresholdProfile:
    """Thresholds from an attack-free run of ``detection.window`` steps.

    Noiseless channels give identically zero residuals, so the floor is used
    directly without simulating.
    """
    det = scn.detection
    g = scn.graph
    if det.noise_std == 0:
        return ThresholdProfile.uncalibrated(g.n_nodes, det.kappa, det.floor)
    X = x0.copy()
    samples = []
    pred = None
    for _ in range(det.window):
        Y = X + rng.normal(0.0, det.noise_std, X.shape)
        pred = bootstrap(Y, g) if pred is None else pred
        r = neighbor_residuals(Y, pred, g)
        samples.append(np.where(g.adjacency, r, np.nan))
        X = apply_update(X, broadcast_aggregate(X, Y, g, scn.spec), scn.spec, scn.params)
        pred = propagate_prediction(pred, Y, scn.spec, g, scn.params)
    # the bootstrap step is a guaranteed zero and would bias the statistics
    return calibrate(np.array(samples[1:]), det.kappa, det.floor)


def simulate(
    scn: Scenario,
    x0: np.ndarray,
    mitigation: MitigationConfig,
    noise_rng: Optional[np.random.Generator] = None,
    profile: Optional[ThresholdProfile] = None,
    record_positions: bool = False,
) -> TrialResult:
    """Run detect -> disconnect -> hallucinate -> control for ``scn.steps`` steps.

    Agents whose broadcast is currently spoofed run their control law on
    received readings but do not run detection.
    """
    g, spec, p = scn.graph, scn.spec, scn.params
    N = g.n_nodes
    noise = scn.detection.noise_std
    if noise > 0 and noise_rng is None:
        raise ConfigurationError("noisy broadcasts need a noise generator")
    if profile is None:
        profile = ThresholdProfile.uncalibrated(N, scn.detection.kappa, scn.detection.floor)
    method = mitigation.method
    hall = mitigation.sosh if method == "sosh" else None
    vm = VMetric(spec, g)
    thresholds = profile.thresholds[:, None]

    X = np.array(x0, dtype=float)
    V = np.full(scn.steps, np.nan)
    positions = np.full((scn.steps, N, spec.dim), np.nan) if record_positions else None
    flag_step = np.full((N, N), -1)
    flag_residual = np.full((N, N), np.nan)
    pred = None
    diverged_at = None
    holding = 0
    # divergence is detected and reported below; numpy overflow warnings are noise here
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(scn.steps):
            if not np.all(np.isfinite(X)):
                diverged_at = k
                break
            V[k] = vm(X)
            if record_positions:
                positions[k] = X
            Y = corrupt_broadcasts(X, scn.attacks, k)
            if noise > 0:
                Y += noise_rng.normal(0.0, noise, Y.shape)
            if pred is None:
                pred = bootstrap(Y, g)
            gaps = neighbor_residuals(Y, pred, g)
            exceed = gaps > thresholds
            compromised = active_targets(scn.attacks, k)
            if compromised:
                exceed[list(compromised)] = False
            new = exceed & ~pred.flags
            if new.any():
                flag_step[new] = k
                flag_residual[new] = gaps[new]
                pred = update_flags(pred, exceed)

            if method == "wmsr":
                agg, held = wmsr_aggregate(X, Y, g, spec, mitigation.wmsr_F)
                holding += len(held)
            elif method == "huber":
                agg = huber_aggregate(X, Y, g, spec, mitigation.huber_c)
            elif method == "sosh" and pred.flags.any():
                readings = effective_readings_sosh(X, raw_readings(Y), pred.flags, pred.predictions, spec, hall)
                agg = readings_aggregate(X, readings, g, spec)
            else:
                agg = broadcast_aggregate(X, Y, g, spec)
            X = apply_update(X, agg, spec, p)
            pred = propagate_prediction(pred, Y, spec, g, p, hallucination=hall)

    if holding:
        log.warning("wmsr: %d agent-steps held position (neighborhood too small to trim)", holding)
    if diverged_at is None and not np.all(np.isfinite(V)):
        diverged_at = int(np.flatnonzero(~np.isfinite(V))[0])
    if diverged_at is not None:
        log.warning("%s trial diverged at step %d", method, diverged_at)
        nan = float("nan")
        record = MetricsRecord(nan, nan, nan, None, V, method=method, diverged=True, diverged_step=diverged_at)
    else:
        record = compute_metrics(V, p.dt)
        record.method = method
    return TrialResult(record, flag_step, flag_residual, positions, holding)


def run_trial(
    cfg: ScenarioConfig,
    trial_index: int,
    method: Optional[str] = None,
    scenario: Optional[Scenario] = None,
    record_positions: bool = False,
) -> TrialResult:
    """One seeded trial; ``method`` overrides ``cfg.mitigation.method``."""
    scn = scenario or Scenario.from_config(cfg)
    mitigation = cfg.mitigation if method is None else replace(cfg.mitigation, method=method)
    x0 = initial_positions(cfg, scn.graph.n_nodes, trial_index)
    profile = calibrate_thresholds(scn, x0, trial_generator(cfg.base_seed, trial_index, "calibration"))
    noise_rng = trial_generator(cfg.base_seed, trial_index, "channel")
    result = simulate(scn, x0, mitigation, noise_rng, profile, record_positions)
    result.record.trial = trial_index
    return result


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    median: float
    min: float
    max: float
    q1: float
    q3: float


def summarize(values: Sequence[float]) -> Optional[Summary]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return None
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return Summary(int(v.size), float(v.mean()), float(med), float(v.min()), float(v.max()), float(q1), float(q3))


@dataclass(eq=False)
class MethodReport:
    method: str
    records: list[MetricsRecord]
    stats: dict[str, Optional[Summary]]

    @property
    def diverged(self) -> list[int]:
        return [r.trial for r in self.records if r.diverged]


@dataclass(eq=False)
class MonteCarloReport:
    config: ScenarioConfig
    methods: dict[str, MethodReport]
    positions: dict = field(default_factory=dict)

    def rows(self):
        """Per-trial summary rows in deterministic (method, trial) order."""
        for name, rep in self.methods.items():
            for r in rep.records:
                yield {"method": name, "trial": r.trial, **r.values(), "diverged": r.diverged}


def aggregate(method: str, records: Sequence[MetricsRecord]) -> MethodReport:
    records = sorted(records, key=lambda r: r.trial)
    ok = [r for r in records if not r.diverged]
    stats = {m: summarize([getattr(r, m) for r in ok]) for m in METRICS}
    return MethodReport(method, records, stats)


def monte_carlo(
    cfg: ScenarioConfig,
    methods: Optional[Sequence[str]] = None,
    trial_indices: Optional[Sequence[int]] = None,
    record_positions: bool = False,
) -> MonteCarloReport:
    """All trials for each method, paired through shared per-trial seeds.

    With ``record_positions`` the report keeps every trial's ``(steps, N, n)``
    position history under ``positions[(method, trial)]``.
    """
    scn = Scenario.from_config(cfg)
    methods = tuple(cfg.methods if methods is None else methods)
    trials = range(cfg.trials) if trial_indices is None else list(trial_indices)
    reports = {}
    positions = {}
    for method in methods:
        results = [run_trial(cfg, t, method, scenario=scn, record_positions=record_positions) for t in trials]
        reports[method] = aggregate(method, [r.record for r in results])
        if record_positions:
            positions.update({(method, r.record.trial): r.positions for r in results})
    return MonteCarloReport(cfg, reports, positions)
