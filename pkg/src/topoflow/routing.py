"""Threshold-based topology routing plus dev-split threshold calibration.

The router maps DAG structural metrics to one of four canonical topologies:

* Parallel      - every subtask concurrent, outputs merged post-hoc
* Sequential    - topological order, each subtask sees prior context
* Hierarchical  - lead agent delegates to sub-agents and reconciles
* Hybrid        - topological layers run in parallel, layers in sequence

Branch order and strict comparisons are load-bearing: the empty-edge and
width-one cases are forced, high coupling with many subtasks goes
hierarchical, wide low-coupling DAGs go parallel, everything else hybrid.
"""

from __future__ import annotations

import enum
import math
import random
import time
from dataclasses import dataclass, replace

from .dag import TaskDag
from .metrics import DagMetrics, WidthMode, compute_metrics, topological_layers

DEFAULT_THETA_OMEGA = 0.5
DEFAULT_THETA_GAMMA = 0.6
DEFAULT_THETA_DELTA = 5
GAMMA_TIEBREAK = 0.6

CALIBRATION_GRID = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


class TopologyKind(enum.Enum):
    PARALLEL = "parallel"
    SEQUENTIAL = "sequential"
    HIERARCHICAL = "hierarchical"
    HYBRID = "hybrid"


TOPOLOGY_ORDER = (
    TopologyKind.PARALLEL,
    TopologyKind.SEQUENTIAL,
    TopologyKind.HIERARCHICAL,
    TopologyKind.HYBRID,
)


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind
    stages: tuple[frozenset[str], ...] | None = None

    def __post_init__(self):
        if (self.kind is TopologyKind.HYBRID) != (self.stages is not None):
            raise ValueError("stages must be present exactly when kind is HYBRID")


class FiredRule(enum.Enum):
    EMPTY_EDGE_SET = "empty_edge_set"
    WIDTH_ONE = "width_one"
    HIGH_COUPLING = "high_coupling_many_subtasks"
    WIDE_LOW_COUPLING = "wide_low_coupling"
    HYBRID_DEFAULT = "hybrid_default"


@dataclass(frozen=True)
class RouterConfig:
    theta_omega: float = DEFAULT_THETA_OMEGA
    theta_gamma: float = DEFAULT_THETA_GAMMA
    theta_delta: int = DEFAULT_THETA_DELTA
    width_mode: WidthMode = WidthMode.APPROXIMATE

    def __post_init__(self):
        if not (0.0 < self.theta_omega <= 1.0):
            raise ValueError(f"theta_omega {self.theta_omega} out of (0, 1]")
        if not (0.0 <= self.theta_gamma <= 1.0):
            raise ValueError(f"theta_gamma {self.theta_gamma} out of [0, 1]")
        if self.theta_delta < 1:
            raise ValueError(f"theta_delta {self.theta_delta} must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "RouterConfig":
        kwargs = dict(doc)
        if "width_mode" in kwargs:
            kwargs["width_mode"] = WidthMode(kwargs["width_mode"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "theta_omega": self.theta_omega,
            "theta_gamma": self.theta_gamma,
            "theta_delta": self.theta_delta,
            "width_mode": self.width_mode.value,
        }


@dataclass(frozen=True)
class RoutingDecision:
    topology: Topology
    metrics: DagMetrics
    fired_rule: FiredRule
    elapsed: float  # seconds
    gamma_used: float

    def to_record(self) -> dict:
        return {
            "topology": self.topology.kind.value,
            "stages": [sorted(s) for s in self.topology.stages] if self.topology.stages else None,
            "fired_rule": self.fired_rule.value,
            "gamma_used": self.gamma_used,
            "metrics": {
                "width_exact": self.metrics.width_exact,
                "width_approx": self.metrics.width_approx,
                "depth": self.metrics.depth,
                "coupling_density": self.metrics.coupling_density,
                "parallelism_ratio": self.metrics.parallelism_ratio,
                "vertex_count": self.metrics.vertex_count,
                "edge_count": self.metrics.edge_count,
                "width_mode": self.metrics.width_mode.value,
            },
        }


def route(
    dag: TaskDag,
    config: RouterConfig | None = None,
    *,
    gamma_override: float | None = None,
) -> RoutingDecision:
    """Route a valid DAG to its execution topology.

    ``gamma_override`` substitutes the coupling density used by the decision
    (the synthesis retry path raises it in 0.2 steps) without touching the
    DAG's own edge couplings.
    """
    config = config or RouterConfig()
    start = time.perf_counter()
    metrics = compute_metrics(dag, mode=config.width_mode)
    gamma = metrics.coupling_density if gamma_override is None else gamma_override
    omega = metrics.width_exact
    r = omega / metrics.vertex_count if metrics.vertex_count else 0.0

    if metrics.edge_count == 0:
        topology, rule = Topology(TopologyKind.PARALLEL), FiredRule.EMPTY_EDGE_SET
    elif omega == 1:
        topology, rule = Topology(TopologyKind.SEQUENTIAL), FiredRule.WIDTH_ONE
    elif gamma > config.theta_gamma and metrics.vertex_count > config.theta_delta:
        topology, rule = Topology(TopologyKind.HIERARCHICAL), FiredRule.HIGH_COUPLING
    elif r > config.theta_omega and gamma <= config.theta_gamma:
        topology, rule = Topology(TopologyKind.PARALLEL), FiredRule.WIDE_LOW_COUPLING
    else:
        stages = tuple(frozenset(s) for s in topological_layers(dag))
        topology, rule = Topology(TopologyKind.HYBRID, stages=stages), FiredRule.HYBRID_DEFAULT

    elapsed = time.perf_counter() - start
    return RoutingDecision(
        topology=topology,
        metrics=metrics,
        fired_rule=rule,
        elapsed=elapsed,
        gamma_used=gamma,
    )


def split_dev_test(
    task_ids: list[str], fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """Seeded split: ceil(fraction * n) ids become dev, the rest test."""
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction {fraction} out of (0, 1)")
    n_dev = math.ceil(fraction * len(task_ids))
    rng = random.Random(seed)
    dev_ix = set(rng.sample(range(len(task_ids)), n_dev))
    dev = [tid for i, tid in enumerate(task_ids) if i in dev_ix]
    test = [tid for i, tid in enumerate(task_ids) if i not in dev_ix]
    return dev, test


def calibrate_gamma(
    dev_tasks: list[tuple[TaskDag, dict[TopologyKind, float]]],
    grid: tuple[float, ...] = CALIBRATION_GRID,
    config: RouterConfig | None = None,
) -> tuple[float, dict[float, float]]:
    """Grid-search theta_gamma on dev tasks with per-topology quality scores.

    Each candidate routes every dev task and averages the quality of the
    routed topology.  Ties break toward the 0.6 default, then the larger
    candidate.
    """
    if not dev_tasks:
        raise ValueError("dev_tasks must be nonempty")
    if not grid:
        raise ValueError("grid must be nonempty")
    base = config or RouterConfig()
    table: dict[float, float] = {}
    for candidate in grid:
        cfg = replace(base, theta_gamma=candidate)
        total = 0.0
        for dag, scores in dev_tasks:
            decision = route(dag, cfg)
            total += scores[decision.topology.kind]
        table[candidate] = total / len(dev_tasks)

    def rank(candidate: float) -> tuple[float, int, float]:
        return (table[candidate], 1 if candidate == GAMMA_TIEBREAK else 0, candidate)

    chosen = max(grid, key=rank)
    return chosen, table


class TopologyRouter:
    """Estimator-style wrapper: ``fit`` calibrates theta_gamma, ``predict`` routes.

    Follows the scikit-learn parameter protocol (``get_params`` /
    ``set_params``, trailing-underscore fitted attributes) so it can sit in
    ecosystem tooling, without depending on scikit-learn itself.
    """

    def __init__(
        self,
        theta_omega: float = DEFAULT_THETA_OMEGA,
        theta_gamma: float = DEFAULT_THETA_GAMMA,
        theta_delta: int = DEFAULT_THETA_DELTA,
        width_mode: str = "approximate",
        grid: tuple[float, ...] = CALIBRATION_GRID,
    ):
        self.theta_omega = theta_omega
        self.theta_gamma = theta_gamma
        self.theta_delta = theta_delta
        self.width_mode = width_mode
        self.grid = grid

    def get_params(self, deep: bool = True) -> dict:
        return {
            "theta_omega": self.theta_omega,
            "theta_gamma": self.theta_gamma,
            "theta_delta": self.theta_delta,
            "width_mode": self.width_mode,
            "grid": self.grid,
        }

    def set_params(self, **params) -> "TopologyRouter":
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def _config(self) -> RouterConfig:
        gamma = getattr(self, "theta_gamma_", self.theta_gamma)
        return RouterConfig(
            theta_omega=self.theta_omega,
            theta_gamma=gamma,
            theta_delta=self.theta_delta,
            width_mode=WidthMode(self.width_mode),
        )

    def fit(self, X: list[TaskDag], y: list[dict[TopologyKind, float]]) -> "TopologyRouter":
        """Calibrate theta_gamma from dev DAGs and per-topology quality scores."""
        if len(X) != len(y):
            raise ValueError("X and y must have equal length")
        chosen, table = calibrate_gamma(
            list(zip(X, y)),
            grid=self.grid,
            config=RouterConfig(
                theta_omega=self.theta_omega,
                theta_gamma=self.theta_gamma,
                theta_delta=self.theta_delta,
                width_mode=WidthMode(self.width_mode),
            ),
        )
        self.theta_gamma_ = chosen
        self.calibration_table_ = table
        return self

    def route(self, dag: TaskDag, *, gamma_override: float | None = None) -> RoutingDecision:
        return route(dag, self._config(), gamma_override=gamma_override)

    def predict(self, X: list[TaskDag]) -> list[TopologyKind]:
        return [self.route(dag).topology.kind for dag in X]
