"""Task dependency DAG model: subtasks, edges, coupling, validation, ingestion.

A task decomposes into a DAG of subtasks.  Each vertex carries an estimated
token weight; each edge carries a coupling strength in [0, 1] describing how
much shared context the dependent subtask needs from its prerequisite.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

DEFAULT_WEIGHT = 500.0


class CouplingLabel(enum.Enum):
    """Discrete coupling levels declared by the task decomposer."""

    NONE = "none"
    WEAK = "weak"
    STRONG = "strong"
    CRITICAL = "critical"


_COUPLING_VALUES = {
    CouplingLabel.NONE: 0.0,
    CouplingLabel.WEAK: 0.3,
    CouplingLabel.STRONG: 0.7,
    CouplingLabel.CRITICAL: 1.0,
}


def coupling_from_label(label: CouplingLabel | str) -> float:
    """Map a declared coupling label to its numeric strength in [0, 1]."""
    if isinstance(label, str):
        try:
            label = CouplingLabel(label.lower())
        except ValueError:
            raise ValueError(f"unknown coupling label: {label!r}") from None
    return _COUPLING_VALUES[label]


class DagError(Exception):
    """Base error for DAG construction and ingestion problems."""


class ParseError(DagError):
    """A decomposition record is malformed or referentially broken."""


class ValidationError(DagError):
    """A DAG failed validation where a valid DAG is required."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(v.detail for v in report.violations))


@dataclass(frozen=True)
class Subtask:
    id: str
    description: str = ""
    weight: float = DEFAULT_WEIGHT
    declared_coupling: CouplingLabel = CouplingLabel.NONE


@dataclass(frozen=True)
class TaskDag:
    """Immutable dependency DAG over subtasks.

    ``edges`` are (prerequisite, dependent) id pairs; ``coupling`` maps each
    edge to a strength in [0, 1].  Construct via :func:`parse_decomposition`,
    :func:`load_dag`, or directly, then check with :func:`validate_dag`.
    """

    vertices: tuple[Subtask, ...]
    edges: tuple[tuple[str, str], ...] = ()
    coupling: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "coupling", dict(self.coupling))

    @property
    def vertex_ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.vertices)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def subtask(self, vid: str) -> Subtask:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def predecessors(self, vid: str) -> list[str]:
        return [u for (u, v) in self.edges if v == vid]

    def successors(self, vid: str) -> list[str]:
        return [v for (u, v) in self.edges if u == vid]

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {v.id: [] for v in self.vertices}
        for u, v in self.edges:
            adj[u].append(v)
        return adj


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate_id | bad_weight | dangling_edge | self_edge | duplicate_edge | coupling_range | missing_coupling | cycle
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()


def validate_dag(dag: TaskDag) -> ValidationReport:
    """Check every structural invariant; violations are data, not exceptions."""
    violations: list[Violation] = []

    seen: set[str] = set()
    for v in dag.vertices:
        if not v.id:
            violations.append(Violation("duplicate_id", "empty vertex id"))
        elif v.id in seen:
            violations.append(Violation("duplicate_id", f"duplicate vertex id {v.id!r}"))
        seen.add(v.id)
        if not v.weight > 0:
            violations.append(Violation("bad_weight", f"vertex {v.id!r} has non-positive weight {v.weight}"))

    ids = {v.id for v in dag.vertices}
    seen_edges: set[tuple[str, str]] = set()
    for edge in dag.edges:
        u, v = edge
        if u not in ids or v not in ids:
            violations.append(Violation("dangling_edge", f"edge {edge} references unknown vertex"))
            continue
        if u == v:
            violations.append(Violation("self_edge", f"self-edge on {u!r}"))
        if edge in seen_edges:
            violations.append(Violation("duplicate_edge", f"duplicate edge {edge}"))
        seen_edges.add(edge)
        if edge not in dag.coupling:
            violations.append(Violation("missing_coupling", f"edge {edge} has no coupling value"))
        else:
            c = dag.coupling[edge]
            if not (0.0 <= c <= 1.0):
                violations.append(Violation("coupling_range", f"edge {edge} coupling {c} out of [0, 1]"))

    cycle = _find_cycle(ids, [e for e in dag.edges if e[0] in ids and e[1] in ids])
    if cycle is not None:
        violations.append(Violation("cycle", "cycle " + " -> ".join(cycle)))

    return ValidationReport(ok=not violations, violations=tuple(violations))


def require_valid(dag: TaskDag) -> None:
    """Raise :class:`ValidationError` unless the DAG passes validation."""
    report = validate_dag(dag)
    if not report.ok:
        raise ValidationError(report)


def _find_cycle(ids: set[str], edges: Iterable[tuple[str, str]]) -> list[str] | None:
    """Return a witness cycle [a, ..., a] via iterative DFS, or None."""
    adj: dict[str, list[str]] = {i: [] for i in ids}
    for u, v in edges:
        if u == v:
            return [u, u]
        adj[u].append(v)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {i: WHITE for i in ids}
    parent: dict[str, str] = {}
    for root in sorted(ids):
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(root, 0)]
        color[root] = GRAY
        while stack:
            node, idx = stack[-1]
            if idx < len(adj[node]):
                stack[-1] = (node, idx + 1)
                nxt = adj[node][idx]
                if color[nxt] == GRAY:
                    # unwind the gray path to produce the witness
                    path = [nxt]
                    cur = node
                    while cur != nxt:
                        path.append(cur)
                        cur = parent[cur]
                    path.append(nxt)
                    path[1:-1] = path[1:-1][::-1]
                    return path
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = node
                    stack.append((nxt, 0))
            else:
                color[node] = BLACK
                stack.pop()
    return None


# ---------------------------------------------------------------------------
# Ingestion: decomposer records and the canonical serialized form
# ---------------------------------------------------------------------------

_RECORD_FIELDS = ("id", "description", "depends_on", "coupling")


def parse_decomposition(records: Sequence[Mapping]) -> TaskDag:
    """Build a TaskDag from decomposer output records.

    Each record carries ``id``, ``description``, ``depends_on``, ``coupling``
    and ``estimated_tokens``.  Every (dep, id) pair becomes an edge whose
    coupling value comes from the *dependent* record's label.  Records
    missing ``estimated_tokens`` default to 500 with a logged warning.
    """
    vertices: list[Subtask] = []
    edges: list[tuple[str, str]] = []
    coupling: dict[tuple[str, str], float] = {}
    declared: set[str] = set()

    for i, rec in enumerate(records):
        for f in _RECORD_FIELDS:
            if f not in rec:
                raise ParseError(f"record {i} ({rec.get('id', '?')!r}) missing field {f!r}")
        vid = rec["id"]
        if not isinstance(vid, str) or not vid:
            raise ParseError(f"record {i} has invalid id {vid!r}")
        try:
            label = CouplingLabel(str(rec["coupling"]).lower())
        except ValueError:
            raise ParseError(
                f"record {vid!r} has unknown coupling label {rec['coupling']!r}"
            ) from None
        if "estimated_tokens" in rec and rec["estimated_tokens"] is not None:
            weight = float(rec["estimated_tokens"])
        else:
            weight = DEFAULT_WEIGHT
            logger.warning("record %r missing estimated_tokens; defaulting to %s", vid, weight)
        vertices.append(Subtask(id=vid, description=rec["description"], weight=weight, declared_coupling=label))
        declared.add(vid)

    for rec in records:
        vid = rec["id"]
        c = coupling_from_label(CouplingLabel(str(rec["coupling"]).lower()))
        for dep in rec["depends_on"]:
            if dep not in declared:
                raise ParseError(f"record {vid!r} depends on undeclared id {dep!r}")
            edges.append((dep, vid))
            coupling[(dep, vid)] = c

    dag = TaskDag(vertices=tuple(vertices), edges=tuple(edges), coupling=coupling)
    require_valid(dag)
    return dag


def serialize_dag(dag: TaskDag) -> dict:
    """Canonical JSON-ready form with explicit per-edge couplings."""
    return {
        "vertices": [
            {
                "id": v.id,
                "description": v.description,
                "weight": v.weight,
                "declared_coupling": v.declared_coupling.value,
            }
            for v in dag.vertices
        ],
        "edges": [
            {"source": u, "target": v, "coupling": dag.coupling[(u, v)]}
            for (u, v) in dag.edges
        ],
    }


def deserialize_dag(doc: Mapping) -> TaskDag:
    """Inverse of :func:`serialize_dag`; validates the result."""
    try:
        vertices = tuple(
            Subtask(
                id=rec["id"],
                description=rec.get("description", ""),
                weight=float(rec.get("weight", DEFAULT_WEIGHT)),
                declared_coupling=CouplingLabel(rec.get("declared_coupling", "none")),
            )
            for rec in doc["vertices"]
        )
        edges = tuple((e["source"], e["target"]) for e in doc["edges"])
        coupling = {(e["source"], e["target"]): float(e["coupling"]) for e in doc["edges"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed canonical DAG document: {exc}") from exc
    dag = TaskDag(vertices=vertices, edges=edges, coupling=coupling)
    require_valid(dag)
    return dag


def load_dag(path: str) -> TaskDag:
    """Load either a decomposer-record array or a canonical DAG document."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return ingest(doc)


def ingest(doc) -> TaskDag:
    """Dispatch on document shape: list of records vs canonical object."""
    if isinstance(doc, list):
        return parse_decomposition(doc)
    if isinstance(doc, Mapping) and "vertices" in doc:
        return deserialize_dag(doc)
    raise ParseError("document is neither a record array nor a canonical DAG object")
