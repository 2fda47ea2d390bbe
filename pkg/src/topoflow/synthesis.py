"""Output synthesis: consistency scoring and the adaptive re-routing loop.

Parallel agent outputs are scored for semantic agreement by mean pairwise
embedding cosine similarity.  Consistent outputs go to a merge agent;
inconsistent ones to an arbiter, and if the arbiter's candidate still
disagrees with the originals the task is re-routed with the coupling
estimate raised by 0.2, which bounds the loop.
"""

from __future__ import annotations

import enum
import hashlib
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

from .backends import AgentBackend, AgentOutput, BackendError
from .routing import Topology, TopologyKind

GAMMA_STEP = 0.2
DEFAULT_THETA_CS = 0.8


def _template(name: str) -> str:
    return resources.files("topoflow.templates").joinpath(name).read_text(encoding="utf-8")


MERGE_PREFIX = _template("merge.txt")
ARBITER_PREFIX = _template("arbiter.txt")


class Embedder(ABC):
    dimension: int

    @abstractmethod
    def embed(self, text: str) -> list[float]:
        """Deterministic fixed-dimension embedding of the text."""


class HashedEmbedder(Embedder):
    """Hashed bag-of-tokens embedding, L2-normalized; fully offline and
    deterministic (md5 token hashing, not the salted builtin hash)."""

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self.dimension
        for token in text.lower().split():
            ix = int.from_bytes(hashlib.md5(token.encode()).digest()[:8], "big") % self.dimension
            vec[ix] += 1.0
        norm = math.sqrt(sum(x * x for x in vec))
        if norm > 0:
            vec = [x / norm for x in vec]
        return vec


class FixtureEmbedder(Embedder):
    """Maps exact texts to preset vectors; for constructing known cosines in tests."""

    def __init__(self, vectors: dict[str, list[float]]):
        self.vectors = vectors
        self.dimension = len(next(iter(vectors.values())))

    def embed(self, text: str) -> list[float]:
        return self.vectors[text]


def cosine(a: list[float], b: list[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def consistency_score(outputs: list[str], embedder: Embedder) -> float:
    """Mean pairwise cosine similarity; a single output is self-consistent (1.0)."""
    if not outputs:
        raise ValueError("outputs must be nonempty")
    if len(outputs) == 1:
        return 1.0
    vecs = [embedder.embed(o) for o in outputs]
    total = 0.0
    pairs = 0
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            total += cosine(vecs[i], vecs[j])
            pairs += 1
    return total / pairs


def consistency_of_candidate(candidate: str, originals: list[str], embedder: Embedder) -> float:
    """Mean cosine similarity between the candidate and each original output."""
    if not originals:
        raise ValueError("originals must be nonempty")
    cand = embedder.embed(candidate)
    return sum(cosine(cand, embedder.embed(o)) for o in originals) / len(originals)


def iteration_bound(gamma0: float) -> int:
    """Re-routing raises gamma by 0.2 per pass, so passes are bounded by
    ceil((1 - gamma0) / 0.2); at least one pass always runs."""
    return max(1, math.ceil(round((1.0 - gamma0) / GAMMA_STEP, 9)))


@dataclass(frozen=True)
class SynthesisConfig:
    theta_cs: float = DEFAULT_THETA_CS
    gamma0: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta_cs <= 1.0):
            raise ValueError(f"theta_cs {self.theta_cs} out of [0, 1]")


class SynthesisPath(enum.Enum):
    SEQUENTIAL_LAST = "sequential_last"
    MERGE = "merge"
    ARBITER = "arbiter"
    ESCALATED = "escalated"


@dataclass(frozen=True)
class SynthesisResult:
    final_text: str
    consistency: float
    iterations: int
    route_trail: tuple[tuple[float, TopologyKind], ...]
    escalated: bool
    path: SynthesisPath
    agent_calls: tuple[AgentOutput, ...] = ()

    def to_record(self) -> dict:
        return {
            "consistency": self.consistency,
            "iterations": self.iterations,
            "route_trail": [[g, k.value] for g, k in self.route_trail],
            "escalated": self.escalated,
            "path": self.path.value,
        }


class SynthesisError(Exception):
    """Merge or arbiter backend failure; carries the trail accumulated so far."""

    def __init__(self, message: str, route_trail: tuple[tuple[float, TopologyKind], ...]):
        super().__init__(message)
        self.route_trail = route_trail


RerouteFn = Callable[[float], tuple[list[str], Topology]]


def synthesize(
    outputs: list[str],
    topology: Topology,
    config: SynthesisConfig,
    merge_agent: AgentBackend,
    arbiter_agent: AgentBackend,
    reroute: RerouteFn | None = None,
    embedder: Embedder | None = None,
) -> SynthesisResult:
    """Adaptive synthesis with bounded re-routing.

    Sequential topologies return their last output directly.  Otherwise a
    consistency check picks merge vs arbiter; an arbiter candidate that is
    still inconsistent with the originals triggers a re-route at
    gamma + 0.2 (capped at 1.0) until the iteration bound is exhausted.
    """
    if not outputs:
        raise ValueError("outputs must be nonempty")
    embedder = embedder or HashedEmbedder()
    bound = iteration_bound(config.gamma0)
    gamma = config.gamma0
    trail: list[tuple[float, TopologyKind]] = []
    calls: list[AgentOutput] = []
    current_outputs = list(outputs)
    current_topology = topology
    iterations = 0

    while True:
        iterations += 1
        trail.append((gamma, current_topology.kind))

        if current_topology.kind is TopologyKind.SEQUENTIAL:
            return SynthesisResult(
                final_text=current_outputs[-1],
                consistency=consistency_score(current_outputs, embedder),
                iterations=iterations,
                route_trail=tuple(trail),
                escalated=False,
                path=SynthesisPath.SEQUENTIAL_LAST,
                agent_calls=tuple(calls),
            )

        cs = consistency_score(current_outputs, embedder)
        joined = "\n---\n".join(current_outputs)
        if cs >= config.theta_cs:
            try:
                merged = merge_agent.invoke(MERGE_PREFIX + joined, "", tag="merge")
            except BackendError as exc:
                raise SynthesisError(f"merge agent failed: {exc}", tuple(trail)) from exc
            calls.append(merged.with_subtask("merge"))
            return SynthesisResult(
                final_text=merged.text,
                consistency=cs,
                iterations=iterations,
                route_trail=tuple(trail),
                escalated=False,
                path=SynthesisPath.MERGE,
                agent_calls=tuple(calls),
            )

        try:
            candidate = arbiter_agent.invoke(ARBITER_PREFIX + joined, "", tag="arbiter")
        except BackendError as exc:
            raise SynthesisError(f"arbiter agent failed: {exc}", tuple(trail)) from exc
        calls.append(candidate.with_subtask("arbiter"))
        cand_cs = consistency_of_candidate(candidate.text, current_outputs, embedder)
        if cand_cs >= config.theta_cs:
            return SynthesisResult(
                final_text=candidate.text,
                consistency=cand_cs,
                iterations=iterations,
                route_trail=tuple(trail),
                escalated=True,
                path=SynthesisPath.ARBITER,
                agent_calls=tuple(calls),
            )

        if iterations >= bound or gamma >= 1.0 or reroute is None:
            return SynthesisResult(
                final_text=candidate.text,
                consistency=cand_cs,
                iterations=iterations,
                route_trail=tuple(trail),
                escalated=True,
                path=SynthesisPath.ESCALATED,
                agent_calls=tuple(calls),
            )

        gamma = min(round(gamma + GAMMA_STEP, 9), 1.0)
        current_outputs, current_topology = reroute(gamma)
