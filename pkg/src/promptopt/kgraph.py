"""Typed graph over the candidate pool and one user query.

Nodes: candidates 0..N-1 plus the query node N. Edges: every ordered
candidate pair (cc), query to each candidate (qc), each candidate to the
query (cq). Row i of the embedding matrix holds candidate i; the last row
holds the query.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import CandidateExample
from .embedder import Embedder
from .errors import ArgumentError


class Relation(str, Enum):
    CC = "cc"  # candidate -> candidate
    QC = "qc"  # query -> candidate
    CQ = "cq"  # candidate -> query


class NodeType(str, Enum):
    CANDIDATE = "candidate"
    QUERY = "query"


@dataclass(frozen=True)
class PromptGraph:
    candidates: tuple[CandidateExample, ...]
    query: str
    edges: tuple[tuple[int, Relation, int], ...]
    x: np.ndarray  # (N+1, d) float64; row N is the query

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def query_node(self) -> int:
        return len(self.candidates)

    def node_type(self, node: int) -> NodeType:
        self._check_node(node)
        return NodeType.QUERY if node == self.query_node else NodeType.CANDIDATE

    def _check_node(self, node: int) -> None:
        if not (0 <= node <= self.query_node):
            raise ArgumentError(f"unknown node id {node}; graph has nodes 0..{self.query_node}")


def _edge_set(n: int) -> tuple[tuple[int, Relation, int], ...]:
    edges: list[tuple[int, Relation, int]] = []
    for i in range(n):
        for j in range(n):
            if i != j:
                edges.append((i, Relation.CC, j))
    edges.extend((n, Relation.QC, i) for i in range(n))
    edges.extend((i, Relation.CQ, n) for i in range(n))
    return tuple(edges)


def build_graph(pool: list[CandidateExample], query: str, embedder: Embedder) -> PromptGraph:
    """Embed pool and query and assemble the full typed edge set."""
    x = np.empty((len(pool) + 1, embedder.dim), dtype=np.float64)
    for i, example in enumerate(pool):
        x[i] = embedder.embed_example(example)
    x[len(pool)] = embedder.embed_text(query)
    return assemble_graph(pool, query, x)


def assemble_graph(pool: list[CandidateExample] | tuple[CandidateExample, ...], query: str, x: np.ndarray) -> PromptGraph:
    """Build the graph from an already-computed embedding matrix.

    Used by the trainer, which caches candidate rows across queries.
    """
    if len(pool) < 1:
        raise ArgumentError("candidate pool must be non-empty")
    if not query or not query.strip():
        raise ArgumentError("query must be non-empty")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != len(pool) + 1:
        raise ArgumentError(f"embedding matrix has {x.shape[0]} rows, expected {len(pool) + 1}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("embedding matrix contains non-finite entries")
    x = x.copy()
    x.setflags(write=False)
    return PromptGraph(candidates=tuple(pool), query=query, edges=_edge_set(len(pool)), x=x)


def neighbors(graph: PromptGraph, node: int) -> list[tuple[int, Relation]]:
    """In-neighbors of a node as (source, relation), ordered by (relation, source)."""
    graph._check_node(node)
    found = [(src, rel) for (src, rel, dst) in graph.edges if dst == node]
    found.sort(key=lambda item: (item[1].value, item[0]))
    return found


def graph_summary(graph: PromptGraph, full: bool = False, text_width: int = 80) -> dict:
    """JSON-friendly dump used by the inspect-graph command and service."""

    def clip(text: str) -> str:
        return text if len(text) <= text_width else text[: text_width - 3] + "..."

    nodes = [
        {"id": i, "type": NodeType.CANDIDATE.value, "query": clip(ex.query), "response": clip(ex.response)}
        for i, ex in enumerate(graph.candidates)
    ]
    nodes.append({"id": graph.query_node, "type": NodeType.QUERY.value, "query": clip(graph.query)})
    out = {
        "nodes": nodes,
        "edges": [[src, rel.value, dst] for (src, rel, dst) in graph.edges],
        "x_shape": list(graph.x.shape),
    }
    if full:
        out["x"] = graph.x.tolist()
    return out
