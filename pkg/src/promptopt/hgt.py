"""Multi-head typed-attention encoder over the prompt graph.

Per layer and head: targets are projected to query vectors with a
node-type-specific matrix, in-neighbors to key vectors likewise; the
attention logit is the bilinear form of query and key through a
relation-specific matrix, scaled by a learnable per-relation scalar over
sqrt(d); weights are a softmax over the target's full in-neighborhood.
Messages are the weighted key vectors, concatenated across heads, passed
through a shallow MLP per neighbor, and averaged. There is no separate
value projection and no residual connection.

``encode_traced`` runs the same arithmetic on the autodiff tape so any
downstream scalar can be differentiated w.r.t. every parameter and the
input embeddings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ArgumentError, NumericError, ShapeError
from .kgraph import NodeType, PromptGraph, Relation, neighbors

NODE_TYPES = (NodeType.CANDIDATE, NodeType.QUERY)
RELATIONS = (Relation.CC, Relation.QC, Relation.CQ)

# the only valid (source type, relation, target type) triplets
RELATION_TRIPLETS = {
    Relation.CC: (NodeType.CANDIDATE, NodeType.CANDIDATE),
    Relation.QC: (NodeType.QUERY, NodeType.CANDIDATE),
    Relation.CQ: (NodeType.CANDIDATE, NodeType.QUERY),
}

# module-level invocation counter; the no-graph ablation asserts it stays 0
_encode_calls = 0


def encode_call_count() -> int:
    return _encode_calls


def reset_encode_calls() -> None:
    global _encode_calls
    _encode_calls = 0


@dataclass
class HgtParams:
    layers: int
    heads: int
    dim: int
    mlp_depth: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def names(self) -> list[str]:
        return [name for name, _ in param_shapes(self.layers, self.heads, self.dim, self.mlp_depth)]

    def copy(self) -> "HgtParams":
        return HgtParams(
            layers=self.layers,
            heads=self.heads,
            dim=self.dim,
            mlp_depth=self.mlp_depth,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )


def _check_dims(d: int, heads: int, layers: int, mlp_depth: int = 1) -> None:
    if layers < 1:
        raise ArgumentError(f"layer count must be >= 1, got {layers}")
    if heads < 1:
        raise ArgumentError(f"head count must be >= 1, got {heads}")
    if mlp_depth < 1:
        raise ArgumentError(f"mlp depth must be >= 1, got {mlp_depth}")
    if d % heads != 0:
        raise ArgumentError(f"head count {heads} must divide embedding dim {d}")


def param_shapes(layers: int, heads: int, dim: int, mlp_depth: int = 1) -> list[tuple[str, tuple[int, ...]]]:
    """Named parameter inventory in canonical (initialization) order."""
    _check_dims(dim, heads, layers, mlp_depth)
    dh = dim // heads
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for l in range(layers):
        for kind in ("q", "k"):
            for node_type in NODE_TYPES:
                for h in range(heads):
                    shapes.append((f"l{l}.{kind}.{node_type.value}.h{h}", (dim, dh)))
        for rel in RELATIONS:
            for h in range(heads):
                shapes.append((f"l{l}.att.{rel.value}.h{h}", (dh, dh)))
        for rel in RELATIONS:
            shapes.append((f"l{l}.mu.{rel.value}", ()))
        for i in range(mlp_depth):
            shapes.append((f"l{l}.mlp.w{i}", (dim, dim)))
            shapes.append((f"l{l}.mlp.b{i}", (dim,)))
    return shapes


def init_params(seed: int, d: int, heads: int, layers: int, mlp_depth: int = 1) -> HgtParams:
    """Uniform[-s, s] with s = sqrt(6 / (fan_in + fan_out)); mu = 1, biases = 0."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(layers, heads, d, mlp_depth):
        if name.split(".")[1] == "mu":
            tensors[name] = np.array(1.0)
        elif ".mlp.b" in name:
            tensors[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape[0], shape[1]
            s = math.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-s, s, size=shape)
    return HgtParams(layers=layers, heads=heads, dim=d, mlp_depth=mlp_depth, tensors=tensors)


@dataclass
class GradientTape:
    """Handles onto the traced forward pass for reverse-mode gradients."""

    x_out: ad.Tensor
    x0: ad.Tensor
    params: dict[str, ad.Tensor]

    def param_grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.params.items()
        }

    def x0_grad(self) -> np.ndarray:
        return self.x0.grad if self.x0.grad is not None else np.zeros_like(self.x0.data)

    def x_out_grad(self) -> np.ndarray:
        return self.x_out.grad if self.x_out.grad is not None else np.zeros_like(self.x_out.data)


def _neighbor_groups(graph: PromptGraph) -> list[list[tuple[list[int], Relation]]]:
    """Per target: contiguous (source ids, relation) groups in neighbor order."""
    groups: list[list[tuple[list[int], Relation]]] = []
    for node in range(graph.n_candidates + 1):
        row: list[tuple[list[int], Relation]] = []
        for src, rel in neighbors(graph, node):
            if row and row[-1][1] == rel:
                row[-1][0].append(src)
            else:
                row.append(([src], rel))
        groups.append(row)
    return groups


def _encode(graph: PromptGraph, params: HgtParams, traced: bool, collect_attention: bool):
    global _encode_calls
    _encode_calls += 1
    n = graph.n_candidates
    d = params.dim
    if graph.x.shape[1] != d:
        raise ShapeError(f"graph embeddings have dim {graph.x.shape[1]}, params expect {d}")
    _check_dims(d, params.heads, params.layers, params.mlp_depth)
    sqrt_d = math.sqrt(d)

    x0 = ad.Tensor(graph.x, requires_grad=traced)
    tensors = {name: ad.Tensor(arr, requires_grad=traced) for name, arr in params.tensors.items()}
    groups = _neighbor_groups(graph)
    attention: list[list[np.ndarray]] = []

    current = x0
    for l in range(params.layers):
        cand_rows = ad.gather_rows(current, list(range(n)))
        query_row = ad.gather_rows(current, [n])
        keys = []
        queries = []
        for h in range(params.heads):
            keys.append(
                ad.concat(
                    [
                        cand_rows @ tensors[f"l{l}.k.candidate.h{h}"],
                        query_row @ tensors[f"l{l}.k.query.h{h}"],
                    ],
                    axis=0,
                )
            )
            queries.append(
                ad.concat(
                    [
                        cand_rows @ tensors[f"l{l}.q.candidate.h{h}"],
                        query_row @ tensors[f"l{l}.q.query.h{h}"],
                    ],
                    axis=0,
                )
            )

        layer_attention: list[np.ndarray] = []
        new_rows = []
        for j in range(n + 1):
            nbr_ids = [src for ids, _ in groups[j] for src in ids]
            head_msgs = []
            head_weights = []
            for h in range(params.heads):
                q_j = ad.reshape(ad.gather_rows(queries[h], [j]), (params.head_dim,))
                parts = []
                for ids, rel in groups[j]:
                    k_group = ad.gather_rows(keys[h], ids)
                    raw = (q_j @ tensors[f"l{l}.att.{rel.value}.h{h}"]) @ ad.transpose(k_group)
                    parts.append(ad.div(ad.mul(raw, tensors[f"l{l}.mu.{rel.value}"]), sqrt_d))
                logits = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
                if not np.all(np.isfinite(logits.data)):
                    raise NumericError(f"non-finite attention logit at layer {l}, head {h}")
                weights = ad.softmax1d(logits)
                if collect_attention:
                    head_weights.append(weights.data.copy())
                k_nbrs = ad.gather_rows(keys[h], nbr_ids)
                head_msgs.append(ad.mul(ad.reshape(weights, (len(nbr_ids), 1)), k_nbrs))
            messages = head_msgs[0] if params.heads == 1 else ad.concat(head_msgs, axis=1)
            hidden = messages
            for i in range(params.mlp_depth):
                hidden = ad.add(hidden @ tensors[f"l{l}.mlp.w{i}"], tensors[f"l{l}.mlp.b{i}"])
                if i < params.mlp_depth - 1:
                    hidden = ad.tanh(hidden)
            new_rows.append(ad.tmean(hidden, axis=0))
            if collect_attention:
                layer_attention.append(np.stack(head_weights))
        current = ad.stack(new_rows, axis=0)
        if not np.all(np.isfinite(current.data)):
            raise NumericError(f"non-finite node embedding after layer {l}")
        if collect_attention:
            attention.append(layer_attention)

    return current, x0, tensors, attention


def encode(graph: PromptGraph, params: HgtParams, return_attention: bool = False):
    """Encoded (N+1, d) embeddings; optionally also per-layer attention weights."""
    out, _, _, attention = _encode(graph, params, traced=False, collect_attention=return_attention)
    if return_attention:
        return out.data.copy(), attention
    return out.data.copy()


def encode_traced(graph: PromptGraph, params: HgtParams) -> tuple[np.ndarray, GradientTape]:
    """Same forward values as encode, plus a tape for backward passes."""
    out, x0, tensors, _ = _encode(graph, params, traced=True, collect_attention=False)
    return out.data.copy(), GradientTape(x_out=out, x0=x0, params=tensors)
