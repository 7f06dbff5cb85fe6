import math

import numpy as np
import pytest

from promptopt.corpus import CandidateExample
from promptopt.embedder import EmbedderConfig, HashEmbedder
from promptopt.errors import ArgumentError, ShapeError
from promptopt.hgt import (
    GradientTape,
    encode,
    encode_call_count,
    encode_traced,
    init_params,
    param_shapes,
    reset_encode_calls,
)
from promptopt.kgraph import build_graph

from promptopt import autodiff as ad


def make_graph(n, d, seed=0):
    pool = [CandidateExample(f"query number {i}", None, f"answer text {i}") for i in range(n)]
    graph = build_graph(pool, "the held out question", HashEmbedder(EmbedderConfig(dim=d)))
    # replace hash embeddings with dense random values for numeric coverage
    x = np.random.default_rng(seed).normal(size=(n + 1, d))
    from promptopt.kgraph import assemble_graph

    return assemble_graph(pool, "the held out question", x)


# --- independent straight-line oracle (written before the implementation) ---

def oracle_forward(x0, tensors, n, d, heads, layers, mlp_depth=1):
    """Dense re-statement of the layer equations, one neighbor at a time."""
    dh = d // heads
    node_type = ["candidate"] * n + ["query"]

    def in_neighbors(j):
        # construction rules: every other candidate via cc plus the query via
        # qc for candidate targets; every candidate via cq for the query node
        if j < n:
            return [(i, "cc") for i in range(n) if i != j] + [(n, "qc")]
        return [(i, "cq") for i in range(n)]

    x = x0.copy()
    for l in range(layers):
        new_x = np.zeros_like(x)
        for j in range(n + 1):
            nbrs = in_neighbors(j)
            per_head_weights = []
            per_head_keys = []
            for h in range(heads):
                q_j = x[j] @ tensors[f"l{l}.q.{node_type[j]}.h{h}"]
                logits = []
                keys = []
                for i, rel in nbrs:
                    k_i = x[i] @ tensors[f"l{l}.k.{node_type[i]}.h{h}"]
                    keys.append(k_i)
                    att = q_j @ tensors[f"l{l}.att.{rel}.h{h}"] @ k_i
                    logits.append(att * float(tensors[f"l{l}.mu.{rel}"]) / math.sqrt(d))
                logits = np.array(logits)
                e = np.exp(logits - logits.max())
                per_head_weights.append(e / e.sum())
                per_head_keys.append(keys)
            acc = np.zeros(d)
            for idx in range(len(nbrs)):
                message = np.concatenate(
                    [per_head_weights[h][idx] * per_head_keys[h][idx] for h in range(heads)]
                )
                hidden = message
                for m in range(mlp_depth):
                    hidden = hidden @ tensors[f"l{l}.mlp.w{m}"] + tensors[f"l{l}.mlp.b{m}"]
                    if m < mlp_depth - 1:
                        hidden = np.tanh(hidden)
                acc += hidden
            new_x[j] = acc / len(nbrs)
        x = new_x
    return x


def test_forward_matches_independent_oracle():
    n, d, heads, layers = 2, 4, 2, 1
    graph = make_graph(n, d, seed=7)
    params = init_params(42, d, heads, layers)
    got = encode(graph, params)
    want = oracle_forward(graph.x, params.tensors, n, d, heads, layers)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_forward_matches_oracle_two_layers_more_heads():
    n, d, heads, layers = 3, 8, 2, 2
    graph = make_graph(n, d, seed=1)
    params = init_params(5, d, heads, layers)
    np.testing.assert_allclose(
        encode(graph, params), oracle_forward(graph.x, params.tensors, n, d, heads, layers), atol=1e-10
    )


def test_zero_params_collapse_to_bias():
    n, d, heads = 3, 4, 2
    graph = make_graph(n, d)
    params = init_params(0, d, heads, 1)
    for name in params.tensors:
        if name.endswith("mlp.b0"):
            params.tensors[name] = np.array([1.0, -2.0, 3.0, 0.5])
        elif not name.endswith((".mu.cc", ".mu.qc", ".mu.cq")):
            params.tensors[name] = np.zeros_like(params.tensors[name])
    out, attention = encode(graph, params, return_attention=True)
    for j in range(n + 1):
        np.testing.assert_allclose(out[j], [1.0, -2.0, 3.0, 0.5], atol=0)
        degree = n if j < n else n
        np.testing.assert_allclose(attention[0][j], np.full((heads, degree), 1.0 / degree), atol=1e-15)


def test_indivisible_heads_rejected():
    with pytest.raises(ArgumentError):
        init_params(0, 8, 3, 1)
    graph = make_graph(2, 8)
    params = init_params(0, 8, 2, 1)
    params.heads = 3
    with pytest.raises(ArgumentError):
        encode(graph, params)


def test_dim_mismatch_rejected():
    graph = make_graph(2, 8)
    with pytest.raises(ShapeError):
        encode(graph, init_params(0, 4, 2, 1))


def test_traced_forward_is_bitwise_identical():
    graph = make_graph(3, 8)
    params = init_params(3, 8, 2, 2)
    plain = encode(graph, params)
    traced, tape = encode_traced(graph, params)
    assert plain.tobytes() == traced.tobytes()
    assert isinstance(tape, GradientTape)


def test_backward_shapes_match_parameters():
    graph = make_graph(2, 4)
    params = init_params(1, 4, 2, 1)
    out, tape = encode_traced(graph, params)
    loss = ad.tsum(tape.x_out)
    loss.backward()
    grads = tape.param_grads()
    assert set(grads) == set(params.tensors)
    for name, grad in grads.items():
        assert grad.shape == params.tensors[name].shape
    assert tape.x0_grad().shape == graph.x.shape


def scalar_loss(x_out: np.ndarray, probe: np.ndarray) -> float:
    return float((x_out * probe).sum())


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_gradients_match_finite_differences(seed):
    n, d, heads, layers = 4, 8, 2, 2
    graph = make_graph(n, d, seed=seed)
    params = init_params(seed + 100, d, heads, layers)
    probe = np.random.default_rng(seed + 200).normal(size=(n + 1, d))

    out, tape = encode_traced(graph, params)
    loss = ad.tsum(ad.mul(tape.x_out, probe))
    loss.backward()
    grads = tape.param_grads()

    eps = 1e-5
    worst = 0.0
    for name, base in params.tensors.items():
        flat = base.reshape(-1) if base.ndim else base.reshape(1)
        grad_flat = grads[name].reshape(-1) if grads[name].ndim else grads[name].reshape(1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = scalar_loss(encode(graph, params), probe)
            flat[i] = orig - eps
            lo = scalar_loss(encode(graph, params), probe)
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            rel = abs(grad_flat[i] - fd) / max(abs(grad_flat[i]) + abs(fd), 1e-8)
            worst = max(worst, rel)
    assert worst < 1e-4


def test_input_gradient_matches_finite_differences():
    from promptopt.kgraph import assemble_graph

    n, d = 3, 4
    graph = make_graph(n, d, seed=9)
    params = init_params(11, d, 2, 2)
    probe = np.random.default_rng(12).normal(size=(n + 1, d))
    out, tape = encode_traced(graph, params)
    ad.tsum(ad.mul(tape.x_out, probe)).backward()
    analytic = tape.x0_grad()

    eps = 1e-5
    base = graph.x.copy()
    for idx in [(0, 0), (1, 3), (n, 2)]:
        shifted = base.copy()
        shifted[idx] += eps
        hi = scalar_loss(encode(assemble_graph(graph.candidates, graph.query, shifted), params), probe)
        shifted[idx] -= 2 * eps
        lo = scalar_loss(encode(assemble_graph(graph.candidates, graph.query, shifted), params), probe)
        fd = (hi - lo) / (2 * eps)
        assert abs(analytic[idx] - fd) / max(abs(fd), 1e-8) < 1e-4


def test_deeper_mlp_gradients():
    graph = make_graph(2, 4, seed=2)
    params = init_params(7, 4, 2, 1, mlp_depth=2)
    probe = np.random.default_rng(8).normal(size=(3, 4))
    out, tape = encode_traced(graph, params)
    ad.tsum(ad.mul(tape.x_out, probe)).backward()
    grads = tape.param_grads()
    name = "l0.mlp.w1"
    eps = 1e-5
    base = params.tensors[name]
    for idx in [(0, 0), (1, 2)]:
        orig = base[idx]
        base[idx] = orig + eps
        hi = scalar_loss(encode(graph, params), probe)
        base[idx] = orig - eps
        lo = scalar_loss(encode(graph, params), probe)
        base[idx] = orig
        fd = (hi - lo) / (2 * eps)
        assert abs(grads[name][idx] - fd) / max(abs(fd), 1e-8) < 1e-4


def test_init_deterministic_and_mu_one():
    a = init_params(9, 8, 2, 2)
    b = init_params(9, 8, 2, 2)
    assert a.names() == b.names()
    for name in a.tensors:
        np.testing.assert_array_equal(a.tensors[name], b.tensors[name])
    for rel in ("cc", "qc", "cq"):
        assert float(a.tensors[f"l0.mu.{rel}"]) == 1.0
        assert float(a.tensors[f"l1.mu.{rel}"]) == 1.0
    assert np.all(a.tensors["l0.mlp.b0"] == 0.0)


def test_init_block_stddev_matches_uniform_law():
    params = init_params(21, 64, 2, 1)
    block = params.tensors["l0.q.candidate.h0"]  # 64 x 32
    s = math.sqrt(6.0 / (64 + 32))
    expected = s / math.sqrt(3.0)
    assert abs(block.std() - expected) / expected < 0.10


def test_attention_weights_sum_to_one_every_layer():
    graph = make_graph(4, 8, seed=3)
    params = init_params(4, 8, 2, 2)
    _, attention = encode(graph, params, return_attention=True)
    assert len(attention) == 2
    for layer_weights in attention:
        for per_target in layer_weights:
            np.testing.assert_allclose(per_target.sum(axis=1), 1.0, atol=1e-9)


def test_candidate_permutation_equivariance():
    from promptopt.kgraph import assemble_graph

    n, d = 4, 8
    graph = make_graph(n, d, seed=5)
    params = init_params(6, d, 2, 2)
    out = encode(graph, params)

    perm = [2, 0, 3, 1]
    pool_p = tuple(graph.candidates[i] for i in perm)
    x_p = np.vstack([graph.x[perm], graph.x[n:]])
    out_p = encode(assemble_graph(pool_p, graph.query, x_p), params)
    np.testing.assert_allclose(out_p[:n], out[perm], atol=1e-10)
    np.testing.assert_allclose(out_p[n], out[n], atol=1e-10)


def test_mu_scaling_preserves_attention_ordering():
    graph = make_graph(4, 8, seed=6)
    params = init_params(13, 8, 2, 1)
    _, before = encode(graph, params, return_attention=True)
    scaled = params.copy()
    for name in scaled.tensors:
        if ".mu." in name:
            scaled.tensors[name] = scaled.tensors[name] * 3.0
    _, after = encode(graph, scaled, return_attention=True)
    for j in range(5):
        for h in range(2):
            a, b = before[0][j][h], after[0][j][h]
            if len(np.unique(np.round(a, 12))) == len(a):  # distinct logits only
                np.testing.assert_array_equal(np.argsort(a), np.argsort(b))


def test_invocation_counter():
    reset_encode_calls()
    graph = make_graph(2, 4)
    params = init_params(0, 4, 2, 1)
    assert encode_call_count() == 0
    encode(graph, params)
    encode_traced(graph, params)
    assert encode_call_count() == 2


def test_param_inventory_reflects_layer_count():
    one = {name for name, _ in param_shapes(1, 2, 8)}
    two = {name for name, _ in param_shapes(2, 2, 8)}
    assert all(name.startswith("l0.") for name in one)
    assert two - one == {name.replace("l0.", "l1.") for name in one}
