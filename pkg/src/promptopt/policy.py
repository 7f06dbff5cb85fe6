"""Selection-and-ordering policy over candidate examples.

An action is an inclusion vector over the N candidates plus an
orientation of every candidate pair (a full tournament). Each candidate
enters independently with the matcher probability sigmoid(x_q W_m x_i /
sqrt(d)); each pair {i, j} is oriented i->j with the order score
sigma(2 * sin(x_i - x_j) . w). Degenerate draws are repaired (at least
one candidate, at most k_max), and the final sequence is the tournament
order restricted to the selected set.

Two log-probabilities are tracked per action. ``log_prob`` scores the
post-repair configuration and is what gets reported. ``sampled_log_prob``
scores the inclusion vector as drawn; it is the proper score function of
the sampling distribution, so the policy-gradient estimator uses it (the
post-repair score is biased whenever a repair fires; see the estimator
test for the enumeration that shows it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import sigmoid_np, softplus_np
from .errors import ArgumentError, NumericError
from .hgt import GradientTape


@dataclass
class PolicyParams:
    w: np.ndarray  # (d,) pair-order parameter
    w_m: np.ndarray  # (d, d) matcher bilinear form

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams(w=self.w.copy(), w_m=self.w_m.copy())


def init_policy_params(seed: int, d: int) -> PolicyParams:
    rng = np.random.default_rng(seed)
    s_w = math.sqrt(6.0 / (d + 1))
    s_m = math.sqrt(6.0 / (2 * d))
    return PolicyParams(w=rng.uniform(-s_w, s_w, size=d), w_m=rng.uniform(-s_m, s_m, size=(d, d)))


@dataclass(frozen=True)
class ActionSample:
    include: np.ndarray  # post-repair inclusion mask (N,)
    include_raw: np.ndarray  # inclusion mask as drawn, before repair
    tournament: np.ndarray  # (N, N) 0/1; [i, j] = 1 means i precedes j
    sequence: tuple[int, ...]
    log_prob: float
    sampled_log_prob: float


@dataclass
class PolicyGrads:
    w: np.ndarray
    w_m: np.ndarray
    x: np.ndarray
    hgt: dict[str, np.ndarray] | None = None
    x0: np.ndarray | None = None


def pair_logit(x_i: np.ndarray, x_j: np.ndarray, w: np.ndarray) -> float:
    if x_i.shape != x_j.shape or x_i.shape != w.shape:
        raise ArgumentError(f"dimension mismatch: {x_i.shape}, {x_j.shape}, w {w.shape}")
    return float(np.sin(x_i - x_j) @ w)


def pair_score(x_i: np.ndarray, x_j: np.ndarray, w: np.ndarray) -> float:
    """P(i precedes j) = e^s / (e^s + e^-s) with s = sin(x_i - x_j) . w."""
    return float(sigmoid_np(2.0 * pair_logit(x_i, x_j, w)))


def match_prob(x_q: np.ndarray, x_c: np.ndarray, w_m: np.ndarray) -> float:
    if x_q.shape != x_c.shape or w_m.shape != (x_q.shape[0], x_q.shape[0]):
        raise ArgumentError(f"dimension mismatch: {x_q.shape}, {x_c.shape}, W_m {w_m.shape}")
    d = x_q.shape[0]
    return float(sigmoid_np((x_q @ w_m) @ x_c / math.sqrt(d)))


def inclusion_logits(x: np.ndarray, params: PolicyParams) -> np.ndarray:
    """Pre-sigmoid matcher scores of every candidate against the query row."""
    n = x.shape[0] - 1
    if x.shape[1] != params.dim:
        raise ArgumentError(f"embeddings have dim {x.shape[1]}, params expect {params.dim}")
    v = x[n] @ params.w_m
    return (x[:n] @ v) / math.sqrt(params.dim)


def inclusion_probs(x: np.ndarray, params: PolicyParams) -> np.ndarray:
    return sigmoid_np(inclusion_logits(x, params))


def order_selected(tournament: np.ndarray, selected) -> list[int]:
    """Order a selected subset by the tournament.

    An acyclic tournament is transitive, so its win counts within the
    subset are all distinct and sorting by descending wins recovers the
    unique topological order; on cycles the same sort is the Copeland
    order, with ties broken by ascending index.
    """
    selected = sorted(int(i) for i in selected)
    for a_pos, a in enumerate(selected):
        for b in selected[a_pos + 1 :]:
            if tournament[a, b] + tournament[b, a] != 1:
                raise ArgumentError(f"tournament does not orient pair ({a}, {b})")
    wins = {i: sum(int(tournament[i, j]) for j in selected if j != i) for i in selected}
    return sorted(selected, key=lambda i: (-wins[i], i))


def _repair(p: np.ndarray, z: np.ndarray, tournament: np.ndarray, k_max: int) -> np.ndarray:
    z = z.copy()
    if not z.any():
        tied = np.flatnonzero(p == p.max())
        if len(tied) == 1:
            winner = int(tied[0])
        else:
            # break exact matcher ties with the tournament restricted to
            # the tied leaders (Copeland, then index)
            winner = order_selected(tournament, tied)[0]
        z[winner] = True
    elif int(z.sum()) > k_max:
        included = np.flatnonzero(z)
        keep = sorted(included, key=lambda i: (-p[i], i))[:k_max]
        z = np.zeros_like(z)
        z[keep] = True
    return z


def _oriented_pairs(z: np.ndarray, tournament: np.ndarray) -> list[tuple[int, int]]:
    """Co-selected pairs as (first, second) in prompt order."""
    n = len(z)
    pairs = []
    for a in range(n):
        if not z[a]:
            continue
        for b in range(a + 1, n):
            if z[b]:
                pairs.append((a, b) if tournament[a, b] else (b, a))
    return pairs


def _score(x: np.ndarray, params: PolicyParams, z: np.ndarray, pairs) -> float:
    """Log-probability of inclusion mask z plus the oriented pair terms.

    Mirrors the traced computation in ``_log_prob_graph`` operation for
    operation so the two agree bitwise.
    """
    s = inclusion_logits(x, params)
    zf = z.astype(np.float64)
    terms = softplus_np(s * -1.0) * zf + softplus_np(s) * (1.0 - zf)
    log_prob = terms.sum() * -1.0
    for a, b in pairs:
        s_ab = pair_logit(x[a], x[b], params.w)
        log_prob = log_prob - softplus_np(np.asarray(s_ab * -2.0))
    return float(log_prob)


def sample_action(x: np.ndarray, params: PolicyParams, k_max: int, rng: np.random.Generator) -> ActionSample:
    if k_max < 1:
        raise ArgumentError(f"k_max must be >= 1, got {k_max}")
    n = x.shape[0] - 1
    s = inclusion_logits(x, params)
    if not np.all(np.isfinite(s)):
        raise NumericError("non-finite inclusion logits (check embeddings and W_m)")
    p = sigmoid_np(s)
    z_raw = rng.random(n) < p
    draws = rng.random(n * (n - 1) // 2)
    tournament = np.zeros((n, n), dtype=np.int8)
    idx = 0
    for i in range(n):
        for j in range(i + 1, n):
            logit = 2.0 * pair_logit(x[i], x[j], params.w)
            if not math.isfinite(logit):
                raise NumericError(f"non-finite pair logit for candidates ({i}, {j})")
            forward = sigmoid_np(np.asarray(logit))
            if draws[idx] < forward:
                tournament[i, j] = 1
            else:
                tournament[j, i] = 1
            idx += 1
    return _finish_action(x, params, p, z_raw, tournament, k_max)


def greedy_action(x: np.ndarray, params: PolicyParams, k_max: int) -> ActionSample:
    if k_max < 1:
        raise ArgumentError(f"k_max must be >= 1, got {k_max}")
    n = x.shape[0] - 1
    s = inclusion_logits(x, params)
    if not np.all(np.isfinite(s)):
        raise NumericError("non-finite inclusion logits (check embeddings and W_m)")
    p = sigmoid_np(s)
    z_raw = s >= 0.0
    tournament = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        for j in range(i + 1, n):
            if pair_logit(x[i], x[j], params.w) >= 0.0:  # tie -> lower index first
                tournament[i, j] = 1
            else:
                tournament[j, i] = 1
    return _finish_action(x, params, p, z_raw, tournament, k_max)


def _finish_action(x, params, p, z_raw, tournament, k_max) -> ActionSample:
    z = _repair(p, z_raw, tournament, k_max)
    sequence = tuple(order_selected(tournament, np.flatnonzero(z)))
    pairs = _oriented_pairs(z, tournament)
    return ActionSample(
        include=z,
        include_raw=z_raw.copy(),
        tournament=tournament,
        sequence=sequence,
        log_prob=_score(x, params, z, pairs),
        sampled_log_prob=_score(x, params, z_raw, pairs),
    )


def _log_prob_graph(x: np.ndarray, params: PolicyParams, z: np.ndarray, pairs, tape: GradientTape | None):
    d = params.dim
    n = x.shape[0] - 1
    x_t = tape.x_out if tape is not None else ad.Tensor(x, requires_grad=True)
    w_t = ad.Tensor(params.w, requires_grad=True)
    wm_t = ad.Tensor(params.w_m, requires_grad=True)

    x_q = ad.reshape(ad.gather_rows(x_t, [n]), (d,))
    x_c = ad.gather_rows(x_t, list(range(n)))
    s = ad.div(x_c @ (x_q @ wm_t), math.sqrt(d))
    zf = z.astype(np.float64)
    terms = ad.add(ad.mul(ad.softplus(ad.mul(s, -1.0)), zf), ad.mul(ad.softplus(s), 1.0 - zf))
    log_prob = ad.mul(ad.tsum(terms), -1.0)
    for a, b in pairs:
        x_a = ad.reshape(ad.gather_rows(x_t, [a]), (d,))
        x_b = ad.reshape(ad.gather_rows(x_t, [b]), (d,))
        s_ab = ad.sin(ad.sub(x_a, x_b)) @ w_t
        log_prob = ad.sub(log_prob, ad.softplus(ad.mul(s_ab, -2.0)))
    return log_prob, x_t, w_t, wm_t


def _grad(x, params, action: ActionSample, z: np.ndarray, tape: GradientTape | None) -> tuple[float, PolicyGrads]:
    pairs = _oriented_pairs(action.include, action.tournament)
    log_prob, x_t, w_t, wm_t = _log_prob_graph(x, params, z, pairs, tape)
    log_prob.backward()

    def grad_of(t, like):
        return t.grad if t.grad is not None else np.zeros_like(like)

    return log_prob.item(), PolicyGrads(
        w=grad_of(w_t, params.w),
        w_m=grad_of(wm_t, params.w_m),
        x=grad_of(x_t, x),
        hgt=tape.param_grads() if tape is not None else None,
        x0=tape.x0_grad() if tape is not None else None,
    )


def action_log_prob_grad(x: np.ndarray, params: PolicyParams, action: ActionSample, tape: GradientTape | None = None) -> PolicyGrads:
    """Exact gradient of the reported (post-repair) action log-probability.

    The action must have been produced against this x; a stale pairing is
    undetectable and yields gradients for the wrong point. With a tape the
    gradients chain through the encoder into its parameters; gradients
    accumulate on the tape, so pass a fresh tape per backward pass.
    """
    value, grads = _grad(x, params, action, action.include, tape)
    return grads


def sampled_log_prob_grad(x: np.ndarray, params: PolicyParams, action: ActionSample, tape: GradientTape | None = None) -> PolicyGrads:
    """Exact gradient of the as-drawn score used by the REINFORCE estimator."""
    value, grads = _grad(x, params, action, action.include_raw, tape)
    return grads
