"""Policy-gradient training loop, evaluation, and the sweep harness.

Episodes are single-step: one sampled action, one completion, one reward.
Per batch the estimator averages advantage-weighted score-function
gradients and ascends. The score is the as-drawn log-probability (see the
policy module) so the estimator stays unbiased under inclusion repair.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .embedder import Embedder, cosine
from .env import CompletionRequest
from .errors import ArgumentError, ConfigError, NumericError, PromptOptError
from .hgt import HgtParams, encode, encode_traced, init_params
from .kgraph import PromptGraph, assemble_graph
from .metrics import MetricReport, score_corpus
from .policy import (
    ActionSample,
    PolicyParams,
    greedy_action,
    init_policy_params,
    sample_action,
    sampled_log_prob_grad,
)
from .promptgen import PromptTemplate, default_template, render_prompt
from .reward import RewardConfig, reward

VARIANTS = ("full", "no_kg", "knn_select")
BASELINES = ("none", "ema")
OPTIMIZERS = ("sgd", "adam")
KNN_EXAMPLES = 2  # examples per prompt in the nearest-neighbor ablation


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    epochs: int = 5
    learning_rate: float = 1e-2
    baseline: str = "ema"
    baseline_decay: float = 0.9
    k_max: int = 2
    seed: int = 0
    env: str = "mock"
    lambda_: float = 0.4
    layers: int = 2
    heads: int = 2
    dim: int = 32
    mlp_depth: int = 1
    variant: str = "full"
    optimizer: str = "sgd"
    max_tokens: int = 256
    temperature: float = 0.0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.baseline not in BASELINES:
            raise ConfigError(f"unknown baseline {self.baseline!r}; expected one of {BASELINES}")
        if self.baseline == "ema" and not (0.0 < self.baseline_decay < 1.0):
            raise ConfigError(f"baseline_decay must be in (0, 1), got {self.baseline_decay}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be >= 1, got {self.k_max}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 <= self.lambda_ <= 1.0):
            raise ConfigError(f"lambda must be in [0, 1], got {self.lambda_}")
        if self.dim < 2 or self.heads < 1 or self.layers < 1:
            raise ConfigError("dim, heads and layers must be positive (dim >= 2)")
        if self.dim % self.heads != 0:
            raise ConfigError(f"heads {self.heads} must divide dim {self.dim}")

    def as_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "baseline": self.baseline,
            "baseline_decay": self.baseline_decay,
            "k_max": self.k_max,
            "seed": self.seed,
            "env": self.env,
            "lambda": self.lambda_,
            "layers": self.layers,
            "heads": self.heads,
            "dim": self.dim,
            "mlp_depth": self.mlp_depth,
            "variant": self.variant,
            "optimizer": self.optimizer,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }

    @staticmethod
    def from_dict(payload: dict) -> "TrainConfig":
        mapped = dict(payload)
        if "lambda" in mapped:
            mapped["lambda_"] = mapped.pop("lambda")
        known = set(TrainConfig.__dataclass_fields__)
        return TrainConfig(**{k: v for k, v in mapped.items() if k in known})


@dataclass
class TrainRecord:
    step: int
    query_id: int
    sequence: tuple[int, ...]
    reward: float
    baseline: float
    loss: float
    wall_ms: float
    skipped: bool = False

    def as_dict(self, include_timing: bool = False) -> dict:
        out = {
            "step": self.step,
            "query_id": self.query_id,
            "sequence": list(self.sequence),
            "reward": self.reward,
            "baseline": self.baseline,
            "loss": self.loss,
            "skipped": self.skipped,
        }
        if include_timing:
            out["wall_ms"] = self.wall_ms
        return out


def write_records(path: str | Path, records, include_timing: bool = False) -> None:
    """JSON-lines training log; timing is volatile and off by default so
    identically-seeded runs produce identical files."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.as_dict(include_timing=include_timing), sort_keys=True))
            fh.write("\n")


# --- parameter plumbing --------------------------------------------------

def pool_embedding_matrix(pool, embedder: Embedder) -> np.ndarray:
    x = np.empty((len(pool), embedder.dim), dtype=np.float64)
    for i, example in enumerate(pool):
        x[i] = embedder.embed_example(example)
    return x


def build_query_graph(pool, pool_matrix: np.ndarray, query: str, embedder: Embedder) -> PromptGraph:
    x = np.vstack([pool_matrix, embedder.embed_text(query)])
    return assemble_graph(pool, query, x)


def collect_tensors(hgt_params: HgtParams, policy_params: PolicyParams) -> dict[str, np.ndarray]:
    tensors = {f"hgt/{name}": arr.copy() for name, arr in hgt_params.tensors.items()}
    tensors["policy/w"] = policy_params.w.copy()
    tensors["policy/w_m"] = policy_params.w_m.copy()
    return tensors


def params_from_checkpoint(checkpoint: Checkpoint) -> tuple[TrainConfig, HgtParams, PolicyParams]:
    config = TrainConfig.from_dict(checkpoint.config)
    hgt_params = init_params(config.seed, config.dim, config.heads, config.layers, config.mlp_depth)
    for name in hgt_params.tensors:
        key = f"hgt/{name}"
        if key not in checkpoint.tensors:
            raise ConfigError(f"checkpoint is missing tensor {key!r}")
        loaded = checkpoint.tensors[key]
        if loaded.shape != hgt_params.tensors[name].shape:
            raise ConfigError(f"checkpoint tensor {key!r} has shape {loaded.shape}")
        hgt_params.tensors[name] = loaded.copy()
    policy_params = PolicyParams(
        w=checkpoint.tensors["policy/w"].copy(),
        w_m=checkpoint.tensors["policy/w_m"].copy(),
    )
    return config, hgt_params, policy_params


def init_all_params(config: TrainConfig) -> tuple[HgtParams, PolicyParams]:
    return (
        init_params(config.seed, config.dim, config.heads, config.layers, config.mlp_depth),
        init_policy_params(config.seed + 1, config.dim),
    )


# --- action selection shared by train / evaluate / serve -----------------

def knn_action(query_vec: np.ndarray, pool_matrix: np.ndarray, k: int = KNN_EXAMPLES) -> ActionSample:
    """Top-k cosine neighbors of the query, in descending-similarity order."""
    n = pool_matrix.shape[0]
    sims = np.array([cosine(query_vec, pool_matrix[i]) for i in range(n)])
    ranking = sorted(range(n), key=lambda i: (-sims[i], i))
    chosen = ranking[:min(k, n)]
    include = np.zeros(n, dtype=bool)
    include[chosen] = True
    tournament = np.zeros((n, n), dtype=np.int8)
    position = {node: rank for rank, node in enumerate(ranking)}
    for i in range(n):
        for j in range(i + 1, n):
            if position[i] < position[j]:
                tournament[i, j] = 1
            else:
                tournament[j, i] = 1
    return ActionSample(
        include=include,
        include_raw=include.copy(),
        tournament=tournament,
        sequence=tuple(chosen),
        log_prob=0.0,
        sampled_log_prob=0.0,
    )


def policy_action(
    graph: PromptGraph,
    hgt_params: HgtParams,
    policy_params: PolicyParams,
    config: TrainConfig,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    traced: bool = False,
):
    """Returns (action, encoded embeddings, tape-or-None) for one query."""
    n = graph.n_candidates
    if config.variant == "knn_select":
        return knn_action(graph.x[n], graph.x[:n]), graph.x, None
    if config.variant == "no_kg":
        x_enc, tape = graph.x, None
    elif traced:
        x_enc, tape = encode_traced(graph, hgt_params)
    else:
        x_enc, tape = encode(graph, hgt_params), None
    if mode == "greedy":
        action = greedy_action(x_enc, policy_params, config.k_max)
    elif mode == "sample":
        if rng is None:
            raise ArgumentError("mode='sample' requires an rng")
        action = sample_action(x_enc, policy_params, config.k_max, rng)
    else:
        raise ArgumentError(f"unknown action mode {mode!r}")
    return action, x_enc, tape


# --- optimizers -----------------------------------------------------------

class _Sgd:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            tensors[name] += self.learning_rate * grad

    def state_tensors(self) -> dict[str, np.ndarray]:
        return {}


class _Adam:
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, learning_rate: float, shapes: dict[str, np.ndarray], t: int = 0):
        self.learning_rate = learning_rate
        self.t = t
        self.m = {k: np.zeros_like(v) for k, v in shapes.items()}
        self.v = {k: np.zeros_like(v) for k, v in shapes.items()}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            tensors[name] += self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {f"opt/m/{k}": v.copy() for k, v in self.m.items()}
        out.update({f"opt/v/{k}": v.copy() for k, v in self.v.items()})
        out["opt/t"] = np.array(float(self.t))
        return out


# --- training --------------------------------------------------------------

def train(
    config: TrainConfig,
    train_examples,
    pool,
    embedder: Embedder,
    env,
    template: PromptTemplate | None = None,
    resume_from: Checkpoint | None = None,
) -> tuple[Checkpoint, list[TrainRecord]]:
    config.validate()
    if not train_examples:
        raise ArgumentError("training split is empty")
    template = template or default_template()
    reward_cfg = RewardConfig(embedder=embedder, lambda_=config.lambda_)

    rng = np.random.default_rng(config.seed)
    hgt_params, policy_params = init_all_params(config)
    start_step = 0
    optimizer = (
        _Sgd(config.learning_rate)
        if config.optimizer == "sgd"
        else _Adam(config.learning_rate, collect_tensors(hgt_params, policy_params))
    )
    baseline_value = 0.0
    if resume_from is not None:
        resumed_config, hgt_params, policy_params = params_from_checkpoint(resume_from)
        if (resumed_config.dim, resumed_config.heads, resumed_config.layers, resumed_config.variant) != (
            config.dim,
            config.heads,
            config.layers,
            config.variant,
        ):
            raise ConfigError("resume checkpoint is structurally incompatible with the config")
        rng.bit_generator.state = resume_from.rng_state
        start_step = resume_from.step
        baseline_value = float(resume_from.config.get("baseline_value", 0.0))
        if config.optimizer == "adam":
            optimizer = _Adam(config.learning_rate, collect_tensors(hgt_params, policy_params))
            if "opt/t" in resume_from.tensors:
                optimizer.t = int(resume_from.tensors["opt/t"])
                for name in optimizer.m:
                    optimizer.m[name] = resume_from.tensors[f"opt/m/{name}"].copy()
                    optimizer.v[name] = resume_from.tensors[f"opt/v/{name}"].copy()

    pool_matrix = pool_embedding_matrix(pool, embedder)
    steps_per_epoch = math.ceil(len(train_examples) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    records: list[TrainRecord] = []

    for step in range(start_step + 1, total_steps + 1):
        replace_draws = config.batch_size > len(train_examples)
        batch = rng.choice(len(train_examples), size=config.batch_size, replace=replace_draws)
        grad_acc: dict[str, np.ndarray] = {}
        batch_rewards: list[float] = []
        contributing = 0

        for query_id in batch:
            episode_start = time.perf_counter()
            example = train_examples[int(query_id)]
            graph = build_query_graph(pool, pool_matrix, example.query, embedder)
            action, x_enc, tape = policy_action(
                graph, hgt_params, policy_params, config, mode="sample", rng=rng, traced=config.variant == "full"
            )
            prompt = render_prompt([pool[i] for i in action.sequence], example.query, template)
            request = CompletionRequest(
                prompt=prompt, max_tokens=config.max_tokens, temperature=config.temperature
            )
            response = None
            for attempt in (1, 2):  # one retry, then the episode is skipped
                try:
                    response = env.complete(request)
                    break
                except PromptOptError:
                    if attempt == 2:
                        response = None
            wall_ms = (time.perf_counter() - episode_start) * 1000.0
            if response is None:
                records.append(
                    TrainRecord(
                        step=step,
                        query_id=int(query_id),
                        sequence=action.sequence,
                        reward=0.0,
                        baseline=baseline_value,
                        loss=0.0,
                        wall_ms=wall_ms,
                        skipped=True,
                    )
                )
                continue

            episode_reward = reward(example.response, response.text, reward_cfg)
            advantage = episode_reward - (baseline_value if config.baseline == "ema" else 0.0)
            batch_rewards.append(episode_reward)
            contributing += 1

            if config.variant != "knn_select":
                grads = sampled_log_prob_grad(x_enc, policy_params, action, tape=tape)
                _accumulate_grads(grad_acc, grads, advantage, config.variant)
            episode_loss = -(advantage * action.sampled_log_prob)
            records.append(
                TrainRecord(
                    step=step,
                    query_id=int(query_id),
                    sequence=action.sequence,
                    reward=episode_reward,
                    baseline=baseline_value,
                    loss=episode_loss,
                    wall_ms=(time.perf_counter() - episode_start) * 1000.0,
                )
            )

        if contributing and config.variant != "knn_select":
            tensors = _live_tensors(hgt_params, policy_params)
            for name in grad_acc:
                grad_acc[name] /= contributing
                if not np.all(np.isfinite(grad_acc[name])):
                    raise NumericError(f"non-finite gradient for parameter {name!r} at step {step}")
            optimizer.step(tensors, grad_acc)
        if config.baseline == "ema" and batch_rewards:
            batch_mean = sum(batch_rewards) / len(batch_rewards)
            baseline_value = config.baseline_decay * baseline_value + (1 - config.baseline_decay) * batch_mean

    tensors = collect_tensors(hgt_params, policy_params)
    tensors.update(optimizer.state_tensors())
    checkpoint = Checkpoint(
        config={**config.as_dict(), "baseline_value": baseline_value},
        step=total_steps,
        rng_state=rng.bit_generator.state,
        tensors=tensors,
    )
    return checkpoint, records


def _live_tensors(hgt_params: HgtParams, policy_params: PolicyParams) -> dict[str, np.ndarray]:
    tensors = {f"hgt/{name}": arr for name, arr in hgt_params.tensors.items()}
    tensors["policy/w"] = policy_params.w
    tensors["policy/w_m"] = policy_params.w_m
    return tensors


def _accumulate_grads(acc: dict[str, np.ndarray], grads, advantage: float, variant: str) -> None:
    acc.setdefault("policy/w", np.zeros_like(grads.w))
    acc["policy/w"] += advantage * grads.w
    acc.setdefault("policy/w_m", np.zeros_like(grads.w_m))
    acc["policy/w_m"] += advantage * grads.w_m
    if variant == "full" and grads.hgt is not None:
        for name, grad in grads.hgt.items():
            key = f"hgt/{name}"
            acc.setdefault(key, np.zeros_like(grad))
            acc[key] += advantage * grad


# --- evaluation -------------------------------------------------------------

@dataclass
class EvalResult:
    report: MetricReport
    mean_reward: float
    rewards: list[float] = field(default_factory=list)
    selections: list[tuple[int, ...]] = field(default_factory=list)
    responses: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.report.empty

    def as_dict(self) -> dict:
        payload = self.report.as_dict()
        payload["mean_reward"] = self.mean_reward
        payload["selections"] = [list(s) for s in self.selections]
        return payload


def evaluate(
    checkpoint: Checkpoint,
    split_examples,
    pool,
    embedder: Embedder,
    env,
    template: PromptTemplate | None = None,
    mode: str = "greedy",
    sample_seed: int = 0,
    limit: int | None = None,
) -> EvalResult:
    config, hgt_params, policy_params = params_from_checkpoint(checkpoint)
    template = template or default_template()
    reward_cfg = RewardConfig(embedder=embedder, lambda_=config.lambda_)
    rng = np.random.default_rng(sample_seed) if mode == "sample" else None

    items = list(split_examples)
    if limit is not None:
        items = items[:limit]
    if not items:
        return EvalResult(report=score_corpus([]), mean_reward=0.0)

    pool_matrix = pool_embedding_matrix(pool, embedder)
    pairs = []
    rewards: list[float] = []
    selections: list[tuple[int, ...]] = []
    responses: list[str] = []
    for example in items:
        graph = build_query_graph(pool, pool_matrix, example.query, embedder)
        action, _, _ = policy_action(graph, hgt_params, policy_params, config, mode=mode, rng=rng)
        prompt = render_prompt([pool[i] for i in action.sequence], example.query, template)
        response = env.complete(
            CompletionRequest(prompt=prompt, max_tokens=config.max_tokens, temperature=config.temperature)
        )
        pairs.append((example.response, response.text))
        rewards.append(reward(example.response, response.text, reward_cfg))
        selections.append(action.sequence)
        responses.append(response.text)
    return EvalResult(
        report=score_corpus(pairs),
        mean_reward=sum(rewards) / len(rewards),
        rewards=rewards,
        selections=selections,
        responses=responses,
    )


# --- sweeps ------------------------------------------------------------------

SWEEP_AXES = ("lambda", "hgt_layers")


def sweep(
    base_config: TrainConfig,
    axis: str,
    grid,
    train_examples,
    eval_examples,
    pool,
    embedder: Embedder,
    env,
    template: PromptTemplate | None = None,
) -> list[dict]:
    """Train + evaluate per grid value; failures mark the row, the sweep goes on."""
    if axis not in SWEEP_AXES:
        raise ArgumentError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    grid = list(grid)
    if not grid:
        raise ArgumentError("sweep grid is empty")
    rows: list[dict] = []
    for value in grid:
        if axis == "lambda":
            config = replace(base_config, lambda_=float(value))
        else:
            config = replace(base_config, layers=int(value))
        row = {"axis": axis, "value": value, "error": None}
        try:
            checkpoint, _ = train(config, train_examples, pool, embedder, env, template)
            result = evaluate(checkpoint, eval_examples, pool, embedder, env, template)
            row["metrics"] = result.report.corpus
            row["mean_reward"] = result.mean_reward
            row["tensor_count"] = len(checkpoint.tensors)
        except Exception as exc:  # noqa: BLE001 - a failed point must not kill the sweep
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
