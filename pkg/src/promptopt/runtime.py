"""Wires corpus, embedder, environment, parameters and the trainer into
one object the CLI and the HTTP service both drive."""
from __future__ import annotations

import threading
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .corpus import CandidateExample, build_candidate_pool, load_dataset, split
from .embedder import make_embedder
from .env import CompletionRequest, HttpChatEnv, MockEchoEnv
from .errors import ConfigError
from .kgraph import build_graph, graph_summary
from .metrics import score_corpus
from .promptgen import default_template, load_template, render_prompt
from .reward import RewardConfig, embed_sim, fuzzy_sim, reward
from .trainer import (
    collect_tensors,
    evaluate,
    init_all_params,
    params_from_checkpoint,
    policy_action,
    sweep,
    train,
    write_records,
)


def _demo_pool(size: int) -> list[CandidateExample]:
    """Placeholder pool for graph inspection without a dataset."""
    return [
        CandidateExample(f"demo query number {i}", None, f"demo response number {i}")
        for i in range(size)
    ]


class OptimizerRuntime:
    """A loaded run: pool, provider, environment and current parameters."""

    def __init__(self, config: RunConfig, checkpoint: Checkpoint | None = None):
        config.validate()
        self.config = config
        self.embedder = make_embedder(config.embedder)
        self.template = load_template(config.template) if config.template else default_template()
        if config.env_kind == "http":
            self.env = HttpChatEnv(
                config.env_base_url,
                model=config.env_model,
                token_env=config.env_token_env,
                max_in_flight=config.env_max_in_flight,
            )
        else:
            self.env = MockEchoEnv(self.embedder, self.template)
        self.reward_config = RewardConfig(embedder=self.embedder, lambda_=config.train.lambda_)

        self.split = None
        if config.dataset is not None:
            examples = load_dataset(config.dataset, config.dataset_format)
            self.split = split(examples, seed=config.seed, sizes=config.splits)
            self.pool = build_candidate_pool(self.split.train, config.pool_size, seed=config.seed)
        else:
            self.pool = _demo_pool(config.pool_size)

        if checkpoint is not None:
            _, self.hgt_params, self.policy_params = params_from_checkpoint(checkpoint)
            self.checkpoint = checkpoint
        else:
            self.hgt_params, self.policy_params = init_all_params(config.train)
            self.checkpoint = Checkpoint(
                config={**config.train.as_dict(), "run": config.as_dict()},
                step=0,
                rng_state=np.random.default_rng(config.seed).bit_generator.state,
                tensors=collect_tensors(self.hgt_params, self.policy_params),
            )
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, config: RunConfig, checkpoint_path: str | None = None) -> "OptimizerRuntime":
        checkpoint = load_checkpoint(checkpoint_path) if checkpoint_path else None
        return cls(config, checkpoint)

    # -- splits ------------------------------------------------------------

    def split_examples(self, name: str):
        if self.split is None:
            raise ConfigError("no dataset configured; set corpus.dataset to evaluate or train")
        if name not in ("train", "val", "test"):
            raise ConfigError(f"unknown split {name!r}; expected train, val or test")
        return getattr(self.split, name)

    # -- request/response operations ----------------------------------------

    def optimize(
        self,
        query: str,
        k_max: int | None = None,
        mode: str = "greedy",
        call_env: bool = False,
        sample_seed: int = 0,
    ) -> dict:
        config = self.config.train
        if k_max is not None:
            from dataclasses import replace

            config = replace(config, k_max=k_max)
        graph = build_graph(self.pool, query, self.embedder)
        rng = np.random.default_rng(sample_seed) if mode == "sample" else None
        action, _, _ = policy_action(graph, self.hgt_params, self.policy_params, config, mode=mode, rng=rng)
        sequence = [self.pool[i] for i in action.sequence]
        prompt = render_prompt(sequence, query, self.template)
        out = {
            "query": query,
            "selected": [
                {"index": int(i), "query": self.pool[i].query, "response": self.pool[i].response}
                for i in action.sequence
            ],
            "prompt": prompt,
            "log_prob": action.log_prob,
            "response": None,
        }
        if call_env:
            response = self.env.complete(
                CompletionRequest(prompt=prompt, max_tokens=config.max_tokens, temperature=config.temperature)
            )
            out["response"] = response.text
        return out

    def inspect_graph(self, query: str | None = None, full: bool = False) -> dict:
        graph = build_graph(self.pool, query or "inspection probe query", self.embedder)
        return graph_summary(graph, full=full)

    def score_reward(self, expected: str, generated: str) -> dict:
        return {
            "reward": reward(expected, generated, self.reward_config),
            "fuzzy": fuzzy_sim(expected, generated),
            "embedding": embed_sim(expected, generated, self.embedder),
            "lambda": self.reward_config.lambda_,
        }

    def score_metrics(self, pairs) -> dict:
        return score_corpus(pairs).as_dict()

    def complete(self, prompt: str, max_tokens: int = 256, temperature: float = 0.0) -> dict:
        response = self.env.complete(
            CompletionRequest(prompt=prompt, max_tokens=max_tokens, temperature=temperature)
        )
        return {"text": response.text, "latency_ms": response.latency_ms, "meta": response.provider_meta}

    # -- batch operations -----------------------------------------------------

    def run_training(self, out_dir: str | None = None, resume: bool = False) -> dict:
        with self._lock:
            resume_from = self.checkpoint if resume and self.checkpoint.step > 0 else None
            checkpoint, records = train(
                self.config.train,
                self.split_examples("train"),
                self.pool,
                self.embedder,
                self.env,
                template=self.template,
                resume_from=resume_from,
            )
            checkpoint.config["run"] = self.config.as_dict()
            self.checkpoint = checkpoint
            _, self.hgt_params, self.policy_params = params_from_checkpoint(checkpoint)

            target = Path(out_dir or self.config.out_dir)
            target.mkdir(parents=True, exist_ok=True)
            checkpoint_path = target / "checkpoint.bin"
            save_checkpoint(checkpoint_path, checkpoint)
            log_path = target / "train_log.jsonl"
            write_records(log_path, records)
            rewards = [r.reward for r in records if not r.skipped]
            return {
                "steps": checkpoint.step,
                "episodes": len(records),
                "skipped": sum(1 for r in records if r.skipped),
                "mean_reward": sum(rewards) / len(rewards) if rewards else 0.0,
                "final_loss": records[-1].loss if records else 0.0,
                "checkpoint": str(checkpoint_path),
                "log": str(log_path),
            }

    def run_evaluation(self, split_name: str = "test", mode: str = "greedy", limit: int | None = None) -> dict:
        result = evaluate(
            self.checkpoint,
            self.split_examples(split_name),
            self.pool,
            self.embedder,
            self.env,
            template=self.template,
            mode=mode,
            limit=limit,
        )
        payload = result.as_dict()
        payload["split"] = split_name
        payload["count"] = len(result.rewards)
        return payload

    def run_sweep(self, axis: str, grid, split_name: str = "val", limit: int | None = None) -> list[dict]:
        eval_examples = list(self.split_examples(split_name))
        if limit is not None:
            eval_examples = eval_examples[:limit]
        return sweep(
            self.config.train,
            axis,
            grid,
            self.split_examples("train"),
            eval_examples,
            self.pool,
            self.embedder,
            self.env,
            template=self.template,
        )

    def info(self) -> dict:
        return {
            "pool_size": len(self.pool),
            "dim": self.config.train.dim,
            "layers": self.config.train.layers,
            "heads": self.config.train.heads,
            "variant": self.config.train.variant,
            "env": self.config.env_kind,
            "dataset": self.config.dataset,
            "step": self.checkpoint.step,
        }
