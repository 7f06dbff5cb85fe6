"""Shaped reward: a weighted blend of fuzzy textual and embedding similarity.

R(a, a_hat) = lambda * R_m + (1 - lambda) * R_e, where R_m is normalized
character-level Levenshtein similarity and R_e is cosine similarity of
the sentence embeddings rescaled from [-1, 1] to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

from .embedder import Embedder, cosine
from .errors import ConfigError

DEFAULT_LAMBDA = 0.4  # best-performing blend weight


@dataclass(frozen=True)
class RewardConfig:
    embedder: Embedder
    lambda_: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not (0.0 <= self.lambda_ <= 1.0):
            raise ConfigError(f"lambda must be in [0, 1], got {self.lambda_}")


def levenshtein(a: str, b: str) -> int:
    """Edit distance over Unicode scalar values, two-row DP."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, ch_b in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ch_a != ch_b))
        prev = cur
    return prev[-1]


def fuzzy_sim(a: str, a_hat: str) -> float:
    """1 - distance / max length; two empty strings are identical (1)."""
    longest = max(len(a), len(a_hat))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, a_hat) / longest


def embed_sim(a: str, a_hat: str, embedder: Embedder) -> float:
    """Cosine rescaled to [0, 1]; zero-norm vectors score the midpoint 0.5."""
    return (cosine(embedder.embed_text(a), embedder.embed_text(a_hat)) + 1.0) / 2.0


def reward(a: str, a_hat: str, config: RewardConfig) -> float:
    return config.lambda_ * fuzzy_sim(a, a_hat) + (1.0 - config.lambda_) * embed_sim(
        a, a_hat, config.embedder
    )
