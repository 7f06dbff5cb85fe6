"""Shared desk-scale task: 6-candidate pool with 3 distinguishable targets.

Training and held-out queries are duplicates of the target queries, and
the echo environment returns the response of the nearest included
example, so the known-optimal policy includes the matching candidate.
"""
from promptopt.corpus import CandidateExample
from promptopt.embedder import EmbedderConfig, HashEmbedder
from promptopt.env import MockEchoEnv
from promptopt.promptgen import default_template
from promptopt.trainer import TrainConfig

TARGETS = [
    CandidateExample(
        "convert celsius to fahrenheit", None, "multiply by nine fifths then add thirty two"
    ),
    CandidateExample("capital city of france", None, "paris is the capital"),
    CandidateExample("sum of two plus two", None, "two plus two equals four"),
]

DISTRACTORS = [
    CandidateExample("largest ocean on earth", None, "the pacific ocean"),
    CandidateExample("boiling point of water", None, "one hundred degrees"),
    CandidateExample("speed of light in vacuum", None, "about three hundred thousand km per second"),
]


def make_pool():
    return TARGETS + DISTRACTORS


def make_queries(count):
    """Queries cycle through the targets; expected answer is the target response."""
    return [TARGETS[i % len(TARGETS)] for i in range(count)]


def make_embedder(dim=32):
    return HashEmbedder(EmbedderConfig(kind="hash", dim=dim))


def make_env(embedder=None):
    return MockEchoEnv(embedder or make_embedder(), default_template())


def make_config(**overrides):
    base = dict(
        batch_size=4,
        epochs=20,  # 100 queries / batch 4 -> 25 steps per epoch -> 500 updates
        learning_rate=1e-2,
        baseline="ema",
        baseline_decay=0.9,
        k_max=2,
        seed=0,
        lambda_=0.4,
        layers=2,
        heads=2,
        dim=32,
        variant="full",
    )
    base.update(overrides)
    return TrainConfig(**base)


def matching_index(query: str) -> int:
    for i, target in enumerate(TARGETS):
        if target.query == query:
            return i
    raise AssertionError(f"not a target query: {query}")
