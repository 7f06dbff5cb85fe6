"""Instruction datasets: JSONL loading, deterministic splits, candidate pools.

Candidate examples are (query, context, response) triples. The candidate
pool is drawn once per run and shared by every query's graph.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DatasetParseError, EmptyDatasetError, SchemaError, SizeError

FORMATS = ("alpaca_jsonl", "dolly_jsonl")

# field-name mapping per format: (query, context, response) source keys
_FIELD_MAP = {
    "alpaca_jsonl": ("instruction", "input", "output"),
    "dolly_jsonl": ("instruction", "context", "response"),
}


@dataclass(frozen=True)
class CandidateExample:
    """One instruction-following record; the atom of pools and prompts."""

    query: str
    context: str | None
    response: str

    def __post_init__(self):
        if not self.query or not self.query.strip():
            raise SchemaError("query", "must be non-empty")
        if not self.response:
            raise SchemaError("response", "must be non-empty")
        # canonicalize empty-string context to absent
        if self.context is not None and self.context == "":
            object.__setattr__(self, "context", None)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[CandidateExample, ...]
    val: tuple[CandidateExample, ...]
    test: tuple[CandidateExample, ...]
    seed: int


def load_dataset(path: str | Path, format: str) -> list[CandidateExample]:
    """Load a JSONL instruction dataset, one record per line, in file order."""
    if format not in FORMATS:
        raise ArgumentError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    qk, ck, rk = _FIELD_MAP[format]
    path = Path(path)
    out: list[CandidateExample] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(str(path), line_no, exc.msg) from exc
            if not isinstance(record, dict):
                raise DatasetParseError(str(path), line_no, "record is not a JSON object")
            for key in (qk, rk):
                if key not in record:
                    raise SchemaError(key, "required field missing", line_no=line_no)
            try:
                out.append(
                    CandidateExample(
                        query=record[qk],
                        context=record.get(ck) or None,
                        response=record[rk],
                    )
                )
            except SchemaError as exc:
                raise SchemaError(exc.field, "must be non-empty", line_no=line_no) from exc
    if not out:
        raise EmptyDatasetError(f"{path}: no records")
    return out


def to_record(example: CandidateExample, format: str) -> dict:
    """Serialize back to the source-format field names (round-trip safe)."""
    if format not in FORMATS:
        raise ArgumentError(f"unknown dataset format {format!r}")
    qk, ck, rk = _FIELD_MAP[format]
    return {qk: example.query, ck: example.context or "", rk: example.response}


def split(
    examples: list[CandidateExample],
    seed: int,
    sizes: tuple[int, int, int],
) -> DatasetSplit:
    """Seeded shuffle then contiguous slicing into train/val/test."""
    n_train, n_val, n_test = sizes
    total = n_train + n_val + n_test
    if any(n < 0 for n in sizes):
        raise ArgumentError(f"split sizes must be non-negative, got {sizes}")
    if total > len(examples):
        raise SizeError(total, len(examples))
    order = np.random.default_rng(seed).permutation(len(examples))
    picked = [examples[i] for i in order[:total]]
    return DatasetSplit(
        train=tuple(picked[:n_train]),
        val=tuple(picked[n_train : n_train + n_val]),
        test=tuple(picked[n_train + n_val : total]),
        seed=seed,
    )


def build_candidate_pool(
    train: list[CandidateExample] | tuple[CandidateExample, ...],
    pool_size: int,
    seed: int,
) -> list[CandidateExample]:
    """Draw the fixed candidate pool: a seeded sample of distinct training items."""
    if pool_size < 1:
        raise ArgumentError(f"pool_size must be >= 1, got {pool_size}")
    if pool_size > len(train):
        raise SizeError(pool_size, len(train), what="training examples")
    order = np.random.default_rng(seed).permutation(len(train))
    return [train[i] for i in order[:pool_size]]
