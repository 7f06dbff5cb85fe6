"""From-scratch ROUGE-1/2/L and BLEU for evaluation reports.

Tokenization is lowercase whitespace splitting with punctuation stripped
from token edges. F1 is the headline number; recall and precision are
emitted alongside.
"""
from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass

from .errors import ArgumentError

_PUNCT = string.punctuation


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCT)
        if token:
            tokens.append(token)
    return tokens


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _prf(overlap: float, ref_total: int, cand_total: int) -> tuple[float, float, float]:
    recall = overlap / ref_total if ref_total else 0.0
    precision = overlap / cand_total if cand_total else 0.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision > 0 else 0.0
    return recall, precision, f1


def rouge_n(reference: str, candidate: str, n: int) -> tuple[float, float, float]:
    """(recall, precision, f1) of clipped n-gram overlap, n in {1, 2}."""
    if n not in (1, 2):
        raise ArgumentError(f"rouge_n supports n in {{1, 2}}, got {n}")
    ref = _ngrams(tokenize(reference), n)
    cand = _ngrams(tokenize(candidate), n)
    if not ref or not cand:
        return (1.0, 1.0, 1.0) if reference == candidate else (0.0, 0.0, 0.0)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _prf(overlap, sum(ref.values()), sum(cand.values()))


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for token_a in a:
        cur = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if token_a == token_b else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(reference: str, candidate: str) -> tuple[float, float, float]:
    """(recall, precision, f1) from the token-level longest common subsequence."""
    ref = tokenize(reference)
    cand = tokenize(candidate)
    if not ref or not cand:
        return (1.0, 1.0, 1.0) if reference == candidate else (0.0, 0.0, 0.0)
    return _prf(_lcs_length(ref, cand), len(ref), len(cand))


def bleu(reference: str, candidate: str) -> float:
    """Single-reference BLEU-4 with add-one smoothing on zero counts.

    Geometric mean of modified n-gram precisions for n = 1..4; a zero
    match count for order n is smoothed to 1 / (total_n + 1). Brevity
    penalty exp(1 - |ref| / |cand|) applies when the candidate is shorter.
    """
    ref = tokenize(reference)
    cand = tokenize(candidate)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        ref_ngrams = _ngrams(ref, n)
        cand_ngrams = _ngrams(cand, n)
        total = sum(cand_ngrams.values())
        matches = sum(min(count, ref_ngrams[gram]) for gram, count in cand_ngrams.items())
        precision = matches / total if matches > 0 else 1.0 / (total + 1)
        log_sum += math.log(precision)
    brevity = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum / 4.0)


@dataclass(frozen=True)
class ItemScores:
    rouge1: tuple[float, float, float]
    rouge2: tuple[float, float, float]
    rougeL: tuple[float, float, float]
    bleu: float

    def as_dict(self) -> dict:
        return {
            "rouge1": {"recall": self.rouge1[0], "precision": self.rouge1[1], "f1": self.rouge1[2]},
            "rouge2": {"recall": self.rouge2[0], "precision": self.rouge2[1], "f1": self.rouge2[2]},
            "rougeL": {"recall": self.rougeL[0], "precision": self.rougeL[1], "f1": self.rougeL[2]},
            "bleu": self.bleu,
        }


@dataclass(frozen=True)
class MetricReport:
    per_item: tuple[ItemScores, ...]
    empty: bool

    @property
    def corpus(self) -> dict:
        if not self.per_item:
            return {"rouge1": 0.0, "rouge2": 0.0, "rougeL": 0.0, "bleu": 0.0}
        count = len(self.per_item)
        return {
            "rouge1": sum(item.rouge1[2] for item in self.per_item) / count,
            "rouge2": sum(item.rouge2[2] for item in self.per_item) / count,
            "rougeL": sum(item.rougeL[2] for item in self.per_item) / count,
            "bleu": sum(item.bleu for item in self.per_item) / count,
        }

    def as_dict(self) -> dict:
        return {
            "per_item": [item.as_dict() for item in self.per_item],
            "corpus": self.corpus,
            "empty": self.empty,
        }


def score_pair(reference: str, candidate: str) -> ItemScores:
    return ItemScores(
        rouge1=rouge_n(reference, candidate, 1),
        rouge2=rouge_n(reference, candidate, 2),
        rougeL=rouge_l(reference, candidate),
        bleu=bleu(reference, candidate),
    )


def score_corpus(pairs) -> MetricReport:
    """pairs: iterable of (reference, candidate)."""
    items = tuple(score_pair(ref, cand) for ref, cand in pairs)
    return MetricReport(per_item=items, empty=not items)
