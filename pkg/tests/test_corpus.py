import json

import pytest

from promptopt.corpus import (
    CandidateExample,
    build_candidate_pool,
    load_dataset,
    split,
    to_record,
)
from promptopt.errors import (
    ArgumentError,
    DatasetParseError,
    EmptyDatasetError,
    SchemaError,
    SizeError,
)


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


def test_alpaca_field_mapping_and_context_canonicalization(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [{"instruction": "Add 2+2", "input": "", "output": "4"}])
    [ex] = load_dataset(path, "alpaca_jsonl")
    assert ex == CandidateExample(query="Add 2+2", context=None, response="4")


def test_dolly_field_mapping(tmp_path):
    path = write_jsonl(
        tmp_path / "d.jsonl",
        [{"instruction": "Summarize", "context": "long text", "response": "short"}],
    )
    [ex] = load_dataset(path, "dolly_jsonl")
    assert ex.query == "Summarize"
    assert ex.context == "long text"
    assert ex.response == "short"


def test_missing_response_field_names_field(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [{"instruction": "x"}])
    with pytest.raises(SchemaError) as err:
        load_dataset(path, "dolly_jsonl")
    assert err.value.field == "response"
    assert err.value.line_no == 1


def test_malformed_line_carries_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"instruction":"a","input":"","output":"b"}\n{oops\n', encoding="utf-8")
    with pytest.raises(DatasetParseError) as err:
        load_dataset(path, "alpaca_jsonl")
    assert err.value.line_no == 2


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(EmptyDatasetError):
        load_dataset(path, "alpaca_jsonl")


def test_empty_response_rejected(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [{"instruction": "a", "input": "", "output": ""}])
    with pytest.raises(SchemaError) as err:
        load_dataset(path, "alpaca_jsonl")
    assert err.value.field == "response"


def test_round_trip_both_formats(tmp_path):
    examples = [
        CandidateExample("q1", None, "r1"),
        CandidateExample("q2", "ctx", "r2"),
    ]
    for fmt in ("alpaca_jsonl", "dolly_jsonl"):
        path = write_jsonl(tmp_path / f"{fmt}.jsonl", [to_record(e, fmt) for e in examples])
        assert load_dataset(path, fmt) == examples


def make_examples(n):
    return [CandidateExample(f"q{i}", None, f"r{i}") for i in range(n)]


def test_split_standard_sizes():
    examples = make_examples(1800)
    ds = split(examples, seed=7, sizes=(200, 800, 800))
    assert (len(ds.train), len(ds.val), len(ds.test)) == (200, 800, 800)


def test_split_deterministic():
    examples = make_examples(50)
    a = split(examples, seed=3, sizes=(10, 20, 20))
    b = split(examples, seed=3, sizes=(10, 20, 20))
    assert a == b
    c = split(examples, seed=4, sizes=(10, 20, 20))
    assert a != c


def test_split_is_partition():
    examples = make_examples(40)
    ds = split(examples, seed=1, sizes=(10, 10, 15))
    parts = [set(e.query for e in chunk) for chunk in (ds.train, ds.val, ds.test)]
    assert parts[0] & parts[1] == set()
    assert parts[0] & parts[2] == set()
    assert parts[1] & parts[2] == set()
    assert sum(len(p) for p in parts) == 35


def test_split_insufficient_examples():
    with pytest.raises(SizeError) as err:
        split(make_examples(100), seed=0, sizes=(200, 800, 800))
    assert err.value.available == 100
    assert err.value.requested == 1800


def test_pool_is_deterministic_subset():
    train = make_examples(200)
    pool = build_candidate_pool(train, pool_size=20, seed=3)
    assert pool == build_candidate_pool(train, pool_size=20, seed=3)
    assert len(pool) == 20
    assert len(set(id(e) for e in pool)) == 20
    assert all(e in train for e in pool)


def test_pool_bounds():
    train = make_examples(5)
    assert len(build_candidate_pool(train, 1, seed=0)) == 1
    with pytest.raises(ArgumentError):
        build_candidate_pool(train, 0, seed=0)
    with pytest.raises(SizeError):
        build_candidate_pool(train, 6, seed=0)
