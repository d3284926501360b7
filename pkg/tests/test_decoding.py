import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tiny_model
from kpseq.corpus import EOS, SyntheticSpec, build_vocabulary, generate_synthetic
from kpseq.decoding import (
    BeamConfig,
    InferenceModel,
    beam_search,
    decode_corpus,
    decode_document,
    extract_phrases,
    greedy,
    max_workers,
    read_predictions,
    split_sequence,
    write_predictions,
)
from kpseq.model import ModelConfig, init_params

sys.path.insert(0, str(Path(__file__).parent / "oracles"))
from beam_oracle import enumerate_best, scalar_score  # noqa: E402


def model(seed, vocab=5, hidden=4, scale=1.5):
    cfg, store = tiny_model(seed, vocab=vocab, embed=hidden, hidden=hidden, scale=scale, bias_scale=1.0)
    return InferenceModel(cfg, store), store


def test_beam_config_validation():
    with pytest.raises(ValueError):
        BeamConfig(width=0)
    with pytest.raises(ValueError):
        BeamConfig(max_len=0)
    with pytest.raises(ValueError):
        BeamConfig(mode="sample")


def test_empty_source_is_error():
    m, _ = model(0)
    with pytest.raises(ValueError):
        beam_search(m, [], 0)
    with pytest.raises(ValueError):
        greedy(m, [], 0)


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_beam_one_equals_greedy(seed, L):
    m, _ = model(seed, vocab=9)
    src = np.random.default_rng(seed).integers(5, 11, size=L)
    g = greedy(m, src, 2, max_len=8)
    b = beam_search(m, src, 2, BeamConfig(width=1, max_len=8)).best
    assert b.tokens == g.tokens and b.finished == g.finished


@pytest.mark.parametrize("seed", range(4))
def test_wide_beam_matches_enumeration(seed):
    m, store = model(seed)
    src = [4, 3, 1]
    tokens, score, n = enumerate_best(m, src, 0, 4)
    assert n == 1 + 4 + 16 + 64
    best = beam_search(m, src, 0, BeamConfig(width=625, max_len=4, early_stop=False)).best
    assert best.tokens == tokens and best.score == score
    assert scalar_score(store, 5, src, 0, tokens) == pytest.approx(score, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_early_stop_matches_full_depth(seed):
    m, _ = model(seed, vocab=7)
    src = [5, 6, 5]
    full = beam_search(m, src, 0, BeamConfig(width=4, max_len=12, early_stop=False))
    early = beam_search(m, src, 0, BeamConfig(width=4, max_len=12, early_stop=True))
    assert early.best.tokens == full.best.tokens and early.best.score == full.best.score
    assert early.steps <= full.steps


@given(st.integers(0, 10_000))
def test_hypothesis_invariants(seed):
    m, _ = model(seed, vocab=8)
    out = beam_search(m, [5, 6, 7], 1, BeamConfig(width=3, max_len=6))
    finished = [h for h in out.hypotheses if h.finished]
    trunc = [h for h in out.hypotheses if not h.finished]
    assert out.hypotheses == finished + trunc
    for group in (finished, trunc):
        scores = [h.score for h in group]
        assert scores == sorted(scores, reverse=True)
    for h in out.hypotheses:
        assert (h.tokens[-1] == EOS) == h.finished and h.score <= 0
        assert EOS not in h.tokens[:-1]
        if not h.finished:
            assert len(h.tokens) == 6


def test_completed_pool_can_exceed_width():
    # completed hypotheses vacate their slots, so more than `width` can finish
    counts = []
    for seed in range(10):
        m, store = model(seed, vocab=8, scale=0.5)
        store["out.b"][EOS] += 1.5
        m = InferenceModel(m.cfg, store)
        out = beam_search(m, [5, 6], 0, BeamConfig(width=2, max_len=10, early_stop=False))
        counts.append(sum(h.finished for h in out.hypotheses))
    assert max(counts) > 2


def test_split_sequence():
    assert split_sequence(["a", "<sep>", "b", "c", "<eos>"]) == [["a"], ["b", "c"]]
    assert split_sequence(["<sep>", "<sep>", "<eos>"]) == []
    assert split_sequence(["a", "<eos>", "b"]) == [["a"]]


def test_extract_phrases():
    seqs = [["x", "<sep>", "y", "<eos>"], ["y", "<sep>", "z", "<eos>"]]
    assert extract_phrases(seqs, "overgen") == ([["x"], ["y"], ["z"]], 4)
    assert extract_phrases(seqs, "self-term") == ([["x"], ["y"]], 2)
    assert extract_phrases([["nets", "<sep>", "net"]]) == ([["nets"]], 2)
    with pytest.raises(ValueError):
        extract_phrases(seqs, "beam")


@given(st.lists(st.lists(st.sampled_from(["a", "b", "nets", "net", "<sep>"]), max_size=6), max_size=4))
def test_extract_idempotent(seqs):
    phrases, _ = extract_phrases(seqs)
    again, _ = extract_phrases([sum([p + ["<sep>"] for p in phrases], [])])
    assert again == phrases


@pytest.fixture(scope="module")
def small_setup():
    docs = generate_synthetic(SyntheticSpec(num_docs=6, seed=2))
    vocab = build_vocabulary(docs)
    cfg = ModelConfig(vocab.size, 8, 8, 8, preset="tiny")
    return docs, vocab, cfg, init_params(cfg, seed=3, scale=0.5)


@pytest.mark.parametrize("mode", ["overgen", "self-term"])
def test_decode_document_record(small_setup, mode):
    docs, vocab, cfg, params = small_setup
    rec = decode_document(InferenceModel(cfg, params), vocab, docs[0], BeamConfig(width=3, max_len=8, mode=mode))
    assert set(rec) == {"id", "sequences", "phrases", "stats"}
    s = rec["stats"]
    assert s["unique_kp"] == len(rec["phrases"]) <= s["total_kp"]
    assert s["beams"] == len(rec["sequences"])
    if mode == "self-term":
        assert s["beams"] == 1


def test_decode_corpus_threads_and_round_trip(small_setup, tmp_path, monkeypatch):
    docs, vocab, cfg, params = small_setup
    conf = BeamConfig(width=3, max_len=8)
    serial = decode_corpus(cfg, params, vocab, docs, conf, tmp_path / "a.jsonl")
    monkeypatch.setenv("KPSEQ_THREADS", "3")
    assert max_workers() == 3
    parallel = decode_corpus(cfg, params, vocab, docs, conf, tmp_path / "b.jsonl")
    assert serial == parallel
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert read_predictions(tmp_path / "a.jsonl") == serial


def test_max_workers_validation(monkeypatch):
    monkeypatch.setenv("KPSEQ_THREADS", "zero")
    with pytest.raises(ValueError):
        max_workers()
    monkeypatch.delenv("KPSEQ_THREADS")
    assert max_workers() == 1


def test_read_predictions_errors(tmp_path):
    f = tmp_path / "p.jsonl"
    f.write_text('{"id": "a", "phrases": []}\n{oops\n')
    with pytest.raises(ValueError, match="line 2"):
        read_predictions(f)
    f.write_text('{"id": "a"}\n')
    with pytest.raises(ValueError, match="phrases"):
        read_predictions(f)
    write_predictions([], f)
    assert read_predictions(f) == []
