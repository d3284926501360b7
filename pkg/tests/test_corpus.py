import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kpseq.corpus import (
    BOS,
    EOS,
    PAD,
    SEP,
    SPECIAL_TOKENS,
    UNK,
    CorpusError,
    Document,
    SyntheticSpec,
    Vocabulary,
    build_vocabulary,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
    split_present_absent,
    stem,
    stem_phrase,
    synthetic_partition,
    tokenize,
)

words = st.sampled_from("a b c ab ba nets net networks network run runs running x y".split())
phrases = st.lists(words, min_size=1, max_size=3)


def doc(source, gold, did="d"):
    return Document(did, [], list(source), [list(g) for g in gold])


@pytest.mark.parametrize(
    "text,tokens",
    [
        ("", []),
        ("Neural Keyphrase Generation.", ["neural", "keyphrase", "generation", "."]),
        ("published in 2019", ["published", "in", "<digit>"]),
        ("Seq2Seq, (copy)", ["seq2seq", ",", "(", "copy", ")"]),
    ],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


@given(st.text(max_size=60))
def test_tokenize_deterministic_lowercase(text):
    toks = tokenize(text)
    assert toks == tokenize(text)
    assert all(t == "<digit>" or t == t.lower() for t in toks)
    assert all(not t.isdigit() for t in toks)


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=14))
def test_stem_idempotent(word):
    assert stem(stem(word)) == stem(word)
    assert stem(word) == stem(word).lower()


def test_split_examples():
    p = split_present_absent(doc(["a", "b", "c"], [["b", "c"], ["x"]]))
    assert p.present == [(["b", "c"], 1)] and p.absent == [["x"]]
    p = split_present_absent(doc(["a", "b", "a", "b"], [["a", "b"]]))
    assert p.present == [(["a", "b"], 0)]


def test_split_collapses_stemmed_duplicates():
    p = split_present_absent(doc(["run", "net"], [["net"], ["nets"], ["x"], ["x"]]))
    assert p.present == [(["net"], 1)] and p.absent == [["x"]]


@given(st.lists(words, max_size=12), st.lists(phrases, max_size=6))
def test_partition_totality_and_soundness(source, gold):
    d = doc(source, gold)
    p = split_present_absent(d)
    distinct = {stem_phrase(g) for g in gold}
    assert len(p.present) + len(p.absent) == len(distinct)
    src = stem_phrase(source)
    for phrase, pos in p.present:
        n = len(phrase)
        assert src[pos : pos + n] == stem_phrase(phrase)
        assert all(src[i : i + n] != stem_phrase(phrase) for i in range(pos))
    for phrase in p.absent:
        n = len(phrase)
        assert all(src[i : i + n] != stem_phrase(phrase) for i in range(len(src)))


def test_document_invariants():
    d = Document("d", ["t"], ["a", "b"], [["x"]])
    assert d.source_tokens == ["t", "a", "b"]
    with pytest.raises(CorpusError):
        Document("d", [], [], [[]])


def test_vocabulary_examples():
    docs = [doc(["a", "a", "a", "b"], [])]
    v = build_vocabulary(docs, 7)
    assert v.id_to_token[:5] == list(SPECIAL_TOKENS)
    assert (v.id("a"), v.id("b")) == (5, 6)
    v6 = build_vocabulary(docs, 6)
    assert "b" not in v6 and v6.id("b") == UNK
    tie = build_vocabulary([doc(["b", "a", "b", "a"], [])], 10)
    assert tie.id("a") < tie.id("b")
    assert build_vocabulary([], 10).size == 5
    assert (PAD, UNK, BOS, EOS, SEP) == (0, 1, 2, 3, 4)
    with pytest.raises(CorpusError):
        build_vocabulary(docs, 5)


def test_vocabulary_counts_targets_too():
    v = build_vocabulary([doc(["a"], [["zz"], ["zz"]])], 10)
    assert v.id("zz") == 5


def test_vocabulary_round_trip(tmp_path):
    v = build_vocabulary(generate_synthetic(SyntheticSpec(num_docs=5)), 100)
    for i in range(v.size):
        assert v.id(v.token(i)) == i
    v.save(tmp_path / "vocab.txt")
    assert Vocabulary.load(tmp_path / "vocab.txt").id_to_token == v.id_to_token
    with pytest.raises(CorpusError):
        Vocabulary(["a", "b"])


def test_load_jsonl(tmp_path):
    f = tmp_path / "d.jsonl"
    f.write_text(json.dumps({"title": "t", "abstract": "a", "keywords": "x;y z"}) + "\n")
    (d,) = load_jsonl(f)
    assert d.gold_phrases == [["x"], ["y", "z"]] and d.id == "1"
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert load_jsonl(empty) == []


def test_load_jsonl_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    with pytest.raises(CorpusError, match="line 1"):
        load_jsonl(bad)
    missing = tmp_path / "m.jsonl"
    missing.write_text(json.dumps({"title": "t", "keywords": "x"}) + "\n")
    with pytest.raises(CorpusError, match="abstract"):
        load_jsonl(missing)


def test_jsonl_round_trip(tmp_path):
    docs = generate_synthetic(SyntheticSpec(num_docs=4, seed=3))
    save_jsonl(docs, tmp_path / "c.jsonl")
    back = load_jsonl(tmp_path / "c.jsonl")
    assert [(d.id, d.source_tokens, d.gold_phrases) for d in back] == [
        (d.id, d.source_tokens, d.gold_phrases) for d in docs
    ]


def test_synthetic_examples():
    a = generate_synthetic(SyntheticSpec(seed=7))
    b = generate_synthetic(SyntheticSpec(seed=7))
    assert len(a) == 100
    assert [(d.source_tokens, d.gold_phrases) for d in a] == [(d.source_tokens, d.gold_phrases) for d in b]
    none_absent = generate_synthetic(SyntheticSpec(num_docs=30, absent_fraction=0.0))
    assert all(split_present_absent(d).absent == [] for d in none_absent)


def test_synthetic_a5_shape():
    docs = generate_synthetic(SyntheticSpec(num_docs=100, seed=7))
    assert build_vocabulary(docs).size <= 300
    counts = [len(d.gold_phrases) for d in docs]
    assert min(counts) >= 3 and max(counts) <= 6
    absent = sum(len(split_present_absent(d).absent) for d in docs) / sum(counts)
    assert 0.15 <= absent <= 0.25


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_synthetic_partition_recovered(seed, frac):
    for d in generate_synthetic(SyntheticSpec(num_docs=3, seed=seed, absent_fraction=frac)):
        p = split_present_absent(d)
        pres, absn = synthetic_partition(d)
        assert {stem_phrase(x) for x in p.present_phrases} == pres
        assert {stem_phrase(x) for x in p.absent} == absn


def test_synthetic_infeasible():
    with pytest.raises(CorpusError):
        generate_synthetic(SyntheticSpec(doc_length=(5, 8), phrases_per_doc=(3, 6)))
    with pytest.raises(CorpusError):
        generate_synthetic(SyntheticSpec(absent_fraction=1.5))
    with pytest.raises(CorpusError):
        generate_synthetic(SyntheticSpec(phrases_per_doc=(4, 2)))
