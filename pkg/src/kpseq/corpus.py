"""Dataset ingestion, tokenization, stemming, vocabularies and synthetic corpora."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from nltk.stem.porter import PorterStemmer

PAD, UNK, BOS, EOS, SEP = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>", "<sep>")
DIGIT = "<digit>"

_TOKEN_RE = re.compile(r"<digit>|\w+|[^\w\s]", re.UNICODE)
_stemmer = PorterStemmer()

Phrase = list[str]


class CorpusError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase word/punctuation tokens; digit-only tokens become ``<digit>``."""
    toks = _TOKEN_RE.findall(text.lower())
    return [DIGIT if t.isdigit() else t for t in toks]


@lru_cache(maxsize=1 << 16)
def stem(token: str) -> str:
    # Porter is not idempotent on every input; iterate to a fixed point.
    cur = token.lower()
    for _ in range(8):
        nxt = _stemmer.stem(cur)
        if nxt == cur:
            break
        cur = nxt
    return cur


def stem_phrase(phrase: Sequence[str]) -> tuple[str, ...]:
    return tuple(stem(t) for t in phrase)


@dataclass
class Document:
    id: str
    title_tokens: list[str]
    abstract_tokens: list[str]
    gold_phrases: list[Phrase]
    source_tokens: list[str] = field(init=False)

    def __post_init__(self):
        self.source_tokens = list(self.title_tokens) + list(self.abstract_tokens)
        for p in self.gold_phrases:
            if not p:
                raise CorpusError(f"document {self.id}: empty gold phrase")


@dataclass
class PhrasePartition:
    present: list[tuple[Phrase, int]]
    absent: list[Phrase]

    @property
    def present_phrases(self) -> list[Phrase]:
        return [p for p, _ in self.present]


def unique_phrases(phrases: Iterable[Sequence[str]]) -> list[Phrase]:
    """Drop phrases whose stemmed form was already seen, keeping first occurrence."""
    seen = set()
    out = []
    for p in phrases:
        key = stem_phrase(p)
        if key in seen:
            continue
        seen.add(key)
        out.append(list(p))
    return out


def find_occurrence(stemmed_source: Sequence[str], stemmed_phrase: Sequence[str]) -> int:
    """Earliest start index of a contiguous match, or -1."""
    n = len(stemmed_phrase)
    if n == 0:
        return -1
    first = stemmed_phrase[0]
    for i in range(len(stemmed_source) - n + 1):
        if stemmed_source[i] == first and tuple(stemmed_source[i : i + n]) == tuple(stemmed_phrase):
            return i
    return -1


def split_present_absent(doc: Document) -> PhrasePartition:
    src = stem_phrase(doc.source_tokens)
    present, absent = [], []
    for p in unique_phrases(doc.gold_phrases):
        pos = find_occurrence(src, stem_phrase(p))
        if pos >= 0:
            present.append((p, pos))
        else:
            absent.append(p)
    return PhrasePartition(present, absent)


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise CorpusError("vocabulary must start with the special tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise CorpusError("vocabulary contains duplicate tokens")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.id_to_token), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocabulary(docs: Iterable[Document], max_size: int = 50_000) -> Vocabulary:
    if max_size <= len(SPECIAL_TOKENS):
        raise CorpusError(f"max_size must exceed {len(SPECIAL_TOKENS)} special tokens")
    counts: Counter = Counter()
    for d in docs:
        counts.update(d.source_tokens)
        for p in d.gold_phrases:
            counts.update(p)
    for t in SPECIAL_TOKENS:
        counts.pop(t, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
    return Vocabulary(list(SPECIAL_TOKENS) + keep)


def split_keywords(field_value: str) -> list[Phrase]:
    out = []
    for chunk in field_value.split(";"):
        toks = tokenize(chunk)
        if toks:
            out.append(toks)
    return out


def document_from_record(rec: dict, default_id: str) -> Document:
    for name in ("title", "abstract", "keywords"):
        if name not in rec:
            raise CorpusError(f"missing field {name!r}")
        if not isinstance(rec[name], str):
            raise CorpusError(f"field {name!r} must be a string")
    return Document(
        id=str(rec.get("id", default_id)),
        title_tokens=tokenize(rec["title"]),
        abstract_tokens=tokenize(rec["abstract"]),
        gold_phrases=split_keywords(rec["keywords"]),
    )


def load_jsonl(path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}: line {lineno}: expected a JSON object")
            try:
                docs.append(document_from_record(rec, str(lineno)))
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from None
    return docs


def document_to_record(doc: Document) -> dict:
    return {
        "id": doc.id,
        "title": " ".join(doc.title_tokens),
        "abstract": " ".join(doc.abstract_tokens),
        "keywords": ";".join(" ".join(p) for p in doc.gold_phrases),
    }


def save_jsonl(docs: Iterable[Document], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(document_to_record(d), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    num_docs: int = 100
    vocab_pool: int = 280
    doc_length: tuple[int, int] = (24, 40)
    phrases_per_doc: tuple[int, int] = (3, 6)
    phrase_length: tuple[int, int] = (1, 3)
    absent_fraction: float = 0.2
    seed: int = 7

    def validate(self) -> None:
        for name in ("doc_length", "phrases_per_doc", "phrase_length"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 1:
                raise CorpusError(f"{name} range {lo}..{hi} is empty or non-positive")
        if not 0.0 <= self.absent_fraction <= 1.0:
            raise CorpusError(f"absent_fraction {self.absent_fraction} outside [0, 1]")
        if self.num_docs < 0:
            raise CorpusError("num_docs must be non-negative")
        # present phrases need their tokens plus one separator each inside the abstract
        need = self.phrases_per_doc[1] * (self.phrase_length[1] + 1)
        if need > self.doc_length[0]:
            raise CorpusError(
                f"infeasible spec: {self.phrases_per_doc[1]} phrases of up to {self.phrase_length[1]} tokens "
                f"do not fit in documents of {self.doc_length[0]} tokens"
            )
        if self.vocab_pool < 30:
            raise CorpusError("vocab_pool must be at least 30 tokens")


_ONSETS = "bdfgklmnprstvz"
_VOWELS = "aiou"


def _word_pool(n: int) -> list[str]:
    """Distinct pseudo-words that are their own stem and stem apart."""
    words, stems = [], set()
    for a in _ONSETS:
        for b in _VOWELS:
            for c in _ONSETS:
                for d in _VOWELS:
                    for e in _ONSETS:
                        w = a + b + c + d + e
                        s = stem(w)
                        if s != w or s in stems:
                            continue
                        stems.add(s)
                        words.append(w)
                        if len(words) == n:
                            return words
    raise CorpusError(f"cannot build {n} distinct synthetic words")


def generate_synthetic(spec: SyntheticSpec) -> list[Document]:
    """Documents whose present phrases sit verbatim in the abstract.

    The token pool is split into filler, present-phrase and absent-phrase
    words; the three pools are disjoint, so an absent phrase can never occur in
    the source and present phrases are found exactly where they were placed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    pool = _word_pool(spec.vocab_pool)
    n_filler = spec.vocab_pool // 2
    n_absent = max(spec.vocab_pool // 6, spec.phrase_length[1] * spec.phrases_per_doc[1])
    filler = pool[:n_filler]
    absent_pool = pool[n_filler : n_filler + n_absent]
    present_pool = pool[n_filler + n_absent :]
    if len(present_pool) < spec.phrases_per_doc[1] * spec.phrase_length[1]:
        raise CorpusError("vocab_pool too small for the requested phrases")

    docs = []
    for k in range(spec.num_docs):
        n_phr = int(rng.integers(spec.phrases_per_doc[0], spec.phrases_per_doc[1] + 1))
        n_abs = int(np.floor(spec.absent_fraction * n_phr + 0.5))
        n_pres = n_phr - n_abs
        lengths = rng.integers(spec.phrase_length[0], spec.phrase_length[1] + 1, size=n_phr)

        # every present token is used once per document so phrases cannot overlap
        pres_words = rng.choice(len(present_pool), size=int(lengths[:n_pres].sum()), replace=False)
        present, pos = [], 0
        for ln in lengths[:n_pres]:
            present.append([present_pool[j] for j in pres_words[pos : pos + ln]])
            pos += ln
        absent = []
        seen_abs = set()
        for ln in lengths[n_pres:]:
            while True:
                cand = tuple(absent_pool[j] for j in rng.choice(len(absent_pool), size=ln, replace=False))
                if cand not in seen_abs:
                    seen_abs.add(cand)
                    absent.append(list(cand))
                    break

        doc_len = int(rng.integers(spec.doc_length[0], spec.doc_length[1] + 1))
        title_len = int(rng.integers(2, 6))
        title = [filler[j] for j in rng.integers(0, len(filler), size=title_len)]
        # abstract: filler gaps around the present phrases in a random placement order
        body_len = max(doc_len - title_len, sum(len(p) + 1 for p in present) + 1)
        n_fill = body_len - sum(len(p) for p in present)
        place = rng.permutation(n_pres)
        # n_pres + 1 gaps; inner gaps need at least one filler token
        cuts = np.sort(rng.choice(np.arange(1, n_fill), size=n_pres, replace=False)) if n_pres else np.array([], int)
        gaps = np.diff(np.concatenate([[0], cuts, [n_fill]]))
        fill_words = [filler[j] for j in rng.integers(0, len(filler), size=n_fill)]
        abstract, f = [], 0
        for g_i, p_i in zip(gaps[:-1], place):
            abstract.extend(fill_words[f : f + g_i])
            f += g_i
            abstract.extend(present[p_i])
        abstract.extend(fill_words[f:])

        gold = present + absent
        order = rng.permutation(len(gold))
        docs.append(
            Document(
                id=f"syn-{k:05d}",
                title_tokens=title,
                abstract_tokens=abstract,
                gold_phrases=[gold[j] for j in order],
            )
        )
    return docs


def synthetic_partition(doc: Document) -> tuple[set, set]:
    """Stemmed (present, absent) phrase sets as intended by the generator.

    Only meaningful for documents built by :func:`generate_synthetic`: present
    phrases are exactly the gold phrases made of source tokens.
    """
    src = set(doc.source_tokens)
    pres = {stem_phrase(p) for p in doc.gold_phrases if all(t in src for t in p)}
    absn = {stem_phrase(p) for p in doc.gold_phrases} - pres
    return pres, absn
