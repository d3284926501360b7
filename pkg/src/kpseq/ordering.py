"""Target-phrase orderings and One2Seq target assembly."""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import EOS, SEP, UNK, Document, Phrase, PhrasePartition, Vocabulary, stem_phrase


class OrderingStrategy(enum.Enum):
    RANDOM = "random"
    NO_SORT = "no-sort"
    LENGTH = "length"
    ALPHA = "alpha"
    APPEAR_PRE = "appear-pre"
    APPEAR_AP = "appear-ap"

    @classmethod
    def parse(cls, name: "str | OrderingStrategy") -> "OrderingStrategy":
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown ordering {name!r}; valid orderings: {valid}") from None

    @property
    def uses_rng(self) -> bool:
        return self in (OrderingStrategy.RANDOM, OrderingStrategy.APPEAR_PRE, OrderingStrategy.APPEAR_AP)


ORDERING_NAMES = tuple(s.value for s in OrderingStrategy)


def example_rng(seed: int, example_id: str, epoch: int) -> np.random.Generator:
    """Per-example, per-epoch stream: independent of processing order."""
    return np.random.default_rng([int(seed), zlib.crc32(example_id.encode("utf-8")), int(epoch)])


def _shuffled(items: list, rng: np.random.Generator) -> list:
    # Fisher-Yates
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def order_phrases(
    strategy: "OrderingStrategy | str",
    partition: PhrasePartition,
    original_order: Sequence[Phrase],
    rng: np.random.Generator | None = None,
) -> list[Phrase]:
    strategy = OrderingStrategy.parse(strategy)
    phrases = [list(p) for p in original_order]
    if strategy.uses_rng and rng is None:
        raise ValueError(f"ordering {strategy.value!r} needs an rng")

    if strategy is OrderingStrategy.NO_SORT:
        return phrases
    if strategy is OrderingStrategy.RANDOM:
        return _shuffled(phrases, rng)
    if strategy is OrderingStrategy.LENGTH:
        return sorted(phrases, key=len)  # sorted() is stable
    if strategy is OrderingStrategy.ALPHA:
        keyed = [(p[0].lower(), p[1].lower() if len(p) > 1 else "", i) for i, p in enumerate(phrases)]
        return [phrases[k[2]] for k in sorted(keyed)]

    # appear-pre / appear-ap
    rank = {stem_phrase(p): i for i, p in enumerate(phrases)}
    present = sorted(partition.present, key=lambda e: (e[1], rank.get(stem_phrase(e[0]), 0)))
    present = [list(p) for p, _ in present]
    absent = _shuffled([list(p) for p in partition.absent], rng)
    if strategy is OrderingStrategy.APPEAR_PRE:
        return absent + present
    return present + absent


@dataclass
class TargetSequence:
    ids: list[int]
    phrase_count: int
    ordering: str | None = None
    seed: int | None = None

    def phrases(self) -> list[list[int]]:
        """Split on SEP with the trailing EOS dropped."""
        body = self.ids[:-1] if self.ids and self.ids[-1] == EOS else self.ids
        out, cur = [], []
        for t in body:
            if t == SEP:
                out.append(cur)
                cur = []
            else:
                cur.append(t)
        if body:
            out.append(cur)
        return out


def encode_source(doc: Document, vocab: Vocabulary) -> tuple[list[int], list[str]]:
    """Source ids over the extended vocabulary plus the per-document OOV list."""
    ids, oov, slot = [], [], {}
    for t in doc.source_tokens:
        i = vocab.token_to_id.get(t)
        if i is None:
            if t not in slot:
                slot[t] = len(oov)
                oov.append(t)
            i = vocab.size + slot[t]
        ids.append(i)
    return ids, oov


def token_id(token: str, vocab: Vocabulary, oov: Sequence[str]) -> int:
    i = vocab.token_to_id.get(token)
    if i is not None:
        return i
    try:
        return vocab.size + list(oov).index(token)
    except ValueError:
        return UNK


def assemble_target(
    phrases: Sequence[Phrase],
    vocab: Vocabulary,
    doc: Document,
    oov: Sequence[str] | None = None,
    ordering: str | None = None,
    seed: int | None = None,
) -> TargetSequence:
    if oov is None:
        _, oov = encode_source(doc, vocab)
    slot = {t: i for i, t in enumerate(oov)}
    ids: list[int] = []
    for k, p in enumerate(phrases):
        if k:
            ids.append(SEP)
        for t in p:
            i = vocab.token_to_id.get(t)
            if i is None:
                i = vocab.size + slot[t] if t in slot else UNK
            ids.append(i)
    ids.append(EOS)
    return TargetSequence(ids, len(phrases), ordering, seed)


def decode_ids(ids: Sequence[int], vocab: Vocabulary, oov: Sequence[str]) -> list[str]:
    out = []
    for i in ids:
        out.append(vocab.token(i) if i < vocab.size else oov[i - vocab.size])
    return out
