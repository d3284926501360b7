"""Greedy and beam-search decoding, phrase extraction and prediction files."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model as M
from .compute import ParameterStore, Tape, Tensor
from .corpus import EOS, SPECIAL_TOKENS, BOS, Document, Phrase, Vocabulary, stem_phrase
from .ordering import decode_ids, encode_source

MODES = ("overgen", "self-term")
EOS_TOKEN = SPECIAL_TOKENS[EOS]
SEP_TOKEN = SPECIAL_TOKENS[4]
MAX_SOURCE_LEN = 400


@dataclass(frozen=True)
class BeamConfig:
    width: int = 10
    max_len: int = 60
    early_stop: bool = True
    mode: str = "overgen"

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"beam width must be >= 1, got {self.width}")
        if self.max_len < 1:
            raise ValueError(f"max decode length must be >= 1, got {self.max_len}")
        if self.mode not in MODES:
            raise ValueError(f"unknown decode mode {self.mode!r}; choose from {', '.join(MODES)}")


@dataclass
class Hypothesis:
    tokens: list[int]
    score: float
    finished: bool = False
    state: M.DecoderState | None = field(default=None, repr=False, compare=False)

    @property
    def truncated(self) -> bool:
        return not self.finished


@dataclass
class DecodedOutput:
    hypotheses: list[Hypothesis]  # finished by score, then truncated by score
    steps: int
    phrases: list[Phrase] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]


class InferenceModel:
    """Frozen parameters bound to a no-grad tape for decoding."""

    def __init__(self, cfg: M.ModelConfig, params: ParameterStore):
        self.cfg = cfg
        self.tape = Tape(grad=False)
        self.P = {name: Tensor(np.asarray(arr, dtype=np.float64), self.tape, name=name) for name, arr in params.items()}

    def encode(self, source_ids) -> M.EncoderOutput:
        return M.encode(self.tape, self.P, self.cfg, source_ids)

    def step(self, prev_ids, state, enc, source_ids, n_oov):
        return M.decode_step(self.tape, self.P, self.cfg, prev_ids, state, enc, source_ids, n_oov)


def _log_probs(final: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(final, M.PROB_FLOOR))


def _rank(pool: list[Hypothesis]) -> list[Hypothesis]:
    # stable: equal scores keep completion order
    return sorted(pool, key=lambda h: -h.score)


def beam_search(
    model: InferenceModel, source_ids: Sequence[int], n_oov: int, config: BeamConfig = BeamConfig()
) -> DecodedOutput:
    """Beam search on cumulative log-probability (no length normalisation).

    Each step expands every live hypothesis over the extended vocabulary and
    walks candidates best-first: EOS candidates join the completed pool and
    the walk continues until ``width`` live hypotheses are refilled.  With
    ``early_stop`` the search ends once the best completed score is at least
    the best live score; appending tokens can only lower a score, so nothing
    live can overtake it.
    """
    src = np.asarray(source_ids, dtype=np.int64)
    if src.size == 0:
        raise ValueError("cannot decode an empty source")
    enc = model.encode(src)
    live = [Hypothesis([], 0.0, state=M.initial_state(model.tape, enc, 1))]
    done: list[Hypothesis] = []
    steps = 0
    stopped = False
    while live and steps < config.max_len:
        # Hypotheses are stepped one row at a time so a score never depends on
        # which other hypotheses share the beam.
        rows, states = [], []
        for h in live:
            out, st = model.step([h.tokens[-1] if h.tokens else BOS], h.state, enc, src, n_oov)
            rows.append(h.score + _log_probs(out.final.data[0]))
            states.append(st)
        steps += 1
        flat = np.concatenate(rows)
        n_ext = rows[0].shape[0]
        nxt = []
        for idx in np.argsort(-flat, kind="stable"):
            if len(nxt) == config.width:
                break
            row, tok = divmod(int(idx), n_ext)
            if tok == EOS:
                done.append(Hypothesis(live[row].tokens + [tok], float(flat[idx]), True))
            else:
                nxt.append(Hypothesis(live[row].tokens + [tok], float(flat[idx]), state=states[row]))
        live = nxt
        if config.early_stop and done and live and max(h.score for h in done) >= live[0].score:
            stopped = True
            break
    # live hypotheses are returned (flagged) only when the length limit cut them off
    truncated = [] if stopped else _rank(live)
    return DecodedOutput(_rank(done) + truncated, steps)


def greedy(model: InferenceModel, source_ids: Sequence[int], n_oov: int, max_len: int = 60) -> Hypothesis:
    """Argmax decoding; lowest id wins ties."""
    src = np.asarray(source_ids, dtype=np.int64)
    if src.size == 0:
        raise ValueError("cannot decode an empty source")
    enc = model.encode(src)
    state = M.initial_state(model.tape, enc, 1)
    tokens, score, prev = [], 0.0, BOS
    for _ in range(max_len):
        out, state = model.step([prev], state, enc, src, n_oov)
        lp = _log_probs(out.final.data)[0]
        prev = int(np.argmax(lp))
        tokens.append(prev)
        score += float(lp[prev])
        if prev == EOS:
            return Hypothesis(tokens, score, True)
    return Hypothesis(tokens, score, False)


def split_sequence(tokens: Sequence[str]) -> list[Phrase]:
    """Split on SEP, dropping EOS and empty segments."""
    out, cur = [], []
    for t in tokens:
        if t == EOS_TOKEN:
            break
        if t == SEP_TOKEN:
            if cur:
                out.append(cur)
            cur = []
        else:
            cur.append(t)
    if cur:
        out.append(cur)
    return out


def extract_phrases(sequences: Sequence[Sequence[str]], mode: str = "overgen") -> tuple[list[Phrase], int]:
    """Ranked unique phrases and the pre-dedup phrase count.

    ``sequences`` are token lists already ranked by score.  ``overgen`` pools
    every sequence in (rank, position) order; ``self-term`` reads only the top
    one.  Duplicates by stemmed form keep their first occurrence.
    """
    if mode not in MODES:
        raise ValueError(f"unknown decode mode {mode!r}; choose from {', '.join(MODES)}")
    if mode == "self-term":
        sequences = sequences[:1]
    seen, out, total = set(), [], 0
    for seq in sequences:
        for p in split_sequence(seq):
            total += 1
            key = stem_phrase(p)
            if key not in seen:
                seen.add(key)
                out.append(p)
    return out, total


def decode_document(
    model: InferenceModel, vocab: Vocabulary, doc: Document, config: BeamConfig = BeamConfig()
) -> dict:
    """Decode one document into a predictions record."""
    ids, oov = encode_source(doc, vocab)
    result = beam_search(model, ids[:MAX_SOURCE_LEN], len(oov), config)
    used = [h for h in result.hypotheses if h.finished] or result.hypotheses[:1]
    if config.mode == "self-term":
        used = used[:1]
    seqs = [decode_ids([t for t in h.tokens if t != EOS], vocab, oov) for h in used]
    phrases, total = extract_phrases(seqs, config.mode)
    lengths = [len(s) for s in seqs]
    return {
        "id": doc.id,
        "sequences": [{"tokens": s, "score": h.score} for s, h in zip(seqs, used)],
        "phrases": phrases,
        "stats": {
            "beams": len(used),
            "mean_beam_len": float(np.mean(lengths)) if lengths else 0.0,
            "unique_kp": len(phrases),
            "total_kp": total,
        },
    }


def max_workers(default: int = 1) -> int:
    raw = os.environ.get("KPSEQ_THREADS")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"KPSEQ_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"KPSEQ_THREADS must be a positive integer, got {raw!r}")
    return n


def decode_corpus(
    cfg: M.ModelConfig,
    params: ParameterStore,
    vocab: Vocabulary,
    docs: Sequence[Document],
    config: BeamConfig = BeamConfig(),
    out_path=None,
) -> list[dict]:
    """Decode every document; records keep input order regardless of workers."""
    workers = min(max_workers(), max(len(docs), 1))
    if workers == 1:
        model = InferenceModel(cfg, params)
        records = [decode_document(model, vocab, d, config) for d in docs]
    else:
        # one tape per worker thread: tapes are not shared
        chunks = [list(range(i, len(docs), workers)) for i in range(workers)]

        def run(chunk):
            m = InferenceModel(cfg, params)
            return [(i, decode_document(m, vocab, docs[i], config)) for i in chunk]

        with ThreadPoolExecutor(workers) as ex:
            pairs = [p for part in ex.map(run, chunks) for p in part]
        records = [r for _, r in sorted(pairs, key=lambda p: p[0])]
    if out_path is not None:
        write_predictions(records, out_path)
    return records


def write_predictions(records: Sequence[dict], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=False) + "\n")


def read_predictions(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {n}: invalid JSON ({e.msg})") from None
            for key in ("id", "phrases"):
                if key not in rec:
                    raise ValueError(f"{path}: line {n}: missing field {key!r}")
            out.append(rec)
    return out
