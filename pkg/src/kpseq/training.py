"""Adam training loop, validation-based checkpoint selection and checkpoint I/O."""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import model as M
from .compute import ParameterStore, Tape, backward
from .corpus import Document, Vocabulary, build_vocabulary, split_present_absent
from .decoding import MAX_SOURCE_LEN, InferenceModel, extract_phrases, greedy
from .evaluation import partition_predictions, prf_at_k
from .ordering import OrderingStrategy, assemble_target, decode_ids, encode_source, example_rng, order_phrases

log = logging.getLogger(__name__)

MAX_TARGET_LEN = 60
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    ordering: str = "appear-ap"
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    coverage_weight: float = 1.0
    seed: int = 7
    validation_size: int = 500
    eval_every: int = 1000
    preset: str = "base"

    def __post_init__(self):
        self.ordering = OrderingStrategy.parse(self.ordering).value
        for name in ("epochs", "batch_size", "validation_size", "eval_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{_key(name)} must be a positive integer")
        for name in ("learning_rate", "clip_norm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{_key(name)} must be positive")
        if self.coverage_weight < 0:
            raise ValueError("coverage-weight must be >= 0")
        if self.preset not in M.PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(sorted(M.PRESETS))}")

    def to_dict(self) -> dict:
        return {_key(k): v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        if not isinstance(data, dict):
            raise ValueError("train config must be a JSON object")
        known = {_key(f.name): f.name for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown train config key(s): {', '.join(unknown)}; valid keys: {', '.join(known)}")
        return cls(**{known[k]: v for k, v in data.items()})

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
        return cls.from_dict(data)


def _key(name: str) -> str:
    return name.replace("_", "-")


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: ParameterStore) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.items()}, {k: np.zeros_like(a) for k, a in params.items()})


BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float | None) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients together so their global norm is at most ``clip_norm``."""
    norm = global_norm(grads)
    if clip_norm is None or norm <= clip_norm:
        return grads, norm
    s = clip_norm / norm
    return {k: g * s for k, g in grads.items()}, norm


def adam_update(
    params: ParameterStore, grads: dict[str, np.ndarray], state: AdamState, lr: float, clip_norm: float | None = None
) -> float:
    """One in-place Adam step after global-norm clipping; returns the pre-clip norm."""
    for name in params.names():
        g = grads.get(name)
        if g is None:
            raise TrainingError(f"missing gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise TrainingError(f"gradient for {name!r} has shape {g.shape}, expected {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    grads, norm = clip_gradients(grads, clip_norm)
    state.step += 1
    c1 = 1.0 - BETA1**state.step
    c2 = 1.0 - BETA2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return norm


# ---------------------------------------------------------------------------
# examples
# ---------------------------------------------------------------------------


@dataclass
class Example:
    doc: Document
    source_ids: list[int]
    oov: list[str]


def prepare(docs: Sequence[Document], vocab: Vocabulary) -> list[Example]:
    out = []
    for d in docs:
        ids, oov = encode_source(d, vocab)
        if not ids:
            raise TrainingError(f"document {d.id} has an empty source")
        out.append(Example(d, ids[:MAX_SOURCE_LEN], oov))
    return out


def target_for(ex: Example, vocab: Vocabulary, ordering: str, seed: int, epoch: int) -> list[int]:
    strategy = OrderingStrategy.parse(ordering)
    rng = example_rng(seed, ex.doc.id, epoch) if strategy.uses_rng else None
    phrases = order_phrases(strategy, split_present_absent(ex.doc), ex.doc.gold_phrases, rng)
    ids = assemble_target(phrases, vocab, ex.doc, ex.oov, strategy.value, seed).ids
    if len(ids) > MAX_TARGET_LEN:
        ids = ids[: MAX_TARGET_LEN - 1] + [ids[-1]]
    return ids


def example_loss(cfg: M.ModelConfig, params: ParameterStore, ex: Example, target: list[int]):
    tape = Tape()
    leaves = tape.watch(params)
    loss = M.sequence_loss(tape, leaves, cfg, ex.source_ids, target, len(ex.oov))
    return loss.item(), backward(tape, loss, leaves)


def predict_phrases(model: InferenceModel, vocab: Vocabulary, ex: Example, max_len: int = MAX_TARGET_LEN):
    hyp = greedy(model, ex.source_ids, len(ex.oov), max_len)
    tokens = decode_ids(hyp.tokens, vocab, ex.oov)
    return extract_phrases([tokens], "self-term")[0]


def present_f1_at_5(cfg: M.ModelConfig, params: ParameterStore, vocab: Vocabulary, examples: Sequence[Example]) -> float:
    """Macro present F1@5 of greedy decodes; documents with no present gold are skipped."""
    model = InferenceModel(cfg, params)
    scores = []
    for ex in examples:
        gold = split_present_absent(ex.doc).present_phrases
        if not gold:
            continue
        preds, _ = partition_predictions(predict_phrases(model, vocab, ex), ex.doc)
        scores.append(prf_at_k(preds, gold, 5).f1)
    return float(np.mean(scores)) if scores else 0.0


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class CheckpointMeta:
    step: int
    epoch: int
    valid_f1_at_5: float
    created: str = ""
    vocab_file: str = "vocab.txt"


@dataclass
class Checkpoint:
    model_config: M.ModelConfig
    params: ParameterStore
    vocab: Vocabulary
    meta: CheckpointMeta
    train_config: TrainConfig | None = None
    history: list[dict] = field(default_factory=list)


def train(
    docs: Sequence[Document],
    config: TrainConfig,
    vocab: Vocabulary | None = None,
    valid_docs: Sequence[Document] | None = None,
    progress: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Minimise the mean per-example sequence loss with Adam.

    Without ``valid_docs`` the first ``validation-size`` training documents are
    used for checkpoint selection.  Every ``eval-every`` optimizer steps, and
    once after the last step, greedy present F1@5 on the validation set is
    measured; the parameters with the highest score (earliest on ties) are
    returned.
    """
    if not docs:
        raise TrainingError("training corpus is empty")
    if vocab is None:
        vocab = build_vocabulary(docs)
    cfg = M.ModelConfig.from_preset(config.preset, vocab.size, coverage_weight=config.coverage_weight)
    params = M.init_params(cfg, seed=config.seed)
    examples = prepare(docs, vocab)
    valid = prepare(valid_docs, vocab) if valid_docs else examples[: config.validation_size]
    state = AdamState.zeros(params)
    order_rng = np.random.default_rng([config.seed, 1])
    best: Checkpoint | None = None
    history = []
    step = 0
    t0 = time.time()

    def evaluate(epoch: int):
        nonlocal best
        f1 = present_f1_at_5(cfg, params, vocab, valid)
        history.append({"step": step, "epoch": epoch, "valid_f1_at_5": f1})
        log.info("step %d epoch %d valid F1@5 %.4f (%.1fs)", step, epoch, f1, time.time() - t0)
        if best is None or f1 > best.meta.valid_f1_at_5:
            meta = CheckpointMeta(step, epoch, f1, datetime.now(timezone.utc).isoformat(timespec="seconds"))
            best = Checkpoint(cfg, params.copy(), vocab, meta, config)

    last_eval = -1
    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(examples))
        for start in range(0, len(perm), config.batch_size):
            batch = [examples[i] for i in perm[start : start + config.batch_size]]
            total = {k: np.zeros_like(a) for k, a in params.items()}
            batch_loss = 0.0
            for ex in batch:
                loss, grads = example_loss(cfg, params, ex, target_for(ex, vocab, config.ordering, config.seed, epoch))
                if not math.isfinite(loss):
                    raise TrainingError(f"loss diverged (non-finite) at step {step + 1}")
                batch_loss += loss
                for k, g in grads.items():
                    total[k] += g
            scale = 1.0 / len(batch)
            for g in total.values():
                g *= scale
            adam_update(params, total, state, config.learning_rate, config.clip_norm)
            step += 1
            if progress is not None:
                progress({"step": step, "epoch": epoch, "loss": batch_loss * scale})
            if step % config.eval_every == 0:
                evaluate(epoch)
                last_eval = step
    if last_eval != step:
        evaluate(config.epochs - 1)
    best.history = history
    return best


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def encode_params(params: ParameterStore) -> bytes:
    """[u32 name len][utf8 name][u32 ndim][u32 dims...][f32 data...] per tensor, little-endian."""
    parts = []
    for name, arr in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_params(blob: bytes) -> dict[str, np.ndarray]:
    out = {}
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedCheckpointError("truncated tensor record")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        if name in out:
            raise CheckpointError(f"duplicate tensor {name!r} in params.bin")
        out[name] = data.astype(np.float64)
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "meta": asdict(ckpt.meta),
        "model": ckpt.model_config.to_dict(),
        "train": ckpt.train_config.to_dict() if ckpt.train_config else None,
        "history": ckpt.history,
        "tensors": ckpt.params.names(),
    }
    ckpt.vocab.save(path / ckpt.meta.vocab_file)
    (path / "params.bin").write_bytes(encode_params(ckpt.params))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise CheckpointError(f"no manifest.json in {path}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{mpath}: invalid JSON ({e.msg})") from None
    if "format_version" not in manifest:
        raise CheckpointVersionError(f"{mpath}: missing format_version")
    if manifest["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{mpath}: unsupported format_version {manifest['format_version']!r} (expected {FORMAT_VERSION})"
        )
    cfg = M.ModelConfig(**manifest["model"])
    meta = CheckpointMeta(**manifest["meta"])
    vocab = Vocabulary.load(path / meta.vocab_file)
    if vocab.size != cfg.vocab_size:
        raise CheckpointShapeError(f"vocabulary has {vocab.size} tokens, model expects {cfg.vocab_size}")
    tensors = decode_params((path / "params.bin").read_bytes())
    expected = M.param_shapes(cfg)
    missing = [n for n in expected if n not in tensors]
    extra = [n for n in tensors if n not in expected]
    if missing or extra:
        raise CheckpointShapeError(f"tensor set mismatch: missing {missing}, unexpected {extra}")
    params = ParameterStore()
    for name, shape in expected.items():
        if tensors[name].shape != tuple(shape):
            raise CheckpointShapeError(f"tensor {name!r} has shape {tensors[name].shape}, expected {tuple(shape)}")
        params.add(name, tensors[name])
    train_cfg = TrainConfig.from_dict(manifest["train"]) if manifest.get("train") else None
    return Checkpoint(cfg, params, vocab, meta, train_cfg, manifest.get("history", []))
