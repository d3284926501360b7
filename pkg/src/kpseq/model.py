"""Bi-GRU encoder, GRU decoder with additive attention, copy gate and coverage."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import compute as C
from .compute import ParameterStore, Tape, Tensor
from .corpus import BOS, EOS, PAD, UNK

PRESETS = {
    "base": dict(embed_dim=64, enc_hidden=128, dec_hidden=128),
    "big": dict(embed_dim=128, enc_hidden=512, dec_hidden=512),
}

PROB_FLOOR = 1e-12


@dataclass
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    enc_hidden: int = 128
    dec_hidden: int = 128
    coverage: bool = True
    coverage_weight: float = 1.0
    preset: str = "base"

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ValueError("vocab_size must cover the 5 special tokens")
        if min(self.embed_dim, self.enc_hidden, self.dec_hidden) < 1:
            raise ValueError("model dimensions must be positive")
        if self.coverage_weight < 0:
            raise ValueError("coverage_weight must be >= 0")

    @classmethod
    def from_preset(cls, preset: str, vocab_size: int, **overrides) -> "ModelConfig":
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        kw = dict(PRESETS[preset])
        kw.update(overrides)
        return cls(vocab_size=vocab_size, preset=preset, **kw)

    @property
    def attn_dim(self) -> int:
        return self.dec_hidden

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    V, E, H, D, A = cfg.vocab_size, cfg.embed_dim, cfg.enc_hidden, cfg.dec_hidden, cfg.attn_dim
    shapes = {
        "embedding": (V, E),
        "enc_fwd.W": (3 * H, E + H),
        "enc_fwd.b": (3 * H,),
        "enc_bwd.W": (3 * H, E + H),
        "enc_bwd.b": (3 * H,),
        "bridge.W": (D, 2 * H),
        "bridge.b": (D,),
        "dec.W": (3 * D, E + D),
        "dec.b": (3 * D,),
        "attn.W_e": (A, 2 * H),
        "attn.W_d": (A, D),
        "attn.b": (A,),
        "attn.v": (A,),
        "out.W": (V, D + 2 * H),
        "out.b": (V,),
        "gen.w_c": (1, 2 * H),
        "gen.w_d": (1, D),
        "gen.w_x": (1, E),
        "gen.b": (1,),
    }
    if cfg.coverage:
        shapes["attn.w_cov"] = (A,)
    return shapes


def _is_bias(name: str) -> bool:
    return name.endswith(".b")


def init_params(cfg: ModelConfig, seed: int = 0, scale: float = 0.1) -> ParameterStore:
    """uniform(-scale, scale) weights, zero biases."""
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for name, shape in param_shapes(cfg).items():
        if _is_bias(name):
            store.add(name, np.zeros(shape))
        else:
            store.add(name, rng.uniform(-scale, scale, size=shape))
    return store


class EncoderOutput(NamedTuple):
    states: Tensor  # (L, 2H)
    projected: Tensor  # (L, A) = states @ W_e.T
    init_state: Tensor  # (1, D)


class DecoderState(NamedTuple):
    h: Tensor  # (B, D)
    coverage: Tensor  # (B, L)
    t: int


class StepOutput(NamedTuple):
    attention: Tensor  # (B, L)
    context: Tensor  # (B, 2H)
    p_gen: Tensor  # (B, 1)
    final: Tensor  # (B, V + n_oov)
    p_vocab: Tensor  # (B, V)


def embed_ids(ids, vocab_size: int) -> np.ndarray:
    """Extended ids have no embedding row and embed as UNK."""
    ids = np.asarray(ids, dtype=np.int64)
    return np.where(ids >= vocab_size, UNK, ids)


def encode(tape: Tape, P: dict[str, Tensor], cfg: ModelConfig, source_ids: Sequence[int]) -> EncoderOutput:
    L = len(source_ids)
    if L == 0:
        raise ValueError("cannot encode an empty source")
    ids = embed_ids(source_ids, cfg.vocab_size)
    emb = C.embedding_gather(P["embedding"], ids)
    h0 = tape.constant(np.zeros((1, cfg.enc_hidden)))
    fwd = C.gru_sequence(emb, h0, P["enc_fwd.W"], P["enc_fwd.b"])
    bwd = C.gru_sequence(emb, h0, P["enc_bwd.W"], P["enc_bwd.b"], reverse=True)
    states = C.concat([fwd, bwd], axis=1)
    ends = C.concat([C.take_rows(fwd, [L - 1]), C.take_rows(bwd, [0])], axis=1)
    init = C.tanh(C.linear(ends, P["bridge.W"], P["bridge.b"]))
    projected = C.linear(states, P["attn.W_e"])
    return EncoderOutput(states, projected, init)


def initial_state(tape: Tape, enc: EncoderOutput, batch: int = 1) -> DecoderState:
    L = enc.states.shape[0]
    h = enc.init_state if batch == 1 else C.take_rows(enc.init_state, [0] * batch)
    return DecoderState(h, tape.constant(np.zeros((batch, L))), 0)


def attention_step(
    P: dict[str, Tensor], cfg: ModelConfig, h_d: Tensor, enc: EncoderOutput, coverage: Tensor | None
) -> tuple[Tensor, Tensor]:
    """alpha = softmax(v . tanh(W_e h_e + W_d h_d + w_cov c + b)); context = alpha @ H_e."""
    dec_proj = C.linear(h_d, P["attn.W_d"], P["attn.b"])
    if cfg.coverage:
        energy = C.additive_energy(enc.projected, dec_proj, coverage, P["attn.w_cov"], P["attn.v"])
    else:
        energy = C.additive_energy(enc.projected, dec_proj, None, None, P["attn.v"])
    alpha = C.softmax(energy)
    return alpha, C.matmul(alpha, enc.states)


def output_distribution(
    P: dict[str, Tensor],
    cfg: ModelConfig,
    x: Tensor,
    h: Tensor,
    alpha: Tensor,
    context: Tensor,
    source_ids: np.ndarray,
    n_oov: int,
) -> tuple[Tensor, Tensor, Tensor]:
    """Row-wise p_vocab, p_gen and the mixed extended-vocabulary distribution."""
    p_vocab = C.softmax(C.linear(C.concat([h, context], axis=1), P["out.W"], P["out.b"]))
    p_gen = C.sigmoid_gate((context, h, x), (P["gen.w_c"], P["gen.w_d"], P["gen.w_x"]), P["gen.b"])
    return p_vocab, p_gen, C.copy_mix(p_vocab, p_gen, alpha, source_ids, n_oov)


def _embed_prev(P, cfg, prev_ids, n_oov) -> Tensor:
    prev = np.asarray(prev_ids, dtype=np.int64).reshape(-1)
    ext = cfg.vocab_size + n_oov
    if prev.size and (prev.min() < 0 or prev.max() >= ext):
        raise ValueError(f"token id outside extended vocabulary [0, {ext})")
    return C.embedding_gather(P["embedding"], embed_ids(prev, cfg.vocab_size))


def decode_step(
    tape: Tape,
    P: dict[str, Tensor],
    cfg: ModelConfig,
    prev_ids: Sequence[int],
    state: DecoderState,
    enc: EncoderOutput,
    source_ids: np.ndarray,
    n_oov: int,
) -> tuple[StepOutput, DecoderState]:
    x = _embed_prev(P, cfg, prev_ids, n_oov)
    h = C.gru_cell(x, state.h, P["dec.W"], P["dec.b"])
    alpha, context = attention_step(P, cfg, h, enc, state.coverage)
    p_vocab, p_gen, final = output_distribution(P, cfg, x, h, alpha, context, source_ids, n_oov)
    new_cov = C.add(state.coverage, alpha)
    return StepOutput(alpha, context, p_gen, final, p_vocab), DecoderState(h, new_cov, state.t + 1)


def validate_target(target_ids: Sequence[int]) -> None:
    if not target_ids or target_ids[-1] != EOS:
        raise ValueError("target must end with EOS")
    for i, t in enumerate(target_ids[:-1]):
        if t in (PAD, BOS):
            raise ValueError(f"target contains PAD/BOS at position {i}")


def sequence_loss(
    tape: Tape,
    P: dict[str, Tensor],
    cfg: ModelConfig,
    source_ids: Sequence[int],
    target_ids: Sequence[int],
    n_oov: int,
    return_parts: bool = False,
):
    """(1/T) * sum_t [-log final_t(y_t) + lambda * sum_i min(alpha_t_i, c_t_i)], teacher forced from BOS."""
    validate_target(target_ids)
    src = np.asarray(source_ids, dtype=np.int64)
    enc = encode(tape, P, cfg, src)
    state = initial_state(tape, enc)
    T = len(target_ids)
    lam = cfg.coverage_weight
    inputs = [BOS] + list(target_ids[:-1])
    xs = _embed_prev(P, cfg, inputs, n_oov)
    # The decoder is fed only the previous token, so its states do not depend on
    # attention and come from one scan; only coverage is carried step to step.
    hs = C.gru_sequence(xs, state.h, P["dec.W"], P["dec.b"])
    dec_proj = C.linear(hs, P["attn.W_d"], P["attn.b"])
    L = len(src)
    if cfg.coverage:
        both = C.coverage_attention(enc.projected, dec_proj, P["attn.w_cov"], P["attn.v"])
        alpha_all, covs = C.columns(both, 0, L), C.columns(both, L, 2 * L)
    else:
        alpha_all = C.softmax(C.additive_energy(enc.projected, dec_proj, None, None, P["attn.v"]))
        if lam > 0:
            covs = C.matmul(tape.constant(np.tri(T, k=-1)), alpha_all)
    contexts = C.matmul(alpha_all, enc.states)
    _, _, final = output_distribution(P, cfg, xs, hs, alpha_all, contexts, src, n_oov)
    nll = C.total(C.nll_at(final, list(target_ids), PROB_FLOOR))
    loss = nll
    if lam > 0:
        pen = C.total(C.coverage_penalty(alpha_all, covs))
        loss = C.add(nll, C.scale(pen, lam))
    loss = C.scale(loss, 1.0 / T)
    if return_parts:
        return loss, nll.item() / T, (pen.item() / T if lam > 0 else 0.0)
    return loss
