"""Tape-based reverse-mode autodiff over dense real arrays.

Arrays are float64 by default.  A tape may be built with a wider dtype
(``np.longdouble``) for finite-difference oracles; such tapes run on the numpy
kernels since the numba kernels are compiled for float64.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels as K


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape", "parents", "backward_fn", "name")

    def __init__(self, data, tape=None, requires_grad=False, parents=(), backward_fn=None, name=None):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


class RowGrad:
    """Sparse gradient touching only some rows of a parent (rows may repeat)."""

    __slots__ = ("rows", "values")

    def __init__(self, rows: np.ndarray, values: np.ndarray):
        self.rows = rows
        self.values = values

    def dense(self, shape, dtype) -> np.ndarray:
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, self.rows, self.values)
        return full


class Tape:
    """Ordered record of primitive applications.

    With ``grad=False`` nothing is recorded and no backward closures are kept;
    the tape then only carries the dtype and kernel table for inference.
    """

    def __init__(self, grad: bool = True, dtype=np.float64):
        self.grad_enabled = grad
        self.dtype = np.dtype(dtype)
        self.k = K.for_dtype(self.dtype)
        self.nodes: list[Tensor] = []

    def constant(self, data) -> Tensor:
        return Tensor(np.asarray(data, dtype=self.dtype), self)

    def leaf(self, data, name=None) -> Tensor:
        t = Tensor(np.array(data, dtype=self.dtype), self, requires_grad=self.grad_enabled, name=name)
        if self.grad_enabled:
            self.nodes.append(t)
        return t

    def watch(self, store) -> dict[str, Tensor]:
        """Leaf tensors for every parameter of a ParameterStore."""
        return {name: self.leaf(arr, name) for name, arr in store.items()}

    def record(self, data, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
        if self.grad_enabled:
            for p in parents:
                if p.requires_grad:
                    t = Tensor(data, self, True, parents, backward_fn)
                    self.nodes.append(t)
                    return t
        return Tensor(data, self)


def _tape_of(*ts: Tensor) -> Tape:
    for t in ts:
        if t.tape is not None:
            return t.tape
    raise ValueError("operands are not attached to a tape")


def backward(tape: Tape, loss: Tensor, params: dict[str, Tensor] | None = None) -> dict[str, np.ndarray]:
    """Propagate d(loss)/d(node) through the tape in reverse creation order.

    Gradients accumulate additively where a node feeds several consumers.
    Returns gradients for ``params`` (zeros for unreachable ones).
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    if not tape.grad_enabled:
        raise ValueError("tape was created with grad=False")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None or node.backward_fn is None:
            continue
        grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                if isinstance(pg, RowGrad):
                    parent.grad = pg.dense(parent.data.shape, tape.dtype)
                else:
                    parent.grad = np.array(pg, dtype=tape.dtype)
            elif isinstance(pg, RowGrad):
                np.add.at(parent.grad, pg.rows, pg.values)
            else:
                parent.grad += pg
    if params is None:
        return {}
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.items()}


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives
# ---------------------------------------------------------------------------


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return _tape_of(a, b).record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return _tape_of(a, b).record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _tape_of(a, b).record(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _tape_of(a).record(a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x (B, N) + b (N,): the only broadcast the library supports."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ShapeError(f"add_bias: bias {b.data.shape} does not fit {x.data.shape}")
    return _tape_of(x, b).record(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """x (B, N) times a per-row scalar s (B, 1)."""
    if s.data.shape != (x.data.shape[0], 1):
        raise ShapeError(f"scale_rows: scale {s.data.shape} does not fit {x.data.shape}")
    xd, sd = x.data, s.data
    return _tape_of(x, s).record(xd * sd, (x, s), lambda g: (g * sd, (g * xd).sum(axis=1, keepdims=True)))


def one_minus(x: Tensor) -> Tensor:
    return _tape_of(x).record(1.0 - x.data, (x,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {ad.shape} by {bd.shape}")
    return _tape_of(a, b).record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map x @ W.T + b for row-batched x (B, in) and W (out, in)."""
    xd, Wd = x.data, W.data
    if xd.ndim != 2 or Wd.ndim != 2 or xd.shape[1] != Wd.shape[1]:
        raise ShapeError(f"linear: input {xd.shape} does not match weight {W.name or 'W'} {Wd.shape}")
    out = xd @ Wd.T
    if b is None:
        return _tape_of(x, W).record(out, (x, W), lambda g: (g @ Wd, g.T @ xd))
    if b.data.shape != (Wd.shape[0],):
        raise ShapeError(f"linear: bias {b.name or 'b'} {b.data.shape} does not match weight {Wd.shape}")
    out += b.data
    return _tape_of(x, W, b).record(out, (x, W, b), lambda g: (g @ Wd, g.T @ xd, g.sum(axis=0)))


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return linear(x, W, b)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _tape_of(x).record(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _tape_of(x).record(y, (x,), lambda g: (g * (1.0 - y * y),))


def softmax_array(v, kernels=None) -> np.ndarray:
    """Numerically stable softmax over the last axis of a plain array."""
    v = np.asarray(v)
    if v.dtype.kind != "f":
        v = v.astype(np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    k = kernels or K.for_dtype(v.dtype)
    if v.ndim == 1:
        return k["softmax_rows"](np.ascontiguousarray(v[None, :]))[0]
    return k["softmax_rows"](np.ascontiguousarray(v))


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax of a (B, N) tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax expects (B, N), got {x.data.shape}")
    tape = _tape_of(x)
    y = softmax_array(x.data, tape.k)

    def bw(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return tape.record(y, (x,), bw)


def log(x: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log with inputs floored at ``floor`` (zero gradient below it)."""
    xd = x.data
    clipped = np.maximum(xd, floor)
    mask = xd >= floor
    return _tape_of(x).record(np.log(clipped), (x,), lambda g: (np.where(mask, g / clipped, 0.0),))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "minimum")
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return _tape_of(a, b).record(out, (a, b), lambda g: (np.where(take_a, g, 0.0), np.where(take_a, 0.0, g)))


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a (1,) tensor."""
    shape = x.data.shape
    return _tape_of(x).record(np.array([x.data.sum()]), (x,), lambda g: (np.full(shape, g[0]),))


def concat(ts: Sequence[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in ts]
    out = np.concatenate(datas, axis=axis)
    ax = axis % out.ndim

    def bw(g):
        idx = [slice(None)] * g.ndim
        parts = []
        lo = 0
        for d in datas:
            hi = lo + d.shape[ax]
            idx[ax] = slice(lo, hi)
            parts.append(g[tuple(idx)])
            lo = hi
        return parts

    return _tape_of(*ts).record(out, tuple(ts), bw)


def columns(x: Tensor, lo: int, hi: int) -> Tensor:
    shape = x.data.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, lo:hi] = g
        return (full,)

    return _tape_of(x).record(x.data[:, lo:hi].copy(), (x,), bw)


def take_rows(x: Tensor, rows) -> Tensor:
    """Select rows of x (used to reorder beam states)."""
    rows = np.asarray(rows, dtype=np.int64)
    shape = x.data.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, rows, g)
        return (full,)

    return _tape_of(x).record(x.data[rows], (x,), bw)


def stack_rows(ts: Iterable[Tensor]) -> Tensor:
    """Concatenate (1, N) tensors into an (L, N) tensor."""
    return concat(list(ts), axis=0)


def embedding_gather(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    n = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"embedding id out of range [0, {n})")
    return _tape_of(table).record(table.data[ids], (table,), lambda g: (RowGrad(ids, g),))


def scatter_add(base: Tensor, idx, add_: Tensor) -> Tensor:
    """out[b, idx[i]] += add_[b, i], accumulating repeated indices."""
    idx = np.ascontiguousarray(np.asarray(idx, dtype=np.int64).reshape(-1))
    bd, ad = base.data, add_.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape != (bd.shape[0], idx.size):
        raise ShapeError(f"scatter_add: addend {ad.shape} does not fit base {bd.shape} / {idx.size} indices")
    if idx.size and (idx.min() < 0 or idx.max() >= bd.shape[1]):
        raise IndexError(f"scatter_add index out of range [0, {bd.shape[1]})")
    tape = _tape_of(base, add_)
    k = tape.k
    out = k["scatter_add"](np.ascontiguousarray(bd), idx, np.ascontiguousarray(ad))

    def bw(g):
        return g, k["gather_cols"](np.ascontiguousarray(g), idx)

    return tape.record(out, (base, add_), bw)


def pad_columns(x: Tensor, extra: int) -> Tensor:
    if extra == 0:
        return x
    B, N = x.data.shape
    out = np.zeros((B, N + extra), dtype=x.data.dtype)
    out[:, :N] = x.data
    return _tape_of(x).record(out, (x,), lambda g: (g[:, :N],))


def pick(x: Tensor, cols) -> Tensor:
    """x[b, cols[b]] for each row, shape (B,)."""
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(x.data.shape[0])
    shape = x.data.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[rows, cols] = g
        return (full,)

    return _tape_of(x).record(x.data[rows, cols], (x,), bw)


# ---------------------------------------------------------------------------
# fused primitives used by the model
# ---------------------------------------------------------------------------


def gru_cell(x: Tensor, h: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Fused GRU cell.

    W has shape (3H, I + H) with row blocks [update; reset; candidate] acting on
    [x; h] (update, reset) and [x; r*h] (candidate); b has shape (3H,).
    """
    xd, hd, Wd, bd = x.data, h.data, W.data, b.data
    B, I = xd.shape
    H = hd.shape[1]
    if hd.shape[0] != B:
        raise ShapeError(f"gru_cell: state h has batch {hd.shape[0]}, input x has batch {B}")
    if Wd.shape != (3 * H, I + H):
        raise ShapeError(f"gru_cell: weight {W.name or 'W'} has shape {Wd.shape}, expected {(3 * H, I + H)}")
    if bd.shape != (3 * H,):
        raise ShapeError(f"gru_cell: bias {b.name or 'b'} has shape {bd.shape}, expected {(3 * H,)}")
    tape = _tape_of(x, h, W, b)
    k = tape.k
    W_x = Wd[:, :I]
    Whzr = np.ascontiguousarray(Wd[: 2 * H, I:])
    Whn = np.ascontiguousarray(Wd[2 * H :, I:])
    hd = np.ascontiguousarray(hd)
    out, zr, n, rh = k["gru_rows_forward"](xd @ W_x.T + bd, hd, Whzr, Whn)

    def bw(g):
        d_pre, dh = k["gru_rows_backward"](np.ascontiguousarray(g), hd, zr, n, Whzr, Whn)
        dW = np.empty_like(Wd)
        dW[:, :I] = d_pre.T @ xd
        dW[: 2 * H, I:] = d_pre[:, : 2 * H].T @ hd
        dW[2 * H :, I:] = d_pre[:, 2 * H :].T @ rh
        return d_pre @ W_x, dh, dW, d_pre.sum(axis=0)

    return tape.record(out, (x, h, W, b), bw)


def gru_sequence(xs: Tensor, h0: Tensor, W: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Run a GRU over the rows of xs (L, I) from state h0 (1, H); states (L, H).

    Same cell as ``gru_cell``, fused over time so that the input projections and
    weight gradients are single matrix products.  With ``reverse`` the sequence
    is consumed last row first; output row i is still the state at position i.
    """
    xd, h0d, Wd, bd = xs.data, h0.data, W.data, b.data
    L, I = xd.shape
    H = h0d.shape[1]
    if h0d.shape != (1, H):
        raise ShapeError(f"gru_sequence: initial state has shape {h0d.shape}, expected (1, H)")
    if Wd.shape != (3 * H, I + H):
        raise ShapeError(f"gru_sequence: weight {W.name or 'W'} has shape {Wd.shape}, expected {(3 * H, I + H)}")
    if bd.shape != (3 * H,):
        raise ShapeError(f"gru_sequence: bias {b.name or 'b'} has shape {bd.shape}, expected {(3 * H,)}")
    if L == 0:
        raise ShapeError("gru_sequence: empty input sequence")
    tape = _tape_of(xs, h0, W, b)
    k = tape.k
    order = np.arange(L)[::-1] if reverse else np.arange(L)
    X = xd[order]
    W_x = Wd[:, :I]
    Whzr = np.ascontiguousarray(Wd[: 2 * H, I:])
    Whn = np.ascontiguousarray(Wd[2 * H :, I:])
    hs, zr, nn, rh = k["gru_scan_forward"](X @ W_x.T + bd, np.ascontiguousarray(h0d[0]), Whzr, Whn)
    out = np.empty((L, H), dtype=xd.dtype)
    out[order] = hs[1:]

    def bw(g):
        d_pre, dh0 = k["gru_scan_backward"](np.ascontiguousarray(g[order]), hs, zr, nn, Whzr, Whn)
        dW = np.empty_like(Wd)
        dW[:, :I] = d_pre.T @ X
        dW[: 2 * H, I:] = d_pre[:, : 2 * H].T @ hs[:-1]
        dW[2 * H :, I:] = d_pre[:, 2 * H :].T @ rh
        dX = np.empty_like(xd)
        dX[order] = d_pre @ W_x
        return dX, dh0[None, :], dW, d_pre.sum(axis=0)

    return tape.record(out, (xs, h0, W, b), bw)


def additive_energy(enc: Tensor, dec: Tensor, cov: Tensor | None, w_cov: Tensor | None, v: Tensor) -> Tensor:
    """energy[b, i] = v . tanh(enc[i] + dec[b] + cov[b, i] * w_cov).

    enc (L, A) and dec (B, A) are already-projected states (decoder bias folded
    into dec).  Without coverage, pass ``cov=None, w_cov=None``.
    """
    L, A = enc.data.shape
    B = dec.data.shape[0]
    if dec.data.shape[1] != A or v.data.shape != (A,):
        raise ShapeError(f"additive_energy: enc {enc.data.shape}, dec {dec.data.shape}, v {v.data.shape}")
    if cov is None:
        cov_d = np.zeros((B, L), dtype=enc.data.dtype)
        wc_d = np.zeros(A, dtype=enc.data.dtype)
        parents = (enc, dec, v)
    else:
        cov_d, wc_d = cov.data, w_cov.data
        if cov_d.shape != (B, L) or wc_d.shape != (A,):
            raise ShapeError(f"additive_energy: coverage {cov_d.shape} / w_cov {wc_d.shape}")
        parents = (enc, dec, cov, w_cov, v)
    tape = _tape_of(*parents)
    k = tape.k
    cov_c = np.ascontiguousarray(cov_d)
    out, act = k["energy_forward"](np.ascontiguousarray(enc.data), np.ascontiguousarray(dec.data), cov_c, wc_d, v.data)

    def bw(g):
        d_enc, d_dec, d_cov, d_wcov, d_v = k["energy_backward"](np.ascontiguousarray(g), act, cov_c, wc_d, v.data)
        if cov is None:
            return d_enc, d_dec, d_v
        return d_enc, d_dec, d_cov, d_wcov, d_v

    return tape.record(out, parents, bw)


def coverage_attention(enc: Tensor, dec: Tensor, w_cov: Tensor, v: Tensor) -> Tensor:
    """Attention for T decoder rows at once, coverage threaded through the rows.

    Row t is softmax_i(v . tanh(enc[i] + dec[t] + c_t[i] * w_cov)) with
    c_0 = 0 and c_{t+1} = c_t + alpha_t.  Returns (T, 2L): alpha in the first L
    columns and the coverage each row attended with in the last L.
    """
    L, A = enc.data.shape
    T = dec.data.shape[0]
    if dec.data.shape[1] != A or v.data.shape != (A,) or w_cov.data.shape != (A,):
        raise ShapeError(
            f"coverage_attention: enc {enc.data.shape}, dec {dec.data.shape}, w_cov {w_cov.data.shape}, v {v.data.shape}"
        )
    tape = _tape_of(enc, dec, w_cov, v)
    k = tape.k
    wd, vd = w_cov.data, v.data
    alpha, cov, act = k["coverage_attention_forward"](np.ascontiguousarray(enc.data), np.ascontiguousarray(dec.data), wd, vd)

    def bw(g):
        g = np.ascontiguousarray(g)
        return k["coverage_attention_backward"](
            np.ascontiguousarray(g[:, :L]), np.ascontiguousarray(g[:, L:]), alpha, cov, act, wd, vd
        )

    return tape.record(np.concatenate([alpha, cov], axis=1), (enc, dec, w_cov, v), bw)


def sigmoid_gate(inputs: Sequence[Tensor], weights: Sequence[Tensor], b: Tensor) -> Tensor:
    """sigmoid(sum_k inputs[k] @ weights[k].T + b) for (1, n_k) weight rows; output (B, 1)."""
    pre = b.data + sum(x.data @ w.data.T for x, w in zip(inputs, weights))
    y = _sigmoid(pre)
    xs = [x.data for x in inputs]
    ws = [w.data for w in weights]

    def bw(g):
        d = g * y * (1.0 - y)  # (B, 1)
        dxs = [d @ w for w in ws]
        dws = [d.T @ x for x in xs]
        return (*dxs, *dws, d.sum(axis=0))

    parents = (*inputs, *weights, b)
    return _tape_of(*parents).record(y, parents, bw)


def copy_mix(p_vocab: Tensor, p_gen: Tensor, alpha: Tensor, source_ids, n_oov: int) -> Tensor:
    """p_gen * [p_vocab, 0...] + (1 - p_gen) * alpha scattered onto source_ids.

    p_vocab (B, V), p_gen (B, 1), alpha (B, L); output (B, V + n_oov).
    """
    pv, pg, al = p_vocab.data, p_gen.data, alpha.data
    B, V = pv.shape
    idx = np.ascontiguousarray(np.asarray(source_ids, dtype=np.int64).reshape(-1))
    if al.shape != (B, idx.size) or pg.shape != (B, 1):
        raise ShapeError(f"copy_mix: alpha {al.shape}, p_gen {pg.shape} for {idx.size} source ids")
    if idx.size and (idx.min() < 0 or idx.max() >= V + n_oov):
        raise IndexError(f"copy_mix: source id outside extended vocabulary [0, {V + n_oov})")
    tape = _tape_of(p_vocab, p_gen, alpha)
    k = tape.k
    base = np.zeros((B, V + n_oov), dtype=pv.dtype)
    base[:, :V] = pv * pg
    copy_w = np.ascontiguousarray(al * (1.0 - pg))
    out = k["scatter_add"](base, idx, copy_w)

    def bw(g):
        g = np.ascontiguousarray(g)
        g_src = k["gather_cols"](g, idx)
        gv = g[:, :V]
        d_pv = gv * pg
        d_pg = (gv * pv).sum(axis=1, keepdims=True) - (g_src * al).sum(axis=1, keepdims=True)
        d_al = g_src * (1.0 - pg)
        return d_pv, d_pg, d_al

    return tape.record(out, (p_vocab, p_gen, alpha), bw)


def nll_at(probs: Tensor, cols, floor: float = 1e-12) -> Tensor:
    """-log(max(probs[b, cols[b]], floor)) per row, shape (B,)."""
    cols = np.asarray(cols, dtype=np.int64).reshape(-1)
    rows = np.arange(probs.data.shape[0])
    p = probs.data[rows, cols]
    clipped = np.maximum(p, floor)
    live = p >= floor
    shape = probs.data.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[rows, cols] = np.where(live, -g / clipped, 0.0)
        return (full,)

    return _tape_of(probs).record(-np.log(clipped), (probs,), bw)


def coverage_penalty(alpha: Tensor, cov: Tensor) -> Tensor:
    """sum_i min(alpha[b, i], cov[b, i]) per row, shape (B,)."""
    _check_same(alpha, cov, "coverage_penalty")
    take_a = alpha.data <= cov.data
    out = np.where(take_a, alpha.data, cov.data).sum(axis=1)

    def bw(g):
        gb = g[:, None]
        return np.where(take_a, gb, 0.0), np.where(take_a, 0.0, gb)

    return _tape_of(alpha, cov).record(out, (alpha, cov), bw)
