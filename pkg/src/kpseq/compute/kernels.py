"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``KPSEQ_NUMBA`` is not
set to ``0``.  Both paths compute the same functions; they may differ in the
last few ulps because numba and numpy use different ``tanh``/``exp``
implementations, but each path is deterministic on its own.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kw):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _flag_enabled() -> bool:
    return os.environ.get("KPSEQ_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = _HAVE_NUMBA and _flag_enabled()


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def energy_forward_np(enc, dec, cov, w_cov, v):
    """Additive attention energies.

    enc: (L, A) projected encoder states, dec: (B, A) projected decoder state
    (bias folded in), cov: (B, L) coverage, w_cov: (A,), v: (A,).
    Returns energies (B, L) and the tanh activations (B, L, A).
    """
    pre = enc[None, :, :] + dec[:, None, :] + cov[:, :, None] * w_cov[None, None, :]
    act = np.tanh(pre)
    return act @ v, act


def energy_backward_np(g, act, cov, w_cov, v):
    dpre = g[:, :, None] * v[None, None, :] * (1.0 - act * act)
    d_enc = dpre.sum(axis=0)
    d_dec = dpre.sum(axis=1)
    d_cov = dpre @ w_cov
    d_wcov = np.einsum("bia,bi->a", dpre, cov)
    d_v = np.einsum("bia,bi->a", act, g)
    return d_enc, d_dec, d_cov, d_wcov, d_v


def scatter_add_np(base, idx, add):
    out = base.copy()
    rows = np.arange(out.shape[0])[:, None]
    np.add.at(out, (rows, idx[None, :]), add)
    return out


def gather_cols_np(g, idx):
    return g[:, idx]


def gru_rows_forward_np(xp, h, Whzr, Whn):
    """One GRU step per row.

    xp: (B, 3H) input projections with bias, h: (B, H), Whzr: (2H, H) and
    Whn: (H, H) recurrent weights.  Returns h', [z r], candidate n and r*h.
    """
    H = h.shape[1]
    zr = 1.0 / (1.0 + np.exp(-(xp[:, : 2 * H] + h @ Whzr.T)))
    rh = zr[:, H:] * h
    n = np.tanh(xp[:, 2 * H :] + rh @ Whn.T)
    z = zr[:, :H]
    return h + z * (n - h), zr, n, rh


def gru_rows_backward_np(g, h, zr, n, Whzr, Whn):
    """Gradients of ``gru_rows_forward`` w.r.t. the pre-activations [z r n] and h."""
    H = h.shape[1]
    z, r = zr[:, :H], zr[:, H:]
    d_pre = np.empty((h.shape[0], 3 * H), dtype=g.dtype)
    d_n = g * z * (1.0 - n * n)
    d_rh = d_n @ Whn
    d_pre[:, :H] = g * (n - h) * z * (1.0 - z)
    d_pre[:, H : 2 * H] = d_rh * h * r * (1.0 - r)
    d_pre[:, 2 * H :] = d_n
    dh = g * (1.0 - z) + d_rh * r + d_pre[:, : 2 * H] @ Whzr
    return d_pre, dh


def gru_scan_forward_np(xp, h0, Whzr, Whn):
    """Chain ``gru_rows_forward`` over the rows of xp (L, 3H) from h0 (H,).

    Returns hs (L+1, H) with hs[0] = h0, and per-step zr, n, rh.
    """
    L = xp.shape[0]
    H = h0.shape[0]
    hs = np.empty((L + 1, H), dtype=xp.dtype)
    zr = np.empty((L, 2 * H), dtype=xp.dtype)
    n = np.empty((L, H), dtype=xp.dtype)
    rh = np.empty((L, H), dtype=xp.dtype)
    hs[0] = h0
    for t in range(L):
        out, zr_t, n_t, rh_t = gru_rows_forward_np(xp[t : t + 1], hs[t : t + 1], Whzr, Whn)
        hs[t + 1], zr[t], n[t], rh[t] = out[0], zr_t[0], n_t[0], rh_t[0]
    return hs, zr, n, rh


def gru_scan_backward_np(G, hs, zr, n, Whzr, Whn):
    """Backpropagate through ``gru_scan_forward``; G (L, H) are state gradients."""
    L, H = G.shape
    d_pre = np.empty((L, 3 * H), dtype=G.dtype)
    carry = np.zeros((1, H), dtype=G.dtype)
    for t in range(L - 1, -1, -1):
        d, carry = gru_rows_backward_np(G[t : t + 1] + carry, hs[t : t + 1], zr[t : t + 1], n[t : t + 1], Whzr, Whn)
        d_pre[t] = d[0]
    return d_pre, carry[0]


def softmax_rows_np(x):
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def coverage_attention_forward_np(enc, dec, w_cov, v):
    """Attention over T decoder rows with coverage carried between rows.

    Row t attends with coverage c_t = alpha_0 + ... + alpha_{t-1}.  Returns
    alpha (T, L), the coverage each row saw (T, L) and tanh activations (T, L, A).
    """
    T = dec.shape[0]
    L, A = enc.shape
    alpha = np.empty((T, L), dtype=enc.dtype)
    cov = np.empty((T, L), dtype=enc.dtype)
    act = np.empty((T, L, A), dtype=enc.dtype)
    c = np.zeros(L, dtype=enc.dtype)
    for t in range(T):
        cov[t] = c
        e, act[t : t + 1] = energy_forward_np(enc, dec[t : t + 1], c[None, :], w_cov, v)
        alpha[t] = softmax_rows_np(e)[0]
        c = c + alpha[t]
    return alpha, cov, act


def coverage_attention_backward_np(g_alpha, g_cov, alpha, cov, act, w_cov, v):
    T, L, A = act.shape
    d_enc = np.zeros((L, A), dtype=act.dtype)
    d_dec = np.empty((T, A), dtype=act.dtype)
    d_w = np.zeros(A, dtype=act.dtype)
    d_v = np.zeros(A, dtype=act.dtype)
    dc = np.zeros(L, dtype=act.dtype)  # gradient reaching c_{t+1}
    for t in range(T - 1, -1, -1):
        ga = g_alpha[t] + dc
        de = alpha[t] * (ga - ga @ alpha[t])
        d_v += de @ act[t]
        dpre = de[:, None] * v[None, :] * (1.0 - act[t] * act[t])
        d_enc += dpre
        d_dec[t] = dpre.sum(axis=0)
        d_w += cov[t] @ dpre
        dc = dc + g_cov[t] + dpre @ w_cov
    return d_enc, d_dec, d_w, d_v


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit(cache=True)
def _energy_forward_nb(enc, dec, cov, w_cov, v):
    B = dec.shape[0]
    L, A = enc.shape
    act = np.empty((B, L, A))
    out = np.empty((B, L))
    for b in range(B):
        for i in range(L):
            c = cov[b, i]
            s = 0.0
            for a in range(A):
                t = np.tanh(enc[i, a] + dec[b, a] + c * w_cov[a])
                act[b, i, a] = t
                s += v[a] * t
            out[b, i] = s
    return out, act


@njit(cache=True)
def _energy_backward_nb(g, act, cov, w_cov, v):
    B, L, A = act.shape
    d_enc = np.zeros((L, A))
    d_dec = np.zeros((B, A))
    d_cov = np.zeros((B, L))
    d_wcov = np.zeros(A)
    d_v = np.zeros(A)
    for b in range(B):
        for i in range(L):
            gi = g[b, i]
            c = cov[b, i]
            sc = 0.0
            for a in range(A):
                t = act[b, i, a]
                d_v[a] += gi * t
                dp = gi * v[a] * (1.0 - t * t)
                d_enc[i, a] += dp
                d_dec[b, a] += dp
                d_wcov[a] += dp * c
                sc += dp * w_cov[a]
            d_cov[b, i] = sc
    return d_enc, d_dec, d_cov, d_wcov, d_v


@njit(cache=True)
def _scatter_add_nb(base, idx, add):
    out = base.copy()
    B = out.shape[0]
    L = idx.shape[0]
    for b in range(B):
        for i in range(L):
            out[b, idx[i]] += add[b, i]
    return out


@njit(cache=True)
def _gather_cols_nb(g, idx):
    B = g.shape[0]
    L = idx.shape[0]
    out = np.empty((B, L))
    for b in range(B):
        for i in range(L):
            out[b, i] = g[b, idx[i]]
    return out


@njit(cache=True)
def _gru_step_nb(xp, h, Whzr, Whn, out, zr, n, rh):
    H = h.shape[0]
    a = np.dot(Whzr, h)
    for j in range(2 * H):
        zr[j] = 1.0 / (1.0 + np.exp(-(xp[j] + a[j])))
    for j in range(H):
        rh[j] = zr[H + j] * h[j]
    c = np.dot(Whn, rh)
    for j in range(H):
        nj = np.tanh(xp[2 * H + j] + c[j])
        n[j] = nj
        out[j] = h[j] + zr[j] * (nj - h[j])


@njit(cache=True)
def _gru_step_back_nb(g, h, zr, n, Whzr, Whn, d_pre, dh):
    H = h.shape[0]
    d_n = np.empty(H)
    for j in range(H):
        d_n[j] = g[j] * zr[j] * (1.0 - n[j] * n[j])
        d_pre[2 * H + j] = d_n[j]
    d_rh = np.dot(d_n, Whn)
    for j in range(H):
        z = zr[j]
        r = zr[H + j]
        d_pre[j] = g[j] * (n[j] - h[j]) * z * (1.0 - z)
        d_pre[H + j] = d_rh[j] * h[j] * r * (1.0 - r)
    back = np.dot(d_pre[: 2 * H], Whzr)
    for j in range(H):
        dh[j] = g[j] * (1.0 - zr[j]) + d_rh[j] * zr[H + j] + back[j]


@njit(cache=True)
def _gru_rows_forward_nb(xp, h, Whzr, Whn):
    B, H = h.shape
    out = np.empty((B, H))
    zr = np.empty((B, 2 * H))
    n = np.empty((B, H))
    rh = np.empty((B, H))
    for b in range(B):
        _gru_step_nb(xp[b], h[b], Whzr, Whn, out[b], zr[b], n[b], rh[b])
    return out, zr, n, rh


@njit(cache=True)
def _gru_rows_backward_nb(g, h, zr, n, Whzr, Whn):
    B, H = h.shape
    d_pre = np.empty((B, 3 * H))
    dh = np.empty((B, H))
    for b in range(B):
        _gru_step_back_nb(g[b], h[b], zr[b], n[b], Whzr, Whn, d_pre[b], dh[b])
    return d_pre, dh


@njit(cache=True)
def _gru_scan_forward_nb(xp, h0, Whzr, Whn):
    L = xp.shape[0]
    H = h0.shape[0]
    hs = np.empty((L + 1, H))
    zr = np.empty((L, 2 * H))
    n = np.empty((L, H))
    rh = np.empty((L, H))
    hs[0] = h0
    for t in range(L):
        _gru_step_nb(xp[t], hs[t], Whzr, Whn, hs[t + 1], zr[t], n[t], rh[t])
    return hs, zr, n, rh


@njit(cache=True)
def _gru_scan_backward_nb(G, hs, zr, n, Whzr, Whn):
    L, H = G.shape
    d_pre = np.empty((L, 3 * H))
    carry = np.zeros(H)
    g = np.empty(H)
    for t in range(L - 1, -1, -1):
        for j in range(H):
            g[j] = G[t, j] + carry[j]
        _gru_step_back_nb(g, hs[t], zr[t], n[t], Whzr, Whn, d_pre[t], carry)
    return d_pre, carry


@njit(cache=True)
def _softmax_rows_nb(x):
    B, N = x.shape
    out = np.empty_like(x)
    for b in range(B):
        m = x[b, 0]
        for j in range(1, N):
            if x[b, j] > m:
                m = x[b, j]
        s = 0.0
        for j in range(N):
            e = np.exp(x[b, j] - m)
            out[b, j] = e
            s += e
        for j in range(N):
            out[b, j] /= s
    return out


@njit(cache=True)
def _coverage_attention_forward_nb(enc, dec, w_cov, v):
    T = dec.shape[0]
    L, A = enc.shape
    alpha = np.empty((T, L))
    cov = np.empty((T, L))
    act = np.empty((T, L, A))
    c = np.zeros(L)
    e = np.empty(L)
    for t in range(T):
        for i in range(L):
            cov[t, i] = c[i]
            s = 0.0
            for a in range(A):
                x = np.tanh(enc[i, a] + dec[t, a] + c[i] * w_cov[a])
                act[t, i, a] = x
                s += v[a] * x
            e[i] = s
        m = e[0]
        for i in range(1, L):
            if e[i] > m:
                m = e[i]
        z = 0.0
        for i in range(L):
            x = np.exp(e[i] - m)
            alpha[t, i] = x
            z += x
        for i in range(L):
            alpha[t, i] /= z
            c[i] += alpha[t, i]
    return alpha, cov, act


@njit(cache=True)
def _coverage_attention_backward_nb(g_alpha, g_cov, alpha, cov, act, w_cov, v):
    T, L, A = act.shape
    d_enc = np.zeros((L, A))
    d_dec = np.zeros((T, A))
    d_w = np.zeros(A)
    d_v = np.zeros(A)
    dc = np.zeros(L)
    ga = np.empty(L)
    for t in range(T - 1, -1, -1):
        dot = 0.0
        for i in range(L):
            ga[i] = g_alpha[t, i] + dc[i]
            dot += ga[i] * alpha[t, i]
        for i in range(L):
            de = alpha[t, i] * (ga[i] - dot)
            ci = cov[t, i]
            sc = 0.0
            for a in range(A):
                x = act[t, i, a]
                d_v[a] += de * x
                dp = de * v[a] * (1.0 - x * x)
                d_enc[i, a] += dp
                d_dec[t, a] += dp
                d_w[a] += dp * ci
                sc += dp * w_cov[a]
            dc[i] += g_cov[t, i] + sc
    return d_enc, d_dec, d_w, d_v


def _pick(nb, np_fn):
    return nb if USE_NUMBA else np_fn


def for_dtype(dtype) -> dict:
    """Kernel table for an array dtype; numba kernels are compiled for float64 only."""
    return NUMBA_KERNELS if USE_NUMBA and np.dtype(dtype) == np.float64 else NUMPY_KERNELS


energy_forward = _pick(_energy_forward_nb, energy_forward_np)
energy_backward = _pick(_energy_backward_nb, energy_backward_np)
scatter_add = _pick(_scatter_add_nb, scatter_add_np)
gather_cols = _pick(_gather_cols_nb, gather_cols_np)
gru_rows_forward = _pick(_gru_rows_forward_nb, gru_rows_forward_np)
gru_rows_backward = _pick(_gru_rows_backward_nb, gru_rows_backward_np)
gru_scan_forward = _pick(_gru_scan_forward_nb, gru_scan_forward_np)
gru_scan_backward = _pick(_gru_scan_backward_nb, gru_scan_backward_np)
softmax_rows = _pick(_softmax_rows_nb, softmax_rows_np)
coverage_attention_forward = _pick(_coverage_attention_forward_nb, coverage_attention_forward_np)
coverage_attention_backward = _pick(_coverage_attention_backward_nb, coverage_attention_backward_np)

NUMPY_KERNELS = {
    "energy_forward": energy_forward_np,
    "energy_backward": energy_backward_np,
    "scatter_add": scatter_add_np,
    "gather_cols": gather_cols_np,
    "gru_rows_forward": gru_rows_forward_np,
    "gru_rows_backward": gru_rows_backward_np,
    "gru_scan_forward": gru_scan_forward_np,
    "gru_scan_backward": gru_scan_backward_np,
    "softmax_rows": softmax_rows_np,
    "coverage_attention_forward": coverage_attention_forward_np,
    "coverage_attention_backward": coverage_attention_backward_np,
}

NUMBA_KERNELS = {
    "energy_forward": _energy_forward_nb,
    "energy_backward": _energy_backward_nb,
    "scatter_add": _scatter_add_nb,
    "gather_cols": _gather_cols_nb,
    "gru_rows_forward": _gru_rows_forward_nb,
    "gru_rows_backward": _gru_rows_backward_nb,
    "gru_scan_forward": _gru_scan_forward_nb,
    "gru_scan_backward": _gru_scan_backward_nb,
    "softmax_rows": _softmax_rows_nb,
    "coverage_attention_forward": _coverage_attention_forward_nb,
    "coverage_attention_backward": _coverage_attention_backward_nb,
}
