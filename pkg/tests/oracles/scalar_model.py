"""Pure-Python scalar reference for the model math.

Written from the formulas alone with plain lists and ``math``; it shares no
code with the package so it can serve as an independent oracle.
"""

import math

UNK, BOS = 1, 2


def dot(a, b):
    s = 0.0
    for x, y in zip(a, b):
        s += x * y
    return s


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def softmax(v):
    m = max(v)
    e = [math.exp(x - m) for x in v]
    s = sum(e)
    return [x / s for x in e]


def gru(x, h, W, b):
    H = len(h)
    xh = list(x) + list(h)
    z = [sigmoid(dot(W[i], xh) + b[i]) for i in range(H)]
    r = [sigmoid(dot(W[H + i], xh) + b[H + i]) for i in range(H)]
    xrh = list(x) + [r[i] * h[i] for i in range(H)]
    n = [math.tanh(dot(W[2 * H + i], xrh) + b[2 * H + i]) for i in range(H)]
    return [(1.0 - z[i]) * h[i] + z[i] * n[i] for i in range(H)]


def embed(P, tok, V):
    return list(P["embedding"][tok if tok < V else UNK])


def encode(P, src, V):
    H = len(P["enc_fwd.b"]) // 3
    xs = [embed(P, t, V) for t in src]
    fwd, h = [], [0.0] * H
    for x in xs:
        h = gru(x, h, P["enc_fwd.W"], P["enc_fwd.b"])
        fwd.append(h)
    bwd, h = [None] * len(xs), [0.0] * H
    for i in range(len(xs) - 1, -1, -1):
        h = gru(xs[i], h, P["enc_bwd.W"], P["enc_bwd.b"])
        bwd[i] = h
    states = [fwd[i] + bwd[i] for i in range(len(xs))]
    ends = fwd[-1] + bwd[0]
    init = [math.tanh(dot(P["bridge.W"][j], ends) + P["bridge.b"][j]) for j in range(len(P["bridge.b"]))]
    return states, init


def attention(P, states, h_d, cov):
    A = len(P["attn.v"])
    w_cov = P.get("attn.w_cov")
    energies = []
    for i, s in enumerate(states):
        e = 0.0
        for a in range(A):
            pre = dot(P["attn.W_e"][a], s) + dot(P["attn.W_d"][a], h_d) + P["attn.b"][a]
            if w_cov is not None:
                pre += w_cov[a] * cov[i]
            e += P["attn.v"][a] * math.tanh(pre)
        energies.append(e)
    alpha = softmax(energies)
    ctx = [sum(alpha[i] * states[i][j] for i in range(len(states))) for j in range(len(states[0]))]
    return alpha, ctx


def decode_step(P, V, prev, h, cov, states, src, n_oov):
    x = embed(P, prev, V)
    h2 = gru(x, h, P["dec.W"], P["dec.b"])
    alpha, ctx = attention(P, states, h2, cov)
    hc = h2 + ctx
    logits = [dot(P["out.W"][w], hc) + P["out.b"][w] for w in range(V)]
    p_vocab = softmax(logits)
    p_gen = sigmoid(dot(P["gen.w_c"][0], ctx) + dot(P["gen.w_d"][0], h2) + dot(P["gen.w_x"][0], x) + P["gen.b"][0])
    final = [p_gen * p for p in p_vocab] + [0.0] * n_oov
    for i, t in enumerate(src):
        final[t] += (1.0 - p_gen) * alpha[i]
    new_cov = [c + a for c, a in zip(cov, alpha)]
    return final, alpha, ctx, p_gen, h2, new_cov


def sequence_loss(P, V, src, target, n_oov, lam):
    states, h = encode(P, src, V)
    cov = [0.0] * len(src)
    prev = BOS
    total = 0.0
    for y in target:
        final, alpha, _, _, h, new_cov = decode_step(P, V, prev, h, cov, states, src, n_oov)
        pen = sum(min(a, c) for a, c in zip(alpha, cov))
        total += -math.log(max(final[y], 1e-12)) + lam * pen
        cov = new_cov
        prev = y
    return total / len(target)
