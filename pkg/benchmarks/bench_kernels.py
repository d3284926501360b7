"""Time the numba kernels against the numpy fallback.

Kernel timings call both implementations in one process.  The end-to-end
rows (one training step and one beam decode on the ``base`` preset) run in
subprocesses with ``KPSEQ_NUMBA`` set to 1 and 0, because the switch is read
at import time.

    python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from kpseq.compute import kernels as K


def kernel_cases(rng, quick):
    L, A, H, B, V = (20, 32, 32, 4, 200) if quick else (200, 128, 128, 10, 2000)
    enc = rng.normal(size=(L, A))
    dec = rng.normal(size=(B, A))
    cov = rng.random((B, L))
    w, v = rng.normal(size=A), rng.normal(size=A)
    g = rng.normal(size=(B, L))
    _, act = K.energy_forward_np(enc, dec, cov, w, v)
    xp = rng.normal(size=(B, 3 * H))
    h = rng.normal(size=(B, H)) * 0.5
    Whzr, Whn = rng.normal(size=(2 * H, H)) * 0.1, rng.normal(size=(H, H)) * 0.1
    _, zr, n, _ = K.gru_rows_forward_np(xp, h, Whzr, Whn)
    xs = rng.normal(size=(L, 3 * H))
    hs, szr, sn, _ = K.gru_scan_forward_np(xs, h[0], Whzr, Whn)
    G = rng.normal(size=(L, H))
    base = rng.random((B, V))
    idx = rng.integers(0, V, size=L)
    logits = rng.normal(size=(B, V))
    T = 12 if quick else 60
    tdec = rng.normal(size=(T, A))
    ca = K.coverage_attention_forward_np(enc, tdec, w, v)
    return {
        "energy_forward": (enc, dec, cov, w, v),
        "energy_backward": (g, act, cov, w, v),
        "gru_rows_forward": (xp, h, Whzr, Whn),
        "gru_rows_backward": (h, h, zr, n, Whzr, Whn),
        "gru_scan_forward": (xs, h[0], Whzr, Whn),
        "gru_scan_backward": (G, hs, szr, sn, Whzr, Whn),
        "scatter_add": (base, idx, g),
        "gather_cols": (base, idx),
        "softmax_rows": (logits,),
        "coverage_attention_forward": (enc, tdec, w, v),
        "coverage_attention_backward": (rng.normal(size=(T, L)), rng.normal(size=(T, L)), *ca, w, v),
    }


def best_time(fn, args, repeat, number):
    return min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def bench_kernels(quick, repeat):
    rows = []
    for name, args in kernel_cases(np.random.default_rng(0), quick).items():
        fast, slow = K.NUMBA_KERNELS[name], K.NUMPY_KERNELS[name]
        fast(*args)  # compile outside the timing
        number = 20 if quick else 200
        t_nb = best_time(fast, args, repeat, number)
        t_np = best_time(slow, args, repeat, number)
        rows.append((name, t_nb, t_np))
    return rows


END_TO_END = r"""
import json, time, numpy as np
from kpseq import model as M
from kpseq.corpus import SyntheticSpec, build_vocabulary, generate_synthetic
from kpseq.decoding import BeamConfig, InferenceModel, beam_search
from kpseq.training import prepare, target_for, example_loss
docs = generate_synthetic(SyntheticSpec(num_docs=4, seed=1))
vocab = build_vocabulary(docs)
cfg = M.ModelConfig.from_preset("base", vocab.size)
params = M.init_params(cfg, seed=0)
exs = prepare(docs, vocab)
tgts = [target_for(e, vocab, "appear-ap", 7, 0) for e in exs]
example_loss(cfg, params, exs[0], tgts[0])
t = time.perf_counter()
for e, y in zip(exs, tgts):
    example_loss(cfg, params, e, y)
train = (time.perf_counter() - t) / len(exs)
m = InferenceModel(cfg, params)
t = time.perf_counter()
beam_search(m, exs[0].source_ids, len(exs[0].oov), BeamConfig(width=WIDTH, max_len=MAXLEN))
print(json.dumps({"train_step": train, "beam_decode": time.perf_counter() - t}))
"""


def bench_end_to_end(quick):
    code = END_TO_END.replace("WIDTH", "2" if quick else "10").replace("MAXLEN", "4" if quick else "20")
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, KPSEQ_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[flag] = json.loads(res.stdout.strip().splitlines()[-1])
    return [(name, out["1"][name], out["0"][name]) for name in ("train_step", "beam_decode")]


def render(rows):
    lines = ["| case | numba (ms) | numpy (ms) | speedup |", "|---|---|---|---|"]
    for name, t_nb, t_np in rows:
        lines.append(f"| {name} | {t_nb * 1e3:.4f} | {t_np * 1e3:.4f} | {t_np / t_nb:.2f}x |")
    return "\n".join(lines)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small shapes and few repeats")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not K._HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rows = bench_kernels(args.quick, 2 if args.quick else args.repeat)
    if not args.no_end_to_end:
        rows += bench_end_to_end(args.quick)
    print(render(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
