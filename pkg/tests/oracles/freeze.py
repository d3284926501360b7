"""Regenerate tests/fixtures/derived.json from the scalar oracle.

Inputs are drawn with a fixed seed and stored next to the oracle outputs, so
the tests never depend on how random streams are consumed.

    python tests/oracles/freeze.py
"""

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
import scalar_model as S  # noqa: E402

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "derived.json"


def mat(rng, rows, cols, scale=0.6):
    return [[rng.uniform(-scale, scale) for _ in range(cols)] for _ in range(rows)]


def vec(rng, n, scale=0.6):
    return [rng.uniform(-scale, scale) for _ in range(n)]


def tiny_params(rng, V, E, H, D, coverage=True):
    P = {
        "embedding": mat(rng, V, E),
        "enc_fwd.W": mat(rng, 3 * H, E + H),
        "enc_fwd.b": vec(rng, 3 * H, 0.2),
        "enc_bwd.W": mat(rng, 3 * H, E + H),
        "enc_bwd.b": vec(rng, 3 * H, 0.2),
        "bridge.W": mat(rng, D, 2 * H),
        "bridge.b": vec(rng, D, 0.2),
        "dec.W": mat(rng, 3 * D, E + D),
        "dec.b": vec(rng, 3 * D, 0.2),
        "attn.W_e": mat(rng, D, 2 * H),
        "attn.W_d": mat(rng, D, D),
        "attn.b": vec(rng, D, 0.2),
        "attn.v": vec(rng, D),
        "out.W": mat(rng, V, D + 2 * H),
        "out.b": vec(rng, V, 0.2),
        "gen.w_c": mat(rng, 1, 2 * H),
        "gen.w_d": mat(rng, 1, D),
        "gen.w_x": mat(rng, 1, E),
        "gen.b": vec(rng, 1, 0.2),
    }
    if coverage:
        P["attn.w_cov"] = vec(rng, D)
    return P


def main():
    rng = random.Random(20240607)
    fx = {}

    x, h = vec(rng, 4), vec(rng, 4, 0.9)
    W, b = mat(rng, 12, 8), vec(rng, 12, 0.3)
    fx["gru_cell"] = {"x": x, "h": h, "W": W, "b": b, "out": S.gru(x, h, W, b)}

    V, E, H, D = 9, 3, 4, 5
    P = tiny_params(rng, V, E, H, D)
    src = [5, 7, 6]
    states, init = S.encode(P, src, V)
    fx["encode"] = {"dims": [V, E, H, D], "params": P, "source": src, "states": states, "init": init}

    h_d, cov = vec(rng, D), [0.3, 0.1, 0.6]
    alpha, ctx = S.attention(P, states, h_d, cov)
    fx["attention"] = {"h_d": h_d, "coverage": cov, "alpha": alpha, "context": ctx}

    src_oov = [5, 9, 6, 10, 9]
    st2, init2 = S.encode(P, src_oov, V)
    final, alpha2, ctx2, p_gen, h2, cov2 = S.decode_step(P, V, 9, init2, [0.0] * 5, st2, src_oov, 2)
    fx["decode_step"] = {
        "source": src_oov,
        "n_oov": 2,
        "prev": 9,
        "final": final,
        "alpha": alpha2,
        "p_gen": p_gen,
        "h": h2,
        "coverage": cov2,
    }

    target = [6, 4, 9, 10, 3]
    fx["sequence_loss"] = {
        "source": src_oov,
        "target": target,
        "n_oov": 2,
        "lambda": 1.0,
        "loss": S.sequence_loss(P, V, src_oov, target, 2, 1.0),
        "loss_lambda0": S.sequence_loss(P, V, src_oov, target, 2, 0.0),
    }

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fx, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
