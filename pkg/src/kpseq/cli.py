"""kpseq command line: synth, preprocess, train, decode, eval, stats, compare."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    SyntheticSpec,
    Vocabulary,
    build_vocabulary,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
)
from .decoding import MODES, BeamConfig, decode_corpus, read_predictions, write_predictions
from .evaluation import (
    ABSENT_KS,
    PRESENT_KS,
    EvalReport,
    compute_stats,
    evaluate_corpus,
    fmt_score,
    macro_report,
    render_report,
    render_stats,
    render_table,
)
from .model import PRESETS
from .ordering import ORDERING_NAMES
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

log = logging.getLogger("kpseq")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DEFAULT_BEAMS = (10, 25, 50)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage().rstrip()}")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _orders(text: str) -> list[str]:
    if text == "all":
        return list(ORDERING_NAMES)
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in ORDERING_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"invalid ordering(s) {', '.join(bad) or text!r}; valid orderings: {', '.join(ORDERING_NAMES)}"
        )
    return names


def _modes(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in MODES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"invalid mode(s) {text!r}; choose from {', '.join(MODES)}")
    return names


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kpseq", description="One2Seq keyphrase generation with ordered targets.")
    p.add_argument("--version", action="version", version=f"kpseq {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("synth", help="write a synthetic corpus as JSONL")
    s.add_argument("--out", required=True, help="output JSONL path")
    s.add_argument("--docs", type=_positive, default=SyntheticSpec.num_docs)
    s.add_argument("--vocab-pool", type=_positive, default=SyntheticSpec.vocab_pool)
    s.add_argument("--absent-fraction", type=float, default=SyntheticSpec.absent_fraction)
    s.add_argument("--seed", type=int, default=SyntheticSpec.seed)

    s = sub.add_parser("preprocess", help="tokenize, split and build a vocabulary")
    s.add_argument("--data", required=True, help="raw JSONL corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--valid-size", type=int, default=500, help="held-out validation documents")
    s.add_argument("--vocab-size", type=_positive, default=50_000)
    s.add_argument("--seed", type=int, default=7, help="shuffle seed for the split")

    s = sub.add_parser("train", help="train one model")
    s.add_argument("--data", required=True, help="training JSONL or a preprocess directory")
    s.add_argument("--valid", help="validation JSONL (default: from --data directory, else training docs)")
    s.add_argument("--config", help="JSON train config (kebab-case TrainConfig keys)")
    s.add_argument("--order", choices=ORDERING_NAMES)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=_positive)
    s.add_argument("--out", required=True, help="checkpoint directory")

    s = sub.add_parser("decode", help="decode documents into a predictions JSONL")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True, help="documents to decode (JSONL)")
    s.add_argument("--beam", type=_positive, default=10)
    s.add_argument("--mode", choices=MODES, default="overgen")
    s.add_argument("--max-len", type=_positive, default=60)
    s.add_argument("--no-early-stop", action="store_true")
    s.add_argument("--seed", type=int, default=0, help="recorded for reproducibility; decoding is deterministic")
    s.add_argument("--out", required=True)

    s = sub.add_parser("eval", help="score predictions against references")
    s.add_argument("--pred", required=True, action="append", help="predictions JSONL (repeat per dataset)")
    s.add_argument("--ref", required=True, action="append", help="reference JSONL (same order as --pred)")
    s.add_argument("--ks", type=_int_list, default=list(PRESENT_KS), help="present cutoffs, e.g. 5,10")
    s.add_argument("--absent-ks", type=_int_list, default=list(ABSENT_KS), help="absent cutoffs, e.g. 10,50")
    s.add_argument("--format", choices=("md", "csv"), default="md")
    s.add_argument("--label", default="model")
    s.add_argument("--out", help="report path (default: stdout)")

    s = sub.add_parser("stats", help="prediction statistics (beams, lengths, phrase counts)")
    s.add_argument("--pred", required=True)
    s.add_argument("--format", choices=("md", "csv"), default="md")
    s.add_argument("--out")

    s = sub.add_parser("compare", help="ordering x beam-width comparison grids")
    s.add_argument("--data", required=True, help="training JSONL or preprocess directory")
    s.add_argument("--ref", required=True, action="append", help="test JSONL (repeat per dataset)")
    s.add_argument("--orders", type=_orders, default=list(ORDERING_NAMES), help="comma list or 'all'")
    s.add_argument("--beams", type=_int_list, default=list(DEFAULT_BEAMS))
    s.add_argument("--modes", type=_modes, default=["overgen"])
    s.add_argument("--ckpt-dir", required=True, help="directory holding one checkpoint per ordering")
    s.add_argument("--train", action="store_true", help="train missing checkpoints")
    s.add_argument("--config", help="JSON train config used with --train")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--seed", type=int)
    s.add_argument("--max-len", type=_positive, default=60)
    s.add_argument("--format", choices=("md", "csv"), default="md")
    s.add_argument("--out", required=True, help="report path")
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _log_config(name: str, cfg: dict) -> None:
    log.info("%s config: %s", name, json.dumps(cfg, sort_keys=True, default=str))


def cmd_synth(args) -> None:
    spec = SyntheticSpec(
        num_docs=args.docs, vocab_pool=args.vocab_pool, absent_fraction=args.absent_fraction, seed=args.seed
    )
    _log_config("synth", asdict(spec))
    docs = generate_synthetic(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_jsonl(docs, args.out)
    log.info("wrote %d documents to %s", len(docs), args.out)


def cmd_preprocess(args) -> None:
    _log_config("preprocess", vars(args))
    docs = load_jsonl(args.data)
    if not docs:
        raise ValueError(f"{args.data}: no documents")
    perm = np.random.default_rng(args.seed).permutation(len(docs))
    n_valid = min(max(args.valid_size, 0), len(docs) - 1)
    valid = [docs[i] for i in perm[:n_valid]]
    train_docs = [docs[i] for i in sorted(perm[n_valid:])]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_jsonl(train_docs, out / "train.jsonl")
    save_jsonl(valid, out / "valid.jsonl")
    vocab = build_vocabulary(train_docs, args.vocab_size)
    vocab.save(out / "vocab.txt")
    log.info("train %d, valid %d, vocab %d -> %s", len(train_docs), len(valid), vocab.size, out)


def _load_training_data(data: str, valid_path: str | None):
    path = Path(data)
    vocab = None
    valid = None
    if path.is_dir():
        docs = load_jsonl(path / "train.jsonl")
        if (path / "vocab.txt").exists():
            vocab = Vocabulary.load(path / "vocab.txt")
        if valid_path is None and (path / "valid.jsonl").exists():
            valid = load_jsonl(path / "valid.jsonl") or None
    else:
        docs = load_jsonl(path)
    if valid_path is not None:
        valid = load_jsonl(valid_path)
    return docs, vocab, valid


def _train_config(args, ordering: str | None = None) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    updates = {}
    if ordering or getattr(args, "order", None):
        updates["ordering"] = ordering or args.order
    if args.preset:
        updates["preset"] = args.preset
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "epochs", None):
        updates["epochs"] = args.epochs
    data = asdict(cfg)
    data.update(updates)
    return TrainConfig(**data)


def cmd_train(args) -> None:
    cfg = _train_config(args)
    _log_config("train", cfg.to_dict())
    docs, vocab, valid = _load_training_data(args.data, args.valid)
    ckpt = train(docs, cfg, vocab, valid)
    save_checkpoint(ckpt, args.out)
    log.info("best checkpoint: step %d, valid F1@5 %.4f -> %s", ckpt.meta.step, ckpt.meta.valid_f1_at_5, args.out)


def cmd_decode(args) -> None:
    beam = BeamConfig(args.beam, args.max_len, not args.no_early_stop, args.mode)
    _log_config("decode", {**vars(args), "beam_config": asdict(beam)})
    ckpt = load_checkpoint(args.ckpt)
    docs = load_jsonl(args.data)
    decode_corpus(ckpt.model_config, ckpt.params, ckpt.vocab, docs, beam, args.out)
    log.info("decoded %d documents -> %s", len(docs), args.out)


def _predictions_by_id(path) -> dict[str, list]:
    return {r["id"]: r["phrases"] for r in read_predictions(path)}


def evaluate_files(pred_paths, ref_paths, ks, absent_ks) -> EvalReport:
    if len(pred_paths) != len(ref_paths):
        raise UsageError("give one --pred per --ref")
    per_doc = {}
    for pred, ref in zip(pred_paths, ref_paths):
        name = Path(ref).stem
        if name in per_doc:
            raise UsageError(f"duplicate dataset name {name!r}")
        per_doc[name] = evaluate_corpus(_predictions_by_id(pred), load_jsonl(ref), ks, absent_ks)
    return macro_report(per_doc, ks, absent_ks)


def cmd_eval(args) -> None:
    _log_config("eval", vars(args))
    report = evaluate_files(args.pred, args.ref, args.ks, args.absent_ks)
    _write(render_report({args.label: report}, args.format), args.out)


def cmd_stats(args) -> None:
    _log_config("stats", vars(args))
    stats = compute_stats([r["stats"] for r in read_predictions(args.pred)])
    _write(render_stats({Path(args.pred).stem: stats}, args.format), args.out)


def _ckpt_path(root: Path, ordering: str) -> Path:
    return root / ordering


def cmd_compare(args) -> None:
    root = Path(args.ckpt_dir)
    settings = {k: v for k, v in vars(args).items() if k != "func"}
    _log_config("compare", settings)
    data = None
    for order in args.orders:
        path = _ckpt_path(root, order)
        if (path / "manifest.json").exists():
            continue
        if not args.train:
            raise FileNotFoundError(f"missing checkpoint for ordering {order!r} at {path} (use --train)")
        if data is None:
            data = _load_training_data(args.data, None)
        cfg = _train_config(args, order)
        _log_config(f"train[{order}]", cfg.to_dict())
        save_checkpoint(train(data[0], cfg, data[1], data[2]), path)

    refs = {Path(r).stem: load_jsonl(r) for r in args.ref}
    cells = {}
    for order in args.orders:
        ckpt = load_checkpoint(_ckpt_path(root, order))
        for mode in args.modes:
            widths = args.beams if mode == "overgen" else [max(args.beams)]
            for width in widths:
                beam = BeamConfig(width, args.max_len, True, mode)
                per_doc, stats = {}, []
                for name, docs in refs.items():
                    recs = decode_corpus(ckpt.model_config, ckpt.params, ckpt.vocab, docs, beam)
                    preds = {r["id"]: r["phrases"] for r in recs}
                    per_doc[name] = evaluate_corpus(preds, docs)
                    stats += [r["stats"] for r in recs]
                cells[(order, mode, width)] = (macro_report(per_doc), compute_stats(stats))
    _write(render_compare(cells, args.orders, args.beams, args.modes, args.format), args.out)


def render_compare(cells: dict, orders, beams, modes, fmt: str = "md") -> str:
    """Grids shaped like the comparison tables: rows are orderings."""
    parts = []
    if "overgen" in modes:
        top = max(beams)
        parts.append(
            render_report(
                {o: cells[(o, "overgen", top)][0] for o in orders},
                fmt,
                ("present",),
                f"Present keyphrases, beam {top}",
            )
        )
        header = ["Ordering"]
        for b in beams:
            header += [f"B={b} F1@5", f"B={b} F1@10"]
        rows = []
        for o in orders:
            row = [o]
            for b in beams:
                rep = cells[(o, "overgen", b)][0]
                row += [fmt_score(rep.value("Average", "present", k, "f1")) for k in (5, 10)]
            rows.append(row)
        parts.append(render_table(header, rows, fmt, "Average present F1 by beam width"))
        header = ["Ordering"]
        for b in beams:
            header += [f"B={b} #(Beam)", f"B={b} Len", f"B={b} #(UniqKP)", f"B={b} #(KP)"]
        rows = []
        for o in orders:
            row = [o]
            for b in beams:
                s = cells[(o, "overgen", b)][1]
                row += [fmt_score(x, 2) for x in (s.mean_beams, s.mean_beam_len, s.mean_unique_kp, s.mean_total_kp)]
            rows.append(row)
        parts.append(render_table(header, rows, fmt, "Prediction statistics"))
        parts.append(
            render_report(
                {o: cells[(o, "overgen", top)][0] for o in orders},
                fmt,
                ("absent",),
                f"Absent keyphrases, beam {top}",
            )
        )
    if "self-term" in modes:
        top = max(beams)
        parts.append(
            render_report(
                {o: cells[(o, "self-term", top)][0] for o in orders},
                fmt,
                ("present",),
                f"Self-terminating decoding (top beam), beam {top}",
            )
        )
    return "\n".join(parts)


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "compare": cmd_compare,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"kpseq: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, RuntimeError, KeyError) as e:
        print(f"kpseq: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
