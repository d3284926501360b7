"""Present/absent keyphrase metrics, macro averaging and report rendering."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .corpus import Document, Phrase, find_occurrence, split_present_absent, stem_phrase, unique_phrases

PRESENT_KS = (5, 10)
ABSENT_KS = (10, 50)
AVERAGE = "Average"


class EvaluationError(ValueError):
    pass


def phrase_match(pred: Sequence[str], gold: Sequence[str]) -> bool:
    return stem_phrase(pred) == stem_phrase(gold)


@dataclass(frozen=True)
class MetricResult:
    k: int
    precision: float
    recall: float
    f1: float
    partition: str = "present"
    n_docs: int = 1


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def prf_at_k(
    predictions: Sequence[Sequence[str]], gold: Iterable[Sequence[str]], k: int, partition: str = "present"
) -> MetricResult | None:
    """P/R/F1 of the top-k unique predictions; ``None`` when the gold set is empty.

    Predictions are deduplicated by stemmed form before the cutoff, so repeated
    phrases never take up ranks.  Precision divides by min(k, |pred|).
    """
    if k <= 0:
        raise EvaluationError(f"k must be >= 1, got {k}")
    gold_keys = {stem_phrase(g) for g in gold}
    if not gold_keys:
        return None
    top = unique_phrases(predictions)[:k]
    correct = sum(1 for p in top if stem_phrase(p) in gold_keys)
    precision = correct / len(top) if top else 0.0
    recall = correct / len(gold_keys)
    return MetricResult(k, precision, recall, f1_score(precision, recall), partition)


def recall_at_k(
    predictions: Sequence[Sequence[str]], gold_absent: Iterable[Sequence[str]], k: int
) -> MetricResult | None:
    return prf_at_k(predictions, gold_absent, k, partition="absent")


def partition_predictions(predictions: Sequence[Sequence[str]], doc: Document) -> tuple[list[Phrase], list[Phrase]]:
    """Split predictions by the stemmed-subsequence test, keeping rank order."""
    src = stem_phrase(doc.source_tokens)
    present, absent = [], []
    for p in predictions:
        (present if find_occurrence(src, stem_phrase(p)) >= 0 else absent).append(list(p))
    return present, absent


def evaluate_document(
    predictions: Sequence[Sequence[str]],
    doc: Document,
    present_ks: Sequence[int] = PRESENT_KS,
    absent_ks: Sequence[int] = ABSENT_KS,
) -> dict[tuple[str, int], MetricResult]:
    """Metrics keyed by (partition, k); partitions with empty gold are left out."""
    gold = split_present_absent(doc)
    pred_present, pred_absent = partition_predictions(unique_phrases(predictions), doc)
    out = {}
    for k in present_ks:
        r = prf_at_k(pred_present, gold.present_phrases, k, "present")
        if r is not None:
            out[("present", k)] = r
    for k in absent_ks:
        r = recall_at_k(pred_absent, gold.absent, k)
        if r is not None:
            out[("absent", k)] = r
    return out


@dataclass
class EvalReport:
    """Macro-averaged scores per dataset plus the cross-dataset average.

    ``scores[dataset][(partition, k)]`` is a MetricResult whose ``n_docs`` is
    the number of contributing documents.
    """

    datasets: list[str]
    scores: dict[str, dict[tuple[str, int], MetricResult]] = field(default_factory=dict)
    present_ks: tuple[int, ...] = PRESENT_KS
    absent_ks: tuple[int, ...] = ABSENT_KS

    def value(self, dataset: str, partition: str, k: int, metric: str) -> float | None:
        r = self.scores.get(dataset, {}).get((partition, k))
        return None if r is None else getattr(r, metric)


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def macro_report(
    per_doc: Mapping[str, Sequence[Mapping[tuple[str, int], MetricResult]]],
    present_ks: Sequence[int] = PRESENT_KS,
    absent_ks: Sequence[int] = ABSENT_KS,
) -> EvalReport:
    """Average documents within each dataset, then datasets with equal weight."""
    if not per_doc:
        raise EvaluationError("no datasets to report")
    keys = [("present", k) for k in present_ks] + [("absent", k) for k in absent_ks]
    report = EvalReport(list(per_doc), {}, tuple(present_ks), tuple(absent_ks))
    for name, docs in per_doc.items():
        agg = {}
        for key in keys:
            rows = [d[key] for d in docs if key in d]
            if rows:
                agg[key] = MetricResult(
                    key[1],
                    _mean([r.precision for r in rows]),
                    _mean([r.recall for r in rows]),
                    _mean([r.f1 for r in rows]),
                    key[0],
                    len(rows),
                )
        if not agg:
            raise EvaluationError(f"dataset {name!r} has no contributing documents")
        report.scores[name] = agg
    avg = {}
    for key in keys:
        rows = [report.scores[n][key] for n in report.datasets if key in report.scores[n]]
        if rows:
            avg[key] = MetricResult(
                key[1],
                _mean([r.precision for r in rows]),
                _mean([r.recall for r in rows]),
                _mean([r.f1 for r in rows]),
                key[0],
                sum(r.n_docs for r in rows),
            )
    report.scores[AVERAGE] = avg
    return report


def evaluate_corpus(
    predictions: Mapping[str, Sequence[Sequence[str]]],
    docs: Sequence[Document],
    present_ks: Sequence[int] = PRESENT_KS,
    absent_ks: Sequence[int] = ABSENT_KS,
) -> list[dict]:
    """Per-document metric dicts; documents without a prediction count as empty."""
    return [evaluate_document(predictions.get(d.id, []), d, present_ks, absent_ks) for d in docs]


@dataclass(frozen=True)
class PredictionStats:
    mean_beams: float
    mean_beam_len: float
    mean_unique_kp: float
    mean_total_kp: float
    n_docs: int


def compute_stats(stats: Sequence[Mapping]) -> PredictionStats:
    if not stats:
        raise EvaluationError("no decode outputs to summarise")
    return PredictionStats(
        _mean([s["beams"] for s in stats]),
        _mean([s["mean_beam_len"] for s in stats]),
        _mean([s["unique_kp"] for s in stats]),
        _mean([s["total_kp"] for s in stats]),
        len(stats),
    )


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def fmt_score(x: float | None, places: int = 3) -> str:
    """Fixed decimals, rounding halves up ("0.3445" -> "0.345")."""
    if x is None:
        return "-"
    return str(Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def _columns(report: EvalReport, partitions: Sequence[str]) -> list[tuple[str, str, int, str, str]]:
    cols = []
    names = report.datasets + [AVERAGE]
    for ds in names:
        for part in partitions:
            if part == "present":
                cols += [(ds, part, k, "f1", f"F1@{k}") for k in report.present_ks]
            else:
                cols += [(ds, part, k, "recall", f"R@{k}") for k in report.absent_ks]
    return cols


def render_table(
    header: Sequence[str], rows: Sequence[Sequence[str]], fmt: str = "md", title: str | None = None
) -> str:
    if fmt == "md":
        out = []
        if title:
            out += [f"### {title}", ""]
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "|".join("---" for _ in header) + "|")
        out += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(out) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    raise EvaluationError(f"unknown report format {fmt!r}; use 'md' or 'csv'")


def render_report(
    reports: "EvalReport | Mapping[str, EvalReport]",
    fmt: str = "md",
    partitions: Sequence[str] = ("present", "absent"),
    title: str | None = None,
) -> str:
    """One row per model, one column per (dataset, metric@k), Average last."""
    if isinstance(reports, EvalReport):
        reports = {"model": reports}
    if not reports:
        raise EvaluationError("nothing to render")
    first = next(iter(reports.values()))
    if not first.datasets:
        raise EvaluationError("report has no datasets")
    cols = _columns(first, partitions)
    multi = len(first.datasets) > 1 or fmt == "csv"
    header = ["Model"] + [f"{ds} {label}" if multi else label for ds, _, _, _, label in cols]
    if not multi:
        cols = [c for c in cols if c[0] != AVERAGE]
        header = ["Model"] + [c[4] for c in cols]
    rows = [[label] + [fmt_score(rep.value(ds, part, k, m)) for ds, part, k, m, _ in cols] for label, rep in reports.items()]
    return render_table(header, rows, fmt, title)


def render_stats(stats: Mapping[str, PredictionStats], fmt: str = "md", title: str | None = None) -> str:
    header = ["Model", "#(Beam)", "Len", "#(UniqKP)", "#(KP)"]
    rows = [
        [label] + [fmt_score(x, 2) for x in (s.mean_beams, s.mean_beam_len, s.mean_unique_kp, s.mean_total_kp)]
        for label, s in stats.items()
    ]
    return render_table(header, rows, fmt, title)
