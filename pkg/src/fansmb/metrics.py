"""Ranked-list (nDCG, AveP) and set (F1) metrics for Markov boundary predictions."""
import csv
import io
import math
from dataclasses import dataclass

from .graph import markov_boundary_of


def _check_ranked(ranked):
    ranked = list(ranked)
    if len(set(ranked)) != len(ranked):
        raise ValueError("ranked list contains duplicates")
    return ranked


def ndcg(ranked, truth):
    """Binary-relevance nDCG with the ``1 / log2(rank + 2)`` discount.

    Empty truth scores 1 for an empty prediction and 0 otherwise.
    """
    ranked = _check_ranked(ranked)
    truth = set(truth)
    if not truth:
        return 1.0 if not ranked else 0.0
    dcg = sum(1.0 / math.log2(r + 2) for r, v in enumerate(ranked) if v in truth)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(len(truth)))
    return dcg / idcg


def avep(ranked, truth):
    ranked = _check_ranked(ranked)
    truth = set(truth)
    if not truth:
        return 1.0 if not ranked else 0.0
    hits = 0
    total = 0.0
    for r, v in enumerate(ranked):
        if v in truth:
            hits += 1
            total += hits / (r + 1)
    return total / len(truth)


def f1(predicted, truth):
    predicted, truth = set(predicted), set(truth)
    if not predicted and not truth:
        return 1.0
    tp = len(predicted & truth)
    if tp == 0:
        return 0.0
    return 2.0 * tp / (len(predicted) + len(truth))


@dataclass(frozen=True)
class MetricRow:
    target: object
    ndcg: float
    avep: float
    f1: float


def score_row(target, ranked, truth):
    return MetricRow(target, ndcg(ranked, truth), avep(ranked, truth), f1(ranked, truth))


def macro_average(rows, label="mean"):
    n = len(rows)
    if n == 0:
        raise ValueError("no rows to average")
    return MetricRow(label, sum(r.ndcg for r in rows) / n, sum(r.avep for r in rows) / n, sum(r.f1 for r in rows) / n)


def evaluate_run(mb_map, dag):
    """Per-target rows against ``dag``'s Markov boundaries plus their macro average."""
    if set(mb_map) != set(range(dag.d)):
        missing = sorted(set(range(dag.d)) - set(mb_map))
        extra = sorted(set(mb_map) - set(range(dag.d)))
        raise ValueError(f"prediction/truth mismatch: missing targets {missing}, unknown targets {extra}")
    rows = [score_row(t, mb_map[t], markov_boundary_of(dag, t)) for t in range(dag.d)]
    return rows, macro_average(rows)


def metrics_csv(rows, mean, names=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["target", "ndcg", "avep", "f1"])
    for r in list(rows) + [mean]:
        label = names[r.target] if names is not None and isinstance(r.target, int) else r.target
        w.writerow([label, f"{r.ndcg:.6f}", f"{r.avep:.6f}", f"{r.f1:.6f}"])
    return buf.getvalue()


def metrics_table(rows, mean, names=None):
    body = []
    for r in list(rows) + [mean]:
        label = names[r.target] if names is not None and isinstance(r.target, int) else str(r.target)
        body.append((label, f"{r.ndcg:.4f}", f"{r.avep:.4f}", f"{r.f1:.4f}"))
    head = ("target", "ndcg", "avep", "f1")
    width = [max(len(head[i]), *(len(b[i]) for b in body)) for i in range(4)]
    fmt = lambda cells: "  ".join(c.rjust(width[i]) if i else c.ljust(width[i]) for i, c in enumerate(cells))
    lines = [fmt(head), "  ".join("-" * w for w in width)]
    lines += [fmt(b) for b in body]
    return "\n".join(lines)
