"""File formats: datasets, DAGs, Markov boundary results, moral masks.

Every writer is deterministic and has a matching reader; floats are written
with ``%.17g`` so a read/write cycle is exact.
"""
import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .graph import Dag, MoralGraph
from .synth import Dataset, default_names


class FormatError(ValueError):
    pass


def _fmt(x):
    return "%.17g" % x


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8", newline="")


# -- datasets ------------------------------------------------------------------

def dataset_to_csv(ds):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ds.names)
    for row in ds.data:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_dataset(path, ds):
    _write_text(path, dataset_to_csv(ds))


def read_dataset(path):
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError(f"{path}: empty dataset file")
    names = [n.strip() for n in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise FormatError(f"{path}: no samples")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.shape[1] != len(names) or any(len(r) != len(names) for r in body):
        raise FormatError(f"{path}: ragged rows")
    try:
        return Dataset(names, data)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- DAGs ----------------------------------------------------------------------

def dag_to_csv(dag, names=None):
    names = names or default_names(dag.d)
    buf = io.StringIO()
    buf.write(f"# d={dag.d}\n")
    buf.write("# names=" + ",".join(names) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parent", "child", "weight"])
    for p, c in sorted(dag.edges):
        wt = "" if dag.weights is None else _fmt(dag.weights[(p, c)])
        w.writerow([names[p], names[c], wt])
    return buf.getvalue()


def write_dag(path, dag, names=None):
    _write_text(path, dag_to_csv(dag, names))


def read_dag(path):
    """Read an edge-list or dense-matrix DAG file; returns ``(dag, names)``."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    d = None
    names = None
    body = []
    for line in lines:
        s = line.strip()
        if s.startswith("#"):
            key, _, val = s[1:].strip().partition("=")
            if key.strip() == "d":
                d = int(val)
            elif key.strip() == "names":
                names = [v.strip() for v in val.split(",")] if val.strip() else []
        elif s:
            body.append(s)
    if not body and d is None:
        raise FormatError(f"{path}: empty DAG file")
    try:
        if body and body[0].replace(" ", "").lower().startswith("parent,child"):
            return _read_edge_list(body, d, names, path)
        return _read_dense(body, names, path)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: {exc}") from exc


def _read_edge_list(body, d, names, path):
    rows = list(csv.reader(body[1:]))
    if names is None:
        if d is None:
            ids = [int(x) for r in rows for x in r[:2]]
            d = max(ids) + 1 if ids else 0
        names = default_names(d)
    if d is None:
        d = len(names)
    if len(names) != d:
        raise FormatError(f"{path}: {len(names)} names for d={d}")
    index = {n: i for i, n in enumerate(names)}
    edges, weights = set(), {}
    for r in rows:
        if len(r) < 2:
            raise FormatError(f"{path}: malformed edge row {r}")
        p, c = (index[x.strip()] if x.strip() in index else int(x) for x in r[:2])
        edges.add((p, c))
        if len(r) > 2 and r[2].strip():
            weights[(p, c)] = float(r[2])
    if weights and len(weights) != len(edges):
        raise FormatError(f"{path}: weights given for some edges only")
    return Dag(d, frozenset(edges), weights or None), names


def _read_dense(body, names, path):
    rows = [[float(v) for v in r] for r in csv.reader(body)]
    adj = np.array(rows)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise FormatError(f"{path}: dense DAG matrix must be square")
    if not np.all(np.isin(adj, (0.0, 1.0))):
        raise FormatError(f"{path}: dense DAG matrix must be 0/1")
    d = adj.shape[0]
    names = names or default_names(d)
    return Dag.from_adjacency(adj.astype(np.int64)), names


# -- Markov boundary results ---------------------------------------------------

def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps_json(obj):
    return json.dumps(_clean(obj), indent=2) + "\n"


def mb_to_json(mb_map, names, metadata=None):
    doc = {
        "names": list(names),
        "markov_boundaries": {names[t]: [names[j] for j in mb_map[t]] for t in sorted(mb_map)},
        "metadata": metadata or {},
    }
    return dumps_json(doc)


def write_mb(path, mb_map, names, metadata=None):
    _write_text(path, mb_to_json(mb_map, names, metadata))


def read_mb(path, names=None):
    """Returns ``(mb_map, names, metadata)`` with ``mb_map`` keyed by index into ``names``.

    When ``names`` is given (e.g. from a truth DAG) the join is by name.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if "markov_boundaries" not in doc:
        raise FormatError(f"{path}: missing 'markov_boundaries'")
    raw = doc["markov_boundaries"]
    names = list(names) if names is not None else list(doc.get("names") or raw)
    index = {n: i for i, n in enumerate(names)}
    mb_map = {}
    for t, members in raw.items():
        if t not in index:
            raise FormatError(f"{path}: unknown variable {t!r}")
        unknown = [m for m in members if m not in index]
        if unknown:
            raise FormatError(f"{path}: unknown variable(s) {unknown} in MB of {t!r}")
        mb_map[index[t]] = [index[m] for m in members]
    return mb_map, names, doc.get("metadata", {})


# -- moral masks -----------------------------------------------------------------

def moral_to_csv(moral):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in moral.adj:
        w.writerow([int(v) for v in row])
    return buf.getvalue()


def write_moral(path, moral):
    _write_text(path, moral_to_csv(moral))


def read_moral(path):
    rows = [r for r in csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))) if r]
    try:
        adj = np.array([[int(v) for v in r] for r in rows], dtype=np.int64)
        return MoralGraph(adj.shape[0], adj)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- misc ----------------------------------------------------------------------

def write_json(path, obj):
    _write_text(path, dumps_json(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_loss_trace(path, trace):
    lines = ["epoch,nll"] + [f"{i},{_fmt(v)}" for i, v in enumerate(trace)]
    _write_text(path, "\n".join(lines) + "\n")
