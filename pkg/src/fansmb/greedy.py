"""Greedy grow/shrink Markov boundary search over a conditional-entropy scorer.

A scorer is any object with ``entropies(target, conds) -> list[float]``
returning ``H(target | cond)`` for each conditioning set, e.g.
:class:`fansmb.gauss.GaussianScorer` or :class:`fansmb.estimator.FansScorer`.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from .gauss import SingularMatrixError

SYMMETRY_RULES = ("union", "intersection", "none")


@dataclass
class SearchConfig:
    eps_g: float = 0.005
    eps_s: float = 0.002
    patience: int = 15
    M: int = None
    K: int = 1000
    symmetry: str = "union"
    seed: int = 0

    def __post_init__(self):
        if self.eps_g < 0 or self.eps_s < 0:
            raise ValueError("thresholds must be non-negative")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if self.M is not None and self.M < 1:
            raise ValueError("M must be >= 1")
        if self.symmetry not in SYMMETRY_RULES:
            raise ValueError(f"symmetry must be one of {SYMMETRY_RULES}")

    @classmethod
    def defaults_for(cls, d, dense=False, **overrides):
        eps = (0.001, 0.001) if dense else (0.005, 0.002)
        cfg = dict(eps_g=eps[0], eps_s=eps[1], patience=50 if d >= 5000 else 15)
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**cfg)

    def to_dict(self):
        return asdict(self)


@dataclass
class MbResult:
    target: int
    members: list
    grow_trace: list = field(default_factory=list)
    shrink_trace: list = field(default_factory=list)

    @property
    def mb_plus(self):
        return [v for v, _ in self.grow_trace]


class ScorerError(RuntimeError):
    def __init__(self, target, candidate, cause):
        super().__init__(f"scorer failed for target {target}, candidate {candidate}: {cause}")
        self.target = target
        self.candidate = candidate
        self.__cause__ = cause


class DiscoveryError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        names = ", ".join(str(t) for t in sorted(failures))
        super().__init__(f"discovery failed for target(s) {names}")


def _score(scorer, target, conds, labels):
    """Entropies for ``conds``; singular Gaussian subsets score ``inf`` (dropped)."""
    try:
        return list(scorer.entropies(target, conds))
    except SingularMatrixError:
        pass
    except Exception as exc:
        raise ScorerError(target, labels[0] if len(labels) == 1 else list(labels), exc) from exc
    out = []
    for c, lab in zip(conds, labels):
        try:
            out.append(scorer.entropies(target, [c])[0])
        except SingularMatrixError:
            out.append(math.inf)
        except Exception as exc:
            raise ScorerError(target, lab, exc) from exc
    return out


def _argmin(values, labels):
    # lowest index wins ties
    best = None
    for v, lab in sorted(zip(values, labels), key=lambda t: t[1]):
        if best is None or v < best[0]:
            best = (v, lab)
    return best


def size_cap(cfg, d):
    """Largest allowed ``|MB+ + {target}|`` before growing halts."""
    return d if cfg.M is None else min(cfg.M, d)


def grow(target, scorer, cfg, d):
    """Greedy forward selection with patience; returns ``(mb_plus, trace)``."""
    mb = []
    trace = []
    h_cur = _score(scorer, target, [frozenset()], [None])[0]
    patience = 0
    cap = size_cap(cfg, d)
    while patience <= cfg.patience and len(mb) + 1 < cap:
        cands = [j for j in range(d) if j != target and j not in mb]
        if not cands:
            break
        base = frozenset(mb)
        vals = _score(scorer, target, [base | {j} for j in cands], cands)
        h_new, m = _argmin(vals, cands)
        if math.isinf(h_new):
            break
        if h_cur - h_new > cfg.eps_g:
            patience = 0
        else:
            patience += 1
        mb.append(m)
        trace.append((m, h_new))
        h_cur = h_new
    return mb, trace


def shrink(mb_plus, target, scorer, cfg):
    """Backward elimination; members keep their grow-phase order."""
    mb = list(mb_plus)
    trace = []
    if not mb:
        return mb, trace
    h_cur = _score(scorer, target, [frozenset(mb)], [None])[0]
    while mb:
        conds = [frozenset(v for v in mb if v != m) for m in mb]
        vals = _score(scorer, target, conds, list(mb))
        deltas = [v - h_cur for v in vals]
        delta, m = _argmin(deltas, list(mb))
        if delta > cfg.eps_s:
            break
        mb.remove(m)
        h_cur = h_cur + delta
        trace.append((m, h_cur))
    return mb, trace


def search_target(target, scorer, cfg, d):
    mb_plus, gtrace = grow(target, scorer, cfg, d)
    members, strace = shrink(mb_plus, target, scorer, cfg)
    return MbResult(target, members, gtrace, strace)


def symmetry_correct(mb_map, rule="union"):
    """Enforce ``j in MB(i) <=> i in MB(j)``.

    ``union`` appends missing partners at the end of the ranked list,
    ``intersection`` drops one-sided members, ``none`` returns a copy.
    """
    if rule not in SYMMETRY_RULES:
        raise ValueError(f"unknown symmetry rule {rule!r}")
    out = {i: list(v) for i, v in mb_map.items()}
    if rule == "none":
        return out
    if rule == "intersection":
        return {i: [j for j in v if i in mb_map.get(j, ())] for i, v in mb_map.items()}
    for j in sorted(mb_map):
        for i in mb_map[j]:
            lst = out.setdefault(i, [])
            if j not in lst:
                lst.append(j)
    return out


def discover_all(d, scorer, cfg, workers=1, targets=None):
    """Run the per-target search for every variable, then symmetry correction.

    Returns ``(corrected, results)``: ``corrected`` maps target -> ranked
    member list, ``results`` maps target -> raw :class:`MbResult`.
    """
    targets = list(range(d)) if targets is None else list(targets)

    def run(t):
        try:
            return t, search_target(t, scorer, cfg, d), None
        except Exception as exc:  # collected and re-raised below
            return t, None, exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, targets))
    else:
        outcomes = [run(t) for t in targets]
    failures = {t: exc for t, _, exc in outcomes if exc is not None}
    if failures:
        raise DiscoveryError(failures)
    results = {t: r for t, r, _ in outcomes}
    corrected = symmetry_correct({t: r.members for t, r in results.items()}, cfg.symmetry)
    return corrected, results
