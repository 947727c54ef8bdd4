"""Evaluation of generated CFEs and comparison of CFE kinds across agents and groups."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import AgentState, Cfe, apply_cfe, features_modified, is_valid_cfe
from .errors import DimensionMismatch, LengthMismatch, ZeroMean

log = logging.getLogger(__name__)

SIZE_BUCKETS = ("0", "1", "2", "3", "4+")


def _same(p: Cfe, t: Cfe) -> bool:
    if p.hl_id is not None and t.hl_id is not None:
        return p.hl_id == t.hl_id and p == t
    return p == t


def zero_one_accuracy(predicted: Sequence[Cfe], truth: Sequence[Cfe]) -> float:
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predictions for {len(truth)} true CFEs")
    if not truth:
        return float("nan")
    return sum(_same(p, t) for p, t in zip(predicted, truth)) / len(truth)


def margin_of_error(p: float, n: int, z: float = 1.96) -> float:
    """Half-width of the normal-approximation binomial interval."""
    if n <= 0:
        return float("nan")
    return z * math.sqrt(max(p * (1 - p), 0.0) / n)


def _bucket(size: int) -> str:
    return str(size) if size < 4 else "4+"


@dataclass
class Mistake:
    index: int
    predicted: list
    true: list
    valid: bool
    cost_gap: float


@dataclass
class EvalReport:
    accuracy: float
    n: int
    margin_of_error: float
    by_size: dict
    mistakes: list = field(default_factory=list)
    raw_match_rate: Optional[float] = None

    @property
    def mistake_fraction(self) -> float:
        return len(self.mistakes) / self.n if self.n else float("nan")

    @property
    def valid_mistakes(self) -> list:
        return [m for m in self.mistakes if m.valid]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid_mistakes"] = len(self.valid_mistakes)
        d["invalid_mistakes"] = len(self.mistakes) - d["valid_mistakes"]
        return d

    def rows(self) -> list:
        out = [{"bucket": b, **self.by_size[b]} for b in SIZE_BUCKETS if b in self.by_size]
        out.append({"bucket": "all", "n": self.n, "correct": self.n - len(self.mistakes),
                    "accuracy": self.accuracy})
        return out


def classify_mistakes(agents: Sequence[AgentState], predicted: Sequence[Cfe], truth: Sequence[Cfe],
                      catalog, clf) -> EvalReport:
    """Accuracy by true-CFE size, plus every mismatch tagged valid or invalid."""
    if not len(agents) == len(predicted) == len(truth):
        raise LengthMismatch(f"{len(agents)} agents, {len(predicted)} predictions, {len(truth)} true CFEs")
    by_size: dict = {}
    mistakes = []
    for k, (a, p, t) in enumerate(zip(agents, predicted, truth)):
        b = by_size.setdefault(_bucket(t.size), {"n": 0, "correct": 0})
        b["n"] += 1
        if _same(p, t):
            b["correct"] += 1
            continue
        mistakes.append(Mistake(k, [list(e) for e in p.entries], [list(e) for e in t.entries],
                                is_valid_cfe(a, p, catalog, clf), p.total_cost - t.total_cost))
    for b in by_size.values():
        b["accuracy"] = b["correct"] / b["n"]
    n = len(truth)
    acc = (n - len(mistakes)) / n if n else float("nan")
    return EvalReport(acc, n, margin_of_error(acc, n), by_size, mistakes)


def improvement(before: AgentState, after: AgentState) -> float:
    if before.n != after.n:
        raise DimensionMismatch(f"states of size {before.n} and {after.n}")
    return float(np.linalg.norm(after.features - before.features))


def delta_metric(p_mean: float, q_mean: float) -> float:
    return p_mean - q_mean


def coefficient_of_variation(values) -> float:
    """Population standard deviation over the mean, in percent."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ZeroMean("coefficient of variation of an empty list")
    mean = v.mean()
    if mean == 0:
        raise ZeroMean("coefficient of variation is undefined for zero mean")
    return float(v.std() / mean * 100.0)


# ----- Kendall tau -----

def _tie_sums(v):
    t = np.array(list(Counter(v.tolist()).values()), dtype=np.float64)
    return (t * (t - 1)).sum(), (t * (t - 1) * (t - 2)).sum(), (t * (t - 1) * (2 * t + 5)).sum()


def _tau_from_counts(s, n, a, b):
    """tau-b and its two-sided normal p-value from the signed pair sum ``s``."""
    n0 = n * (n - 1) / 2
    xt, x0, x1 = _tie_sums(a)
    yt, y0, y1 = _tie_sums(b)
    n1, n2 = xt / 2, yt / 2
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0:
        return float("nan"), float("nan")
    tau = s / denom
    m = n * (n - 1)
    var = (m * (2 * n + 5) - x1 - y1) / 18 + xt * yt / (2 * m)
    if n > 2:
        var += x0 * y0 / (9 * m * (n - 2))
    if var <= 0:
        return tau, float("nan")
    z = s / math.sqrt(var)
    return float(tau), float(math.erfc(abs(z) / math.sqrt(2)))


def kendall_tau_pairs(a, b):
    """O(n^2) reference: sign products over every pair."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"vectors of length {a.size} and {b.size}")
    if a.size < 2:
        raise LengthMismatch("kendall tau needs at least two observations")
    s = 0
    n = a.size
    for i in range(n - 1):
        s += int((np.sign(a[i + 1:] - a[i]) * np.sign(b[i + 1:] - b[i])).sum())
    return _tau_from_counts(s, n, a, b)


def kendall_tau(a, b):
    """Tie-corrected tau-b with an asymptotic two-sided p-value, in O(n log n)."""
    from scipy.stats import kendalltau

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"vectors of length {a.size} and {b.size}")
    if a.size < 2:
        raise LengthMismatch("kendall tau needs at least two observations")
    res = kendalltau(a, b, variant="b", method="asymptotic")
    return float(res.statistic), float(res.pvalue)


# ----- comparison across CFE kinds -----

VARIABLES = ("actions", "features", "improvement", "cost", "agents_per_cfe")


def actions_taken(cfe: Cfe) -> int:
    if cfe.deltas is not None:
        return sum(1 for _, d in cfe.deltas if d != 0)
    return cfe.size


def agent_variables(ds) -> list:
    """One row per pair: actions taken, features modified, improvement, cost, agents sharing the CFE."""
    freq = ds.cfe_frequency_table
    rows = []
    for p in ds.pairs:
        after = apply_cfe(p.agent, p.cfe, ds.catalog)
        rows.append({"group": p.agent.group, "actions": actions_taken(p.cfe),
                     "features": features_modified(p.agent, after), "improvement": improvement(p.agent, after),
                     "cost": p.cfe.total_cost, "agents_per_cfe": freq[p.cfe]})
    return rows


def _means(rows) -> dict:
    return {v: float(np.mean([r[v] for r in rows])) if rows else float("nan") for v in VARIABLES}


def group_report(rows: list, group_key: str = "group") -> dict:
    """Per-group means and the coefficient of variation of those means across groups."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r.get(group_key), []).append(r)
    if not groups:
        log.warning("group report over no rows")
        return {"groups": {}, "cv": {}}
    table = {str(g): {"n": len(rs), **_means(rs)} for g, rs in sorted(groups.items(), key=lambda kv: str(kv[0]))}
    cv = {}
    for v in VARIABLES:
        vals = [t[v] for t in table.values()]
        try:
            cv[v] = coefficient_of_variation(vals)
        except ZeroMean:
            cv[v] = float("nan")
    return {"groups": table, "cv": cv}


@dataclass
class ComparisonReport:
    left_kind: str
    right_kind: str
    n_matched: int
    left_means: dict
    right_means: dict
    deltas: dict
    left_groups: dict = field(default_factory=dict)
    right_groups: dict = field(default_factory=dict)
    kendall: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list:
        out = [{"scope": "all", "variable": v, "left": self.left_means[v], "right": self.right_means[v],
                "delta": self.deltas[v]} for v in VARIABLES]
        for g, t in self.left_groups.get("groups", {}).items():
            r = self.right_groups.get("groups", {}).get(g, {})
            for v in VARIABLES:
                lv, rv = t[v], r.get(v, float("nan"))
                out.append({"scope": f"group:{g}", "variable": v, "left": lv, "right": rv, "delta": lv - rv})
        return out


def _agent_key(a: AgentState):
    return (a.features.tobytes(), a.group)


def compare(left, right, group_key: Optional[str] = "group") -> ComparisonReport:
    """Compare two datasets over the agents present in both (matched by state and group)."""
    # identical agents are kept, so the k-th copy on the left pairs with the k-th on the right
    rrows: dict = {}
    for p, row in zip(right.pairs, agent_variables(right)):
        rrows.setdefault(_agent_key(p.agent), []).append(row)
    used: Counter = Counter()
    L, R = [], []
    for p, row in zip(left.pairs, agent_variables(left)):
        k = _agent_key(p.agent)
        if used[k] < len(rrows.get(k, ())):
            L.append(row)
            R.append(rrows[k][used[k]])
            used[k] += 1
    lm, rm = _means(L), _means(R)
    deltas = {v: delta_metric(lm[v], rm[v]) for v in VARIABLES}
    report = ComparisonReport(left.problem_kind, right.problem_kind, len(L), lm, rm, deltas)
    if group_key:
        report.left_groups = group_report(L, group_key)
        report.right_groups = group_report(R, group_key)
        groups = sorted(report.left_groups["groups"])
        if len(groups) >= 2:
            # do both CFE kinds rank the groups the same way?
            for v in VARIABLES:
                a = [report.left_groups["groups"][g][v] for g in groups]
                b = [report.right_groups["groups"][g][v] for g in groups]
                tau, pv = kendall_tau(a, b)
                report.kendall.append({"variables": f"{v}:left~right", "tau": tau, "p_value": pv})
    return report


def rows_to_csv(rows: list) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
