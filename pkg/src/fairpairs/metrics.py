"""Evaluation metrics: individual fairness, confusion rates, equality-of-odds
gaps, cross-evaluation matrices, and the finite-space Lipschitz/constraint
equivalence checker.

All rates are percentages; rendering rounds to one decimal, raw values keep
full precision.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "individual_fairness",
    "confusion_rates",
    "balanced_accuracy",
    "eo_gaps",
    "cross_eval",
    "CrossEvalReport",
    "FiniteMetricSpace",
    "LipschitzCheck",
    "lipschitz_equivalence_check",
    "mean_and_halfwidth",
]

logger = logging.getLogger(__name__)


def individual_fairness(predict: Callable[[Sequence[str]], Sequence[int]], pairs: Sequence) -> float:
    """Percentage of pairs whose two sides get the same predicted label.

    ``pairs`` holds (s, s_prime) tuples or objects with .s/.s_prime.
    """
    if len(pairs) == 0:
        raise ValueError("empty pair pool")
    lefts, rights = [], []
    for pair in pairs:
        s, s_prime = pair if isinstance(pair, tuple) else (pair.s, pair.s_prime)
        lefts.append(s)
        rights.append(s_prime)
    f_left = np.asarray(predict(lefts))
    f_right = np.asarray(predict(rights))
    return 100.0 * float(np.mean(f_left == f_right))


def confusion_rates(preds: Sequence[int], labels: Sequence[int]) -> dict[str, float]:
    """{tpr, tnr, acc} in percent."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise ValueError("prediction/label length mismatch")
    pos = labels == 1
    neg = labels == 0
    out = {"acc": 100.0 * float(np.mean(preds == labels))}
    out["tpr"] = 100.0 * float(np.mean(preds[pos] == 1)) if pos.any() else float("nan")
    out["tnr"] = 100.0 * float(np.mean(preds[neg] == 0)) if neg.any() else float("nan")
    return out


def balanced_accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    """(TPR + TNR) / 2 in percent; requires both classes among labels."""
    labels = np.asarray(labels, dtype=int)
    if len(set(labels.tolist())) < 2:
        raise ValueError("balanced accuracy needs both classes present")
    rates = confusion_rates(preds, labels)
    return (rates["tpr"] + rates["tnr"]) / 2.0


def eo_gaps(
    predict: Callable[[Sequence[str]], Sequence[int]],
    store,
    groups: Sequence[str],
) -> dict:
    """Equality-of-odds gaps: per group, TPR/TNR restricted to comments that
    mention it; report mean and max absolute pairwise differences in percent.
    Groups whose restriction has a single class are dropped with a warning.
    """
    per_group: dict[str, dict[str, float]] = {}
    dropped: list[str] = []
    for group in groups:
        rows = [lc for lc in store.labeled() if group in lc.groups]
        labels = [lc.y for lc in rows]
        if len(set(labels)) < 2:
            dropped.append(group)
            logger.warning("eo_gaps: group %s has a single-class restriction; excluded", group)
            continue
        preds = list(predict([lc.comment.text for lc in rows]))
        per_group[group] = confusion_rates(preds, labels)
    if len(per_group) < 2:
        raise ValueError("need at least two groups with both labels present")
    report: dict = {"per_group": per_group, "excluded": dropped}
    for rate in ("tpr", "tnr"):
        diffs = [abs(per_group[a][rate] - per_group[b][rate]) for a, b in combinations(sorted(per_group), 2)]
        report[f"{rate}_mean"] = float(np.mean(diffs))
        report[f"{rate}_max"] = float(np.max(diffs))
    return report


@dataclass
class CrossEvalReport:
    classifier_names: list[str]
    pool_names: list[str]
    fairness: np.ndarray  # (n_classifiers, n_pools)
    ba: list[float]

    def diagonal_dominant(self) -> bool:
        """True when every classifier scores best on its same-index pool."""
        n = min(len(self.classifier_names), len(self.pool_names))
        for i in range(n):
            if self.fairness[i, i] < self.fairness[i].max():
                return False
        return True

    def render(self) -> str:
        header = ["Training/Evaluation", "BA"] + self.pool_names
        rows = []
        for i, name in enumerate(self.classifier_names):
            rows.append([name, f"{self.ba[i]:.1f}"] + [f"{v:.1f}" for v in self.fairness[i]])
        widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for row in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["classifier", "ba"] + self.pool_names)
        for i, name in enumerate(self.classifier_names):
            writer.writerow([name, f"{self.ba[i]:.1f}"] + [f"{v:.1f}" for v in self.fairness[i]])
        return buf.getvalue()


def cross_eval(
    classifiers: Sequence[tuple[str, Callable[[Sequence[str]], Sequence[int]]]],
    pools: Sequence[tuple[str, Sequence]],
    eval_store=None,
) -> CrossEvalReport:
    """Individual fairness of every classifier on every pool, plus a balanced
    accuracy column when a labeled store is supplied."""
    fairness = np.zeros((len(classifiers), len(pools)))
    ba: list[float] = []
    for i, (_, predict) in enumerate(classifiers):
        for k, (_, pairs) in enumerate(pools):
            fairness[i, k] = individual_fairness(predict, pairs)
        if eval_store is not None:
            labeled = eval_store.labeled()
            preds = list(predict([lc.comment.text for lc in labeled]))
            ba.append(balanced_accuracy(preds, [lc.y for lc in labeled]))
        else:
            ba.append(float("nan"))
    return CrossEvalReport(
        classifier_names=[n for n, _ in classifiers],
        pool_names=[n for n, _ in pools],
        fairness=fairness,
        ba=ba,
    )


@dataclass(frozen=True)
class FiniteMetricSpace:
    """A finite point set with a symmetric distance table, a binary output
    metric, and a Lipschitz constant."""

    points: tuple
    d: tuple[tuple[float, ...], ...]
    L: float
    d_b: Callable[[object, object], int] = field(default=lambda a, b: int(a != b))

    def __post_init__(self):
        n = len(self.points)
        if self.L <= 0:
            raise ValueError("L must be positive")
        for i in range(n):
            if self.d[i][i] != 0:
                raise ValueError("distance diagonal must be zero")
            for k in range(n):
                if self.d[i][k] < 0:
                    raise ValueError("distances must be non-negative")
                if self.d[i][k] != self.d[k][i]:
                    raise ValueError("distance table must be symmetric")

    def distance(self, i: int, k: int) -> float:
        return self.d[i][k]


@dataclass(frozen=True)
class LipschitzCheck:
    lipschitz: bool
    constraint_satisfied: bool
    witness: tuple | None


def lipschitz_equivalence_check(space: FiniteMetricSpace, f: Mapping) -> LipschitzCheck:
    """Exhaustively test both sides of the similarity/Lipschitz equivalence.

    The induced pair relation marks (x, x') as unconstrained iff
    L*d(x,x') >= 1; f is L-Lipschitz iff that relation upper-bounds the output
    metric everywhere.  Returns the first violating pair as witness when
    either side fails.
    """
    lipschitz = True
    constraint = True
    witness = None
    n = len(space.points)
    for i in range(n):
        for k in range(n):
            x, x_prime = space.points[i], space.points[k]
            out_dist = space.d_b(f[x], f[x_prime])
            scaled = space.L * space.distance(i, k)
            phi = 1 if scaled >= 1.0 else 0
            pair_lip = out_dist <= scaled
            pair_con = phi >= out_dist
            if not (pair_lip and pair_con) and witness is None:
                witness = (x, x_prime)
            lipschitz &= pair_lip
            constraint &= pair_con
    return LipschitzCheck(lipschitz=bool(lipschitz), constraint_satisfied=bool(constraint), witness=witness)


def mean_and_halfwidth(values: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """Mean and half-width of a naive normal confidence interval."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float(values.mean()) if len(values) else float("nan"), float("nan")
    half = z * values.std(ddof=1) / math.sqrt(len(values))
    return float(values.mean()), float(half)
