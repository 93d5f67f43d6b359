"""Clustering scores: matched accuracy, NMI and two-class confusion rates."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError
from .labeling import Labeling

__all__ = ["EvalReport", "contingency", "accuracy", "nmi", "confusion", "match_labels", "evaluate"]


def _labels(x) -> np.ndarray:
    return x.labels if isinstance(x, Labeling) else np.asarray(x).ravel()


def _pair(pred, truth):
    p, t = _labels(pred), _labels(truth)
    if p.size == 0 or t.size == 0:
        raise InputError("labelings must not be empty")
    if p.shape != t.shape:
        raise InputError(f"labelings differ in length: {p.size} vs {t.size}")
    return p, t


def contingency(pred, truth):
    """Counts ``C[i, j]`` of items with the i-th predicted and j-th true label."""
    p, t = _pair(pred, truth)
    pu, pi = np.unique(p, return_inverse=True)
    tu, ti = np.unique(t, return_inverse=True)
    C = np.zeros((len(pu), len(tu)), dtype=np.int64)
    np.add.at(C, (pi, ti), 1)
    return C, pu, tu


def match_labels(pred, truth) -> dict:
    """Optimal one-to-one map from predicted to true labels (unmatched omitted)."""
    C, pu, tu = contingency(pred, truth)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return {pu[r].item(): tu[c].item() for r, c in zip(rows, cols)}


def accuracy(pred, truth) -> float:
    """Fraction of items agreeing under the best one-to-one label matching."""
    C, _, _ = contingency(pred, truth)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum() / C.sum())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    C, _, _ = contingency(pred, truth)
    n = C.sum()
    hp, ht = _entropy(C.sum(axis=1)), _entropy(C.sum(axis=0))
    if hp == 0.0 and ht == 0.0:
        return 1.0
    P = C / n
    outer = np.outer(P.sum(axis=1), P.sum(axis=0))
    nz = P > 0
    mi = float((P[nz] * np.log(P[nz] / outer[nz])).sum())
    return float(np.clip(mi / (0.5 * (hp + ht)), 0.0, 1.0))


def confusion(pred, truth) -> tuple[float, float, float, float]:
    """``(tpr, fpr, fnr, tnr)`` with the lower true label as the positive class.

    Predicted labels are first mapped onto true labels by the accuracy matching;
    predictions left unmatched count as neither class, i.e. as misses.
    """
    p, t = _pair(pred, truth)
    tu = np.unique(t)
    if len(tu) != 2:
        raise InputError(f"confusion rates need exactly 2 true labels, got {len(tu)}")
    mapping = match_labels(p, t)
    mapped = np.array([mapping.get(v.item(), None) for v in p], dtype=object)
    pos, neg = tu[0].item(), tu[1].item()
    is_pos = t == pos
    tp = np.sum(is_pos & (mapped == pos))
    fn = np.sum(is_pos) - tp
    tn = np.sum(~is_pos & (mapped == neg))
    fp = np.sum(~is_pos) - tn
    P, N = tp + fn, tn + fp
    return (float(tp / P), float(fp / N), float(fn / P), float(tn / N))


@dataclass
class EvalReport:
    accuracy: float
    nmi: float
    confusion: Optional[tuple] = None
    cluster_counts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        if self.confusion is not None:
            d["confusion"] = dict(zip(("tpr", "fpr", "fnr", "tnr"), self.confusion))
        return d


def evaluate(pred, truth) -> EvalReport:
    p, t = _pair(pred, truth)
    conf = confusion(p, t) if len(np.unique(t)) == 2 else None
    pu, pc = np.unique(p, return_counts=True)
    tu, tc = np.unique(t, return_counts=True)
    counts = {
        "pred": {str(k): int(v) for k, v in zip(pu, pc)},
        "truth": {str(k): int(v) for k, v in zip(tu, tc)},
    }
    return EvalReport(accuracy(p, t), nmi(p, t), conf, counts)
