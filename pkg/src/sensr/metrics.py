"""Accuracy, group-fairness and individual-fairness evaluation."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from sensr import models


def balanced_accuracy(preds, labels) -> float:
    """Mean per-class recall over the classes present in ``labels``."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    classes = np.unique(labels)
    return float(np.mean([np.mean(preds[labels == c] == c) for c in classes]))


def accuracy(preds, labels) -> float:
    return float(np.mean(np.asarray(preds) == np.asarray(labels)))


@dataclass(frozen=True)
class TprGaps:
    gap_rms: float
    gap_max: float
    per_class: dict


def tpr_gaps(preds, labels, attribute) -> TprGaps:
    """Between-group true-positive-rate gaps ``TPR_{0,c} - TPR_{1,c}`` per class,
    with their root-mean-square and max absolute value.

    Classes where one attribute group has no members are excluded (with a
    warning); they appear in ``per_class`` as NaN.
    """
    preds, labels, attribute = map(np.asarray, (preds, labels, attribute))
    per_class = {}
    for c in np.unique(labels):
        rates = []
        for a in (0, 1):
            m = (labels == c) & (attribute == a)
            rates.append(np.mean(preds[m] == c) if m.any() else np.nan)
        gap = rates[0] - rates[1]
        if np.isnan(gap):
            warnings.warn(f"TPR gap undefined for class {c}: an attribute group is empty")
        per_class[int(c)] = float(gap)
    gaps = np.array([g for g in per_class.values() if not np.isnan(g)])
    if gaps.size == 0:
        return TprGaps(float("nan"), float("nan"), per_class)
    return TprGaps(float(np.sqrt(np.mean(gaps**2))), float(np.max(np.abs(gaps))), per_class)


def consistency(params, features, variant_generator: Callable, meta=None) -> float:
    """Fraction of rows whose predicted class is the same across every variant
    produced by ``variant_generator(features, meta)``."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    variants = variant_generator(X, meta) if meta is not None else variant_generator(X)
    preds = np.stack([models.predict(params, v) for v in variants])
    return float(np.mean(np.all(preds == preds[0], axis=0)))


def group_logit_gap(params, group0, group1) -> float:
    """Mean ``logit_1 - logit_0`` over ``group0`` minus the same mean over ``group1``."""
    def margin(g):
        z = models.forward(params, np.atleast_2d(np.asarray(g, dtype=np.float64)))
        return float(np.mean(z[:, 1] - z[:, 0]))

    return margin(group0) - margin(group1)


@dataclass
class EvalReport:
    accuracy: float
    balanced_accuracy: float
    gaps: dict = field(default_factory=dict)
    s_con: float | None = None
    gr_con: float | None = None
    group_logit_gaps: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        head = ["B-Acc,%", "S-Con.", "GR-Con."]
        row = [f"{100 * self.balanced_accuracy:.1f}", _fmt(self.s_con), _fmt(self.gr_con)]
        for name, g in self.gaps.items():
            head += [f"Gap_{name}^RMS", f"Gap_{name}^max"]
            row += [_fmt(g["gap_rms"]), _fmt(g["gap_max"])]
        for name, v in self.group_logit_gaps.items():
            head.append(f"{name} gap")
            row.append(f"{v:.2f}")
        widths = [max(len(h), len(r)) for h, r in zip(head, row)]
        line = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return line(head) + "\n" + line(row)


def _fmt(v):
    if v is None:
        return "-"
    return f"{v:.3f}".lstrip("0") if 0 <= v < 1 else f"{v:.2f}"


def evaluate(params, dataset, attributes=(), spouse: bool = False, gender_race: bool = False,
             logit_groups: dict | None = None) -> EvalReport:
    """Everything in one report; consistency metrics need Adult-style feature meta."""
    from sensr import data

    preds = models.predict(params, dataset.features)
    report = EvalReport(accuracy(preds, dataset.labels), balanced_accuracy(preds, dataset.labels))
    for a in attributes:
        g = tpr_gaps(preds, dataset.labels, dataset.protected[a])
        report.gaps[a] = {"gap_rms": g.gap_rms, "gap_max": g.gap_max, "per_class": g.per_class}
    if spouse:
        report.s_con = consistency(params, dataset.features, data.counterfactual_spouse, dataset.meta)
    if gender_race:
        report.gr_con = consistency(params, dataset.features, data.counterfactual_gender_race, dataset.meta)
    for name, (g0, g1) in (logit_groups or {}).items():
        report.group_logit_gaps[name] = group_logit_gap(params, g0, g1)
    return report
