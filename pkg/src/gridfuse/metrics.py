"""Confusion counts and classification metrics, positive class = de-energized.

Zero-denominator precision/recall/F are reported as None ("undefined") and
excluded from aggregation with a count, never silently coerced to 0 or NaN.
Aggregation is macro: per-scenario metrics first, then the mean of the
defined ones. System-level accuracy is the fraction of scenarios whose every
tracked state (branches and customers) was inferred correctly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

__all__ = ["ConfusionCounts", "MetricReport", "confusion", "metrics", "aggregate"]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn,
            self.fp + other.fp, self.fn + other.fn,
        )


@dataclass
class MetricReport:
    """Metric values; None marks an undefined ratio. For a single scenario,
    system_accuracy is the 0/1 fully-correct indicator; aggregated, it is the
    fraction of fully correct scenarios."""

    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    beta: float = 1.0
    system_accuracy: float | None = None
    n_scenarios: int = 1
    undefined_precision: int = 0
    undefined_recall: int = 0
    undefined_f1: int = 0


def confusion(pred, truth) -> ConfusionCounts:
    """Count the 2x2 table over identical key sets."""
    if set(pred) != set(truth):
        only_p = sorted(set(pred) - set(truth))[:3]
        only_t = sorted(set(truth) - set(pred))[:3]
        raise ValidationError(
            f"prediction/truth key mismatch (pred-only {only_p!r}, truth-only {only_t!r})"
        )
    tp = tn = fp = fn = 0
    for key, p in pred.items():
        t = truth[key]
        if p == 1 and t == 1:
            tp += 1
        elif p == 0 and t == 0:
            tn += 1
        elif p == 1 and t == 0:
            fp += 1
        else:
            fn += 1
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def metrics(
    c: ConfusionCounts, beta: float = 1.0, fully_correct: bool | None = None
) -> MetricReport:
    """Accuracy, precision, recall, and the F score with weight beta.

    F = (beta^2 + 1) * P * R / (beta^2 * P + R); undefined when precision or
    recall is, or when both are zero.
    """
    if c.total == 0:
        raise ValidationError("empty confusion counts")
    accuracy = (c.tp + c.tn) / c.total
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    f1 = None
    if precision is not None and recall is not None and (beta**2 * precision + recall) > 0:
        f1 = (beta**2 + 1) * precision * recall / (beta**2 * precision + recall)
    return MetricReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        beta=beta,
        system_accuracy=None if fully_correct is None else float(fully_correct),
        undefined_precision=int(precision is None),
        undefined_recall=int(recall is None),
        undefined_f1=int(f1 is None),
    )


def aggregate(reports) -> MetricReport:
    """Macro-average per-scenario reports; undefined entries are excluded
    and counted."""
    reports = list(reports)
    if not reports:
        raise ValidationError("nothing to aggregate")
    betas = {r.beta for r in reports}
    if len(betas) > 1:
        raise ValidationError(f"mixed beta values {sorted(betas)!r}")

    def mean_defined(values):
        defined = [v for v in values if v is not None]
        if not defined:
            return None, len(values)
        return sum(defined) / len(defined), len(values) - len(defined)

    accuracy = sum(r.accuracy for r in reports) / len(reports)
    precision, und_p = mean_defined([r.precision for r in reports])
    recall, und_r = mean_defined([r.recall for r in reports])
    f1, und_f = mean_defined([r.f1 for r in reports])
    system, _ = mean_defined([r.system_accuracy for r in reports])
    return MetricReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        beta=reports[0].beta,
        system_accuracy=system,
        n_scenarios=sum(r.n_scenarios for r in reports),
        undefined_precision=und_p,
        undefined_recall=und_r,
        undefined_f1=und_f,
    )
