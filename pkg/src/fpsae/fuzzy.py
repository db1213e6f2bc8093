"""Post-classification logic on ranked class probabilities."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

_SUM_SLACK = 1e-12


def _below(fp: float, threshold: float) -> bool:
    # fp < 1 always holds mathematically; a float fp of exactly 1.0 must not
    # escape the t = 1 boundary
    return fp < threshold or threshold >= 1.0


@dataclass(frozen=True)
class FuzzyDecision:
    ranked: tuple  # ((label, prob), ...) most probable first
    threshold: float
    secondary: object = None
    rescued_flag: bool = False
    rejected: bool = False

    def __post_init__(self):
        probs = [p for _, p in self.ranked]
        if len(probs) < 2:
            raise ValueError("a ranking needs at least two classes")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError("ranked probabilities must be non-increasing")
        if sum(probs[:3]) > 1.0 + _SUM_SLACK:
            raise ValueError("top probabilities sum above 1")

    @property
    def primary(self):
        return self.ranked[0][0]

    @property
    def fp(self) -> float:
        return self.ranked[0][1]

    @property
    def sp(self) -> float:
        return self.ranked[1][1]

    @property
    def tp(self) -> float:
        return self.ranked[2][1] if len(self.ranked) > 2 else 0.0

    @property
    def candidates(self) -> tuple:
        """Classes to search in the matching stage."""
        if self.secondary is None:
            return (self.primary,)
        return (self.primary, self.secondary)


def fuzzy_classify(ranked: Sequence, threshold: float) -> FuzzyDecision:
    """Keep the top class; add the runner-up when the top probability is below ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    ranked = tuple((label, float(p)) for label, p in ranked)
    secondary = ranked[1][0] if _below(ranked[0][1], threshold) else None
    return FuzzyDecision(ranked=ranked, threshold=threshold, secondary=secondary)


def rescue_condition(decision: FuzzyDecision, sum_threshold: float) -> bool:
    """True when fp + sp < sum_threshold, i.e. the third class deserves a look."""
    return decision.fp + decision.sp < sum_threshold


def flag_rescue(decision: FuzzyDecision, sum_threshold: float) -> FuzzyDecision:
    return replace(decision, rescued_flag=rescue_condition(decision, sum_threshold))


def reject_lowest(decisions: Sequence[FuzzyDecision], fraction: float) -> list[FuzzyDecision]:
    """Mark the ceil(fraction * N) least confident decisions as rejected.

    Confidence is the top probability; ties keep input order.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"reject fraction {fraction} outside [0, 1)")
    n_reject = math.ceil(fraction * len(decisions))
    order = sorted(range(len(decisions)), key=lambda i: (decisions[i].fp, i))
    chosen = set(order[:n_reject])
    return [replace(d, rejected=True) if i in chosen else d for i, d in enumerate(decisions)]


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    n_below: int
    first_correct_below: int
    second_correct_below: int
    first_wrong_below: int
    n_considered: int
    acc_fuzzy: float


SWEEP_COLUMNS = (
    "threshold",
    "n_below",
    "first_correct_below",
    "second_correct_below",
    "first_wrong_below",
    "n_considered",
    "acc_fuzzy",
)


def sweep(decisions: Sequence[FuzzyDecision], labels: Sequence, thresholds: Sequence[float]):
    """Fuzzy accuracy per threshold; rejected decisions are left out.

    A sample with fp >= t counts if its top class is right; below t it
    counts if either of its two best classes is right.  ``n_considered`` is
    the number of class lookups: one per sample plus one per sample below t.
    """
    if len(decisions) != len(labels):
        raise ValueError(f"{len(decisions)} decisions but {len(labels)} labels")
    kept = [(d, y) for d, y in zip(decisions, labels) if not d.rejected]
    n = len(kept)
    rows = []
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
        below = first_ok_below = second_ok_below = hits = 0
        for d, y in kept:
            first_ok = d.primary == y
            if _below(d.fp, t):
                below += 1
                second_ok = d.ranked[1][0] == y
                first_ok_below += first_ok
                second_ok_below += second_ok
                hits += first_ok or second_ok
            else:
                hits += first_ok
        rows.append(
            SweepRow(
                threshold=float(t),
                n_below=below,
                first_correct_below=first_ok_below,
                second_correct_below=second_ok_below,
                first_wrong_below=below - first_ok_below,
                n_considered=n + below,
                acc_fuzzy=hits / n if n else 0.0,
            )
        )
    return rows


def recall_rate(misclassified: Sequence[FuzzyDecision], labels: Sequence, sum_threshold: float):
    """(num_below, recall) over top-1 misclassified samples.

    num_below counts samples with fp + sp < sum_threshold; recall is the share
    of those whose true class is ranked third (0.0 when none fall below).
    """
    if len(misclassified) != len(labels):
        raise ValueError(f"{len(misclassified)} decisions but {len(labels)} labels")
    below = [
        (d, y) for d, y in zip(misclassified, labels) if rescue_condition(d, sum_threshold)
    ]
    if not below:
        return 0, 0.0
    hit = sum(1 for d, y in below if len(d.ranked) > 2 and d.ranked[2][0] == y)
    return len(below), hit / len(below)


def format_sweep(rows: Sequence[SweepRow]) -> str:
    lines = ["\t".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r.threshold:.2f}\t{r.n_below}\t{r.first_correct_below}\t"
            f"{r.second_correct_below}\t{r.first_wrong_below}\t{r.n_considered}\t"
            f"{r.acc_fuzzy:.4f}"
        )
    return "\n".join(lines) + "\n"
