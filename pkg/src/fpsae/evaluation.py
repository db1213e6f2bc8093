"""Confusion matrices and accuracy with optional rejection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fpsae.classes import ClassLabel


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, cols = assigned class
    n_rejected: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.n_rejected


def confusion(preds: Sequence, labels: Sequence, rejects: Sequence[bool] | None = None, k: int = len(ClassLabel)) -> ConfusionMatrix:
    """Tally (true, assigned) pairs; rejected samples only bump n_rejected.

    Labels and predictions are class ordinals 1..k (ClassLabel works).
    """
    if len(preds) != len(labels):
        raise ValueError(f"{len(preds)} predictions but {len(labels)} labels")
    if rejects is None:
        rejects = [False] * len(preds)
    elif len(rejects) != len(preds):
        raise ValueError(f"{len(rejects)} reject flags for {len(preds)} predictions")
    counts = np.zeros((k, k), dtype=np.int64)
    n_rejected = 0
    for p, y, rej in zip(preds, labels, rejects):
        if rej:
            n_rejected += 1
            continue
        p, y = int(p), int(y)
        if not (1 <= p <= k and 1 <= y <= k):
            raise ValueError(f"class ordinal outside 1..{k}: true {y}, assigned {p}")
        counts[y - 1, p - 1] += 1
    return ConfusionMatrix(counts, n_rejected)


def accuracy(cm: ConfusionMatrix) -> float:
    """Trace over classified samples; rejected ones are outside the denominator."""
    n = int(cm.counts.sum())
    if n == 0:
        raise ValueError("no classified samples (all rejected or empty)")
    return float(np.trace(cm.counts)) / n


def format_confusion(cm: ConfusionMatrix, names: Sequence[str] | None = None) -> str:
    k = cm.counts.shape[0]
    if names is None:
        names = [c.name for c in ClassLabel] if k == len(ClassLabel) else [str(i + 1) for i in range(k)]
    lines = ["true\\assigned\t" + "\t".join(names)]
    for name, row in zip(names, cm.counts):
        lines.append(name + "\t" + "\t".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"
