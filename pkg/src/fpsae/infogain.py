"""Plug-in information gain of binned features (bits).

Continuous features are discretised into equal-width bins over their
observed range.  A feature may be a scalar per sample or a small vector
per sample; vectors are binned jointly, one grid axis per component.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fpsae.orientation import SCHEMES, OrientationField, scheme_planes

DEFAULT_BINS = 8


@dataclass(frozen=True)
class EntropyStats:
    h_t: float
    h_t_given_f: float
    gain: float
    bins: int


def _entropy_of_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(-np.sum(p * np.log2(p)))


def empirical_entropy(labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("entropy of an empty label set")
    _, counts = np.unique(labels, return_counts=True)
    return _entropy_of_counts(counts)


def discretize(values, bins: int) -> np.ndarray:
    """Equal-width bin index per sample (joint index for vector features)."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    codes = np.zeros(v.shape[0], dtype=np.int64)
    for col in v.T:
        lo, hi = col.min(), col.max()
        if hi > lo:
            # scale then multiply by bins last so 2*bins splits every cell in two
            idx = np.floor((col - lo) / (hi - lo) * bins).astype(np.int64)
            idx = np.minimum(idx, bins - 1)
        else:
            idx = np.zeros(col.shape, dtype=np.int64)
        codes = codes * bins + idx
    return codes


def conditional_entropy(feature_values, labels, bins: int = DEFAULT_BINS) -> float:
    labels = np.asarray(labels)
    cells = discretize(feature_values, bins)
    if cells.shape[0] != labels.shape[0]:
        raise ValueError(f"{cells.shape[0]} feature values but {labels.shape[0]} labels")
    if labels.size == 0:
        raise ValueError("conditional entropy of an empty sample")
    _, cell_idx = np.unique(cells, return_inverse=True)
    _, label_idx = np.unique(labels, return_inverse=True)
    table = np.zeros((cell_idx.max() + 1, label_idx.max() + 1))
    np.add.at(table, (cell_idx, label_idx), 1)
    n = labels.size
    return float(sum(row.sum() / n * _entropy_of_counts(row) for row in table))


def information_gain(feature_values, labels, bins: int = DEFAULT_BINS) -> EntropyStats:
    h_t = empirical_entropy(labels)
    h_tf = conditional_entropy(feature_values, labels, bins)
    gain = h_t - h_tf
    if -1e-12 < gain < 0:
        gain = 0.0
    return EntropyStats(h_t=h_t, h_t_given_f=h_tf, gain=gain, bins=bins)


def scheme_gain(fields: Sequence[OrientationField], labels, scheme: str, bins: int) -> float:
    """Mean over grid cells of the gain of that cell's (joint) encoded feature."""
    per_field = [scheme_planes(f, scheme) for f in fields]
    planes = [np.stack(group) for group in zip(*per_field)]  # one (N, cells) per component
    n_cells = planes[0].shape[1]
    total = 0.0
    for cell in range(n_cells):
        feat = np.column_stack([p[:, cell] for p in planes])
        total += information_gain(feat, labels, bins).gain
    return total / n_cells


def compare_encodings(
    dataset: Sequence[tuple[OrientationField, object]],
    schemes: Sequence[str] = SCHEMES,
    bins: int = DEFAULT_BINS,
) -> list[tuple[str, float, int]]:
    """(scheme, mean_gain, rank) sorted by descending gain; rank 1 is best."""
    if not dataset:
        raise ValueError("empty dataset")
    fields = [f for f, _ in dataset]
    labels = np.array([int(y) for _, y in dataset])
    gains = [(s, scheme_gain(fields, labels, s, bins)) for s in schemes]
    gains.sort(key=lambda sg: (-sg[1], schemes.index(sg[0])))
    return [(s, g, i + 1) for i, (s, g) in enumerate(gains)]


def format_comparison(rows) -> str:
    lines = ["scheme\tmean_gain\trank"]
    lines.extend(f"{s}\t{g:.6f}\t{r}" for s, g, r in rows)
    return "\n".join(lines) + "\n"
