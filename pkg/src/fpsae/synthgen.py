"""Synthetic labelled orientation fields from a zero-pole singularity model.

Cores act as zeros and deltas as poles of a rational complex function; the
ridge angle at z is half the argument of that function plus a background
angle.  Coordinates are (x, y) = (column, row) with cell centres on integer
points, matching :func:`fpsae.orientation.block_orientation`.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fpsae.classes import ClassLabel
from fpsae.orientation import OrientationField, format_field, wrap_angles

Point = tuple[float, float]

MIN_SEPARATION = 2.0
_SINGULAR_OFFSET = (0.5, 0.5)
_SINGULAR_COUNTS = {
    ClassLabel.A: (0, 0),
    ClassLabel.L: (1, 1),
    ClassLabel.R: (1, 1),
    ClassLabel.W: (2, 2),
}


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class SingularityLayout:
    cores: tuple[Point, ...] = ()
    deltas: tuple[Point, ...] = ()
    background_angle: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    rows: int = 25
    cols: int = 25
    counts: dict = field(default_factory=lambda: {c: 0 for c in ClassLabel})
    noise_sigma: float = 0.0
    rng_seed: int = 0
    # half-width of the uniform background-angle jitter, radians
    background_jitter: float = math.pi / 12
    # minimum |dx| between core and delta for loops, in cells
    min_loop_shift: float = 2.0
    # minimum core-to-delta distance, in cells
    min_core_delta: float = 5.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dims must be >= 1")
        if any(n < 0 for n in self.counts.values()):
            raise ValueError("per-class counts must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def check_layout(layout: SingularityLayout, label: ClassLabel) -> None:
    """Raise LayoutError unless the layout satisfies the class constraints."""
    n_cores, n_deltas = _SINGULAR_COUNTS[label]
    if len(layout.cores) != n_cores or len(layout.deltas) != n_deltas:
        raise LayoutError(
            f"class {label.name} needs {n_cores} cores / {n_deltas} deltas, "
            f"got {len(layout.cores)} / {len(layout.deltas)}"
        )
    if not 0.0 <= layout.background_angle < math.pi:
        raise LayoutError("background_angle must lie in [0, pi)")
    pts = list(layout.cores) + list(layout.deltas)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if math.dist(pts[i], pts[j]) < MIN_SEPARATION:
                raise LayoutError(f"singularities {pts[i]} and {pts[j]} closer than 2 cells")
    if label in (ClassLabel.L, ClassLabel.R):
        (cx, cy), (dx, dy) = layout.cores[0], layout.deltas[0]
        if not dy > cy:
            raise LayoutError("delta must lie strictly below the core")
        if label is ClassLabel.L and not dx > cx:
            raise LayoutError("left loop needs the delta right of the core")
        if label is ClassLabel.R and not dx < cx:
            raise LayoutError("right loop needs the delta left of the core")
    if label is ClassLabel.W:
        core_xs = [x for x, _ in layout.cores]
        lowest_core = max(y for _, y in layout.cores)
        if not all(y > lowest_core for _, y in layout.deltas):
            raise LayoutError("whorl deltas must lie strictly below both cores")
        (d1x, _), (d2x, _) = sorted(layout.deltas)
        if not (d1x < min(core_xs) and d2x > max(core_xs)):
            raise LayoutError("whorl needs one delta left and one right of both cores")


def infer_label(layout: SingularityLayout) -> ClassLabel:
    n = (len(layout.cores), len(layout.deltas))
    if n == (0, 0):
        return ClassLabel.A
    if n == (2, 2):
        return ClassLabel.W
    if n == (1, 1):
        return ClassLabel.L if layout.deltas[0][0] > layout.cores[0][0] else ClassLabel.R
    raise LayoutError(f"no class has {n[0]} cores and {n[1]} deltas")


def zero_pole_angles(layout: SingularityLayout, x, y) -> np.ndarray:
    """Evaluate the zero-pole angle at arbitrary points (no constraint checks)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pts = list(layout.cores) + list(layout.deltas)
    # cells sitting exactly on a singularity take the direction at a small offset
    hit = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    for px, py in pts:
        hit |= (x == px) & (y == py)
    x = np.where(hit, x + _SINGULAR_OFFSET[0], x)
    y = np.where(hit, y + _SINGULAR_OFFSET[1], y)

    total = np.zeros(hit.shape)
    for px, py in layout.cores:
        total += np.arctan2(y - py, x - px)
    for px, py in layout.deltas:
        total -= np.arctan2(y - py, x - px)
    return wrap_angles(layout.background_angle + 0.5 * total)


def zero_pole_field(layout: SingularityLayout, rows: int, cols: int) -> OrientationField:
    check_layout(layout, infer_label(layout))
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    angles = zero_pole_angles(layout, xx, yy)
    return OrientationField(angles=angles, valid=np.ones((rows, cols), dtype=bool))


def mirror_layout(layout: SingularityLayout, cols: int) -> SingularityLayout:
    """Reflect left-right about the grid's vertical centre line."""
    axis = cols - 1

    def flip(pts):
        return tuple((axis - x, y) for x, y in pts)

    bg = float(wrap_angles(math.pi - layout.background_angle))
    return SingularityLayout(flip(layout.cores), flip(layout.deltas), bg)


def random_layout(
    label: ClassLabel,
    rows: int,
    cols: int,
    rng: np.random.Generator,
    background_jitter: float = math.pi / 12,
    min_loop_shift: float = 2.0,
    min_core_delta: float = 5.0,
    max_tries: int = 10_000,
) -> SingularityLayout:
    """Draw singularities uniformly from the central 60% of the grid."""
    n_cores, n_deltas = _SINGULAR_COUNTS[label]
    x_lo, x_hi = 0.2 * (cols - 1), 0.8 * (cols - 1)
    y_lo, y_hi = 0.2 * (rows - 1), 0.8 * (rows - 1)
    bg = float(wrap_angles(rng.uniform(-background_jitter, background_jitter)))
    for _ in range(max_tries):
        pts = [
            (float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)))
            for _ in range(n_cores + n_deltas)
        ]
        layout = SingularityLayout(tuple(pts[:n_cores]), tuple(pts[n_cores:]), bg)
        if label in (ClassLabel.L, ClassLabel.R):
            if abs(pts[1][0] - pts[0][0]) < min_loop_shift:
                continue
        if any(math.dist(c, d) < min_core_delta for c in layout.cores for d in layout.deltas):
            continue
        try:
            check_layout(layout, label)
        except LayoutError:
            continue
        return layout
    raise LayoutError(f"could not place singularities for class {label.name}")


def add_angular_noise(angles, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Von Mises perturbation with concentration 1/sigma^2, re-wrapped to [0, pi)."""
    if sigma == 0:
        return wrap_angles(angles)
    noise = rng.vonmises(0.0, 1.0 / sigma**2, size=np.shape(angles))
    return wrap_angles(angles + noise)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per sample so generation order does not matter."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def generate_sample(spec: SynthSpec, label: ClassLabel, index: int):
    rng = sample_rng(spec.rng_seed, index)
    layout = random_layout(
        label,
        spec.rows,
        spec.cols,
        rng,
        spec.background_jitter,
        spec.min_loop_shift,
        spec.min_core_delta,
    )
    clean = zero_pole_field(layout, spec.rows, spec.cols)
    angles = add_angular_noise(clean.angles, spec.noise_sigma, rng)
    return OrientationField(angles=angles, valid=clean.valid), layout


def generate_dataset(spec: SynthSpec) -> list[tuple[OrientationField, ClassLabel]]:
    """Samples ordered A, L, R, W; the global index seeds each sample."""
    out = []
    index = 0
    for label in ClassLabel:
        for _ in range(spec.counts.get(label, 0)):
            fld, _ = generate_sample(spec, label, index)
            out.append((fld, label))
            index += 1
    return out


def sample_names(spec: SynthSpec) -> list[str]:
    names = []
    for label in ClassLabel:
        for i in range(spec.counts.get(label, 0)):
            names.append(f"{label.name}_{i:04d}.of")
    return names


def write_dataset(directory, samples: Sequence[tuple[OrientationField, ClassLabel]], names):
    os.makedirs(directory, exist_ok=True)
    rows = []
    for (fld, label), name in zip(samples, names):
        with open(os.path.join(directory, name), "w", encoding="ascii", newline="\n") as fh:
            fh.write(format_field(fld))
        rows.append(f"{name}\t{label.name}\n")
    with open(os.path.join(directory, "labels.tsv"), "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(rows)


def counts_for(per_class: int) -> dict:
    return {c: per_class for c in ClassLabel}

