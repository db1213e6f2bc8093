"""Glue between the modules: datasets on disk, model files, end-to-end calls."""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from fpsae import sae, softmax
from fpsae.classes import ClassLabel
from fpsae.fuzzy import FuzzyDecision, fuzzy_classify
from fpsae.orientation import (
    OrientationField,
    block_orientation,
    encode_features,
    load_pgm,
    read_field,
)


@dataclass(frozen=True)
class Model:
    encoder: sae.StackedEncoder
    classifier: softmax.SoftmaxModel

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim if self.encoder.depth else self.classifier.n

    def codes(self, features) -> np.ndarray:
        return sae.encode_stack(self.encoder, features)

    def check_field(self, fld: OrientationField) -> None:
        got = 2 * fld.rows * fld.cols
        if got != self.input_dim:
            cells = self.input_dim // 2
            side = int(round(cells**0.5))
            hint = f" ({side}x{side})" if side * side == cells else ""
            raise ValueError(
                f"grid {fld.rows}x{fld.cols} does not fit model: expected "
                f"{cells} cells{hint}, input dim {self.input_dim}"
            )

    def rank(self, fld: OrientationField) -> list[tuple]:
        self.check_field(fld)
        return softmax.classify(self.classifier, self.codes(encode_features(fld)))

    def decide(self, fld: OrientationField, threshold: float) -> FuzzyDecision:
        return fuzzy_classify(self.rank(fld), threshold)


def format_model(model: Model) -> str:
    return sae.format_stack(model.encoder) + softmax.format_model(model.classifier)


def parse_model(text: str) -> Model:
    lines = text.splitlines()
    enc, pos = sae.parse_stack(lines, 0)
    clf, pos = softmax.parse_model(lines, pos)
    if any(ln.strip() for ln in lines[pos:]):
        raise ValueError(f"model line {pos + 1}: unexpected trailing content")
    expected = enc.code_dim
    if expected is not None and clf.n != expected:
        raise ValueError(f"softmax expects {clf.n} inputs but encoder emits {expected}")
    return Model(enc, clf)


def save_model(path, model: Model) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_model(model))


def load_model(path) -> Model:
    with open(path, encoding="ascii") as fh:
        return parse_model(fh.read())


# -- datasets ------------------------------------------------------------------


def load_input(path, block: int = 20) -> OrientationField:
    """An orientation field from a .of text file or a P5 .pgm image."""
    if str(path).lower().endswith(".pgm"):
        with open(path, "rb") as fh:
            return block_orientation(load_pgm(fh.read()), block)
    return read_field(path)


def read_labels(directory) -> list[tuple[str, ClassLabel]]:
    path = os.path.join(directory, "labels.tsv")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'filename<TAB>label'")
            entries.append((parts[0], ClassLabel.parse(parts[1])))
    return entries


def load_dataset(directory, block: int = 20):
    """[(name, field, label)] in labels.tsv order."""
    return [
        (name, load_input(os.path.join(directory, name), block), label)
        for name, label in read_labels(directory)
    ]


def _split_key(name: str, seed: int) -> str:
    return hashlib.sha256(f"{seed}/{name}".encode()).hexdigest()


def split_names(entries, seed: int) -> tuple[set, set]:
    """Per class, the first half by filename hash trains and the rest tests."""
    train, test = set(), set()
    for label in ClassLabel:
        names = sorted((n for n, *rest in entries if rest[-1] == label), key=lambda n: _split_key(n, seed))
        cut = (len(names) + 1) // 2
        train.update(names[:cut])
        test.update(names[cut:])
    return train, test


def select(entries, names: set):
    return [e for e in entries if e[0] in names]


def feature_matrix(entries) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([encode_features(f) for _, f, _ in entries])
    y = np.array([int(label) for *_, label in entries], dtype=np.int64)
    return X, y


def train_model(X, y, layer_sizes, hypers, softmax_lambda: float, seed: int, log=None) -> Model:
    if layer_sizes:
        enc = sae.train_stack(X, layer_sizes, hypers, seed, log=log)
    else:
        enc = sae.StackedEncoder()
    Z = sae.encode_stack(enc, X)
    clf = softmax.train(Z, y, lambda_reg=softmax_lambda, seed=seed)
    return Model(enc, clf)


def angular_error(a: OrientationField, b: OrientationField) -> float:
    """Mean absolute orientation difference (radians) over cells valid in both."""
    mask = a.valid & b.valid
    if not mask.any():
        return float("nan")
    d = np.abs(a.angles - b.angles)[mask]
    return float(np.mean(np.minimum(d, np.pi - d)))
