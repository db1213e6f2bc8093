"""Command-line pipeline: gen, train, classify, eval, reconstruct, infogain.

Settings resolve as: command-line flag > ``--config`` file (key=value lines)
> built-in default.  ``fpsae --show-config`` prints the defaults.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from fpsae import infogain, pipeline, sae, synthgen
from fpsae.classes import ClassLabel
from fpsae.evaluation import accuracy, confusion, format_confusion
from fpsae.fuzzy import (
    format_sweep,
    fuzzy_classify,
    recall_rate,
    reject_lowest,
    rescue_condition,
    sweep,
)
from fpsae.optim import TrainingError
from fpsae.orientation import encode_features, write_field

DEFAULT_LAYERS = (400, 100, 50)
SWEEP_THRESHOLDS = (0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0)


@dataclass
class RunConfig:
    layers: tuple = DEFAULT_LAYERS
    scale: float = 1.0
    sae_lambda: float = 1e-4
    sae_beta: float = 0.3
    sae_rho: float = 0.1
    sae_max_iters: int = 400
    sae_grad_tol: float = 1e-7
    softmax_lambda: float = 1e-4
    threshold: float = 0.6
    sum_threshold: float = 0.8
    reject: float = 0.0
    thresholds: tuple = SWEEP_THRESHOLDS
    sum_thresholds: tuple = (0.8, 0.82, 0.85)
    seed: int = 0
    block: int = 20
    per_class: int = 250
    noise: float = 0.15
    rows: int = 25
    cols: int = 25

    def hidden_sizes(self) -> list[int]:
        return [max(1, int(round(n * self.scale))) for n in self.layers]

    def sae_hyper(self) -> sae.SaeHyper:
        return sae.SaeHyper(
            lam=self.sae_lambda,
            beta=self.sae_beta,
            rho=self.sae_rho,
            max_iters=self.sae_max_iters,
            grad_tol=self.sae_grad_tol,
        )

    def validate(self) -> None:
        self.sae_hyper()
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if self.softmax_lambda < 0:
            raise ValueError("softmax_lambda must be >= 0")
        for t in (self.threshold, *self.thresholds):
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold {t} outside [0, 1]")
        if not 0.0 <= self.reject < 1.0:
            raise ValueError("reject fraction must lie in [0, 1)")
        if self.per_class < 0 or self.noise < 0:
            raise ValueError("per_class and noise must be >= 0")


def _parse_list(text: str, kind):
    text = text.strip()
    if text.lower() in ("", "none", "0") and kind is int:
        return ()
    if not text:
        return ()
    return tuple(kind(v) for v in text.replace(",", " ").split())


def _coerce(name: str, value: str):
    if name == "layers":
        return _parse_list(value, int)
    if name in ("thresholds", "sum_thresholds"):
        return _parse_list(value, float)
    typ = {f.name: f.type for f in fields(RunConfig)}[name]
    return {"int": int, "float": float}[typ](value)


def read_config_file(path) -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
            out[key] = _coerce(key, value)
    return out


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        sys.exit(2)


def _add_settings(p, names):
    opts = {
        "layers": dict(type=lambda s: _parse_list(s, int), help="hidden sizes, e.g. 400,100,50 (none = no encoder)"),
        "scale": dict(type=float, help="multiply hidden sizes (desk-scale runs)"),
        "sae_lambda": dict(type=float, help="autoencoder weight decay"),
        "sae_beta": dict(type=float, help="sparsity penalty weight"),
        "sae_rho": dict(type=float, help="target mean activation"),
        "sae_max_iters": dict(type=int, help="descent iterations per layer"),
        "sae_grad_tol": dict(type=float, help="stop when max |grad| falls below this"),
        "softmax_lambda": dict(type=float, help="softmax L2 weight"),
        "threshold": dict(type=float, help="fuzzy threshold on the top probability"),
        "sum_threshold": dict(type=float, help="rescue when fp + sp falls below this"),
        "reject": dict(type=float, help="fraction of least confident samples to reject"),
        "thresholds": dict(type=lambda s: _parse_list(s, float), help="sweep thresholds, comma separated"),
        "sum_thresholds": dict(type=lambda s: _parse_list(s, float), help="rescue thresholds for the recall table"),
        "seed": dict(type=int, help="RNG seed"),
        "block": dict(type=int, help="block size in pixels for .pgm inputs"),
        "per_class": dict(type=int, help="samples per class"),
        "noise": dict(type=float, help="angular noise sigma (radians)"),
        "rows": dict(type=int, help="grid rows"),
        "cols": dict(type=int, help="grid columns"),
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **opts[name])
    p.add_argument("--config", help="key=value settings file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fpsae", description=__doc__.splitlines()[0])
    parser.add_argument("--show-config", action="store_true", help="print default settings and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="write a synthetic orientation-field dataset")
    p.add_argument("--out", required=True, help="output directory")
    _add_settings(p, ["per_class", "noise", "seed", "rows", "cols"])

    p = sub.add_parser("train", help="train encoder stack and softmax on the training half")
    p.add_argument("--data", required=True, help="dataset directory with labels.tsv")
    p.add_argument("--model", required=True, help="model file to write")
    _add_settings(
        p,
        ["layers", "scale", "sae_lambda", "sae_beta", "sae_rho", "sae_max_iters",
         "sae_grad_tol", "softmax_lambda", "seed", "block"],
    )

    p = sub.add_parser("classify", help="classify one .of or .pgm input")
    p.add_argument("--model", required=True)
    p.add_argument("input")
    _add_settings(p, ["threshold", "sum_threshold", "block"])

    p = sub.add_parser("eval", help="confusion matrix, rejection, sweep and recall reports")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    p.add_argument("--out", help="directory for TSV reports")
    _add_settings(p, ["thresholds", "sum_thresholds", "reject", "seed", "block"])

    p = sub.add_parser("reconstruct", help="round-trip an input through the encoder stack")
    p.add_argument("--model", required=True)
    p.add_argument("input")
    p.add_argument("--out", required=True, help=".of file to write")
    _add_settings(p, ["block"])

    p = sub.add_parser("infogain", help="rank feature encodings f1..f6 by information gain")
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=infogain.DEFAULT_BINS)
    p.add_argument("--out", help="TSV file to write")
    _add_settings(p, ["block"])
    return parser


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- commands ------------------------------------------------------------------


def cmd_gen(args, cfg: RunConfig) -> int:
    counts = synthgen.counts_for(cfg.per_class)
    spec = synthgen.SynthSpec(
        rows=cfg.rows, cols=cfg.cols, counts=counts, noise_sigma=cfg.noise, rng_seed=cfg.seed
    )
    if cfg.per_class == 0:
        _log("warning: --per-class 0 writes an empty dataset")
    samples = synthgen.generate_dataset(spec)
    synthgen.write_dataset(args.out, samples, synthgen.sample_names(spec))
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _labels_in(entries) -> np.ndarray:
    return np.array([int(label) for *_, label in entries], dtype=np.int64)


def cmd_train(args, cfg: RunConfig) -> int:
    entries = pipeline.load_dataset(args.data, cfg.block)
    if not entries:
        raise ValueError(f"dataset {args.data} is empty")
    train_names, test_names = pipeline.split_names(entries, cfg.seed)
    train = pipeline.select(entries, train_names)
    test = pipeline.select(entries, test_names)
    X, y = pipeline.feature_matrix(train)
    sizes = cfg.hidden_sizes()
    _log(f"training on {len(train)} samples, layers {sizes or 'none'}")
    model = pipeline.train_model(X, y, sizes, cfg.sae_hyper(), cfg.softmax_lambda, cfg.seed, log=_log)
    pipeline.save_model(args.model, model)
    print(f"model: {args.model}")
    print(f"train samples: {len(train)}  held-out samples: {len(test)}")
    if test:
        preds = [model.rank(f)[0][0] for _, f, _ in test]
        cm = confusion(preds, _labels_in(test))
        print(format_confusion(cm), end="")
        print(f"held-out accuracy\t{accuracy(cm):.4f}")
    return 0


def _format_ranking(ranked) -> str:
    return " ".join(f"{label.name if isinstance(label, ClassLabel) else label}:{p:.4f}" for label, p in ranked)


def cmd_classify(args, cfg: RunConfig) -> int:
    model = pipeline.load_model(args.model)
    fld = pipeline.load_input(args.input, cfg.block)
    decision = model.decide(fld, cfg.threshold)
    rescue = rescue_condition(decision, cfg.sum_threshold)
    second = decision.secondary.name if decision.secondary is not None else "-"
    print(
        f"{os.path.basename(args.input)}\tclass={decision.primary.name}\tfp={decision.fp:.4f}\t"
        f"secondary={second}\trescue={'yes' if rescue else 'no'}\t{_format_ranking(decision.ranked)}"
    )
    return 0


def evaluation_reports(model, entries, cfg: RunConfig) -> dict[str, str]:
    """Named TSV reports for a labelled set of fields."""
    labels = _labels_in(entries)
    decisions = [model.decide(f, 1.0) for _, f, _ in entries]
    preds = [d.primary for d in decisions]
    reports = {}
    cm = confusion(preds, labels)
    top1 = accuracy(cm)
    reports["confusion"] = format_confusion(cm)
    summary = ["metric\tvalue", f"samples\t{len(entries)}", f"top1_accuracy\t{top1:.4f}"]
    if cfg.reject > 0:
        rejected = reject_lowest(decisions, cfg.reject)
        cm_r = confusion(preds, labels, [d.rejected for d in rejected])
        reports["confusion_reject"] = format_confusion(cm_r)
        summary += [
            f"reject_fraction\t{cfg.reject}",
            f"n_rejected\t{cm_r.n_rejected}",
            f"top1_accuracy_with_reject\t{accuracy(cm_r):.4f}",
        ]
    reports["summary"] = "\n".join(summary) + "\n"
    if cfg.thresholds:
        reports["sweep"] = format_sweep(sweep(decisions, labels, cfg.thresholds))
        if cfg.reject > 0:
            reports["sweep_reject"] = format_sweep(sweep(rejected, labels, cfg.thresholds))
        wrong = [(d, y) for d, y in zip(decisions, labels) if d.primary != y]
        rows = ["sum_threshold\tnum\trecall_rate"]
        for st in cfg.sum_thresholds:
            num, rate = recall_rate([d for d, _ in wrong], [y for _, y in wrong], st)
            rows.append(f"{st}\t{num}\t{rate:.4f}")
        reports["recall"] = "\n".join(rows) + "\n"
    return reports


def cmd_eval(args, cfg: RunConfig) -> int:
    model = pipeline.load_model(args.model)
    entries = pipeline.load_dataset(args.data, cfg.block)
    if args.split != "all":
        train_names, test_names = pipeline.split_names(entries, cfg.seed)
        entries = pipeline.select(entries, test_names if args.split == "test" else train_names)
    if not entries:
        raise ValueError("no samples to evaluate")
    reports = evaluation_reports(model, entries, cfg)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    for name, text in reports.items():
        print(f"# {name}")
        print(text, end="")
        if args.out:
            _write(os.path.join(args.out, f"{name}.tsv"), text)
    return 0


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    model = pipeline.load_model(args.model)
    fld = pipeline.load_input(args.input, cfg.block)
    model.check_field(fld)
    rec = sae.reconstruct(model.encoder, encode_features(fld), fld.shape)
    write_field(args.out, rec.field)
    err = pipeline.angular_error(fld, rec.field)
    print(f"wrote {args.out}\tmean_angular_error_deg={math.degrees(err):.4f}")
    return 0


def cmd_infogain(args, cfg: RunConfig) -> int:
    entries = pipeline.load_dataset(args.data, cfg.block)
    if not entries:
        raise ValueError(f"dataset {args.data} is empty")
    rows = infogain.compare_encodings([(f, y) for _, f, y in entries], bins=args.bins)
    text = infogain.format_comparison(rows)
    print(text, end="")
    if args.out:
        _write(args.out, text)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "classify": cmd_classify,
    "eval": cmd_eval,
    "reconstruct": cmd_reconstruct,
    "infogain": cmd_infogain,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_config:
        print(format_config(RunConfig()), end="")
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, TrainingError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
