"""``qsar`` command line: gen-data, train, eval, ablate, gradcheck, census."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import models
from .config import ConfigError, RunConfig, dump_config, load_config
from .data.chip import TEST, TRAIN, ChipFormatError, Manifest, read_manifest
from .data.synth import SynthMode, synth_generate, write_dataset
from .gradcheck import OP_NAMES, run_gradcheck
from .nn.optim import Adam
from .train import TrainingError, TrainState, ablate_phase, evaluate, load_run, save_run, train

METRICS = "metrics.jsonl"
SUMMARY = "summary.json"
CONFUSION = "confusion.csv"
CHECKPOINT = "model.ckpt"


class CommandError(RuntimeError):
    pass


def _err(msg: str) -> None:
    print(f"qsar: {msg}", file=sys.stderr)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_confusion(path, conf: np.ndarray, class_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["truth\\pred", *class_names])
        for name, row in zip(class_names, conf):
            w.writerow([name, *(int(v) for v in row)])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def open_dataset(data: str, required=(TRAIN, TEST)) -> Manifest:
    p = Path(data)
    if p.is_dir():
        p = p / "manifest.csv"
    if not p.exists():
        raise CommandError(f"no manifest at {p}")
    m = read_manifest(p)
    m.validate(required)
    return m


def dataset_for(cfg: RunConfig) -> Manifest:
    if cfg.data:
        m = open_dataset(cfg.data)
        if m.n_classes != cfg.n_classes:
            raise CommandError(f"dataset has {m.n_classes} classes, config says {cfg.n_classes}")
        return m
    return synth_generate(cfg.synth_mode, cfg.n_classes, cfg.synth_train, cfg.synth_test, cfg.data_seed)


def census_json(bundle: models.ModelBundle) -> dict:
    q, c = models.census(bundle)
    return {"quantum": q, "classical": c, "components": models.census_breakdown(bundle)}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(a) -> int:
    if a.classes < 2:
        raise CommandError("--classes must be >= 2")
    if a.train < 0 or a.test < 0:
        raise CommandError("--train/--test must be non-negative")
    try:
        mode = SynthMode.parse(a.mode)
    except ValueError:
        raise CommandError(f"unknown mode {a.mode!r} (mag, phase-only, both)") from None
    m = synth_generate(mode, a.classes, a.train, a.test, a.seed)
    path = write_dataset(m, _out_dir(a.out))
    print(f"wrote {len(m.entries)} chips and {path}")
    return 0


_TRAIN_FLAGS = {"model": "model", "strategy": "strategy", "classes": "n_classes", "data": "data",
                "synth_mode": "synth_mode", "synth_train": "synth_train", "synth_test": "synth_test",
                "data_seed": "data_seed", "out": "out", "lr": "learning_rate", "eta_min": "eta_min",
                "epochs": "epochs", "batch_size": "batch_size", "dropout": "dropout_p",
                "seed": "seed", "class_weighted": "class_weighted"}


def cmd_train(a) -> int:
    overrides = {key: getattr(a, flag) for flag, key in _TRAIN_FLAGS.items()}
    cfg = load_config(a.config, overrides)
    manifest = dataset_for(cfg)
    out = _out_dir(cfg.out)
    if a.resume:
        bundle, state, meta = load_run(a.resume)
        if (meta["model"], meta["strategy"], int(meta["n_classes"])) != (cfg.model, cfg.strategy, cfg.n_classes):
            raise CommandError(f"checkpoint is {meta['model']}/{meta['strategy']}/{meta['n_classes']} classes, "
                               f"config is {cfg.model}/{cfg.strategy}/{cfg.n_classes}")
        mode = "a"
    else:
        bundle = models.build_model(cfg.model, cfg.strategy, cfg.n_classes, cfg.train.seed, cfg.train.dropout_p)
        state, mode = TrainState(Adam(cfg.train.adam_betas, cfg.train.adam_eps)), "w"
    (out / "config.txt").write_text(dump_config(cfg))
    ckpt = out / CHECKPOINT
    with open(out / METRICS, mode) as metrics:
        def on_epoch(rec, st):
            # wall time goes to stderr only, so metrics stay byte-reproducible
            metrics.write(json.dumps(rec.deterministic_view(), sort_keys=True) + "\n")
            metrics.flush()
            save_run(ckpt, bundle, st, cfg.train)
            print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.4f}  train {rec.train_accuracy:.3f}  "
                  f"test {rec.test_accuracy:.3f}  lr {rec.lr:.2e}  {rec.wall_time:.1f}s", file=sys.stderr)

        bundle, records = train(bundle, manifest, cfg.train, state, stop_after=a.stop_after, on_epoch=on_epoch)
    if not records:
        save_run(ckpt, bundle, state, cfg.train)
    acc, conf = evaluate(bundle, manifest, TEST)
    rep = ablate_phase(bundle, manifest, TEST)
    write_confusion(out / CONFUSION, conf, manifest.class_names)
    write_json(out / SUMMARY, {"accuracy": acc, "confusion": conf.tolist(), "ablation": rep.to_json(),
                               "census": census_json(bundle), "epochs_completed": state.epoch})
    print(json.dumps({"accuracy": acc, "delta_phase": rep.delta}))
    return 0


def _load_for_eval(a) -> tuple[models.ModelBundle, Manifest]:
    bundle, _, meta = load_run(a.checkpoint)
    if a.data:
        manifest = open_dataset(a.data, (a.split,))
    else:
        manifest = synth_generate(a.synth_mode, bundle.n_classes, a.synth_train, a.synth_test, a.data_seed)
    if manifest.n_classes != bundle.n_classes:
        raise CommandError(f"dataset has {manifest.n_classes} classes, checkpoint has {bundle.n_classes}")
    return bundle, manifest


def cmd_eval(a) -> int:
    bundle, manifest = _load_for_eval(a)
    acc, conf = evaluate(bundle, manifest, a.split)
    out = _out_dir(a.out)
    write_confusion(out / CONFUSION, conf, manifest.class_names)
    write_json(out / SUMMARY, {"accuracy": acc, "confusion": conf.tolist(), "split": a.split,
                               "census": census_json(bundle)})
    print(json.dumps({"accuracy": acc}))
    return 0


def cmd_ablate(a) -> int:
    bundle, manifest = _load_for_eval(a)
    rep = ablate_phase(bundle, manifest, a.split)
    out = _out_dir(a.out)
    write_confusion(out / CONFUSION, rep.confusion_with_phase, manifest.class_names)
    write_confusion(out / "confusion_phase_zeroed.csv", rep.confusion_phase_zeroed, manifest.class_names)
    write_json(out / SUMMARY, {"accuracy": rep.accuracy_with_phase, "confusion": rep.confusion_with_phase.tolist(),
                               "ablation": rep.to_json(), "split": a.split, "census": census_json(bundle)})
    print(f"delta_phase {rep.delta:+.2f} pts  (with {100 * rep.accuracy_with_phase:.2f}%, "
          f"zeroed {100 * rep.accuracy_phase_zeroed:.2f}%)")
    return 0


def cmd_gradcheck(a) -> int:
    chosen = ("magqt", "dualpath", "pure") if a.model == "all" else (a.model,)
    report = run_gradcheck(chosen, a.seed, a.circuits, a.inject)
    print(report.render())
    if a.out:
        write_json(_out_dir(a.out) / "gradcheck.json",
                   {"passed": report.passed,
                    "results": [{"name": r.name, "error": r.error, "tolerance": r.tolerance,
                                 "passed": r.passed} for r in report.results]})
    if not report.passed:
        _err("gradcheck failed: " + ", ".join(r.name for r in report.failures()))
        return 1
    return 0


def cmd_census(a) -> int:
    bundle = models.build_model(a.model, a.strategy, a.classes)
    info = census_json(bundle)
    print(json.dumps(info, indent=2, sort_keys=True))
    if a.out:
        write_json(_out_dir(a.out) / "census.json", info)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="manifest.csv or a directory holding one")
    p.add_argument("--synth-mode", default="mag", help="synthetic mode when --data is absent")
    p.add_argument("--synth-train", type=int, default=90)
    p.add_argument("--synth-test", type=int, default=60)
    p.add_argument("--data-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsar", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("--mode", default="mag", help="mag, phase-only or both")
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--train", type=int, default=90)
    g.add_argument("--test", type=int, default=60)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model from a config file and/or flags")
    t.add_argument("config", nargs="?", help="flat key = value config file")
    t.add_argument("--model")
    t.add_argument("--strategy")
    t.add_argument("--classes", type=int)
    t.add_argument("--data")
    t.add_argument("--synth-mode")
    t.add_argument("--synth-train", type=int)
    t.add_argument("--synth-test", type=int)
    t.add_argument("--data-seed", type=int)
    t.add_argument("--out")
    t.add_argument("--lr", type=float)
    t.add_argument("--eta-min", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--dropout", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--class-weighted", action="store_const", const=True)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--stop-after", type=int, help="stop after this many completed epochs")
    t.set_defaults(fn=cmd_train)

    for name, fn, doc in (("eval", cmd_eval, "accuracy and confusion of a checkpoint"),
                          ("ablate", cmd_ablate, "phase ablation of a checkpoint")):
        e = sub.add_parser(name, help=doc)
        e.add_argument("checkpoint")
        _data_flags(e)
        e.add_argument("--split", default=TEST, choices=("train", "test"))
        e.add_argument("--out", default=".")
        e.set_defaults(fn=fn)

    c = sub.add_parser("gradcheck", help="adjoint/shift/FD triangle and end-to-end FD checks")
    c.add_argument("--model", default="all", choices=("all", "magqt", "magqt-s3", "dualpath", "pure"))
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--circuits", type=int, default=100)
    c.add_argument("--inject", choices=OP_NAMES, help="sign-flip this op's backward rule")
    c.add_argument("--out")
    c.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("census", help="parameter counts of a fresh model")
    s.add_argument("--model", default="magqt", choices=[k.value for k in models.ModelKind])
    s.add_argument("--strategy")
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_census)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CommandError, ConfigError, TrainingError, ChipFormatError, ValueError, OSError) as e:
        _err(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
