"""Training loop, evaluation, phase ablation and gradient-norm telemetry."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .data.chip import TEST, TRAIN, ComplexChip, Manifest
from .models import ModelBundle, build_model, chip_features, forward_features, predict
from .nn import tensor as T
from .nn.optim import Adam, TrainConfig, cosine_lr
from .nn.registry import load_checkpoint, registry_entries, save_checkpoint

# named RNG sub-streams derived from the run seed
STREAM_SHUFFLE = 1
STREAM_DROPOUT = 2


class TrainingError(RuntimeError):
    pass


@dataclass
class RunRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: Optional[float]
    lr: float
    steps: int
    grad_norms: dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)

    def deterministic_view(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


@dataclass
class AblationReport:
    accuracy_with_phase: float
    accuracy_phase_zeroed: float
    delta: float  # percentage points
    confusion_with_phase: np.ndarray
    confusion_phase_zeroed: np.ndarray

    def to_json(self) -> dict:
        return {"accuracy_with_phase": self.accuracy_with_phase,
                "accuracy_phase_zeroed": self.accuracy_phase_zeroed,
                "delta": self.delta,
                "confusion_with_phase": self.confusion_with_phase.tolist(),
                "confusion_phase_zeroed": self.confusion_phase_zeroed.tolist()}


@dataclass
class TrainState:
    optimizer: Adam
    epoch: int = 0  # epochs completed


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("QSAR_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Sequence):
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def class_weights(labels: Iterable[int], n_classes: int) -> np.ndarray:
    """Inverse class frequency normalized to mean 1 (exact for balanced sets)."""
    counts = np.bincount(np.asarray(list(labels), dtype=np.int64), minlength=n_classes)
    if np.any(counts == 0):
        raise ValueError("every class needs at least one training sample")
    inv = [Fraction(1, int(c)) for c in counts]
    total = sum(inv)
    return np.array([float(w * n_classes / total) for w in inv])


def component_of(name: str) -> str:
    return name.split(".", 1)[0]


def grad_norms(grads: dict[str, np.ndarray]) -> dict[str, float]:
    """L2 norm of the concatenated gradient of each top-level component."""
    sq: dict[str, float] = {}
    for name, g in grads.items():
        c = component_of(name)
        sq[c] = sq.get(c, 0.0) + float(np.sum(g * g))
    return {c: math.sqrt(v) for c, v in sq.items()}


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def sample_loss_and_grads(bundle: ModelBundle, feats: dict, label: int,
                          weights: Optional[np.ndarray], rng=None):
    leaves = T.grad_leaves(bundle.registry.values())
    out = forward_features(bundle, feats, leaves, rng)
    loss = T.softmax_cross_entropy(out, label, weights)
    loss.backward()
    return float(loss.value), predict(out), T.collect_grads(leaves)


def _features(bundle: ModelBundle, chips: Sequence[ComplexChip], ablate: bool = False):
    return _map(lambda c: chip_features(bundle, c, ablate), chips)


def train(bundle: ModelBundle, manifest: Manifest, config: TrainConfig,
          state: Optional[TrainState] = None, evaluate_test: bool = True,
          stop_after: Optional[int] = None,
          on_epoch: Optional[Callable[[RunRecord, TrainState], Optional[bool]]] = None
          ) -> tuple[ModelBundle, list[RunRecord]]:
    """Train in place for ``config.epochs`` epochs (resuming from ``state``).

    The lr follows a per-step cosine from ``learning_rate`` to ``eta_min``;
    the last optimizer step of the full schedule uses exactly ``eta_min``.
    ``stop_after`` ends the run once that many epochs are complete without
    changing the schedule; the returned state can be resumed later.
    ``on_epoch`` runs after every epoch; returning True stops early.
    """
    train_chips = manifest.load_split(TRAIN)
    test_chips = manifest.load_split(TEST) if evaluate_test else []
    if not train_chips:
        raise TrainingError("empty training split")
    if evaluate_test and not test_chips:
        raise TrainingError("empty test split")
    bundle.dropout_p = config.dropout_p
    state = state or TrainState(Adam(config.adam_betas, config.adam_eps))
    labels = np.array([c.label for c in train_chips])
    weights = class_weights(labels, bundle.n_classes) if config.class_weighted else None
    train_feats = _features(bundle, train_chips)
    test_feats = _features(bundle, test_chips) if evaluate_test else None
    spe = steps_per_epoch(len(train_chips), config.batch_size)
    T_total = config.epochs * spe
    records: list[RunRecord] = []
    last = config.epochs if stop_after is None else min(stop_after, config.epochs)
    for epoch in range(state.epoch, last):
        t0 = time.perf_counter()
        order = np.random.default_rng([config.seed, STREAM_SHUFFLE, epoch]).permutation(len(train_chips))
        loss_sum, correct = 0.0, 0
        norm_sq: dict[str, float] = {}
        lr = config.learning_rate
        for b in range(spe):
            batch = order[b * config.batch_size:(b + 1) * config.batch_size]

            def work(pos_idx):
                pos, i = pos_idx
                rng = np.random.default_rng([config.seed, STREAM_DROPOUT, epoch, b, pos])
                return sample_loss_and_grads(bundle, train_feats[i], int(labels[i]), weights, rng)

            results = _map(work, list(enumerate(batch)))
            grads = {k: np.zeros_like(v) for k, v in bundle.registry.values().items()}
            for (i, (loss, pred, g)) in zip(batch, results):
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss {loss} at epoch {epoch} batch {b} sample {int(i)}")
                loss_sum += loss
                correct += int(pred == labels[i])
                for k, v in g.items():
                    grads[k] += v
            for k in grads:
                grads[k] /= len(batch)
            for c, n in grad_norms(grads).items():
                norm_sq[c] = norm_sq.get(c, 0.0) + n * n
            step = epoch * spe + b + 1
            lr = cosine_lr(step, T_total, config.learning_rate, config.eta_min)
            state.optimizer.step(bundle.registry, grads, lr)
        state.epoch = epoch + 1
        test_acc = None
        if evaluate_test:
            test_acc, _ = _evaluate_feats(bundle, test_feats, [c.label for c in test_chips])
        # RMS over the epoch's steps: squared norms still add up across components
        norms = {c: math.sqrt(v / spe) for c, v in norm_sq.items()}
        norms["total"] = math.sqrt(sum(v for v in norm_sq.values()) / spe)
        rec = RunRecord(epoch + 1, loss_sum / len(train_chips), correct / len(train_chips),
                        test_acc, lr, spe, norms, time.perf_counter() - t0)
        records.append(rec)
        if on_epoch is not None and on_epoch(rec, state) is True:
            break
    return bundle, records


def _evaluate_feats(bundle: ModelBundle, feats: Sequence[dict], labels: Sequence[int],
                    ablate_phase: bool = False) -> tuple[float, np.ndarray]:
    preds = _map(lambda f: predict(forward_features(bundle, f, ablate_phase=ablate_phase)), list(feats))
    conf = np.zeros((bundle.n_classes, bundle.n_classes), dtype=np.int64)
    for y, p in zip(labels, preds):
        conf[y, p] += 1
    total = len(labels)
    return (float(np.trace(conf)) / total if total else 0.0), conf


def evaluate(bundle: ModelBundle, manifest: Manifest, split: str = TEST,
             ablate_phase: bool = False) -> tuple[float, np.ndarray]:
    """Accuracy and confusion matrix (rows = truth) in eval mode."""
    chips = manifest.load_split(split)
    if not chips:
        raise TrainingError(f"empty {split} split")
    feats = _features(bundle, chips, ablate_phase)
    return _evaluate_feats(bundle, feats, [c.label for c in chips], ablate_phase)


def ablate_phase(bundle: ModelBundle, manifest: Manifest, split: str = TEST) -> AblationReport:
    """Evaluate with phase intact and zeroed, weights untouched."""
    acc_on, conf_on = evaluate(bundle, manifest, split, ablate_phase=False)
    acc_off, conf_off = evaluate(bundle, manifest, split, ablate_phase=True)
    return AblationReport(acc_on, acc_off, 100.0 * (acc_on - acc_off), conf_on, conf_off)


# ---------------------------------------------------------------------------
# run checkpoints: weights + optimizer state + enough metadata to rebuild
# ---------------------------------------------------------------------------

def save_run(path, bundle: ModelBundle, state: Optional[TrainState] = None,
             config: Optional[TrainConfig] = None) -> None:
    entries = registry_entries(bundle.registry)
    meta = {"model": bundle.kind.value, "strategy": bundle.strategy.value,
            "n_classes": bundle.n_classes, "dropout_p": bundle.dropout_p,
            "epoch": state.epoch if state is not None else 0}
    if state is not None:
        entries += state.optimizer.state_entries()
    if config is not None:
        meta["config"] = asdict(config)
    save_checkpoint(path, entries, meta)


def load_run(path) -> tuple[ModelBundle, TrainState, dict]:
    """Rebuild the bundle and optimizer state saved by :func:`save_run`."""
    entries, meta = load_checkpoint(path)
    try:
        bundle = build_model(meta["model"], meta["strategy"], int(meta["n_classes"]),
                             dropout_p=float(meta.get("dropout_p", 0.1)))
    except KeyError as e:
        raise ValueError(f"{path}: checkpoint metadata lacks {e}") from None
    weights = {n: a for n, a, part in entries if part != "state"}
    if sorted(weights) != sorted(bundle.registry.names()):
        raise ValueError(f"{path}: parameter names do not match a {meta['model']} model")
    for name, arr in weights.items():
        bundle.registry.set_value(name, arr)
    cfg = meta.get("config", {})
    opt = Adam(tuple(cfg.get("adam_betas", (0.9, 0.999))), float(cfg.get("adam_eps", 1e-8)))
    opt.load_state({n: a for n, a, part in entries if part == "state"})
    return bundle, TrainState(opt, int(meta.get("epoch", 0))), meta


def config_from_meta(meta: dict) -> Optional[TrainConfig]:
    cfg = meta.get("config")
    if cfg is None:
        return None
    cfg = dict(cfg)
    cfg["adam_betas"] = tuple(cfg["adam_betas"])
    return TrainConfig(**cfg)
