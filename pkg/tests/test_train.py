import math

import numpy as np
import pytest

from qsar import train as tr
from qsar.data import Manifest, synth_generate
from qsar.models import build_model, chip_features
from qsar.nn.optim import TrainConfig
from qsar.train import (TrainingError, ablate_phase, class_weights, evaluate, grad_norms, load_run,
                        sample_loss_and_grads, save_run, steps_per_epoch)


def subset(m, split):
    """Same chips, one split only."""
    return Manifest([e for e in m.entries if e.split == split], m.class_names, chips=m.chips)


def tiny(n_train=6, n_test=3, mode="mag", seed=0):
    return synth_generate(mode, 3, n_train, n_test, seed)


FAST = dict(epochs=2, batch_size=4, learning_rate=1e-3)


# ---------------------------------------------------------------------------
# schedule and step counts
# ---------------------------------------------------------------------------

def test_steps_per_epoch():
    assert steps_per_epoch(32, 16) == 2
    assert steps_per_epoch(33, 16) == 3
    assert steps_per_epoch(3, 16) == 1


def test_epoch_reports_steps_and_final_lr():
    m = tiny(n_train=8)
    _, recs = tr.train(build_model("pure"), m, TrainConfig(epochs=2, batch_size=4, learning_rate=0.01))
    assert [r.steps for r in recs] == [2, 2]
    assert recs[-1].lr == 1e-6
    # halfway through the cosine the lr is the midpoint
    assert recs[0].lr == pytest.approx(1e-6 + 0.5 * (0.01 - 1e-6))


def test_loss_decreases_on_fixed_batch():
    m = tiny(n_train=3, n_test=3)
    b = build_model("pure", seed=1)
    cfg = TrainConfig(epochs=5, batch_size=3, learning_rate=0.05, eta_min=0.05)
    _, recs = tr.train(b, m, cfg, evaluate_test=False)
    losses = [r.train_loss for r in recs]
    assert losses[-1] < losses[0]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_evaluate_confusion_rows_sum_to_class_counts():
    m = tiny(n_test=6)
    acc, conf = evaluate(build_model("magqt"), m)
    assert conf.shape == (3, 3) and conf.sum() == 6
    np.testing.assert_array_equal(conf.sum(1), [2, 2, 2])
    assert acc == np.trace(conf) / 6


def test_evaluate_constant_predictor(monkeypatch):
    m = tiny(n_test=6)
    monkeypatch.setattr(tr, "predict", lambda out: 1)
    acc, conf = evaluate(build_model("magqt"), m)
    assert acc == pytest.approx(1 / 3)
    np.testing.assert_array_equal(conf[:, 1], [2, 2, 2])


def test_evaluate_perfect_predictor(monkeypatch):
    m = tiny(n_test=6)
    monkeypatch.setattr(tr, "forward_features", lambda b, f, **kw: np.eye(3)[int(f["label"])])
    monkeypatch.setattr(tr, "_features", lambda b, chips, ablate=False: [{"label": c.label} for c in chips])
    acc, conf = evaluate(build_model("magqt"), m)
    assert acc == 1.0
    np.testing.assert_array_equal(conf, 2 * np.eye(3))


def test_empty_split_errors():
    m = tiny()
    with pytest.raises(TrainingError):
        evaluate(build_model("magqt"), subset(m, "train"))
    with pytest.raises(TrainingError):
        tr.train(build_model("magqt"), subset(m, "test"), TrainConfig(**FAST))


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

def test_ablation_leaves_weights_and_s1_delta_zero():
    m = tiny(mode="both", n_test=6)
    b = build_model("magqt", "s1")
    d = b.registry.digest()
    rep = ablate_phase(b, m)
    assert b.registry.digest() == d
    assert rep.delta == 0.0
    np.testing.assert_array_equal(rep.confusion_with_phase, rep.confusion_phase_zeroed)


def test_ablation_report_delta_units():
    m = tiny(mode="both", n_test=6)
    rep = ablate_phase(build_model("dualpath"), m)
    assert rep.delta == pytest.approx(100 * (rep.accuracy_with_phase - rep.accuracy_phase_zeroed))
    assert set(rep.to_json()) >= {"accuracy_with_phase", "accuracy_phase_zeroed", "delta"}


# ---------------------------------------------------------------------------
# class weights and gradient norms
# ---------------------------------------------------------------------------

def test_balanced_weights_are_exactly_one():
    w = class_weights([0, 1, 2] * 30, 3)
    assert np.all(w == 1.0)


def test_imbalanced_weights():
    w = class_weights([0, 0, 0, 1], 2)
    # inverse frequency 1/3 : 1, mean 1
    np.testing.assert_allclose(w, [0.5, 1.5])
    with pytest.raises(ValueError):
        class_weights([0, 0], 2)


def test_balanced_weighted_loss_equals_unweighted():
    m = tiny()
    b = build_model("magqt")
    c = m.load_split("train")[0]
    f = chip_features(b, c)
    la, _, ga = sample_loss_and_grads(b, f, c.label, class_weights([0, 1, 2], 3))
    lb, _, gb = sample_loss_and_grads(b, f, c.label, None)
    assert la == lb
    for k in ga:
        np.testing.assert_array_equal(ga[k], gb[k])


def test_grad_norm_pythagorean():
    rng = np.random.default_rng(0)
    g = {"a.x": rng.normal(size=(3, 4)), "a.y": rng.normal(size=5), "b.z": rng.normal(size=7)}
    n = grad_norms(g)
    assert n["a"] == pytest.approx(math.sqrt(np.sum(g["a.x"] ** 2) + np.sum(g["a.y"] ** 2)))
    flat = np.concatenate([v.ravel() for v in g.values()])
    assert math.hypot(n["a"], n["b"]) == pytest.approx(np.linalg.norm(flat))


def test_epoch_norms_total_is_consistent():
    _, recs = tr.train(build_model("dualpath"), tiny(n_train=4), TrainConfig(**FAST), evaluate_test=False)
    for r in recs:
        parts = [v for k, v in r.grad_norms.items() if k != "total"]
        assert set(r.grad_norms) == {"patch_encoder", "transformer", "phase_vqc", "head", "total"}
        assert r.grad_norms["total"] == pytest.approx(math.sqrt(sum(p * p for p in parts)))


# ---------------------------------------------------------------------------
# determinism, resume, failure handling
# ---------------------------------------------------------------------------

def test_training_is_deterministic():
    m = tiny(n_train=4)
    runs = []
    for _ in range(2):
        b, recs = tr.train(build_model("magqt", "s2", seed=3), m, TrainConfig(**FAST, seed=3))
        runs.append((b.registry.digest(), [r.deterministic_view() for r in recs]))
    assert runs[0] == runs[1]


def test_thread_count_does_not_change_results(monkeypatch):
    m = tiny(n_train=4)
    a, _ = tr.train(build_model("magqt"), m, TrainConfig(**FAST), evaluate_test=False)
    monkeypatch.setenv("QSAR_THREADS", "3")
    b, _ = tr.train(build_model("magqt"), m, TrainConfig(**FAST), evaluate_test=False)
    assert a.registry.digest() == b.registry.digest()


def test_resume_matches_uninterrupted(tmp_path):
    m = tiny(n_train=4)
    cfg = TrainConfig(epochs=3, batch_size=4, learning_rate=1e-3, seed=5)
    full, full_recs = tr.train(build_model("magqt", "s3", seed=5), m, cfg)

    part = build_model("magqt", "s3", seed=5)
    state = tr.TrainState(tr.Adam(cfg.adam_betas, cfg.adam_eps))
    _, first = tr.train(part, m, cfg, state, stop_after=1)
    save_run(tmp_path / "run.ckpt", part, state, cfg)
    bundle, state2, meta = load_run(tmp_path / "run.ckpt")
    assert state2.epoch == 1 and tr.config_from_meta(meta) == cfg
    _, rest = tr.train(bundle, m, cfg, state2)
    assert bundle.registry.digest() == full.registry.digest()
    assert [r.deterministic_view() for r in first + rest] == [r.deterministic_view() for r in full_recs]


def test_load_run_rejects_mismatched_names(tmp_path):
    from qsar.nn.registry import registry_entries, save_checkpoint
    b = build_model("pure")
    save_checkpoint(tmp_path / "x.ckpt", registry_entries(b.registry), {"model": "magqt", "strategy": "s1", "n_classes": 3})
    with pytest.raises(ValueError):
        load_run(tmp_path / "x.ckpt")


def test_non_finite_loss_aborts(monkeypatch):
    m = tiny(n_train=4)
    real = tr.sample_loss_and_grads

    def poisoned(*a, **kw):
        loss, pred, g = real(*a, **kw)
        return float("nan"), pred, g

    monkeypatch.setattr(tr, "sample_loss_and_grads", poisoned)
    with pytest.raises(TrainingError, match="non-finite"):
        tr.train(build_model("magqt"), m, TrainConfig(**FAST))


def test_on_epoch_can_stop_early():
    seen = []
    _, recs = tr.train(build_model("pure"), tiny(n_train=3), TrainConfig(epochs=4, batch_size=3),
                       evaluate_test=False, on_epoch=lambda r, s: seen.append(r.epoch) or r.epoch == 2)
    assert seen == [1, 2] and len(recs) == 2
