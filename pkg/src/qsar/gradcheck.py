"""Gradient verification: circuit triangle, per-op FD checks, end-to-end spot checks.

All relative errors are norm-wise, ``||a - b|| / max(||b||, REL_FLOOR)``.
"""
from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import qsim
from .models import ModelBundle, build_model, chip_features, forward_features
from .nn import tensor as T
from .nn.quantum import quantum_layer

REL_FLOOR = 1e-6   # vanishing gradients fall back to an absolute check
TRIANGLE_ABS = 1e-10
TRIANGLE_FD_REL = 1e-5
TRIANGLE_FD_H = 1e-4
OP_REL = 1e-6
E2E_REL = 1e-4
E2E_H = 1e-5


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(float(np.linalg.norm(b)), REL_FLOOR))


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{tag}  {self.name:<28s} max_err={self.error:.3e}  tol={self.tolerance:.0e}{extra}"


@dataclass
class GradcheckReport:
    results: list[CheckResult] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[CheckResult]:
        return [r for r in self.results if not r.passed]

    def render(self) -> str:
        lines = [r.line() for r in self.results]
        verdict = "PASS" if self.passed else "FAIL: " + ", ".join(r.name for r in self.failures())
        lines.append(f"gradcheck {verdict} ({self.wall_time:.1f}s)")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# circuit triangle: adjoint vs parameter shift vs central differences
# ---------------------------------------------------------------------------

def fd_jacobian(program: qsim.CircuitProgram, inputs, params, h: float = TRIANGLE_FD_H) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    w = np.asarray(params, dtype=np.float64)
    cols = []
    for k in range(program.n_slots):
        xp, xm, wp, wm = x.copy(), x.copy(), w.copy(), w.copy()
        if k < program.n_inputs:
            xp[k] += h
            xm[k] -= h
        else:
            wp[k - program.n_inputs] += h
            wm[k - program.n_inputs] -= h
        cols.append((qsim.run(program, xp, wp) - qsim.run(program, xm, wm)) / (2 * h))
    return np.stack(cols, axis=-1) if cols else np.zeros((len(program.observables), 0))


@dataclass
class TriangleStats:
    n_circuits: int
    max_abs_adjoint_shift: float
    max_rel_adjoint_fd: float
    max_rel_shift_fd: float
    shared_slot_circuits: int


def circuit_triangle(n_circuits: int = 100, seed: int = 0, max_qubits: int = 8,
                     max_gates: int = 80) -> TriangleStats:
    rng = np.random.default_rng([seed, 0x7121])
    worst_abs = worst_adj = worst_shift = 0.0
    shared = 0
    for i in range(n_circuits):
        nq = 1 + i % max_qubits
        ng = int(rng.integers(1, max_gates + 1))
        prog = random_triangle_program(rng, nq, ng)
        x = rng.uniform(-np.pi, np.pi, size=prog.n_inputs)
        w = rng.uniform(-np.pi, np.pi, size=prog.n_params)
        _, adj = qsim.adjoint_gradient(prog, x, w)
        if prog.n_slots == 0:
            continue
        shift = np.stack([qsim.parameter_shift_gradient(prog, x, w, k) for k in range(prog.n_slots)], axis=-1)
        fd = fd_jacobian(prog, x, w)
        worst_abs = max(worst_abs, float(np.max(np.abs(adj - shift))))
        worst_adj = max(worst_adj, rel_err(adj, fd))
        worst_shift = max(worst_shift, rel_err(shift, fd))
        uses = [prog.slot_column(g) for g in range(len(prog.gates))]
        uses = [u for u in uses if u is not None]
        shared += int(len(uses) != len(set(uses)))
    return TriangleStats(n_circuits, worst_abs, worst_adj, worst_shift, shared)


def random_triangle_program(rng: np.random.Generator, n_qubits: int, n_gates: int) -> qsim.CircuitProgram:
    # few slots relative to gates so most circuits reuse a slot somewhere
    n_in = int(rng.integers(1, 4))
    n_par = int(rng.integers(1, 5))
    return qsim.random_program(rng, n_qubits, n_gates, n_inputs=n_in, n_params=n_par)


def triangle_results(n_circuits: int = 100, seed: int = 0) -> list[CheckResult]:
    st = circuit_triangle(n_circuits, seed)
    detail = f"{st.n_circuits} circuits, {st.shared_slot_circuits} with shared slots"
    return [
        CheckResult("circuit adjoint~shift (abs)", st.max_abs_adjoint_shift, TRIANGLE_ABS, detail),
        CheckResult("circuit adjoint~fd (rel)", st.max_rel_adjoint_fd, TRIANGLE_FD_REL),
        CheckResult("circuit shift~fd (rel)", st.max_rel_shift_fd, TRIANGLE_FD_REL),
    ]


# ---------------------------------------------------------------------------
# per-op checks on the autodiff tape
# ---------------------------------------------------------------------------

def _fd_check(fn: Callable[..., T.Tensor], args: list[np.ndarray], rng: np.random.Generator,
              h: float = 1e-6) -> float:
    """Max over args of rel_err(tape gradient, central FD) for L = <seed, fn(args)>."""
    leaves = [T.Tensor(a, requires_grad=True) for a in args]
    out = fn(*leaves)
    seed = rng.normal(size=out.shape)
    out.backward(seed)
    worst = 0.0
    for i, a in enumerate(args):
        fd = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            ap, am = [x.copy() for x in args], [x.copy() for x in args]
            ap[i][idx] += h
            am[i][idx] -= h
            lp = float(np.sum(seed * fn(*[T.Tensor(x) for x in ap]).value))
            lm = float(np.sum(seed * fn(*[T.Tensor(x) for x in am]).value))
            fd[idx] = (lp - lm) / (2 * h)
        g = leaves[i].grad if leaves[i].grad is not None else np.zeros_like(a)
        worst = max(worst, rel_err(g, fd))
    return worst


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[np.ndarray]]]:
    prog = qsim.random_program(rng, 3, 12, n_inputs=2, n_params=3, observables=(0, 1, 2))
    m_state = 7

    def drop(x):
        return T.dropout(x, 0.3, np.random.default_rng(m_state))

    r = lambda *s: rng.normal(size=s)
    return {
        "add": (lambda a, b: T.add(a, b), [r(3, 4), r(4)]),
        "mul": (lambda a, b: T.mul(a, b), [r(3, 4), r(3, 1)]),
        "affine": (lambda a: T.affine(a, 1.7, -0.3), [r(5)]),
        "matmul": (lambda a, b: T.matmul(a, b), [r(3, 4), r(4, 2)]),
        "reshape": (lambda a: T.reshape(a, (6, 2)), [r(3, 4)]),
        "transpose": (lambda a: T.transpose(a, (1, 0, 2)), [r(2, 3, 2)]),
        "index": (lambda a: T.index(a, (np.array([0, 2, 0]),)), [r(3, 2)]),
        "concat": (lambda a, b: T.concat([a, b], axis=1), [r(2, 3), r(2, 2)]),
        "sum": (lambda a: T.sum_(a, axis=1), [r(3, 4)]),
        "gelu": (T.gelu, [r(7)]),
        "layer_norm": (T.layer_norm, [r(3, 6), r(6), r(6)]),
        "softmax": (T.softmax, [r(2, 5)]),
        "dropout": (drop, [r(4, 5)]),
        "linear": (T.linear, [r(3, 4), r(4, 2), r(2)]),
        "cross_entropy": (lambda z: T.softmax_cross_entropy(z, 1, np.array([0.5, 2.0, 1.0])), [r(3)]),
        "quantum": (lambda x, w: quantum_layer(prog, x, w),
                    [rng.uniform(0, np.pi, size=(2, prog.n_inputs)), rng.uniform(-1, 1, size=prog.n_params)]),
    }


OP_NAMES = ("add", "mul", "affine", "matmul", "reshape", "transpose", "index", "concat", "sum",
            "gelu", "layer_norm", "softmax", "dropout", "linear", "cross_entropy", "quantum")


def op_results(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng([seed, 0x09])
    out = []
    for name, (fn, args) in _op_cases(rng).items():
        err = _fd_check(fn, args, np.random.default_rng([seed, 0x0A, len(out)]))
        out.append(CheckResult(f"op {name}", err, OP_REL))
    return out


# ---------------------------------------------------------------------------
# end-to-end: loss gradient w.r.t. sampled model parameters vs FD
# ---------------------------------------------------------------------------

def sample_parameter_entries(bundle: ModelBundle, n: int, rng: np.random.Generator) -> list[tuple[str, tuple]]:
    """``n`` scalar entries spread round-robin over the registry's components."""
    by_comp: dict[str, list[tuple[str, tuple]]] = {}
    for name, v in bundle.registry.values().items():
        comp = name.split(".", 1)[0]
        for idx in np.ndindex(v.shape):
            by_comp.setdefault(comp, []).append((name, idx))
    pools = [list(rng.permutation(len(p))) for p in by_comp.values()]
    entries = list(by_comp.values())
    picked: list[tuple[str, tuple]] = []
    while len(picked) < n and any(pools):
        for pool, ents in zip(pools, entries):
            if pool and len(picked) < n:
                picked.append(ents[pool.pop()])
    return picked


def _synthetic_chip(bundle: ModelBundle, seed: int):
    from .data.synth import SynthMode, synth_chip
    return synth_chip(SynthMode.BOTH, 1, bundle.n_classes, np.random.default_rng([seed, 0xE2E]))


def end_to_end_error(bundle: ModelBundle, n_params: int = 20, seed: int = 0,
                     h: float = E2E_H, with_dropout: bool = True) -> tuple[float, list[str]]:
    """rel_err over ``n_params`` sampled scalars of the training loss gradient."""
    chip = _synthetic_chip(bundle, seed)
    feats = chip_features(bundle, chip)
    label = chip.label
    weights = np.linspace(0.5, 1.5, bundle.n_classes)

    def rng():
        return np.random.default_rng([seed, 0xD0]) if with_dropout else None

    def loss(values) -> float:
        out = forward_features(bundle, feats, T.no_grad_leaves(values), rng())
        return float(T.softmax_cross_entropy(out, label, weights).value)

    leaves = T.grad_leaves(bundle.registry.values())
    out = forward_features(bundle, feats, leaves, rng())
    T.softmax_cross_entropy(out, label, weights).backward()
    grads = T.collect_grads(leaves)
    picked = sample_parameter_entries(bundle, n_params, np.random.default_rng([seed, 0x5A]))
    analytic, numeric = [], []
    for name, idx in picked:
        vals = {k: v.copy() for k, v in bundle.registry.values().items()}
        base = vals[name][idx]
        vals[name][idx] = base + h
        lp = loss(vals)
        vals[name][idx] = base - h
        lm = loss(vals)
        analytic.append(grads[name][idx])
        numeric.append((lp - lm) / (2 * h))
    return rel_err(analytic, numeric), sorted({n.split(".", 1)[0] for n, _ in picked})


MODEL_DEFAULTS = {"magqt": ("magqt", "s1"), "magqt-s3": ("magqt", "s3"),
                  "dualpath": ("dualpath", "s4"), "pure": ("pure", "s5")}


def model_results(models=("magqt", "dualpath", "pure"), seed: int = 0, n_params: int = 20,
                  n_classes: int = 3) -> list[CheckResult]:
    out = []
    for key in models:
        kind, strat = MODEL_DEFAULTS.get(key, (key, None))
        bundle = build_model(kind, strat, n_classes, seed)
        err, comps = end_to_end_error(bundle, n_params, seed)
        out.append(CheckResult(f"e2e {key}", err, E2E_REL, f"params from {','.join(comps)}"))
    return out


def run_gradcheck(models=("magqt", "dualpath", "pure"), seed: int = 0, n_circuits: int = 100,
                  inject: Optional[str] = None) -> GradcheckReport:
    """The full battery; ``inject`` sign-flips one op's backward rule throughout."""
    t0 = time.perf_counter()
    report = GradcheckReport()
    if inject is not None and inject not in OP_NAMES:
        raise ValueError(f"unknown op {inject!r}; choose from {', '.join(OP_NAMES)}")
    ctx = T.inject_sign_flip(inject) if inject else contextlib.nullcontext()
    with ctx:
        report.results += triangle_results(n_circuits, seed)
        report.results += op_results(seed)
        report.results += model_results(models, seed)
    report.wall_time = time.perf_counter() - t0
    return report

