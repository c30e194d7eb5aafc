import numpy as np
import pytest

from qsar import gradcheck as gc
from qsar.models import build_model
from qsar.nn import tensor as T


# ---------------------------------------------------------------------------
# error metric
# ---------------------------------------------------------------------------

def test_rel_err_normwise():
    assert gc.rel_err([3.0, 4.0], [3.0, 4.0]) == 0.0
    assert gc.rel_err([3.0, 5.0], [3.0, 4.0]) == pytest.approx(1 / 5)


def test_rel_err_floor_for_vanishing_gradients():
    # a zero reference falls back to absolute error scaled by the floor
    assert gc.rel_err([1e-12], [0.0]) == pytest.approx(1e-6)


def test_check_result_line():
    ok = gc.CheckResult("x", 1e-9, 1e-6)
    bad = gc.CheckResult("y", float("nan"), 1e-6)
    assert ok.passed and ok.line().startswith("PASS")
    assert not bad.passed and bad.line().startswith("FAIL")


# ---------------------------------------------------------------------------
# batteries
# ---------------------------------------------------------------------------

def test_triangle_on_random_circuits():
    st = gc.circuit_triangle(n_circuits=30, seed=2)
    assert st.max_abs_adjoint_shift <= gc.TRIANGLE_ABS
    assert st.max_rel_adjoint_fd <= gc.TRIANGLE_FD_REL
    assert st.max_rel_shift_fd <= gc.TRIANGLE_FD_REL
    assert st.shared_slot_circuits > 0


def test_every_op_passes():
    res = gc.op_results(seed=1)
    assert {r.name.split()[-1] for r in res} >= set(gc.OP_NAMES) - {"quantum"} or len(res) == len(gc.OP_NAMES)
    assert all(r.passed for r in res), [r.line() for r in res if not r.passed]


@pytest.mark.parametrize("op", gc.OP_NAMES)
def test_injected_fault_is_caught_and_named(op):
    with T.inject_sign_flip(op):
        res = gc.op_results(seed=0)
    failing = [r.name for r in res if not r.passed]
    assert failing and all(op in name for name in failing)


def test_sampled_entries_cover_components():
    b = build_model("dualpath")
    picked = gc.sample_parameter_entries(b, 8, np.random.default_rng(0))
    assert len(picked) == 8
    assert {n.split(".")[0] for n, _ in picked} == set(b.components())


def test_run_gradcheck_rejects_unknown_op():
    with pytest.raises(ValueError):
        gc.run_gradcheck(("pure",), n_circuits=1, inject="tanh")


def test_full_report_passes_and_injection_fails():
    ok = gc.run_gradcheck(("pure",), n_circuits=3)
    assert ok.passed and "gradcheck PASS" in ok.render()
    bad = gc.run_gradcheck(("pure",), n_circuits=3, inject="quantum")
    assert not bad.passed
    assert "quantum" in bad.render().splitlines()[-1]
