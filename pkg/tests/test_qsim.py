import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsar import qsim
from qsar.qsim import (CNOT, RY, RZ, CircuitError, CircuitProgram, Encoding, Fixed, GateOp,
                       Trainable, cnot, ry, rz)


def one_qubit(kind, slot):
    return CircuitProgram(1, (GateOp(kind, 0, angle=slot),), (0,))


def dense_unitary(program, inputs, params):
    # independent oracle: build every gate as a full 2^n matrix via kron
    n = program.n_qubits
    I2 = np.eye(2)
    X = np.array([[0, 1], [1, 0]])
    P0, P1 = np.diag([1, 0]), np.diag([0, 1])

    def on(q, m):
        # little-endian: qubit 0 is the rightmost kron factor
        out = np.array([[1.0]])
        for k in reversed(range(n)):
            out = np.kron(out, m if k == q else I2)
        return out

    U = np.eye(2 ** n, dtype=complex)
    for g in program.gates:
        if g.kind == CNOT:
            G = on(g.control, P0) + on(g.control, P1) @ on(g.target, X)
        else:
            a = g.angle
            th = a.value if isinstance(a, Fixed) else (inputs[a.index] if isinstance(a, Encoding) else params[a.index])
            if g.kind == RY:
                m = np.array([[np.cos(th / 2), -np.sin(th / 2)], [np.sin(th / 2), np.cos(th / 2)]])
            else:
                m = np.diag([np.exp(-1j * th / 2), np.exp(1j * th / 2)])
            G = on(g.target, m)
        U = G @ U
    return U


def dense_expectations(program, inputs, params):
    n = program.n_qubits
    psi = dense_unitary(program, inputs, params)[:, 0]
    p = np.abs(psi) ** 2
    idx = np.arange(2 ** n)
    return np.array([np.sum(p * (1 - 2 * ((idx >> q) & 1))) for q in program.observables])


# ---------------------------------------------------------------------------
# program validation
# ---------------------------------------------------------------------------

def test_gate_shape_rules():
    with pytest.raises(CircuitError):
        GateOp(CNOT, 1)
    with pytest.raises(CircuitError):
        GateOp(CNOT, 1, control=1)
    with pytest.raises(CircuitError):
        GateOp(RY, 0)
    with pytest.raises(CircuitError):
        GateOp(RY, 0, control=1, angle=Fixed(0.0))
    with pytest.raises(CircuitError):
        GateOp("H", 0)


def test_program_rejects_bad_indices():
    with pytest.raises(CircuitError):
        CircuitProgram(2, (ry(2, Fixed(0.0)),), (0,))
    with pytest.raises(CircuitError):
        CircuitProgram(2, (ry(0, Trainable(1)),), (0,))  # gap: no Trainable(0)
    with pytest.raises(CircuitError):
        CircuitProgram(2, (ry(0, Encoding(0)),), (0, 0))
    with pytest.raises(CircuitError):
        CircuitProgram(2, (ry(0, Encoding(0)),), (2,))


def test_slot_counts_and_columns():
    p = CircuitProgram(2, (ry(0, Encoding(0)), rz(1, Trainable(0)), ry(1, Encoding(1)),
                           cnot(0, 1), ry(0, Trainable(0)), ry(1, Fixed(0.3))), (0, 1))
    assert (p.n_inputs, p.n_params, p.n_slots) == (2, 1, 3)
    assert [p.slot_column(i) for i in range(6)] == [0, 2, 1, None, 2, None]
    assert p.count(RY) == 4 and p.count(CNOT) == 1


def test_input_shape_mismatch():
    p = one_qubit(RY, Encoding(0))
    with pytest.raises(CircuitError):
        qsim.run(p, np.zeros(2), np.zeros(0))


# ---------------------------------------------------------------------------
# gate application
# ---------------------------------------------------------------------------

def test_ry_zero_is_identity():
    rng = np.random.default_rng(0)
    s = rng.normal(size=8) + 1j * rng.normal(size=8)
    s /= np.linalg.norm(s)
    out = qsim.apply_gate(s, ry(1, Fixed(0.0)))
    np.testing.assert_array_equal(out, s)


def test_ry_pi_flips_zero():
    s = qsim.apply_gate(qsim.zero_state(1)[0], ry(0, Fixed(np.pi)))
    np.testing.assert_allclose(np.abs(s), [0.0, 1.0], atol=1e-15)
    assert qsim.expval_z(s, 0) == pytest.approx(-1.0, abs=1e-15)


def test_cnot_truth_table():
    # |10> in ket notation = qubit 0 set (little-endian index 1)
    s = np.zeros(4, dtype=complex)
    s[1] = 1.0
    out = qsim.apply_gate(s, cnot(0, 1))
    assert out[3] == 1.0 and np.sum(np.abs(out)) == 1.0


def test_zero_state_batched_shape():
    s = qsim.zero_state(3, batch=5)
    assert s.shape == (5, 8)
    assert np.all(s[:, 0] == 1.0)


# ---------------------------------------------------------------------------
# expectations
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.0, 0.3, 1.2, np.pi, -2.5])
def test_ry_expectation_is_cos(theta):
    assert qsim.run(one_qubit(RY, Encoding(0)), [theta], [])[0] == pytest.approx(np.cos(theta), abs=1e-14)


@pytest.mark.parametrize("theta", [0.0, 0.7, 2.0])
def test_rz_on_zero_is_one(theta):
    assert qsim.run(one_qubit(RZ, Encoding(0)), [theta], [])[0] == pytest.approx(1.0, abs=1e-15)


def test_bell_half_observe_q1():
    p = CircuitProgram(2, (ry(0, Fixed(np.pi / 2)), cnot(0, 1)), (1,))
    assert qsim.run(p, [], [])[0] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(qsim.run(p, [], []), dense_expectations(p, [], []), atol=1e-14)


def test_random_programs_match_dense_oracle():
    rng = np.random.default_rng(11)
    for n in range(1, 6):
        for _ in range(4):
            p = qsim.random_program(rng, n, 25, n_inputs=2, n_params=3)
            x = rng.uniform(-np.pi, np.pi, p.n_inputs)
            w = rng.uniform(-np.pi, np.pi, p.n_params)
            np.testing.assert_allclose(qsim.run(p, x, w), dense_expectations(p, x, w), atol=1e-12)


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    p = qsim.random_program(rng, 4, 30, n_inputs=3, n_params=2)
    X = rng.uniform(-np.pi, np.pi, size=(5, p.n_inputs))
    w = rng.uniform(-np.pi, np.pi, size=p.n_params)
    batch = qsim.run(p, X, w)
    assert batch.shape == (5, len(p.observables))
    for b in range(5):
        np.testing.assert_allclose(batch[b], qsim.run(p, X[b], w), atol=1e-14)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.1, 1.0, 2.9])
def test_adjoint_ry_is_minus_sin(theta):
    _, jac = qsim.adjoint_gradient(one_qubit(RY, Encoding(0)), [theta], [])
    assert jac[0, 0] == pytest.approx(-np.sin(theta), abs=1e-14)


def test_shift_closed_form_at_half_pi():
    g = qsim.parameter_shift_gradient(one_qubit(RY, Trainable(0)), [], [np.pi / 2], 0)
    assert g[0] == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("theta", [0.2, 0.9, 2.2])
def test_shared_slot_sums_contributions(theta):
    # two stacked RY(theta) on one wire: <Z> = cos(2 theta), derivative -2 sin(2 theta)
    p = CircuitProgram(1, (ry(0, Trainable(0)), ry(0, Trainable(0))), (0,))
    _, jac = qsim.adjoint_gradient(p, [], [theta])
    shift = qsim.parameter_shift_gradient(p, [], [theta], 0)
    assert jac[0, 0] == pytest.approx(-2 * np.sin(2 * theta), abs=1e-13)
    assert shift[0] == pytest.approx(-2 * np.sin(2 * theta), abs=1e-13)


def test_causal_cone_zero_gradient():
    p = CircuitProgram(3, (ry(0, Trainable(0)), ry(1, Trainable(1)), ry(2, Encoding(0)), cnot(0, 1)), (0, 1))
    ev, jac = qsim.adjoint_gradient(p, [0.0], [0.0, 0.0])
    np.testing.assert_allclose(ev, [1.0, 1.0], atol=1e-15)
    # qubit 2 is outside both observables' cones
    assert np.all(jac[:, 0] == 0.0)


def test_adjoint_matches_shift_on_random_programs():
    rng = np.random.default_rng(5)
    for i in range(100):
        p = qsim.random_program(rng, 1 + i % 8, int(rng.integers(1, 60)), n_inputs=2, n_params=3)
        x = rng.uniform(-np.pi, np.pi, p.n_inputs)
        w = rng.uniform(-np.pi, np.pi, p.n_params)
        _, jac = qsim.adjoint_gradient(p, x, w)
        for k in range(p.n_slots):
            np.testing.assert_allclose(jac[:, k], qsim.parameter_shift_gradient(p, x, w, k), atol=1e-10)


def test_batched_adjoint_matches_single():
    rng = np.random.default_rng(8)
    p = qsim.random_program(rng, 3, 20, n_inputs=2, n_params=2)
    X = rng.uniform(-np.pi, np.pi, size=(4, p.n_inputs))
    w = rng.uniform(-np.pi, np.pi, size=p.n_params)
    ev, jac = qsim.adjoint_gradient(p, X, w)
    assert jac.shape == (4, len(p.observables), p.n_slots)
    for b in range(4):
        e1, j1 = qsim.adjoint_gradient(p, X[b], w)
        np.testing.assert_allclose(ev[b], e1, atol=1e-14)
        np.testing.assert_allclose(jac[b], j1, atol=1e-13)


def test_split_jacobian_columns():
    p = CircuitProgram(1, (ry(0, Encoding(0)), ry(0, Trainable(0)), ry(0, Trainable(1))), (0,))
    _, jac = qsim.adjoint_gradient(p, [0.1], [0.2, 0.3])
    jx, jw = qsim.split_jacobian(p, jac)
    assert jx.shape == (1, 1) and jw.shape == (1, 2)
    # all three gates add angles on the same axis, so every column is -sin(total)
    np.testing.assert_allclose(jac[0], -np.sin(0.6), atol=1e-14)


def test_shift_rejects_bad_slot():
    with pytest.raises(CircuitError):
        qsim.parameter_shift_gradient(one_qubit(RY, Trainable(0)), [], [0.0], 1)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(1, 8), gates=st.integers(1, 80))
def test_norm_preserved(seed, n, gates):
    rng = np.random.default_rng(seed)
    p = qsim.random_program(rng, n, gates)
    x = rng.uniform(-np.pi, np.pi, p.n_inputs)
    w = rng.uniform(-np.pi, np.pi, p.n_params)
    psi = qsim.simulate(p, x, w)
    assert abs(qsim.state_norm(psi) - 1.0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(1, 6))
def test_expectations_bounded(seed, n):
    rng = np.random.default_rng(seed)
    p = qsim.random_program(rng, n, 40)
    ev = qsim.run(p, rng.uniform(-4, 4, p.n_inputs), rng.uniform(-4, 4, p.n_params))
    assert np.all(np.abs(ev) <= 1.0 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(1, 5))
def test_periodicity_4pi(seed, n):
    rng = np.random.default_rng(seed)
    p = qsim.random_program(rng, n, 30, n_inputs=2, n_params=2)
    x = rng.uniform(-np.pi, np.pi, p.n_inputs)
    w = rng.uniform(-np.pi, np.pi, p.n_params)
    np.testing.assert_allclose(qsim.run(p, x + 4 * np.pi, w), qsim.run(p, x, w), atol=1e-12)


def test_random_program_is_gap_free():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = qsim.random_program(rng, 4, 30, n_inputs=5, n_params=5)
        enc = {g.angle.index for g in p.gates if isinstance(g.angle, Encoding)}
        par = {g.angle.index for g in p.gates if isinstance(g.angle, Trainable)}
        assert enc == set(range(p.n_inputs)) and par == set(range(p.n_params))
