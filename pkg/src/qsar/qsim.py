"""Dense state-vector simulation for small RY/RZ/CNOT circuits.

Amplitudes use little-endian ordering: qubit 0 is the least significant bit
of the amplitude index. Circuits read out Pauli-Z expectations only, and
gradients come from a single adjoint sweep over the gate list.

Every entry point accepts either one input vector of shape ``(n_inputs,)``
or a batch of shape ``(B, n_inputs)``; trainable parameters are shared
across the batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

MAX_QUBITS = 10

RY = "RY"
RZ = "RZ"
CNOT = "CNOT"
_KINDS = (RY, RZ, CNOT)


class CircuitError(ValueError):
    """Raised for malformed programs or mismatched inputs."""


@dataclass(frozen=True)
class Fixed:
    value: float


@dataclass(frozen=True)
class Encoding:
    index: int


@dataclass(frozen=True)
class Trainable:
    index: int


AngleSlot = Union[Fixed, Encoding, Trainable]


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: Optional[int] = None
    angle: Optional[AngleSlot] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if self.kind == CNOT:
            if self.control is None or self.angle is not None:
                raise CircuitError("CNOT needs a control and no angle")
            if self.control == self.target:
                raise CircuitError("CNOT control equals target")
        else:
            if self.angle is None or self.control is not None:
                raise CircuitError(f"{self.kind} needs an angle slot and no control")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)


def ry(target: int, angle: AngleSlot) -> GateOp:
    return GateOp(RY, target, angle=angle)


def rz(target: int, angle: AngleSlot) -> GateOp:
    return GateOp(RZ, target, angle=angle)


def cnot(control: int, target: int) -> GateOp:
    return GateOp(CNOT, target, control=control)


@dataclass(frozen=True)
class CircuitProgram:
    """Immutable gate list plus the qubits read out as <Z>.

    ``n_inputs`` and ``n_params`` are derived from the Encoding and
    Trainable slots, which must each form a gap-free range ``0..k``.
    """

    n_qubits: int
    gates: tuple[GateOp, ...]
    observables: tuple[int, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "observables", tuple(int(q) for q in self.observables))
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CircuitError(f"n_qubits must be in 1..{MAX_QUBITS}, got {self.n_qubits}")
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise CircuitError(f"qubit {q} out of range for {self.n_qubits} qubits")
        if len(set(self.observables)) != len(self.observables):
            raise CircuitError("observables must be distinct")
        for q in self.observables:
            if not 0 <= q < self.n_qubits:
                raise CircuitError(f"observable qubit {q} out of range")
        for kind in (Encoding, Trainable):
            used = {g.angle.index for g in self.gates if isinstance(g.angle, kind)}
            if used and used != set(range(max(used) + 1)):
                raise CircuitError(f"{kind.__name__} slots are not gap-free: {sorted(used)}")

    @cached_property
    def n_inputs(self) -> int:
        idx = [g.angle.index for g in self.gates if isinstance(g.angle, Encoding)]
        return max(idx) + 1 if idx else 0

    @cached_property
    def n_params(self) -> int:
        idx = [g.angle.index for g in self.gates if isinstance(g.angle, Trainable)]
        return max(idx) + 1 if idx else 0

    @property
    def n_slots(self) -> int:
        return self.n_inputs + self.n_params

    @cached_property
    def _slot_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-gate (source, index, fixed value); source 0 fixed, 1 input, 2 param."""
        src = np.zeros(len(self.gates), dtype=np.int64)
        idx = np.zeros(len(self.gates), dtype=np.int64)
        val = np.zeros(len(self.gates))
        for k, g in enumerate(self.gates):
            if isinstance(g.angle, Encoding):
                src[k], idx[k] = 1, g.angle.index
            elif isinstance(g.angle, Trainable):
                src[k], idx[k] = 2, g.angle.index
            elif isinstance(g.angle, Fixed):
                val[k] = g.angle.value
        return src, idx, val

    @cached_property
    def _cone_mask(self) -> np.ndarray:
        """(n_obs, n_gates): gate lies in the backward light cone of the observable."""
        mask = np.zeros((len(self.observables), len(self.gates)), dtype=bool)
        for k, q in enumerate(self.observables):
            cone = {q}
            for gi in range(len(self.gates) - 1, -1, -1):
                g = self.gates[gi]
                if g.kind == CNOT:
                    if g.control in cone or g.target in cone:
                        cone |= {g.control, g.target}
                else:
                    mask[k, gi] = g.target in cone
        return mask

    def slot_column(self, gate_index: int) -> Optional[int]:
        """Jacobian column fed by a gate: inputs first, then params."""
        a = self.gates[gate_index].angle
        if isinstance(a, Encoding):
            return a.index
        if isinstance(a, Trainable):
            return self.n_inputs + a.index
        return None

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)


# ---------------------------------------------------------------------------
# kernels: states are (B, ..., 2**n); angles are (B,)
# ---------------------------------------------------------------------------

def _split(state: np.ndarray, q: int, n: int) -> np.ndarray:
    return state.reshape(state.shape[:-1] + (2 ** (n - 1 - q), 2, 2 ** q))


def _bcast(x: np.ndarray, state: np.ndarray) -> np.ndarray:
    # (B,) -> (B, 1, ..., 1) matching one half of a split state
    return x.reshape(x.shape + (1,) * state.ndim)


def _rotate(state: np.ndarray, kind: str, q: int, n: int, theta: np.ndarray) -> np.ndarray:
    v = _split(state, q, n)
    a, b = v[..., 0, :], v[..., 1, :]
    out = np.empty_like(v)
    if kind == RY:
        c = _bcast(np.cos(theta / 2), state)
        s = _bcast(np.sin(theta / 2), state)
        out[..., 0, :] = c * a - s * b
        out[..., 1, :] = s * a + c * b
    else:
        ph = _bcast(np.exp(-0.5j * theta), state)
        out[..., 0, :] = ph * a
        out[..., 1, :] = np.conj(ph) * b
    return out.reshape(state.shape)


def _generator(state: np.ndarray, kind: str, q: int, n: int) -> np.ndarray:
    """Apply the Pauli generator (Y for RY, Z for RZ) on qubit q."""
    v = _split(state, q, n)
    out = np.empty_like(v)
    if kind == RY:
        out[..., 0, :] = -1j * v[..., 1, :]
        out[..., 1, :] = 1j * v[..., 0, :]
    else:
        out[..., 0, :] = v[..., 0, :]
        out[..., 1, :] = -v[..., 1, :]
    return out.reshape(state.shape)


def _cnot(state: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    lead = state.ndim - 1
    t = state.reshape(state.shape[:-1] + (2,) * n)
    out = t.copy()
    ca, ta = lead + n - 1 - control, lead + n - 1 - target
    sel = [slice(None)] * t.ndim
    sel[ca] = 1
    s0, s1 = list(sel), list(sel)
    s0[ta], s1[ta] = 0, 1
    out[tuple(s0)] = t[tuple(s1)]
    out[tuple(s1)] = t[tuple(s0)]
    return out.reshape(state.shape)


def _z_expect(state: np.ndarray, q: int, n: int) -> np.ndarray:
    p = _split(np.abs(state) ** 2, q, n)
    return p[..., 0, :].sum(axis=(-2, -1)) - p[..., 1, :].sum(axis=(-2, -1))


def _apply(state: np.ndarray, gate: GateOp, n: int, theta: Optional[np.ndarray]) -> np.ndarray:
    if gate.kind == CNOT:
        return _cnot(state, gate.control, gate.target, n)
    return _rotate(state, gate.kind, gate.target, n, theta)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def zero_state(n_qubits: int, batch: int = 1) -> np.ndarray:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CircuitError(f"n_qubits must be in 1..{MAX_QUBITS}")
    psi = np.zeros((batch, 2 ** n_qubits), dtype=np.complex128)
    psi[:, 0] = 1.0
    return psi


def apply_gate(state: np.ndarray, gate: GateOp, angle: Optional[float] = None) -> np.ndarray:
    """Apply one gate to a single state vector of length 2**n."""
    state = np.asarray(state, dtype=np.complex128)
    n = int(np.log2(state.shape[-1]))
    if 2 ** n != state.shape[-1]:
        raise CircuitError("state length is not a power of two")
    for q in gate.qubits:
        if not 0 <= q < n:
            raise CircuitError(f"qubit {q} out of range for {n} qubits")
    theta = None
    if gate.kind != CNOT:
        if angle is None:
            if not isinstance(gate.angle, Fixed):
                raise CircuitError(f"{gate.kind} needs a resolved angle")
            angle = gate.angle.value
        theta = np.array([float(angle)])
    return _apply(state[None], gate, n, theta)[0]


def expval_z(state: np.ndarray, qubit: int) -> float:
    state = np.asarray(state)
    n = int(np.log2(state.shape[-1]))
    return float(_z_expect(state[None], qubit, n)[0])


def _prepare(program: CircuitProgram, inputs, params) -> tuple[np.ndarray, bool]:
    """Resolve per-gate angles to an array of shape (B, n_gates)."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    w = np.asarray(params, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[1] != program.n_inputs:
        raise CircuitError(f"expected {program.n_inputs} inputs, got shape {np.shape(inputs)}")
    if w.shape[0] != program.n_params:
        raise CircuitError(f"expected {program.n_params} params, got {w.shape[0]}")
    src, idx, val = program._slot_table
    angles = np.broadcast_to(val, (x.shape[0], len(program.gates))).copy()
    m = src == 1
    angles[:, m] = x[:, idx[m]]
    m = src == 2
    angles[:, m] = w[idx[m]]
    return angles, single


def _forward(program: CircuitProgram, angles: np.ndarray) -> np.ndarray:
    n = program.n_qubits
    psi = zero_state(n, angles.shape[0])
    for k, g in enumerate(program.gates):
        psi = _apply(psi, g, n, angles[:, k])
    return psi


def _expectations(program: CircuitProgram, psi: np.ndarray) -> np.ndarray:
    n = program.n_qubits
    if not program.observables:
        return np.zeros((psi.shape[0], 0))
    return np.stack([_z_expect(psi, q, n) for q in program.observables], axis=-1)


def simulate(program: CircuitProgram, inputs, params) -> np.ndarray:
    """Final state vector(s) for the given inputs and params."""
    angles, single = _prepare(program, inputs, params)
    psi = _forward(program, angles)
    return psi[0] if single else psi


def run(program: CircuitProgram, inputs, params) -> np.ndarray:
    """<Z_q> for each observable q, shape (n_obs,) or (B, n_obs)."""
    angles, single = _prepare(program, inputs, params)
    ev = _expectations(program, _forward(program, angles))
    return ev[0] if single else ev


def _run_angles(program: CircuitProgram, angles: np.ndarray) -> np.ndarray:
    return _expectations(program, _forward(program, angles))


def adjoint_gradient(program: CircuitProgram, inputs, params) -> tuple[np.ndarray, np.ndarray]:
    """Expectations and the full jacobian from one adjoint sweep.

    The jacobian has shape ``(n_obs, n_inputs + n_params)`` (with a leading
    batch axis for batched inputs); columns for slots shared by several gates
    hold the summed contribution of every occurrence.
    """
    angles, single = _prepare(program, inputs, params)
    n = program.n_qubits
    B = angles.shape[0]
    psi = _forward(program, angles)
    ev = _expectations(program, psi)
    K = len(program.observables)
    jac = np.zeros((B, K, program.n_slots))
    if K:
        # one co-state per observable: lam[:, k] = Z_{q_k} psi
        lam = np.empty((B, K, psi.shape[-1]), dtype=np.complex128)
        for k, q in enumerate(program.observables):
            lam[:, k] = _generator(psi, RZ, q, n)
        # gates outside an observable's light cone contribute exactly zero
        cone = program._cone_mask
        for gi in range(len(program.gates) - 1, -1, -1):
            g = program.gates[gi]
            theta = angles[:, gi]
            col = program.slot_column(gi)
            if col is not None:
                gpsi = _generator(psi, g.kind, g.target, n)
                jac[:, :, col] += np.where(cone[:, gi], np.einsum("bkd,bd->bk", lam.conj(), gpsi).imag, 0.0)
            if g.kind == CNOT:
                psi = _cnot(psi, g.control, g.target, n)
                lam = _cnot(lam, g.control, g.target, n)
            else:
                psi = _rotate(psi, g.kind, g.target, n, -theta)
                lam = _rotate(lam, g.kind, g.target, n, -theta)
    if single:
        return ev[0], jac[0]
    return ev, jac


def parameter_shift_gradient(program: CircuitProgram, inputs, params, slot: int) -> np.ndarray:
    """d<Z_q>/d(slot) for every observable via the two-term shift rule.

    ``slot`` indexes the jacobian column space (inputs first, then params).
    Each gate reading the slot is shifted separately and the results summed.
    """
    if not 0 <= slot < program.n_slots:
        raise CircuitError(f"slot {slot} out of range 0..{program.n_slots - 1}")
    angles, single = _prepare(program, inputs, params)
    grad = np.zeros((angles.shape[0], len(program.observables)))
    for gi in range(len(program.gates)):
        if program.slot_column(gi) != slot:
            continue
        plus, minus = angles.copy(), angles.copy()
        plus[:, gi] += np.pi / 2
        minus[:, gi] -= np.pi / 2
        grad += 0.5 * (_run_angles(program, plus) - _run_angles(program, minus))
    return grad[0] if single else grad


def split_jacobian(program: CircuitProgram, jac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split jacobian columns into (d/dinputs, d/dparams)."""
    return jac[..., : program.n_inputs], jac[..., program.n_inputs:]


def state_norm(state: np.ndarray) -> float:
    return float(np.sum(np.abs(state) ** 2))


def random_program(rng: np.random.Generator, n_qubits: int, n_gates: int,
                   n_inputs: int = 2, n_params: int = 3,
                   observables: Optional[Sequence[int]] = None) -> CircuitProgram:
    """Random RY/RZ/CNOT program; slots may be shared between gates."""
    gates: list[GateOp] = []
    for _ in range(n_gates):
        r = rng.random()
        if n_qubits > 1 and r < 0.3:
            c, t = rng.choice(n_qubits, size=2, replace=False)
            gates.append(cnot(int(c), int(t)))
            continue
        kind = RY if rng.random() < 0.6 else RZ
        u = rng.random()
        if u < 0.4 and n_inputs:
            slot: AngleSlot = Encoding(int(rng.integers(n_inputs)))
        elif u < 0.9 and n_params:
            slot = Trainable(int(rng.integers(n_params)))
        else:
            slot = Fixed(float(rng.uniform(-np.pi, np.pi)))
        gates.append(GateOp(kind, int(rng.integers(n_qubits)), angle=slot))
    # renumber so slot indices stay gap-free
    remap = {Encoding: {}, Trainable: {}}
    fixed: list[GateOp] = []
    for g in gates:
        a = g.angle
        if isinstance(a, (Encoding, Trainable)):
            table = remap[type(a)]
            table.setdefault(a.index, len(table))
            g = GateOp(g.kind, g.target, angle=type(a)(table[a.index]))
        fixed.append(g)
    if observables is None:
        k = int(rng.integers(1, n_qubits + 1))
        observables = sorted(int(q) for q in rng.choice(n_qubits, size=k, replace=False))
    return CircuitProgram(n_qubits, tuple(fixed), tuple(observables))
