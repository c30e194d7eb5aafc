"""Circuit templates for the patch encoders, phase VQCs and the pure-quantum stack."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .qsim import CircuitProgram, Encoding, Fixed, GateOp, Trainable, cnot, ry, rz


class EncodingStrategy(str, enum.Enum):
    S1 = "s1"  # magnitude only
    S2 = "s2"  # joint magnitude/phase on the same qubit
    S3 = "s3"  # in-phase / quadrature
    S4 = "s4"  # dual path: separate phase VQC
    S5 = "s5"  # pure quantum stack

    @property
    def hybrid(self) -> bool:
        return self in (EncodingStrategy.S1, EncodingStrategy.S2, EncodingStrategy.S3)

    @property
    def uses_phase(self) -> bool:
        return self is not EncodingStrategy.S1


S1_MagnitudeOnly = EncodingStrategy.S1
S2_JointComplex = EncodingStrategy.S2
S3_IQ = EncodingStrategy.S3
S4_DualPath = EncodingStrategy.S4
S5_PureQuantum = EncodingStrategy.S5


class Entanglement(str, enum.Enum):
    CHAIN = "chain"
    RING = "ring"
    PAIRS = "pairs"


@dataclass(frozen=True)
class TemplateSpec:
    n_qubits: int
    n_layers: int
    sublayers_per_layer: int
    entanglement: Entanglement
    ry_rz: bool  # trainable block is RY+RZ (True) or RY only

    @property
    def n_trainable(self) -> int:
        return self.n_qubits * self.n_layers * (2 if self.ry_rz else 1)


PATCH_ENCODER = TemplateSpec(6, 2, 1, Entanglement.CHAIN, ry_rz=False)
DUAL_PHASE_VQC = TemplateSpec(8, 8, 1, Entanglement.RING, ry_rz=True)
PATCH_VQC4 = TemplateSpec(4, 4, 1, Entanglement.RING, ry_rz=True)
REUPLOAD_VQC8 = TemplateSpec(8, 4, 8, Entanglement.PAIRS, ry_rz=True)


def fusion_spec(n_class: int) -> TemplateSpec:
    return TemplateSpec(n_class, 4, math.ceil(16 / n_class), Entanglement.RING, ry_rz=True)


def entangler(n: int, kind: Entanglement) -> list[GateOp]:
    if kind is Entanglement.CHAIN:
        return [cnot(i, i + 1) for i in range(n - 1)]
    if kind is Entanglement.RING:
        if n < 3:
            raise ValueError("ring entanglement needs at least 3 qubits")
        return [cnot(i, (i + 1) % n) for i in range(n)]
    return [cnot(i, i + 1) for i in range(0, n - 1, 2)]


def _trainable_block(n: int, layer: int, ry_rz: bool) -> list[GateOp]:
    """RY (then RZ) per qubit; params numbered layer-major, RY block first."""
    width = 2 * n if ry_rz else n
    base = layer * width
    gates = [ry(i, Trainable(base + i)) for i in range(n)]
    if ry_rz:
        gates += [rz(i, Trainable(base + n + i)) for i in range(n)]
    return gates


def build_patch_encoder(strategy: EncodingStrategy) -> CircuitProgram:
    """6-qubit, two-layer reuploading encoder used per image patch.

    Inputs 0..5 are RY angles (magnitude or I); for S2/S3 inputs 6..11 are
    the paired RZ angles (phase or Q) at the same pixels.
    """
    strategy = EncodingStrategy(strategy)
    if not strategy.hybrid:
        raise ValueError(f"patch encoder supports S1/S2/S3 only, got {strategy.name}")
    spec = PATCH_ENCODER
    n = spec.n_qubits
    gates: list[GateOp] = []
    for layer in range(spec.n_layers):
        for i in range(n):
            gates.append(ry(i, Encoding(i)))
            if strategy is not EncodingStrategy.S1:
                gates.append(rz(i, Encoding(n + i)))
        gates += entangler(n, spec.entanglement)
        gates += _trainable_block(n, layer, spec.ry_rz)
    return CircuitProgram(n, tuple(gates), tuple(range(n)), name=f"patch_encoder_{strategy.value}")


def build_phase_vqc() -> CircuitProgram:
    """8-qubit, 8-layer phase circuit: layer l reads features 8l..8l+7."""
    spec = DUAL_PHASE_VQC
    n = spec.n_qubits
    gates: list[GateOp] = []
    for layer in range(spec.n_layers):
        gates += [ry(i, Encoding(n * layer + i)) for i in range(n)]
        gates += entangler(n, spec.entanglement)
        gates += _trainable_block(n, layer, spec.ry_rz)
    return CircuitProgram(n, tuple(gates), tuple(range(n)), name="dual_phase_vqc")


def build_patch_vqc4() -> CircuitProgram:
    """4-qubit patch circuit re-encoding the same 4 pooled features every layer."""
    spec = PATCH_VQC4
    n = spec.n_qubits
    gates: list[GateOp] = []
    for layer in range(spec.n_layers):
        gates += [ry(i, Encoding(i)) for i in range(n)]
        gates += entangler(n, spec.entanglement)
        gates += _trainable_block(n, layer, spec.ry_rz)
    return CircuitProgram(n, tuple(gates), tuple(range(n)), name="patch_vqc4")


def build_reuploading_vqc8(n_features: int = 64) -> CircuitProgram:
    """8-qubit circuit that re-reads all features in 8 sub-layers per layer."""
    spec = REUPLOAD_VQC8
    n = spec.n_qubits
    if n_features != n * spec.sublayers_per_layer:
        raise ValueError(f"reuploading VQC expects {n * spec.sublayers_per_layer} features")
    gates: list[GateOp] = []
    for layer in range(spec.n_layers):
        for s in range(spec.sublayers_per_layer):
            gates += [ry(i, Encoding(n * s + i)) for i in range(n)]
            gates += entangler(n, spec.entanglement)
        gates += _trainable_block(n, layer, spec.ry_rz)
    return CircuitProgram(n, tuple(gates), tuple(range(n)), name="reupload_vqc8")


def build_fusion_vqc(n_class: int, n_features: int = 16) -> CircuitProgram:
    """n_class-qubit classifier circuit; each qubit's <Z> is one class score.

    Features are consumed in sub-layers of width n_class; slots past the last
    real feature are fixed zero-angle rotations.
    """
    if n_class < 3:
        raise ValueError("fusion VQC needs at least 3 qubits")
    spec = fusion_spec(n_class)
    n = n_class
    n_sub = math.ceil(n_features / n)
    gates: list[GateOp] = []
    for layer in range(spec.n_layers):
        for s in range(n_sub):
            for i in range(n):
                f = n * s + i
                gates.append(ry(i, Encoding(f) if f < n_features else Fixed(0.0)))
            gates += entangler(n, spec.entanglement)
        gates += _trainable_block(n, layer, spec.ry_rz)
    return CircuitProgram(n, tuple(gates), tuple(range(n)), name=f"fusion_vqc{n_class}")
