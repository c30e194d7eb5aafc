"""MagQT hybrid, dual-path and pure-quantum models as differentiable pipelines."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import circuits
from .circuits import EncodingStrategy
from .data.chip import ComplexChip
from .data.preprocess import hybrid_patch_inputs, pooled_patch_magnitudes, pooled_phase_angles
from .nn import tensor as T
from .nn.layers import (D_MODEL, N_HEADS, dense, init_layer_norm, init_linear, init_mlp_head,
                        init_transformer_block, mlp_head, norm, transformer_block)
from .nn.quantum import quantum_layer
from .nn.registry import QUANTUM, ParamRegistry
from .nn.tensor import Tensor
from .qsim import CircuitProgram

N_PATCHES = 16
PHASE_PROJ = 32
QUANTUM_INIT = 0.1


class ModelKind(str, enum.Enum):
    HYBRID = "magqt"
    DUALPATH = "dualpath"
    PURE = "pure"


VALID_STRATEGIES = {
    ModelKind.HYBRID: (EncodingStrategy.S1, EncodingStrategy.S2, EncodingStrategy.S3),
    ModelKind.DUALPATH: (EncodingStrategy.S4,),
    ModelKind.PURE: (EncodingStrategy.S5,),
}


@dataclass
class ForwardTrace:
    snapshots: dict[str, np.ndarray] = field(default_factory=dict)

    def record(self, name: str, t) -> None:
        v = t.value if isinstance(t, Tensor) else np.asarray(t)
        self.snapshots[name] = np.array(v, copy=True)


@dataclass
class ModelBundle:
    kind: ModelKind
    strategy: EncodingStrategy
    n_classes: int
    registry: ParamRegistry
    programs: dict[str, CircuitProgram]
    n_heads: int = N_HEADS
    dropout_p: float = 0.1

    def components(self) -> list[str]:
        seen: list[str] = []
        for name in self.registry.names():
            top = name.split(".", 1)[0]
            if top not in seen:
                seen.append(top)
        return seen

    @property
    def supports_ablation(self) -> bool:
        return self.strategy is not EncodingStrategy.S1


def _check_pair(kind: ModelKind, strategy: EncodingStrategy) -> None:
    if strategy not in VALID_STRATEGIES[kind]:
        allowed = "/".join(s.value for s in VALID_STRATEGIES[kind])
        raise ValueError(f"model {kind.value} requires strategy {allowed}, got {strategy.value}")


def _add_angles(reg: ParamRegistry, name: str, prog: CircuitProgram, rng: np.random.Generator):
    reg.add(name, rng.uniform(-QUANTUM_INIT, QUANTUM_INIT, size=prog.n_params), QUANTUM)


def _init_magnitude_path(reg: ParamRegistry, prog: CircuitProgram, rng: np.random.Generator) -> None:
    _add_angles(reg, "patch_encoder.theta", prog, rng)
    init_linear(reg, "patch_encoder.proj", len(prog.observables), D_MODEL, rng)
    reg.add("patch_encoder.cls", rng.normal(0.0, 0.02, size=D_MODEL), "classical")
    reg.add("patch_encoder.pos", rng.normal(0.0, 0.02, size=(N_PATCHES + 1, D_MODEL)), "classical")
    init_transformer_block(reg, "transformer.block", rng)
    init_layer_norm(reg, "transformer.ln_f", D_MODEL)


def build_model(kind, strategy=None, n_classes: int = 3, seed: int = 0,
                dropout_p: float = 0.1) -> ModelBundle:
    kind = ModelKind(kind)
    if strategy is None:
        strategy = VALID_STRATEGIES[kind][0]
    strategy = EncodingStrategy(strategy)
    _check_pair(kind, strategy)
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    rng = np.random.default_rng([seed, 0x1417])
    reg = ParamRegistry()
    programs: dict[str, CircuitProgram] = {}
    if kind is ModelKind.HYBRID:
        programs["patch_encoder"] = circuits.build_patch_encoder(strategy)
        _init_magnitude_path(reg, programs["patch_encoder"], rng)
        init_mlp_head(reg, "head", D_MODEL, n_classes, rng)
    elif kind is ModelKind.DUALPATH:
        programs["patch_encoder"] = circuits.build_patch_encoder(EncodingStrategy.S1)
        programs["phase_vqc"] = circuits.build_phase_vqc()
        _init_magnitude_path(reg, programs["patch_encoder"], rng)
        _add_angles(reg, "phase_vqc.theta", programs["phase_vqc"], rng)
        init_linear(reg, "phase_vqc.proj", len(programs["phase_vqc"].observables), PHASE_PROJ, rng)
        init_mlp_head(reg, "head", D_MODEL + PHASE_PROJ, n_classes, rng)
    else:
        if n_classes < 3:
            raise ValueError("pure-quantum fusion VQC needs n_classes >= 3")
        programs["patch_vqc"] = circuits.build_patch_vqc4()
        programs["global_vqc"] = circuits.build_reuploading_vqc8()
        programs["phase_vqc"] = circuits.build_reuploading_vqc8()
        programs["fusion_vqc"] = circuits.build_fusion_vqc(n_classes)
        for name in ("patch_vqc", "global_vqc", "phase_vqc", "fusion_vqc"):
            _add_angles(reg, f"{name}.theta", programs[name], rng)
    return ModelBundle(kind, strategy, n_classes, reg, programs, dropout_p=dropout_p)


# ---------------------------------------------------------------------------
# features (pure functions of the chip, cacheable across epochs)
# ---------------------------------------------------------------------------

def chip_features(bundle: ModelBundle, chip: ComplexChip, ablate_phase: bool = False) -> dict[str, np.ndarray]:
    if bundle.kind is ModelKind.HYBRID:
        x = hybrid_patch_inputs(chip, bundle.strategy.value)
        if ablate_phase and bundle.strategy is not EncodingStrategy.S1:
            x = x.copy()
            x[:, 6:] = 0.0
        return {"patch": x}
    if bundle.kind is ModelKind.DUALPATH:
        return {"patch": hybrid_patch_inputs(chip, "s1"),
                "phase": pooled_phase_angles(chip, zero_phase=ablate_phase)}
    return {"patch": pooled_patch_magnitudes(chip), "phase": pooled_phase_angles(chip)}


def params_as_constants(bundle: ModelBundle) -> dict[str, Tensor]:
    return T.no_grad_leaves(bundle.registry.values())


def rescale(e) -> Tensor:
    """Map expectations [-1, 1] onto encoding angles [0, pi]."""
    return T.affine(e, np.pi / 2, np.pi / 2)


def _magnitude_path(bundle: ModelBundle, P: Mapping[str, Tensor], patch: np.ndarray,
                    rng, trace: Optional[ForwardTrace]) -> Tensor:
    e = quantum_layer(bundle.programs["patch_encoder"], patch, P["patch_encoder.theta"])
    tok = dense(P, "patch_encoder.proj", e)
    tokens = T.concat([P["patch_encoder.cls"].reshape(1, D_MODEL), tok], axis=0) + P["patch_encoder.pos"]
    h = transformer_block(P, "transformer.block", tokens, bundle.n_heads, bundle.dropout_p, rng)
    h = norm(P, "transformer.ln_f", h)
    cls = h[0]
    if trace is not None:
        trace.record("patch_expectations", e)
        trace.record("tokens", tokens)
        trace.record("cls", cls)
    return cls


def forward_features(bundle: ModelBundle, feats: Mapping[str, np.ndarray],
                     P: Optional[Mapping[str, Tensor]] = None, rng=None,
                     ablate_phase: bool = False, trace: Optional[ForwardTrace] = None) -> Tensor:
    """Logits (hybrid, dual) or Z-scores (pure) from precomputed chip features.

    ``rng`` enables dropout (train mode). For the pure model ``ablate_phase``
    zeroes the phase-VQC features before fusion; the other architectures
    ablate at feature extraction (see :func:`chip_features`).
    """
    if P is None:
        P = params_as_constants(bundle)
    if bundle.kind is ModelKind.HYBRID:
        cls = _magnitude_path(bundle, P, feats["patch"], rng, trace)
        return mlp_head(P, "head", cls)
    if bundle.kind is ModelKind.DUALPATH:
        cls = _magnitude_path(bundle, P, feats["patch"], rng, trace)
        e = quantum_layer(bundle.programs["phase_vqc"], feats["phase"], P["phase_vqc.theta"])
        z_phase = dense(P, "phase_vqc.proj", e)
        fused = T.concat([cls, z_phase], axis=0)
        if trace is not None:
            trace.record("phase_expectations", e)
            trace.record("phase_features", z_phase)
            trace.record("fused", fused)
        return mlp_head(P, "head", fused)
    e = quantum_layer(bundle.programs["patch_vqc"], feats["patch"], P["patch_vqc.theta"])
    z_mag = quantum_layer(bundle.programs["global_vqc"], rescale(e.reshape(-1)), P["global_vqc.theta"])
    if ablate_phase:
        z_phase = Tensor(np.zeros(len(bundle.programs["phase_vqc"].observables)))
    else:
        z_phase = quantum_layer(bundle.programs["phase_vqc"], feats["phase"], P["phase_vqc.theta"])
    fused = T.concat([z_mag, z_phase], axis=0)
    scores = quantum_layer(bundle.programs["fusion_vqc"], rescale(fused), P["fusion_vqc.theta"])
    if trace is not None:
        trace.record("patch_expectations", e)
        trace.record("z_mag", z_mag)
        trace.record("z_phase", z_phase)
        trace.record("fused", fused)
    return scores


def forward(bundle: ModelBundle, chip: ComplexChip, P=None, rng=None, ablate_phase: bool = False,
            trace: Optional[ForwardTrace] = None) -> Tensor:
    feats = chip_features(bundle, chip, ablate_phase)
    return forward_features(bundle, feats, P, rng, ablate_phase, trace)


def forward_hybrid(bundle: ModelBundle, chip: ComplexChip, strategy=None, train_mode: bool = False,
                   rng=None, P=None, ablate_phase: bool = False, trace=None) -> Tensor:
    if bundle.kind is not ModelKind.HYBRID:
        raise ValueError("forward_hybrid needs a hybrid bundle")
    if strategy is not None and EncodingStrategy(strategy) is not bundle.strategy:
        raise ValueError(f"bundle was built for {bundle.strategy.value}, got {strategy}")
    return forward(bundle, chip, P, _train_rng(train_mode, rng), ablate_phase, trace)


def forward_dualpath(bundle: ModelBundle, chip: ComplexChip, train_mode: bool = False,
                     ablate_phase: bool = False, rng=None, P=None, trace=None) -> Tensor:
    if bundle.kind is not ModelKind.DUALPATH:
        raise ValueError("forward_dualpath needs a dual-path bundle")
    return forward(bundle, chip, P, _train_rng(train_mode, rng), ablate_phase, trace)


def forward_pure(bundle: ModelBundle, chip: ComplexChip, ablate_phase: bool = False,
                 P=None, trace=None) -> Tensor:
    if bundle.kind is not ModelKind.PURE:
        raise ValueError("forward_pure needs a pure-quantum bundle")
    return forward(bundle, chip, P, None, ablate_phase, trace)


def _train_rng(train_mode: bool, rng):
    if not train_mode:
        return None
    return rng if rng is not None else np.random.default_rng(0)


def census(bundle: ModelBundle) -> tuple[int, int]:
    return bundle.registry.census()


def census_breakdown(bundle: ModelBundle) -> dict[str, dict[str, int]]:
    out = {}
    for comp in bundle.components():
        out[comp] = {"quantum": bundle.registry.count_prefix(comp, "quantum"),
                     "classical": bundle.registry.count_prefix(comp, "classical")}
    return out


def predict(scores) -> int:
    """argmax with ties to the lowest index."""
    v = scores.value if isinstance(scores, Tensor) else np.asarray(scores)
    return int(np.argmax(v))
