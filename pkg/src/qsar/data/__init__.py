from .chip import (
    SPLITS, TAG_IQ, TAG_MAG_PHASE, TEST, TRAIN, ChipFormatError, ComplexChip, Manifest,
    ManifestEntry, chip_from_complex, quantize_chip, read_chip, read_manifest,
    read_sarc_planes, wrap_phase, write_chip, write_manifest, write_sarc_planes,
)
from .preprocess import (
    avg_pool, center_crop, from_patches, hybrid_patch_inputs, iq_angles, normalize_magnitude,
    normalize_phase, pooled_patch_magnitudes, pooled_phase_angles, to_iq, to_patches,
    topk_indices, topk_pixels,
)
from .synth import SynthMode, synth_chip, synth_generate, write_dataset
