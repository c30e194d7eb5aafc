"""Synthetic SAR-like chips with controllable class cues.

* ``mag``   - class ``c`` has 1 + 2c scatterers on the patch grid, phase uniform noise.
* ``phase`` - one shared 3-scatterer layout, class-specific planar phase ramps.
* ``both``  - both cues.

Magnitude is the amplitude of the scatterer template plus circular complex
Gaussian clutter 10 dB below the scatterer peak power, so background pixels
are Rayleigh distributed and target pixels Rician.
"""
from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .chip import (CHIP_SIZE, TEST, TRAIN, ComplexChip, Manifest, ManifestEntry,
                   quantize_chip, wrap_phase, write_chip, write_manifest)

SNR_DB = 10.0
BLOB_SIGMA = 5.0       # px
POSE_SHIFT = 2.0       # px, shared by all scatterers of a chip
BLOB_STEP = 2          # extra scatterers per class index
RAMP_SLOPE = 0.05      # rad / px
PHASE_NOISE = 0.5      # rad, before wrapping


class SynthMode(str, enum.Enum):
    MAG = "mag"
    PHASE = "phase"
    BOTH = "both"

    @classmethod
    def parse(cls, s: str) -> "SynthMode":
        aliases = {"mag-discriminative": "mag", "magdiscriminative": "mag",
                   "phase-only": "phase", "phaseonlydiscriminative": "phase", "phase-only-discriminative": "phase"}
        s = s.lower()
        return cls(aliases.get(s, s))


MagDiscriminative = SynthMode.MAG
PhaseOnlyDiscriminative = SynthMode.PHASE
Both = SynthMode.BOTH

_yy, _xx = np.mgrid[0:CHIP_SIZE, 0:CHIP_SIZE].astype(np.float64) - (CHIP_SIZE / 2 - 0.5)


# scatterer sites on the 4x4 patch grid of the central ROI, in a fixed order
_GRID = (-24.0, -8.0, 8.0, 24.0)
_SITE_ORDER = (5, 10, 0, 15, 3, 12, 6, 9, 1, 14, 4, 11, 2, 13, 7, 8)


def class_sites(label: int) -> list[tuple[float, float]]:
    """Scatterer centres of class ``label``: its first 1 + BLOB_STEP*label sites."""
    n = min(1 + int(BLOB_STEP) * label, len(_SITE_ORDER))
    return [(_GRID[k // 4], _GRID[k % 4]) for k in _SITE_ORDER[:n]]


def _blobs(sites, rng: np.random.Generator) -> np.ndarray:
    """Unit-peak Gaussian scatterers at ``sites`` with a shared pose shift."""
    dy, dx = rng.uniform(-POSE_SHIFT, POSE_SHIFT, size=2)
    out = np.zeros((CHIP_SIZE, CHIP_SIZE))
    for cy, cx in sites:
        out += np.exp(-((_yy - cy - dy) ** 2 + (_xx - cx - dx) ** 2) / (2 * BLOB_SIGMA ** 2))
    return out


def _speckle(template: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Amplitude of template plus circular Gaussian clutter SNR_DB below unit peak power."""
    sigma = np.sqrt(0.5 * 10 ** (-SNR_DB / 10))  # per quadrature
    noise = rng.normal(0.0, sigma, size=template.shape) + 1j * rng.normal(0.0, sigma, size=template.shape)
    return np.abs(template + noise)


def _ramp(label: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    theta = np.pi * label / n_classes
    offset = rng.uniform(-0.2, 0.2)
    phi = RAMP_SLOPE * (np.cos(theta) * _xx + np.sin(theta) * _yy) + offset
    return wrap_phase(phi + rng.normal(0.0, PHASE_NOISE, size=phi.shape))


def synth_chip(mode: SynthMode, label: int, n_classes: int, rng: np.random.Generator,
               split: str = TRAIN) -> ComplexChip:
    mode = SynthMode(mode)
    sites = class_sites(label if mode in (SynthMode.MAG, SynthMode.BOTH) else 1)
    mag = _speckle(_blobs(sites, rng), rng)
    if mode is SynthMode.MAG:
        phase = rng.uniform(-np.pi, np.pi, size=mag.shape)
    else:
        phase = _ramp(label, n_classes, rng)
    return quantize_chip(ComplexChip(mag, phase, label, split))


def synth_generate(mode, n_classes: int, n_train: int, n_test: int, seed: int) -> Manifest:
    """Balanced synthetic dataset (labels cycle 0..n-1) held in memory.

    Same arguments give identical chips; :func:`write_dataset` persists them.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    mode = SynthMode.parse(mode) if isinstance(mode, str) else SynthMode(mode)
    rng = np.random.default_rng([seed, 0xDA7A])
    entries: list[ManifestEntry] = []
    chips: dict[str, ComplexChip] = {}
    for split, count in ((TRAIN, n_train), (TEST, n_test)):
        for i in range(count):
            label = i % n_classes
            path = f"{split}/{split}_{i:05d}_c{label}.sarc"
            chips[path] = synth_chip(mode, label, n_classes, rng, split)
            entries.append(ManifestEntry(path, label, split))
    names = [f"{mode.value}_{c}" for c in range(n_classes)]
    return Manifest(entries, names, chips=chips)


def write_dataset(manifest: Manifest, out_dir) -> Path:
    out = Path(out_dir)
    for split in (TRAIN, TEST):
        (out / split).mkdir(parents=True, exist_ok=True)
    for e in manifest.entries:
        write_chip(out / e.path, manifest.load(e))
    path = out / "manifest.csv"
    write_manifest(path, manifest)
    return path
