"""Complex-valued chips, the SARC container format and CSV manifests.

SARC layout (little-endian)::

    b"SARC1" | u32 width | u32 height | u8 tag | plane A | plane B

Planes are row-major float32. Tag 0 stores (magnitude, phase), tag 1 stores
(I, Q). Pre-converted data from other sources (e.g. MSTAR chips exported to
complex arrays) enters through :func:`chip_from_complex`.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SARC_MAGIC = b"SARC1"
TAG_MAG_PHASE = 0
TAG_IQ = 1
CHIP_SIZE = 128

TRAIN = "train"
TEST = "test"
SPLITS = (TRAIN, TEST)

# largest float32 strictly below pi, so stored phases stay in [-pi, pi)
_PI_BELOW = float(np.nextafter(np.float32(np.pi), np.float32(0)))


class ChipFormatError(ValueError):
    pass


def wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Wrap to [-pi, pi)."""
    return (np.asarray(phi, dtype=np.float64) + np.pi) % (2 * np.pi) - np.pi


@dataclass
class ComplexChip:
    magnitude: np.ndarray
    phase: np.ndarray
    label: int = 0
    split: str = TRAIN

    def __post_init__(self):
        self.magnitude = np.asarray(self.magnitude, dtype=np.float64)
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.magnitude.shape != self.phase.shape or self.magnitude.ndim != 2:
            raise ChipFormatError("magnitude and phase must be equal-shape 2-D planes")
        if np.any(self.magnitude < 0):
            raise ChipFormatError("magnitude must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape

    def complex(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)


def chip_from_complex(x: np.ndarray, label: int = 0, split: str = TRAIN) -> ComplexChip:
    """Import hook: build a chip from a complex array a + jb."""
    x = np.asarray(x, dtype=np.complex128)
    return ComplexChip(np.abs(x), wrap_phase(np.angle(x)), label, split)


def quantize_chip(chip: ComplexChip) -> ComplexChip:
    """Round planes to float32 so the in-memory chip equals its SARC file."""
    mag = chip.magnitude.astype(np.float32).astype(np.float64)
    ph = chip.phase.astype(np.float32).astype(np.float64)
    ph = np.where(ph >= np.pi, _PI_BELOW, ph)
    return ComplexChip(mag, ph, chip.label, chip.split)


# ---------------------------------------------------------------------------
# SARC files
# ---------------------------------------------------------------------------

def write_sarc_planes(path, a: np.ndarray, b: np.ndarray, tag: int = TAG_MAG_PHASE) -> None:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ChipFormatError("planes must be equal-shape 2-D arrays")
    if tag not in (TAG_MAG_PHASE, TAG_IQ):
        raise ChipFormatError(f"unknown plane tag {tag}")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(SARC_MAGIC)
        f.write(struct.pack("<IIB", w, h, tag))
        f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def read_sarc_planes(path) -> tuple[int, np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(SARC_MAGIC):
        raise ChipFormatError(f"{path}: bad magic")
    w, h, tag = struct.unpack_from("<IIB", data, len(SARC_MAGIC))
    off = len(SARC_MAGIC) + 9
    n = w * h
    if len(data) != off + 8 * n:
        raise ChipFormatError(f"{path}: expected {off + 8 * n} bytes, found {len(data)}")
    planes = np.frombuffer(data, dtype="<f4", offset=off).astype(np.float64)
    return tag, planes[:n].reshape(h, w), planes[n:].reshape(h, w)


def write_chip(path, chip: ComplexChip) -> None:
    write_sarc_planes(path, chip.magnitude, chip.phase, TAG_MAG_PHASE)


def read_chip(path, label: int = 0, split: str = TRAIN) -> ComplexChip:
    tag, a, b = read_sarc_planes(path)
    if tag == TAG_IQ:
        return chip_from_complex(a + 1j * b, label, split)
    return ComplexChip(a, b, label, split)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str
    label: int
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    class_names: list[str] = field(default_factory=list)
    root: Optional[Path] = None
    chips: Optional[dict[str, ComplexChip]] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.class_names:
            n = max((e.label for e in self.entries), default=-1) + 1
            self.class_names = [f"class_{i}" for i in range(n)]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def validate(self, required=SPLITS) -> None:
        """Labels in range, known splits, every class present in each ``required`` split."""
        for e in self.entries:
            if not 0 <= e.label < self.n_classes:
                raise ValueError(f"label {e.label} out of range for {self.n_classes} classes")
            if e.split not in SPLITS:
                raise ValueError(f"unknown split {e.split!r}")
        for s in required:
            have = {e.label for e in self.entries if e.split == s}
            missing = set(range(self.n_classes)) - have
            if missing:
                raise ValueError(f"split {s!r} has no entries for classes {sorted(missing)}")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def load(self, entry: ManifestEntry) -> ComplexChip:
        if self.chips is not None and entry.path in self.chips:
            return self.chips[entry.path]
        path = Path(entry.path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return read_chip(path, entry.label, entry.split)

    def load_split(self, name: str) -> list[ComplexChip]:
        return [self.load(e) for e in self.split(name)]


def write_manifest(path, manifest: Manifest) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for e in manifest.entries:
            w.writerow([e.path, e.label, e.split])
    (path.parent / "classes.txt").write_text("\n".join(manifest.class_names) + "\n", encoding="utf-8")


def read_manifest(path) -> Manifest:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if rows and set(rows[0]) != {"path", "label", "split"}:
        raise ValueError(f"{path}: header must be path,label,split")
    entries = [ManifestEntry(r["path"], int(r["label"]), r["split"]) for r in rows]
    names_file = path.parent / "classes.txt"
    names = names_file.read_text(encoding="utf-8").split() if names_file.exists() else []
    return Manifest(entries, names, root=path.parent)
