"""Chip preprocessing: crop, patching, normalization to angles, top-k, pooling."""
from __future__ import annotations

import numpy as np

from .chip import ComplexChip

ROI = 64
PATCH = 16
GRID = ROI // PATCH
TOP_K = 6


def center_crop(chip: ComplexChip, size: int = ROI) -> tuple[np.ndarray, np.ndarray]:
    """Central size x size window of both planes."""
    h, w = chip.shape
    if h < size or w < size:
        raise ValueError(f"chip {chip.shape} smaller than crop {size}")
    r0, c0 = (h - size) // 2, (w - size) // 2
    sl = (slice(r0, r0 + size), slice(c0, c0 + size))
    return chip.magnitude[sl], chip.phase[sl]


def to_patches(plane: np.ndarray, patch: int = PATCH) -> np.ndarray:
    """(H, W) -> (n_patches, patch, patch), row-major over the grid."""
    h, w = plane.shape
    gh, gw = h // patch, w // patch
    return plane.reshape(gh, patch, gw, patch).transpose(0, 2, 1, 3).reshape(gh * gw, patch, patch)


def from_patches(patches: np.ndarray) -> np.ndarray:
    n, p, _ = patches.shape
    g = int(round(np.sqrt(n)))
    return patches.reshape(g, g, p, p).transpose(0, 2, 1, 3).reshape(g * p, g * p)


def normalize_magnitude(roi: np.ndarray) -> np.ndarray:
    """Per-chip max normalization to [0, 1], scaled to angles in [0, pi]."""
    m = float(np.max(roi)) if roi.size else 0.0
    if m <= 0.0:
        return np.zeros_like(roi, dtype=np.float64)
    return np.pi * (roi / m)


def normalize_phase(phase: np.ndarray) -> np.ndarray:
    """[-pi, pi) -> [0, pi) via (phi + pi) / 2."""
    return (np.asarray(phase, dtype=np.float64) + np.pi) / 2.0


def to_iq(mag: np.ndarray, phase: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return mag * np.cos(phase), mag * np.sin(phase)


def iq_angles(mag: np.ndarray, phase: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """I and Q divided by the per-chip max magnitude, scaled by pi."""
    i, q = to_iq(mag, phase)
    m = float(np.max(mag)) if mag.size else 0.0
    if m <= 0.0:
        return np.zeros_like(i), np.zeros_like(q)
    return np.pi * i / m, np.pi * q / m


def topk_indices(values: np.ndarray, k: int = TOP_K) -> np.ndarray:
    """Flat indices of the k largest values; ties go to the lower index."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    return np.argsort(-flat, kind="stable")[:k]


def topk_pixels(patch: np.ndarray, k: int = TOP_K) -> tuple[np.ndarray, np.ndarray]:
    """(values sorted descending, their flat row-major indices)."""
    idx = topk_indices(patch, k)
    return np.asarray(patch, dtype=np.float64).ravel()[idx], idx


def avg_pool(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Non-overlapping block means; the input must tile evenly."""
    h, w = plane.shape
    if h % out_h or w % out_w:
        raise ValueError(f"cannot pool {plane.shape} to {(out_h, out_w)} evenly")
    bh, bw = h // out_h, w // out_w
    return plane.reshape(out_h, bh, out_w, bw).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# per-architecture feature extraction
# ---------------------------------------------------------------------------

def hybrid_patch_inputs(chip: ComplexChip, strategy: str) -> np.ndarray:
    """Encoder angles for the 16 patches, shape (16, 6) for S1 or (16, 12) for S2/S3.

    Columns 0..5 are RY angles (magnitude or I) at the top-6 magnitude pixels;
    columns 6..11 are the RZ angles (phase or Q) at the same pixels.
    """
    mag, ph = center_crop(chip)
    mag_p = to_patches(mag)
    if strategy == "s1":
        ang = to_patches(normalize_magnitude(mag))
        ry_src, rz_src = ang, None
    elif strategy == "s2":
        ry_src, rz_src = to_patches(normalize_magnitude(mag)), to_patches(normalize_phase(ph))
    elif strategy == "s3":
        i_ang, q_ang = iq_angles(mag, ph)
        ry_src, rz_src = to_patches(i_ang), to_patches(q_ang)
    else:
        raise ValueError(f"hybrid strategy must be s1/s2/s3, got {strategy!r}")
    rows = []
    for p in range(mag_p.shape[0]):
        idx = topk_indices(mag_p[p])
        row = [ry_src[p].ravel()[idx]]
        if rz_src is not None:
            row.append(rz_src[p].ravel()[idx])
        rows.append(np.concatenate(row))
    return np.stack(rows)


def pooled_phase_angles(chip: ComplexChip, zero_phase: bool = False) -> np.ndarray:
    """64 pooled phase features mapped to [0, pi]; ablation zeroes the pooled phase first."""
    _, ph = center_crop(chip)
    pooled = avg_pool(ph, 8, 8).ravel()
    if zero_phase:
        pooled = np.zeros_like(pooled)
    return normalize_phase(pooled)


def pooled_patch_magnitudes(chip: ComplexChip) -> np.ndarray:
    """(16, 4): each patch's normalized magnitude angles pooled 2x2."""
    mag, _ = center_crop(chip)
    ang = to_patches(normalize_magnitude(mag))
    return np.stack([avg_pool(p, 2, 2).ravel() for p in ang])
