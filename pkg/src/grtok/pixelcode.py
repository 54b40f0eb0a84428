"""Pixel-coding scene representation: SSIM gating, residuals, reconstruction.

A video is split into scenes, each stored as one full key frame plus, for
every following frame, a gate mask saying which patches changed and the
signed pixel deltas for exactly those patches. Gating decisions are made on
luma; deltas are taken on the original (possibly color) pixels so that
reconstruction preserves color.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySequence, OffsetOutOfRange, ShapeMismatch
from .ingest import Frame, FrameSequence, PatchGrid, extract_patches, to_grayscale

# Standard SSIM stabilizers for 8-bit dynamic range.
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


@dataclass
class GateMask:
    """Per-patch change bits for one frame; key frames are all ones."""

    bits: np.ndarray  # (N,) uint8 in {0, 1}
    frame_index: int

    @property
    def set_count(self) -> int:
        return int(self.bits.sum())

    @property
    def set_fraction(self) -> float:
        return float(self.bits.mean())


@dataclass
class Residual:
    """Signed pixel deltas for the gated-in patches of one frame.

    ``deltas`` has shape (set_count, ps, ps, C) with values in [-255, 255];
    ``patch_indices`` lists the grid positions the deltas belong to, in
    ascending order.
    """

    deltas: np.ndarray  # int16
    patch_indices: np.ndarray  # (set_count,) int64
    mask: GateMask


@dataclass
class Scene:
    """One key frame plus the residual chain covering frames
    [start_index, end_index] inclusive.

    ``residuals[i]`` belongs to frame ``start_index + i + 1``, so
    ``len(residuals) == end_index - start_index``.
    """

    key_frame: Frame
    residuals: list[Residual]
    start_index: int
    end_index: int

    @property
    def frame_count(self) -> int:
        return self.end_index - self.start_index + 1


@dataclass
class SceneConfig:
    """Knobs for gating and scene segmentation.

    tau: SSIM threshold; a patch is gated in when its similarity to the
        previous frame's patch falls strictly below tau.
    scene_cut_fraction: fraction of changed patches above which a new scene
        starts (strictly greater).
    max_gop: hard cap on scene length in frames.
    patch_size: square patch side in pixels.
    """

    tau: float = 0.9
    scene_cut_fraction: float = 0.5
    max_gop: int = 300
    patch_size: int = 16

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if not 0.0 < self.scene_cut_fraction <= 1.0:
            raise ValueError(
                f"scene_cut_fraction must be in (0, 1], got {self.scene_cut_fraction}"
            )
        if self.max_gop < 1:
            raise ValueError(f"max_gop must be >= 1, got {self.max_gop}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")


def _ssim_from_flat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SSIM over whole patches, vectorized over the leading axis.

    ``a`` and ``b`` are (N, n_pixels) float64. One statistic per patch: the
    window is the entire patch, with sample (n-1) variance/covariance
    normalization.
    """
    n_pix = a.shape[1]
    mu_a = a.mean(axis=1)
    mu_b = b.mean(axis=1)
    da = a - mu_a[:, None]
    db = b - mu_b[:, None]
    if n_pix > 1:
        norm = 1.0 / (n_pix - 1)
        var_a = (da * da).sum(axis=1) * norm
        var_b = (db * db).sum(axis=1) * norm
        cov = (da * db).sum(axis=1) * norm
    else:
        var_a = np.zeros_like(mu_a)
        var_b = np.zeros_like(mu_b)
        cov = np.zeros_like(mu_a)
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def patch_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity between two single-channel patches.

    Uses one global window covering the whole patch. The result lies in
    [-1, 1], with 1.0 for identical patches.

    Raises:
        ShapeMismatch: patches differ in shape or are not single-channel.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"patch shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 3 and a.shape[2] != 1:
        raise ShapeMismatch(f"patch_ssim needs single-channel patches, got {a.shape[2]}")
    flat_a = a.astype(np.float64).reshape(1, -1)
    flat_b = b.astype(np.float64).reshape(1, -1)
    return float(_ssim_from_flat(flat_a, flat_b)[0])


def compute_gate_mask(
    curr: PatchGrid, prev: PatchGrid, tau: float, is_key: bool = False, frame_index: int = 0
) -> GateMask:
    """Gate bits for one frame: bit n is 1 iff SSIM(curr[n], prev[n]) < tau.

    A similarity exactly equal to tau gates the patch out. Key frames get an
    all-one mask regardless of similarity.

    Raises:
        ShapeMismatch: the two grids do not tile the same geometry.
    """
    if curr.patches.shape != prev.patches.shape:
        raise ShapeMismatch(
            f"grid shapes differ: {curr.patches.shape} vs {prev.patches.shape}"
        )
    n = curr.patch_count
    if is_key:
        return GateMask(bits=np.ones(n, dtype=np.uint8), frame_index=frame_index)
    flat_curr = curr.patches.astype(np.float64).reshape(n, -1)
    flat_prev = prev.patches.astype(np.float64).reshape(n, -1)
    sim = _ssim_from_flat(flat_curr, flat_prev)
    return GateMask(bits=(sim < tau).astype(np.uint8), frame_index=frame_index)


def residual(curr: Frame, prev: Frame, mask: GateMask) -> Residual:
    """Signed deltas (current minus previous) for the gated-in patches.

    Deltas are taken on the original pixels, not luma, so applying them
    reproduces full color. Gated-out patches store nothing.

    Raises:
        ShapeMismatch: frames differ in shape, or the mask length does not
            match the frame's patch count.
    """
    if curr.pixels.shape != prev.pixels.shape:
        raise ShapeMismatch(
            f"frame shapes differ: {curr.pixels.shape} vs {prev.pixels.shape}"
        )
    n = mask.bits.shape[0]
    ps = _patch_size_for(curr, n)
    curr_grid = extract_patches(curr, ps)
    prev_grid = extract_patches(prev, ps)
    selected = np.flatnonzero(mask.bits)
    deltas = curr_grid.patches[selected].astype(np.int16) - prev_grid.patches[
        selected
    ].astype(np.int16)
    return Residual(deltas=deltas, patch_indices=selected, mask=mask)


def _patch_size_for(frame: Frame, patch_count: int) -> int:
    """Recover the square patch size implied by a frame and a patch count."""
    area = frame.width * frame.height
    if patch_count <= 0 or area % patch_count:
        raise ShapeMismatch(
            f"mask length {patch_count} does not tile a {frame.width}x{frame.height} frame"
        )
    ps = math.isqrt(area // patch_count)
    if ps * ps * patch_count != area or frame.width % ps or frame.height % ps:
        raise ShapeMismatch(
            f"mask length {patch_count} does not tile a {frame.width}x{frame.height} frame"
        )
    return ps


def reconstruct(scene: Scene, upto: int) -> Frame:
    """Rebuild the frame at offset ``upto`` within a scene.

    Starts at the key frame and applies the first ``upto`` residuals
    patchwise; offset 0 returns the key frame bit-exactly. The result is
    exact on every patch whose changes were all gated in; pixels are clipped
    to [0, 255] where partial gating left the sum out of range. Timestamps
    are not tracked through residuals; the output carries the key frame's.

    Raises:
        OffsetOutOfRange: upto outside [0, len(scene.residuals)].
    """
    if not 0 <= upto <= len(scene.residuals):
        raise OffsetOutOfRange(
            f"offset {upto} outside [0, {len(scene.residuals)}]"
        )
    canvas = scene.key_frame.pixels.astype(np.int32)
    h, w, c = canvas.shape
    for res in scene.residuals[:upto]:
        if res.patch_indices.size == 0:
            continue
        ps = res.deltas.shape[1]
        gw = w // ps
        for delta, idx in zip(res.deltas, res.patch_indices):
            r = (int(idx) // gw) * ps
            col = (int(idx) % gw) * ps
            canvas[r : r + ps, col : col + ps, :] += delta
    pixels = np.clip(canvas, 0, 255).astype(np.uint8)
    return Frame(pixels=pixels, timestamp=scene.key_frame.timestamp)


def _luma_grid(frame: Frame, patch_size: int) -> PatchGrid:
    gray = to_grayscale(frame) if frame.channels == 3 else frame
    return extract_patches(gray, patch_size)


def segment_scenes(seq: FrameSequence, cfg: SceneConfig) -> list[Scene]:
    """Split a sequence into scenes of one key frame plus residuals.

    Frame 0 opens scene 0 as its key frame. A new scene starts at frame j
    when the changed-patch fraction against frame j-1 exceeds
    ``cfg.scene_cut_fraction``, or when the running scene already holds
    ``cfg.max_gop`` frames. Within a scene, each mask and residual is
    computed against the immediately preceding frame.

    Raises:
        EmptySequence: the sequence holds no frames.
    """
    if seq.frame_count == 0:
        raise EmptySequence("cannot segment an empty sequence")

    luma_grids = [_luma_grid(f, cfg.patch_size) for f in seq.frames]

    scenes: list[Scene] = []
    start = 0
    residuals: list[Residual] = []

    def close(end: int) -> None:
        scenes.append(
            Scene(
                key_frame=seq.frames[start],
                residuals=residuals,
                start_index=start,
                end_index=end,
            )
        )

    for j in range(1, seq.frame_count):
        mask = compute_gate_mask(
            luma_grids[j], luma_grids[j - 1], cfg.tau, frame_index=j
        )
        scene_len = j - start
        if mask.set_fraction > cfg.scene_cut_fraction or scene_len >= cfg.max_gop:
            close(j - 1)
            start = j
            residuals = []
        else:
            residuals.append(residual(seq.frames[j], seq.frames[j - 1], mask))
    close(seq.frame_count - 1)
    return scenes


def scene_dump(scenes: list[Scene], patch_size: int) -> list[dict]:
    """Diagnostic summary: per scene start/end and per-frame set-bit counts.

    The first count in each scene is the key frame's implicit full mask.
    """
    out = []
    for scene in scenes:
        n = (scene.key_frame.width // patch_size) * (scene.key_frame.height // patch_size)
        counts = [n] + [r.mask.set_count for r in scene.residuals]
        out.append(
            {
                "start": scene.start_index,
                "end": scene.end_index,
                "set_bit_counts": counts,
            }
        )
    return out
