"""Frame-sequence ingestion: manifests, FPS resampling, color, patching.

Frames enter the pipeline either as a directory of PNG files or as a single
raw RGB24 blob, both described by a small JSON manifest. Pixels are kept as
8-bit integers at rest; grayscale conversion is the promotion point to
floating point for the similarity math downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    AlreadyGrayscale,
    DimensionMismatch,
    IndivisibleDimensions,
    MalformedManifest,
    MissingFile,
    UpsampleRequested,
)

# BT.601 luma weights (R, G, B).
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def as_fps(value: int | float | str | Fraction) -> Fraction:
    """Coerce an FPS value to an exact positive rational.

    Floats go through their shortest decimal repr, so 0.1 means exactly
    1/10 rather than the nearest binary float. This keeps the floor-index
    frame selection in :func:`resample_fps` exact for decimal rates.
    """
    if isinstance(value, Fraction):
        fps = value
    elif isinstance(value, bool):
        raise TypeError("fps cannot be a bool")
    elif isinstance(value, int):
        fps = Fraction(value)
    elif isinstance(value, float):
        fps = Fraction(str(value))
    elif isinstance(value, str):
        fps = Fraction(value)
    else:
        raise TypeError(f"cannot interpret {type(value).__name__} as fps")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return fps


def fps_str(fps: Fraction) -> str:
    """Render an FPS rational compactly ('30', '0.1', '30000/1001')."""
    if fps.denominator == 1:
        return str(fps.numerator)
    as_float = float(fps)
    if as_fps(str(as_float)) == fps:
        return str(as_float)
    return str(fps)


@dataclass
class Frame:
    """One frame: (H, W, C) pixel array plus a capture timestamp in seconds.

    Pixels are uint8 in [0, 255] for ingested frames and float32 in
    [0, 255] for luma frames produced by :func:`to_grayscale`.
    """

    pixels: np.ndarray
    timestamp: float = 0.0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass
class FrameSequence:
    """Ordered frames sharing dimensions, with their native frame rate."""

    frames: list[Frame]
    native_fps: Fraction
    width: int
    height: int
    channels: int

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass
class PatchGrid:
    """Non-overlapping row-major tiling of one frame.

    ``patches`` has shape (N, patch_size, patch_size, C) where patch n
    covers grid cell (n // grid_w, n % grid_w).
    """

    patches: np.ndarray
    grid_w: int
    grid_h: int
    patch_size: int

    @property
    def patch_count(self) -> int:
        return self.patches.shape[0]


def _manifest_int(manifest: dict, key: str) -> int:
    try:
        value = manifest[key]
    except KeyError:
        raise MalformedManifest(f"manifest missing required key {key!r}") from None
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise MalformedManifest(f"manifest key {key!r} must be a positive integer")
    return value


def _decode_png(path: Path, width: int, height: int, channels: int) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(f"frame file not found: {path}")
    with Image.open(path) as img:
        img = img.convert("L" if channels == 1 else "RGB")
        pixels = np.asarray(img, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    if pixels.shape != (height, width, channels):
        raise DimensionMismatch(
            f"{path.name}: decoded {pixels.shape[1]}x{pixels.shape[0]}x{pixels.shape[2]}, "
            f"manifest says {width}x{height}x{channels}"
        )
    return pixels


def load_frame_sequence(manifest_path: str | Path) -> FrameSequence:
    """Load a frame sequence described by a JSON manifest.

    The manifest schema is::

        {
          "fps": number, "width": int, "height": int, "channels": 1|3,
          "format": "png_sequence" | "raw_rgb24",
          "frames": [relative paths]        # png_sequence
          "raw_path": relative path,        # raw_rgb24
          "frame_count": int                # required for raw, checked for png
        }

    Paths are resolved relative to the manifest's directory.

    Raises:
        MissingFile: manifest or any referenced file does not exist.
        MalformedManifest: unparseable JSON or schema violation.
        DimensionMismatch: decoded pixel data disagrees with the manifest.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifest(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise MalformedManifest("manifest root must be a JSON object")

    try:
        fps = as_fps(manifest["fps"])
    except KeyError:
        raise MalformedManifest("manifest missing required key 'fps'") from None
    except (TypeError, ValueError) as exc:
        raise MalformedManifest(f"bad fps value: {exc}") from exc

    width = _manifest_int(manifest, "width")
    height = _manifest_int(manifest, "height")
    channels = _manifest_int(manifest, "channels")
    if channels not in (1, 3):
        raise MalformedManifest(f"channels must be 1 or 3, got {channels}")

    fmt = manifest.get("format")
    base = manifest_path.parent
    frames: list[Frame] = []

    if fmt == "png_sequence":
        paths = manifest.get("frames")
        if not isinstance(paths, list) or not paths:
            raise MalformedManifest("png_sequence manifest needs a non-empty 'frames' list")
        declared = manifest.get("frame_count")
        if declared is not None and declared != len(paths):
            raise MalformedManifest(
                f"frame_count {declared} disagrees with {len(paths)} listed frames"
            )
        for k, rel in enumerate(paths):
            pixels = _decode_png(base / rel, width, height, channels)
            frames.append(Frame(pixels=pixels, timestamp=float(Fraction(k) / fps)))
    elif fmt == "raw_rgb24":
        if channels != 3:
            raise MalformedManifest("raw_rgb24 requires channels = 3")
        rel = manifest.get("raw_path")
        if not isinstance(rel, str):
            raise MalformedManifest("raw_rgb24 manifest needs a 'raw_path' string")
        frame_count = _manifest_int(manifest, "frame_count")
        raw_file = base / rel
        if not raw_file.is_file():
            raise MissingFile(f"raw blob not found: {raw_file}")
        blob = raw_file.read_bytes()
        frame_bytes = width * height * 3
        if len(blob) != frame_bytes * frame_count:
            raise DimensionMismatch(
                f"raw blob is {len(blob)} bytes, expected {frame_bytes * frame_count} "
                f"({frame_count} frames of {width}x{height}x3)"
            )
        data = np.frombuffer(blob, dtype=np.uint8).reshape(frame_count, height, width, 3)
        for k in range(frame_count):
            frames.append(Frame(pixels=data[k].copy(), timestamp=float(Fraction(k) / fps)))
    else:
        raise MalformedManifest(f"unknown format {fmt!r}")

    return FrameSequence(
        frames=frames, native_fps=fps, width=width, height=height, channels=channels
    )


def resample_fps(seq: FrameSequence, target_fps) -> FrameSequence:
    """Downsample a sequence to ``target_fps`` by nearest-previous selection.

    Keeps frames at indices floor(k * native_fps / target_fps) for
    k = 0, 1, ...; no frames are interpolated or fabricated. Resampling to
    the native rate is the identity.

    Raises:
        UpsampleRequested: target rate exceeds the native rate.
    """
    target = as_fps(target_fps)
    if target > seq.native_fps:
        raise UpsampleRequested(
            f"target {fps_str(target)} fps exceeds native {fps_str(seq.native_fps)} fps"
        )
    step = seq.native_fps / target
    kept = []
    k = 0
    while True:
        idx = math.floor(k * step)
        if idx >= seq.frame_count:
            break
        kept.append(seq.frames[idx])
        k += 1
    return FrameSequence(
        frames=kept,
        native_fps=target,
        width=seq.width,
        height=seq.height,
        channels=seq.channels,
    )


def to_grayscale(frame: Frame) -> Frame:
    """Convert an RGB frame to BT.601 luma.

    Output pixels are float32 in [0, 255] with a single channel; this is
    where 8-bit storage is promoted to floating point for the similarity
    math.

    Raises:
        AlreadyGrayscale: input already has a single channel.
    """
    if frame.channels == 1:
        raise AlreadyGrayscale("frame already has a single channel")
    if frame.channels != 3:
        raise DimensionMismatch(f"expected 3 channels, got {frame.channels}")
    weights = np.asarray(LUMA_WEIGHTS, dtype=np.float64)
    luma = frame.pixels.astype(np.float64) @ weights
    luma = np.clip(luma, 0.0, 255.0).astype(np.float32)
    return Frame(pixels=luma[:, :, None], timestamp=frame.timestamp)


def extract_patches(frame: Frame, patch_size: int) -> PatchGrid:
    """Cut a frame into a row-major grid of non-overlapping square patches.

    Raises:
        IndivisibleDimensions: width or height not divisible by patch_size.
    """
    if patch_size <= 0:
        raise IndivisibleDimensions(f"patch_size must be positive, got {patch_size}")
    h, w = frame.height, frame.width
    if h % patch_size or w % patch_size:
        raise IndivisibleDimensions(
            f"{w}x{h} frame is not divisible by patch size {patch_size}"
        )
    gh, gw = h // patch_size, w // patch_size
    c = frame.channels
    patches = (
        frame.pixels.reshape(gh, patch_size, gw, patch_size, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(gh * gw, patch_size, patch_size, c)
    )
    return PatchGrid(patches=patches, grid_w=gw, grid_h=gh, patch_size=patch_size)


def reassemble_patches(grid: PatchGrid) -> np.ndarray:
    """Inverse of :func:`extract_patches`; returns the (H, W, C) pixel array."""
    n, ps, _, c = grid.patches.shape
    gh, gw = grid.grid_h, grid.grid_w
    return (
        grid.patches.reshape(gh, gw, ps, ps, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(gh * ps, gw * ps, c)
    )
