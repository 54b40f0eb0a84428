import json
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from grtok.ingest import Frame, FrameSequence, as_fps


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_sequence(arrays, fps=30) -> FrameSequence:
    """Wrap raw (H, W, C) uint8 arrays into a FrameSequence."""
    fps = as_fps(fps)
    frames = [
        Frame(pixels=np.asarray(a, dtype=np.uint8), timestamp=float(k / fps))
        for k, a in enumerate(arrays)
    ]
    first = frames[0].pixels
    return FrameSequence(
        frames=frames,
        native_fps=fps,
        width=first.shape[1],
        height=first.shape[0],
        channels=first.shape[2],
    )


def write_png_manifest(directory: Path, arrays, fps=30) -> Path:
    """Write frames as PNGs plus a manifest; returns the manifest path."""
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, arr in enumerate(arrays):
        arr = np.asarray(arr, dtype=np.uint8)
        name = f"frame_{i:04d}.png"
        img = arr[:, :, 0] if arr.shape[2] == 1 else arr
        Image.fromarray(img).save(directory / name)
        names.append(name)
    first = np.asarray(arrays[0])
    manifest = {
        "fps": fps,
        "width": first.shape[1],
        "height": first.shape[0],
        "channels": first.shape[2],
        "format": "png_sequence",
        "frames": names,
        "frame_count": len(names),
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def textured_frame(rng, h, w, c=3, lo=60, hi=195) -> np.ndarray:
    """Random textured frame kept clear of the clip limits."""
    return rng.integers(lo, hi + 1, size=(h, w, c), dtype=np.int64).astype(np.uint8)


def flip_patch(pixels: np.ndarray, patch_index: int, patch_size: int, amp: int, rng) -> np.ndarray:
    """Return a copy with one patch perturbed by per-pixel +/-amp flips."""
    out = pixels.copy()
    gw = pixels.shape[1] // patch_size
    r = (patch_index // gw) * patch_size
    c = (patch_index % gw) * patch_size
    signs = rng.integers(0, 2, size=(patch_size, patch_size, 1), dtype=np.int64) * 2 - 1
    region = out[r : r + patch_size, c : c + patch_size, :].astype(np.int64)
    out[r : r + patch_size, c : c + patch_size, :] = np.clip(
        region + signs * amp, 0, 255
    ).astype(np.uint8)
    return out
