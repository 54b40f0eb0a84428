import json

import numpy as np
import pytest

from grtok.errors import (
    AlreadyGrayscale,
    DimensionMismatch,
    IndivisibleDimensions,
    MalformedManifest,
    MissingFile,
    UpsampleRequested,
)
from grtok.ingest import (
    Frame,
    as_fps,
    extract_patches,
    load_frame_sequence,
    reassemble_patches,
    resample_fps,
    to_grayscale,
)

from conftest import make_sequence, textured_frame, write_png_manifest


class TestLoadFrameSequence:
    def test_png_manifest_echo(self, tmp_path, rng):
        arrays = [textured_frame(rng, 224, 224) for _ in range(3)]
        manifest = write_png_manifest(tmp_path, arrays, fps=30)
        seq = load_frame_sequence(manifest)
        assert seq.frame_count == 3
        assert seq.native_fps == as_fps(30)
        assert (seq.width, seq.height, seq.channels) == (224, 224, 3)
        for got, want in zip(seq.frames, arrays):
            np.testing.assert_array_equal(got.pixels, want)

    def test_missing_frame_file(self, tmp_path, rng):
        manifest = write_png_manifest(tmp_path, [textured_frame(rng, 16, 16)])
        doc = json.loads(manifest.read_text())
        doc["frames"].append("does_not_exist.png")
        doc["frame_count"] = 2
        manifest.write_text(json.dumps(doc))
        with pytest.raises(MissingFile):
            load_frame_sequence(manifest)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_frame_sequence(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(MalformedManifest):
            load_frame_sequence(path)

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"fps": 30}))
        with pytest.raises(MalformedManifest):
            load_frame_sequence(path)

    def test_decoded_size_disagrees(self, tmp_path, rng):
        manifest = write_png_manifest(tmp_path, [textured_frame(rng, 16, 16)])
        doc = json.loads(manifest.read_text())
        doc["width"] = 32
        manifest.write_text(json.dumps(doc))
        with pytest.raises(DimensionMismatch):
            load_frame_sequence(manifest)

    def test_raw_rgb24_byte_arithmetic(self, tmp_path, rng):
        # 224 x 224 x 3 x 10 bytes declared as 10 frames.
        frame_count, w, h = 10, 224, 224
        blob = rng.integers(0, 256, size=frame_count * w * h * 3, dtype=np.int64).astype(
            np.uint8
        )
        (tmp_path / "frames.rgb").write_bytes(blob.tobytes())
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps(
                {
                    "fps": 10,
                    "width": w,
                    "height": h,
                    "channels": 3,
                    "format": "raw_rgb24",
                    "raw_path": "frames.rgb",
                    "frame_count": frame_count,
                }
            )
        )
        seq = load_frame_sequence(manifest)
        assert seq.frame_count == frame_count
        assert all(f.pixels.shape == (h, w, 3) for f in seq.frames)
        # The blob round-trips bit-exactly into frames.
        expected = blob.reshape(frame_count, h, w, 3)
        np.testing.assert_array_equal(seq.frames[7].pixels, expected[7])

    def test_raw_blob_wrong_size(self, tmp_path):
        (tmp_path / "frames.rgb").write_bytes(b"\x00" * 100)
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps(
                {
                    "fps": 10,
                    "width": 16,
                    "height": 16,
                    "channels": 3,
                    "format": "raw_rgb24",
                    "raw_path": "frames.rgb",
                    "frame_count": 2,
                }
            )
        )
        with pytest.raises(DimensionMismatch):
            load_frame_sequence(manifest)

    def test_unknown_format(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            json.dumps(
                {"fps": 1, "width": 8, "height": 8, "channels": 3, "format": "mp4"}
            )
        )
        with pytest.raises(MalformedManifest):
            load_frame_sequence(manifest)


class TestResampleFps:
    def test_30fps_to_1fps(self, rng):
        seq = make_sequence([textured_frame(rng, 16, 16) for _ in range(60)], fps=30)
        out = resample_fps(seq, 1)
        assert out.frame_count == 2
        np.testing.assert_array_equal(out.frames[0].pixels, seq.frames[0].pixels)
        np.testing.assert_array_equal(out.frames[1].pixels, seq.frames[30].pixels)
        assert out.native_fps == as_fps(1)

    def test_identity_at_native(self, rng):
        seq = make_sequence([textured_frame(rng, 16, 16) for _ in range(5)], fps=30)
        out = resample_fps(seq, 30)
        assert out.frame_count == 5
        for a, b in zip(out.frames, seq.frames):
            np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_60s_at_point1_fps(self, rng):
        # 30 fps, 1800 frames (60 s), target 0.1 fps -> 6 frames.
        seq = make_sequence(
            [np.full((8, 8, 3), i % 256, dtype=np.uint8) for i in range(1800)], fps=30
        )
        out = resample_fps(seq, "0.1")
        assert out.frame_count == 6
        # Exact decimal handling: kept indices are 0, 300, ..., 1500.
        assert [int(f.pixels[0, 0, 0]) for f in out.frames] == [
            i % 256 for i in range(0, 1800, 300)
        ]

    def test_upsample_rejected(self, rng):
        seq = make_sequence([textured_frame(rng, 8, 8)], fps=10)
        with pytest.raises(UpsampleRequested):
            resample_fps(seq, 20)

    def test_composition_on_even_divisors(self, rng):
        seq = make_sequence(
            [np.full((8, 8, 3), i % 256, dtype=np.uint8) for i in range(120)], fps=60
        )
        via = resample_fps(resample_fps(seq, 30), 10)
        direct = resample_fps(seq, 10)
        got = [int(f.pixels[0, 0, 0]) for f in via.frames]
        want = [int(f.pixels[0, 0, 0]) for f in direct.frames]
        assert got == want


class TestToGrayscale:
    def test_pure_white(self):
        frame = Frame(np.full((4, 4, 3), 255, dtype=np.uint8))
        assert to_grayscale(frame).pixels[0, 0, 0] == pytest.approx(255.0, abs=1e-3)

    def test_pure_red(self):
        pixels = np.zeros((4, 4, 3), dtype=np.uint8)
        pixels[:, :, 0] = 255
        # 0.299 * 255, hand-evaluated.
        assert to_grayscale(Frame(pixels)).pixels[0, 0, 0] == pytest.approx(
            76.245, abs=1e-3
        )

    def test_pure_black(self):
        frame = Frame(np.zeros((4, 4, 3), dtype=np.uint8))
        assert to_grayscale(frame).pixels[0, 0, 0] == 0.0

    def test_already_grayscale(self):
        frame = Frame(np.zeros((4, 4, 1), dtype=np.uint8))
        with pytest.raises(AlreadyGrayscale):
            to_grayscale(frame)

    def test_range_preserved(self, rng):
        frame = Frame(rng.integers(0, 256, (32, 32, 3), dtype=np.int64).astype(np.uint8))
        luma = to_grayscale(frame).pixels
        assert luma.shape == (32, 32, 1)
        assert luma.min() >= 0.0 and luma.max() <= 255.0


class TestExtractPatches:
    def test_224_by_16_grid(self, rng):
        frame = Frame(textured_frame(rng, 224, 224))
        grid = extract_patches(frame, 16)
        assert (grid.grid_w, grid.grid_h) == (14, 14)
        assert grid.patch_count == 196

    def test_identity_tiling(self, rng):
        pixels = textured_frame(rng, 16, 16)
        grid = extract_patches(Frame(pixels), 16)
        assert grid.patch_count == 1
        np.testing.assert_array_equal(grid.patches[0], pixels)

    def test_roundtrip(self, rng):
        pixels = textured_frame(rng, 32, 32)
        grid = extract_patches(Frame(pixels), 16)
        assert grid.patch_count == 4
        np.testing.assert_array_equal(reassemble_patches(grid), pixels)

    def test_row_major_order(self):
        pixels = np.arange(4 * 4 * 1, dtype=np.uint8).reshape(4, 4, 1)
        grid = extract_patches(Frame(pixels), 2)
        # Patch 1 is the top-right 2x2 block.
        np.testing.assert_array_equal(grid.patches[1][:, :, 0], [[2, 3], [6, 7]])

    def test_indivisible(self, rng):
        with pytest.raises(IndivisibleDimensions):
            extract_patches(Frame(textured_frame(rng, 20, 20)), 16)

    def test_roundtrip_various_sizes(self, rng):
        for h, w, ps in [(48, 96, 16), (24, 24, 8), (8, 40, 4)]:
            pixels = textured_frame(rng, h, w)
            grid = extract_patches(Frame(pixels), ps)
            np.testing.assert_array_equal(reassemble_patches(grid), pixels)


class TestFpsParsing:
    def test_decimal_strings_are_exact(self):
        from fractions import Fraction

        assert as_fps("0.1") == Fraction(1, 10)
        assert as_fps(0.01) == Fraction(1, 100)
        assert as_fps(30) == Fraction(30)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            as_fps(0)
        with pytest.raises(ValueError):
            as_fps(-1)
