import json

import numpy as np
import pytest
from click.testing import CliRunner

from grtok.cli import main
from grtok.tokenfile import read_grtt

from conftest import textured_frame, write_png_manifest


@pytest.fixture
def runner():
    return CliRunner()


def static_manifest(tmp_path, rng, frames=6, size=64):
    frame = textured_frame(rng, size, size)
    return write_png_manifest(tmp_path / "clip", [frame] * frames, fps=2)


def synth_spec_file(tmp_path, frames=8, rho=0.1):
    path = tmp_path / "spec.json"
    path.write_text(
        json.dumps(
            {
                "width": 64, "height": 64, "patch_size": 16, "fps": 2, "seed": 5,
                "noise_amplitude": 60,
                "segments": [{"length": frames, "moving_patch_fraction": rho}],
            }
        )
    )
    return path


class TestTokenize:
    def test_static_clip_merges(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out = tmp_path / "tokens.grtt"
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(manifest), "--out", str(out),
             "--max-gop", "3", "--seed", "7"],
        )
        assert result.exit_code == 0, result.output
        assert "after gated pruning" in result.output
        assert out.exists() and (tmp_path / "tokens.grtt.json").exists()
        flat = read_grtt(out)
        # Two identical static scenes merge into one representative token.
        assert flat.group_count == 1
        assert flat.token_count == 1
        # Stage ordering holds: merged <= gated <= baseline.
        gated = int(result.output.split("after gated pruning: ")[1].split(" ")[0])
        baseline = int(result.output.split("baseline tokens: ")[1].split("\n")[0])
        assert flat.token_count <= gated <= baseline

    def test_no_merge_matches_gated_count(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out = tmp_path / "tokens.grtt"
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(manifest), "--out", str(out),
             "--max-gop", "3", "--no-merge"],
        )
        assert result.exit_code == 0, result.output
        gated = int(result.output.split("after gated pruning: ")[1].split(" ")[0])
        assert read_grtt(out).token_count == gated

    def test_all_pass_dense_is_full_baseline(self, tmp_path, rng, runner):
        frames, size = 5, 64
        n = (size // 16) ** 2
        manifest = static_manifest(tmp_path, rng, frames=frames, size=size)
        out = tmp_path / "tokens.grtt"
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(manifest), "--out", str(out),
             "--all-pass", "--placeholder", "dense", "--no-merge"],
        )
        assert result.exit_code == 0, result.output
        assert read_grtt(out).token_count == frames * n

    def test_dump_scenes(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out = tmp_path / "tokens.grtt"
        dump = tmp_path / "scenes.json"
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(manifest), "--out", str(out),
             "--dump-scenes", str(dump)],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(dump.read_text())
        assert doc[0]["start"] == 0
        assert "set_bit_counts" in doc[0]

    def test_missing_manifest_is_data_error(self, tmp_path, runner):
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(tmp_path / "nope.json"),
             "--out", str(tmp_path / "t.grtt")],
        )
        assert result.exit_code == 1
        assert "error [ingest]" in result.output

    def test_config_file_and_flag_precedence(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"tau": 0.5, "seed": 9, "max_gop": 3}))
        out = tmp_path / "t.grtt"
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(manifest), "--out", str(out),
             "--config", str(config), "--tau", "0.8"],
        )
        assert result.exit_code == 0, result.output
        # Flag beats config file; config beats default.
        assert '"tau": 0.8' in result.output
        assert '"seed": 9' in result.output
        assert '"max_gop": 3' in result.output

    def test_determinism_byte_identical(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out_a, out_b = tmp_path / "a.grtt", tmp_path / "b.grtt"
        for out in (out_a, out_b):
            result = runner.invoke(
                main,
                ["tokenize", "--manifest", str(manifest), "--out", str(out),
                 "--seed", "11"],
            )
            assert result.exit_code == 0, result.output
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_threads_flag_same_output(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out_a, out_b = tmp_path / "a.grtt", tmp_path / "b.grtt"
        for out, threads in ((out_a, "1"), (out_b, "3")):
            result = runner.invoke(
                main,
                ["tokenize", "--manifest", str(manifest), "--out", str(out),
                 "--threads", threads, "--max-gop", "2"],
            )
            assert result.exit_code == 0, result.output
        assert out_a.read_bytes() == out_b.read_bytes()


class TestInspect:
    def test_counts_match_tokenize_summary(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out = tmp_path / "t.grtt"
        tok = runner.invoke(
            main, ["tokenize", "--manifest", str(manifest), "--out", str(out)]
        )
        merged = int(tok.output.split("after scene merging: ")[1].split(" ")[0])
        insp = runner.invoke(main, ["inspect", str(out)])
        assert insp.exit_code == 0
        assert f"token_count: {merged}" in insp.output

    def test_json_round_trip(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out = tmp_path / "t.grtt"
        runner.invoke(main, ["tokenize", "--manifest", str(manifest), "--out", str(out)])
        insp = runner.invoke(main, ["inspect", str(out), "--json"])
        assert insp.exit_code == 0
        doc = json.loads(insp.output)
        assert json.loads(json.dumps(doc)) == doc
        assert doc["token_count"] >= 1

    def test_truncated_file_fails(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng)
        out = tmp_path / "t.grtt"
        runner.invoke(main, ["tokenize", "--manifest", str(manifest), "--out", str(out)])
        out.write_bytes(out.read_bytes()[:-3])
        insp = runner.invoke(main, ["inspect", str(out)])
        assert insp.exit_code == 1
        assert "error [inspect]" in insp.output


class TestBench:
    def test_reports_and_figures(self, tmp_path, runner):
        spec = synth_spec_file(tmp_path)
        out_dir = tmp_path / "reports"
        result = runner.invoke(
            main,
            ["bench", "--spec", str(spec), "--fps-list", "0.5,2",
             "--out", str(out_dir), "--format", "csv", "--reps", "3",
             "--seed", "3"],
        )
        assert result.exit_code == 0, result.output
        assert (out_dir / "retention.csv").exists()
        assert (out_dir / "retention.png").exists()
        assert (out_dir / "timing.csv").exists()
        assert (out_dir / "timing.png").exists()
        header = (out_dir / "retention.csv").read_text().splitlines()[0]
        assert header == "fps,baseline,after_pruning,after_merging,pruning_ratio,merging_ratio"
        # PNG magic bytes confirm a real figure was rendered.
        assert (out_dir / "retention.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_default_fps_list_matches_sweep_grid(self, runner):
        from grtok.cli import DEFAULT_FPS_LIST

        assert DEFAULT_FPS_LIST == "0.01,0.1,1"

    def test_empty_fps_list_usage_error(self, tmp_path, runner):
        spec = synth_spec_file(tmp_path)
        result = runner.invoke(
            main,
            ["bench", "--spec", str(spec), "--fps-list", ",",
             "--out", str(tmp_path / "r")],
        )
        assert result.exit_code == 2

    def test_spec_and_manifest_mutually_exclusive(self, tmp_path, rng, runner):
        result = runner.invoke(main, ["bench", "--out", str(tmp_path / "r")])
        assert result.exit_code == 2

    def test_manifest_input_skip_timing(self, tmp_path, rng, runner):
        manifest = static_manifest(tmp_path, rng, frames=4)
        out_dir = tmp_path / "reports"
        result = runner.invoke(
            main,
            ["bench", "--manifest", str(manifest), "--fps-list", "1,2",
             "--out", str(out_dir), "--skip-timing"],
        )
        assert result.exit_code == 0, result.output
        assert (out_dir / "retention.json").exists()
        assert not (out_dir / "timing.json").exists()


class TestSynthAndReconstruct:
    def test_synth_writes_pngs_and_manifest(self, tmp_path, runner):
        spec = synth_spec_file(tmp_path, frames=4)
        out_dir = tmp_path / "clip"
        result = runner.invoke(main, ["synth", "--spec", str(spec), "--out", str(out_dir)])
        assert result.exit_code == 0, result.output
        assert (out_dir / "manifest.json").exists()
        assert (out_dir / "annotation.json").exists()
        assert len(list(out_dir.glob("frame_*.png"))) == 4
        # The generated manifest is itself tokenizable.
        tok = runner.invoke(
            main,
            ["tokenize", "--manifest", str(out_dir / "manifest.json"),
             "--out", str(tmp_path / "t.grtt")],
        )
        assert tok.exit_code == 0, tok.output

    def test_reconstruct_static_clip_exact(self, tmp_path, rng, runner):
        from PIL import Image

        frame = textured_frame(rng, 64, 64)
        manifest = write_png_manifest(tmp_path / "clip", [frame] * 3, fps=2)
        out_dir = tmp_path / "recon"
        result = runner.invoke(
            main, ["reconstruct", "--manifest", str(manifest), "--out", str(out_dir)]
        )
        assert result.exit_code == 0, result.output
        files = sorted(out_dir.glob("recon_*.png"))
        assert len(files) == 3
        for f in files:
            np.testing.assert_array_equal(np.asarray(Image.open(f)), frame)


class TestLogging:
    def test_grt_log_env(self, tmp_path, rng, runner, monkeypatch):
        monkeypatch.setenv("GRT_LOG", "debug")
        manifest = static_manifest(tmp_path, rng, frames=2)
        result = runner.invoke(
            main,
            ["tokenize", "--manifest", str(manifest), "--out", str(tmp_path / "t.grtt")],
        )
        assert result.exit_code == 0
