"""Command-line interface.

Subcommands: tokenize a clip to a GRTT token file, run benchmark sweeps
(reports plus figures), generate synthetic corpora, reconstruct frames from
the pixel-coding representation, and inspect token files.

Exit codes: 0 success, 1 data error, 2 usage error. GRT_LOG (debug, info,
warning, error) controls log verbosity. Flags override config-file values,
which override defaults; the effective configuration is echoed to stderr.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import click
from PIL import Image

from .errors import GrtokError
from .ingest import as_fps, load_frame_sequence
from .pipeline import PipelineConfig, run_pipeline
from .pixelcode import SceneConfig, reconstruct, scene_dump, segment_scenes
from .plots import save_retention_figure, save_timing_figure
from .scenemerge import MergeConfig
from .synthbench import (
    OracleAnnotation,
    SynthSpec,
    emit_report,
    generate_synthetic,
    render_report,
    run_retention_sweep,
    run_timing_sweep,
)
from .tokenfile import summarize_grtt, write_grtt

DEFAULT_FPS_LIST = "0.01,0.1,1"

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    level_name = os.environ.get("GRT_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(name)s: %(message)s")


def _fail(stage: str, exc: GrtokError) -> None:
    click.echo(f"error [{stage}]: {exc}", err=True)
    sys.exit(1)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise click.UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise click.UsageError("config file root must be a JSON object")
    return doc


def _pick(cli_value, file_config: dict, key: str, default):
    if cli_value is not None:
        return cli_value
    if key in file_config:
        return file_config[key]
    return default


def _build_config(
    file_config: dict,
    tau=None,
    delta=None,
    metric=None,
    placeholder=None,
    no_merge=None,
    all_pass=None,
    seed=None,
    threads=None,
    patch_size=None,
    cut_fraction=None,
    max_gop=None,
    embed_dim=None,
    heads=None,
    layers=None,
    weights=None,
) -> PipelineConfig:
    scene = SceneConfig(
        tau=float(_pick(tau, file_config, "tau", 0.9)),
        scene_cut_fraction=float(_pick(cut_fraction, file_config, "cut_fraction", 0.5)),
        max_gop=int(_pick(max_gop, file_config, "max_gop", 300)),
        patch_size=int(_pick(patch_size, file_config, "patch_size", 16)),
    )
    metric_val = _pick(metric, file_config, "metric", "jsd")
    merge = MergeConfig(
        delta=_pick(delta, file_config, "delta", None),
        metric=metric_val,
        codebook_size=int(_pick(None, file_config, "codebook_size", 64)),
        epsilon_floor=float(_pick(None, file_config, "epsilon_floor", 1e-6)),
    )
    return PipelineConfig(
        scene=scene,
        merge=merge,
        embed_dim=int(_pick(embed_dim, file_config, "embed_dim", 64)),
        heads=int(_pick(heads, file_config, "heads", 4)),
        layer_count=int(_pick(layers, file_config, "layers", 2)),
        placeholder_mode=_pick(placeholder, file_config, "placeholder", "masked"),
        weights_path=_pick(weights, file_config, "weights", None),
        seed=int(_pick(seed, file_config, "seed", 42)),
        all_pass=bool(_pick(all_pass if all_pass else None, file_config, "all_pass", False)),
        no_merge=bool(_pick(no_merge if no_merge else None, file_config, "no_merge", False)),
        threads=int(_pick(threads, file_config, "threads", 1)),
    )


def _echo_config(cfg: PipelineConfig) -> None:
    doc = {
        "tau": cfg.scene.tau,
        "cut_fraction": cfg.scene.scene_cut_fraction,
        "max_gop": cfg.scene.max_gop,
        "patch_size": cfg.scene.patch_size,
        "delta": cfg.merge.delta,
        "metric": cfg.merge.metric,
        "codebook_size": cfg.merge.codebook_size,
        "epsilon_floor": cfg.merge.epsilon_floor,
        "embed_dim": cfg.embed_dim,
        "heads": cfg.heads,
        "layers": cfg.layer_count,
        "placeholder": cfg.placeholder_mode,
        "weights": cfg.weights_path,
        "seed": cfg.seed,
        "all_pass": cfg.all_pass,
        "no_merge": cfg.no_merge,
        "threads": cfg.threads,
    }
    click.echo("effective config: " + json.dumps(doc, sort_keys=True), err=True)


def _parse_fps_list(text: str) -> list[Fraction]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise click.UsageError("fps list is empty")
    try:
        return [as_fps(p) for p in parts]
    except (ValueError, ZeroDivisionError) as exc:
        raise click.UsageError(f"bad fps list {text!r}: {exc}")


_common_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON config file; flags override its values."),
    click.option("--tau", type=float, default=None, help="SSIM gate threshold."),
    click.option("--delta", type=float, default=None, help="Scene merge threshold."),
    click.option("--metric", type=click.Choice(["cosine", "jsd"]), default=None),
    click.option("--placeholder", type=click.Choice(["masked", "dense"]), default=None),
    click.option("--no-merge", is_flag=True, default=False, help="Skip scene merging."),
    click.option("--all-pass", is_flag=True, default=False,
                 help="Gate every patch in (ungated baseline)."),
    click.option("--seed", type=int, default=None, help="Single seed for all randomness."),
    click.option("--threads", type=int, default=None, help="Worker thread cap."),
    click.option("--patch-size", type=int, default=None),
    click.option("--cut-fraction", type=float, default=None,
                 help="Changed-patch fraction that starts a new scene."),
    click.option("--max-gop", type=int, default=None, help="Scene length cap in frames."),
    click.option("--embed-dim", type=int, default=None),
    click.option("--heads", type=int, default=None),
    click.option("--layers", type=int, default=None),
    click.option("--weights", type=click.Path(), default=None,
                 help="GRTW weight file (default: seeded weights)."),
]


def common_options(fn):
    for opt in reversed(_common_options):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Gated residual video tokenizer."""
    _setup_logging()


@main.command()
@click.option("--manifest", required=True, type=click.Path(), help="Frame manifest JSON.")
@click.option("--out", required=True, type=click.Path(), help="Output GRTT path.")
@click.option("--dump-scenes", type=click.Path(), default=None,
              help="Also write a per-scene gating summary JSON.")
@common_options
def tokenize(manifest, out, dump_scenes, config_path, **flags) -> None:
    """Tokenize a clip into a GRTT token file."""
    cfg = _build_config(_load_config_file(config_path), **flags)
    _echo_config(cfg)
    try:
        seq = load_frame_sequence(manifest)
    except GrtokError as exc:
        _fail("ingest", exc)
    try:
        result = run_pipeline(seq, cfg)
    except GrtokError as exc:
        _fail("pipeline", exc)
    try:
        write_grtt(out, result.flat)
    except (GrtokError, OSError) as exc:
        _fail("write", exc)
    if dump_scenes:
        Path(dump_scenes).write_text(
            json.dumps(scene_dump(result.scenes, cfg.scene.patch_size), indent=2) + "\n"
        )
    counts = result.counts
    click.echo(f"frames: {seq.frame_count}")
    click.echo(f"scenes: {len(result.scenes)}")
    click.echo(f"baseline tokens: {counts.baseline}")
    click.echo(f"after gated pruning: {counts.gated} (ratio {counts.pruning_ratio:.4f})")
    click.echo(f"after scene merging: {counts.merged} (ratio {counts.merging_ratio:.4f})")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(), default=None,
              help="Synthetic clip spec JSON.")
@click.option("--manifest", type=click.Path(), default=None, help="Frame manifest JSON.")
@click.option("--fps-list", default=DEFAULT_FPS_LIST, show_default=True,
              help="Comma-separated target frame rates.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Report directory.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "md"]), default="json",
              show_default=True)
@click.option("--reps", type=int, default=3, show_default=True,
              help="Timing repetitions (plus one discarded warm-up).")
@click.option("--skip-timing", is_flag=True, default=False,
              help="Only run the retention sweep.")
@common_options
def bench(spec_path, manifest, fps_list, out_dir, fmt, reps, skip_timing,
          config_path, **flags) -> None:
    """Run retention and timing sweeps; write reports and figures."""
    if (spec_path is None) == (manifest is None):
        raise click.UsageError("provide exactly one of --spec or --manifest")
    fps_values = _parse_fps_list(fps_list)
    cfg = _build_config(_load_config_file(config_path), **flags)
    _echo_config(cfg)

    annotation: OracleAnnotation | None = None
    try:
        if spec_path:
            seq, annotation = generate_synthetic(SynthSpec.from_json(spec_path))
        else:
            seq = load_frame_sequence(manifest)
    except GrtokError as exc:
        _fail("ingest", exc)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "md" if fmt == "md" else fmt

    try:
        retention = run_retention_sweep(seq, annotation, fps_values, cfg)
    except GrtokError as exc:
        _fail("retention-sweep", exc)
    emit_report(retention, fmt, out / f"retention.{ext}")
    save_retention_figure(retention, out / "retention.png")
    click.echo(render_report(retention, "md"), nl=False)

    if not skip_timing:
        try:
            timing = run_timing_sweep(seq, fps_values, reps, cfg)
        except GrtokError as exc:
            _fail("timing-sweep", exc)
        emit_report(timing, fmt, out / f"timing.{ext}")
        save_timing_figure(timing, out / "timing.png")
        click.echo(render_report(timing, "md"), nl=False)
    click.echo(f"reports written to {out}")


@main.command()
@click.argument("grtt_path", type=click.Path())
@click.option("--json", "as_json", is_flag=True, default=False,
              help="Machine-readable dump.")
def inspect(grtt_path, as_json) -> None:
    """Print a GRTT file's header and token breakdown."""
    try:
        summary = summarize_grtt(grtt_path)
    except GrtokError as exc:
        _fail("inspect", exc)
    if as_json:
        click.echo(json.dumps(summary, sort_keys=True))
        return
    click.echo(f"embed_dim: {summary['embed_dim']}")
    click.echo(f"token_count: {summary['token_count']}")
    click.echo(f"group_count: {summary['group_count']}")
    click.echo("tokens per group:")
    for g, count in sorted(summary["tokens_per_group"].items()):
        click.echo(f"  group {g}: {count}")
    click.echo("kinds:")
    for kind, count in sorted(summary["kind_histogram"].items()):
        click.echo(f"  {kind}: {count}")


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="Synthetic clip spec JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory for PNG frames, manifest, and annotation.")
def synth(spec_path, out_dir) -> None:
    """Generate a synthetic clip as a PNG sequence plus manifest."""
    try:
        spec = SynthSpec.from_json(spec_path)
        seq, annotation = generate_synthetic(spec)
    except GrtokError as exc:
        _fail("synth", exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(seq.frames):
        name = f"frame_{i:05d}.png"
        pixels = frame.pixels[:, :, 0] if seq.channels == 1 else frame.pixels
        Image.fromarray(pixels).save(out / name)
        names.append(name)
    manifest = {
        "fps": float(seq.native_fps) if seq.native_fps.denominator != 1
        else seq.native_fps.numerator,
        "width": seq.width,
        "height": seq.height,
        "channels": seq.channels,
        "format": "png_sequence",
        "frames": names,
        "frame_count": len(names),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out / "annotation.json").write_text(
        json.dumps(
            {
                "changed": [[int(i) for i in arr] for arr in annotation.changed],
                "segment_bounds": [list(b) for b in annotation.segment_bounds],
            }
        )
        + "\n"
    )
    click.echo(f"wrote {len(names)} frames to {out}")


@main.command("reconstruct")
@click.option("--manifest", required=True, type=click.Path(), help="Frame manifest JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory for reconstructed PNG frames.")
@common_options
def reconstruct_cmd(manifest, out_dir, config_path, **flags) -> None:
    """Reconstruct every frame from the pixel-coding representation."""
    cfg = _build_config(_load_config_file(config_path), **flags)
    _echo_config(cfg)
    try:
        seq = load_frame_sequence(manifest)
        scenes = segment_scenes(seq, cfg.scene)
    except GrtokError as exc:
        _fail("segment", exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for scene in scenes:
        for offset in range(len(scene.residuals) + 1):
            frame = reconstruct(scene, offset)
            idx = scene.start_index + offset
            pixels = frame.pixels[:, :, 0] if seq.channels == 1 else frame.pixels
            Image.fromarray(pixels).save(out / f"recon_{idx:05d}.png")
            written += 1
    click.echo(f"wrote {written} reconstructed frames to {out}")


if __name__ == "__main__":
    main()
