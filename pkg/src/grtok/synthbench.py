"""Oracle-annotated synthetic videos and the retention/latency sweeps.

The generator produces dense clips in the spirit of the benchmark harness:
every frame of a segment carries fresh content in a known set of patches,
so recovering the clip requires looking at every frame, and the set of
patches that truly changed between consecutive frames is known exactly.

Construction: each segment owns a fixed background of per-patch constant
base colors overlaid with a fixed low-amplitude dither texture, drawn clear
of the clip limits so a +/-amplitude perturbation never clips. Each
subsequent frame rewrites exactly ceil(rho * N) chosen patches with fresh
sign noise on top of the pristine background. Because a rewrite always
lands relative to the same fixed background, the set of patches differing
from the previous frame is exactly the set rewritten this frame, which is
what the annotation stores. Hard cuts (or the first frame) emit a pristine
new background; their annotation is every patch (or none, for frame 0).

The split into base colors plus dither serves the two detectors: distinct
base colors give each segment's patches a distinct embedding identity
(scene merging has something semantic to separate), while the dither gives
every patch genuine variance, which keeps structural similarity far below
threshold across cuts and perturbations and makes gate masks match the
annotation exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, IoError, NondeterministicOutput
from .ingest import Frame, FrameSequence, as_fps, fps_str, resample_fps
from .pipeline import (
    PipelineConfig,
    build_pipeline_weights,
    patch_count_for,
    run_pipeline,
    tokenize_scene,
)
from .pixelcode import segment_scenes
from .tokenizer import TokenizerWeights

RETENTION_CSV_HEADER = "fps,baseline,after_pruning,after_merging,pruning_ratio,merging_ratio"
TIMING_CSV_HEADER = "fps,full_tokenize_seconds,gated_tokenize_seconds,speedup_percent"


@dataclass
class SegmentSpec:
    """One synthetic segment: length in frames, motion fraction, cut flag."""

    length: int
    moving_patch_fraction: float = 0.0
    cut_before: bool = False


@dataclass
class SynthSpec:
    """Parameters of a synthetic clip; fully determines frames + annotation."""

    width: int
    height: int
    patch_size: int
    fps: Fraction
    segments: list[SegmentSpec]
    noise_amplitude: int = 60
    seed: int = 0
    channels: int = 3
    duration: float | None = None

    def __post_init__(self):
        self.fps = as_fps(self.fps)

    @property
    def frame_count(self) -> int:
        return sum(s.length for s in self.segments)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        """Load a spec from a JSON config file.

        When "segments" is absent, a single segment spanning
        round(duration * fps) frames is built from the top-level
        "moving_patch_fraction" (default 0).
        """
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise InvalidSpec(f"spec file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"spec file is not valid JSON: {exc}") from exc
        try:
            fps = as_fps(doc["fps"])
            segments_doc = doc.get("segments")
            if segments_doc is None:
                duration = float(doc["duration"])
                length = int(round(duration * float(fps)))
                segments = [
                    SegmentSpec(
                        length=length,
                        moving_patch_fraction=float(doc.get("moving_patch_fraction", 0.0)),
                    )
                ]
            else:
                segments = [
                    SegmentSpec(
                        length=int(s["length"]),
                        moving_patch_fraction=float(s.get("moving_patch_fraction", 0.0)),
                        cut_before=bool(s.get("cut_before", False)),
                    )
                    for s in segments_doc
                ]
            return cls(
                width=int(doc["width"]),
                height=int(doc["height"]),
                patch_size=int(doc["patch_size"]),
                fps=fps,
                segments=segments,
                noise_amplitude=int(doc.get("noise_amplitude", 60)),
                seed=int(doc.get("seed", 0)),
                channels=int(doc.get("channels", 3)),
                duration=doc.get("duration"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad synth spec: {exc}") from exc


@dataclass
class OracleAnnotation:
    """Ground truth: per-frame changed patch indices and segment bounds.

    ``changed[t]`` holds the sorted patch indices that differ between frame
    t and frame t-1 (empty for frame 0). ``segment_bounds`` are half-open
    [start, end) frame ranges.
    """

    changed: list[np.ndarray]
    segment_bounds: list[tuple[int, int]]

    def covers(self, frame_count: int) -> bool:
        return len(self.changed) == frame_count


def _validate_spec(spec: SynthSpec) -> None:
    if spec.width < 1 or spec.height < 1 or spec.patch_size < 1:
        raise InvalidSpec("dimensions must be positive")
    if spec.width % spec.patch_size or spec.height % spec.patch_size:
        raise InvalidSpec(
            f"{spec.width}x{spec.height} not divisible by patch size {spec.patch_size}"
        )
    if spec.channels not in (1, 3):
        raise InvalidSpec(f"channels must be 1 or 3, got {spec.channels}")
    if not spec.segments:
        raise InvalidSpec("spec needs at least one segment")
    for i, seg in enumerate(spec.segments):
        if seg.length < 1:
            raise InvalidSpec(f"segment {i} has non-positive length {seg.length}")
        if not 0.0 <= seg.moving_patch_fraction <= 1.0:
            raise InvalidSpec(
                f"segment {i} moving_patch_fraction {seg.moving_patch_fraction} outside [0, 1]"
            )
        if seg.moving_patch_fraction > 0 and spec.noise_amplitude < 1:
            raise InvalidSpec("noise_amplitude must be >= 1 when patches move")
    if spec.noise_amplitude < 0 or spec.noise_amplitude > 255:
        raise InvalidSpec(f"noise_amplitude {spec.noise_amplitude} outside [0, 255]")


# Amplitude of the fixed dither texture baked into every background.
DITHER_AMPLITUDE = 24


def _fresh_background(
    rng: np.random.Generator, gh: int, gw: int, ps: int, channels: int, amp: int,
    avoid: np.ndarray | None,
) -> np.ndarray:
    """Per-patch base colors plus a fixed dither texture, clear of limits.

    When ``avoid`` (the previous canvas) is given, any patch that happens to
    equal its counterpart is redrawn so a hard cut truly changes every patch.
    """
    d = DITHER_AMPLITUDE
    lo = min(amp + d, 127)
    hi = 255 - lo
    while True:
        base = rng.integers(lo, hi + 1, size=(gh, gw, channels), dtype=np.int64)
        base = np.repeat(np.repeat(base, ps, axis=0), ps, axis=1)
        dither = rng.integers(-d, d + 1, size=base.shape, dtype=np.int64)
        frame = np.clip(base + dither, 0, 255).astype(np.uint8)
        if avoid is None:
            return frame
        eq = _equal_patches(frame, avoid, gh, gw, ps)
        if not eq.any():
            return frame


def _equal_patches(a: np.ndarray, b: np.ndarray, gh: int, gw: int, ps: int) -> np.ndarray:
    diff = a != b
    per_patch = diff.reshape(gh, ps, gw, ps, -1).any(axis=(1, 3, 4))
    return ~per_patch.reshape(-1)


def _perturb_patch(
    canvas: np.ndarray, background: np.ndarray, idx: int, gw: int, ps: int,
    amp: int, rng: np.random.Generator,
) -> None:
    """Rewrite one patch as background plus fresh sign noise; guaranteed to
    differ from the canvas' current contents."""
    r = (idx // gw) * ps
    c = (idx % gw) * ps
    region = (slice(r, r + ps), slice(c, c + ps), slice(None))
    base = background[region].astype(np.int64)
    while True:
        signs = rng.integers(0, 2, size=(ps, ps, 1), dtype=np.int64) * 2 - 1
        new = np.clip(base + signs * amp, 0, 255).astype(np.uint8)
        if not np.array_equal(new, canvas[region]):
            canvas[region] = new
            return


def generate_synthetic(spec: SynthSpec) -> tuple[FrameSequence, OracleAnnotation]:
    """Generate a clip plus its exact change annotation. Deterministic."""
    _validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    gh = spec.height // spec.patch_size
    gw = spec.width // spec.patch_size
    n = gh * gw
    ps = spec.patch_size
    amp = int(spec.noise_amplitude)

    frames: list[Frame] = []
    changed: list[np.ndarray] = []
    bounds: list[tuple[int, int]] = []
    canvas: np.ndarray | None = None
    background: np.ndarray | None = None
    t = 0

    for si, seg in enumerate(spec.segments):
        bounds.append((t, t + seg.length))
        move_count = math.ceil(seg.moving_patch_fraction * n)
        seg_start = 0
        if si == 0 or seg.cut_before:
            background = _fresh_background(rng, gh, gw, ps, spec.channels, amp, canvas)
            canvas = background.copy()
            frames.append(_stamp(canvas, t, spec.fps))
            changed.append(
                np.arange(n, dtype=np.int64) if t > 0 else np.empty(0, dtype=np.int64)
            )
            t += 1
            seg_start = 1
        for _ in range(seg_start, seg.length):
            if move_count:
                picks = np.sort(rng.choice(n, size=move_count, replace=False))
                for idx in picks:
                    _perturb_patch(canvas, background, int(idx), gw, ps, amp, rng)
                changed.append(picks.astype(np.int64))
            else:
                changed.append(np.empty(0, dtype=np.int64))
            frames.append(_stamp(canvas, t, spec.fps))
            t += 1

    seq = FrameSequence(
        frames=frames,
        native_fps=spec.fps,
        width=spec.width,
        height=spec.height,
        channels=spec.channels,
    )
    return seq, OracleAnnotation(changed=changed, segment_bounds=bounds)


def _stamp(canvas: np.ndarray, t: int, fps: Fraction) -> Frame:
    return Frame(pixels=canvas.copy(), timestamp=float(Fraction(t) / fps))


# --- reports ----------------------------------------------------------------


@dataclass
class RetentionRow:
    fps: Fraction
    baseline_tokens: int
    after_pruning: int
    after_merging: int

    @property
    def pruning_ratio(self) -> float:
        return self.after_pruning / self.baseline_tokens if self.baseline_tokens else 0.0

    @property
    def merging_ratio(self) -> float:
        return self.after_merging / self.baseline_tokens if self.baseline_tokens else 0.0


@dataclass
class RetentionReport:
    rows: list[RetentionRow] = field(default_factory=list)


@dataclass
class TimingRow:
    fps: Fraction
    full_tokenize_seconds: float
    gated_tokenize_seconds: float

    @property
    def speedup_percent(self) -> float:
        if self.full_tokenize_seconds <= 0:
            return 0.0
        return (
            (self.full_tokenize_seconds - self.gated_tokenize_seconds)
            / self.full_tokenize_seconds
            * 100.0
        )


@dataclass
class TimingReport:
    rows: list[TimingRow] = field(default_factory=list)
    repetitions: int = 0
    environment: str = ""


def run_retention_sweep(
    seq: FrameSequence,
    annotation: OracleAnnotation | None,
    fps_list: list,
    cfg: PipelineConfig,
    weights: TokenizerWeights | None = None,
) -> RetentionReport:
    """Token retention after pruning and after merging, per target FPS.

    The baseline is frames x N (every patch of every frame tokenized). Rows
    come back sorted by FPS ascending. The annotation, when given, is only
    validated for coverage; retention itself is measured from the pipeline.
    """
    if not fps_list:
        raise ValueError("fps_list must not be empty")
    if annotation is not None and not annotation.covers(seq.frame_count):
        raise InvalidSpec(
            f"annotation covers {len(annotation.changed)} frames, sequence has {seq.frame_count}"
        )
    if weights is None:
        weights = build_pipeline_weights(cfg, seq)
    rows = []
    for fps in sorted(as_fps(f) for f in fps_list):
        sub = resample_fps(seq, fps)
        result = run_pipeline(sub, cfg, weights)
        rows.append(
            RetentionRow(
                fps=fps,
                baseline_tokens=result.counts.baseline,
                after_pruning=result.counts.gated,
                after_merging=result.counts.merged,
            )
        )
    return RetentionReport(rows=rows)


def _environment_note() -> str:
    return (
        f"{platform.platform()}; python {platform.python_version()}; "
        f"numpy {np.__version__}; single thread"
    )


def _tokens_digest(token_sets) -> bytes:
    parts = []
    for st in token_sets:
        parts.append(st.key_set.vectors.tobytes())
        for p in st.p_sets:
            parts.append(p.vectors.tobytes())
    return b"".join(parts)


def run_timing_sweep(
    seq: FrameSequence,
    fps_list: list,
    reps: int,
    cfg: PipelineConfig,
    weights: TokenizerWeights | None = None,
) -> TimingReport:
    """Median wall-clock of full vs gated tokenization per target FPS.

    Full = every frame embedded and encoded at all N positions (dense
    placeholder mode, no gating, no SSIM). Gated = scene segmentation with
    SSIM gating plus encoding of gated positions only. One warm-up rep is
    discarded; token outputs must be bit-identical across reps for the
    timing to be accepted.

    Raises:
        NondeterministicOutput: token bytes differed between repetitions.
    """
    if reps < 3:
        raise ValueError(f"reps must be >= 3, got {reps}")
    if not fps_list:
        raise ValueError("fps_list must not be empty")
    if weights is None:
        weights = build_pipeline_weights(cfg, seq)

    rows = []
    for fps in sorted(as_fps(f) for f in fps_list):
        sub = resample_fps(seq, fps)

        def run_gated():
            scenes = segment_scenes(sub, cfg.scene)
            return [
                tokenize_scene(
                    sub, s, weights, cfg.placeholder_mode,
                    all_pass=False, patch_size=cfg.scene.patch_size,
                )
                for s in scenes
            ]

        def run_full():
            return _full_frame_tokenize(sub, cfg.scene.patch_size, weights)

        gated_times, _ = _time_reps(run_gated, reps)
        full_times, _ = _time_reps(run_full, reps)
        rows.append(
            TimingRow(
                fps=fps,
                full_tokenize_seconds=_median(full_times),
                gated_tokenize_seconds=_median(gated_times),
            )
        )
    return TimingReport(rows=rows, repetitions=reps, environment=_environment_note())


def _full_frame_tokenize(seq: FrameSequence, patch_size: int, weights: TokenizerWeights):
    """Ungated baseline: every frame fully embedded and encoded (dense)."""
    from .ingest import extract_patches
    from .pixelcode import GateMask
    from .tokenizer import assemble_and_encode

    n = patch_count_for(seq, patch_size)
    out = []
    for i, frame in enumerate(seq.frames):
        grid = extract_patches(frame, patch_size)
        mask = GateMask(bits=np.ones(n, dtype=np.uint8), frame_index=i)
        out.append(
            assemble_and_encode(
                [grid], [mask], weights, placeholder_mode="dense", frame_indices=[i]
            )
        )
    return out


def _time_reps(fn, reps: int) -> tuple[list[float], bytes]:
    fn()  # warm-up rep, discarded
    times = []
    digest: bytes | None = None
    for _ in range(reps):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
        d = _tokens_digest(result)
        if digest is None:
            digest = d
        elif d != digest:
            raise NondeterministicOutput("token outputs differed between repetitions")
    return times, digest or b""


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


# --- emission ----------------------------------------------------------------


def _retention_dict(report: RetentionReport) -> dict:
    return {
        "rows": [
            {
                "fps": fps_str(r.fps),
                "baseline_tokens": r.baseline_tokens,
                "after_pruning": r.after_pruning,
                "after_merging": r.after_merging,
                "pruning_ratio": r.pruning_ratio,
                "merging_ratio": r.merging_ratio,
            }
            for r in report.rows
        ]
    }


def _timing_dict(report: TimingReport) -> dict:
    return {
        "rows": [
            {
                "fps": fps_str(r.fps),
                "full_tokenize_seconds": r.full_tokenize_seconds,
                "gated_tokenize_seconds": r.gated_tokenize_seconds,
                "speedup_percent": r.speedup_percent,
            }
            for r in report.rows
        ],
        "repetitions": report.repetitions,
        "environment": report.environment,
    }


def render_report(report: RetentionReport | TimingReport, fmt: str) -> str:
    """Render a report as json, csv, or a markdown table."""
    is_retention = isinstance(report, RetentionReport)
    if fmt == "json":
        doc = _retention_dict(report) if is_retention else _timing_dict(report)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if is_retention:
            writer.writerow(RETENTION_CSV_HEADER.split(","))
            for r in report.rows:
                writer.writerow(
                    [fps_str(r.fps), r.baseline_tokens, r.after_pruning,
                     r.after_merging, repr(r.pruning_ratio), repr(r.merging_ratio)]
                )
        else:
            writer.writerow(TIMING_CSV_HEADER.split(","))
            for r in report.rows:
                writer.writerow(
                    [fps_str(r.fps), repr(r.full_tokenize_seconds),
                     repr(r.gated_tokenize_seconds), repr(r.speedup_percent)]
                )
        return buf.getvalue()
    if fmt in ("md", "markdown", "markdown-table"):
        if is_retention:
            lines = [
                "| FPS | Baseline | After pruning | After merging | Pruning ratio | Merging ratio |",
                "|---|---|---|---|---|---|",
            ]
            for r in report.rows:
                lines.append(
                    f"| {fps_str(r.fps)} | {r.baseline_tokens} | {r.after_pruning} "
                    f"| {r.after_merging} | {r.pruning_ratio:.4f} | {r.merging_ratio:.4f} |"
                )
        else:
            lines = [
                "| FPS | Full (s) | Gated (s) | Speedup (%) |",
                "|---|---|---|---|",
            ]
            for r in report.rows:
                lines.append(
                    f"| {fps_str(r.fps)} | {r.full_tokenize_seconds:.6f} "
                    f"| {r.gated_tokenize_seconds:.6f} | {r.speedup_percent:.1f} |"
                )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: RetentionReport | TimingReport, fmt: str, path: str | Path) -> Path:
    """Write a report file; json and csv round-trip through the readers."""
    path = Path(path)
    try:
        path.write_text(render_report(report, fmt))
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_retention_report(path: str | Path, fmt: str = "json") -> RetentionReport:
    text = Path(path).read_text()
    rows = []
    if fmt == "json":
        for r in json.loads(text)["rows"]:
            rows.append(
                RetentionRow(
                    fps=as_fps(r["fps"]),
                    baseline_tokens=int(r["baseline_tokens"]),
                    after_pruning=int(r["after_pruning"]),
                    after_merging=int(r["after_merging"]),
                )
            )
    elif fmt == "csv":
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(
                RetentionRow(
                    fps=as_fps(rec["fps"]),
                    baseline_tokens=int(rec["baseline"]),
                    after_pruning=int(rec["after_pruning"]),
                    after_merging=int(rec["after_merging"]),
                )
            )
    else:
        raise ValueError(f"cannot read report format {fmt!r}")
    return RetentionReport(rows=rows)


def read_timing_report(path: str | Path, fmt: str = "json") -> TimingReport:
    text = Path(path).read_text()
    rows = []
    if fmt == "json":
        doc = json.loads(text)
        for r in doc["rows"]:
            rows.append(
                TimingRow(
                    fps=as_fps(r["fps"]),
                    full_tokenize_seconds=float(r["full_tokenize_seconds"]),
                    gated_tokenize_seconds=float(r["gated_tokenize_seconds"]),
                )
            )
        return TimingReport(
            rows=rows,
            repetitions=int(doc.get("repetitions", 0)),
            environment=doc.get("environment", ""),
        )
    if fmt == "csv":
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(
                TimingRow(
                    fps=as_fps(rec["fps"]),
                    full_tokenize_seconds=float(rec["full_tokenize_seconds"]),
                    gated_tokenize_seconds=float(rec["gated_tokenize_seconds"]),
                )
            )
        return TimingReport(rows=rows)
    raise ValueError(f"cannot read report format {fmt!r}")
