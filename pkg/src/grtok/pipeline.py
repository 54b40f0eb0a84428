"""End-to-end orchestration: segment, gate-tokenize, merge, flatten.

Shared by the CLI and the benchmark sweeps so both measure exactly the same
pipeline.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDims
from .ingest import FrameSequence, extract_patches
from .pixelcode import GateMask, Scene, SceneConfig, segment_scenes
from .scenemerge import (
    Codebook,
    FlatTokens,
    MergeConfig,
    MergedSceneTokens,
    build_codebook,
    flatten_tokens,
    merge_pass,
    wrap_scene,
)
from .tokenizer import (
    SceneTokens,
    TokenizerWeights,
    assemble_and_encode,
    count_tokens,
    init_weights_seeded,
    load_weights,
)

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Everything needed to run the full tokenization pipeline."""

    scene: SceneConfig = field(default_factory=SceneConfig)
    merge: MergeConfig = field(default_factory=MergeConfig)
    embed_dim: int = 64
    heads: int = 4
    layer_count: int = 2
    placeholder_mode: str = "masked"
    weights_path: str | None = None
    seed: int = 42
    all_pass: bool = False
    no_merge: bool = False
    threads: int = 1


@dataclass
class StageCounts:
    """Token counts after each pipeline stage."""

    baseline: int
    gated: int
    merged: int

    @property
    def pruning_ratio(self) -> float:
        return self.gated / self.baseline if self.baseline else 0.0

    @property
    def merging_ratio(self) -> float:
        return self.merged / self.baseline if self.baseline else 0.0


@dataclass
class PipelineResult:
    scenes: list[Scene]
    scene_tokens: list[SceneTokens]
    groups: list[MergedSceneTokens]
    flat: FlatTokens
    counts: StageCounts
    codebook: Codebook | None


def patch_count_for(seq: FrameSequence, patch_size: int) -> int:
    return (seq.width // patch_size) * (seq.height // patch_size)


def build_pipeline_weights(cfg: PipelineConfig, seq: FrameSequence) -> TokenizerWeights:
    """Load GRTW weights or seed fresh ones, and validate against the video."""
    n = patch_count_for(seq, cfg.scene.patch_size)
    patch_dim = cfg.scene.patch_size**2 * seq.channels
    if cfg.weights_path:
        w = load_weights(cfg.weights_path)
        if w.patch_count != n or w.patch_dim != patch_dim:
            raise InvalidDims(
                f"weights expect N={w.patch_count}, patch_dim={w.patch_dim}; "
                f"video implies N={n}, patch_dim={patch_dim}"
            )
        return w
    return init_weights_seeded(
        embed_dim=cfg.embed_dim,
        heads=cfg.heads,
        layer_count=cfg.layer_count,
        patch_size=cfg.scene.patch_size,
        channels=seq.channels,
        patch_count=n,
        seed=cfg.seed,
    )


def scene_masks(scene: Scene, n: int, all_pass: bool = False) -> list[GateMask]:
    """Per-frame gate masks of a scene, key frame first (all ones)."""
    if all_pass:
        return [
            GateMask(bits=np.ones(n, dtype=np.uint8), frame_index=scene.start_index + i)
            for i in range(scene.frame_count)
        ]
    masks = [GateMask(bits=np.ones(n, dtype=np.uint8), frame_index=scene.start_index)]
    masks.extend(r.mask for r in scene.residuals)
    return masks


def tokenize_scene(
    seq: FrameSequence,
    scene: Scene,
    weights: TokenizerWeights,
    placeholder_mode: str,
    all_pass: bool = False,
    patch_size: int | None = None,
) -> SceneTokens:
    """Gate-tokenize one scene of a sequence."""
    ps = patch_size if patch_size is not None else weights_patch_size(weights, seq)
    frames = seq.frames[scene.start_index : scene.end_index + 1]
    grids = [extract_patches(f, ps) for f in frames]
    masks = scene_masks(scene, weights.patch_count, all_pass=all_pass)
    st = assemble_and_encode(
        grids,
        masks,
        weights,
        placeholder_mode=placeholder_mode,
        frame_indices=list(range(scene.start_index, scene.end_index + 1)),
    )
    st.scene_id = scene.start_index
    return st


def weights_patch_size(weights: TokenizerWeights, seq: FrameSequence) -> int:
    ps2 = weights.patch_dim // seq.channels
    ps = int(round(ps2**0.5))
    if ps * ps != ps2:
        raise InvalidDims(
            f"weights patch_dim {weights.patch_dim} is not square for {seq.channels} channels"
        )
    return ps


def tokenize_scenes(
    seq: FrameSequence,
    scenes: list[Scene],
    cfg: PipelineConfig,
    weights: TokenizerWeights,
) -> list[SceneTokens]:
    """Tokenize all scenes, optionally across a small thread pool.

    Scene outputs are independent, so scheduling cannot change results;
    outputs are collected in scene order.
    """
    def job(scene: Scene) -> SceneTokens:
        return tokenize_scene(
            seq,
            scene,
            weights,
            cfg.placeholder_mode,
            all_pass=cfg.all_pass,
            patch_size=cfg.scene.patch_size,
        )

    if cfg.threads > 1 and len(scenes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(job, scenes))
    return [job(s) for s in scenes]


def merge_scene_tokens(
    scene_tokens: list[SceneTokens], cfg: PipelineConfig
) -> tuple[list[MergedSceneTokens], Codebook | None]:
    """Merge pass over tokenized scenes; builds the codebook when needed.

    The codebook size is clamped down to the available key-token count so
    short clips do not fail outright; the clamp is logged.
    """
    if cfg.no_merge:
        return [wrap_scene(st) for st in scene_tokens], None
    codebook = None
    if cfg.merge.metric == "jsd":
        key_vectors = np.concatenate([st.key_set.vectors for st in scene_tokens], axis=0)
        k = cfg.merge.codebook_size
        if key_vectors.shape[0] < k:
            logger.warning(
                "clamping codebook size %d to %d available key tokens",
                k,
                key_vectors.shape[0],
            )
            k = key_vectors.shape[0]
        codebook = build_codebook(key_vectors, k, cfg.seed)
    groups = merge_pass(scene_tokens, cfg.merge, codebook)
    return groups, codebook


def run_pipeline(
    seq: FrameSequence,
    cfg: PipelineConfig,
    weights: TokenizerWeights | None = None,
) -> PipelineResult:
    """Segment, tokenize, merge, and flatten one frame sequence."""
    if weights is None:
        weights = build_pipeline_weights(cfg, seq)
    scenes = segment_scenes(seq, cfg.scene)
    scene_tokens = tokenize_scenes(seq, scenes, cfg, weights)
    n = weights.patch_count
    baseline = seq.frame_count * n
    gated = sum(sum(count_tokens(st)) for st in scene_tokens)
    groups, codebook = merge_scene_tokens(scene_tokens, cfg)
    flat = flatten_tokens(groups)
    counts = StageCounts(baseline=baseline, gated=gated, merged=flat.token_count)
    return PipelineResult(
        scenes=scenes,
        scene_tokens=scene_tokens,
        groups=groups,
        flat=flat,
        counts=counts,
        codebook=codebook,
    )
