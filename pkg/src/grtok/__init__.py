"""Gated residual video tokenizer.

Converts high-FPS frame sequences into compact visual token sequences by
skipping static patches before embedding and merging semantically redundant
scenes after, with a benchmark harness for token retention and tokenization
latency across frame rates.
"""

from .errors import GrtokError
from .ingest import (
    Frame,
    FrameSequence,
    PatchGrid,
    as_fps,
    extract_patches,
    load_frame_sequence,
    reassemble_patches,
    resample_fps,
    to_grayscale,
)
from .pipeline import PipelineConfig, PipelineResult, StageCounts, run_pipeline
from .pixelcode import (
    GateMask,
    Residual,
    Scene,
    SceneConfig,
    compute_gate_mask,
    patch_ssim,
    reconstruct,
    residual,
    scene_dump,
    segment_scenes,
)
from .scenemerge import (
    Codebook,
    FlatTokens,
    MergeConfig,
    MergedSceneTokens,
    TokenDistribution,
    build_codebook,
    cosine_distance,
    flatten_tokens,
    jsd,
    mean_embedding,
    merge_pair,
    merge_pass,
    token_distribution,
)
from .synthbench import (
    OracleAnnotation,
    RetentionReport,
    SegmentSpec,
    SynthSpec,
    TimingReport,
    emit_report,
    generate_synthetic,
    run_retention_sweep,
    run_timing_sweep,
)
from .tokenfile import read_grtt, summarize_grtt, write_grtt
from .tokenizer import (
    SceneTokens,
    TokenSet,
    TokenizerWeights,
    assemble_and_encode,
    count_tokens,
    embed_patch,
    init_weights_seeded,
    load_weights,
    save_weights,
)

__version__ = "0.1.0"
