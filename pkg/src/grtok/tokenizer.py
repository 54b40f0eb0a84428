"""Gated inter-tokenizer: flattened-conv patch embedding, positional
encoding, and a Transformer encoder applied per frame.

The patch embedding is the non-overlapping convolution of a standard ViT
stem flattened into a single matrix-vector product, so only gated-in
patches pay for embedding. Gated-out positions become zero placeholders
that keep positional indices aligned. Two placeholder modes exist:

* ``masked`` (default): placeholders neither attend nor are attended to.
  Because layer norm and the feed-forward act pointwise and masked rows
  receive zero attention output, the emitted tokens are computed over the
  compacted sequence of gated-in positions only, which is what makes the
  cost grow with moving content instead of frames x patches.
* ``dense``: placeholders participate in attention like any token; with
  all-one masks this mode is exactly a plain full-frame tokenizer.

All matrices are stored float32 (what the GRTW file holds); the forward
math runs in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import (
    BadMagic,
    InvalidDims,
    KeyMaskNotFull,
    MaskLengthMismatch,
    MissingFile,
    ShapeMismatch,
    SizeMismatch,
    VersionUnsupported,
)
from .ingest import PatchGrid
from .pixelcode import GateMask

GRTW_MAGIC = b"GRTW"
GRTW_VERSION = 1

# Feed-forward hidden width is fixed at this multiple of embed_dim; the
# weight-file header does not carry it.
FF_MULT = 4

KIND_KEY = "key"
KIND_P = "p"

PLACEHOLDER_MODES = ("masked", "dense")


@dataclass
class LayerWeights:
    """One encoder layer: attention projections, feed-forward, layer norms.

    Matrices are (out, in) and applied as ``x @ W.T + b``.
    """

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ff1_w: np.ndarray
    ff1_b: np.ndarray
    ff2_w: np.ndarray
    ff2_b: np.ndarray
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray


@dataclass
class TokenizerWeights:
    """Full tokenizer parameter set.

    embed_matrix is (embed_dim, patch_dim) with patch_dim =
    patch_size^2 * channels; its rows are flattened convolution kernels in
    channel-major, row, column order, matching the patch flattening.
    pos_embed is (N, embed_dim), one row per patch position.
    """

    embed_matrix: np.ndarray
    embed_bias: np.ndarray
    pos_embed: np.ndarray
    layers: list[LayerWeights]
    heads: int

    @property
    def embed_dim(self) -> int:
        return self.embed_matrix.shape[0]

    @property
    def patch_dim(self) -> int:
        return self.embed_matrix.shape[1]

    @property
    def patch_count(self) -> int:
        return self.pos_embed.shape[0]

    @property
    def layer_count(self) -> int:
        return len(self.layers)


@dataclass
class TokenSet:
    """Encoder output tokens of one frame, tagged with their provenance.

    KEY sets hold one token per patch position; P sets hold exactly the
    tokens at gated-in positions.
    """

    vectors: np.ndarray  # (k, embed_dim) float32
    frame_indices: np.ndarray  # (k,)
    patch_indices: np.ndarray  # (k,)
    kind: str

    @property
    def token_count(self) -> int:
        return self.vectors.shape[0]


@dataclass
class SceneTokens:
    """Per-scene tokenizer output: the key-token set plus ordered P sets."""

    key_set: TokenSet
    p_sets: list[TokenSet]
    scene_id: int = 0


def _check_dims(embed_dim: int, heads: int, layer_count: int) -> None:
    if embed_dim < 1 or heads < 1 or layer_count < 1:
        raise InvalidDims(
            f"dims must be positive: embed_dim={embed_dim} heads={heads} layers={layer_count}"
        )
    if embed_dim % heads:
        raise InvalidDims(f"embed_dim {embed_dim} not divisible by {heads} heads")


def init_weights_seeded(
    embed_dim: int,
    heads: int,
    layer_count: int,
    patch_size: int,
    channels: int,
    patch_count: int,
    seed: int,
) -> TokenizerWeights:
    """Deterministic pseudo-random weights, a desk-scale stand-in for a
    pretrained stem.

    Matrices are standard-normal draws scaled by 1/sqrt(fan_in); biases are
    zero, layer-norm scales one. The draw order is fixed, so the same seed
    always yields bit-identical weights.

    Raises:
        InvalidDims: embed_dim not divisible by heads, or non-positive dims.
    """
    _check_dims(embed_dim, heads, layer_count)
    if patch_size < 1 or channels < 1 or patch_count < 1:
        raise InvalidDims("patch_size, channels and patch_count must be positive")
    patch_dim = patch_size * patch_size * channels
    rng = np.random.default_rng(seed)

    def draw(rows: int, cols: int, fan_in: int) -> np.ndarray:
        return (rng.standard_normal((rows, cols)) / np.sqrt(fan_in)).astype(np.float32)

    embed_matrix = draw(embed_dim, patch_dim, patch_dim)
    embed_bias = np.zeros(embed_dim, dtype=np.float32)
    pos_embed = draw(patch_count, embed_dim, embed_dim)
    ff_dim = FF_MULT * embed_dim
    layers = []
    for _ in range(layer_count):
        layers.append(
            LayerWeights(
                wq=draw(embed_dim, embed_dim, embed_dim),
                bq=np.zeros(embed_dim, dtype=np.float32),
                wk=draw(embed_dim, embed_dim, embed_dim),
                bk=np.zeros(embed_dim, dtype=np.float32),
                wv=draw(embed_dim, embed_dim, embed_dim),
                bv=np.zeros(embed_dim, dtype=np.float32),
                wo=draw(embed_dim, embed_dim, embed_dim),
                bo=np.zeros(embed_dim, dtype=np.float32),
                ff1_w=draw(ff_dim, embed_dim, embed_dim),
                ff1_b=np.zeros(ff_dim, dtype=np.float32),
                ff2_w=draw(embed_dim, ff_dim, ff_dim),
                ff2_b=np.zeros(embed_dim, dtype=np.float32),
                ln1_scale=np.ones(embed_dim, dtype=np.float32),
                ln1_shift=np.zeros(embed_dim, dtype=np.float32),
                ln2_scale=np.ones(embed_dim, dtype=np.float32),
                ln2_shift=np.zeros(embed_dim, dtype=np.float32),
            )
        )
    return TokenizerWeights(
        embed_matrix=embed_matrix,
        embed_bias=embed_bias,
        pos_embed=pos_embed,
        layers=layers,
        heads=heads,
    )


def _layer_tensors(layer: LayerWeights):
    """Tensors of one layer in GRTW file order."""
    return (
        layer.wq, layer.bq, layer.wk, layer.bk, layer.wv, layer.bv,
        layer.wo, layer.bo, layer.ff1_w, layer.ff1_b, layer.ff2_w,
        layer.ff2_b, layer.ln1_scale, layer.ln1_shift, layer.ln2_scale,
        layer.ln2_shift,
    )


def save_weights(w: TokenizerWeights, path: str | Path) -> None:
    """Write weights in GRTW format (little-endian, float32 tensors).

    Layout: magic "GRTW", u32 version, u32 {embed_dim, patch_dim, N, heads,
    layer_count}, then embed_matrix, embed_bias, pos_embed and per layer
    q/k/v/o matrices+biases, ff1, ff2 matrices+biases, ln1, ln2 scale+shift,
    every tensor row-major float32.
    """
    path = Path(path)
    parts = [GRTW_MAGIC, struct.pack("<6I", GRTW_VERSION, w.embed_dim, w.patch_dim,
                                     w.patch_count, w.heads, w.layer_count)]
    tensors = [w.embed_matrix, w.embed_bias, w.pos_embed]
    for layer in w.layers:
        tensors.extend(_layer_tensors(layer))
    for t in tensors:
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))


def _expected_shapes(embed_dim: int, patch_dim: int, n: int, layer_count: int):
    ff_dim = FF_MULT * embed_dim
    shapes = [(embed_dim, patch_dim), (embed_dim,), (n, embed_dim)]
    per_layer = [
        (embed_dim, embed_dim), (embed_dim,),
        (embed_dim, embed_dim), (embed_dim,),
        (embed_dim, embed_dim), (embed_dim,),
        (embed_dim, embed_dim), (embed_dim,),
        (ff_dim, embed_dim), (ff_dim,),
        (embed_dim, ff_dim), (embed_dim,),
        (embed_dim,), (embed_dim,), (embed_dim,), (embed_dim,),
    ]
    for _ in range(layer_count):
        shapes.extend(per_layer)
    return shapes


def load_weights(path: str | Path) -> TokenizerWeights:
    """Read a GRTW weight file written by :func:`save_weights` (or an
    externally flattened convolution stem).

    Raises:
        MissingFile: the file does not exist.
        BadMagic: not a GRTW file.
        VersionUnsupported: unknown format version.
        SizeMismatch: payload size disagrees with the header.
        InvalidDims: header dimensions are inconsistent.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"weight file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 28:
        raise SizeMismatch(f"file too short for a GRTW header ({len(blob)} bytes)")
    if blob[:4] != GRTW_MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}, expected {GRTW_MAGIC!r}")
    version, embed_dim, patch_dim, n, heads, layer_count = struct.unpack(
        "<6I", blob[4:28]
    )
    if version != GRTW_VERSION:
        raise VersionUnsupported(f"GRTW version {version} unsupported")
    _check_dims(embed_dim, heads, max(layer_count, 1))
    if layer_count < 1 or patch_dim < 1 or n < 1:
        raise InvalidDims("header dims must be positive")

    shapes = _expected_shapes(embed_dim, patch_dim, n, layer_count)
    expected_floats = sum(int(np.prod(s)) for s in shapes)
    payload = blob[28:]
    if len(payload) != expected_floats * 4:
        raise SizeMismatch(
            f"payload is {len(payload)} bytes, header implies {expected_floats * 4}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    tensors = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        tensors.append(flat[offset : offset + count].reshape(shape).copy())
        offset += count

    embed_matrix, embed_bias, pos_embed = tensors[:3]
    layers = []
    for i in range(layer_count):
        chunk = tensors[3 + 16 * i : 3 + 16 * (i + 1)]
        layers.append(LayerWeights(*chunk))
    return TokenizerWeights(
        embed_matrix=embed_matrix,
        embed_bias=embed_bias,
        pos_embed=pos_embed,
        layers=layers,
        heads=heads,
    )


def flatten_patch(patch: np.ndarray) -> np.ndarray:
    """Flatten a (ps, ps, C) patch channel-major, then row, then column."""
    if patch.ndim == 1:
        return patch
    if patch.ndim != 3:
        raise ShapeMismatch(f"expected a (ps, ps, C) patch, got shape {patch.shape}")
    return patch.transpose(2, 0, 1).reshape(-1)


def embed_patch(patch: np.ndarray, gate_bit: int, w: TokenizerWeights) -> np.ndarray:
    """Embed one patch, or return the zero placeholder when gated out.

    Gated-in patches are flattened, normalized to [0, 1], and passed through
    the flattened-convolution linear map. A gated-out patch yields the zero
    vector without its contents ever being read.

    Raises:
        ShapeMismatch: flattened patch length differs from patch_dim.
    """
    if not gate_bit:
        return np.zeros(w.embed_dim, dtype=np.float64)
    flat = flatten_patch(np.asarray(patch)).astype(np.float64)
    if flat.shape[0] != w.patch_dim:
        raise ShapeMismatch(
            f"flattened patch has {flat.shape[0]} values, weights expect {w.patch_dim}"
        )
    return w.embed_matrix.astype(np.float64) @ (flat / 255.0) + w.embed_bias.astype(
        np.float64
    )


def _layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * scale + shift


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _attention(x: np.ndarray, layer: LayerWeights, heads: int) -> np.ndarray:
    k_len, dim = x.shape
    head_dim = dim // heads
    q = x @ layer.wq.T.astype(np.float64) + layer.bq
    k = x @ layer.wk.T.astype(np.float64) + layer.bk
    v = x @ layer.wv.T.astype(np.float64) + layer.bv
    # (heads, k, head_dim)
    q = q.reshape(k_len, heads, head_dim).transpose(1, 0, 2)
    k = k.reshape(k_len, heads, head_dim).transpose(1, 0, 2)
    v = v.reshape(k_len, heads, head_dim).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(head_dim)
    out = _softmax(scores) @ v
    out = out.transpose(1, 0, 2).reshape(k_len, dim)
    return out @ layer.wo.T.astype(np.float64) + layer.bo


def encode_sequence(x: np.ndarray, w: TokenizerWeights) -> np.ndarray:
    """Run the pre-norm Transformer encoder over a (k, embed_dim) sequence.

    Block layout per layer: norm -> attention -> add, norm ->
    feed-forward(GELU) -> add.
    """
    x = x.astype(np.float64)
    for layer in w.layers:
        h = _layer_norm(x, layer.ln1_scale, layer.ln1_shift)
        x = x + _attention(h, layer, w.heads)
        h = _layer_norm(x, layer.ln2_scale, layer.ln2_shift)
        h = _gelu(h @ layer.ff1_w.T.astype(np.float64) + layer.ff1_b)
        x = x + (h @ layer.ff2_w.T.astype(np.float64) + layer.ff2_b)
    return x


def _embed_frame(grid: PatchGrid, bits: np.ndarray, w: TokenizerWeights) -> np.ndarray:
    """Embeddings for all N positions; gated-out rows are zero placeholders.

    Only gated-in patch contents are ever read.
    """
    n = grid.patch_count
    out = np.zeros((n, w.embed_dim), dtype=np.float64)
    selected = np.flatnonzero(bits)
    if selected.size:
        flat = (
            grid.patches[selected]
            .transpose(0, 3, 1, 2)
            .reshape(selected.size, -1)
            .astype(np.float64)
            / 255.0
        )
        if flat.shape[1] != w.patch_dim:
            raise ShapeMismatch(
                f"flattened patch has {flat.shape[1]} values, weights expect {w.patch_dim}"
            )
        out[selected] = flat @ w.embed_matrix.T.astype(np.float64) + w.embed_bias
    return out


def assemble_and_encode(
    grids: list[PatchGrid],
    masks: list[GateMask],
    w: TokenizerWeights,
    placeholder_mode: str = "masked",
    frame_indices: list[int] | None = None,
) -> SceneTokens:
    """Tokenize one scene: embed gated patches, add positions, encode.

    The first grid is the key frame and must carry an all-one mask; its
    entire output becomes the key-token set. Every later frame contributes a
    P set holding exactly the output tokens at its gated-in positions,
    tagged with (frame index, patch index).

    Raises:
        MaskLengthMismatch: mask/grid counts or lengths disagree.
        KeyMaskNotFull: the first mask has a zero bit.
    """
    if placeholder_mode not in PLACEHOLDER_MODES:
        raise ValueError(f"placeholder_mode must be one of {PLACEHOLDER_MODES}")
    if len(grids) != len(masks):
        raise MaskLengthMismatch(
            f"{len(grids)} grids but {len(masks)} masks"
        )
    if not grids:
        raise MaskLengthMismatch("scene has no frames")
    n = w.patch_count
    if frame_indices is None:
        frame_indices = list(range(len(grids)))

    key_set: TokenSet | None = None
    p_sets: list[TokenSet] = []
    pos = w.pos_embed.astype(np.float64)

    for f, (grid, mask) in enumerate(zip(grids, masks)):
        if grid.patch_count != n or mask.bits.shape[0] != n:
            raise MaskLengthMismatch(
                f"frame {f}: grid has {grid.patch_count} patches, mask {mask.bits.shape[0]}, "
                f"weights expect {n}"
            )
        if f == 0 and not mask.bits.all():
            raise KeyMaskNotFull("key frame mask must be all ones")

        selected = np.flatnonzero(mask.bits)
        if placeholder_mode == "dense":
            seq = _embed_frame(grid, mask.bits, w) + pos
            encoded = encode_sequence(seq, w)
            out = encoded[selected]
        else:
            if selected.size:
                flat = (
                    grid.patches[selected]
                    .transpose(0, 3, 1, 2)
                    .reshape(selected.size, -1)
                    .astype(np.float64)
                    / 255.0
                )
                if flat.shape[1] != w.patch_dim:
                    raise ShapeMismatch(
                        f"flattened patch has {flat.shape[1]} values, "
                        f"weights expect {w.patch_dim}"
                    )
                seq = flat @ w.embed_matrix.T.astype(np.float64) + w.embed_bias
                seq = seq + pos[selected]
                out = encode_sequence(seq, w)
            else:
                out = np.zeros((0, w.embed_dim), dtype=np.float64)

        token_set = TokenSet(
            vectors=out.astype(np.float32),
            frame_indices=np.full(selected.size, frame_indices[f], dtype=np.int64),
            patch_indices=selected.astype(np.int64),
            kind=KIND_KEY if f == 0 else KIND_P,
        )
        if f == 0:
            key_set = token_set
        else:
            p_sets.append(token_set)

    assert key_set is not None
    return SceneTokens(key_set=key_set, p_sets=p_sets)


def count_tokens(st: SceneTokens) -> tuple[int, int]:
    """(key token count, total P token count) for one scene."""
    return st.key_set.token_count, sum(p.token_count for p in st.p_sets)
