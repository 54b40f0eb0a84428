"""Semantic token-scene merging.

Adjacent scenes whose key-token sets are semantically close are collapsed
into a single representative token plus the concatenation of their P-token
sets. Two distances are available: cosine between mean embeddings, and
Jensen-Shannon divergence between codebook-quantized token histograms (the
default). Because token embeddings are continuous, the "token distribution"
is realized by quantizing against a seeded k-means codebook built from all
key tokens of the video.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySceneList,
    EmptyTokenSet,
    TooFewTokens,
    ZeroMeanEmbedding,
)
from .tokenizer import SceneTokens, TokenSet

METRIC_COSINE = "cosine"
METRIC_JSD = "jsd"

DEFAULT_DELTA_JSD = 0.1
DEFAULT_DELTA_COSINE = 0.05

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


@dataclass
class Codebook:
    """Seeded k-means centroids used to quantize token embeddings."""

    centroids: np.ndarray  # (K, embed_dim) float64
    seed: int

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


@dataclass
class TokenDistribution:
    """Smoothed histogram of a token set over codebook cells."""

    probs: np.ndarray  # (K,) float64, sums to 1


@dataclass
class MergeConfig:
    """Merging knobs.

    delta: strict divergence threshold; None picks the metric's default
        (0.1 for jsd, 0.05 for cosine).
    metric: "jsd" or "cosine".
    codebook_size: K for the quantization codebook.
    epsilon_floor: additive smoothing for histograms.
    """

    delta: float | None = None
    metric: str = METRIC_JSD
    codebook_size: int = 64
    epsilon_floor: float = 1e-6

    def __post_init__(self):
        if self.metric not in (METRIC_COSINE, METRIC_JSD):
            raise ValueError(f"metric must be 'cosine' or 'jsd', got {self.metric!r}")
        if self.delta is None:
            self.delta = DEFAULT_DELTA_JSD if self.metric == METRIC_JSD else DEFAULT_DELTA_COSINE
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.codebook_size < 2:
            raise ValueError(f"codebook_size must be >= 2, got {self.codebook_size}")
        if self.epsilon_floor < 0:
            raise ValueError(f"epsilon_floor must be >= 0, got {self.epsilon_floor}")


@dataclass
class MergedSceneTokens:
    """A run of one or more merged scenes.

    An unmerged group (one source scene) keeps the scene's full key-token
    set as its representative. A merged group's representative is the single
    ``rep_vector`` token. ``key_sets`` retains every source key set so that
    chained JSD comparisons can histogram the union rather than the single
    representative. P sets stay in (scene order, frame order).
    """

    key_sets: list[TokenSet]
    p_sets: list[TokenSet]
    source_scenes: list[int]
    rep_vector: np.ndarray | None = None

    @property
    def merged(self) -> bool:
        return self.rep_vector is not None

    def representative_mean(self) -> np.ndarray:
        """Mean embedding of the representative (itself, once merged)."""
        if self.rep_vector is not None:
            return self.rep_vector
        return mean_embedding(self.key_sets[0])

    def key_union_vectors(self) -> np.ndarray:
        return np.concatenate([ks.vectors for ks in self.key_sets], axis=0)

    @property
    def representative_count(self) -> int:
        return 1 if self.merged else self.key_sets[0].token_count


@dataclass
class FlatTokens:
    """Final flattened sequence plus its provenance index.

    ``index`` rows are (group, kind, frame, patch) with kind 0 = key token,
    1 = P token, 2 = merged representative. Representative rows carry the
    first source scene's key-frame index and patch 0.
    """

    tokens: np.ndarray  # (T, embed_dim) float32
    index: np.ndarray  # (T, 4) uint32
    group_count: int

    @property
    def token_count(self) -> int:
        return self.tokens.shape[0]


FLAT_KIND_KEY = 0
FLAT_KIND_P = 1
FLAT_KIND_REP = 2


def mean_embedding(ts: TokenSet) -> np.ndarray:
    """Arithmetic mean of a token set's vectors (float64).

    Raises:
        EmptyTokenSet: the set holds no tokens.
    """
    if ts.token_count == 0:
        raise EmptyTokenSet("cannot take the mean of an empty token set")
    return ts.vectors.astype(np.float64).mean(axis=0)


def _cosine_between(mu_a: np.ndarray, mu_b: np.ndarray) -> float:
    na = np.linalg.norm(mu_a)
    nb = np.linalg.norm(mu_b)
    if na == 0.0 or nb == 0.0:
        raise ZeroMeanEmbedding("cosine distance undefined for a zero mean embedding")
    return float(1.0 - np.dot(mu_a, mu_b) / (na * nb))


def cosine_distance(a: TokenSet, b: TokenSet) -> float:
    """1 - cosine similarity between the two sets' mean embeddings, in [0, 2].

    Raises:
        EmptyTokenSet: either set is empty.
        ZeroMeanEmbedding: either mean embedding is the zero vector.
    """
    return _cosine_between(mean_embedding(a), mean_embedding(b))


def build_codebook(all_key_tokens: np.ndarray, k: int, seed: int) -> Codebook:
    """Seeded k-means over token vectors.

    Initialization is k-means++ style D^2 sampling driven by the seed, then
    Lloyd iterations capped at 100 with a 1e-6 tolerance on centroid
    movement. Empty clusters keep their previous centroid. Deterministic
    given (inputs, k, seed).

    Raises:
        TooFewTokens: fewer tokens than k.
    """
    vectors = np.asarray(all_key_tokens, dtype=np.float64)
    if vectors.ndim != 2:
        raise DimensionMismatch(f"expected (M, dim) token vectors, got shape {vectors.shape}")
    m = vectors.shape[0]
    if m < k:
        raise TooFewTokens(f"{m} tokens cannot seed a codebook of size {k}")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, vectors.shape[1]), dtype=np.float64)
    centroids[0] = vectors[rng.integers(m)]
    d2 = ((vectors - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            choice = rng.choice(m, p=probs)
        else:
            # All remaining mass sits on already-chosen points (duplicates).
            choice = rng.integers(m)
        centroids[i] = vectors[choice]
        d2 = np.minimum(d2, ((vectors - centroids[i]) ** 2).sum(axis=1))

    for _ in range(KMEANS_MAX_ITER):
        labels = _nearest_centroid(vectors, centroids)
        new_centroids = centroids.copy()
        for j in range(k):
            members = vectors[labels == j]
            if members.shape[0]:
                new_centroids[j] = members.mean(axis=0)
        movement = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if movement < KMEANS_TOL:
            break
    return Codebook(centroids=centroids, seed=seed)


def _nearest_centroid(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Euclidean nearest-centroid labels; ties go to the lowest index."""
    d2 = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def distribution_of_vectors(
    vectors: np.ndarray, cb: Codebook, epsilon_floor: float
) -> TokenDistribution:
    """Smoothed nearest-centroid histogram of raw token vectors."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] == 0:
        raise EmptyTokenSet("cannot histogram an empty token set")
    labels = _nearest_centroid(vectors, cb.centroids)
    counts = np.bincount(labels, minlength=cb.size).astype(np.float64)
    probs = (counts + epsilon_floor) / (counts.sum() + cb.size * epsilon_floor)
    return TokenDistribution(probs=probs)


def token_distribution(ts: TokenSet, cb: Codebook, epsilon_floor: float) -> TokenDistribution:
    """Quantize a token set against the codebook and histogram it.

    Raises:
        EmptyTokenSet: the set holds no tokens.
    """
    if ts.token_count == 0:
        raise EmptyTokenSet("cannot histogram an empty token set")
    return distribution_of_vectors(ts.vectors, cb, epsilon_floor)


def jsd(p: TokenDistribution, q: TokenDistribution) -> float:
    """Jensen-Shannon divergence, log base 2, bounded by 1.

    Zero-probability terms contribute zero (0 * log 0 := 0).

    Raises:
        DimensionMismatch: distributions differ in length.
    """
    pp = np.asarray(p.probs, dtype=np.float64)
    qq = np.asarray(q.probs, dtype=np.float64)
    if pp.shape != qq.shape:
        raise DimensionMismatch(f"distribution sizes differ: {pp.shape} vs {qq.shape}")
    m = 0.5 * (pp + qq)

    def kl(a: np.ndarray) -> float:
        mask = a > 0
        return float((a[mask] * np.log2(a[mask] / m[mask])).sum())

    return max(0.0, 0.5 * kl(pp) + 0.5 * kl(qq))


def wrap_scene(st: SceneTokens) -> MergedSceneTokens:
    """Lift a single scene into an unmerged group."""
    return MergedSceneTokens(
        key_sets=[st.key_set],
        p_sets=list(st.p_sets),
        source_scenes=[st.scene_id],
        rep_vector=None,
    )


def merge_pair(s: MergedSceneTokens, t: SceneTokens) -> MergedSceneTokens:
    """Merge scene ``t`` into group ``s``.

    The new representative is the average of the two sides' mean embeddings
    (a merged group's mean is its single representative token). P sets are
    concatenated in order, sources appended.
    """
    mu_s = s.representative_mean()
    mu_t = mean_embedding(t.key_set)
    rep = 0.5 * (mu_s + mu_t)
    return MergedSceneTokens(
        key_sets=s.key_sets + [t.key_set],
        p_sets=s.p_sets + list(t.p_sets),
        source_scenes=s.source_scenes + [t.scene_id],
        rep_vector=rep,
    )


def _group_distance(
    group: MergedSceneTokens, t: SceneTokens, cfg: MergeConfig, cb: Codebook | None
) -> float:
    if cfg.metric == METRIC_COSINE:
        return _cosine_between(group.representative_mean(), mean_embedding(t.key_set))
    if cb is None:
        raise ValueError("jsd merging requires a codebook")
    p = distribution_of_vectors(group.key_union_vectors(), cb, cfg.epsilon_floor)
    q = token_distribution(t.key_set, cb, cfg.epsilon_floor)
    return jsd(p, q)


def merge_pass(
    scenes: list[SceneTokens], cfg: MergeConfig, cb: Codebook | None = None
) -> list[MergedSceneTokens]:
    """Single left-to-right pass merging adjacent semantically close scenes.

    The running group absorbs the next scene whenever its distance to the
    group's key representative is strictly below ``cfg.delta``; otherwise
    the group is closed and the scene opens a new one. Temporal order is
    preserved. With delta = 0 nothing ever merges.

    Raises:
        EmptySceneList: no scenes given.
    """
    if not scenes:
        raise EmptySceneList("merge_pass needs at least one scene")
    groups: list[MergedSceneTokens] = []
    current = wrap_scene(scenes[0])
    for t in scenes[1:]:
        d = _group_distance(current, t, cfg, cb)
        if d < cfg.delta:
            current = merge_pair(current, t)
        else:
            groups.append(current)
            current = wrap_scene(t)
    groups.append(current)
    return groups


def flatten_tokens(groups: list[MergedSceneTokens]) -> FlatTokens:
    """Flatten groups into the final token sequence plus provenance index.

    Per group, in temporal order: the representative token(s) first (the
    full key set for unmerged groups, the single merged token otherwise),
    then every P token in stored order.
    """
    vectors: list[np.ndarray] = []
    rows: list[tuple[int, int, int, int]] = []
    for g, group in enumerate(groups):
        if group.merged:
            vectors.append(group.rep_vector.astype(np.float32)[None, :])
            key = group.key_sets[0]
            frame = int(key.frame_indices[0]) if key.token_count else 0
            rows.append((g, FLAT_KIND_REP, frame, 0))
        else:
            key = group.key_sets[0]
            vectors.append(key.vectors)
            for fi, pi in zip(key.frame_indices, key.patch_indices):
                rows.append((g, FLAT_KIND_KEY, int(fi), int(pi)))
        for p_set in group.p_sets:
            if p_set.token_count == 0:
                continue
            vectors.append(p_set.vectors)
            for fi, pi in zip(p_set.frame_indices, p_set.patch_indices):
                rows.append((g, FLAT_KIND_P, int(fi), int(pi)))
    if vectors:
        tokens = np.concatenate(vectors, axis=0).astype(np.float32)
    else:
        tokens = np.zeros((0, 0), dtype=np.float32)
    index = np.asarray(rows, dtype=np.uint32).reshape(len(rows), 4)
    return FlatTokens(tokens=tokens, index=index, group_count=len(groups))
