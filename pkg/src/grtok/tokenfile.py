"""GRTT token-sequence files: the handoff boundary of the pipeline.

Binary layout (little-endian): magic "GRTT", u32 version = 1, u32
{embed_dim, token_count, group_count}, float32 token vectors row-major,
then an index table of u32 tuples (group, kind, frame, patch) with kind
0 = key, 1 = P, 2 = merged representative. A JSON sidecar (same path with
".json" appended) mirrors the header and index for inspection.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, MissingFile, SizeMismatch, VersionUnsupported
from .scenemerge import FlatTokens

GRTT_MAGIC = b"GRTT"
GRTT_VERSION = 1
KIND_NAMES = {0: "key", 1: "p", 2: "rep"}


def write_grtt(path: str | Path, flat: FlatTokens, sidecar: bool = True) -> None:
    """Write a flattened token sequence; optionally the JSON sidecar.

    Output bytes are fully determined by the input, so identical pipelines
    produce byte-identical files.
    """
    path = Path(path)
    tokens = np.ascontiguousarray(flat.tokens, dtype="<f4")
    index = np.ascontiguousarray(flat.index, dtype="<u4")
    embed_dim = tokens.shape[1] if tokens.size else 0
    header = GRTT_MAGIC + struct.pack(
        "<4I", GRTT_VERSION, embed_dim, tokens.shape[0], flat.group_count
    )
    path.write_bytes(header + tokens.tobytes() + index.tobytes())
    if sidecar:
        doc = {
            "embed_dim": int(embed_dim),
            "token_count": int(tokens.shape[0]),
            "group_count": int(flat.group_count),
            "index": [[int(v) for v in row] for row in flat.index],
        }
        Path(str(path) + ".json").write_text(
            json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
        )


def read_grtt(path: str | Path) -> FlatTokens:
    """Read a GRTT file back into a FlatTokens value.

    Raises:
        BadMagic: not a GRTT file.
        VersionUnsupported: unknown version.
        SizeMismatch: truncated or oversized payload.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"token file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 20:
        raise SizeMismatch(f"file too short for a GRTT header ({len(blob)} bytes)")
    if blob[:4] != GRTT_MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}, expected {GRTT_MAGIC!r}")
    version, embed_dim, token_count, group_count = struct.unpack("<4I", blob[4:20])
    if version != GRTT_VERSION:
        raise VersionUnsupported(f"GRTT version {version} unsupported")
    token_bytes = token_count * embed_dim * 4
    index_bytes = token_count * 4 * 4
    if len(blob) != 20 + token_bytes + index_bytes:
        raise SizeMismatch(
            f"file is {len(blob)} bytes, header implies {20 + token_bytes + index_bytes}"
        )
    tokens = (
        np.frombuffer(blob, dtype="<f4", count=token_count * embed_dim, offset=20)
        .reshape(token_count, embed_dim)
        .copy()
    )
    index = (
        np.frombuffer(blob, dtype="<u4", count=token_count * 4, offset=20 + token_bytes)
        .reshape(token_count, 4)
        .copy()
    )
    return FlatTokens(tokens=tokens, index=index, group_count=group_count)


def summarize_grtt(path: str | Path) -> dict:
    """Header, per-group token counts, and kind histogram for inspection."""
    flat = read_grtt(path)
    per_group = {int(g): 0 for g in range(flat.group_count)}
    kinds = {"key": 0, "p": 0, "rep": 0}
    for row in flat.index:
        per_group[int(row[0])] = per_group.get(int(row[0]), 0) + 1
        name = KIND_NAMES.get(int(row[1]), "unknown")
        kinds[name] = kinds.get(name, 0) + 1
    return {
        "embed_dim": int(flat.tokens.shape[1] if flat.tokens.size else 0),
        "token_count": int(flat.token_count),
        "group_count": int(flat.group_count),
        "tokens_per_group": per_group,
        "kind_histogram": kinds,
    }
