import json

import numpy as np
import pytest

from grtok.errors import BadMagic, MissingFile, SizeMismatch, VersionUnsupported
from grtok.scenemerge import FlatTokens
from grtok.tokenfile import read_grtt, summarize_grtt, write_grtt


def sample_flat(rng, tokens=7, dim=6, groups=2) -> FlatTokens:
    index = np.zeros((tokens, 4), dtype=np.uint32)
    index[:, 0] = rng.integers(0, groups, tokens)
    index[:, 1] = rng.integers(0, 3, tokens)
    index[:, 2] = rng.integers(0, 50, tokens)
    index[:, 3] = rng.integers(0, 16, tokens)
    return FlatTokens(
        tokens=rng.standard_normal((tokens, dim)).astype(np.float32),
        index=index,
        group_count=groups,
    )


class TestGrttRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        flat = sample_flat(rng)
        path = tmp_path / "out.grtt"
        write_grtt(path, flat)
        back = read_grtt(path)
        np.testing.assert_array_equal(back.tokens, flat.tokens)
        np.testing.assert_array_equal(back.index, flat.index)
        assert back.group_count == flat.group_count

    def test_sidecar_mirrors_index(self, tmp_path, rng):
        flat = sample_flat(rng)
        path = tmp_path / "out.grtt"
        write_grtt(path, flat)
        doc = json.loads((tmp_path / "out.grtt.json").read_text())
        assert doc["token_count"] == flat.token_count
        assert doc["group_count"] == flat.group_count
        assert doc["index"] == [[int(v) for v in row] for row in flat.index]

    def test_deterministic_bytes(self, tmp_path, rng):
        flat = sample_flat(rng)
        write_grtt(tmp_path / "a.grtt", flat)
        write_grtt(tmp_path / "b.grtt", flat)
        assert (tmp_path / "a.grtt").read_bytes() == (tmp_path / "b.grtt").read_bytes()
        assert (tmp_path / "a.grtt.json").read_bytes() == (
            tmp_path / "b.grtt.json"
        ).read_bytes()


class TestGrttErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.grtt"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(BadMagic):
            read_grtt(path)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "x.grtt"
        write_grtt(path, sample_flat(rng))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(SizeMismatch):
            read_grtt(path)

    def test_version(self, tmp_path, rng):
        path = tmp_path / "x.grtt"
        write_grtt(path, sample_flat(rng))
        blob = bytearray(path.read_bytes())
        blob[4] = 9
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionUnsupported):
            read_grtt(path)

    def test_missing(self, tmp_path):
        with pytest.raises(MissingFile):
            read_grtt(tmp_path / "nope.grtt")


class TestSummarize:
    def test_counts(self, tmp_path, rng):
        flat = sample_flat(rng, tokens=10, groups=3)
        path = tmp_path / "out.grtt"
        write_grtt(path, flat)
        summary = summarize_grtt(path)
        assert summary["token_count"] == 10
        assert summary["group_count"] == 3
        assert sum(summary["tokens_per_group"].values()) == 10
        assert sum(summary["kind_histogram"].values()) == 10
