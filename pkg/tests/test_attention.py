import csv
import json

import numpy as np
import pytest

from btsnet.attention import (
    RECORDS_CSV,
    RECORDS_JSON,
    STATS_JSON,
    SUMMARY_CSV,
    contrast,
    export_attention,
    largest_temporal_dilation,
    timestep_summary,
)
from btsnet.data import SyntheticTaskSpec, generate_clips
from btsnet.network import AttentionMap, NetworkConfig, build_network

SMALL = SyntheticTaskSpec(T=4, H=8, W=8, square=3, seed=2)


def small_net(M=2, fuse="TC"):
    return build_network(NetworkConfig.tiny(M=M, fuse_type=fuse, clip_shape=(4, 8, 8)), seed=1)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_export_files_and_headers(tmp_path):
    net, data = small_net(), generate_clips(SMALL, 1)
    result = export_attention(net, data, tmp_path / "out")
    out = tmp_path / "out"
    assert result["blocks"] == [b.name for b in net.blocks if b.has_tsp]

    records = json.loads((out / RECORDS_JSON).read_text(encoding="utf-8"))
    assert len(records) == len(result["blocks"]) * len(data)
    first = records[0]
    assert set(first) == {"block_id", "sample", "fuse_type", "M", "shape", "weights"}
    assert np.asarray(first["weights"]).shape == tuple(first["shape"])

    rows = read_csv(out / RECORDS_CSV)
    assert list(rows[0]) == ["block_id", "sample", "m", "c", "t", "weight"]
    assert len(rows) == sum(int(np.prod(r["shape"])) for r in records)

    summary = read_csv(out / SUMMARY_CSV)
    assert list(summary[0]) == ["block_id", "sample", "label", "t", "m", "weight"]
    stats = json.loads((out / STATS_JSON).read_text(encoding="utf-8"))
    assert stats["statistics"]["pathway"] == 1


def _summary_sums(rows):
    sums = {}
    for r in rows:
        key = (r["block_id"], r["sample"], r["t"])
        sums[key] = sums.get(key, 0.0) + float(r["weight"])
    return sums


def test_summary_normalised_over_pathways(tmp_path):
    export_attention(small_net(M=4), generate_clips(SMALL, 1), tmp_path)
    sums = _summary_sums(read_csv(tmp_path / SUMMARY_CSV))
    assert max(abs(v - 1.0) for v in sums.values()) <= 1e-9


def test_single_pathway_summary_is_one(tmp_path):
    export_attention(small_net(M=1), generate_clips(SMALL, 1), tmp_path)
    assert {r["weight"] for r in read_csv(tmp_path / SUMMARY_CSV)} == {"1.0"}


def test_channel_fuse_exports_empty_time(tmp_path):
    export_attention(small_net(fuse="C"), generate_clips(SMALL, 1), tmp_path)
    assert {r["t"] for r in read_csv(tmp_path / RECORDS_CSV)} == {""}
    assert {r["t"] for r in read_csv(tmp_path / SUMMARY_CSV)} == {""}


def test_export_is_deterministic(tmp_path):
    net, data = small_net(), generate_clips(SMALL, 1)
    export_attention(net, data, tmp_path / "a")
    export_attention(net, data, tmp_path / "b")
    for name in (RECORDS_JSON, RECORDS_CSV, SUMMARY_CSV, STATS_JSON):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        export_attention(small_net(), generate_clips(SMALL, 1), blocker / "sub")


def test_timestep_summary_renormalises():
    w = np.random.default_rng(0).uniform(0.1, 1, (2, 3, 4, 5))
    w /= w.sum(axis=1, keepdims=True)
    s = timestep_summary(AttentionMap("b", "TC", w))
    assert s.shape == (2, 3, 5)
    assert np.allclose(s, w.mean(axis=2) / w.mean(axis=2).sum(axis=1, keepdims=True))
    assert timestep_summary(AttentionMap("b", "C", w[..., 0])).shape == (2, 3, 1)


def test_largest_temporal_dilation():
    assert largest_temporal_dilation([(1, 1, 1), (4, 4, 4), (1, 4, 4), (4, 1, 1)]) == 1
    assert largest_temporal_dilation([(1, 1, 1), (2, 2, 2), (3, 3, 3)]) == 2
    assert largest_temporal_dilation([(1, 1, 1)]) == 0


def test_contrast_matches_welch_by_hand():
    labels = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    per_clip = np.array([0.1, 0.2, 0.5, 0.6, 0.15, 0.25, 0.55, 0.7])
    c = contrast(per_clip, labels, pathway=1)
    fast, slow = per_clip[labels >= 2], per_clip[labels < 2]
    se = np.sqrt(fast.var(ddof=1) / 4 + slow.var(ddof=1) / 4)
    assert c.t_statistic == pytest.approx((fast.mean() - slow.mean()) / se, rel=1e-12)
    assert c.direction == "fast>slow" and c.significant()
    with pytest.raises(ValueError):
        contrast(per_clip[:3], labels[:3], 1)


def test_no_statistic_for_single_pathway(tmp_path):
    result = export_attention(small_net(M=1), generate_clips(SMALL, 1), tmp_path)
    assert result["statistics"] is None
