"""Export of TSP attention maps and the fast-vs-slow pathway statistic."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .data import FAST_CLASSES, SLOW_CLASSES, ClipBatch
from .network import AttentionMap, Network
from .tensor import Tensor

RECORDS_JSON = "attention.json"
RECORDS_CSV = "attention.csv"
SUMMARY_CSV = "attention_summary.csv"
STATS_JSON = "attention_stats.json"


def collect_attention(net: Network, data: ClipBatch, batch_size: int = 16) -> list[AttentionMap]:
    """Eval-mode attention of every TSP block over the whole batch, in block order."""
    if len(data) == 0:
        raise ValueError("no clips to export")
    net.eval()
    per_block: dict[str, list[np.ndarray]] = {}
    fuse: dict[str, str] = {}
    for start in range(0, len(data), batch_size):
        _, maps = net.forward(Tensor(data.clips[start:start + batch_size]))
        for m in maps:
            per_block.setdefault(m.block_id, []).append(m.weights)
            fuse[m.block_id] = m.fuse_type
    return [AttentionMap(b, fuse[b], np.concatenate(ws)) for b, ws in per_block.items()]


def timestep_summary(amap: AttentionMap) -> np.ndarray:
    """Channel-averaged pathway weights, N x M x T (T = 1 for fuse type C),
    renormalised to sum to 1 over pathways at every step."""
    w = amap.weights
    if w.ndim == 3:
        w = w[..., None]
    avg = w.mean(axis=2)
    return avg / avg.sum(axis=1, keepdims=True)


def largest_temporal_dilation(dilations) -> int:
    """Index of the pathway with the largest temporal dilation (first one on ties)."""
    return int(np.argmax([d[0] for d in dilations]))


@dataclass
class PathwayContrast:
    pathway: int
    fast_mean: float
    slow_mean: float
    difference: float
    t_statistic: float
    p_value: float
    n_fast: int
    n_slow: int

    @property
    def direction(self) -> str:
        return "fast>slow" if self.difference > 0 else "fast<slow" if self.difference < 0 else "equal"

    def significant(self, alpha: float = 0.05) -> bool:
        return bool(self.p_value < alpha)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["direction"] = self.direction
        return d


def contrast(per_clip: np.ndarray, labels: np.ndarray, pathway: int) -> PathwayContrast:
    """Welch two-sample t-test of per-clip pathway weight, fast vs slow classes."""
    fast = per_clip[np.isin(labels, FAST_CLASSES)]
    slow = per_clip[np.isin(labels, SLOW_CLASSES)]
    if len(fast) < 2 or len(slow) < 2:
        raise ValueError("need at least two fast and two slow clips")
    t, p = stats.ttest_ind(fast, slow, equal_var=False)
    return PathwayContrast(
        pathway=pathway,
        fast_mean=float(fast.mean()),
        slow_mean=float(slow.mean()),
        difference=float(fast.mean() - slow.mean()),
        t_statistic=float(t),
        p_value=float(p),
        n_fast=int(len(fast)),
        n_slow=int(len(slow)),
    )


def pathway_statistics(net: Network, maps: list[AttentionMap], labels: np.ndarray) -> dict:
    """Fast-vs-slow contrast of the largest-temporal-dilation pathway, per block
    and for the per-clip average over all TSP blocks."""
    tsp_blocks = {b.name: b for b in net.blocks if b.has_tsp}
    per_block = {}
    pooled = []
    pathway = None
    for amap in maps:
        pathway = largest_temporal_dilation(tsp_blocks[amap.block_id].tsp_cfg.dilations)
        per_clip = timestep_summary(amap)[:, pathway, :].mean(axis=1)
        pooled.append(per_clip)
        per_block[amap.block_id] = contrast(per_clip, labels, pathway).to_dict()
    overall = contrast(np.mean(pooled, axis=0), labels, pathway).to_dict()
    return {"pathway": pathway, "all_blocks": overall, "per_block": per_block}


def export_attention(net: Network, data: ClipBatch, path, batch_size: int = 16) -> dict:
    """Write attention records (JSON + CSV), the per-timestep summary CSV and
    the fast-vs-slow statistics into directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write attention export to {out}: {exc}") from exc
    maps = collect_attention(net, data, batch_size)

    records = []
    for amap in maps:
        for n in range(amap.weights.shape[0]):
            w = amap.weights[n]
            records.append({
                "block_id": amap.block_id,
                "sample": n,
                "fuse_type": amap.fuse_type,
                "M": amap.M,
                "shape": list(w.shape),
                "weights": w.tolist(),
            })
    (out / RECORDS_JSON).write_text(json.dumps(records), encoding="utf-8")

    with open(out / RECORDS_CSV, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_id", "sample", "m", "c", "t", "weight"])
        for amap in maps:
            w = amap.weights
            timed = w.ndim == 4
            for idx in np.ndindex(*w.shape):
                t = idx[3] if timed else ""
                writer.writerow([amap.block_id, idx[0], idx[1], idx[2], t, repr(float(w[idx]))])

    with open(out / SUMMARY_CSV, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_id", "sample", "label", "t", "m", "weight"])
        for amap in maps:
            summ = timestep_summary(amap)
            timed = amap.weights.ndim == 4
            for n, m, t in np.ndindex(*summ.shape):
                writer.writerow([
                    amap.block_id, n, int(data.labels[n]), t if timed else "", m, repr(float(summ[n, m, t]))
                ])

    result = {"blocks": [m.block_id for m in maps], "statistics": None}
    labels = data.labels
    enough = np.isin(labels, FAST_CLASSES).sum() >= 2 and np.isin(labels, SLOW_CLASSES).sum() >= 2
    # a single pathway always carries weight 1, leaving nothing to compare
    if enough and maps and maps[0].M > 1:
        result["statistics"] = pathway_statistics(net, maps, labels)
    (out / STATS_JSON).write_text(json.dumps(result, indent=2), encoding="utf-8")
    return result
