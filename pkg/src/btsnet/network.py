"""BTSNet: ResNeXt-style bottleneck stages whose grouped 3x3x3 conv is a TSP block.

Layout: stem -> four stages of bottleneck blocks -> spatiotemporal GAP ->
linear classifier. Stages 1-3 use TSP blocks; stage 4 keeps a plain
grouped convolution.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import io
from .ops import (
    BatchNormParams,
    Conv3dParams,
    Triple,
    as_triple,
    batch_norm,
    conv3d,
    gap_spatiotemporal,
    pointwise_conv,
    relu,
)
from .tensor import Tensor, add
from .tsp import TspConfig, TspParams, he_normal, init_tsp_params, tsp_forward

STAGE_BLOCKS = {26: (2, 2, 2, 2), 50: (3, 4, 6, 3), 101: (3, 4, 23, 3)}
FULL_WIDTHS = (64, 128, 256, 512)
TINY_WIDTHS = (8, 16, 32, 64)
TINY_CARDINALITY = 4
EXPANSION = 4

# Trainable parameter counts (millions) published for BTSNet, keyed by (cardinality, depth).
REFERENCE_PARAMS_M = {
    (16, 26): 10.2, (16, 50): 17.4, (16, 101): 34.6,
    (32, 26): 17.3, (32, 50): 31.7, (32, 101): 66.1,
}


@dataclass
class NetworkConfig:
    depth: int = 26
    cardinality: int = 32
    num_classes: int = 4
    M: int = 4
    rf_option: str = "O2"
    fuse_type: str = "TC"
    base_widths: tuple[int, ...] = FULL_WIDTHS
    stem_width: int = 64
    in_channels: int = 3
    clip_shape: Triple = (16, 32, 32)
    reduction_ratio: int = 16
    min_hidden: int = 32
    stem_stride: Triple = (1, 2, 2)

    def __post_init__(self):
        if self.depth not in STAGE_BLOCKS:
            raise ValueError(f"depth must be one of {sorted(STAGE_BLOCKS)}, got {self.depth}")
        self.base_widths = tuple(int(w) for w in self.base_widths)
        self.clip_shape = as_triple(self.clip_shape)
        self.stem_stride = as_triple(self.stem_stride)
        self.rf_option = self.rf_option.upper()
        self.fuse_type = self.fuse_type.upper()
        if len(self.base_widths) != 4:
            raise ValueError("base_widths needs one entry per stage (4)")
        for w in self.inner_widths:
            if w % self.cardinality:
                raise ValueError(f"cardinality {self.cardinality} does not divide stage width {w}")

    @classmethod
    def tiny(cls, **overrides) -> "NetworkConfig":
        kw = dict(base_widths=TINY_WIDTHS, stem_width=8, cardinality=TINY_CARDINALITY)
        kw.update(overrides)
        return cls(**kw)

    @property
    def stage_blocks(self) -> tuple[int, ...]:
        return STAGE_BLOCKS[self.depth]

    @property
    def inner_widths(self) -> tuple[int, ...]:
        # ResNeXt convention: 32x4d doubles the 16x4d bottleneck width
        factor = max(1, self.cardinality // 16)
        return tuple(w * factor for w in self.base_widths)

    @property
    def out_widths(self) -> tuple[int, ...]:
        return tuple(w * EXPANSION for w in self.base_widths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base_widths"] = list(self.base_widths)
        d["clip_shape"] = list(self.clip_shape)
        d["stem_stride"] = list(self.stem_stride)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


@dataclass
class BottleneckBlock:
    name: str
    reduce: Tensor
    reduce_bn: BatchNormParams
    expand: Tensor
    expand_bn: BatchNormParams
    tsp_cfg: TspConfig | None = None
    tsp: TspParams | None = None
    conv: Conv3dParams | None = None
    conv_bn: BatchNormParams | None = None
    proj: Conv3dParams | None = None
    proj_bn: BatchNormParams | None = None

    @property
    def has_tsp(self) -> bool:
        return self.tsp is not None

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        p = self.name
        yield f"{p}.reduce.weight", self.reduce
        yield f"{p}.reduce_bn.gamma", self.reduce_bn.gamma
        yield f"{p}.reduce_bn.beta", self.reduce_bn.beta
        if self.tsp is not None:
            yield from self.tsp.named_parameters(f"{p}.tsp.")
        else:
            yield f"{p}.conv.weight", self.conv.weight
            yield f"{p}.conv_bn.gamma", self.conv_bn.gamma
            yield f"{p}.conv_bn.beta", self.conv_bn.beta
        yield f"{p}.expand.weight", self.expand
        yield f"{p}.expand_bn.gamma", self.expand_bn.gamma
        yield f"{p}.expand_bn.beta", self.expand_bn.beta
        if self.proj is not None:
            yield f"{p}.proj.weight", self.proj.weight
            yield f"{p}.proj_bn.gamma", self.proj_bn.gamma
            yield f"{p}.proj_bn.beta", self.proj_bn.beta

    def named_batchnorms(self) -> Iterator[tuple[str, BatchNormParams]]:
        p = self.name
        yield f"{p}.reduce_bn", self.reduce_bn
        if self.tsp is not None:
            yield from self.tsp.named_batchnorms(f"{p}.tsp.")
        else:
            yield f"{p}.conv_bn", self.conv_bn
        yield f"{p}.expand_bn", self.expand_bn
        if self.proj_bn is not None:
            yield f"{p}.proj_bn", self.proj_bn

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor | None]:
        h = relu(batch_norm(pointwise_conv(x, self.reduce), self.reduce_bn))
        attn = None
        if self.tsp is not None:
            h, attn = tsp_forward(h, self.tsp_cfg, self.tsp)
        else:
            h = relu(batch_norm(conv3d(h, self.conv), self.conv_bn))
        h = batch_norm(pointwise_conv(h, self.expand), self.expand_bn)
        shortcut = x if self.proj is None else batch_norm(conv3d(x, self.proj), self.proj_bn)
        return relu(add(h, shortcut)), attn


@dataclass
class AttentionMap:
    block_id: str
    fuse_type: str
    weights: np.ndarray  # N x M x C [x T]

    @property
    def M(self) -> int:
        return self.weights.shape[1]


@dataclass
class Network:
    cfg: NetworkConfig
    stem: Conv3dParams
    stem_bn: BatchNormParams
    stages: list[list[BottleneckBlock]]
    fc_weight: Tensor
    fc_bias: Tensor
    last_attention: list[AttentionMap] = field(default_factory=list)

    @property
    def blocks(self) -> list[BottleneckBlock]:
        return [b for stage in self.stages for b in stage]

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "stem.conv.weight", self.stem.weight
        yield "stem.bn.gamma", self.stem_bn.gamma
        yield "stem.bn.beta", self.stem_bn.beta
        for b in self.blocks:
            yield from b.named_parameters()
        yield "fc.weight", self.fc_weight
        yield "fc.bias", self.fc_bias

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_batchnorms(self) -> Iterator[tuple[str, BatchNormParams]]:
        yield "stem.bn", self.stem_bn
        for b in self.blocks:
            yield from b.named_batchnorms()

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for name, bn in self.named_batchnorms():
            yield f"{name}.running_mean", bn.running_mean
            yield f"{name}.running_var", bn.running_var

    def set_mode(self, mode: str) -> None:
        for _, bn in self.named_batchnorms():
            bn.mode = mode

    def train(self) -> None:
        self.set_mode("train")

    def eval(self) -> None:
        self.set_mode("eval")

    def forward(self, x: Tensor) -> tuple[Tensor, list[AttentionMap]]:
        expected = (self.cfg.in_channels, *self.cfg.clip_shape)
        if x.ndim != 5 or x.shape[1:] != expected:
            raise ValueError(f"expected clips of shape N x {expected}, got {x.shape}")
        h = relu(batch_norm(conv3d(x, self.stem), self.stem_bn))
        maps = []
        for b in self.blocks:
            h, attn = b.forward(h)
            if attn is not None:
                maps.append(AttentionMap(b.name, b.tsp_cfg.fuse_type, attn.data))
        logits = pointwise_conv(gap_spatiotemporal(h), self.fc_weight, self.fc_bias)
        return logits, maps


def build_network(cfg: NetworkConfig, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    stem = Conv3dParams(
        weight=he_normal(rng, (cfg.stem_width, cfg.in_channels, 3, 3, 3), cfg.in_channels * 27),
        stride=cfg.stem_stride,
        padding=(1, 1, 1),
    )
    stem_bn = BatchNormParams.fresh(cfg.stem_width)
    cin = cfg.stem_width
    stages = []
    last = len(cfg.stage_blocks) - 1
    for si, (n_blocks, inner, cout) in enumerate(zip(cfg.stage_blocks, cfg.inner_widths, cfg.out_widths)):
        stage = []
        for bi in range(n_blocks):
            stride = (2, 2, 2) if (bi == 0 and si > 0) else (1, 1, 1)
            name = f"s{si + 1}.b{bi}"
            block = BottleneckBlock(
                name=name,
                reduce=he_normal(rng, (inner, cin), cin),
                reduce_bn=BatchNormParams.fresh(inner),
                expand=None,
                expand_bn=None,
            )
            if si < last:
                tcfg = TspConfig(
                    M=cfg.M,
                    in_channels=inner,
                    out_channels=inner,
                    rf_option=cfg.rf_option,
                    fuse_type=cfg.fuse_type,
                    groups=cfg.cardinality,
                    reduction_ratio=cfg.reduction_ratio,
                    min_hidden=cfg.min_hidden,
                    stride=stride,
                )
                block.tsp_cfg = tcfg
                block.tsp = init_tsp_params(tcfg, rng)
            else:
                block.conv = Conv3dParams(
                    weight=he_normal(rng, (inner, inner // cfg.cardinality, 3, 3, 3), inner // cfg.cardinality * 27),
                    stride=stride,
                    padding=(1, 1, 1),
                    groups=cfg.cardinality,
                )
                block.conv_bn = BatchNormParams.fresh(inner)
            block.expand = he_normal(rng, (cout, inner), inner)
            block.expand_bn = BatchNormParams.fresh(cout)
            if cin != cout or stride != (1, 1, 1):
                block.proj = Conv3dParams(weight=he_normal(rng, (cout, cin, 1, 1, 1), cin), stride=stride)
                block.proj_bn = BatchNormParams.fresh(cout)
            stage.append(block)
            cin = cout
        stages.append(stage)
    # small classifier init keeps the initial logits near zero (loss ~ ln K)
    fc_weight = Tensor(rng.normal(0.0, 0.01, size=(cfg.num_classes, cin)), requires_grad=True)
    fc_bias = Tensor(np.zeros(cfg.num_classes), requires_grad=True)
    return Network(cfg, stem, stem_bn, stages, fc_weight, fc_bias)


def clips_tensor(clips) -> Tensor:
    data = clips.clips if hasattr(clips, "clips") else clips
    return data if isinstance(data, Tensor) else Tensor(data)


def forward_classify(net: Network, clips) -> Tensor:
    """Logits N x num_classes; every TSP block's attention lands in ``net.last_attention``."""
    logits, maps = net.forward(clips_tensor(clips))
    net.last_attention = maps
    return logits


def count_params(net: Network) -> tuple[int, list[tuple[str, int]]]:
    """Total trainable element count and a per-layer breakdown (running stats excluded)."""
    per_layer: dict[str, int] = {}
    for name, t in net.named_parameters():
        layer = name.rsplit(".", 1)[0]
        per_layer[layer] = per_layer.get(layer, 0) + t.size
    rows = list(per_layer.items())
    return sum(n for _, n in rows), rows


# -- checkpoints -------------------------------------------------------------

MANIFEST = "manifest.json"


def save_checkpoint(net: Network, directory, extra: dict | None = None) -> Path:
    """Directory holding ``manifest.json`` plus one BTSC file per tensor (stored as float32)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    items = [(n, t.data, "param") for n, t in net.named_parameters()]
    items += [(n, a, "buffer") for n, a in net.named_buffers()]
    for name, arr, kind in items:
        fname = name + ".btsc"
        io.save_tensor(out / fname, arr)
        entries.append({"name": name, "shape": list(arr.shape), "file": fname, "kind": kind})
    manifest = {"format": "btsnet-checkpoint/1", "config": net.cfg.to_dict(), "tensors": entries}
    if extra:
        manifest["extra"] = extra
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return out


def load_checkpoint(directory) -> Network:
    src = Path(directory)
    manifest = json.loads((src / MANIFEST).read_text(encoding="utf-8"))
    net = build_network(NetworkConfig.from_dict(manifest["config"]), seed=0)
    params = dict(net.named_parameters())
    buffers = dict(net.named_buffers())
    for entry in manifest["tensors"]:
        arr = io.load_tensor(src / entry["file"])
        target = params[entry["name"]].data if entry["kind"] == "param" else buffers[entry["name"]]
        if list(target.shape) != list(arr.shape):
            raise ValueError(f"{entry['name']}: checkpoint shape {arr.shape} != model {target.shape}")
        target[...] = arr
    return net
