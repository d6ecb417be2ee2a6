"""Temporal-spatial pathway (TSP) block: split, fuse, select.

M parallel dilated 3x3x3 convolutions (conv -> BN -> ReLU each) see the
input at different spatiotemporal scales. Their sum is pooled, squeezed
through a bottleneck and expanded back to M x C (x T) logits; a softmax
across pathways then weights each pathway's features.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .ops import (
    BatchNormParams,
    Conv3dParams,
    Triple,
    as_triple,
    batch_norm,
    conv3d,
    gap_spatial,
    gap_spatiotemporal,
    pointwise_conv,
    relu,
    softmax_over_pathways,
)
from .tensor import Tensor, add_n, mul, reshape, select

RF_OPTIONS = ("O1", "O2")
FUSE_TYPES = ("TC", "C")

# Manual dilation sets: spatial-only, temporal-only and cube-shaped roles.
# Only the M=4 set is taken from the literature; the smaller ones are ours.
_O2_TABLE: dict[int, list[Triple]] = {
    1: [(1, 1, 1)],
    2: [(1, 1, 1), (4, 4, 4)],
    3: [(1, 1, 1), (1, 4, 4), (4, 1, 1)],
    4: [(1, 1, 1), (4, 4, 4), (1, 4, 4), (4, 1, 1)],
}


def build_dilation_set(M: int, rf_option: str) -> list[Triple]:
    rf_option = rf_option.upper()
    if M < 1:
        raise ValueError("M must be >= 1")
    if rf_option == "O1":
        return [(i, i, i) for i in range(1, M + 1)]
    if rf_option == "O2":
        if M not in _O2_TABLE:
            raise ValueError(f"no O2 dilation set for M={M}; supported: {sorted(_O2_TABLE)}")
        return list(_O2_TABLE[M])
    raise ValueError(f"unknown rf option {rf_option!r}; expected one of {RF_OPTIONS}")


@dataclass
class TspConfig:
    M: int
    in_channels: int
    out_channels: int
    rf_option: str = "O1"
    fuse_type: str = "TC"
    dilations: list[Triple] | None = None
    groups: int = 1
    reduction_ratio: int = 16
    min_hidden: int = 32
    stride: Triple = (1, 1, 1)
    kernel: Triple = (3, 3, 3)

    def __post_init__(self):
        self.rf_option = self.rf_option.upper()
        self.fuse_type = self.fuse_type.upper()
        if self.fuse_type not in FUSE_TYPES:
            raise ValueError(f"fuse_type must be one of {FUSE_TYPES}, got {self.fuse_type!r}")
        if self.dilations is None:
            self.dilations = build_dilation_set(self.M, self.rf_option)
        self.dilations = [as_triple(d) for d in self.dilations]
        if len(self.dilations) != self.M:
            raise ValueError(f"{len(self.dilations)} dilation triples for M={self.M}")
        if any(min(d) < 1 for d in self.dilations):
            raise ValueError("dilation components must be >= 1")
        self.stride = as_triple(self.stride)
        self.kernel = as_triple(self.kernel)
        if any(k % 2 == 0 for k in self.kernel):
            raise ValueError("pathway kernels must be odd so every pathway keeps the same shape")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"groups={self.groups} must divide in ({self.in_channels}) "
                f"and out ({self.out_channels}) channels"
            )
        if self.hidden < 1:
            raise ValueError("hidden width must be positive")

    @property
    def hidden(self) -> int:
        return max(self.out_channels // self.reduction_ratio, self.min_hidden)

    def padding_for(self, dilation: Triple) -> Triple:
        # "same" padding keeps every pathway output the same shape
        return tuple(d * (k - 1) // 2 for d, k in zip(dilation, self.kernel))


@dataclass
class TspParams:
    pathway_convs: list[Conv3dParams]
    pathway_bns: list[BatchNormParams]
    fuse_compress: Tensor
    fuse_bn: BatchNormParams
    fuse_expand: Tensor

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for m, (conv, bn) in enumerate(zip(self.pathway_convs, self.pathway_bns)):
            yield f"{prefix}path{m}.conv.weight", conv.weight
            if conv.bias is not None:
                yield f"{prefix}path{m}.conv.bias", conv.bias
            yield f"{prefix}path{m}.bn.gamma", bn.gamma
            yield f"{prefix}path{m}.bn.beta", bn.beta
        yield f"{prefix}fuse.compress.weight", self.fuse_compress
        yield f"{prefix}fuse.bn.gamma", self.fuse_bn.gamma
        yield f"{prefix}fuse.bn.beta", self.fuse_bn.beta
        yield f"{prefix}fuse.expand.weight", self.fuse_expand

    def named_batchnorms(self, prefix: str = "") -> Iterator[tuple[str, BatchNormParams]]:
        for m, bn in enumerate(self.pathway_bns):
            yield f"{prefix}path{m}.bn", bn
        yield f"{prefix}fuse.bn", self.fuse_bn


def he_normal(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> Tensor:
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=tuple(shape)), requires_grad=True)


def init_tsp_params(cfg: TspConfig, seed: int | np.random.Generator) -> TspParams:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cin_g = cfg.in_channels // cfg.groups
    kT, kH, kW = cfg.kernel
    fan_in = cin_g * kT * kH * kW
    convs, bns = [], []
    for dil in cfg.dilations:
        w = he_normal(rng, (cfg.out_channels, cin_g, kT, kH, kW), fan_in)
        convs.append(
            Conv3dParams(
                weight=w,
                stride=cfg.stride,
                dilation=dil,
                padding=cfg.padding_for(dil),
                groups=cfg.groups,
            )
        )
        bns.append(BatchNormParams.fresh(cfg.out_channels))
    d, C = cfg.hidden, cfg.out_channels
    return TspParams(
        pathway_convs=convs,
        pathway_bns=bns,
        fuse_compress=he_normal(rng, (d, C), C),
        fuse_bn=BatchNormParams.fresh(d),
        fuse_expand=he_normal(rng, (cfg.M * C, d), d),
    )


def split(x: Tensor, params: TspParams) -> list[Tensor]:
    """Per-pathway features U_m = ReLU(BN(conv_m(x)))."""
    us = [relu(batch_norm(conv3d(x, conv), bn)) for conv, bn in zip(params.pathway_convs, params.pathway_bns)]
    shapes = {u.shape for u in us}
    if len(shapes) != 1:
        raise ValueError(f"pathway outputs disagree in shape: {sorted(shapes)}")
    return us


def fuse_select(us: Sequence[Tensor], cfg: TspConfig, params: TspParams) -> tuple[Tensor, Tensor]:
    """Attention over pathways from their summed features, then the weighted sum.

    Returns ``(v, attn)`` where attn is N x M x C x T for fuse type TC and
    N x M x C for fuse type C.
    """
    M = len(us)
    N, C, T = us[0].shape[:3]
    u = add_n(us)
    if cfg.fuse_type == "TC":
        s = gap_spatial(u)  # N x C x T
        logit_shape = (N, M, C, T)
        weight_shape = (N, C, T, 1, 1)
    else:
        s = gap_spatiotemporal(u)  # N x C
        logit_shape = (N, M, C)
        weight_shape = (N, C, 1, 1, 1)
    z = relu(batch_norm(pointwise_conv(s, params.fuse_compress), params.fuse_bn))
    z2 = reshape(pointwise_conv(z, params.fuse_expand), logit_shape)
    attn = softmax_over_pathways(z2, axis=1)
    weighted = [mul(us[m], reshape(select(attn, m, axis=1), weight_shape)) for m in range(M)]
    return add_n(weighted), attn


def tsp_forward(x: Tensor, cfg: TspConfig, params: TspParams) -> tuple[Tensor, Tensor]:
    if x.ndim != 5 or x.shape[1] != cfg.in_channels:
        raise ValueError(f"tsp_forward: expected N x {cfg.in_channels} x T x H x W, got {x.shape}")
    return fuse_select(split(x, params), cfg, params)


def set_mode(params: TspParams, mode: str) -> None:
    for _, bn in params.named_batchnorms():
        bn.mode = mode
