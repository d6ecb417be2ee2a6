"""Neural-network primitives on :class:`~btsnet.tensor.Tensor`.

Activations are laid out N x C x T x H x W. Every op here returns a tensor
wired for reverse-mode differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .tensor import Tensor, make_result

Triple = tuple[int, int, int]


def as_triple(v) -> Triple:
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 3
    t = tuple(int(i) for i in v)
    if len(t) != 3:
        raise ValueError(f"expected an int or a (T, H, W) triple, got {v!r}")
    return t


def conv_out_extent(size: int, k: int, stride: int, dilation: int, pad: int) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


@dataclass
class Conv3dParams:
    weight: Tensor
    bias: Tensor | None = None
    stride: Triple = (1, 1, 1)
    dilation: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    groups: int = 1

    def __post_init__(self):
        self.stride = as_triple(self.stride)
        self.dilation = as_triple(self.dilation)
        self.padding = as_triple(self.padding)
        if self.weight.ndim != 5:
            raise ValueError("conv weight must be Cout x Cin/groups x kT x kH x kW")
        if self.groups < 1 or self.weight.shape[0] % self.groups:
            raise ValueError(f"groups={self.groups} does not divide Cout={self.weight.shape[0]}")
        if min(self.stride) < 1 or min(self.dilation) < 1 or min(self.padding) < 0:
            raise ValueError("stride/dilation must be >= 1 and padding >= 0")
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias must have shape (Cout,)")

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> Triple:
        return self.weight.shape[2:]


def conv3d(x: Tensor, p: Conv3dParams) -> Tensor:
    """Grouped, dilated, strided 3D cross-correlation with zero padding."""
    if x.ndim != 5:
        raise ValueError(f"conv3d expects N x C x T x H x W, got shape {x.shape}")
    N, Cin = x.shape[:2]
    if Cin != p.in_channels:
        raise ValueError(f"conv3d: input has {Cin} channels, weight expects {p.in_channels}")
    if Cin % p.groups:
        raise ValueError(f"groups={p.groups} does not divide Cin={Cin}")
    out_sp = tuple(
        conv_out_extent(n, k, s, d, q)
        for n, k, s, d, q in zip(x.shape[2:], p.kernel, p.stride, p.dilation, p.padding)
    )
    if min(out_sp) < 1:
        raise ValueError(f"conv3d: non-positive output extent {out_sp} for input {x.shape[2:]}")

    pt, ph, pw = p.padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw))) if any(p.padding) else x.data
    xp = np.ascontiguousarray(xp)
    args = (*p.stride, *p.dilation, p.groups)
    backend = kernels.get_backend()
    w = p.weight
    out = np.zeros((N, p.out_channels) + out_sp)
    backend.forward(xp, w.data, out, *args)
    if p.bias is not None:
        out += p.bias.data.reshape(1, -1, 1, 1, 1)

    def backward(g):
        g = np.ascontiguousarray(g)
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros(xp.shape)
            backend.backward_input(g, w.data, gxp, *args)
            T, H, W = x.shape[2:]
            gx = gxp[:, :, pt:pt + T, ph:ph + H, pw:pw + W]
        if w.requires_grad:
            gw = np.zeros(w.shape)
            backend.backward_weight(g, xp, gw, *args)
        if p.bias is not None and p.bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3, 4))
        return gx, gw, gb

    parents = (x, w) if p.bias is None else (x, w, p.bias)
    return make_result(out, parents, backward)


@dataclass
class BatchNormParams:
    """Per-channel affine normalisation. Running variance tracks the unbiased
    batch variance; ``momentum`` is the weight given to the new batch."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    mode: str = "train"

    def __post_init__(self):
        C = self.gamma.shape[0]
        if self.beta.shape != (C,) or self.running_mean.shape != (C,) or self.running_var.shape != (C,):
            raise ValueError("batch-norm parameters must all have shape (C,)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be non-negative")
        if self.mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {self.mode!r}")

    @classmethod
    def fresh(cls, channels: int, **kw) -> "BatchNormParams":
        return cls(
            gamma=Tensor(np.ones(channels), requires_grad=True),
            beta=Tensor(np.zeros(channels), requires_grad=True),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            **kw,
        )


def batch_norm(x: Tensor, p: BatchNormParams) -> Tensor:
    """Normalise channel axis 1 over every other axis (N and any trailing ones)."""
    if x.ndim < 2 or x.shape[1] != p.gamma.shape[0]:
        raise ValueError(f"batch_norm: input {x.shape} vs {p.gamma.shape[0]} channels")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    count = x.size // x.shape[1]
    gamma, beta = p.gamma, p.beta

    if p.mode == "train":
        if count < 2:
            raise ValueError("batch_norm in train mode needs >= 2 values per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        p.running_mean[:] = (1 - p.momentum) * p.running_mean + p.momentum * mu
        p.running_var[:] = (1 - p.momentum) * p.running_var + p.momentum * var * count / (count - 1)
    else:
        mu, var = p.running_mean.copy(), p.running_var.copy()

    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    training = p.mode == "train"

    def backward(g):
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(bshape)
            if training:
                m1 = gxhat.mean(axis=axes, keepdims=True)
                m2 = (gxhat * xhat).mean(axis=axes, keepdims=True)
                gx = (gxhat - m1 - xhat * m2) * inv_std.reshape(bshape)
            else:
                gx = gxhat * inv_std.reshape(bshape)
        ggamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        return gx, ggamma, gbeta

    return make_result(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def gap_spatial(u: Tensor) -> Tensor:
    """Mean over H and W: N x C x T x H x W -> N x C x T."""
    if u.ndim != 5:
        raise ValueError(f"gap_spatial expects a 5-D tensor, got {u.shape}")
    shape = u.shape
    hw = shape[3] * shape[4]

    def backward(g):
        return (np.broadcast_to(g[..., None, None] / hw, shape).copy(),)

    return make_result(u.data.mean(axis=(3, 4)), (u,), backward)


def gap_spatiotemporal(u: Tensor) -> Tensor:
    """Mean over T, H and W: N x C x T x H x W -> N x C."""
    if u.ndim != 5:
        raise ValueError(f"gap_spatiotemporal expects a 5-D tensor, got {u.shape}")
    shape = u.shape
    thw = shape[2] * shape[3] * shape[4]

    def backward(g):
        return (np.broadcast_to(g[..., None, None, None] / thw, shape).copy(),)

    return make_result(u.data.mean(axis=(2, 3, 4)), (u,), backward)


def pointwise_conv(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Channel-mixing linear map; x is N x Cin x ..., weight is Cout x Cin."""
    if weight.ndim != 2 or x.ndim < 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"pointwise_conv: input {x.shape} vs weight {weight.shape}")
    trailing = tuple(range(2, x.ndim))
    out = np.moveaxis(np.tensordot(weight.data, x.data, axes=([1], [1])), 0, 1)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ValueError("pointwise_conv: bias must have shape (Cout,)")
        out = out + bias.data.reshape((1, -1) + (1,) * len(trailing))

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.moveaxis(np.tensordot(weight.data, g, axes=([0], [1])), 0, 1)
        if weight.requires_grad:
            red = [0] + list(trailing)
            gw = np.tensordot(g, x.data, axes=(red, red))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0,) + trailing)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward)


def softmax_over_pathways(z: Tensor, axis: int = 1) -> Tensor:
    """Softmax along the pathway axis (axis 1 of N x M x C [x T])."""
    shifted = z.data - z.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result(s, (z,), backward)


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean softmax cross-entropy of N x K logits against integer labels."""
    lab = np.asarray(labels, dtype=np.int64)
    N, K = logits.shape
    if lab.shape != (N,) or lab.min(initial=0) < 0 or lab.max(initial=0) >= K:
        raise ValueError("labels must be N integers in [0, num_classes)")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(N), lab].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(N), lab] -= 1.0
        return (grad * (g[0] / N),)

    return make_result(np.array([loss]), (logits,), backward)


def per_sample_cross_entropy(logits: np.ndarray, labels) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(lab)), lab]


__all__ = [
    "Conv3dParams",
    "BatchNormParams",
    "conv3d",
    "batch_norm",
    "relu",
    "gap_spatial",
    "gap_spatiotemporal",
    "pointwise_conv",
    "softmax_over_pathways",
    "cross_entropy",
    "per_sample_cross_entropy",
    "conv_out_extent",
    "as_triple",
]
