"""Receptive-field calculus for stacks of dilated 3D convolutions.

Per axis the stack is folded as ``rf += (k - 1) * d * jump; jump *= s``
starting from ``rf = jump = 1``. A frame subsampling rate on the first
layer models a pathway that sees the clip at a lower frame rate; its
footprint in original frames is ``(rf - 1) * q + 1``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ops import Conv3dParams, Triple, as_triple, conv3d
from .tensor import Tensor, subsample

AXES = ("T", "H", "W")
CSV_HEADER = ["axis", "layer_index", "rf", "jump", "rf_original_frames"]


@dataclass(frozen=True)
class LayerSpec:
    kernel: Triple = (3, 3, 3)
    stride: Triple = (1, 1, 1)
    dilation: Triple = (1, 1, 1)
    padding: Triple = (0, 0, 0)
    input_sampling_rate: int | None = None

    def __post_init__(self):
        for name in ("kernel", "stride", "dilation", "padding"):
            object.__setattr__(self, name, as_triple(getattr(self, name)))
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.dilation) < 1:
            raise ValueError("kernel, stride and dilation must be >= 1 on every axis")
        if self.input_sampling_rate is not None and self.input_sampling_rate < 1:
            raise ValueError("input_sampling_rate must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(
            kernel=d.get("kernel", 3),
            stride=d.get("stride", 1),
            dilation=d.get("dilation", 1),
            padding=d.get("padding", 0),
            input_sampling_rate=d.get("input_sampling_rate"),
        )


def sampling_rate(stack: Sequence[LayerSpec]) -> int:
    """Temporal subsampling applied before the stack (taken from the first layer)."""
    for i, layer in enumerate(stack):
        if i > 0 and layer.input_sampling_rate not in (None, 1):
            raise ValueError("only the first layer may carry an input_sampling_rate")
    return (stack[0].input_sampling_rate or 1) if stack else 1


def rf_progression(stack: Sequence[LayerSpec]) -> list[tuple[Triple, Triple]]:
    """(rf, jump) after each layer. rf is in units of the stack's input;
    jump is the output spacing in original frames/pixels."""
    q = sampling_rate(stack)
    rf = [1, 1, 1]
    jump = [1, 1, 1]
    rows = []
    for layer in stack:
        for a in range(3):
            rf[a] += (layer.kernel[a] - 1) * layer.dilation[a] * jump[a]
            jump[a] *= layer.stride[a]
        rows.append((tuple(rf), (jump[0] * q, jump[1], jump[2])))
    return rows


def analytic_rf(stack: Sequence[LayerSpec]) -> tuple[Triple, Triple]:
    if not stack:
        raise ValueError("analytic_rf needs a non-empty stack")
    return rf_progression(stack)[-1]


def original_extent(rf: Triple, q: int) -> Triple:
    return ((rf[0] - 1) * q + 1, rf[1], rf[2])


def empirical_rf(stack: Sequence[LayerSpec], probe_size: Sequence[int]) -> Triple:
    """Bounding box of the input-gradient support of one central output element.

    Builds the stack as single-channel convolutions with all-ones weights and
    no padding (padding does not change what an output depends on), applies
    any frame subsampling first, and returns the support extent per axis in
    original-input units.
    """
    if not stack:
        raise ValueError("empirical_rf needs a non-empty stack")
    probe = as_triple(probe_size)
    q = sampling_rate(stack)
    rf, _ = analytic_rf(stack)
    need = original_extent(rf, q)
    if any(p <= n for p, n in zip(probe, need)):
        raise ValueError(f"probe {probe} must exceed the receptive field {need} on every axis")

    x = Tensor(np.ones((1, 1) + probe), requires_grad=True)
    h = subsample(x, (q, 1, 1)) if q > 1 else x
    for layer in stack:
        w = Tensor(np.ones((1, 1) + layer.kernel))
        h = conv3d(h, Conv3dParams(weight=w, stride=layer.stride, dilation=layer.dilation))
    seed = np.zeros(h.shape)
    centre = tuple(n // 2 for n in h.shape[2:])
    seed[(0, 0) + centre] = 1.0
    h.backward(seed)
    support = np.nonzero(x.grad[0, 0])
    return tuple(int(idx.max() - idx.min() + 1) for idx in support)


def compare_pathways(
    stack_a: Sequence[LayerSpec],
    stack_b: Sequence[LayerSpec],
    labels: tuple[str, str] = ("A", "B"),
) -> list[dict]:
    """Per-layer, per-axis RF rows for two stacks, footprints in original frames."""
    rows = []
    for label, stack in zip(labels, (stack_a, stack_b)):
        if not stack:
            continue
        q = sampling_rate(stack)
        for i, (rf, jump) in enumerate(rf_progression(stack)):
            orig = original_extent(rf, q)
            for a, axis in enumerate(AXES):
                rows.append({
                    "stack": label,
                    "axis": axis,
                    "layer_index": i,
                    "rf": rf[a],
                    "jump": jump[a],
                    "rf_original_frames": orig[a],
                })
    return rows


def load_stack(path) -> list[LayerSpec]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    layers = raw["layers"] if isinstance(raw, dict) else raw
    stack = [LayerSpec.from_dict(d) for d in layers]
    if isinstance(raw, dict) and raw.get("input_sampling_rate") and stack:
        first = stack[0]
        stack[0] = LayerSpec(first.kernel, first.stride, first.dilation, first.padding,
                             int(raw["input_sampling_rate"]))
    return stack


def write_csv(rows: list[dict], path) -> None:
    """One row per layer and axis; a trailing ``stack`` column appears only when
    the rows cover more than one stack."""
    two = len({r["stack"] for r in rows}) > 1
    fields = CSV_HEADER + ["stack"] if two else CSV_HEADER
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
