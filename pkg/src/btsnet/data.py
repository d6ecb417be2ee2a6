"""Synthetic moving-square clips.

Four classes, speed x direction: a bright square translates horizontally
or vertically at 1 (slow) or 3 (fast) pixels per frame, wrapping around
the frame edges. Telling the classes apart needs temporal context, which
is what differently dilated pathways provide.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io

SPEEDS = {"slow": 1, "fast": 3}
DIRECTIONS = ("horizontal", "vertical")
CLASS_NAMES = [f"{s}-{d}" for s in SPEEDS for d in DIRECTIONS]
FAST_CLASSES = (2, 3)
SLOW_CLASSES = (0, 1)


@dataclass
class ClipBatch:
    clips: np.ndarray  # N x C x T x H x W in [0, 1]
    labels: np.ndarray  # N ints
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        self.clips = np.asarray(self.clips, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.clips.ndim != 5 or self.clips.shape[0] != self.labels.shape[0]:
            raise ValueError("clips must be N x C x T x H x W with one label per clip")
        if self.validate:
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("labels must be non-negative")
            if self.clips.size and not np.all((self.clips >= 0.0) & (self.clips <= 1.0)):
                raise ValueError("clip values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, idx) -> "ClipBatch":
        return ClipBatch(self.clips[idx], self.labels[idx])


@dataclass
class SyntheticTaskSpec:
    T: int = 16
    H: int = 32
    W: int = 32
    channels: int = 3
    square: int = 5
    noise: float = 0.05
    seed: int = 0
    speeds: tuple[int, int] = (SPEEDS["slow"], SPEEDS["fast"])

    @property
    def num_classes(self) -> int:
        return len(self.speeds) * len(DIRECTIONS)


def render_clip(spec: SyntheticTaskSpec, label: int, rng: np.random.Generator) -> np.ndarray:
    speed = spec.speeds[label // 2]
    vertical = label % 2 == 1
    sign = 1 if rng.random() < 0.5 else -1
    y0 = int(rng.integers(spec.H))
    x0 = int(rng.integers(spec.W))
    clip = np.zeros((spec.channels, spec.T, spec.H, spec.W))
    rows_base = np.arange(spec.square)
    for t in range(spec.T):
        shift = sign * speed * t
        y = y0 + (shift if vertical else 0)
        x = x0 + (0 if vertical else shift)
        rows = (y + rows_base) % spec.H
        cols = (x + rows_base) % spec.W
        clip[:, t, rows[:, None], cols[None, :]] = 1.0
    if spec.noise > 0:
        clip += rng.normal(0.0, spec.noise, size=clip.shape)
    return np.clip(clip, 0.0, 1.0)


def generate_clips(spec: SyntheticTaskSpec, n_per_class: int, stream: int = 0) -> ClipBatch:
    """Balanced batch, labels cycling 0..K-1. Clip ``i`` draws from its own
    generator seeded with ``(seed, stream, i)`` so clips are independent of
    one another and of generation order."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if spec.square > min(spec.H, spec.W):
        raise ValueError(f"square of {spec.square} px does not fit a {spec.H}x{spec.W} frame")
    K = spec.num_classes
    n = n_per_class * K
    clips = np.empty((n, spec.channels, spec.T, spec.H, spec.W))
    labels = np.arange(n) % K
    for i in range(n):
        rng = np.random.default_rng([spec.seed, stream, i])
        clips[i] = render_clip(spec, int(labels[i]), rng)
    return ClipBatch(clips, labels)


def save_split(directory, name: str, batch: ClipBatch) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    io.save_tensor(d / f"{name}.btsc", batch.clips)
    io.save_labels(d / f"{name}.labels", batch.labels)


def load_split(directory, name: str) -> ClipBatch:
    d = Path(directory)
    return ClipBatch(io.load_tensor(d / f"{name}.btsc"), io.load_labels(d / f"{name}.labels"))
