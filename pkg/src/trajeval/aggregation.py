"""Keyframe selection and grid compositing of intermediate frames.

Dense frames between consecutive keyframes are packed into one composite per
keyframe: the grid's last (bottom-right) cell holds the keyframe and the
preceding cells hold gap frames in temporal order, so one encoder-sized image
carries the high-frequency motion between keyframes.  All operations are
bit-deterministic: cells are copied without blending and resizing is
nearest-neighbor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError

DEFAULT_KEYFRAMES = 8
DEFAULT_OUTPUT_SIZE = (256, 256)


@dataclass(frozen=True)
class FrameSequence:
    """Ordered RGB8 frames of equal size, with source fps metadata."""

    frames: tuple[np.ndarray, ...]
    fps: float = 10.0

    def __post_init__(self):
        frames = tuple(np.asarray(f) for f in self.frames)
        if not frames:
            raise ValidationError("frame sequence is empty")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.ndim != 3 or f.shape[2] != 3 or f.dtype != np.uint8:
                raise ValidationError(f"frame {i} is not an RGB8 image")
            if f.shape != shape:
                raise ValidationError(f"frame {i} size {f.shape} differs from {shape}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    output_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("grid needs at least one cell")
        w, h = self.output_size
        if w < 1 or h < 1:
            raise ValidationError("output size must be positive")

    @property
    def cells(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class CompositeSequence:
    composites: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.composites)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def select_keyframes(seq: FrameSequence, n: int) -> list[int]:
    """n indices uniformly spaced over [0, T-1]; endpoints included for n >= 2.

    Shorter sequences than n yield clamped duplicates.
    """
    if n < 1:
        raise ValidationError("need at least one keyframe")
    t = len(seq)
    if n == 1:
        return [0]
    return [_round_half_up(i * (t - 1) / (n - 1)) for i in range(n)]


def _gap_cells(prev: int, key: int, cells: int) -> list[int]:
    """Frame indices for one composite: gap frames then the keyframe last.

    The cells - 1 predecessor slots sample the gap (prev, key) uniformly with
    its first and last frames included.  Short gaps pad by repeating the
    earliest gap frame; an empty gap repeats the keyframe itself.
    """
    k = cells - 1
    avail = list(range(prev + 1, key))
    if k == 0:
        preds: list[int] = []
    elif not avail:
        preds = [key] * k
    elif len(avail) >= k:
        if k == 1:
            preds = [avail[-1]]
        else:
            m = len(avail)
            preds = [avail[0] + _round_half_up(j * (m - 1) / (k - 1)) for j in range(k)]
    else:
        preds = [avail[0]] * (k - len(avail)) + avail
    return preds + [key]


def resize_nearest(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize to (width, height), center-aligned sampling."""
    out_w, out_h = size
    h, w = img.shape[:2]
    rows = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(int), h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(int), w - 1)
    return img[rows][:, cols]


def stitch(seq: FrameSequence, keyframes, grid: GridSpec) -> CompositeSequence:
    """One composite per keyframe: row-major temporal cells, keyframe last."""
    keyframes = list(keyframes)
    if not keyframes:
        raise ValidationError("no keyframes to stitch")
    t = len(seq)
    for k in keyframes:
        if not 0 <= k < t:
            raise ValidationError(f"keyframe index {k} outside [0, {t - 1}]")
    if any(b < a for a, b in zip(keyframes, keyframes[1:])):
        raise ValidationError("keyframe indices must be non-decreasing")

    h, w = seq.frames[0].shape[:2]
    composites = []
    prev = -1
    for key in keyframes:
        cells = _gap_cells(prev, key, grid.cells)
        mosaic = np.empty((grid.rows * h, grid.cols * w, 3), dtype=np.uint8)
        for slot, frame_idx in enumerate(cells):
            r, c = divmod(slot, grid.cols)
            mosaic[r * h : (r + 1) * h, c * w : (c + 1) * w] = seq.frames[frame_idx]
        composites.append(resize_nearest(mosaic, grid.output_size))
        prev = key
    return CompositeSequence(composites=tuple(composites))


def ablation_grids(output_size: tuple[int, int] = DEFAULT_OUTPUT_SIZE) -> list[GridSpec]:
    """The three studied stitching layouts, densest to sparsest cell sizes."""
    return [GridSpec(r, r, output_size) for r in (2, 3, 4)]


def load_frames(directory, fps: float = 10.0) -> FrameSequence:
    """Read all PNG frames in a directory, sorted by filename."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise ValidationError(f"no PNG frames in {directory}")
    frames = []
    for p in paths:
        with Image.open(p) as im:
            frames.append(np.asarray(im.convert("RGB")))
    return FrameSequence(frames=tuple(frames), fps=fps)


def save_composites(cs: CompositeSequence, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, arr in enumerate(cs.composites):
        path = directory / f"composite_{i:03d}.png"
        Image.fromarray(arr, mode="RGB").save(path)
        paths.append(path)
    return paths
