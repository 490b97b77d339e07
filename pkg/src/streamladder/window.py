"""Running feature window and standardization.

Per-line encoder statistics arrive with a resolution-dependent line count and
are resampled to 17 positions at push time, so a window may mix resolutions.
A full window of 60 frames standardizes into the model input tensor.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyDataset, EmptyInput, WindowNotFull
from .statslog import FrameStats

#: Model input geometry: frames x features x positions.
WINDOW_FRAMES = 60
N_FEATURES = 7
TARGET_POSITIONS = 17

STD_FLOOR = 1e-6


def resample_line(values: np.ndarray, target: int = TARGET_POSITIONS) -> np.ndarray:
    """Resample a per-line statistic to `target` positions.

    Endpoint-aligned linear interpolation: output j maps to source coordinate
    j*(L-1)/(target-1). A single value broadcasts; length `target` is identity.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise EmptyInput("per-line statistic must be a non-empty 1-D array")
    if values.size == 1:
        return np.full(target, values[0])
    coords = np.arange(target, dtype=np.float64) * (values.size - 1) / (target - 1)
    return np.interp(coords, np.arange(values.size, dtype=np.float64), values)


def resample_frame(frame: FrameStats, target: int = TARGET_POSITIONS) -> np.ndarray:
    """All 7 per-line statistics of one frame resampled to a (7, target) matrix."""
    return np.stack([resample_line(row, target) for row in frame.per_line])


@dataclass(frozen=True)
class Normalization:
    """Per-feature standardization constants (std floored at 1e-6)."""

    mean: np.ndarray  # (7,)
    std: np.ndarray  # (7,)

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR))
        if self.mean.shape != (N_FEATURES,) or self.std.shape != (N_FEATURES,):
            raise EmptyInput(f"normalization constants must have shape ({N_FEATURES},)")


def compute_normalization(frame_matrices: Iterable[np.ndarray]) -> Normalization:
    """Global per-feature mean and population std over resampled frames.

    Statistics pool over every frame and all 17 positions; degenerate features
    get the floored std.
    """
    stack = [np.asarray(m, dtype=np.float64) for m in frame_matrices]
    if not stack:
        raise EmptyDataset("no frames to normalize over")
    data = np.stack(stack)  # (n, 7, 17)
    mean = data.mean(axis=(0, 2))
    std = data.std(axis=(0, 2))  # population std
    return Normalization(mean, std)


class StatsWindow:
    """Ring of the most recent `capacity` resampled frame matrices."""

    def __init__(self, capacity: int = WINDOW_FRAMES):
        self.capacity = capacity
        self._entries: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def is_full(self) -> bool:
        return len(self._entries) == self.capacity

    def push(self, frame: FrameStats) -> None:
        self._entries.append(resample_frame(frame))

    def push_matrix(self, matrix: np.ndarray) -> None:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (N_FEATURES, TARGET_POSITIONS):
            raise EmptyInput(f"window entries must be {N_FEATURES}x{TARGET_POSITIONS}, got {matrix.shape}")
        self._entries.append(matrix)

    def as_array(self) -> np.ndarray:
        """Raw window contents, oldest first: (n, 7, 17)."""
        if not self._entries:
            return np.empty((0, N_FEATURES, TARGET_POSITIONS))
        return np.stack(list(self._entries))


def assemble_tensor(window: StatsWindow, norm: Normalization) -> np.ndarray:
    """Standardized (60, 7, 17) model input from a full window."""
    if not window.is_full:
        raise WindowNotFull(f"window holds {len(window)} of {window.capacity} frames")
    raw = window.as_array()
    return standardize(raw, norm)


def standardize(raw: np.ndarray, norm: Normalization) -> np.ndarray:
    """(value - mean_f) / std_f applied per feature channel."""
    raw = np.asarray(raw, dtype=np.float64)
    return (raw - norm.mean[:, None]) / norm.std[:, None]
