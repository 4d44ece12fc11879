"""Sliding-window restructuring of a channel frame into an N x M x P array.

A window of ``w`` consecutive rows is kept only when its elapsed time
``et = last_ts - first_ts`` satisfies ``et <= w / dr + dt``; windows that
span timestamp gaps (vehicle off, dropped samples) are discarded. Windows
are then split into train/test partitions and into forecasting pairs
(first ``M - 1`` rows as input, last row as target).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .schema import ChannelFrame

logger = logging.getLogger(__name__)

CONTAINER_MAGIC = b"TWND"
CONTAINER_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")

LABEL_NORMAL = 0


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window and split parameters.

    ``w`` is the window length in observations, ``stride`` the offset
    between consecutive window starts, ``dr`` the expected data rate in
    Hz, and ``dt`` the extra elapsed seconds tolerated before a window is
    deemed non-contiguous.
    """

    w: int = 20
    stride: int = 1
    dr: float = 1.0
    dt: float = 2.0
    split_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.w < 2:
            raise ConfigError(f"window length w must be >= 2, got {self.w}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.dr <= 0:
            raise ConfigError(f"data rate dr must be > 0, got {self.dr}")
        if self.dt < 0:
            raise ConfigError(f"dt must be >= 0, got {self.dt}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(
                f"split_fraction must be in (0, 1), got {self.split_fraction}"
            )

    @property
    def max_elapsed(self) -> float:
        return self.w / self.dr + self.dt


@dataclass(frozen=True)
class WindowSet:
    """N windows of M consecutive observations over P channels, with each
    window's start timestamp and an anomaly label code (0 = normal)."""

    data: np.ndarray  # (N, M, P) float64
    start_timestamps: np.ndarray  # (N,) float64
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        ts = np.asarray(self.start_timestamps, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.uint8)
        if data.ndim != 3:
            raise ValueError("window data must have shape (N, M, P)")
        if ts.shape != (data.shape[0],) or labels.shape != (data.shape[0],):
            raise ValueError("timestamps/labels must have one entry per window")
        for name, arr in (("data", data), ("start_timestamps", ts), ("labels", labels)):
            arr = np.array(arr, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_windows(self) -> int:
        return self.data.shape[0]

    @property
    def seq_len(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[2]

    def take(self, indices: np.ndarray) -> "WindowSet":
        return WindowSet(
            data=self.data[indices],
            start_timestamps=self.start_timestamps[indices],
            labels=self.labels[indices],
        )

    def with_labels(self, labels: np.ndarray) -> "WindowSet":
        return replace(self, labels=np.asarray(labels, dtype=np.uint8))


@dataclass(frozen=True)
class SplitSet:
    train: WindowSet
    test: WindowSet


def make_windows(frame: ChannelFrame, cfg: WindowConfig) -> WindowSet:
    """Emit every window starting at rows 0, stride, 2*stride, ... whose
    elapsed time passes the contiguity rule. A frame shorter than ``w``
    yields an empty set (with a warning), not an error."""
    rows = frame.n_rows
    if rows < cfg.w:
        logger.warning("frame has %d rows, window needs %d: no windows", rows, cfg.w)
        empty = np.empty((0, cfg.w, frame.schema.n_features))
        return WindowSet(empty, np.empty(0), np.zeros(0, dtype=np.uint8))

    starts = np.arange(0, rows - cfg.w + 1, cfg.stride)
    ends = starts + cfg.w - 1
    elapsed = frame.timestamps[ends] - frame.timestamps[starts]
    valid = elapsed <= cfg.max_elapsed

    view = np.lib.stride_tricks.sliding_window_view(frame.values, cfg.w, axis=0)
    # view is (rows - w + 1, P, w); reorder to (N, w, P)
    data = view[starts[valid]].transpose(0, 2, 1)
    n_emitted = int(valid.sum())
    logger.info(
        "windowing: emitted %d windows, discarded %d (elapsed > %.3g s)",
        n_emitted, starts.size - n_emitted, cfg.max_elapsed,
    )
    return WindowSet(
        data=data,
        start_timestamps=frame.timestamps[starts[valid]],
        labels=np.zeros(n_emitted, dtype=np.uint8),
    )


def split_windows(ws: WindowSet, cfg: WindowConfig, mode: str = "random") -> SplitSet:
    """Partition windows into train/test.

    ``random`` permutes window indices under ``cfg.seed`` and takes the
    first ``floor(split_fraction * N)`` as training; ``chronological``
    takes the leading windows in start order instead.
    """
    n = ws.n_windows
    if n == 0:
        raise DataError("cannot split an empty window set")
    n_train = int(np.floor(cfg.split_fraction * n))
    if mode == "random":
        order = np.random.default_rng(cfg.seed).permutation(n)
    elif mode == "chronological":
        order = np.arange(n)
    else:
        raise ConfigError(f"unknown split mode {mode!r}")
    return SplitSet(train=ws.take(order[:n_train]), test=ws.take(order[n_train:]))


def to_supervised(ws: WindowSet) -> tuple[np.ndarray, np.ndarray]:
    """Split each window into (first M-1 rows, last row) forecasting pairs."""
    if ws.seq_len < 2:
        raise DataError("windows must have at least 2 observations")
    return ws.data[:, :-1, :], ws.data[:, -1, :]


def save_windows(ws: WindowSet, path: str | Path) -> None:
    """Persist to the binary container: little-endian header
    (magic, version, N, M, P), then float64 window data row-major, then
    int64 start timestamps, then uint8 label codes."""
    n, m, p = ws.data.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION, n, m, p))
        fh.write(np.ascontiguousarray(ws.data, dtype="<f8").tobytes())
        fh.write(ws.start_timestamps.astype("<i8").tobytes())
        fh.write(ws.labels.astype(np.uint8).tobytes())


def load_windows(path: str | Path) -> WindowSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated window container")
    magic, version, n, m, p = _HEADER.unpack_from(raw, 0)
    if magic != CONTAINER_MAGIC:
        raise DataError(f"{path}: not a window container (bad magic)")
    if version != CONTAINER_VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    off = _HEADER.size
    n_data = n * m * p * 8
    expected = off + n_data + n * 8 + n
    if len(raw) != expected:
        raise DataError(f"{path}: container size mismatch")
    data = np.frombuffer(raw, dtype="<f8", count=n * m * p, offset=off).reshape(n, m, p)
    off += n_data
    ts = np.frombuffer(raw, dtype="<i8", count=n, offset=off).astype(np.float64)
    off += n * 8
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off)
    return WindowSet(data=data, start_timestamps=ts, labels=labels)
