"""Channel schema, CSV ingestion, cleaning, and min-max scaling.

A :class:`ChannelFrame` is the cleaned, timestamped table of sensor
observations that every downstream stage consumes. Scaling maps each
channel affinely onto ``[-1, 1]`` using per-channel extrema captured in
:class:`ScalerParams`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyDataError, ParseError, SchemaError

logger = logging.getLogger(__name__)

TIME_CHANNEL = "UTC_1HZ"

FWG_GROUPS = frozenset({"Engine", "Transmission", "Fuel", "Brake", "Time"})
CHANNEL_KINDS = frozenset({"continuous", "discrete", "binary"})

SCALER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Channel:
    """One sensor channel: name, functional working group, unit, value kind."""

    name: str
    fwg: str
    unit: str
    kind: str

    def __post_init__(self) -> None:
        if self.fwg not in FWG_GROUPS:
            raise SchemaError(f"unknown FWG {self.fwg!r} for channel {self.name!r}")
        if self.kind not in CHANNEL_KINDS:
            raise SchemaError(f"unknown kind {self.kind!r} for channel {self.name!r}")


@dataclass(frozen=True)
class ChannelSchema:
    """Ordered channel catalog; exactly one Time channel, unique names.

    The Time channel carries epoch-second timestamps and is excluded from
    the feature channels used by the forecaster.
    """

    channels: tuple[Channel, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise SchemaError("channel names must be unique")
        time_channels = [c for c in self.channels if c.fwg == "Time"]
        if len(time_channels) != 1:
            raise SchemaError("schema must contain exactly one Time channel")
        if time_channels[0].name != TIME_CHANNEL:
            raise SchemaError(f"the Time channel must be named {TIME_CHANNEL}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels if c.fwg != "Time")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature channel {name!r}") from None


def default_schema() -> ChannelSchema:
    """The stock 15-sensor vehicle schema plus the 1 Hz time channel."""
    return ChannelSchema(
        channels=(
            Channel(TIME_CHANNEL, "Time", "s", "discrete"),
            Channel("EngCoolantTemp", "Engine", "degF", "continuous"),
            Channel("PctEngLoad", "Engine", "%", "continuous"),
            Channel("EngPctTorq", "Engine", "%", "continuous"),
            Channel("BoostPres", "Engine", "psi", "continuous"),
            Channel("AccelPedalPos", "Engine", "%", "continuous"),
            Channel("IntManfTemp", "Engine", "degF", "continuous"),
            Channel("VehSpeedEng", "Transmission", "mph", "continuous"),
            Channel("TransOilTemp", "Transmission", "degF", "continuous"),
            Channel("TrSelGr", "Transmission", "gear", "discrete"),
            Channel("TransTorqConvLockupEngaged", "Transmission", "flag", "binary"),
            Channel("TrOutShaftSp", "Transmission", "rpm", "continuous"),
            Channel("FuelRate", "Fuel", "gph", "continuous"),
            Channel("InstFuelEco", "Fuel", "mpg", "continuous"),
            Channel("InjCtlPres", "Fuel", "psi", "continuous"),
            Channel("BrakeSwitch", "Brake", "flag", "binary"),
        )
    )


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ChannelFrame:
    """Timestamped observation table: one row per observation, one column
    per feature channel. Immutable after construction; safe to share."""

    schema: ChannelSchema
    timestamps: np.ndarray  # (R,) float64, integral epoch seconds
    values: np.ndarray  # (R, P) float64

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D array (rows x channels)")
        if ts.shape[0] != vals.shape[0]:
            raise ValueError("timestamps and values row counts differ")
        if vals.shape[1] != self.schema.n_features:
            raise SchemaError(
                f"expected {self.schema.n_features} feature columns, got {vals.shape[1]}"
            )
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.feature_index(name)]


def load_csv(path: str | Path, schema: ChannelSchema) -> ChannelFrame:
    """Load raw observations from a CSV file, preserving row order.

    The header must contain every schema channel (extra columns are
    ignored). Empty cells become NaN and are dropped later by
    :func:`clean`. A cell that is neither empty nor numeric raises
    :class:`ParseError` with its 1-based data row index.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path}: file has no header row") from None
        header = [h.strip() for h in header]
        col_of = {name: i for i, name in enumerate(header)}
        needed = [TIME_CHANNEL, *schema.feature_names]
        for name in needed:
            if name not in col_of:
                raise SchemaError(f"missing required column {name!r} in {path}")
        indices = [col_of[name] for name in needed]

        rows: list[list[float]] = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            parsed = []
            for name, idx in zip(needed, indices):
                cell = row[idx].strip() if idx < len(row) else ""
                if cell == "":
                    parsed.append(math.nan)
                    continue
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: cannot parse cell {cell!r} in column "
                        f"{name!r}, row {row_no}"
                    ) from None
            rows.append(parsed)

    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(needed))
    return ChannelFrame(schema=schema, timestamps=data[:, 0], values=data[:, 1:])


def write_csv(frame: ChannelFrame, path: str | Path) -> None:
    """Write a frame in the same CSV layout :func:`load_csv` reads."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([TIME_CHANNEL, *frame.schema.feature_names])
        for ts, row in zip(frame.timestamps, frame.values):
            writer.writerow([int(ts), *(repr(float(v)) for v in row)])


def clean(frame: ChannelFrame) -> ChannelFrame:
    """Drop rows with any missing value, deduplicate timestamps, sort.

    Rows containing NaN anywhere (timestamp included) are removed. Among
    rows sharing a timestamp only the first occurrence (in input order)
    is kept. The result is sorted by timestamp ascending.
    """
    ts = frame.timestamps
    vals = frame.values
    keep = np.isfinite(ts) & np.all(np.isfinite(vals), axis=1)
    n_null = int(np.count_nonzero(~keep))
    ts, vals = ts[keep], vals[keep]

    # np.unique returns sorted unique timestamps with the index of the
    # first occurrence of each, which is exactly keep-first-then-sort.
    _, first_idx = np.unique(ts, return_index=True)
    n_dup = ts.shape[0] - first_idx.shape[0]

    if first_idx.size == 0:
        raise EmptyDataError("no rows left after cleaning")
    logger.info(
        "clean: kept %d rows (dropped %d null rows, %d duplicate timestamps)",
        first_idx.size, n_null, n_dup,
    )
    return ChannelFrame(schema=frame.schema, timestamps=ts[first_idx], values=vals[first_idx])


@dataclass(frozen=True)
class ScalerParams:
    """Per-channel min/max pairs mapping each channel onto [-1, 1]."""

    names: tuple[str, ...]
    mins: np.ndarray  # (P,)
    maxs: np.ndarray  # (P,)

    def __post_init__(self) -> None:
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != (len(self.names),) or maxs.shape != (len(self.names),):
            raise ValueError("mins/maxs must be 1-D with one entry per channel")
        if np.any(mins > maxs):
            raise ValueError("per-channel min must not exceed max")
        object.__setattr__(self, "mins", _frozen(mins))
        object.__setattr__(self, "maxs", _frozen(maxs))

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Scale rows of shape (..., P) into [-1, 1], clamping out-of-range
        inputs. Constant channels (min == max) map to 0."""
        values = np.asarray(values, dtype=np.float64)
        span = self.maxs - self.mins
        safe = np.where(span == 0.0, 1.0, span)
        scaled = 2.0 * (values - self.mins) / safe - 1.0
        scaled = np.where(span == 0.0, 0.0, scaled)
        return np.clip(scaled, -1.0, 1.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        """Map scaled values back to original units (constant channels
        return their min)."""
        scaled = np.asarray(scaled, dtype=np.float64)
        span = self.maxs - self.mins
        return self.mins + (scaled + 1.0) * span / 2.0

    def to_json(self) -> dict:
        return {
            "version": SCALER_FORMAT_VERSION,
            "channels": [
                {"name": n, "min": float(lo), "max": float(hi)}
                for n, lo, hi in zip(self.names, self.mins, self.maxs)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScalerParams":
        if doc.get("version") != SCALER_FORMAT_VERSION:
            raise SchemaError(f"unsupported scaler version {doc.get('version')!r}")
        chans = doc["channels"]
        return cls(
            names=tuple(c["name"] for c in chans),
            mins=np.array([c["min"] for c in chans], dtype=np.float64),
            maxs=np.array([c["max"] for c in chans], dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ScalerParams":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_scaler(frame: ChannelFrame) -> ScalerParams:
    """Capture per-channel column extrema of a cleaned, non-empty frame."""
    if frame.n_rows == 0:
        raise EmptyDataError("cannot fit a scaler on an empty frame")
    return ScalerParams(
        names=frame.schema.feature_names,
        mins=frame.values.min(axis=0),
        maxs=frame.values.max(axis=0),
    )


def scaler_from_values(names: Sequence[str], values: np.ndarray) -> ScalerParams:
    """Fit scaler extrema from an array of shape (..., P) (e.g. stacked
    training windows), matching :func:`fit_scaler` on the same rows."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyDataError("cannot fit a scaler on empty values")
    flat = values.reshape(-1, values.shape[-1])
    return ScalerParams(
        names=tuple(names), mins=flat.min(axis=0), maxs=flat.max(axis=0)
    )


def apply_scaler(frame: ChannelFrame, params: ScalerParams) -> ChannelFrame:
    """Return a new frame with values scaled into [-1, 1] per channel."""
    if tuple(params.names) != frame.schema.feature_names:
        raise SchemaError("scaler channel set does not match the frame schema")
    return ChannelFrame(
        schema=frame.schema,
        timestamps=frame.timestamps,
        values=params.transform(frame.values),
    )
