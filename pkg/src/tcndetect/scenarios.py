"""Synthetic anomaly scenarios and target-observation injection.

Three scenario families probe fuel-system consistency: each of the 21
cases fixes a direction (steady, up, down) per involved channel and a
verdict saying whether that co-movement is anomalous. Injection corrupts
a seeded 20% sample of test targets: a corrupted window draws one
anomalous case from its assigned scenario and a magnitude, then shifts
each non-steady channel by that magnitude, clamped to [-1, 1]. Input
sequences are never modified.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .schema import ChannelSchema

logger = logging.getLogger(__name__)

CLAMP_LO = -1.0
CLAMP_HI = 1.0

LABEL_NORMAL = 0


class Direction(str, Enum):
    STEADY = "steady"
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class ScenarioCase:
    """One catalog row: scenario id, case id, per-channel directions for
    the channels the scenario involves, and the anomaly verdict."""

    scenario_id: int
    case_id: int
    directions: Mapping[str, Direction]
    is_anomaly: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "directions", MappingProxyType(dict(self.directions)))


_S = Direction.STEADY
_U = Direction.UP
_D = Direction.DOWN

SCENARIO_CHANNELS: dict[int, tuple[str, ...]] = {
    1: ("FuelRate", "AccelPedalPos", "TrSelGr"),
    2: ("FuelRate", "IntManfTemp"),
    3: ("FuelRate", "InjCtlPres"),
}

# (case directions in SCENARIO_CHANNELS order, is_anomaly)
_CATALOG_ROWS: dict[int, tuple[tuple[tuple[Direction, ...], bool], ...]] = {
    1: (
        ((_S, _S, _S), False),
        ((_S, _D, _D), True),
        ((_S, _U, _D), True),
        ((_U, _U, _U), False),
        ((_U, _D, _D), True),
        ((_D, _U, _U), True),
        ((_D, _D, _D), False),
    ),
    2: (
        ((_S, _S), False),
        ((_S, _U), True),
        ((_S, _D), True),
        ((_U, _D), False),
        ((_D, _U), True),
        ((_U, _U), True),
        ((_D, _D), True),
    ),
    3: (
        ((_S, _S), False),
        ((_S, _U), True),
        ((_S, _D), True),
        ((_U, _D), True),
        ((_D, _U), True),
        ((_U, _U), False),
        ((_D, _D), False),
    ),
}


def catalog() -> tuple[ScenarioCase, ...]:
    """All 21 scenario cases in (scenario, case) order."""
    cases = []
    for scenario_id, rows in sorted(_CATALOG_ROWS.items()):
        channels = SCENARIO_CHANNELS[scenario_id]
        for case_no, (dirs, verdict) in enumerate(rows, start=1):
            cases.append(
                ScenarioCase(
                    scenario_id=scenario_id,
                    case_id=case_no,
                    directions=dict(zip(channels, dirs)),
                    is_anomaly=verdict,
                )
            )
    return tuple(cases)


def anomalous_cases() -> tuple[ScenarioCase, ...]:
    return tuple(c for c in catalog() if c.is_anomaly)


def encode_label(scenario_id: int, case_id: int) -> int:
    """Pack (scenario, case) into the uint8 window label code."""
    return 10 * scenario_id + case_id


def decode_label(code: int) -> tuple[int, int] | None:
    """Inverse of :func:`encode_label`; None for the normal code 0."""
    if code == LABEL_NORMAL:
        return None
    return code // 10, code % 10


@dataclass(frozen=True)
class InjectionConfig:
    """Injection protocol parameters.

    ``magnitude_mode`` "set" draws uniformly from the ``magnitudes``
    values; "interval" draws uniformly between their min and max.
    """

    rate: float = 0.2
    magnitudes: tuple[float, ...] = (1.0, 1.5)
    magnitude_mode: str = "set"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "magnitudes", tuple(float(m) for m in self.magnitudes))
        if not 0.0 < self.rate < 1.0:
            raise ConfigError(f"injection rate must be in (0, 1), got {self.rate}")
        if not self.magnitudes or any(m <= 0 for m in self.magnitudes):
            raise ConfigError("magnitudes must be a non-empty set of positive values")
        if self.magnitude_mode not in ("set", "interval"):
            raise ConfigError(f"unknown magnitude_mode {self.magnitude_mode!r}")


def assign_scenarios(n_corrupt: int, seed: int) -> np.ndarray:
    """Draw a scenario id in {1, 2, 3} independently and uniformly for
    each corrupted window."""
    if n_corrupt < 0:
        raise ConfigError("n_corrupt must be >= 0")
    ids = np.random.default_rng(seed).integers(1, 4, size=n_corrupt)
    if n_corrupt:
        counts = {s: int((ids == s).sum()) for s in (1, 2, 3)}
        logger.info("scenario assignment composition: %s", counts)
    return ids


def inject(
    test_targets: np.ndarray,
    schema: ChannelSchema,
    cfg: InjectionConfig,
    cases: Sequence[ScenarioCase] | None = None,
) -> tuple[np.ndarray, np.ndarray, list[dict]]:
    """Corrupt a seeded sample of test target observations.

    Returns ``(modified_targets, labels, manifest)``: a modified copy of
    the targets, a per-window uint8 label array, and one manifest record
    per corrupted window (ordered by window index) holding the applied
    scenario, case, magnitude, and per-channel before/after values.

    Case and magnitude draws use a generator derived from
    ``(cfg.seed, window_index)``, so per-window work is independent of
    iteration order.
    """
    targets = np.array(test_targets, dtype=np.float64)  # working copy
    if targets.ndim != 2:
        raise DataError("test targets must be a 2-D array (N, P)")
    if cases is None:
        cases = anomalous_cases()
    cases = [c for c in cases if c.is_anomaly]
    if not cases:
        raise ConfigError("no anomalous scenario cases supplied")
    by_scenario: dict[int, list[ScenarioCase]] = {}
    for case in cases:
        by_scenario.setdefault(case.scenario_id, []).append(case)
    for case in cases:
        for name in case.directions:
            schema.feature_index(name)  # raises SchemaError when unknown

    n = targets.shape[0]
    n_corrupt = int(np.floor(cfg.rate * n))
    rng = np.random.default_rng(cfg.seed)
    corrupt_idx = rng.choice(n, size=n_corrupt, replace=False)
    # uniform over the scenarios the supplied cases cover; identical to
    # assign_scenarios(n, cfg.seed + 1) when all three are present
    pool = np.array(sorted(by_scenario))
    draws = np.random.default_rng(cfg.seed + 1).integers(0, pool.size, size=n_corrupt)
    scenario_ids = pool[draws]

    labels = np.zeros(n, dtype=np.uint8)
    manifest: list[dict] = []
    order = np.argsort(corrupt_idx)
    for pos in order:
        widx = int(corrupt_idx[pos])
        scenario_id = int(scenario_ids[pos])
        pool = by_scenario.get(scenario_id)
        if not pool:
            raise ConfigError(f"no anomalous cases available for scenario {scenario_id}")
        wrng = np.random.default_rng((cfg.seed, widx))
        case = pool[int(wrng.integers(len(pool)))]
        if cfg.magnitude_mode == "set":
            magnitude = float(cfg.magnitudes[int(wrng.integers(len(cfg.magnitudes)))])
        else:
            magnitude = float(wrng.uniform(min(cfg.magnitudes), max(cfg.magnitudes)))

        channels = []
        for name, direction in case.directions.items():
            col = schema.feature_index(name)
            before = float(targets[widx, col])
            if direction is Direction.UP:
                after = min(before + magnitude, CLAMP_HI)
            elif direction is Direction.DOWN:
                after = max(before - magnitude, CLAMP_LO)
            else:
                after = before
            targets[widx, col] = after
            channels.append({"name": name, "before": before, "after": after})
        labels[widx] = encode_label(case.scenario_id, case.case_id)
        manifest.append(
            {
                "window_index": widx,
                "scenario": case.scenario_id,
                "case": case.case_id,
                "magnitude": magnitude,
                "channels": channels,
            }
        )
    logger.info("injected anomalies into %d of %d test windows", n_corrupt, n)
    return targets, labels, manifest


def write_manifest(manifest: list[dict], path: str | Path) -> None:
    """One JSON record per corrupted window, one per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in manifest:
            fh.write(json.dumps(record) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
