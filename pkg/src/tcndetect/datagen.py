"""Synthetic 1 Hz drive-cycle generator for the stock vehicle schema.

Produces physically plausible, strongly cross-correlated channels: a
rate-limited mean-reverting speed process drives pedal position, engine
load, torque and fuel rate; temperatures are low-pass responses to load;
injector pressure co-moves with fuel rate; gear, torque-converter lockup
and brake switch are threshold functions of speed and acceleration.
Timestamps optionally drop seconds (gap_rate) to exercise the window
contiguity rule.

Every functional form and noise level lives in the constants block below
so the generator can be re-tuned in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .schema import ChannelFrame, ChannelSchema, default_schema

# --- generator constants -------------------------------------------------

BASE_EPOCH = 1_356_998_400  # 2013-01-01T00:00:00Z

# speed setpoint plan: segment length range (s), stop probability, speed range (mph)
SEGMENT_LEN_RANGE = (40, 180)
STOP_PROBABILITY = 0.22
CRUISE_SPEED_RANGE = (6.0, 66.0)

SPEED_PURSUIT_GAIN = 0.12  # fraction of setpoint error applied per second
ACCEL_LIMITS = (-6.0, 3.5)  # mph/s
ACCEL_NOISE_SIGMA = 0.18  # mph/s, suppressed while parked at idle
SPEED_MAX = 70.0

PEDAL_PER_ACCEL = 9.0  # % per mph/s of positive acceleration demand
PEDAL_PER_SPEED = 0.85  # % per mph (cruise throttle to overcome drag)

IDLE_LOAD = 12.0  # % engine load at idle
LOAD_PER_PEDAL = 0.78
TORQUE_IDLE = 8.0
TORQUE_PER_PEDAL = 0.80

FUEL_IDLE = 0.65  # gph burned at idle
FUEL_PER_LOAD = 0.075  # gph per % load above idle
FUEL_PER_SPEED = 0.02  # gph per mph

BOOST_BASE = 1.2  # psi
BOOST_PER_LOAD = 0.21

AMBIENT_MEAN = 78.0  # degF intake-air baseline
AMBIENT_SWING = 9.0
AMBIENT_PERIOD = 5400.0  # s
IMT_PER_LOAD = 0.50
IMT_TAU = 45.0  # s low-pass time constant

COOLANT_TARGET_BASE = 168.0
COOLANT_PER_LOAD = 0.22
COOLANT_TAU = 420.0
COOLANT_INIT = 120.0

TRANS_OIL_TARGET_BASE = 152.0
TRANS_OIL_PER_LOAD = 0.28
TRANS_OIL_TAU = 600.0
TRANS_OIL_INIT = 105.0

GEAR_SPEED_BANDS = (4.0, 12.0, 24.0, 38.0, 52.0)  # upshift thresholds, mph
LOCKUP_MIN_GEAR = 4
LOCKUP_MIN_SPEED = 32.0
BRAKE_DECEL = -0.5  # mph/s; stronger deceleration closes the brake switch
ACTUATION_LAG_S = 1  # gear/lockup/brake react to the previous second

OUTSHAFT_RPM_PER_MPH = 41.0

INJ_BASE = 600.0  # psi at idle fuel rate
INJ_PER_FUEL = 350.0  # psi per gph above idle

ECO_MIN_SPEED = 0.5  # mph; below this fuel economy reads 0

# additive Gaussian noise sigma per generated channel (before re-clipping)
NOISE_SIGMA = {
    "AccelPedalPos": 0.5,
    "PctEngLoad": 1.0,
    "EngPctTorq": 1.0,
    "FuelRate": 0.06,
    "BoostPres": 0.25,
    "IntManfTemp": 0.25,
    "EngCoolantTemp": 0.15,
    "TransOilTemp": 0.15,
    "TrOutShaftSp": 12.0,
    "InjCtlPres": 8.0,
}


@dataclass(frozen=True)
class DriveCycleConfig:
    """Generation parameters. ``noise_scale`` multiplies every channel's
    base noise sigma; ``idle_segments`` forces zero-speed stretches given
    as (start_s, length_s); ``gap_rate`` drops each second independently."""

    duration_s: int = 3600
    seed: int = 0
    noise_scale: float = 1.0
    gap_rate: float = 0.0
    idle_segments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.duration_s < 60:
            raise ConfigError(f"duration_s must be >= 60, got {self.duration_s}")
        if not 0.0 <= self.gap_rate < 0.2:
            raise ConfigError(f"gap_rate must be in [0, 0.2), got {self.gap_rate}")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        object.__setattr__(
            self, "idle_segments", tuple((int(a), int(b)) for a, b in self.idle_segments)
        )


def _setpoint_plan(duration: int, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant target speed: cruise segments and full stops."""
    setpoint = np.empty(duration)
    t = 0
    while t < duration:
        length = int(rng.integers(*SEGMENT_LEN_RANGE))
        if rng.random() < STOP_PROBABILITY:
            value = 0.0
        else:
            value = float(rng.uniform(*CRUISE_SPEED_RANGE))
        setpoint[t : t + length] = value
        t += length
    return setpoint


def _gear_for(speed: np.ndarray) -> np.ndarray:
    gear = np.ones(speed.shape)
    for threshold in GEAR_SPEED_BANDS:
        gear += speed >= threshold
    return gear


def generate(cfg: DriveCycleConfig, schema: ChannelSchema | None = None) -> ChannelFrame:
    """Generate an unscaled 1 Hz :class:`ChannelFrame` for the schema."""
    if schema is None:
        schema = default_schema()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.duration_s

    setpoint = _setpoint_plan(n, rng)
    for start, length in cfg.idle_segments:
        setpoint[max(start, 0) : start + length] = 0.0

    accel_noise = rng.normal(0.0, ACCEL_NOISE_SIGMA, size=n)
    speed = np.zeros(n)
    accel = np.zeros(n)
    v = 0.0
    for t in range(n):
        if setpoint[t] == 0.0 and v < 0.5:
            # rolled to a stop: rest exactly at zero, no jitter
            accel[t] = -v
            v = 0.0
            speed[t] = 0.0
            continue
        a = np.clip(SPEED_PURSUIT_GAIN * (setpoint[t] - v), *ACCEL_LIMITS)
        a = float(np.clip(a + accel_noise[t], *ACCEL_LIMITS))
        new_v = float(np.clip(v + a, 0.0, SPEED_MAX))
        accel[t] = new_v - v
        v = new_v
        speed[t] = v

    def noise(name: str) -> np.ndarray:
        return rng.normal(0.0, NOISE_SIGMA[name] * cfg.noise_scale, size=n)

    pedal = np.clip(
        PEDAL_PER_ACCEL * np.maximum(accel, 0.0) + PEDAL_PER_SPEED * speed + noise("AccelPedalPos"),
        0.0, 100.0,
    )
    pedal[speed == 0.0] = 0.0
    load = np.clip(IDLE_LOAD + LOAD_PER_PEDAL * pedal + noise("PctEngLoad"), 0.0, 100.0)
    torque = np.clip(TORQUE_IDLE + TORQUE_PER_PEDAL * pedal + noise("EngPctTorq"), 0.0, 100.0)
    fuel = np.maximum(
        FUEL_IDLE + FUEL_PER_LOAD * (load - IDLE_LOAD) + FUEL_PER_SPEED * speed + noise("FuelRate"),
        0.1,
    )
    boost = np.clip(BOOST_BASE + BOOST_PER_LOAD * (load - IDLE_LOAD) + noise("BoostPres"), 0.3, 35.0)

    seconds = np.arange(n)
    ambient = AMBIENT_MEAN + AMBIENT_SWING * np.sin(
        2.0 * np.pi * seconds / AMBIENT_PERIOD + rng.uniform(0.0, 2.0 * np.pi)
    )

    def lowpass(target: np.ndarray, tau: float, init: float) -> np.ndarray:
        out = np.empty(n)
        state = init
        alpha = 1.0 / tau
        for t in range(n):
            state += alpha * (target[t] - state)
            out[t] = state
        return out

    imt = lowpass(ambient + IMT_PER_LOAD * load, IMT_TAU, ambient[0] + IMT_PER_LOAD * IDLE_LOAD)
    imt = imt + noise("IntManfTemp")
    coolant = lowpass(COOLANT_TARGET_BASE + COOLANT_PER_LOAD * load, COOLANT_TAU, COOLANT_INIT)
    coolant = coolant + noise("EngCoolantTemp")
    trans_oil = lowpass(
        TRANS_OIL_TARGET_BASE + TRANS_OIL_PER_LOAD * load, TRANS_OIL_TAU, TRANS_OIL_INIT
    )
    trans_oil = trans_oil + noise("TransOilTemp")

    # drivetrain state reacts with a one-second actuation lag, so these
    # channels are exact functions of the observable history
    lag = ACTUATION_LAG_S
    speed_lagged = np.concatenate([np.zeros(lag), speed[:-lag]])
    accel_lagged = np.concatenate([np.zeros(lag), accel[:-lag]])
    gear = _gear_for(speed_lagged)
    lockup = ((gear >= LOCKUP_MIN_GEAR) & (speed_lagged >= LOCKUP_MIN_SPEED)).astype(np.float64)
    brake = (accel_lagged < BRAKE_DECEL).astype(np.float64)
    outshaft = np.clip(OUTSHAFT_RPM_PER_MPH * speed + noise("TrOutShaftSp"), 0.0, None)
    outshaft[speed == 0.0] = 0.0
    inj = np.maximum(INJ_BASE + INJ_PER_FUEL * (fuel - FUEL_IDLE) + noise("InjCtlPres"), 100.0)
    eco = np.where(speed >= ECO_MIN_SPEED, speed / fuel, 0.0)

    by_name = {
        "EngCoolantTemp": coolant,
        "PctEngLoad": load,
        "EngPctTorq": torque,
        "BoostPres": boost,
        "AccelPedalPos": pedal,
        "IntManfTemp": imt,
        "VehSpeedEng": speed,
        "TransOilTemp": trans_oil,
        "TrSelGr": gear,
        "TransTorqConvLockupEngaged": lockup,
        "TrOutShaftSp": outshaft,
        "FuelRate": fuel,
        "InstFuelEco": eco,
        "InjCtlPres": inj,
        "BrakeSwitch": brake,
    }
    missing = [name for name in schema.feature_names if name not in by_name]
    if missing:
        raise ConfigError(f"generator does not model channels: {missing}")
    values = np.column_stack([by_name[name] for name in schema.feature_names])
    timestamps = BASE_EPOCH + seconds.astype(np.float64)

    if cfg.gap_rate > 0.0:
        keep = rng.random(n) >= cfg.gap_rate
        values = values[keep]
        timestamps = timestamps[keep]

    return ChannelFrame(schema=schema, timestamps=timestamps, values=values)
