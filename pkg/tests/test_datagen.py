import numpy as np
import pytest

from tcndetect.datagen import DriveCycleConfig, generate
from tcndetect.errors import ConfigError
from tcndetect.schema import clean, default_schema, load_csv, write_csv
from tcndetect.windowing import WindowConfig, make_windows

SCHEMA = default_schema()


class TestGenerate:
    def test_deterministic(self):
        a = generate(DriveCycleConfig(duration_s=600, seed=5))
        b = generate(DriveCycleConfig(duration_s=600, seed=5))
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.timestamps, b.timestamps)

    def test_seeds_differ(self):
        a = generate(DriveCycleConfig(duration_s=600, seed=5))
        b = generate(DriveCycleConfig(duration_s=600, seed=6))
        assert not np.array_equal(a.values, b.values)

    def test_physical_ranges(self):
        frame = generate(DriveCycleConfig(duration_s=3600, seed=1))
        col = frame.column
        for name in ("AccelPedalPos", "PctEngLoad", "EngPctTorq"):
            assert col(name).min() >= 0.0 and col(name).max() <= 100.0
        for name in ("BrakeSwitch", "TransTorqConvLockupEngaged"):
            assert set(np.unique(col(name))) <= {0.0, 1.0}
        gear = col("TrSelGr")
        assert set(np.unique(gear)) <= set(np.arange(1.0, 7.0))
        assert col("VehSpeedEng").min() >= 0.0
        assert col("FuelRate").min() > 0.0
        assert col("InjCtlPres").min() > 0.0

    def test_idle_segment_behavior(self):
        cfg = DriveCycleConfig(
            duration_s=900, seed=2, idle_segments=((300, 200),)
        )
        frame = generate(cfg)
        # interior of the forced idle stretch, after the stop transient
        sl = slice(340, 480)
        assert np.all(frame.column("VehSpeedEng")[sl] == 0.0)
        assert np.all(frame.column("TrSelGr")[sl] == 1.0)
        brake = frame.column("BrakeSwitch")[sl]
        assert np.all(brake == brake[0])

    def test_fuel_pedal_correlation(self):
        frame = generate(DriveCycleConfig(duration_s=3600, seed=3))
        corr = np.corrcoef(frame.column("FuelRate"), frame.column("AccelPedalPos"))[0, 1]
        assert corr > 0.6

    def test_gap_free_timestamps_window_cleanly(self):
        frame = generate(DriveCycleConfig(duration_s=300, seed=4, gap_rate=0.0))
        assert np.all(np.diff(frame.timestamps) == 1.0)
        ws = make_windows(clean(frame), WindowConfig())
        assert ws.n_windows == frame.n_rows - 20 + 1  # nothing discarded

    def test_gap_rate_drops_rows(self):
        cfg = DriveCycleConfig(duration_s=10000, seed=5, gap_rate=0.05)
        frame = generate(cfg)
        sigma = np.sqrt(10000 * 0.05 * 0.95)
        assert abs(frame.n_rows - 9500) <= 3 * sigma

    def test_csv_round_trip_through_ingest(self, tmp_path):
        frame = generate(DriveCycleConfig(duration_s=300, seed=6))
        path = tmp_path / "fleet.csv"
        write_csv(frame, path)
        again = load_csv(path, SCHEMA)
        np.testing.assert_array_equal(again.timestamps, frame.timestamps)
        np.testing.assert_allclose(again.values, frame.values, rtol=0, atol=0)

    def test_injector_pressure_tracks_fuel(self):
        frame = generate(DriveCycleConfig(duration_s=3600, seed=7))
        corr = np.corrcoef(frame.column("InjCtlPres"), frame.column("FuelRate"))[0, 1]
        assert corr > 0.9

    def test_eco_guarded_at_idle(self):
        frame = generate(DriveCycleConfig(duration_s=900, seed=8, idle_segments=((200, 100),)))
        eco = frame.column("InstFuelEco")
        speed = frame.column("VehSpeedEng")
        assert np.all(eco[speed == 0.0] == 0.0)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"duration_s": 10},
            {"gap_rate": 0.5},
            {"gap_rate": -0.1},
            {"noise_scale": -1.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            DriveCycleConfig(**kwargs)
