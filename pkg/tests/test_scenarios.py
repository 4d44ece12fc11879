import numpy as np
import pytest

from tcndetect.errors import ConfigError, SchemaError
from tcndetect.scenarios import (
    Direction,
    InjectionConfig,
    assign_scenarios,
    anomalous_cases,
    catalog,
    decode_label,
    encode_label,
    inject,
    read_manifest,
    write_manifest,
)
from tcndetect.schema import default_schema

SCHEMA = default_schema()
P = SCHEMA.n_features

S, U, D = Direction.STEADY, Direction.UP, Direction.DOWN

# literal transcription of the three scenario tables:
# (scenario, case) -> (directions per involved channel, verdict)
EXPECTED = {
    (1, 1): ((S, S, S), False),
    (1, 2): ((S, D, D), True),
    (1, 3): ((S, U, D), True),
    (1, 4): ((U, U, U), False),
    (1, 5): ((U, D, D), True),
    (1, 6): ((D, U, U), True),
    (1, 7): ((D, D, D), False),
    (2, 1): ((S, S), False),
    (2, 2): ((S, U), True),
    (2, 3): ((S, D), True),
    (2, 4): ((U, D), False),
    (2, 5): ((D, U), True),
    (2, 6): ((U, U), True),
    (2, 7): ((D, D), True),
    (3, 1): ((S, S), False),
    (3, 2): ((S, U), True),
    (3, 3): ((S, D), True),
    (3, 4): ((U, D), True),
    (3, 5): ((D, U), True),
    (3, 6): ((U, U), False),
    (3, 7): ((D, D), False),
}

CHANNELS = {
    1: ("FuelRate", "AccelPedalPos", "TrSelGr"),
    2: ("FuelRate", "IntManfTemp"),
    3: ("FuelRate", "InjCtlPres"),
}


class TestCatalog:
    def test_has_21_cases_in_order(self):
        cases = catalog()
        assert len(cases) == 21
        assert [(c.scenario_id, c.case_id) for c in cases] == sorted(EXPECTED)

    def test_matches_literal_transcription(self):
        for case in catalog():
            dirs, verdict = EXPECTED[(case.scenario_id, case.case_id)]
            channels = CHANNELS[case.scenario_id]
            assert tuple(case.directions[ch] for ch in channels) == dirs
            assert case.is_anomaly == verdict
            assert set(case.directions) == set(channels)

    def test_anomalous_case_sets(self):
        by_scenario = {1: set(), 2: set(), 3: set()}
        for case in anomalous_cases():
            by_scenario[case.scenario_id].add(case.case_id)
        assert by_scenario == {1: {2, 3, 5, 6}, 2: {2, 3, 5, 6, 7}, 3: {2, 3, 4, 5}}

    def test_all_normal_examples(self):
        cases = {(c.scenario_id, c.case_id): c for c in catalog()}
        assert cases[(1, 1)].is_anomaly is False
        assert cases[(2, 4)].is_anomaly is False
        assert cases[(3, 4)].is_anomaly is True

    def test_directions_are_immutable(self):
        case = catalog()[0]
        with pytest.raises(TypeError):
            case.directions["FuelRate"] = Direction.UP


class TestLabels:
    def test_encode_decode(self):
        for scenario in (1, 2, 3):
            for case in range(1, 8):
                code = encode_label(scenario, case)
                assert 0 < code < 256
                assert decode_label(code) == (scenario, case)
        assert decode_label(0) is None


class TestInject:
    def rng_targets(self, n, seed=0):
        return np.random.default_rng(seed).uniform(-0.6, 0.6, size=(n, P))

    def test_exact_corruption_count(self):
        targets = self.rng_targets(8953)
        modified, labels, manifest = inject(targets, SCHEMA, InjectionConfig(seed=1))
        assert int((labels != 0).sum()) == 1790
        assert len(manifest) == 1790

    def test_values_stay_bounded(self):
        targets = self.rng_targets(500)
        modified, labels, _ = inject(targets, SCHEMA, InjectionConfig(seed=2))
        assert modified.min() >= -1.0 and modified.max() <= 1.0

    def test_clamp_saturates(self):
        targets = np.zeros((10, P))
        targets[:, SCHEMA.feature_index("IntManfTemp")] = 0.8
        cfg = InjectionConfig(rate=0.5, magnitudes=(1.0,), seed=3)
        up_case = [c for c in anomalous_cases() if c.scenario_id == 2 and c.case_id == 2]
        modified, labels, manifest = inject(targets, SCHEMA, cfg, cases=up_case)
        col = SCHEMA.feature_index("IntManfTemp")
        for rec in manifest:
            assert modified[rec["window_index"], col] == 1.0  # 0.8 + 1.0 clamped

    def test_steady_channels_bit_identical(self):
        targets = self.rng_targets(600, seed=4)
        modified, labels, manifest = inject(targets, SCHEMA, InjectionConfig(seed=5))
        corrupted = {rec["window_index"]: rec for rec in manifest}
        by_case = {(c.scenario_id, c.case_id): c for c in catalog()}
        for widx in range(600):
            if widx not in corrupted:
                assert np.array_equal(modified[widx], targets[widx])
                continue
            rec = corrupted[widx]
            case = by_case[(rec["scenario"], rec["case"])]
            for col, name in enumerate(SCHEMA.feature_names):
                direction = case.directions.get(name, Direction.STEADY)
                if direction is Direction.STEADY:
                    assert modified[widx, col] == targets[widx, col]
                elif direction is Direction.UP:
                    assert modified[widx, col] >= targets[widx, col]
                else:
                    assert modified[widx, col] <= targets[widx, col]

    def test_scenario2_case2_signature(self):
        targets = self.rng_targets(400, seed=6)
        modified, labels, manifest = inject(targets, SCHEMA, InjectionConfig(seed=7))
        fuel = SCHEMA.feature_index("FuelRate")
        imt = SCHEMA.feature_index("IntManfTemp")
        hits = [r for r in manifest if r["scenario"] == 2 and r["case"] == 2]
        assert hits, "expected at least one scenario-2 case-2 draw"
        for rec in hits:
            widx = rec["window_index"]
            assert modified[widx, fuel] == targets[widx, fuel]
            assert modified[widx, imt] > targets[widx, imt]

    def test_labels_encode_scenario_and_case(self):
        targets = self.rng_targets(300, seed=8)
        _, labels, manifest = inject(targets, SCHEMA, InjectionConfig(seed=9))
        for rec in manifest:
            assert labels[rec["window_index"]] == encode_label(rec["scenario"], rec["case"])

    def test_inputs_never_modified(self):
        targets = self.rng_targets(100, seed=10)
        original = targets.copy()
        inject(targets, SCHEMA, InjectionConfig(seed=11))
        np.testing.assert_array_equal(targets, original)

    def test_deterministic(self):
        targets = self.rng_targets(250, seed=12)
        a = inject(targets, SCHEMA, InjectionConfig(seed=13))
        b = inject(targets, SCHEMA, InjectionConfig(seed=13))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert a[2] == b[2]

    def test_magnitudes_from_set(self):
        targets = np.zeros((400, P))
        _, _, manifest = inject(targets, SCHEMA, InjectionConfig(seed=14))
        mags = {rec["magnitude"] for rec in manifest}
        assert mags == {1.0, 1.5}

    def test_interval_magnitude_mode(self):
        targets = np.zeros((400, P))
        cfg = InjectionConfig(magnitude_mode="interval", seed=15)
        _, _, manifest = inject(targets, SCHEMA, cfg)
        mags = np.array([rec["magnitude"] for rec in manifest])
        assert np.all((mags >= 1.0) & (mags <= 1.5))
        assert len(set(np.round(mags, 6))) > 10

    def test_empty_case_list_rejected(self):
        with pytest.raises(ConfigError):
            inject(np.zeros((10, P)), SCHEMA, InjectionConfig(seed=0), cases=[])

    def test_unknown_channel_rejected(self):
        from tcndetect.scenarios import ScenarioCase

        bogus = ScenarioCase(1, 2, {"NoSuchChannel": Direction.UP}, True)
        with pytest.raises(SchemaError):
            inject(np.zeros((10, P)), SCHEMA, InjectionConfig(seed=0), cases=[bogus])


class TestAssignScenarios:
    def test_empty(self):
        assert assign_scenarios(0, seed=0).size == 0

    def test_binomial_bound(self):
        ids = assign_scenarios(3000, seed=42)
        sigma = np.sqrt(3000 * (1 / 3) * (2 / 3))
        for scenario in (1, 2, 3):
            count = int((ids == scenario).sum())
            assert abs(count - 1000) <= 3 * sigma

    def test_deterministic(self):
        np.testing.assert_array_equal(assign_scenarios(100, seed=7), assign_scenarios(100, seed=7))

    def test_values_in_range(self):
        ids = assign_scenarios(500, seed=1)
        assert set(np.unique(ids)) <= {1, 2, 3}


class TestManifestIO:
    def test_jsonl_round_trip(self, tmp_path):
        targets = np.random.default_rng(20).uniform(-0.5, 0.5, size=(80, P))
        _, _, manifest = inject(targets, SCHEMA, InjectionConfig(seed=21))
        path = tmp_path / "inj.jsonl"
        write_manifest(manifest, path)
        assert read_manifest(path) == manifest
        assert len(path.read_text().strip().splitlines()) == len(manifest)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rate": 0.0},
            {"rate": 1.0},
            {"magnitudes": ()},
            {"magnitudes": (-1.0,)},
            {"magnitude_mode": "gaussian"},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            InjectionConfig(**kwargs)
