import json
import logging

import pytest
from hypothesis import given, strategies as st

from nerfplan.core import (
    AllocationPlan,
    ConfigPair,
    ConfigSpace,
    DeviceBudget,
    PlanEntry,
    SampleObservation,
    SceneDescriptor,
    SceneObject,
    device_preset,
    load_scene,
    save_scene,
    validate_scene,
    write_json,
)


def make_scene(ids=("a", "b"), g_values=(8, 16), p_values=(4, 8)):
    objects = tuple(
        SceneObject(object_id=i, space=ConfigSpace.product(i, g_values, p_values))
        for i in ids
    )
    return SceneDescriptor(objects=objects, budget=DeviceBudget("iphone13", 240.0))


class TestConfigPair:
    def test_requires_positive_values(self):
        with pytest.raises(ValueError):
            ConfigPair(0, 4)
        with pytest.raises(ValueError):
            ConfigPair(4, 0)

    def test_product_space_pairs_are_unique(self):
        space = ConfigSpace.product("o", [8, 16, 32], [4, 8])
        assert len(space.pairs) == 6
        assert len(set(space.pairs)) == 6


class TestDeviceBudget:
    def test_presets(self):
        assert device_preset("iphone13").capacity_mb == 240.0
        assert device_preset("pixel4").capacity_mb == 150.0

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            device_preset("nokia3310")

    def test_positive_capacity(self):
        with pytest.raises(ValueError):
            DeviceBudget("x", 0.0)


class TestSampleObservation:
    def test_quality_clamped_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="nerfplan"):
            obs = SampleObservation(ConfigPair(8, 4), 1.0, 1.25)
        assert obs.quality == 1.0
        assert "clamped" in caplog.text

    def test_negative_size_rejected(self):
        with pytest.raises(ValueError):
            SampleObservation(ConfigPair(8, 4), -1.0, 0.5)


class TestAllocationPlan:
    def entries(self):
        return [
            PlanEntry("a", ConfigPair(8, 4), 10.0, 0.5),
            PlanEntry("b", ConfigPair(16, 8), 20.0, 0.25),
        ]

    def test_totals_recomputed(self):
        plan = AllocationPlan.from_entries(self.entries(), budget_mb=100.0, solver="dp")
        assert plan.total_size_mb == 30.0
        assert plan.total_quality == 0.75

    def test_budget_enforced(self):
        with pytest.raises(ValueError):
            AllocationPlan.from_entries(self.entries(), budget_mb=29.0, solver="dp")

    def test_one_entry_per_object(self):
        dup = self.entries() + [PlanEntry("a", ConfigPair(16, 8), 1.0, 0.1)]
        with pytest.raises(ValueError):
            AllocationPlan.from_entries(dup, budget_mb=100.0, solver="dp")

    def test_totals_ignored_on_decode(self):
        plan = AllocationPlan.from_entries(self.entries(), budget_mb=100.0, solver="dp")
        d = plan.to_dict()
        d["total_quality"] = 99.0  # tampered; decode must recompute
        assert AllocationPlan.from_dict(d) == plan


class TestValidateScene:
    def test_duplicate_object_id(self):
        scene = make_scene(ids=("chair", "chair"))
        report = validate_scene(scene)
        assert len(report) == 1
        assert "duplicate object id" in report[0]

    def test_non_increasing_g_values(self):
        scene = make_scene(ids=("a",), g_values=(16, 8))
        report = validate_scene(scene)
        assert any("g_values not strictly increasing" in v for v in report)

    def test_well_formed_scene_is_clean(self):
        scene = make_scene(ids=("a", "b", "c", "d", "e"))
        assert validate_scene(scene) == []


config_pairs = st.builds(
    ConfigPair, g=st.integers(1, 512), p=st.integers(1, 64)
)
value_lists = st.lists(st.integers(1, 512), min_size=1, max_size=6, unique=True).map(sorted)


class TestJsonRoundTrip:
    @given(config_pairs)
    def test_config_pair(self, pair):
        assert ConfigPair.from_dict(pair.to_dict()) == pair

    @given(value_lists, value_lists)
    def test_config_space(self, gs, ps):
        space = ConfigSpace.product("obj", gs, ps)
        assert ConfigSpace.from_dict("obj", space.to_dict()) == space

    @given(st.floats(0.1, 1e4))
    def test_device_budget(self, cap):
        budget = DeviceBudget("dev", cap)
        assert DeviceBudget.from_dict(budget.to_dict()) == budget

    @given(config_pairs, st.floats(0, 1e4), st.floats(0, 1))
    def test_sample_observation(self, pair, size, quality):
        obs = SampleObservation(pair, size, quality)
        assert SampleObservation.from_dict(obs.to_dict()) == obs

    @given(
        st.lists(
            st.tuples(config_pairs, st.floats(0, 100), st.floats(0, 1)),
            min_size=1,
            max_size=5,
        )
    )
    def test_allocation_plan(self, raw):
        entries = [
            PlanEntry(f"obj{i}", pair, size, quality)
            for i, (pair, size, quality) in enumerate(raw)
        ]
        plan = AllocationPlan.from_entries(entries, budget_mb=1e6, solver="dp")
        assert AllocationPlan.from_dict(plan.to_dict()) == plan

    def test_scene_file_round_trip(self, tmp_path):
        scene = make_scene()
        path = str(tmp_path / "scene.json")
        save_scene(path, scene)
        assert load_scene(path) == scene

    def test_scene_json_schema(self, tmp_path):
        path = str(tmp_path / "scene.json")
        write_json(
            path,
            {
                "objects": [
                    {
                        "id": "chair",
                        "space": {"g_values": [16, 32], "p_values": [8, 17]},
                        "samples": [{"g": 16, "p": 8, "size_mb": 3.5, "quality": 0.41}],
                    }
                ],
                "budget": {"name": "pixel4", "capacity_mb": 150.0},
            },
        )
        scene = load_scene(path)
        assert scene.objects[0].object_id == "chair"
        assert scene.objects[0].samples[0].size_mb == 3.5
        assert scene.budget.capacity_mb == 150.0


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.json"
    write_json(str(target), {"x": 1})
    assert json.loads(target.read_text()) == {"x": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]
