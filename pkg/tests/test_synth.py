import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pancluster import synth
from pancluster.core import Scene
from pancluster.losses import fragmentation_loss
from pancluster.softmat import build_from_ids
from pancluster.synth import (
    DEFAULT_OBJECTS,
    PlacementError,
    SynthConfig,
    generate,
    make_fragmented,
    make_merged,
    toy_config,
)


def test_zero_objects_all_stuff():
    s = generate(SynthConfig(num_objects=(0, 0)), 0)
    assert np.all(s.inst_gt == 0)
    assert set(np.unique(s.sem_gt)) <= {synth.ROAD, synth.VEGETATION}


def test_deterministic():
    a, b = generate(SynthConfig(seed=5), 3), generate(SynthConfig(seed=5), 3)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.inst_gt, b.inst_gt)
    c = generate(SynthConfig(seed=5), 4)
    assert len(a) != len(c) or not np.array_equal(a.points, c.points)


def test_exact_object_count():
    s = generate(SynthConfig(num_objects=(5, 5)), 0)
    assert s.instance_ids.tolist() == [1, 2, 3, 4, 5]


def test_infeasible_placement():
    with pytest.raises(PlacementError):
        generate(SynthConfig(num_objects=(5, 5), placement_radius=1.0, max_retries=20), 0)
    with pytest.raises(PlacementError):
        generate(toy_config(num_objects=(10, 10)), 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(scene_radius=0)
    with pytest.raises(ValueError):
        SynthConfig(num_objects=(3, 2))
    with pytest.raises(ValueError):
        SynthConfig(layout="spiral")


def test_stream_matches_generate():
    cfg = SynthConfig(seed=2)
    stream = synth.scene_stream(cfg, start=7)
    for i in (7, 8):
        assert np.array_equal(next(stream).points, generate(cfg, i).points)


@st.composite
def configs(draw):
    lo = draw(st.integers(0, 5))
    return SynthConfig(
        seed=draw(st.integers(0, 2**31)),
        num_objects=(lo, draw(st.integers(lo, 5))),
        layout=draw(st.sampled_from(["uniform", "slots"])),
        occlusion=draw(st.sampled_from([0.0, 0.3, 0.6])),
        noise_sigma=draw(st.sampled_from([0.0, 0.03, 0.2])),
        class_mix={c: 1.0 for c in draw(st.sets(st.sampled_from(sorted(DEFAULT_OBJECTS)), min_size=1))},
    )


@given(configs(), st.integers(0, 1000))
def test_generated_scenes_are_valid(cfg, index):
    s = generate(cfg, index)
    Scene(s.points, s.sem_gt, s.inst_gt, synth.micro_taxonomy())
    assert cfg.num_objects[0] <= len(s.instance_ids) <= cfg.num_objects[1]


@given(configs(), st.integers(0, 1000))
def test_object_points_stay_near_their_box(cfg, index):
    s = generate(cfg, index)
    for iid in s.instance_ids:
        m = s.inst_gt == iid
        spec = cfg.objects[int(s.sem_gt[m][0])]
        bound = np.linalg.norm(spec.half_extent) + 3 * cfg.noise_sigma
        xyz = s.points[m, :3]
        diam = np.max(np.linalg.norm(xyz[:, None] - xyz[None], axis=2))
        assert diam <= 2 * bound + 1e-9


def test_fragmented_one_part_is_gt():
    s = generate(SynthConfig(seed=1), 0)
    label = make_fragmented(s, 1)
    assert np.array_equal(label.inst, s.inst_gt)


def test_fragmented_four_parts():
    s = generate(SynthConfig(num_objects=(1, 1)), 0)
    label = make_fragmented(s, 4)
    assert len(np.unique(label.inst[label.inst > 0])) == 4
    assert np.array_equal(label.sem, s.sem_gt)


def test_fragmented_hard_assignment_has_fragments():
    s = generate(SynthConfig(num_objects=(2, 3)), 0)
    label = make_fragmented(s, 4)
    onehot = np.eye(label.inst.max() + 1)[label.inst]
    S = build_from_ids(s.inst_gt, onehot)
    assert fragmentation_loss(S).value > 0


def test_merged_pairs_same_class():
    cfg = SynthConfig(num_objects=(4, 4), class_mix={synth.CAR: 1.0})
    s = generate(cfg, 0)
    label = make_merged(s)
    assert len(np.unique(label.inst[label.inst > 0])) == 2
    assert np.array_equal(label.inst > 0, s.inst_gt > 0)
