import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pancluster.core import ValidationError
from pancluster.fusion import fuse
from pancluster.synth import CAR, PERSON, ROAD, VEGETATION


def _partition(inst):
    groups = {}
    for p, i in enumerate(inst):
        if i > 0:
            groups.setdefault(int(i), []).append(p)
    return sorted(map(tuple, groups.values()))


def test_all_stuff(taxonomy):
    out = fuse([ROAD, VEGETATION, ROAD], [4, 4, 0], taxonomy)
    assert out.inst.tolist() == [0, 0, 0]


def test_shift_by_one(taxonomy):
    sem = [CAR] * 5 + [ROAD] * 3
    out = fuse(sem, [3] * 5 + [3, 1, 0], taxonomy)
    assert out.inst.tolist() == [4] * 5 + [0] * 3


def test_mixed_cluster_split_per_class(taxonomy):
    out = fuse([CAR, PERSON, CAR, PERSON], [2, 2, 2, 0], taxonomy)
    assert out.inst.tolist() == [3, 4, 3, 1]


def test_length_mismatch(taxonomy):
    with pytest.raises(ValidationError):
        fuse([CAR], [0, 1], taxonomy)


@st.composite
def heads(draw):
    n = draw(st.integers(0, 40))
    sem = draw(st.lists(st.integers(1, 8), min_size=n, max_size=n))
    cluster = draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    return sem, cluster


@given(heads())
def test_instances_exactly_on_thing_points(taxonomy, case):
    sem, cluster = case
    out = fuse(sem, cluster, taxonomy)
    assert np.array_equal(out.inst > 0, taxonomy.thing_mask(np.array(sem, dtype=np.int64)))
    for iid in np.unique(out.inst[out.inst > 0]):
        assert len(np.unique(out.sem[out.inst == iid])) == 1


@given(heads())
def test_refusing_gives_same_partition(taxonomy, case):
    sem, cluster = case
    once = fuse(sem, cluster, taxonomy)
    twice = fuse(once.sem, np.maximum(once.inst - 1, 0), taxonomy)
    assert _partition(once.inst) == _partition(twice.inst)
    assert np.array_equal(once.sem, twice.sem)
