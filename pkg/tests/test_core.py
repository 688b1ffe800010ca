import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pancluster.core import (
    ClassTaxonomy,
    PanopticLabel,
    Prediction,
    RiderRule,
    Scene,
    ValidationError,
    as_points,
    hard_labels,
    softmax,
    softmax_backward,
)


def _pred(sem, inst):
    return Prediction(np.asarray(sem, float), np.asarray(inst, float))


def test_hard_labels_argmax():
    sem, inst = hard_labels(_pred([[0.1, 0.9]], [[0.0, 0.0, 0.0, 0.0, 1.0]]))
    assert sem.tolist() == [1]
    assert inst.tolist() == [4]


def test_hard_labels_tie_goes_low():
    _, inst = hard_labels(_pred([[1.0]], [[1 / 3, 1 / 3, 1 / 3]]))
    assert inst.tolist() == [0]


@given(st.integers(1, 30), st.integers(2, 6), st.integers(0, 10_000))
def test_hard_labels_permutation_equivariant(n, k, seed):
    rng = np.random.default_rng(seed)
    p = softmax(rng.normal(size=(n, k)))
    q = softmax(rng.normal(size=(n, k)))
    perm = rng.permutation(n)
    s1, i1 = hard_labels(Prediction(p, q))
    s2, i2 = hard_labels(Prediction(p[perm], q[perm]))
    assert np.array_equal(s1[perm], s2) and np.array_equal(i1[perm], i2)


def test_points_reject_non_finite():
    with pytest.raises(ValidationError):
        as_points([[0.0, np.nan, 0.0, 0.5]])
    with pytest.raises(ValidationError):
        as_points([[0.0, 0.0, np.inf]])


def test_points_remission_range_and_default():
    with pytest.raises(ValidationError):
        as_points([[0, 0, 0, 1.5]])
    pts = as_points([[1, 2, 3]])
    assert pts.shape == (1, 4) and pts[0, 3] == 0.0
    assert not pts.flags.writeable


def test_taxonomy_rejects_overlap_and_gaps():
    ok = dict(num_classes=3, stuff_ids={1}, thing_ids={2}, max_extent={2: 1.0}, merge_eps={2: 1.0})
    ClassTaxonomy(**ok)
    with pytest.raises(ValidationError):
        ClassTaxonomy(**{**ok, "stuff_ids": {1, 2}})
    with pytest.raises(ValidationError):
        ClassTaxonomy(**{**ok, "num_classes": 4})
    with pytest.raises(ValidationError):
        ClassTaxonomy(**{**ok, "max_extent": {}})
    with pytest.raises(ValidationError):
        ClassTaxonomy(**{**ok, "merge_eps": {2: 0.0}})
    with pytest.raises(ValidationError):
        ClassTaxonomy(**ok, rider_rules=[RiderRule(2, 2, 2, 2, -1.0)])


def test_scene_invariants(taxonomy):
    pts = np.zeros((3, 4))
    Scene(pts, [1, 3, 3], [0, 1, 1], taxonomy)
    with pytest.raises(ValidationError):
        Scene(pts, [1, 3], [0, 1, 1])
    with pytest.raises(ValidationError):  # instance on a stuff class
        Scene(pts, [1, 3, 3], [1, 1, 1], taxonomy)
    with pytest.raises(ValidationError):  # one instance, two classes
        Scene(pts, [4, 3, 3], [1, 1, 1])
    with pytest.raises(ValidationError):
        Scene(pts, [1, 3, 3], [0, -1, 1])


def test_scene_is_immutable():
    s = Scene(np.zeros((2, 4)), [1, 1], [0, 0])
    with pytest.raises(ValueError):
        s.sem_gt[0] = 2


def test_prediction_rows_must_sum_to_one():
    with pytest.raises(ValidationError):
        _pred([[0.5, 0.4]], [[1.0]])
    with pytest.raises(ValidationError):
        _pred([[1.0]], [[1.2, -0.2]])
    with pytest.raises(ValidationError):
        _pred([[1.0], [1.0]], [[1.0]])
    _pred([[0.5, 0.5 + 5e-7]], [[1.0]])


def test_panoptic_label_invariants(taxonomy):
    PanopticLabel([3, 3, 1], [2, 2, 0], taxonomy)
    with pytest.raises(ValidationError):
        PanopticLabel([3, 4], [2, 2])
    with pytest.raises(ValidationError):
        PanopticLabel([1, 1], [1, 1], taxonomy)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-30, 30)))
def test_softmax_rows_on_simplex(z):
    p = softmax(z)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0)


def test_softmax_backward_matches_jacobian(rng):
    z = rng.normal(size=(1, 5))
    g = rng.normal(size=(1, 5))
    p = softmax(z)[0]
    jac = np.diag(p) - np.outer(p, p)
    assert np.allclose(softmax_backward(p[None], g)[0], jac.T @ g[0])
