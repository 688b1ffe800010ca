import numpy as np
import pytest

from pancluster import gradcheck
from pancluster.losses import GradCheckReport


def test_problem_shapes():
    p = gradcheck.random_problem(np.random.default_rng(0))
    n = len(p.scene)
    assert 8 <= n <= 24
    assert p.sem_logits.shape == (n, gradcheck.NUM_CLASSES)
    assert 2 <= p.inst_logits.shape[1] <= 6
    assert p.class_weights[0] == 0


@pytest.mark.parametrize("name", gradcheck.LOSS_NAMES)
def test_each_loss_passes_a_few_trials(name):
    reports = gradcheck.run_trials(name, trials=5, seed=3)
    assert len(reports) == 5 and all(isinstance(r, GradCheckReport) for r in reports)
    assert all(r.passed for r in reports), max(r.max_rel_error for r in reports)
    assert sum(r.n_checked for r in reports) > 0


def test_trials_are_reproducible():
    a = gradcheck.run_trials("lovasz", trials=3, seed=11)
    b = gradcheck.run_trials("lovasz", trials=3, seed=11)
    assert [r.max_rel_error for r in a] == [r.max_rel_error for r in b]


def test_unknown_loss():
    with pytest.raises(ValueError):
        gradcheck.run_trials("hinge", trials=1)
