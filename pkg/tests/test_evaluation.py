import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrack.errors import DimensionError, ZeroOracle
from qtrack.evaluation import bellman_residual, rms_error, tracking_rms, weight_errors
from qtrack.learner import LearnerConfig, collect_batch
from qtrack.lti_system import Plant, Trajectory
from qtrack.reference import exo_source


def traj(states):
    states = np.asarray(states, dtype=float).reshape(len(states), -1)
    return Trajectory(states, np.zeros((len(states) - 1, 1)), np.zeros(len(states) - 1))


def test_rms_examples():
    a = traj(np.arange(6.0))
    assert rms_error(a, a, 0) == 0
    assert rms_error(a, traj(np.arange(6.0) + 0.25), 0) == pytest.approx(0.25)
    with pytest.raises(DimensionError):
        rms_error(a, traj(np.arange(5.0)), 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rms_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (traj(rng.normal(size=8)) for _ in range(3))
    assert rms_error(a, b, 0) == pytest.approx(rms_error(b, a, 0))
    assert rms_error(a, c, 0) <= rms_error(a, b, 0) + rms_error(b, c, 0) + 1e-12


def test_weight_error_examples():
    w = np.array([1.0, -4.0, 2.0])
    assert weight_errors(w, w) == (0.0, 0.0)
    eI, eII = weight_errors(np.zeros(3), w)
    assert eII == 1.0 and eI == pytest.approx(7 / 12)
    with pytest.raises(ZeroOracle):
        weight_errors(w, np.zeros(3))
    with pytest.raises(DimensionError):
        weight_errors(w, np.zeros(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_weight_errors_ordered_and_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    w, ws = rng.normal(size=(2, 10))
    eI, eII = weight_errors(w, ws)
    assert eI <= eII
    np.testing.assert_allclose(weight_errors(c * w, c * ws), (eI, eII), rtol=1e-12)


@pytest.fixture(scope="module")
def noiseless_batch(sys1):
    cfg = LearnerConfig(sigma_ref=0.0, seed=3)
    return collect_batch(Plant(sys1.model), sys1.cost, exo_source(2, (0,)), np.zeros((1, 22)), cfg)


def test_residual_at_oracle(sys1, noiseless_batch):
    assert bellman_residual(sys1.w_star, noiseless_batch, 0.9, sys1.pattern) < 1e-8


def test_residual_of_zero_weights(sys1, noiseless_batch):
    r = bellman_residual(np.zeros(84), noiseless_batch, 0.9, sys1.pattern)
    assert r == pytest.approx(np.sqrt(np.mean(noiseless_batch.c**2)))


def test_residual_grows_under_perturbation(sys1, noiseless_batch, rng):
    base = bellman_residual(sys1.w_star, noiseless_batch, 0.9, sys1.pattern)
    scale = 1e-6 * np.abs(sys1.w_star).max()
    for _ in range(100):
        d = rng.normal(size=84) * scale
        assert bellman_residual(sys1.w_star + d, noiseless_batch, 0.9, sys1.pattern) > base


def test_tracking_rms():
    t = Trajectory(np.ones((4, 1)), np.zeros((3, 1)), np.zeros(3), np.zeros((3, 1)))
    assert tracking_rms(t, 0) == 1.0
