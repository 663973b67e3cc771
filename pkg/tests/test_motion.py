import numpy as np
import pytest

from src.core_model import BoundingBox
from src.motion import (
    KalmanBoxFilter,
    KalmanState,
    affinity_from_mahalanobis,
    kf_initiate,
    kf_predict,
    kf_update,
    motion_affinity,
    squared_mahalanobis,
    squared_mahalanobis_batch,
)

from conftest import make_box


def with_velocity(state, vx):
    mean = state.mean.copy()
    mean[4] = vx
    return KalmanState(mean, state.covariance)


class TestInitiate:
    def test_mean_from_box(self):
        state = kf_initiate(BoundingBox(0, 0, 10, 20))
        np.testing.assert_allclose(state.mean, [5, 10, 0.5, 20, 0, 0, 0, 0])

    def test_square_box_aspect(self):
        assert kf_initiate(BoundingBox(10, 10, 10, 10)).mean[2] == 1.0

    def test_covariance_symmetric_positive(self):
        cov = kf_initiate(make_box(50, 50)).covariance
        np.testing.assert_allclose(cov, cov.T)
        assert np.all(np.diag(cov) > 0)


class TestPredict:
    def test_zero_velocity_keeps_position(self):
        state = kf_initiate(make_box(50, 60))
        np.testing.assert_allclose(kf_predict(state).mean[:4], state.mean[:4])

    def test_velocity_advances_center(self):
        state = with_velocity(kf_initiate(make_box(50, 60)), 1.0)
        assert kf_predict(state).mean[0] == pytest.approx(51.0)

    def test_trace_non_decreasing(self):
        state = kf_initiate(make_box(50, 60))
        for _ in range(10):
            predicted = kf_predict(state)
            assert np.trace(predicted.covariance) >= np.trace(state.covariance)
            state = predicted


class TestUpdate:
    def test_zero_innovation_keeps_mean(self):
        box = make_box(50, 60)
        state = kf_predict(kf_initiate(box))
        updated = kf_update(state, box)
        np.testing.assert_allclose(updated.mean, state.mean, atol=1e-9)

    def test_posterior_position_covariance_shrinks(self):
        state = kf_predict(kf_initiate(make_box(50, 60)))
        updated = kf_update(state, make_box(52, 61))
        assert np.trace(updated.covariance[:4, :4]) <= np.trace(state.covariance[:4, :4])

    def test_repeated_updates_converge_to_fixed_box(self):
        state = kf_initiate(make_box(50, 60))
        target = make_box(50.15, 60)
        for _ in range(50):
            state = kf_update(state, target)
        np.testing.assert_allclose(state.mean[:2], target.to_xyah()[:2], atol=1e-3)

    def test_constant_velocity_target(self):
        state = kf_initiate(make_box(0, 0))
        for t in range(1, 101):
            state = kf_update(kf_predict(state), make_box(2.0 * t, 0.5 * t))
        np.testing.assert_allclose(state.mean[:2], [200.0, 50.0], atol=1e-2)

    def test_covariance_stays_psd(self, rng):
        kf = KalmanBoxFilter()
        state = kf.initiate(make_box(0, 0))
        for t in range(1000):
            state = kf.predict(state)
            if t % 3 != 0:
                state = kf.update(state, make_box(t + rng.normal(), rng.normal()))
            np.testing.assert_allclose(state.covariance, state.covariance.T, atol=1e-9)
            assert np.linalg.eigvalsh(state.covariance).min() >= -1e-8


class TestMotionAffinity:
    def test_at_predicted_mean(self):
        state = kf_predict(kf_initiate(make_box(50, 60)))
        assert motion_affinity(state, make_box(50, 60)) == pytest.approx(1.0)

    def test_monotone_in_distance(self):
        state = kf_predict(kf_initiate(make_box(50, 60)))
        values = [motion_affinity(state, make_box(50 + dx, 60)) for dx in range(0, 30, 3)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_identity_covariance_example(self):
        d2 = squared_mahalanobis(np.zeros(4), np.eye(4), np.array([3.0, 4.0, 0.0, 0.0]))
        assert d2 == pytest.approx(25.0)
        assert affinity_from_mahalanobis(d2) == pytest.approx(np.exp(-12.5))

    def test_batch_matches_single(self, rng):
        state = kf_predict(kf_initiate(make_box(50, 60)))
        mean, cov = KalmanBoxFilter().project(state)
        measurements = np.array([make_box(50 + rng.normal(), 60).to_xyah() for _ in range(5)])
        batch = squared_mahalanobis_batch(mean, cov, measurements)
        single = [squared_mahalanobis(mean, cov, m) for m in measurements]
        np.testing.assert_allclose(batch, single)
