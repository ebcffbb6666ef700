import numpy as np
import pytest

from fusion.exceptions import InvalidInputError, MissingLikelihoodError, NumericalDegeneracyError
from fusion.measurement import CartesianMeasurement
from fusion.tracking import (
    POSITION_H,
    ClassModelSet,
    GaussianEstimate,
    ImmState,
    chi2_band,
    combined_estimate,
    constant_acceleration_model,
    constant_velocity_model,
    imm_likelihood,
    imm_step,
    initial_imm_state,
    kf_step,
    nees,
    speed_estimate,
    two_point_initialization,
)

STATE_SUBSET = [0, 1, 3, 4]  # position and velocity components


def _estimate(position=(0.0, 0.0), velocity=(0.0, 0.0), variance=1.0):
    state = np.array([position[0], velocity[0], 0.0, position[1], velocity[1], 0.0])
    return GaussianEstimate(state, variance * np.eye(6))


def _measurement(z, sigma=1.0):
    return CartesianMeasurement(z, sigma ** 2 * np.eye(2))


class TestModels:
    def test_constant_velocity_propagation(self):
        model = constant_velocity_model(dt=2.0, q=0.0)
        x = np.array([1.0, 3.0, 0.7, -1.0, 0.5, 0.2])
        np.testing.assert_allclose(model.predict_state(x), [7.0, 3.0, 0.0, 0.0, 0.5, 0.0])

    def test_constant_acceleration_propagation(self):
        model = constant_acceleration_model(dt=1.0, q=0.0)
        x = np.array([0.0, 1.0, 2.0, 0.0, 0.0, -2.0])
        np.testing.assert_allclose(model.predict_state(x), [2.0, 3.0, 2.0, -1.0, -2.0, -2.0])

    def test_process_noise_is_symmetric_psd(self):
        for model in (constant_velocity_model(1.0, 0.3), constant_acceleration_model(0.5, 2.0)):
            np.testing.assert_array_equal(model.Q, model.Q.T)
            assert np.linalg.eigvalsh(model.Q).min() >= -1e-15

    def test_invalid_model_parameters(self):
        with pytest.raises(InvalidInputError):
            constant_velocity_model(dt=0.0, q=1.0)
        with pytest.raises(InvalidInputError):
            constant_acceleration_model(dt=1.0, q=-1.0)

    def test_transition_rows_must_be_stochastic(self):
        cv = constant_velocity_model(1.0, 0.1)
        with pytest.raises(InvalidInputError):
            ClassModelSet(1, (cv, cv), [[0.9, 0.2], [0.1, 0.9]])
        with pytest.raises(InvalidInputError):
            ClassModelSet(1, (cv,), [[0.5, 0.5], [0.5, 0.5]])

    def test_estimate_must_be_positive_definite(self):
        with pytest.raises(NumericalDegeneracyError):
            GaussianEstimate(np.zeros(6), np.zeros((6, 6)))
        with pytest.raises(NumericalDegeneracyError):
            GaussianEstimate(np.zeros(6), np.triu(np.ones((6, 6))) + np.eye(6))


class TestKalman:
    def test_update_pulls_towards_measurement(self):
        est = _estimate(variance=4.0)
        updated, likelihood = kf_step(est, constant_velocity_model(1.0, 0.1), _measurement([3.0, -3.0]))
        assert 0.0 < updated.position[0] < 3.0
        assert -3.0 < updated.position[1] < 0.0
        assert np.trace(updated.covariance) < np.trace(est.covariance) + 1.0
        assert likelihood > 0

    def test_likelihood_integrates_to_one(self):
        est = GaussianEstimate(np.zeros(6), 0.25 * np.eye(6))
        model = constant_velocity_model(1.0, 1e-9)
        grid = np.arange(-7.0, 7.0 + 1e-9, 0.25)
        total = 0.0
        for x in grid:
            for y in grid:
                _, likelihood = kf_step(est, model, _measurement([x, y], sigma=np.sqrt(0.5)))
                total += likelihood
        assert total * 0.25 ** 2 == pytest.approx(1.0, abs=1e-3)

    def test_nees_inside_chi2_band(self):
        rng = np.random.default_rng(2024)
        runs, steps, sigma = 200, 50, 5.0
        model = constant_velocity_model(1.0, 0.5)
        R = sigma ** 2 * np.eye(2)
        P0 = np.diag([100.0, 25.0, 1e-6, 100.0, 25.0, 1e-6])
        x0 = np.array([0.0, 10.0, 0.0, 0.0, -5.0, 0.0])

        values = []
        for _ in range(runs):
            truth = rng.multivariate_normal(x0, P0)
            est = GaussianEstimate(x0, P0)
            for _ in range(steps):
                truth = model.F @ truth + rng.multivariate_normal(np.zeros(6), model.Q)
                z = POSITION_H @ truth + rng.multivariate_normal(np.zeros(2), R)
                est, _ = kf_step(est, model, CartesianMeasurement(z, R))
            error = (truth - est.state)[STATE_SUBSET]
            values.append(nees(error, est.covariance[np.ix_(STATE_SUBSET, STATE_SUBSET)]))

        lower, upper = chi2_band(dof=4, runs=runs, alpha=0.001)
        assert lower <= np.mean(values) <= upper

    def test_two_point_initialization(self):
        z0 = _measurement([0.0, 0.0], sigma=2.0)
        z1 = _measurement([10.0, 20.0], sigma=2.0)
        est = two_point_initialization(z0, z1, dt=2.0)
        np.testing.assert_allclose(est.position, [10.0, 20.0])
        np.testing.assert_allclose(est.velocity, [5.0, 10.0])
        np.testing.assert_allclose(est.velocity_covariance, 2.0 * np.eye(2))

    def test_speed_estimate(self):
        est = GaussianEstimate(np.array([0.0, 3.0, 0.0, 0.0, 4.0, 0.0]), np.diag([1.0, 2.0, 1.0, 1.0, 5.0, 1.0]))
        speed = speed_estimate(est)
        assert speed.speed == pytest.approx(5.0)
        assert speed.variance == pytest.approx((9.0 * 2.0 + 16.0 * 5.0) / 25.0)
        assert not speed.near_zero

    def test_speed_estimate_near_zero(self):
        speed = speed_estimate(_estimate(variance=2.0))
        assert speed.near_zero
        assert speed.variance == pytest.approx(4.0)


class TestImm:
    def test_single_model_equals_kalman_filter(self):
        rng = np.random.default_rng(9)
        model = constant_velocity_model(1.0, 0.2)
        cls = ClassModelSet(1, (model,), [[1.0]])
        est = _estimate(velocity=(3.0, 1.0), variance=10.0)
        st = initial_imm_state(cls, est)
        for k in range(30):
            z = _measurement([3.0 * k + rng.normal(), k + rng.normal()])
            est, likelihood = kf_step(est, model, z)
            st = imm_step(st, cls, z)
            np.testing.assert_allclose(combined_estimate(st).state, est.state, rtol=0.0, atol=1e-12)
            np.testing.assert_allclose(combined_estimate(st).covariance, est.covariance, rtol=0.0, atol=1e-12)
            assert imm_likelihood(st) == pytest.approx(likelihood, rel=1e-12)

    def test_weighted_mode_likelihood(self):
        est = _estimate()
        st = ImmState((est, est), [0.5, 0.5], last_mode_likelihoods=np.array([0.8, 0.0]), predicted_mode_probabilities=np.array([0.5, 0.5]))
        assert imm_likelihood(st) == pytest.approx(0.4)

    def test_likelihood_missing_before_first_update(self):
        cls = ClassModelSet(1, (constant_velocity_model(1.0, 0.1),), [[1.0]])
        with pytest.raises(MissingLikelihoodError):
            imm_likelihood(initial_imm_state(cls, _estimate()))

    def test_mode_count_checked(self):
        cv = constant_velocity_model(1.0, 0.1)
        two = ClassModelSet(1, (cv, cv), [[0.9, 0.1], [0.1, 0.9]])
        st = initial_imm_state(ClassModelSet(1, (cv,), [[1.0]]), _estimate())
        with pytest.raises(InvalidInputError):
            imm_step(st, two, _measurement([0.0, 0.0]))

    def test_maneuver_shifts_mode_probability(self):
        rng = np.random.default_rng(31)
        cls = ClassModelSet(
            1,
            (constant_velocity_model(1.0, 0.01), constant_acceleration_model(1.0, 1.0)),
            [[0.95, 0.05], [0.05, 0.95]],
        )
        onset, steps, runs = 30, 41, 20
        mu_ca = np.zeros((runs, steps))
        for run in range(runs):
            position, velocity = np.zeros(2), np.array([10.0, 0.0])
            st = initial_imm_state(cls, GaussianEstimate(np.array([0.0, 10.0, 0.0, 0.0, 0.0, 0.0]), np.eye(6)))
            for k in range(steps):
                acceleration = np.array([5.0, 0.0]) if k >= onset else np.zeros(2)
                position = position + velocity + 0.5 * acceleration
                velocity = velocity + acceleration
                st = imm_step(st, cls, _measurement(position + rng.standard_normal(2)))
                mu_ca[run, k] = st.mode_probabilities[1]
        assert mu_ca[:, onset - 1].mean() < 0.5
        assert mu_ca[:, onset + 10].mean() > 0.7

    def test_identical_modes_keep_their_probabilities(self):
        rng = np.random.default_rng(12)
        cv = constant_velocity_model(1.0, 0.1)
        cls = ClassModelSet(1, (cv, cv), np.eye(2))
        st = initial_imm_state(cls, _estimate(velocity=(2.0, 0.0)), [0.3, 0.7])
        for k in range(20):
            st = imm_step(st, cls, _measurement([2.0 * k + rng.normal(), rng.normal()]))
            np.testing.assert_allclose(st.mode_probabilities, [0.3, 0.7], rtol=1e-12)

    def test_combined_estimate_of_equal_states(self):
        est = _estimate(position=(5.0, -1.0), velocity=(3.0, 4.0))
        wide = GaussianEstimate(est.state, 3.0 * np.eye(6))
        combined = combined_estimate(ImmState((est, wide), [0.25, 0.75]))
        np.testing.assert_array_equal(combined.state, est.state)
        np.testing.assert_allclose(combined.covariance, 2.5 * np.eye(6), rtol=0.0, atol=1e-12)

    def test_combined_estimate_inflates_by_mode_spread(self):
        d = 2.0
        base = _estimate(velocity=(10.0, 0.0))
        shift = np.zeros(6)
        shift[1] = d
        modes = (GaussianEstimate(base.state + shift, base.covariance), GaussianEstimate(base.state - shift, base.covariance))
        combined = combined_estimate(ImmState(modes, [0.5, 0.5]))
        np.testing.assert_allclose(combined.state, base.state, rtol=0.0, atol=1e-12)
        expected = base.covariance.copy()
        expected[1, 1] += d ** 2
        np.testing.assert_allclose(combined.covariance, expected, rtol=0.0, atol=1e-12)

    def test_mode_probabilities_normalized(self):
        cv = constant_velocity_model(1.0, 0.1)
        ca = constant_acceleration_model(1.0, 1.0)
        cls = ClassModelSet(2, (cv, ca), [[0.9, 0.1], [0.2, 0.8]])
        st = initial_imm_state(cls, _estimate(), [0.7, 0.3])
        for k in range(5):
            st = imm_step(st, cls, _measurement([float(k), 0.0]))
            assert st.mode_probabilities.sum() == pytest.approx(1.0, abs=1e-12)
            assert st.last_mode_likelihoods.shape == (2,)


def test_chi2_band_brackets_degrees_of_freedom():
    lower, upper = chi2_band(dof=2, runs=100)
    assert lower < 2.0 < upper
    narrow = chi2_band(dof=2, runs=1000)
    assert narrow[0] > lower and narrow[1] < upper
