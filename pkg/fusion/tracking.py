"""
Linear-Gaussian target models, Kalman filtering and per-class IMM estimators.

The kinematic state is [x, vx, ax, y, vy, ay] in SI units. Radar reports enter
as converted Cartesian positions, so the filters stay linear.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from .exceptions import DegenerateEvidenceError, InvalidInputError, MissingLikelihoodError, NumericalDegeneracyError
from .measurement import CartesianMeasurement

logger = logging.getLogger("fusion.tracking")

STATE_DIM = 6
POSITION_INDEX = (0, 3)
VELOCITY_INDEX = (1, 4)
ACCELERATION_INDEX = (2, 5)
POSITION_H = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    ]
)
MIN_SPEED = 1e-6


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _require_positive_definite(matrix: np.ndarray, what: str) -> None:
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise NumericalDegeneracyError(f"{what} is not positive definite") from None


@dataclass(frozen=True)
class MotionModel:
    """x(k) = F x(k-1) + G u + v,  v ~ N(0, Q)"""

    F: np.ndarray
    Q: np.ndarray
    G: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if F.shape != (STATE_DIM, STATE_DIM) or Q.shape != (STATE_DIM, STATE_DIM):
            raise InvalidInputError(f"F and Q must be {STATE_DIM}x{STATE_DIM}")
        if not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-15):
            raise InvalidInputError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
            raise InvalidInputError("Q must be positive semidefinite")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        if (self.G is None) != (self.u is None):
            raise InvalidInputError("G and u must be given together")
        if self.G is not None:
            G = np.asarray(self.G, dtype=float).reshape(STATE_DIM, -1)
            u = np.asarray(self.u, dtype=float).reshape(G.shape[1])
            object.__setattr__(self, "G", G)
            object.__setattr__(self, "u", u)

    def predict_state(self, x: np.ndarray) -> np.ndarray:
        x_pred = self.F @ x
        if self.G is not None:
            x_pred = x_pred + self.G @ self.u
        return x_pred


def _per_axis(block: np.ndarray) -> np.ndarray:
    """Embed a 3x3 per-axis block into the 6x6 [x-axis, y-axis] layout"""
    return linalg.block_diag(block, block)


def constant_velocity_model(dt: float, q: float, acceleration_floor: float = 1e-6, label: str = "CV") -> MotionModel:
    """Nearly-constant-velocity model driven by continuous white-noise acceleration of PSD q.

    The acceleration components are reset each step; `acceleration_floor` keeps
    their variance positive so covariances stay positive definite.
    """
    if dt <= 0 or q < 0:
        raise InvalidInputError("dt must be positive and q non-negative")
    F = _per_axis(np.array([[1.0, dt, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]))
    Q = _per_axis(
        q * np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0, 0.0], [dt ** 2 / 2.0, dt, 0.0], [0.0, 0.0, 0.0]])
        + np.diag([0.0, 0.0, acceleration_floor])
    )
    return MotionModel(F=F, Q=Q, label=label)


def constant_acceleration_model(dt: float, q: float, label: str = "CA") -> MotionModel:
    """Nearly-constant-acceleration (Wiener-process acceleration) model with jerk PSD q"""
    if dt <= 0 or q < 0:
        raise InvalidInputError("dt must be positive and q non-negative")
    F = _per_axis(np.array([[1.0, dt, dt ** 2 / 2.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]]))
    Q = _per_axis(
        q
        * np.array(
            [
                [dt ** 5 / 20.0, dt ** 4 / 8.0, dt ** 3 / 6.0],
                [dt ** 4 / 8.0, dt ** 3 / 3.0, dt ** 2 / 2.0],
                [dt ** 3 / 6.0, dt ** 2 / 2.0, dt],
            ]
        )
    )
    return MotionModel(F=F, Q=Q, label=label)


@dataclass(frozen=True)
class ClassModelSet:
    """Model set S_c of one target class with its Markov transition matrix"""

    class_id: int
    models: Tuple[MotionModel, ...]
    transition: np.ndarray

    def __post_init__(self):
        models = tuple(self.models)
        transition = np.atleast_2d(np.asarray(self.transition, dtype=float))
        r = len(models)
        if r < 1:
            raise InvalidInputError("a class needs at least one motion model")
        if transition.shape != (r, r):
            raise InvalidInputError(f"transition matrix must be {r}x{r}")
        if np.any(transition < 0) or not np.allclose(transition.sum(axis=1), 1.0, atol=1e-12):
            raise InvalidInputError("transition matrix rows must be probability vectors")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "transition", transition)

    @property
    def size(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class GaussianEstimate:
    state: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        state = np.asarray(self.state, dtype=float).reshape(STATE_DIM)
        covariance = np.asarray(self.covariance, dtype=float).reshape(STATE_DIM, STATE_DIM)
        if not np.allclose(covariance, covariance.T, rtol=1e-9, atol=1e-12):
            raise NumericalDegeneracyError("state covariance is not symmetric")
        _require_positive_definite(covariance, "state covariance")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "covariance", covariance)

    @property
    def position(self) -> np.ndarray:
        return self.state[list(POSITION_INDEX)]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[list(VELOCITY_INDEX)]

    @property
    def velocity_covariance(self) -> np.ndarray:
        idx = list(VELOCITY_INDEX)
        return self.covariance[np.ix_(idx, idx)]


@dataclass(frozen=True)
class MeasurementModel:
    """z = H x + w,  w ~ N(0, R)"""

    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if H.shape[1] != STATE_DIM or np.linalg.matrix_rank(H) != H.shape[0]:
            raise InvalidInputError("H must have full row rank over the 6-dimensional state")
        if R.shape != (H.shape[0], H.shape[0]):
            raise InvalidInputError("R must match the measurement dimension")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)

    @classmethod
    def for_measurement(cls, meas: CartesianMeasurement, H: Optional[np.ndarray] = None) -> "MeasurementModel":
        return cls(POSITION_H if H is None else H, meas.covariance)


@dataclass(frozen=True)
class ImmState:
    """Per-mode estimates of one class IMM with mode probabilities and the latest mode likelihoods.

    `predicted_mode_probabilities` holds the pre-update probabilities of the last
    cycle; together with `last_mode_likelihoods` they give the class likelihood.
    """

    estimates: Tuple[GaussianEstimate, ...]
    mode_probabilities: np.ndarray
    last_mode_likelihoods: Optional[np.ndarray] = None
    predicted_mode_probabilities: Optional[np.ndarray] = None

    def __post_init__(self):
        estimates = tuple(self.estimates)
        mu = np.asarray(self.mode_probabilities, dtype=float).reshape(-1)
        if len(estimates) != mu.size or mu.size < 1:
            raise InvalidInputError("one mode probability per mode estimate is required")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"mode probabilities {mu} are not normalized")
        if self.last_mode_likelihoods is not None and np.any(np.asarray(self.last_mode_likelihoods) < 0):
            raise InvalidInputError("mode likelihoods must be non-negative")
        object.__setattr__(self, "estimates", estimates)
        object.__setattr__(self, "mode_probabilities", mu)

    @property
    def size(self) -> int:
        return len(self.estimates)


class SpeedEstimate(NamedTuple):
    speed: float
    variance: float
    near_zero: bool = False


def kf_step(
    est: GaussianEstimate,
    model: MotionModel,
    meas: CartesianMeasurement,
    H: Optional[np.ndarray] = None,
) -> Tuple[GaussianEstimate, float]:
    """One Kalman predict/update cycle.

    Returns the posterior estimate and the Gaussian density of the innovation
    under its covariance. The covariance update uses the Joseph form.
    """
    mm = MeasurementModel.for_measurement(meas, H)
    x_pred = model.predict_state(est.state)
    P_pred = _symmetrize(model.F @ est.covariance @ model.F.T + model.Q)

    innovation = meas.position - mm.H @ x_pred
    S = _symmetrize(mm.H @ P_pred @ mm.H.T + mm.R)
    try:
        S_factor = linalg.cho_factor(S)
    except linalg.LinAlgError:
        raise NumericalDegeneracyError("innovation covariance is singular") from None

    gain = linalg.cho_solve(S_factor, mm.H @ P_pred).T
    x_post = x_pred + gain @ innovation
    joseph = np.eye(STATE_DIM) - gain @ mm.H
    P_post = _symmetrize(joseph @ P_pred @ joseph.T + gain @ mm.R @ gain.T)

    mahalanobis = float(innovation @ linalg.cho_solve(S_factor, innovation))
    log_det = 2.0 * np.sum(np.log(np.diag(S_factor[0])))
    dim = innovation.size
    likelihood = float(np.exp(-0.5 * (mahalanobis + log_det + dim * np.log(2.0 * np.pi))))
    return GaussianEstimate(x_post, P_post), likelihood


def initial_imm_state(cls: ClassModelSet, estimate: GaussianEstimate, mode_probabilities: Optional[Sequence[float]] = None) -> ImmState:
    """IMM state with every mode started from the same estimate"""
    if mode_probabilities is None:
        mu = np.full(cls.size, 1.0 / cls.size)
    else:
        mu = np.asarray(mode_probabilities, dtype=float)
    return ImmState(tuple(estimate for _ in range(cls.size)), mu)


def imm_step(st: ImmState, cls: ClassModelSet, meas: CartesianMeasurement, H: Optional[np.ndarray] = None) -> ImmState:
    """One IMM cycle: mixing, mode-matched filtering and mode-probability update"""
    if st.size != cls.size:
        raise InvalidInputError(f"IMM state has {st.size} modes, class {cls.class_id} has {cls.size}")

    mu = st.mode_probabilities
    predicted = cls.transition.T @ mu

    mixed = []
    for j in range(cls.size):
        if predicted[j] <= 0:
            mixed.append(st.estimates[j])
            continue
        weights = cls.transition[:, j] * mu / predicted[j]
        x0 = sum(w * e.state for w, e in zip(weights, st.estimates))
        P0 = sum(w * (e.covariance + np.outer(e.state - x0, e.state - x0)) for w, e in zip(weights, st.estimates))
        mixed.append(GaussianEstimate(x0, _symmetrize(P0)))

    estimates = []
    likelihoods = np.empty(cls.size)
    for j, (estimate, model) in enumerate(zip(mixed, cls.models)):
        updated, likelihoods[j] = kf_step(estimate, model, meas, H)
        estimates.append(updated)

    unnormalized = likelihoods * predicted
    total = unnormalized.sum()
    if not total > 0:
        raise DegenerateEvidenceError(f"all mode likelihoods vanished for class {cls.class_id}")
    return ImmState(
        tuple(estimates),
        unnormalized / total,
        last_mode_likelihoods=likelihoods,
        predicted_mode_probabilities=predicted,
    )


def combined_estimate(st: ImmState) -> GaussianEstimate:
    """Moment-matched mixture of the mode estimates"""
    x = sum(w * e.state for w, e in zip(st.mode_probabilities, st.estimates))
    P = sum(w * (e.covariance + np.outer(e.state - x, e.state - x)) for w, e in zip(st.mode_probabilities, st.estimates))
    return GaussianEstimate(x, _symmetrize(P))


def imm_likelihood(st: ImmState) -> float:
    """Sum over modes of predicted mode probability times mode likelihood"""
    if st.last_mode_likelihoods is None or st.predicted_mode_probabilities is None:
        raise MissingLikelihoodError("IMM has not processed a measurement yet")
    return float(st.predicted_mode_probabilities @ st.last_mode_likelihoods)


def speed_estimate(est: GaussianEstimate) -> SpeedEstimate:
    """Speed and its first-order variance from the velocity components"""
    velocity = est.velocity
    P_vel = est.velocity_covariance
    speed = float(np.hypot(velocity[0], velocity[1]))
    if speed < MIN_SPEED:
        return SpeedEstimate(speed, float(np.trace(P_vel)), near_zero=True)
    direction = velocity / speed
    return SpeedEstimate(speed, float(direction @ P_vel @ direction))


def two_point_initialization(
    z0: CartesianMeasurement,
    z1: CartesianMeasurement,
    dt: float,
    acceleration_variance: float = 1.0,
) -> GaussianEstimate:
    """Estimate from position differencing of the first two converted measurements"""
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    pos, vel, acc = list(POSITION_INDEX), list(VELOCITY_INDEX), list(ACCELERATION_INDEX)
    state = np.zeros(STATE_DIM)
    state[pos] = z1.position
    state[vel] = (z1.position - z0.position) / dt

    P = np.zeros((STATE_DIM, STATE_DIM))
    P[np.ix_(pos, pos)] = z1.covariance
    P[np.ix_(pos, vel)] = z1.covariance / dt
    P[np.ix_(vel, pos)] = z1.covariance / dt
    P[np.ix_(vel, vel)] = (z0.covariance + z1.covariance) / dt ** 2
    P[np.ix_(acc, acc)] = acceleration_variance * np.eye(2)
    return GaussianEstimate(state, _symmetrize(P))


def nees(error: np.ndarray, covariance: np.ndarray) -> float:
    """Normalized estimation error squared e' P^-1 e"""
    error = np.asarray(error, dtype=float)
    return float(error @ np.linalg.solve(covariance, error))


def chi2_band(dof: int, runs: int, alpha: float = 0.05) -> Tuple[float, float]:
    """Two-sided acceptance interval for a NEES averaged over `runs` independent runs"""
    lower = stats.chi2.ppf(alpha / 2.0, df=runs * dof) / runs
    upper = stats.chi2.ppf(1.0 - alpha / 2.0, df=runs * dof) / runs
    return float(lower), float(upper)
