"""
Single-target ship scenario and the Monte Carlo classification harness.

One radar and one ESM sensor observe a ship of class 3 moving at constant
velocity. Each run tracks the ship from converted radar measurements and
updates the class posterior with the likelihoods of the active feature subset
(speed v, amplitude a, length L). Summaries report mean class-probability
curves and the percentage of correct reported classes over every step of
every run.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .classification import ClassBank, ClassDefinition, ClassPosterior, imm_class_likelihood, update_class_posterior
from .distributions import Rayleigh
from .exceptions import InvalidInputError
from .measurement import SeedLike, as_generator, convert_polar, sample_esm, sample_polar
from .tracking import (
    ClassModelSet,
    GaussianEstimate,
    constant_velocity_model,
    imm_step,
    initial_imm_state,
    kf_step,
    speed_estimate,
    two_point_initialization,
)

logger = logging.getLogger("fusion.simulation")

FEATURE_TOKENS = ("v", "L", "a")
FEATURE_NAMES = {"v": "speed", "L": "length", "a": "amplitude"}


def parse_feature_subset(text: str) -> Tuple[str, ...]:
    """'v+L+a' -> ('v', 'L', 'a'), in canonical v, L, a order"""
    tokens = [t.strip() for t in str(text).split("+") if t.strip()]
    unknown = [t for t in tokens if t not in FEATURE_TOKENS]
    if not tokens or unknown:
        raise InvalidInputError(f"invalid feature subset '{text}'; use tokens {'+'.join(FEATURE_TOKENS)}")
    if len(set(tokens)) != len(tokens):
        raise InvalidInputError(f"repeated feature in subset '{text}'")
    return tuple(t for t in FEATURE_TOKENS if t in tokens)


def subset_label(features: Sequence[str]) -> str:
    return "+".join(features)


class Scenario(BaseModel):
    """Truth, sensor and classifier settings for one feature-subset experiment"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    initial_position: Tuple[float, float] = (0.0, 0.0)
    speed: float = Field(default=28.0, ge=0.0)
    course: float = np.pi / 4.0
    true_class: int = Field(default=3, ge=1)
    true_amplitude_sigma: float = Field(default=0.5, gt=0.0)
    true_length: float = 5.0
    length_sigma: float = Field(default=5.0, ge=0.0)
    steps: int = Field(default=100, ge=1)
    dt: float = Field(default=1.0, gt=0.0)
    radar_position: Tuple[float, float] = (0.0, -2000.0)
    sigma_r: float = Field(default=10.0, gt=0.0)
    sigma_theta: float = Field(default=float(np.deg2rad(1.0)), gt=0.0)
    process_noise: float = Field(default=0.1, ge=0.0)
    confirm_hits: int = Field(default=16, ge=2)
    kinematic_feature: str = "speed"
    features: Tuple[str, ...] = ("v", "L", "a")

    @field_validator("features", mode="before")
    @classmethod
    def _parse_features(cls, value):
        if isinstance(value, str):
            return parse_feature_subset(value)
        return parse_feature_subset("+".join(value))

    @field_validator("kinematic_feature")
    @classmethod
    def _known_kinematic_feature(cls, value: str):
        if value not in ("speed", "imm"):
            raise ValueError("kinematic_feature must be 'speed' or 'imm'")
        return value

    @model_validator(mode="after")
    def _radar_off_target(self):
        if tuple(self.radar_position) == tuple(self.initial_position):
            raise ValueError("radar_position must differ from the initial target position")
        return self

    @property
    def label(self) -> str:
        return subset_label(self.features)


@dataclass(frozen=True)
class Truth:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray


@dataclass(frozen=True)
class RunResult:
    """Posterior trajectory of one run; row k holds P(c | Z^k)"""

    probabilities: np.ndarray
    declared: np.ndarray
    seed: int
    class_ids: Tuple[int, ...]

    @property
    def trajectory(self) -> List[ClassPosterior]:
        return [ClassPosterior(p / p.sum(), k + 1, self.class_ids) for k, p in enumerate(self.probabilities)]

    def __len__(self) -> int:
        return self.probabilities.shape[0]


@dataclass(frozen=True)
class McSummary:
    features: str
    curves: np.ndarray
    percent_correct: float
    runs: int
    class_ids: Tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.percent_correct <= 100.0:
            raise InvalidInputError(f"percent correct {self.percent_correct} outside [0, 100]")
        if not np.allclose(self.curves.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
            raise InvalidInputError("mean class-probability curves must sum to 1 per step")


def generate_truth(scenario: Scenario, seed: SeedLike = None) -> Truth:
    """Constant-velocity truth sampled every dt, starting at the initial position.

    The trajectory is deterministic; `seed` is accepted for interface symmetry.
    """
    times = np.arange(scenario.steps) * scenario.dt
    velocity = scenario.speed * np.array([np.cos(scenario.course), np.sin(scenario.course)])
    positions = np.asarray(scenario.initial_position, dtype=float) + np.outer(times, velocity)
    velocities = np.tile(velocity, (scenario.steps, 1))
    return Truth(times, positions, velocities)


class _KinematicTracker:
    """Two-point initialization followed by either one CV Kalman filter or per-class IMMs.

    Kinematic class likelihoods are withheld until the track is confirmed, that
    is until it has taken `confirm_hits` radar measurements.
    """

    def __init__(self, scenario: Scenario, bank: ClassBank, model_sets: Optional[Sequence[ClassModelSet]]):
        self.scenario = scenario
        self.bank = bank
        self.cv_model = constant_velocity_model(scenario.dt, scenario.process_noise)
        self.model_sets = None
        if scenario.kinematic_feature == "imm":
            if not model_sets:
                raise InvalidInputError("the imm kinematic feature needs per-class model sets")
            by_class = {m.class_id: m for m in model_sets}
            missing = [c for c in bank.class_ids if c not in by_class]
            if missing:
                raise InvalidInputError(f"no motion model set for classes {missing}")
            self.model_sets = [by_class[c] for c in bank.class_ids]
        self.hits = 0
        self.first = None
        self.estimate: Optional[GaussianEstimate] = None
        self.imm_states = None

    @property
    def confirmed(self) -> bool:
        return self.hits >= self.scenario.confirm_hits

    def update(self, measurement) -> Optional[np.ndarray]:
        """Process one converted measurement; return the class likelihood vector once available"""
        self.hits += 1
        likelihoods = self._filter(measurement)
        if likelihoods is None or not self.confirmed:
            return None
        return likelihoods

    def _filter(self, measurement) -> Optional[np.ndarray]:
        if self.first is None:
            self.first = measurement
            return None
        if self.estimate is None:
            self.estimate = two_point_initialization(self.first, measurement, self.scenario.dt)
            if self.model_sets is not None:
                self.imm_states = [initial_imm_state(m, self.estimate) for m in self.model_sets]
                return None
            return self._speed_likelihoods()

        if self.model_sets is None:
            self.estimate, _ = kf_step(self.estimate, self.cv_model, measurement)
            return self._speed_likelihoods()

        self.imm_states = [imm_step(st, m, measurement) for st, m in zip(self.imm_states, self.model_sets)]
        return np.array([imm_class_likelihood(st) for st in self.imm_states])

    def _speed_likelihoods(self) -> np.ndarray:
        estimate = speed_estimate(self.estimate)
        return self.bank.speed_likelihoods(estimate.speed, estimate.variance)


def run_once(
    scenario: Scenario,
    classes: Sequence[ClassDefinition],
    seed: int,
    model_sets: Optional[Sequence[ClassModelSet]] = None,
) -> RunResult:
    """One seeded run of the scenario with its active feature subset.

    Radar, ESM signal and length draws come from independent child streams of the
    run seed, so every feature subset sees the same measurements for a seed.
    """
    bank = ClassBank(classes)
    target = bank.classes[bank.index_of(scenario.true_class)]
    emitter = target.model_copy(update={"amplitude": Rayleigh(sigma=scenario.true_amplitude_sigma)})
    truth = generate_truth(scenario)
    radar_rng, esm_rng, length_rng = [as_generator(s) for s in np.random.SeedSequence(seed).spawn(3)]
    tracker = _KinematicTracker(scenario, bank, model_sets)
    active = set(scenario.features)
    debug = logger.isEnabledFor(logging.DEBUG)

    posterior = ClassPosterior.uniform(bank.class_ids)
    probabilities = np.empty((scenario.steps, len(bank)))
    declared = np.empty(scenario.steps, dtype=int)
    for k in range(scenario.steps):
        polar = sample_polar(truth.positions[k], scenario.sigma_r, scenario.sigma_theta, radar_rng, scenario.radar_position)
        measurement = convert_polar(polar).translated(scenario.radar_position)
        kinematic = tracker.update(measurement)
        length = scenario.true_length + (length_rng.normal(0.0, scenario.length_sigma) if scenario.length_sigma > 0 else 0.0)
        signal = sample_esm(emitter, esm_rng, derived={"length": length})

        rows = {}
        if "v" in active and kinematic is not None:
            rows["v"] = kinematic
        if "a" in active:
            rows["a"] = bank.amplitude_likelihoods(signal.amplitude)
        if "L" in active:
            rows["L"] = bank.length_likelihoods(signal.derived["length"], scenario.length_sigma)
        if debug:
            for token, row in rows.items():
                logger.debug(f"run seed={seed} step {k} {FEATURE_NAMES[token]}: {np.array2string(row, precision=4)}")

        if rows:
            posterior = update_class_posterior(posterior, np.vstack(list(rows.values())))
        else:
            posterior = ClassPosterior(posterior.probabilities, posterior.step_index + 1, posterior.class_ids)
        probabilities[k] = posterior.probabilities
        declared[k] = posterior.declared_class

    return RunResult(probabilities, declared, seed, bank.class_ids)


def run_monte_carlo(
    scenario: Scenario,
    classes: Sequence[ClassDefinition],
    runs: int = 100,
    base_seed: int = 0,
    model_sets: Optional[Sequence[ClassModelSet]] = None,
    workers: int = 1,
) -> McSummary:
    """Independent seeded runs, seed = base_seed + run index, aggregated in run order"""
    if runs < 1:
        raise InvalidInputError(f"runs must be at least 1, got {runs}")
    workers = max(1, int(workers))
    seeds = [base_seed + i for i in range(runs)]
    logger.info(f"Running {runs} Monte Carlo runs for features {scenario.label} with {workers} worker(s)")

    if workers == 1:
        results = [run_once(scenario, classes, s, model_sets) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: run_once(scenario, classes, s, model_sets), seeds))

    curves = np.zeros_like(results[0].probabilities)
    hits = 0
    for result in results:
        curves += result.probabilities
        hits += int(np.count_nonzero(result.declared == scenario.true_class))
    curves /= runs
    percent_correct = 100.0 * hits / (runs * scenario.steps)
    logger.info(f"Features {scenario.label}: {percent_correct:.1f}% correct")
    return McSummary(scenario.label, curves, percent_correct, runs, results[0].class_ids)
