"""
Class likelihoods, the recursive class posterior and heterogeneous report fusion.

The fusion classifier takes every report associated to one target during a step,
groups them by feature, fuses overlapping reports of the same feature by a
likelihood product (reports are assumed independent), fills in the remaining
features with their own factors, and applies the combined likelihood to the
running class posterior.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from .attributes import AttributeCatalog, AttributeReport
from .distributions import Gaussian, Rayleigh
from .evidence import Frame, MassFunction, bayesian_approximation
from .exceptions import DegenerateEvidenceError, FrameMismatchError, InvalidInputError
from .measurement import EmitterModel, EsmSignalReport
from .tracking import GaussianEstimate, ImmState, imm_likelihood, speed_estimate

logger = logging.getLogger("fusion.classification")


class ClassDefinition(BaseModel):
    """Feature distributions of one target class"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    class_id: int = Field(ge=1)
    name: str = ""
    speed: Gaussian
    amplitude: Rayleigh
    length: Gaussian
    emitter: EmitterModel = EmitterModel()

    @property
    def label(self) -> str:
        return self.name or f"Class {self.class_id}"


class ClassBank:
    """Vectorized view over an ordered list of class definitions"""

    def __init__(self, classes: Sequence[ClassDefinition]):
        if not classes:
            raise InvalidInputError("at least one class is required")
        ids = [c.class_id for c in classes]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"class ids must be unique: {ids}")
        self.classes: Tuple[ClassDefinition, ...] = tuple(classes)
        self.class_ids: Tuple[int, ...] = tuple(ids)
        self.frame = Frame(tuple(str(i) for i in ids))
        self._speed_mean = np.array([c.speed.mean for c in classes])
        self._speed_sigma = np.array([c.speed.sigma for c in classes])
        self._amplitude_sigma = np.array([c.amplitude.sigma for c in classes])
        self._length_mean = np.array([c.length.mean for c in classes])
        self._length_sigma = np.array([c.length.sigma for c in classes])

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, class_id: int) -> int:
        try:
            return self.class_ids.index(class_id)
        except ValueError:
            raise InvalidInputError(f"unknown class id {class_id}") from None

    def speed_likelihoods(self, speed: float, speed_variance: float = 0.0) -> np.ndarray:
        scale = np.sqrt(self._speed_sigma ** 2 + speed_variance)
        return stats.norm.pdf(speed, loc=self._speed_mean, scale=scale)

    def amplitude_likelihoods(self, amplitude: float) -> np.ndarray:
        if amplitude < 0:
            raise InvalidInputError(f"amplitude must be non-negative, got {amplitude}")
        return stats.rayleigh.pdf(amplitude, scale=self._amplitude_sigma)

    def length_likelihoods(self, length: float, sigma_measurement: float) -> np.ndarray:
        if sigma_measurement < 0:
            raise InvalidInputError(f"length measurement sigma must be non-negative, got {sigma_measurement}")
        scale = np.sqrt(self._length_sigma ** 2 + sigma_measurement ** 2)
        return stats.norm.pdf(length, loc=self._length_mean, scale=scale)


@dataclass(frozen=True)
class ClassPosterior:
    """P(c = i | Z^k) over the ordered class ids"""

    probabilities: np.ndarray
    step_index: int = 0
    class_ids: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if p.size < 1 or np.any(p < 0.0) or np.any(p > 1.0):
            raise InvalidInputError(f"class posterior {p} is not a probability vector")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"class posterior sums to {p.sum()}")
        ids = tuple(self.class_ids) if self.class_ids is not None else tuple(range(1, p.size + 1))
        if len(ids) != p.size:
            raise InvalidInputError("one class id per probability is required")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "class_ids", ids)

    @classmethod
    def uniform(cls, class_ids: Sequence[int]) -> "ClassPosterior":
        n = len(class_ids)
        return cls(np.full(n, 1.0 / n), 0, tuple(class_ids))

    @property
    def declared_class(self) -> int:
        """Argmax class; ties go to the lowest class id"""
        best = self.probabilities.max()
        return min(c for c, p in zip(self.class_ids, self.probabilities) if p == best)


@dataclass(frozen=True)
class DeclarationReport:
    """R&I declaration {r, rho}: class probabilities or a mass function, plus a reliability weight"""

    source_id: str
    probabilities: Optional[np.ndarray] = None
    mass: Optional[MassFunction] = None
    reliability: float = 1.0

    def __post_init__(self):
        if (self.probabilities is None) == (self.mass is None):
            raise InvalidInputError("a declaration carries either probabilities or a mass function")
        if not 0.0 <= self.reliability <= 1.0:
            raise InvalidInputError(f"reliability {self.reliability} outside [0, 1]")
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=float).reshape(-1)
            if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
                raise InvalidInputError(f"declaration probabilities {p} do not sum to 1")
            object.__setattr__(self, "probabilities", p / p.sum())

    def as_mass(self, frame: Frame) -> MassFunction:
        if self.mass is not None:
            return self.mass.on_frame(frame)
        if self.probabilities.size != len(frame):
            raise FrameMismatchError(f"declaration over {self.probabilities.size} classes, frame has {len(frame)}")
        return MassFunction.from_probabilities(frame, self.probabilities)

    def class_likelihood(self, frame: Frame) -> np.ndarray:
        """Likelihood factor: discounted by reliability, then approximated by a probability"""
        return bayesian_approximation(self.as_mass(frame).discount(self.reliability))


@dataclass(frozen=True)
class ImmBankReport:
    """Per-class IMM states after the latest radar update, ordered like the class bank"""

    states: Tuple[ImmState, ...]


ReportPayload = Union[EsmSignalReport, AttributeReport, DeclarationReport, GaussianEstimate, ImmBankReport]


@dataclass(frozen=True)
class SensorReport:
    sensor_id: str
    step: int
    payload: ReportPayload
    timestamp: Optional[float] = None


@dataclass(frozen=True)
class ReportSet:
    """Reports from distinct sensors associated to one target at one step"""

    target_id: int
    step: int
    reports: Tuple[SensorReport, ...] = field(default_factory=tuple)

    def __post_init__(self):
        reports = tuple(self.reports)
        if not reports:
            raise InvalidInputError("a report set needs at least one report")
        ids = [r.sensor_id for r in reports]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"sensor ids must be unique within a report set: {ids}")
        object.__setattr__(self, "reports", reports)

    def __len__(self) -> int:
        return len(self.reports)


def kinematic_class_likelihood(est: GaussianEstimate, cls: ClassDefinition) -> float:
    """Speed density under N(mu_v, sigma_v^2 + var(speed estimate))"""
    estimate = speed_estimate(est)
    return cls.speed.pdf(estimate.speed, extra_variance=estimate.variance)


def imm_class_likelihood(st: ImmState) -> float:
    return imm_likelihood(st)


def amplitude_class_likelihood(alpha: float, cls: ClassDefinition) -> float:
    if alpha < 0:
        raise InvalidInputError(f"amplitude must be non-negative, got {alpha}")
    return cls.amplitude.pdf(alpha)


def length_class_likelihood(length: float, cls: ClassDefinition, sigma_measurement: float) -> float:
    if sigma_measurement < 0:
        raise InvalidInputError(f"length measurement sigma must be non-negative, got {sigma_measurement}")
    return cls.length.pdf(length, extra_variance=sigma_measurement ** 2)


def update_class_posterior(prev: ClassPosterior, likelihoods) -> ClassPosterior:
    """Bayes step with one likelihood vector, or several (one row per feature) whose product is used"""
    table = np.atleast_2d(np.asarray(likelihoods, dtype=float))
    if table.shape[1] != prev.probabilities.size:
        raise InvalidInputError(f"{table.shape[1]} likelihoods for {prev.probabilities.size} classes")
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise InvalidInputError("likelihoods must be finite and non-negative")

    combined = np.prod(table, axis=0)
    unnormalized = combined * prev.probabilities
    total = unnormalized.sum()
    if not total > 0:
        raise DegenerateEvidenceError(f"evidence at step {prev.step_index + 1} gives zero weight to every class")
    return ClassPosterior(unnormalized / total, prev.step_index + 1, prev.class_ids)


def _attribute_class_likelihoods(report: AttributeReport, bank: ClassBank, catalog: Optional[AttributeCatalog]) -> Dict[str, np.ndarray]:
    factors = {}
    if catalog is None:
        logger.warning("Attribute report received without a catalog; ignored")
        return factors
    for name, posterior in report.posteriors.items():
        definition = catalog.attributes.get(name)
        if definition is None:
            continue
        linked = [(i, o.class_id) for i, o in enumerate(definition.outcomes) if o.class_id is not None]
        if not linked:
            continue
        factor = np.zeros(len(bank))
        for i, class_id in linked:
            factor[bank.index_of(class_id)] += posterior[i]
        factors[f"attribute:{name}"] = factor
    return factors


def report_likelihoods(report: SensorReport, bank: ClassBank, catalog: Optional[AttributeCatalog] = None) -> Dict[str, np.ndarray]:
    """Class likelihood factor(s) contributed by one sensor report, keyed by feature"""
    payload = report.payload
    if isinstance(payload, GaussianEstimate):
        estimate = speed_estimate(payload)
        return {"kinematic": bank.speed_likelihoods(estimate.speed, estimate.variance)}
    if isinstance(payload, ImmBankReport):
        if len(payload.states) != len(bank):
            raise InvalidInputError(f"{len(payload.states)} IMM states for {len(bank)} classes")
        return {"kinematic": np.array([imm_class_likelihood(st) for st in payload.states])}
    if isinstance(payload, EsmSignalReport):
        return {"amplitude": bank.amplitude_likelihoods(payload.amplitude)}
    if isinstance(payload, AttributeReport):
        return _attribute_class_likelihoods(payload, bank, catalog)
    if isinstance(payload, DeclarationReport):
        return {"declaration": payload.class_likelihood(bank.frame)}
    raise InvalidInputError(f"unsupported report payload {type(payload).__name__}")


def fuse_feature_likelihoods(
    sets: Union[ReportSet, Sequence[ReportSet]],
    bank: ClassBank,
    catalog: Optional[AttributeCatalog] = None,
) -> Dict[str, np.ndarray]:
    """Union feature set of the associated reports; overlapping features multiply"""
    report_sets = [sets] if isinstance(sets, ReportSet) else list(sets)
    if not report_sets:
        raise InvalidInputError("no report sets to classify")
    if len({s.target_id for s in report_sets}) != 1:
        raise InvalidInputError("report sets belong to different targets")

    seen = set()
    features: Dict[str, List[np.ndarray]] = defaultdict(list)
    for report_set in report_sets:
        for report in report_set.reports:
            if report.sensor_id in seen:
                raise InvalidInputError(f"sensor '{report.sensor_id}' appears in more than one report set")
            seen.add(report.sensor_id)
            for feature, factor in report_likelihoods(report, bank, catalog).items():
                features[feature].append(factor)
    return {feature: np.prod(factors, axis=0) for feature, factors in features.items()}


def certainty(probabilities: np.ndarray) -> float:
    """One minus the normalized entropy of a class distribution"""
    p = np.asarray(probabilities, dtype=float)
    if p.size < 2:
        return 1.0
    nonzero = p[p > 0]
    entropy = -np.sum(nonzero * np.log(nonzero))
    return float(min(max(1.0 - entropy / np.log(p.size), 0.0), 1.0))


def classify_posterior(
    sets: Union[ReportSet, Sequence[ReportSet]],
    bank: ClassBank,
    prior: ClassPosterior,
    catalog: Optional[AttributeCatalog] = None,
) -> ClassPosterior:
    features = fuse_feature_likelihoods(sets, bank, catalog)
    if not features:
        return ClassPosterior(prior.probabilities, prior.step_index + 1, prior.class_ids)
    for feature, factor in features.items():
        logger.debug(f"step {prior.step_index + 1} {feature}: {np.array2string(factor, precision=4)}")
    return update_class_posterior(prior, np.vstack(list(features.values())))


def classify_reports(
    sets: Union[ReportSet, Sequence[ReportSet]],
    classes: Union[ClassBank, Sequence[ClassDefinition]],
    prior: ClassPosterior,
    catalog: Optional[AttributeCatalog] = None,
    source_id: str = "fusion",
) -> DeclarationReport:
    """Heterogeneous fusion classifier: fuse the associated reports into an R&I declaration"""
    bank = classes if isinstance(classes, ClassBank) else ClassBank(classes)
    posterior = classify_posterior(sets, bank, prior, catalog)
    return DeclarationReport(source_id, probabilities=posterior.probabilities, reliability=certainty(posterior.probabilities))


def associate_single_target(reports: Iterable[SensorReport], target_id: int = 1) -> List[ReportSet]:
    """Group every report under one target, one report set per step in step order"""
    by_step: Dict[int, List[SensorReport]] = defaultdict(list)
    for report in reports:
        by_step[report.step].append(report)
    return [ReportSet(target_id, step, tuple(by_step[step])) for step in sorted(by_step)]
