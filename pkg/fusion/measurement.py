"""
Raw sensor outputs: ESM signal-level reports and radar polar measurements.

Radar range/bearing measurements are mapped to Cartesian coordinates with the
multiplicatively debiased conversion so that the tracker can stay linear.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from .distributions import Distribution, Gaussian, Rayleigh
from .exceptions import InvalidInputError

if TYPE_CHECKING:
    from .classification import ClassDefinition

logger = logging.getLogger("fusion.measurement")

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]

# Table of ESM measurement fields, in report order
ESM_FIELDS: Tuple[str, ...] = (
    "pri_high",
    "pri_low",
    "freq_high",
    "freq_low",
    "pw_high",
    "pw_low",
    "amplitude",
)
_ORDERED_PAIRS = (("pri_high", "pri_low"), ("freq_high", "freq_low"), ("pw_high", "pw_low"))


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Normalize an int seed, a SeedSequence or an existing Generator to a Generator"""
    return np.random.default_rng(seed)


class EmitterModel(BaseModel):
    """Gaussian models for the non-amplitude ESM fields of one emitter class"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pri_high: Gaussian = Gaussian(mean=1.2e-3, sigma=1e-5)
    pri_low: Gaussian = Gaussian(mean=0.8e-3, sigma=1e-5)
    freq_high: Gaussian = Gaussian(mean=9.41e9, sigma=1e6)
    freq_low: Gaussian = Gaussian(mean=9.39e9, sigma=1e6)
    pw_high: Gaussian = Gaussian(mean=1.0e-6, sigma=2e-8)
    pw_low: Gaussian = Gaussian(mean=0.5e-6, sigma=2e-8)


@dataclass(frozen=True)
class EsmSignalReport:
    """Signal-level ESM vector y with its noise descriptors U.

    `derived` carries quantities an ESM processor extracted from the signal
    (for example an emitter-based length estimate) that attribute likelihoods
    may reference by name.
    """

    pri_high: float
    pri_low: float
    freq_high: float
    freq_low: float
    pw_high: float
    pw_low: float
    amplitude: float
    noise_model: Mapping[str, Distribution] = field(default_factory=dict)
    derived: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for high, low in _ORDERED_PAIRS:
            if getattr(self, high) < getattr(self, low):
                raise InvalidInputError(f"{high} must be >= {low}")
        if self.amplitude < 0:
            raise InvalidInputError("amplitude must be non-negative")
        unknown = set(self.noise_model) - set(ESM_FIELDS)
        if unknown:
            raise InvalidInputError(f"noise model for unknown fields: {sorted(unknown)}")

    def value(self, name: str) -> float:
        """Look up a signal field or a derived quantity by name"""
        if name in ESM_FIELDS:
            return float(getattr(self, name))
        try:
            return float(self.derived[name])
        except KeyError:
            raise InvalidInputError(f"ESM report carries no field '{name}'") from None

    @classmethod
    def from_amplitude(cls, amplitude: float, **derived: float) -> "EsmSignalReport":
        """Report carrying only an amplitude; the other fields are zero"""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, amplitude, derived=dict(derived))


@dataclass(frozen=True)
class PolarMeasurement:
    range: float
    bearing: float
    sigma_r: float
    sigma_theta: float

    def validate(self) -> None:
        if not self.range > 0:
            raise InvalidInputError(f"range must be positive, got {self.range}")
        if not self.sigma_r > 0 or not self.sigma_theta > 0:
            raise InvalidInputError(
                f"measurement sigmas must be positive, got sigma_r={self.sigma_r}, sigma_theta={self.sigma_theta}"
            )
        if not -np.pi < self.bearing <= np.pi:
            raise InvalidInputError(f"bearing {self.bearing} outside (-pi, pi]")


@dataclass(frozen=True)
class CartesianMeasurement:
    """Position z = [x, y] with its 2x2 covariance R"""

    position: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        position = np.asarray(self.position, dtype=float).reshape(2)
        covariance = np.asarray(self.covariance, dtype=float).reshape(2, 2)
        if not np.allclose(covariance, covariance.T, rtol=1e-12, atol=0.0):
            raise InvalidInputError("measurement covariance must be symmetric")
        if np.linalg.eigvalsh(covariance).min() <= 0:
            raise InvalidInputError("measurement covariance must be positive definite")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "covariance", covariance)

    def translated(self, offset: Sequence[float]) -> "CartesianMeasurement":
        """Same measurement expressed in a frame whose origin is shifted by -offset"""
        return CartesianMeasurement(self.position + np.asarray(offset, dtype=float), self.covariance)


def wrap_angle(angle):
    """Map angles to (-pi, pi]"""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def convert_polar_arrays(r, theta, sigma_r, sigma_theta) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized debiased conversion.

    Returns positions with shape (..., 2) and covariances with shape (..., 2, 2).
    The covariance entries are evaluated with expm1 so that they stay positive
    as sigma_theta approaches zero.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(sigma_theta, dtype=float) ** 2
    var_r = np.asarray(sigma_r, dtype=float) ** 2

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    gain = np.exp(s / 2.0)
    position = np.stack([gain * r * cos_t, gain * r * sin_t], axis=-1)

    r2 = r ** 2
    half_total = 0.5 * (r2 + var_r)
    cos_2t, sin_2t = np.cos(2.0 * theta), np.sin(2.0 * theta)
    em_2s = np.expm1(-2.0 * s)  # e^{-2 s} - 1
    em_s = np.expm1(s)  # e^{s} - 1

    r11 = var_r * cos_t ** 2 + half_total * cos_2t * em_2s + em_s * r2 * cos_t ** 2
    r22 = var_r * sin_t ** 2 - half_total * cos_2t * em_2s + em_s * r2 * sin_t ** 2
    r12 = 0.5 * sin_2t * (var_r + (r2 + var_r) * em_2s + em_s * r2)

    covariance = np.stack([np.stack([r11, r12], axis=-1), np.stack([r12, r22], axis=-1)], axis=-2)
    return position, covariance


def convert_polar(m: PolarMeasurement) -> CartesianMeasurement:
    """Debiased polar-to-Cartesian conversion with its exact covariance"""
    m.validate()
    position, covariance = convert_polar_arrays(m.range, m.bearing, m.sigma_r, m.sigma_theta)
    return CartesianMeasurement(position, covariance)


def sample_polar(
    true_position: Sequence[float],
    sigma_r: float,
    sigma_theta: float,
    rng_seed: SeedLike = None,
    sensor_position: Sequence[float] = (0.0, 0.0),
) -> PolarMeasurement:
    """Perturb the range/bearing of a true position with independent Gaussian noise.

    Zero sigmas return the exact polar coordinates. The bearing is wrapped to
    (-pi, pi] after noise is added.
    """
    if sigma_r < 0 or sigma_theta < 0:
        raise InvalidInputError("noise sigmas must be non-negative")
    relative = np.asarray(true_position, dtype=float) - np.asarray(sensor_position, dtype=float)
    true_range = float(np.hypot(relative[0], relative[1]))
    if true_range == 0.0:
        raise InvalidInputError("true position coincides with the sensor; bearing undefined")
    true_bearing = float(np.arctan2(relative[1], relative[0]))

    rng = as_generator(rng_seed)
    noisy_range = true_range + (rng.normal(0.0, sigma_r) if sigma_r > 0 else 0.0)
    noisy_bearing = true_bearing + (rng.normal(0.0, sigma_theta) if sigma_theta > 0 else 0.0)
    if noisy_range <= 0:
        # Reflect through the sensor: the return came from the opposite bearing.
        noisy_range, noisy_bearing = -noisy_range, noisy_bearing + np.pi
    return PolarMeasurement(noisy_range, wrap_angle(noisy_bearing), sigma_r, sigma_theta)


def sample_esm(
    class_params: "ClassDefinition",
    rng_seed: SeedLike = None,
    derived: Optional[Dict[str, float]] = None,
) -> EsmSignalReport:
    """Draw one signal-level ESM report for a target of the given class.

    Amplitude is Rayleigh with the class parameter; the remaining signal fields
    come from the class emitter Gaussians, with each high/low pair sorted so
    that high >= low.
    """
    amplitude_model: Rayleigh = class_params.amplitude
    if not amplitude_model.sigma > 0:
        raise InvalidInputError(f"Rayleigh parameter must be positive, got {amplitude_model.sigma}")

    rng = as_generator(rng_seed)
    emitter: EmitterModel = class_params.emitter
    values = {name: getattr(emitter, name).sample(rng) for name in ESM_FIELDS if name != "amplitude"}
    for high, low in _ORDERED_PAIRS:
        if values[high] < values[low]:
            values[high], values[low] = values[low], values[high]
    values["amplitude"] = amplitude_model.sample(rng)

    noise_model = {name: getattr(emitter, name) for name in ESM_FIELDS if name != "amplitude"}
    noise_model["amplitude"] = amplitude_model
    return EsmSignalReport(**values, noise_model=noise_model, derived=dict(derived or {}))
