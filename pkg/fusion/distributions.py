"""Scalar distribution descriptors used for sensor noise, attribute likelihoods and class models.

Only the two families the experiment needs are supported: Gaussian and Rayleigh.
"""

from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats


class Gaussian(BaseModel):
    """Normal distribution N(mean, sigma^2)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["gaussian"] = "gaussian"
    mean: float
    sigma: float = Field(gt=0)

    def pdf(self, x: float, extra_variance: float = 0.0) -> float:
        """Density at x, optionally convolved with independent zero-mean noise of the given variance"""
        scale = np.sqrt(self.sigma ** 2 + extra_variance)
        return float(stats.norm.pdf(x, loc=self.mean, scale=scale))

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(self.mean, self.sigma))


class Rayleigh(BaseModel):
    """Rayleigh distribution with scale sigma (mode at sigma)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["rayleigh"] = "rayleigh"
    sigma: float = Field(gt=0)

    def pdf(self, x: float) -> float:
        return float(stats.rayleigh.pdf(x, scale=self.sigma))

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.rayleigh(self.sigma))

    @property
    def mean(self) -> float:
        return self.sigma * np.sqrt(np.pi / 2.0)

    @property
    def variance(self) -> float:
        return (4.0 - np.pi) / 2.0 * self.sigma ** 2


Distribution = Annotated[Union[Gaussian, Rayleigh], Field(discriminator="kind")]
