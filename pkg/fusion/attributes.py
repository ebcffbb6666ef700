"""
Recursive Bayesian estimation of discrete target attributes from ESM signal reports.

Each attribute has a finite outcome list with priors p_i(0) and likelihoods
g_i(y). After every report the posterior is p_i(k) = g_i(y(k)) p_i(k-1) / c_k.
Reports are assumed independent conditioned on the attribute.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .distributions import Distribution
from .exceptions import DegenerateEvidenceError, InvalidInputError
from .measurement import EsmSignalReport

logger = logging.getLogger("fusion.attributes")

ATTRIBUTE_NAMES = ("speed", "shape", "length", "size", "emitter_id", "number_of_emitters")
NORMALIZATION_TOLERANCE = 1e-12


class LikelihoodDescriptor(BaseModel):
    """Density of one report field (signal field or derived quantity) under an outcome"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    field: str
    distribution: Distribution


class AttributeOutcome(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    prior: float = Field(ge=0.0, le=1.0)
    likelihood: Optional[LikelihoodDescriptor] = None
    # Target class this outcome stands for, when the attribute feeds classification
    class_id: Optional[int] = Field(default=None, ge=1)


class AttributeDefinition(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    outcomes: List[AttributeOutcome] = Field(min_length=2)

    @model_validator(mode="after")
    def _check_outcomes(self):
        total = sum(o.prior for o in self.outcomes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"outcome priors sum to {total}, expected 1")
        modelled = [o.likelihood is not None for o in self.outcomes]
        if any(modelled) and not all(modelled):
            raise ValueError("either every outcome or no outcome carries a likelihood descriptor")
        return self

    @property
    def modelled(self) -> bool:
        return self.outcomes[0].likelihood is not None

    @property
    def priors(self) -> np.ndarray:
        p = np.array([o.prior for o in self.outcomes], dtype=float)
        return p / p.sum()


class AttributeCatalog(BaseModel):
    """Attributes an ESM processor can estimate, with outcome priors and likelihood models.

    Attributes without likelihood descriptors are carried for bookkeeping and
    keep their priors.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    attributes: Dict[str, AttributeDefinition]

    @field_validator("attributes")
    @classmethod
    def _known_names(cls, value: Dict[str, AttributeDefinition]):
        unknown = sorted(set(value) - set(ATTRIBUTE_NAMES))
        if unknown:
            raise ValueError(f"unknown attributes {unknown}; expected a subset of {list(ATTRIBUTE_NAMES)}")
        return value

    def definition(self, attribute: str) -> AttributeDefinition:
        try:
            return self.attributes[attribute]
        except KeyError:
            raise InvalidInputError(f"attribute '{attribute}' is not in the catalog") from None


@dataclass(frozen=True)
class AttributeReport:
    """Per-attribute posterior vectors {a, A} after step_index reports"""

    posteriors: Mapping[str, np.ndarray]
    step_index: int = 0

    def __post_init__(self):
        frozen = {}
        for name, p in self.posteriors.items():
            p = np.asarray(p, dtype=float)
            if p.ndim != 1 or np.any(p < 0.0) or np.any(p > 1.0):
                raise InvalidInputError(f"posterior for '{name}' must be a probability vector")
            if abs(p.sum() - 1.0) > NORMALIZATION_TOLERANCE * max(1, p.size):
                raise InvalidInputError(f"posterior for '{name}' sums to {p.sum()}")
            p.setflags(write=False)
            frozen[name] = p
        object.__setattr__(self, "posteriors", frozen)

    def __getitem__(self, attribute: str) -> np.ndarray:
        return self.posteriors[attribute]


def attribute_likelihood(catalog: AttributeCatalog, attribute: str, outcome_index: int, y: EsmSignalReport) -> float:
    """g_i(y) for one outcome of one attribute"""
    definition = catalog.definition(attribute)
    if not 0 <= outcome_index < len(definition.outcomes):
        raise InvalidInputError(f"outcome index {outcome_index} out of range for '{attribute}'")
    descriptor = definition.outcomes[outcome_index].likelihood
    if descriptor is None:
        raise InvalidInputError(f"attribute '{attribute}' has no likelihood model")
    return descriptor.distribution.pdf(y.value(descriptor.field))


def attribute_likelihoods(catalog: AttributeCatalog, attribute: str, y: EsmSignalReport) -> np.ndarray:
    """Likelihood vector over all outcomes of an attribute"""
    n = len(catalog.definition(attribute).outcomes)
    return np.array([attribute_likelihood(catalog, attribute, i, y) for i in range(n)])


def _observable(definition: AttributeDefinition, y: EsmSignalReport) -> bool:
    if not definition.modelled:
        return False
    try:
        for outcome in definition.outcomes:
            y.value(outcome.likelihood.field)
    except InvalidInputError:
        return False
    return True


def initialize_attributes(catalog: AttributeCatalog) -> AttributeReport:
    """Report at k=0 carrying the catalog priors"""
    return AttributeReport({name: d.priors for name, d in catalog.attributes.items()}, step_index=0)


def attribute_evidence(y: EsmSignalReport, catalog: AttributeCatalog) -> AttributeReport:
    """Normalized likelihoods of a single report, i.e. the posterior from a uniform prior.

    Only attributes the report can inform are included. This is the {a, A}
    form a sensor sends when each report carries only its new evidence.
    """
    posteriors = {}
    for name, definition in catalog.attributes.items():
        if not _observable(definition, y):
            continue
        likelihoods = attribute_likelihoods(catalog, name, y)
        total = likelihoods.sum()
        if not total > 0:
            raise DegenerateEvidenceError(f"all likelihoods for attribute '{name}' are zero")
        posteriors[name] = likelihoods / total
    return AttributeReport(posteriors, step_index=1)


def update_attributes(prev: AttributeReport, y: EsmSignalReport, catalog: AttributeCatalog) -> AttributeReport:
    """One recursive Bayes step for every attribute the report can inform"""
    posteriors = {}
    for name, definition in catalog.attributes.items():
        try:
            previous = prev.posteriors[name]
        except KeyError:
            raise InvalidInputError(f"report carries no posterior for catalog attribute '{name}'") from None
        if previous.size != len(definition.outcomes):
            raise InvalidInputError(f"posterior for '{name}' has {previous.size} entries, catalog has {len(definition.outcomes)}")
        if not _observable(definition, y):
            posteriors[name] = previous
            continue

        unnormalized = attribute_likelihoods(catalog, name, y) * previous
        c_k = unnormalized.sum()
        if not c_k > 0:
            raise DegenerateEvidenceError(f"all likelihoods for attribute '{name}' are zero at step {prev.step_index + 1}")
        posteriors[name] = unnormalized / c_k

    logger.debug(f"Attribute update to step {prev.step_index + 1}")
    return AttributeReport(posteriors, step_index=prev.step_index + 1)
