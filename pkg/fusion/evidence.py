"""
Dempster-Shafer evidence machinery over a finite frame of discernment.

Subsets of the frame are bitmasks: bit i is set when the i-th frame element
belongs to the subset. Mass functions only store focal elements (mass > 0).
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import FrameMismatchError, InvalidInputError, TotalConflictError

logger = logging.getLogger("fusion.evidence")

MAX_FRAME_SIZE = 20
SUM_TOLERANCE = 1e-9
PRUNE_THRESHOLD = 1e-15
TOTAL_CONFLICT_THRESHOLD = 1.0 - 1e-9

Subset = Union[int, Iterable[str]]


@dataclass(frozen=True)
class Frame:
    """Ordered set of mutually exclusive hypotheses"""

    elements: Tuple[str, ...]

    def __post_init__(self):
        elements = tuple(str(e) for e in self.elements)
        if not elements:
            raise InvalidInputError("a frame needs at least one element")
        if len(elements) > MAX_FRAME_SIZE:
            raise InvalidInputError(f"frame size {len(elements)} exceeds {MAX_FRAME_SIZE}")
        if len(set(elements)) != len(elements):
            raise InvalidInputError(f"frame elements must be unique: {elements}")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def full(self) -> int:
        """Bitmask of the whole frame"""
        return (1 << len(self.elements)) - 1

    def subset(self, hypothesis: Subset) -> int:
        """Bitmask for a collection of element names, or a validated bitmask"""
        if isinstance(hypothesis, (int, np.integer)):
            mask = int(hypothesis)
            if mask < 0 or mask & ~self.full:
                raise FrameMismatchError(f"subset mask {mask:#b} is not over frame {self.elements}")
            return mask
        mask = 0
        for name in hypothesis:
            try:
                mask |= 1 << self.elements.index(str(name))
            except ValueError:
                raise FrameMismatchError(f"'{name}' is not an element of frame {self.elements}") from None
        return mask

    def names(self, mask: int) -> Tuple[str, ...]:
        return tuple(e for i, e in enumerate(self.elements) if mask >> i & 1)


@dataclass(frozen=True)
class BeliefInterval:
    belief: float
    plausibility: float

    def __post_init__(self):
        if not 0.0 <= self.belief <= self.plausibility <= 1.0:
            raise InvalidInputError(f"invalid belief interval [{self.belief}, {self.plausibility}]")


@dataclass(frozen=True)
class MassFunction:
    """Basic belief assignment over the subsets of a frame.

    Masses are validated to sum to one within SUM_TOLERANCE and then
    renormalized exactly; zero masses are dropped.
    """

    frame: Frame
    masses: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        focal: Dict[int, float] = {}
        for key, value in self.masses.items():
            mask = self.frame.subset(key)
            value = float(value)
            if not np.isfinite(value) or value < 0.0 or value > 1.0 + SUM_TOLERANCE:
                raise InvalidInputError(f"mass {value} for {self.frame.names(mask)} outside [0, 1]")
            if value == 0.0:
                continue
            if mask == 0:
                raise InvalidInputError("the empty set cannot carry mass")
            focal[mask] = focal.get(mask, 0.0) + value
        total = sum(focal.values())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise InvalidInputError(f"masses sum to {total}, expected 1")
        object.__setattr__(self, "masses", {mask: focal[mask] / total for mask in sorted(focal)})

    @classmethod
    def vacuous(cls, frame: Frame) -> "MassFunction":
        """Total ignorance: all mass on the whole frame"""
        return cls(frame, {frame.full: 1.0})

    @classmethod
    def from_probabilities(cls, frame: Frame, probabilities: Sequence[float]) -> "MassFunction":
        """Bayesian mass function with singleton focal elements"""
        p = np.asarray(probabilities, dtype=float)
        if p.shape != (len(frame),):
            raise FrameMismatchError(f"{p.size} probabilities for a frame of size {len(frame)}")
        return cls(frame, {1 << i: float(v) for i, v in enumerate(p) if v > 0})

    @property
    def focal_elements(self) -> List[Tuple[str, ...]]:
        return [self.frame.names(mask) for mask in self.masses]

    def mass(self, hypothesis: Subset) -> float:
        return self.masses.get(self.frame.subset(hypothesis), 0.0)

    def is_bayesian(self) -> bool:
        return all(mask & (mask - 1) == 0 for mask in self.masses)

    def discount(self, reliability: float) -> "MassFunction":
        """Shafer discounting: scale every mass by the reliability and move the rest to the frame"""
        if not 0.0 <= reliability <= 1.0:
            raise InvalidInputError(f"reliability {reliability} outside [0, 1]")
        masses = {mask: reliability * value for mask, value in self.masses.items()}
        masses[self.frame.full] = masses.get(self.frame.full, 0.0) + (1.0 - reliability)
        return MassFunction(self.frame, masses)

    def on_frame(self, frame: Frame) -> "MassFunction":
        """Re-express this mass function over a frame holding the same elements in another order"""
        if frame == self.frame:
            return self
        if set(frame.elements) != set(self.frame.elements):
            raise FrameMismatchError(f"frames {self.frame.elements} and {frame.elements} differ")
        return MassFunction(frame, {frame.subset(self.frame.names(mask)): v for mask, v in self.masses.items()})


def _check_same_frame(m1: MassFunction, m2: MassFunction) -> None:
    if m1.frame != m2.frame:
        raise FrameMismatchError(f"frames {m1.frame.elements} and {m2.frame.elements} differ")


def belief_interval(m: MassFunction, hypothesis: Subset) -> BeliefInterval:
    """Belief (support) and plausibility of a hypothesis"""
    target = m.frame.subset(hypothesis)
    complement = m.frame.full & ~target
    belief = sum(v for mask, v in m.masses.items() if mask & ~target == 0)
    disbelief = sum(v for mask, v in m.masses.items() if mask & ~complement == 0)
    belief = min(max(belief, 0.0), 1.0)
    plausibility = min(max(1.0 - disbelief, belief), 1.0)
    return BeliefInterval(belief, plausibility)


def combine_dempster(m1: MassFunction, m2: MassFunction) -> Tuple[MassFunction, float]:
    """Dempster's rule of combination.

    Returns the orthogonal sum and the conflict K, the total product mass that
    fell on empty intersections.
    """
    _check_same_frame(m1, m2)
    combined: Dict[int, float] = {}
    conflict = 0.0
    for b, mb in m1.masses.items():
        for c, mc in m2.masses.items():
            intersection = b & c
            if intersection:
                combined[intersection] = combined.get(intersection, 0.0) + mb * mc
            else:
                conflict += mb * mc

    if conflict > TOTAL_CONFLICT_THRESHOLD:
        raise TotalConflictError(conflict)

    normalizer = 1.0 - conflict
    pruned = {mask: v / normalizer for mask, v in combined.items() if v / normalizer >= PRUNE_THRESHOLD}
    total = sum(pruned.values())
    result = MassFunction(m1.frame, {mask: v / total for mask, v in pruned.items()})
    logger.debug(f"Combined {len(m1.masses)}x{len(m2.masses)} focal elements, K={conflict:.6g}")
    return result, conflict


def bayesian_approximation(m: MassFunction) -> np.ndarray:
    """Plausibility-proportional probability over the frame elements"""
    n = len(m.frame)
    weights = np.zeros(n)
    for mask, value in m.masses.items():
        for i in range(n):
            if mask >> i & 1:
                weights[i] += value
    return weights / weights.sum()


# Plain-text format: optional "frame: a, b, c" header, then one "{a,b} 0.3" line per focal element.
_FOCAL_LINE = re.compile(r"^\{(?P<elements>[^{}]*)\}\s+(?P<mass>\S+)$")
_FRAME_LINE = re.compile(r"^frame\s*:\s*(?P<elements>.+)$", re.IGNORECASE)


def _scan_mass_text(text: str, source: str) -> Tuple[Optional[List[str]], List[Tuple[int, List[str], float]]]:
    declared: Optional[List[str]] = None
    entries: List[Tuple[int, List[str], float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        frame_match = _FRAME_LINE.match(line)
        if frame_match:
            if declared is not None or entries:
                raise InvalidInputError(f"{source}:{lineno}: frame header must come first and only once")
            declared = [e.strip() for e in frame_match.group("elements").split(",") if e.strip()]
            continue
        focal_match = _FOCAL_LINE.match(line)
        if not focal_match:
            raise InvalidInputError(f"{source}:{lineno}: expected '{{elem,...}} mass', got '{raw.strip()}'")
        elements = [e.strip() for e in focal_match.group("elements").split(",") if e.strip()]
        if not elements:
            raise InvalidInputError(f"{source}:{lineno}: the empty set cannot carry mass")
        try:
            value = float(focal_match.group("mass"))
        except ValueError:
            raise InvalidInputError(f"{source}:{lineno}: mass '{focal_match.group('mass')}' is not a number") from None
        entries.append((lineno, elements, value))

    if not entries:
        raise InvalidInputError(f"{source}: no focal elements")
    return declared, entries


def _build_mass(frame: Frame, entries: List[Tuple[int, List[str], float]], source: str) -> MassFunction:
    masses: Dict[int, float] = {}
    for lineno, elements, value in entries:
        try:
            mask = frame.subset(elements)
        except FrameMismatchError as e:
            raise InvalidInputError(f"{source}:{lineno}: {e}") from None
        if mask in masses:
            raise InvalidInputError(f"{source}:{lineno}: duplicate focal element {{{','.join(elements)}}}")
        masses[mask] = value
    try:
        return MassFunction(frame, masses)
    except InvalidInputError as e:
        raise InvalidInputError(f"{source}: {e}") from None


def parse_mass_texts(documents: Sequence[Tuple[str, str]]) -> List[MassFunction]:
    """Parse several (text, source) mass documents onto one shared frame.

    Declared frames must hold the same elements, otherwise FrameMismatchError.
    Documents without a header use the first declared frame, or, when no
    document declares one, every element in order of first appearance across
    the documents. Errors name the offending line.
    """
    scanned = [(_scan_mass_text(text, source), source) for text, source in documents]
    declared = [header for (header, _), _ in scanned if header is not None]
    if declared:
        shared = Frame(tuple(declared[0]))
    else:
        names: List[str] = []
        for (_, entries), _ in scanned:
            for _, elements, _ in entries:
                for element in elements:
                    if element not in names:
                        names.append(element)
        shared = Frame(tuple(names))

    masses = []
    for (header, entries), source in scanned:
        frame = shared if header is None else Frame(tuple(header))
        masses.append(_build_mass(frame, entries, source).on_frame(shared))
    return masses


def parse_mass_text(text: str, source: str = "<mass>") -> MassFunction:
    """Parse a mass function from its plain-text list form.

    Without a frame header the frame is the elements in order of first appearance.
    """
    return parse_mass_texts([(text, source)])[0]


def format_mass(m: MassFunction, with_frame: bool = True) -> str:
    lines = [f"frame: {', '.join(m.frame.elements)}"] if with_frame else []
    for mask, value in m.masses.items():
        lines.append(f"{{{','.join(m.frame.names(mask))}}} {value:.12g}")
    return "\n".join(lines) + "\n"
