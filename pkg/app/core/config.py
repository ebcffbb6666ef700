"""
Configuration for fusionkit.

Process-level settings come from the environment (FUSIONKIT_* variables or a
.env file). The scenario document lives in config/config.json (YAML is also
accepted) and is validated into FusionConfig; every failure is reported as a
ConfigError pointing at the offending line.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from fusion.attributes import AttributeCatalog
from fusion.classification import ClassDefinition
from fusion.exceptions import ConfigError
from fusion.simulation import Scenario, parse_feature_subset, subset_label
from fusion.tracking import ClassModelSet, constant_acceleration_model, constant_velocity_model

logger = logging.getLogger("config")

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = "config/config.json"


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial_position: Tuple[float, float]
    speed: float = Field(ge=0.0)
    course: float
    true_class: int = Field(ge=1)
    true_amplitude_sigma: float = Field(gt=0.0)
    true_length: float
    length_sigma: float = Field(ge=0.0)
    steps: int = Field(ge=1)
    dt: float = Field(gt=0.0)


class RadarConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    position: Tuple[float, float] = (0.0, -2000.0)
    sigma_r: float = Field(gt=0.0)
    sigma_theta: float = Field(gt=0.0)


class MotionModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    q: float = Field(ge=0.0)
    label: Optional[str] = None

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value: str):
        if value not in ("cv", "ca"):
            raise ValueError("motion model kind must be 'cv' or 'ca'")
        return value


class ModelSetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    class_id: int = Field(ge=1)
    models: List[MotionModelConfig] = Field(min_length=1)
    transition: List[List[float]]

    @model_validator(mode="after")
    def _square_transition(self):
        r = len(self.models)
        if len(self.transition) != r or any(len(row) != r for row in self.transition):
            raise ValueError(f"transition must be a {r}x{r} matrix")
        for row in self.transition:
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-12:
                raise ValueError("transition rows must be probability vectors")
        return self

    def build(self, dt: float) -> ClassModelSet:
        models = []
        for m in self.models:
            if m.kind == "cv":
                models.append(constant_velocity_model(dt, m.q, label=m.label or "CV"))
            else:
                models.append(constant_acceleration_model(dt, m.q, label=m.label or "CA"))
        return ClassModelSet(self.class_id, tuple(models), self.transition)


class TrackingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kinematic_feature: str = "speed"
    process_noise: float = Field(default=0.1, ge=0.0)
    confirm_hits: int = Field(default=16, ge=2)
    model_sets: List[ModelSetConfig] = Field(default_factory=list)

    @field_validator("kinematic_feature")
    @classmethod
    def _known_feature(cls, value: str):
        if value not in ("speed", "imm"):
            raise ValueError("kinematic_feature must be 'speed' or 'imm'")
        return value


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    features: List[str] = Field(min_length=1)
    runs: int = Field(ge=1)
    seed: int = 0
    output_dir: str = "results"

    @field_validator("features")
    @classmethod
    def _valid_subsets(cls, value: List[str]):
        labels = [subset_label(parse_feature_subset(v)) for v in value]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate feature subsets in {value}")
        return labels


class LoggingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: str = "INFO"
    format: str = "%(name)s: %(message)s"
    file: Optional[str] = None
    max_size: int = Field(default=10 * 1024 * 1024, gt=0)
    backup_count: int = Field(default=5, ge=0)

    @field_validator("level")
    @classmethod
    def _known_level(cls, value: str):
        if value.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown logging level '{value}'")
        return value.upper()


class FusionConfig(BaseModel):
    """Validated scenario document"""

    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioConfig
    radar: RadarConfig
    classes: List[ClassDefinition] = Field(min_length=1)
    tracking: TrackingConfig = Field(default_factory=TrackingConfig)
    attributes: Optional[AttributeCatalog] = None
    experiment: ExperimentConfig
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @model_validator(mode="after")
    def _consistent_classes(self):
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"class ids must be unique: {ids}")
        if self.scenario.true_class not in ids:
            raise ValueError(f"true_class {self.scenario.true_class} is not a declared class")
        if self.tracking.kinematic_feature == "imm":
            covered = {m.class_id for m in self.tracking.model_sets}
            missing = [i for i in ids if i not in covered]
            if missing:
                raise ValueError(f"imm kinematic feature needs model sets for classes {missing}")
        if tuple(self.radar.position) == tuple(self.scenario.initial_position):
            raise ValueError("radar position must differ from the initial target position")
        if self.attributes is not None:
            for name, definition in self.attributes.attributes.items():
                for outcome in definition.outcomes:
                    if outcome.class_id is not None and outcome.class_id not in ids:
                        raise ValueError(f"attribute '{name}' outcome '{outcome.name}' links unknown class {outcome.class_id}")
        return self

    def scenario_for(self, features: str) -> Scenario:
        """Simulation scenario for one feature subset"""
        return Scenario(
            **self.scenario.model_dump(),
            radar_position=self.radar.position,
            sigma_r=self.radar.sigma_r,
            sigma_theta=self.radar.sigma_theta,
            process_noise=self.tracking.process_noise,
            confirm_hits=self.tracking.confirm_hits,
            kinematic_feature=self.tracking.kinematic_feature,
            features=features,
        )

    def model_sets(self) -> List[ClassModelSet]:
        return [m.build(self.scenario.dt) for m in self.tracking.model_sets]


def _locate(text: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """Best-effort 1-based line of the key path `loc` in a JSON or YAML document"""
    lines = text.splitlines()
    start, found, skip = 0, None, 0
    for key in loc:
        if isinstance(key, int):
            skip = key
            continue
        pattern = re.compile(rf"(?<![\w-])[\"']?{re.escape(key)}[\"']?\s*:")
        matches = [i for i in range(start, len(lines)) if pattern.search(lines[i])]
        if len(matches) > skip:
            start = matches[skip]
            found = start + 1
        skip = 0
    return found


def _describe(error: Dict[str, Any]) -> str:
    path = ".".join(str(p) for p in error["loc"])
    return f"{path}: {error['msg']}" if path else error["msg"]


def parse_config(text: str, source: str = "<config>", fmt: str = "json") -> FusionConfig:
    """Parse and validate a scenario document"""
    if fmt in ("yaml", "yml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", mark.line + 1 if mark else None, source) from None
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", e.lineno, source) from None

    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    try:
        return FusionConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        raise ConfigError(_describe(error), _locate(text, error["loc"]), source) from None


def _resolve(path: Union[str, Path]) -> Path:
    path = Path(path)
    if not path.is_absolute() and not path.exists() and (PROJECT_ROOT / path).exists():
        return PROJECT_ROOT / path
    return path


def load_config(path: Union[str, Path]) -> FusionConfig:
    path = _resolve(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", source=str(path)) from None
    fmt = "yaml" if path.suffix.lower() in (".yaml", ".yml") else "json"
    cfg = parse_config(text, str(path), fmt)
    logger.debug(f"Loaded configuration from {path}")
    return cfg


def dump_config(cfg: FusionConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2) + "\n"


def apply_overrides(
    cfg: FusionConfig,
    runs: Optional[int] = None,
    steps: Optional[int] = None,
    seed: Optional[int] = None,
    features: Optional[Sequence[str]] = None,
    output_dir: Optional[str] = None,
) -> FusionConfig:
    """Command-line values take precedence over the document; the result is re-validated"""
    data = cfg.model_dump(mode="json")
    if runs is not None:
        data["experiment"]["runs"] = runs
    if steps is not None:
        data["scenario"]["steps"] = steps
    if seed is not None:
        data["experiment"]["seed"] = seed
    if features is not None:
        data["experiment"]["features"] = list(features)
    if output_dir is not None:
        data["experiment"]["output_dir"] = str(output_dir)
    try:
        return FusionConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_describe(e.errors()[0]), source="<command line>") from None


class Settings(BaseSettings):
    """Process settings; the scenario document is loaded lazily from `config_file`"""

    model_config = SettingsConfigDict(env_prefix="FUSIONKIT_", env_file=".env", extra="ignore")

    config_file: str = Field(default=DEFAULT_CONFIG_PATH, validation_alias=AliasChoices("FUSIONKIT_CONFIG", "config_file"))
    threads: int = Field(default=1, ge=1)
    log_level: Optional[str] = None

    _document: Optional[FusionConfig] = PrivateAttr(default=None)

    def load(self, path: Optional[Union[str, Path]] = None) -> FusionConfig:
        self._document = load_config(path or self.config_file)
        return self._document

    def use(self, cfg: FusionConfig) -> None:
        self._document = cfg

    @property
    def document(self) -> FusionConfig:
        if self._document is None:
            self.load()
        return self._document

    @property
    def config(self) -> Dict[str, Any]:
        return self.document.model_dump(mode="json")

    def get_class_definitions(self) -> List[ClassDefinition]:
        return list(self.document.classes)

    def get_catalog(self) -> Optional[AttributeCatalog]:
        return self.document.attributes

    def get_model_sets(self) -> List[ClassModelSet]:
        return self.document.model_sets()

    def get_logging_config(self) -> LoggingConfig:
        cfg = self.document.logging
        if self.log_level:
            cfg = cfg.model_copy(update={"level": self.log_level.upper()})
        return cfg


settings = Settings()
