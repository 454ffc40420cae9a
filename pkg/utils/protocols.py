"""Target-trial protocol files.

A protocol is a JSON document whose keys follow a fixed order; ``serialize_protocol``
writes that order back so parse -> serialize is byte-stable on canonical files.
Errors point at the line of the offending key.
"""
import re
import json
import math
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import (
    BaseModel, ConfigDict, Field, StrictBool, StrictInt, StrictStr, ValidationError, field_validator, model_validator,
)

from utils.errors import ConfigError, SchemaError

PROTOCOL_DIR = Path(__file__).resolve().parent.parent / "config" / "protocols"


class Contrast(str, Enum):
    ITT_ANALOG = "ITT_ANALOG"
    PER_PROTOCOL = "PER_PROTOCOL"


OUTCOME_EXTRACTORS = ("y_at_end", "loss_or_y")
COMPETING_EVENTS = ("pregnancy_loss",)
BASELINE_COVARIATES = ("prior_treatment", "prepreg_user", "u_proxy", "preconception_visit", "first_contact_week")
TIME_VARYING_COVARIATES = ("lag_on_treatment",)

CRITERION_RE = re.compile(r"^(?:(singleton_pregnancy|no_exclusion_codes|current_use)|registered_before_week:(\d+))$")


@dataclass(frozen=True)
class Strategy:
    name: str
    on_treatment: bool
    description: str = ""


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    title: str
    window_weeks: tuple
    criteria: tuple
    strategies: tuple
    grace_period_weeks: int = 0
    stratify_by_prior_use: bool = False
    confounders: tuple = ()
    postpartum_weeks: int = 12
    ltfu_gap_days: int = 60
    outcome_name: str = "outcome"
    outcome_extractor: str = "y_at_end"
    competing_events: tuple = COMPETING_EVENTS
    contrast: Contrast = Contrast.ITT_ANALOG
    censoring_covariates: tuple = ()

    @property
    def on_strategy(self):
        return next(s for s in self.strategies if s.on_treatment)

    @property
    def off_strategy(self):
        return next(s for s in self.strategies if not s.on_treatment)

    @property
    def composite(self):
        return self.outcome_extractor == "loss_or_y"

    @property
    def loss_is_competing(self):
        return "pregnancy_loss" in self.competing_events

    @property
    def ltfu_gap_weeks(self):
        return math.ceil(self.ltfu_gap_days / 7)

    @property
    def requires_current_use(self):
        return "current_use" in self.criteria

    @property
    def registered_before_week(self) -> Optional[int]:
        for criterion in self.criteria:
            m = CRITERION_RE.match(criterion)
            if m and m.group(2) is not None:
                return int(m.group(2))
        return None

    def with_overrides(self, **changes):
        return replace(self, **changes)


# ==============================================================================
# PARSING
# ==============================================================================

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _Eligibility(_Section):
    window_weeks: tuple[StrictInt, StrictInt]
    criteria: list[StrictStr] = Field(default_factory=list)

    @field_validator("window_weeks")
    @classmethod
    def validate_window(cls, v):
        if v[0] > v[1]:
            raise ValueError(f"expected [low, high] with low <= high, got {list(v)}")
        return v

    @field_validator("criteria")
    @classmethod
    def validate_criteria(cls, v):
        for criterion in v:
            if not CRITERION_RE.match(criterion):
                raise ValueError(f"unknown criterion {criterion!r}")
        return v


class _Strategy(_Section):
    name: StrictStr
    on_treatment: StrictBool
    description: StrictStr = ""


class _Assignment(_Section):
    stratify_by_prior_use: StrictBool = False
    confounders: list[StrictStr] = Field(default_factory=list)

    @field_validator("confounders")
    @classmethod
    def validate_confounders(cls, v):
        for c in v:
            if c not in BASELINE_COVARIATES:
                raise ValueError(f"unknown baseline covariate {c!r}")
        return v


class _Followup(_Section):
    postpartum_weeks: StrictInt = Field(default=12, ge=0)
    ltfu_gap_days: StrictInt = Field(default=60, gt=0)


class _Outcome(_Section):
    name: StrictStr = "outcome"
    extractor: StrictStr = "y_at_end"
    competing_events: list[StrictStr] = Field(default_factory=lambda: list(COMPETING_EVENTS))

    @field_validator("extractor")
    @classmethod
    def validate_extractor(cls, v):
        if v not in OUTCOME_EXTRACTORS:
            raise ValueError(f"unknown extractor {v!r}; expected one of {', '.join(OUTCOME_EXTRACTORS)}")
        return v

    @field_validator("competing_events")
    @classmethod
    def validate_competing_events(cls, v):
        for event in v:
            if event not in COMPETING_EVENTS:
                raise ValueError(f"unknown competing event {event!r}")
        return v

    @model_validator(mode="after")
    def validate_loss_handling(self):
        if self.extractor == "loss_or_y" and "pregnancy_loss" in self.competing_events:
            raise ValueError("pregnancy loss is part of the loss_or_y outcome and cannot also be a competing event")
        return self


class ProtocolFile(_Section):
    """Protocol document as written on disk."""

    name: StrictStr = Field(pattern=r"^[a-z0-9_]+$")
    title: StrictStr = ""
    eligibility: _Eligibility
    strategies: list[_Strategy] = Field(min_length=2, max_length=2)
    grace_period_weeks: StrictInt = Field(default=0, ge=0)
    assignment: _Assignment = Field(default_factory=_Assignment)
    followup: _Followup = Field(default_factory=_Followup)
    outcome: _Outcome = Field(default_factory=_Outcome)
    contrast: Contrast = Contrast.ITT_ANALOG
    censoring_covariates: list[StrictStr] = Field(default_factory=list)

    @field_validator("strategies")
    @classmethod
    def validate_strategies(cls, v):
        if sum(s.on_treatment for s in v) != 1:
            raise ValueError("exactly one strategy must have on_treatment = true")
        if v[0].name == v[1].name:
            raise ValueError("strategy names must differ")
        return v

    @field_validator("censoring_covariates")
    @classmethod
    def validate_censoring_covariates(cls, v):
        for c in v:
            if c not in BASELINE_COVARIATES + TIME_VARYING_COVARIATES:
                raise ValueError(f"unknown covariate {c!r}")
        return v

    def to_spec(self):
        return ProtocolSpec(
            name=self.name, title=self.title, window_weeks=tuple(self.eligibility.window_weeks),
            criteria=tuple(self.eligibility.criteria),
            strategies=tuple(Strategy(s.name, s.on_treatment, s.description) for s in self.strategies),
            grace_period_weeks=self.grace_period_weeks,
            stratify_by_prior_use=self.assignment.stratify_by_prior_use,
            confounders=tuple(self.assignment.confounders),
            postpartum_weeks=self.followup.postpartum_weeks, ltfu_gap_days=self.followup.ltfu_gap_days,
            outcome_name=self.outcome.name, outcome_extractor=self.outcome.extractor,
            competing_events=tuple(self.outcome.competing_events), contrast=self.contrast,
            censoring_covariates=tuple(self.censoring_covariates),
        )


def _line_of(text, path):
    """Line of the innermost key of ``path``, searching each key after its parent."""
    line, start = None, 0
    for key in path:
        if not isinstance(key, str):
            continue
        m = re.compile(rf'"{re.escape(key)}"\s*:').search(text, start)
        if m is None:
            break
        start = m.start()
        line = text.count("\n", 0, start) + 1
    return line


def _schema_error(text, error):
    loc = error["loc"]
    field = ".".join(k for k in loc if isinstance(k, str)) or None
    message = error["msg"].removeprefix("Value error, ")
    return SchemaError(message, line=_line_of(text, loc) if loc else 1, field=field)


def parse_protocol(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(e.msg, line=e.lineno) from None
    if not isinstance(doc, dict):
        raise SchemaError("protocol must be a JSON object", line=1)
    try:
        parsed = ProtocolFile.model_validate(doc)
    except ValidationError as e:
        raise _schema_error(text, e.errors()[0]) from None
    return parsed.to_spec()


def protocol_to_mapping(protocol):
    return {
        "name": protocol.name,
        "title": protocol.title,
        "eligibility": {
            "window_weeks": list(protocol.window_weeks),
            "criteria": list(protocol.criteria),
        },
        "strategies": [{"name": s.name, "on_treatment": s.on_treatment, "description": s.description}
                       for s in protocol.strategies],
        "grace_period_weeks": protocol.grace_period_weeks,
        "assignment": {
            "stratify_by_prior_use": protocol.stratify_by_prior_use,
            "confounders": list(protocol.confounders),
        },
        "followup": {
            "postpartum_weeks": protocol.postpartum_weeks,
            "ltfu_gap_days": protocol.ltfu_gap_days,
        },
        "outcome": {
            "name": protocol.outcome_name,
            "extractor": protocol.outcome_extractor,
            "competing_events": list(protocol.competing_events),
        },
        "contrast": protocol.contrast.value,
        "censoring_covariates": list(protocol.censoring_covariates),
    }


def serialize_protocol(protocol):
    return json.dumps(protocol_to_mapping(protocol), indent=2, ensure_ascii=False) + "\n"


def available_protocols():
    return sorted(p.stem for p in PROTOCOL_DIR.glob("*.json"))


def load_protocol(name_or_path):
    """Load a shipped protocol by name, or any protocol file by path."""
    path = Path(name_or_path)
    if path.suffix != ".json":
        path = PROTOCOL_DIR / f"{name_or_path}.json"
    if not path.is_file():
        raise ConfigError(f"Protocol '{name_or_path}' not found (shipped: {', '.join(available_protocols())})")
    protocol = parse_protocol(path.read_text(encoding="utf-8"))
    logging.debug(f"Loaded protocol {protocol.name} from {path}")
    return protocol
