"""Experiment configuration: a module under ``config/`` or a JSON file with the same keys."""
import json
import logging
import importlib
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, StrictBool, StrictInt, StrictStr, ValidationError, field_validator

from utils.design_engine import Anchor
from utils.errors import ConfigError
from utils.oracle import OracleEstimand
from utils.protocols import load_protocol
from utils.scm_engine import world_params_from_mapping

DEFAULT_OUTPUT_DIR = "output"


@dataclass
class Experiment:
    name: str
    params: object
    protocol: object
    designs: tuple
    estimand: OracleEstimand
    n_repeats: int = 20
    n_boot: int = 200
    output_dir: str = DEFAULT_OUTPUT_DIR
    method: Optional[str] = None
    include_naive: bool = False


class ExperimentFile(BaseModel):
    """JSON experiment config; keys are the config-module names in any case."""

    model_config = ConfigDict(extra="forbid")

    scenario: Optional[StrictStr] = None
    n_persons: Optional[StrictInt] = Field(default=None, ge=0)
    seed: Optional[StrictInt] = Field(default=None, ge=0)
    coefficients: Optional[dict[str, Any]] = None
    prepregnancy: Optional[dict[str, Any]] = None
    encounters: Optional[dict[str, Any]] = None
    protocol: Optional[StrictStr] = None
    stratify_by_prior_use: Optional[StrictBool] = None
    confounders: Optional[list[StrictStr]] = None
    designs: Optional[list[StrictStr]] = Field(default=None, min_length=1)
    estimand: Optional[dict[str, Any]] = None
    n_repeats: Optional[StrictInt] = Field(default=None, ge=0)
    n_boot: Optional[StrictInt] = Field(default=None, ge=0)
    oracle_draws: Optional[StrictInt] = Field(default=None, gt=0)
    output_dir: Optional[StrictStr] = None
    method: Optional[StrictStr] = None
    include_naive: Optional[StrictBool] = None

    @field_validator("designs")
    @classmethod
    def validate_designs(cls, v):
        for design in v or ():
            try:
                Anchor.parse(design)
            except ConfigError as e:
                raise ValueError(str(e)) from None
        return v

    def as_config(self):
        """Attribute view with the upper-case names a config module uses; unset keys stay absent."""
        values = self.model_dump(exclude_unset=True, exclude_none=True)
        return SimpleNamespace(**{k.upper(): v for k, v in values.items()})


def _read_json_config(path):
    try:
        mapping = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: {e.msg}") from None
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    try:
        return ExperimentFile.model_validate({k.lower(): v for k, v in mapping.items()}).as_config()
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(k) for k in first["loc"]) or "config"
        raise ConfigError(f"{path}: {where}: {first['msg'].removeprefix('Value error, ')}") from None


def _load_module(name_or_path):
    path = Path(name_or_path)
    if path.suffix == ".json":
        if not path.is_file():
            raise ConfigError(f"config file '{path}' not found")
        return path.stem, _read_json_config(path)
    try:
        module = importlib.import_module(f"config.{name_or_path}")
    except ModuleNotFoundError:
        raise ConfigError(f"config '{name_or_path}' not found") from None
    return name_or_path, module


def load_experiment(name_or_path):
    name, config = _load_module(name_or_path)
    logging.info(f"Configuration '{name}' loaded")

    world = dict(getattr(config, "COEFFICIENTS", {}) or {})
    world["scenario"] = getattr(config, "SCENARIO", "FIG3A")
    world["n_persons"] = getattr(config, "N_PERSONS", 10_000)
    world["seed"] = getattr(config, "SEED", 20240101)
    world["prepreg"] = getattr(config, "PREPREGNANCY", None)
    world["encounters"] = getattr(config, "ENCOUNTERS", None)
    params = world_params_from_mapping(world)

    protocol = load_protocol(getattr(config, "PROTOCOL", "decision_point"))
    stratify = getattr(config, "STRATIFY_BY_PRIOR_USE", None)
    if stratify is not None:
        protocol = protocol.with_overrides(stratify_by_prior_use=bool(stratify))
    confounders = getattr(config, "CONFOUNDERS", None)
    if confounders is not None:
        protocol = protocol.with_overrides(confounders=tuple(confounders))

    designs = tuple(Anchor.parse(d) for d in getattr(config, "DESIGNS", ("4D",)))
    if not designs:
        raise ConfigError("DESIGNS is empty")

    estimand = dict(getattr(config, "ESTIMAND", {}) or {})
    estimand.setdefault("kind", "DECISION_AT_ANCHOR")
    estimand.setdefault("target_population", "OBSERVED_AT_ANCHOR")
    estimand.setdefault("mc_draws", getattr(config, "ORACLE_DRAWS", 100_000))
    try:
        oracle_estimand = OracleEstimand(**estimand)
    except TypeError as e:
        raise ConfigError(f"ESTIMAND: {e}") from None

    n_repeats = getattr(config, "N_REPEATS", 20)
    n_boot = getattr(config, "N_BOOT", 200)
    if n_repeats < 0 or n_boot < 0:
        raise ConfigError("N_REPEATS and N_BOOT must be >= 0")

    return Experiment(
        name=name, params=params, protocol=protocol, designs=designs, estimand=oracle_estimand,
        n_repeats=n_repeats, n_boot=n_boot, output_dir=getattr(config, "OUTPUT_DIR", DEFAULT_OUTPUT_DIR),
        method=getattr(config, "METHOD", None), include_naive=bool(getattr(config, "INCLUDE_NAIVE", False)),
    )
