"""Weekly structural model of pregnancy, treatment, loss and outcome.

All structural equations are logistic in an additive linear predictor. Every
person owns a counter-based random stream keyed by (seed, person_id); one fixed
block of uniforms per person drives every equation, so interventions that force
a treatment node reuse the same draws (common random numbers) and serial and
parallel runs agree.

Gestational weeks are integers with LMP = week 0; negative weeks lie before
conception.
"""
import math
import logging
from dataclasses import dataclass, field, fields, asdict
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd
import tqdm
from scipy.special import expit, logit, ndtri

from utils.errors import ConfigError, ParameterDomainError


# ==============================================================================
# ENUMS & CONSTANTS
# ==============================================================================

class Scenario(str, Enum):
    FIG3A = "FIG3A"
    FIG3B = "FIG3B"
    FIG3C = "FIG3C"
    PREVALENT_USER = "PREVALENT_USER"


class EncounterKind(str, Enum):
    PRECONCEPTION_COUNSELING = "PRECONCEPTION_COUNSELING"
    PREGNANCY_TEST = "PREGNANCY_TEST"
    PRENATAL_VISIT = "PRENATAL_VISIT"
    DELIVERY_OR_END = "DELIVERY_OR_END"


class CarePattern(str, Enum):
    EARLY = "EARLY"
    LATE = "LATE"
    NONE = "NONE"


CARE_CODES = (CarePattern.EARLY, CarePattern.LATE, CarePattern.NONE)

RECOGNITION_FIRST_WEEK = 4
RECOGNITION_LAST_WEEK = 20
PRECONCEPTION_EARLIEST_WEEK = -12

# weeks 4..20; peaks at 5-7
DEFAULT_RECOGNITION_WEIGHTS = (
    0.10, 0.18, 0.20, 0.15, 0.10, 0.07, 0.05, 0.04, 0.03,
    0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01,
)

# coefficients each scenario pins to zero
_FORCED_ZERO = {
    Scenario.FIG3A: ("coef_u_on_a0", "coef_u_on_a1", "coef_a0_on_s"),
    Scenario.FIG3B: ("coef_u_on_a0", "coef_u_on_a1"),
}

_TINY = 1e-300


def _check_probability(name, value):
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ParameterDomainError(f"{name} must be a probability in [0, 1], got {value}")


# ==============================================================================
# PARAMETER TYPES
# ==============================================================================

@dataclass(frozen=True)
class PrePregnancyParams:
    p_chronic_condition: float = 0.30
    p_initiate_per_month: float = 0.08
    p_adverse_event_on_initiation: float = 0.50
    p_discontinue_given_adverse: float = 0.80
    months_lookback: int = 12
    p_susceptible: float = 0.30

    def __post_init__(self):
        for name in ("p_chronic_condition", "p_initiate_per_month", "p_adverse_event_on_initiation",
                     "p_discontinue_given_adverse", "p_susceptible"):
            _check_probability(name, getattr(self, name))
        if int(self.months_lookback) != self.months_lookback or self.months_lookback < 1:
            raise ParameterDomainError(f"months_lookback must be an integer >= 1, got {self.months_lookback}")


@dataclass(frozen=True)
class EncounterParams:
    p_preconception_visit: float = 0.10
    recognition_week_distribution: tuple = DEFAULT_RECOGNITION_WEIGHTS
    p_late_prenatal_after_week12: float = 0.15
    p_no_prenatal_care: float = 0.11
    early_care_last_week: int = 12
    late_care_last_week: int = 20
    max_visit_delay_weeks: int = 2
    visit_interval_weeks: int = 4
    claims_lookback_weeks: int = 26
    u_proxy_correlation: float = 0.0

    def __post_init__(self):
        for name in ("p_preconception_visit", "p_late_prenatal_after_week12", "p_no_prenatal_care"):
            _check_probability(name, getattr(self, name))
        if self.p_late_prenatal_after_week12 + self.p_no_prenatal_care > 1.0 + 1e-12:
            raise ParameterDomainError("p_late_prenatal_after_week12 + p_no_prenatal_care must not exceed 1")

        weights = tuple(float(w) for w in self.recognition_week_distribution)
        expected = RECOGNITION_LAST_WEEK - RECOGNITION_FIRST_WEEK + 1
        if len(weights) != expected:
            raise ParameterDomainError(
                f"recognition_week_distribution needs {expected} weights "
                f"(weeks {RECOGNITION_FIRST_WEEK}-{RECOGNITION_LAST_WEEK}), got {len(weights)}")
        if any(w < 0 or math.isnan(w) for w in weights) or sum(weights) <= 0:
            raise ParameterDomainError("recognition_week_distribution must be non-negative with positive mass")
        object.__setattr__(self, "recognition_week_distribution", weights)

        if not RECOGNITION_FIRST_WEEK <= self.early_care_last_week < self.late_care_last_week:
            raise ParameterDomainError("early_care_last_week must lie in [4, late_care_last_week)")
        if self.late_care_last_week < RECOGNITION_LAST_WEEK:
            raise ParameterDomainError(f"late_care_last_week must be >= {RECOGNITION_LAST_WEEK}")
        if self.max_visit_delay_weeks < 0 or self.visit_interval_weeks < 1 or self.claims_lookback_weeks < 0:
            raise ParameterDomainError("visit delay, visit interval and claims lookback must be non-negative")
        if not -1.0 <= self.u_proxy_correlation <= 1.0:
            raise ParameterDomainError(f"u_proxy_correlation must lie in [-1, 1], got {self.u_proxy_correlation}")

    def recognition_cdf(self):
        w = np.asarray(self.recognition_week_distribution, dtype=float)
        return np.cumsum(w) / w.sum()


@dataclass(frozen=True)
class WorldParams:
    scenario: Scenario = Scenario.FIG3A
    n_persons: int = 10_000
    seed: int = 20240101
    coef_u_on_y: float = 0.0
    coef_u_on_s: float = 0.0
    coef_u_on_a0: float = 0.0
    coef_u_on_a1: float = 0.0
    coef_a0_on_a1: float = 0.0
    coef_a0_on_y: float = 0.0
    coef_a1_on_y: float = 0.0
    coef_a0_on_s: float = 0.0
    baseline_loss_hazard: float = 0.01
    baseline_outcome_risk: float = 0.10
    intercept_a0: float = 0.0
    intercept_a1: float = 0.0
    coef_prepreg_on_a0: float = 0.0
    coef_susceptible_on_y: float = 0.0
    anchor_week: int = 12
    loss_window_end: int = 19
    term_week_min: int = 37
    term_week_max: int = 41
    prepreg: PrePregnancyParams = field(default_factory=PrePregnancyParams)
    encounters: EncounterParams = field(default_factory=EncounterParams)

    def __post_init__(self):
        try:
            object.__setattr__(self, "scenario", Scenario(self.scenario))
        except ValueError:
            raise ConfigError(f"Unknown scenario '{self.scenario}'") from None
        if isinstance(self.prepreg, dict):
            object.__setattr__(self, "prepreg", PrePregnancyParams(**self.prepreg))
        if isinstance(self.encounters, dict):
            object.__setattr__(self, "encounters", EncounterParams(**self.encounters))

        if int(self.n_persons) != self.n_persons or self.n_persons < 0:
            raise ParameterDomainError(f"n_persons must be a non-negative integer, got {self.n_persons}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ParameterDomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        _check_probability("baseline_loss_hazard", self.baseline_loss_hazard)
        _check_probability("baseline_outcome_risk", self.baseline_outcome_risk)
        if self.anchor_week < 1 or self.loss_window_end < 1:
            raise ParameterDomainError("anchor_week and loss_window_end must be >= 1")
        if not self.loss_window_end < self.term_week_min <= self.term_week_max:
            raise ParameterDomainError("term window must satisfy loss_window_end < term_week_min <= term_week_max")

        for name in _FORCED_ZERO.get(self.scenario, ()):
            value = getattr(self, name)
            if value != 0.0:
                logging.warning(f"Scenario {self.scenario.value} forces {name} = 0 (configured {value})")
                object.__setattr__(self, name, 0.0)


def world_params_from_mapping(mapping):
    data = dict(mapping)
    prepreg = dict(data.pop("prepreg", None) or {})
    encounters = dict(data.pop("encounters", None) or {})
    for label, given, cls in (("world", data, WorldParams),
                              ("prepreg", prepreg, PrePregnancyParams),
                              ("encounters", encounters, EncounterParams)):
        unknown = set(given) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown {label} parameter(s): {', '.join(sorted(unknown))}")
    try:
        return WorldParams(prepreg=PrePregnancyParams(**prepreg),
                           encounters=EncounterParams(**encounters), **data)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def params_to_mapping(params):
    """Plain JSON-ready view of the parameters (enums as values, tuples as lists)."""
    def _plain(value):
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, dict):
            return {k: _plain(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [_plain(v) for v in value]
        return value
    return _plain(asdict(params))


# ==============================================================================
# TRAJECTORY TYPES
# ==============================================================================

@dataclass(frozen=True)
class Encounter:
    kind: EncounterKind
    week: int


@dataclass(frozen=True)
class Trajectory:
    person_id: int
    u: float
    susceptible_flag: bool
    prepreg_user: bool
    a0: int
    a1: int
    encounters: tuple
    s_event: Optional[int]
    end_week: int
    y: Optional[int]
    care: CarePattern = CarePattern.EARLY
    decision_week: int = 12
    early_start_week: int = 0
    recognition_week: int = RECOGNITION_FIRST_WEEK
    chronic_condition: bool = False
    ever_initiated: bool = False
    proxy_noise: float = 0.0

    def treatment_on(self, week):
        """Weekly treatment state: pre-pregnancy regime, then A0, then A1 from the decision week."""
        if week < self.early_start_week:
            return bool(self.prepreg_user)
        if week < self.decision_week:
            return bool(self.a0)
        return bool(self.a1)


class PrePregnancyDraw(NamedTuple):
    prepreg_user: bool
    susceptible_flag: bool
    u: float
    ever_initiated: bool
    chronic_condition: bool


# ==============================================================================
# RANDOM STREAMS
# ==============================================================================

class _Slots:
    """Column layout of the per-person uniform block."""

    def __init__(self, params):
        m = params.prepreg.months_lookback
        weeks = params.loss_window_end
        self.U = 0
        self.SUSCEPTIBLE = 1
        self.CHRONIC = 2
        self.INITIATE = slice(3, 3 + m)
        self.ADVERSE = 3 + m
        self.DISCONTINUE = 4 + m
        self.prepregnancy_width = 5 + m
        self.A0 = 5 + m
        self.A1 = 6 + m
        self.LOSS = slice(7 + m, 7 + m + weeks)
        k = 7 + m + weeks
        self.Y = k
        self.TERM = k + 1
        self.PROXY = k + 2
        self.PRECONCEPTION = k + 3
        self.PRECONCEPTION_WEEK = k + 4
        self.CARE = k + 5
        self.RECOGNITION = k + 6
        self.DELAY = k + 7
        self.LATE_VISIT = k + 8
        self.width = k + 9


def _stream_key(seed):
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def person_stream(seed, person_id):
    """Philox stream of one person; the person id occupies the top counter word."""
    return np.random.Generator(np.random.Philox(counter=int(person_id) << 192, key=_stream_key(seed)))


def _uniform_block(seed, person_ids, width):
    key = _stream_key(seed)
    block = np.empty((len(person_ids), width), dtype=float)
    for row, pid in enumerate(tqdm.tqdm(person_ids, desc="Drawing person streams", unit="person",
                                        leave=False, disable=len(person_ids) < 50_000)):
        bitgen = np.random.Philox(counter=int(pid) << 192, key=key)
        block[row] = np.random.Generator(bitgen).random(width)
    return block


def draw_block(params, person_ids):
    """Uniforms for ``person_ids``; hand them back to ``simulate_world`` to rerun on the same draws."""
    return _uniform_block(params.seed, np.asarray(person_ids, dtype=np.int64), _Slots(params).width)


def _shifted(base, shift):
    """Probability whose log-odds are logit(base) + shift; exact at base 0 and 1."""
    shift = np.asarray(shift, dtype=float)
    if base <= 0.0:
        return np.zeros_like(shift)
    if base >= 1.0:
        return np.ones_like(shift)
    return expit(logit(base) + shift)


def _nullable(values, present):
    out = pd.array(np.asarray(values, dtype=np.int64), dtype="Int64")
    out[~np.asarray(present, dtype=bool)] = pd.NA
    return out


def _forced(value, n):
    return np.broadcast_to(np.asarray(value, dtype=np.int8), (n,)).copy()


# ==============================================================================
# STRUCTURAL EQUATIONS
# ==============================================================================

def structural_hazard(params, u, a0, week):
    if not 1 <= week <= params.loss_window_end:
        raise ValueError(f"week {week} lies outside the loss window 1..{params.loss_window_end}")
    hazard = _shifted(params.baseline_loss_hazard,
                      params.coef_u_on_s * np.asarray(u, float) + params.coef_a0_on_s * np.asarray(a0, float))
    return float(hazard) if hazard.ndim == 0 else hazard


def _prepregnancy_from_uniforms(params, block, slots):
    u = ndtri(np.maximum(block[:, slots.U], _TINY))
    prepreg = params.prepreg
    susceptible = block[:, slots.SUSCEPTIBLE] < prepreg.p_susceptible
    n = len(block)
    if params.scenario is not Scenario.PREVALENT_USER:
        none = np.zeros(n, dtype=bool)
        return u, susceptible, none, none.copy(), none.copy()

    chronic = block[:, slots.CHRONIC] < prepreg.p_chronic_condition
    ever_initiated = chronic & (block[:, slots.INITIATE] < prepreg.p_initiate_per_month).any(axis=1)
    adverse = ever_initiated & susceptible & (block[:, slots.ADVERSE] < prepreg.p_adverse_event_on_initiation)
    discontinued = adverse & (block[:, slots.DISCONTINUE] < prepreg.p_discontinue_given_adverse)
    return u, susceptible, chronic, ever_initiated, ever_initiated & ~discontinued


def simulate_prepregnancy(params, rng_stream):
    """Pre-pregnancy treatment history of one person.

    Draws the leading uniforms of the person's block, so passing
    ``person_stream(params.seed, pid)`` reproduces the cohort values of person ``pid``.
    Outside the PREVALENT_USER scenario nobody is on treatment at LMP.
    """
    slots = _Slots(params)
    draws = rng_stream.random(slots.prepregnancy_width)[None, :]
    u, susceptible, chronic, ever_initiated, prepreg_user = _prepregnancy_from_uniforms(params, draws, slots)
    return PrePregnancyDraw(bool(prepreg_user[0]), bool(susceptible[0]), float(u[0]),
                            bool(ever_initiated[0]), bool(chronic[0]))


@dataclass
class WorldArrays:
    """Column view of a simulated cohort, one entry per person sorted by person_id."""
    person_id: np.ndarray
    u: np.ndarray
    susceptible: np.ndarray
    chronic: np.ndarray
    ever_initiated: np.ndarray
    prepreg_user: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    s_event: np.ndarray          # -1 when the pregnancy survives the loss window
    end_week: np.ndarray
    y: np.ndarray                # -1 when undefined (loss)
    y_prob: np.ndarray
    care: np.ndarray             # index into CARE_CODES
    recognition_week: np.ndarray
    first_visit_week: np.ndarray  # -1 without prenatal care
    preconception: np.ndarray
    preconception_week: np.ndarray
    decision_week: np.ndarray
    early_start_week: np.ndarray
    proxy_noise: np.ndarray
    u_proxy: np.ndarray
    visit_interval_weeks: int = 4

    def __len__(self):
        return len(self.person_id)

    @property
    def lost(self):
        return self.s_event >= 0

    def persons_frame(self):
        return pd.DataFrame({
            "person_id": self.person_id.astype(np.int64),
            "u": self.u,
            "susceptible": self.susceptible.astype(np.int8),
            "chronic_condition": self.chronic.astype(np.int8),
            "ever_initiated": self.ever_initiated.astype(np.int8),
            "prepreg_user": self.prepreg_user.astype(np.int8),
            "a0": self.a0.astype(np.int8),
            "a1": self.a1.astype(np.int8),
            "s_event": _nullable(self.s_event, self.lost),
            "end_week": self.end_week.astype(np.int64),
            "y": _nullable(self.y, self.y >= 0),
            "care": np.array([c.value for c in CARE_CODES], dtype=object)[self.care],
            "recognition_week": self.recognition_week.astype(np.int64),
            "decision_week": self.decision_week.astype(np.int64),
            "early_start_week": self.early_start_week.astype(np.int64),
            "proxy_noise": self.proxy_noise,
            "u_proxy": self.u_proxy,
        })

    def encounters_frame(self):
        n = len(self)
        pid = self.person_id
        pieces = []

        pre = self.preconception
        pieces.append((pid[pre], EncounterKind.PRECONCEPTION_COUNSELING.value, self.preconception_week[pre]))

        cared = self.care != CARE_CODES.index(CarePattern.NONE)
        test = cared & (self.recognition_week < self.first_visit_week) & (self.recognition_week < self.end_week)
        pieces.append((pid[test], EncounterKind.PREGNANCY_TEST.value, self.recognition_week[test]))

        interval = self.visit_interval_weeks
        gap = self.end_week - self.first_visit_week
        n_visits = np.where(cared & (gap > 0), (gap + interval - 1) // interval, 0)
        owner = np.repeat(np.arange(n), n_visits)
        offset = np.arange(len(owner)) - np.repeat(np.cumsum(n_visits) - n_visits, n_visits)
        pieces.append((pid[owner], EncounterKind.PRENATAL_VISIT.value,
                       self.first_visit_week[owner] + interval * offset))

        pieces.append((pid, EncounterKind.DELIVERY_OR_END.value, self.end_week))

        person = np.concatenate([p[0] for p in pieces]).astype(np.int64)
        week = np.concatenate([p[2] for p in pieces]).astype(np.int64)
        kind = np.concatenate([np.full(len(p[0]), p[1], dtype=object) for p in pieces])
        order = np.lexsort((week, person))
        return pd.DataFrame({"person_id": person[order], "kind": kind[order], "week": week[order]})

    def to_trajectories(self):
        encounters = self.encounters_frame()
        bounds = np.searchsorted(encounters["person_id"].to_numpy(), self.person_id, side="left")
        bounds = np.append(bounds, len(encounters))
        kinds = [EncounterKind(k) for k in encounters["kind"]]
        weeks = encounters["week"].to_numpy()
        out = []
        for i in range(len(self)):
            lo, hi = bounds[i], bounds[i + 1]
            lost = bool(self.s_event[i] >= 0)
            out.append(Trajectory(
                person_id=int(self.person_id[i]),
                u=float(self.u[i]),
                susceptible_flag=bool(self.susceptible[i]),
                prepreg_user=bool(self.prepreg_user[i]),
                a0=int(self.a0[i]),
                a1=int(self.a1[i]),
                encounters=tuple(Encounter(kinds[j], int(weeks[j])) for j in range(lo, hi)),
                s_event=int(self.s_event[i]) if lost else None,
                end_week=int(self.end_week[i]),
                y=None if lost else int(self.y[i]),
                care=CARE_CODES[self.care[i]],
                decision_week=int(self.decision_week[i]),
                early_start_week=int(self.early_start_week[i]),
                recognition_week=int(self.recognition_week[i]),
                chronic_condition=bool(self.chronic[i]),
                ever_initiated=bool(self.ever_initiated[i]),
                proxy_noise=float(self.proxy_noise[i]),
            ))
        return out


def simulate_world(params, person_ids=None, force_a0=None, force_a1=None, block=None):
    """Vectorised structural model.

    ``force_a0`` / ``force_a1`` replace the treatment equations by a fixed value
    (scalar or per-person array); every other equation, the loss process
    included, keeps running on the same uniforms.
    """
    if person_ids is None:
        person_ids = np.arange(params.n_persons, dtype=np.int64)
    person_ids = np.asarray(person_ids, dtype=np.int64)
    slots = _Slots(params)
    if block is None:
        block = _uniform_block(params.seed, person_ids, slots.width)
    n = len(person_ids)

    u, susceptible, chronic, ever_initiated, prepreg_user = _prepregnancy_from_uniforms(params, block, slots)

    if force_a0 is None:
        p_a0 = expit(params.intercept_a0 + params.coef_u_on_a0 * u
                     + params.coef_prepreg_on_a0 * prepreg_user)
        a0 = (block[:, slots.A0] < p_a0).astype(np.int8)
    else:
        a0 = _forced(force_a0, n)

    if force_a1 is None:
        p_a1 = expit(params.intercept_a1 + params.coef_a0_on_a1 * a0 + params.coef_u_on_a1 * u)
        a1 = (block[:, slots.A1] < p_a1).astype(np.int8)
    else:
        a1 = _forced(force_a1, n)

    hazard = _shifted(params.baseline_loss_hazard, params.coef_u_on_s * u + params.coef_a0_on_s * a0)
    lost_in_week = block[:, slots.LOSS] < hazard[:, None]
    lost = lost_in_week.any(axis=1)
    s_event = np.where(lost, lost_in_week.argmax(axis=1) + 1, -1)

    span = params.term_week_max - params.term_week_min + 1
    term = params.term_week_min + np.minimum((block[:, slots.TERM] * span).astype(np.int64), span - 1)
    end_week = np.where(lost, s_event, term)

    y_prob = _shifted(params.baseline_outcome_risk,
                      params.coef_a0_on_y * a0 + params.coef_a1_on_y * a1 + params.coef_u_on_y * u
                      + params.coef_susceptible_on_y * susceptible * a1)
    y = np.where(lost, -1, (block[:, slots.Y] < y_prob).astype(np.int8)).astype(np.int8)

    enc = params.encounters
    preconception = block[:, slots.PRECONCEPTION] < enc.p_preconception_visit
    preconception_week = PRECONCEPTION_EARLIEST_WEEK + np.minimum(
        (block[:, slots.PRECONCEPTION_WEEK] * -PRECONCEPTION_EARLIEST_WEEK).astype(np.int64),
        -PRECONCEPTION_EARLIEST_WEEK - 1)

    c = block[:, slots.CARE]
    care = np.where(c < enc.p_no_prenatal_care, 2,
                    np.where(c < enc.p_no_prenatal_care + enc.p_late_prenatal_after_week12, 1, 0)).astype(np.int8)

    cdf = enc.recognition_cdf()
    u_recognition = block[:, slots.RECOGNITION]
    drawn = RECOGNITION_FIRST_WEEK + np.searchsorted(cdf, u_recognition, side="right")
    drawn = np.minimum(drawn, RECOGNITION_LAST_WEEK)
    # early care: recognition distribution conditioned on week <= early_care_last_week
    early_mass = cdf[min(enc.early_care_last_week, RECOGNITION_LAST_WEEK) - RECOGNITION_FIRST_WEEK]
    early_recognition = np.minimum(
        RECOGNITION_FIRST_WEEK + np.searchsorted(cdf, u_recognition * early_mass, side="right"),
        enc.early_care_last_week)
    delay = np.minimum((block[:, slots.DELAY] * (enc.max_visit_delay_weeks + 1)).astype(np.int64),
                       enc.max_visit_delay_weeks)
    early_visit = np.minimum(early_recognition + delay, enc.early_care_last_week)
    late_low = np.maximum(enc.early_care_last_week + 1, drawn)
    late_span = enc.late_care_last_week - late_low + 1
    late_visit = late_low + np.minimum((block[:, slots.LATE_VISIT] * late_span).astype(np.int64), late_span - 1)

    recognition_week = np.where(care == 0, early_recognition, drawn)
    first_visit_week = np.where(care == 0, early_visit, np.where(care == 1, late_visit, -1))
    decision_week = np.where(care == 2, params.anchor_week, first_visit_week)
    early_start_week = np.where(preconception, preconception_week, 0)

    proxy_noise = ndtri(np.maximum(block[:, slots.PROXY], _TINY))
    rho = enc.u_proxy_correlation
    u_proxy = rho * u + math.sqrt(1.0 - rho * rho) * proxy_noise

    return WorldArrays(
        person_id=person_ids, u=u, susceptible=susceptible, chronic=chronic,
        ever_initiated=ever_initiated, prepreg_user=prepreg_user, a0=a0, a1=a1,
        s_event=s_event.astype(np.int64), end_week=end_week.astype(np.int64), y=y, y_prob=y_prob,
        care=care, recognition_week=recognition_week.astype(np.int64),
        first_visit_week=first_visit_week.astype(np.int64), preconception=preconception,
        preconception_week=preconception_week.astype(np.int64), decision_week=decision_week.astype(np.int64),
        early_start_week=early_start_week.astype(np.int64), proxy_noise=proxy_noise, u_proxy=u_proxy,
        visit_interval_weeks=enc.visit_interval_weeks,
    )


def simulate_cohort(params):
    if params.n_persons == 0:
        return []
    world = simulate_world(params)
    logging.info(f"Simulated {len(world)} pregnancies ({int(world.lost.sum())} losses, scenario {params.scenario.value})")
    return world.to_trajectories()
