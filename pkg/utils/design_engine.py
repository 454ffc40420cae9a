"""Time-zero designs: eligibility, assignment and follow-up for one anchor.

Anchors
    4A  LMP, ground truth, every conception (simulation benchmark only)
    4B  LMP, observed pregnancies with an observed outcome (retrospective)
    4C  LMP, observed pregnancies whose first contact falls in the window
    4D  first prenatal visit inside the window
    4E  preconception counselling visit

4B assigns treatment from exposure anywhere in pregnancy, 4C from exposure
between LMP and the first contact. Both start follow-up at LMP, so the time
before the first contact is immortal.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from utils.errors import ConfigError, DesignError
from utils.observation_layer import (
    EndType, ObservedData, REGISTERING_KINDS, claims_state, records_to_frames,
)
from utils.scm_engine import EncounterKind

EARLIEST_ANCHOR_WEEK = -52

ROW_COLUMNS = [
    "person_id", "week_since_t0", "week", "assigned_strategy", "treated", "on_treatment",
    "at_risk", "event", "competing_event", "censored", "prior_treatment", "prepreg_user", "u_proxy",
]
BASELINE_COLUMNS = [
    "person_id", "t0_week", "exit_week", "exit_reason", "assigned_strategy", "treated",
    "prior_treatment", "prepreg_user", "u_proxy", "preconception_visit", "first_contact_week",
    "end_week", "immortal_weeks",
]


class Anchor(str, Enum):
    LMP_IDEAL = "4A"
    RETRO_END_OF_PREGNANCY = "4B"
    PROSPECTIVE_FIRST_CONTACT = "4C"
    FIRST_PRENATAL_VISIT = "4D"
    PRECONCEPTION_VISIT = "4E"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper()
        if text in cls.__members__:
            return cls[text]
        try:
            return cls(text)
        except ValueError:
            raise ConfigError(f"Unknown design '{value}' (expected one of 4A-4E)") from None


LMP_ANCHORS = (Anchor.LMP_IDEAL, Anchor.RETRO_END_OF_PREGNANCY, Anchor.PROSPECTIVE_FIRST_CONTACT)
EVER_EXPOSED_ANCHORS = (Anchor.RETRO_END_OF_PREGNANCY, Anchor.PROSPECTIVE_FIRST_CONTACT)


@dataclass(frozen=True)
class DesignSpec:
    anchor: Anchor
    eligibility_window: Optional[tuple] = None
    require_outcome_observed: Optional[bool] = None

    def __post_init__(self):
        anchor = Anchor.parse(self.anchor)
        object.__setattr__(self, "anchor", anchor)
        retro = anchor is Anchor.RETRO_END_OF_PREGNANCY
        if self.require_outcome_observed is None:
            object.__setattr__(self, "require_outcome_observed", retro)
        elif bool(self.require_outcome_observed) != retro:
            raise DesignError("require_outcome_observed is set exactly for design 4B")
        if self.eligibility_window is not None:
            lo, hi = self.eligibility_window
            if lo > hi:
                raise DesignError(f"eligibility window ({lo}, {hi}) is empty")
            object.__setattr__(self, "eligibility_window", (int(lo), int(hi)))


def resolve_window(design, protocol):
    """Eligibility window for the anchor week, or None where the anchor has none."""
    anchor = design.anchor
    p_lo, p_hi = protocol.window_weeks
    if design.eligibility_window is not None:
        window = design.eligibility_window
    elif anchor is Anchor.PROSPECTIVE_FIRST_CONTACT:
        window = (EARLIEST_ANCHOR_WEEK, p_hi)
    elif anchor is Anchor.FIRST_PRENATAL_VISIT:
        window = (p_lo, p_hi)
    elif anchor is Anchor.PRECONCEPTION_VISIT:
        window = (EARLIEST_ANCHOR_WEEK, -1)
    else:
        return None
    if anchor is Anchor.FIRST_PRENATAL_VISIT and not (p_lo <= window[0] and window[1] <= p_hi):
        raise DesignError(f"design 4D window {window} lies outside protocol '{protocol.name}' window {protocol.window_weeks}")
    return window


@dataclass
class AnalyticCohort:
    design: DesignSpec
    protocol: object
    window: Optional[tuple]
    rows: pd.DataFrame
    baseline: pd.DataFrame
    exclusions: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.baseline)

    @property
    def immortal_weeks(self):
        return self.baseline.set_index("person_id")["immortal_weeks"]


# ==============================================================================
# INPUT NORMALISATION
# ==============================================================================

def truth_persons(truth):
    """Truth frame (or WorldArrays) in the observed-person column layout."""
    frame = truth.persons_frame() if hasattr(truth, "persons_frame") else truth
    lost = frame["s_event"].notna().to_numpy()
    early_start = frame["early_start_week"].to_numpy(dtype=np.int64)
    n = len(frame)
    return pd.DataFrame({
        "person_id": frame["person_id"].to_numpy(dtype=np.int64),
        "first_contact_week": pd.array([pd.NA] * n, dtype="Int64"),
        "first_prenatal_week": pd.array([pd.NA] * n, dtype="Int64"),
        "preconception_visit": (early_start < 0).astype(np.int8),
        "preconception_week": pd.Series(early_start, dtype="Int64").where(early_start < 0).array,
        "end_week": frame["end_week"].to_numpy(dtype=np.int64),
        "end_type": np.where(lost, EndType.LOSS.value, EndType.LIVE_BIRTH.value),
        "outcome": frame["y"].astype("Int64").array,
        "prepreg_user": frame["prepreg_user"].to_numpy(dtype=np.int8),
        "u_proxy": frame["u_proxy"].to_numpy(dtype=float),
        "rx_before": frame["prepreg_user"].to_numpy(dtype=np.int8),
        "rx_start_week": early_start,
        "rx_early": frame["a0"].to_numpy(dtype=np.int8),
        "rx_change_week": frame["decision_week"].to_numpy(dtype=np.int64),
        "rx_after": frame["a1"].to_numpy(dtype=np.int8),
    })


def _observed_frames(observed):
    if isinstance(observed, ObservedData):
        return observed
    return records_to_frames(list(observed))


def ever_on(persons, lo, hi):
    """Any treated week in [lo, hi] (per-person bounds) from the claim segments."""
    lo, hi = np.asarray(lo), np.asarray(hi)
    start = persons["rx_start_week"].to_numpy()
    change = persons["rx_change_week"].to_numpy()
    before = (persons["rx_before"].to_numpy() == 1) & (start > lo)
    early = (persons["rx_early"].to_numpy() == 1) & (np.maximum(start, lo) <= np.minimum(change - 1, hi))
    after = (persons["rx_after"].to_numpy() == 1) & (np.maximum(change, lo) <= hi)
    return ((before | early | after) & (lo <= hi)).astype(np.int8)


# ==============================================================================
# ELIGIBILITY AT THE ANCHOR
# ==============================================================================

def select_at_anchor(persons, design, protocol, window=None):
    """Persons eligible at their anchor week, with a ``t0_week`` column, plus exclusion counts."""
    anchor = design.anchor
    if window is None:
        window = resolve_window(design, protocol)
    n = len(persons)
    keep = np.ones(n, dtype=bool)
    exclusions = {}

    def exclude(reason, mask):
        mask = np.asarray(mask, dtype=bool)
        exclusions[reason] = exclusions.get(reason, 0) + int((keep & mask).sum())
        keep[mask] = False

    if anchor in LMP_ANCHORS:
        t0 = np.zeros(n, dtype=np.int64)
    else:
        column = "first_prenatal_week" if anchor is Anchor.FIRST_PRENATAL_VISIT else "preconception_week"
        anchor_week = persons[column]
        exclude("no_prenatal_visit" if anchor is Anchor.FIRST_PRENATAL_VISIT else "no_preconception_visit",
                anchor_week.isna().to_numpy())
        t0 = anchor_week.fillna(0).to_numpy(dtype=np.int64)
        exclude("anchor_outside_window", (t0 < window[0]) | (t0 > window[1]))

    if design.require_outcome_observed:
        exclude("outcome_not_observed", persons["end_type"].to_numpy() != EndType.LIVE_BIRTH.value)

    if anchor is Anchor.PROSPECTIVE_FIRST_CONTACT:
        contact = persons["first_contact_week"].fillna(window[1] + 1).to_numpy(dtype=np.int64)
        exclude("first_contact_outside_window", (contact < window[0]) | (contact > window[1]))

    cutoff = protocol.registered_before_week
    if cutoff is not None:
        if anchor is Anchor.LMP_IDEAL:
            logging.debug("Design 4A has no registration date; registered_before_week not applied")
        elif anchor is Anchor.PRECONCEPTION_VISIT:
            # registration happens after a preconception t0
            logging.info(f"Design 4E: registered_before_week:{cutoff} not applied, first contact follows t0")
        else:
            contact = persons["first_contact_week"].fillna(cutoff).to_numpy(dtype=np.int64)
            exclude("registered_too_late", contact >= cutoff)

    if protocol.requires_current_use:
        exclude("not_current_user", claims_state(persons, t0 - 1) == 0)

    eligible = persons.loc[keep].copy()
    eligible["t0_week"] = t0[keep]
    return eligible.reset_index(drop=True), exclusions


# ==============================================================================
# FOLLOW-UP
# ==============================================================================

def _ltfu_weeks(encounters, t0_by_person, gap_weeks):
    """First week a person counts as lost: ``gap_weeks`` after a contact whose next contact comes later.

    Gaps are measured between pregnancy encounters up to delivery; the end of
    pregnancy itself never opens a gap.
    """
    kinds = [k.value for k in REGISTERING_KINDS] + [EncounterKind.DELIVERY_OR_END.value]
    enc = encounters.loc[encounters["kind"].isin(kinds) & encounters["person_id"].isin(t0_by_person.index)]
    enc = enc.sort_values(["person_id", "week"], kind="mergesort")
    week = enc["week"].to_numpy(dtype=float)
    following = enc.groupby("person_id")["week"].shift(-1).to_numpy(dtype=float)
    opens_gap = (enc["kind"] != EncounterKind.DELIVERY_OR_END.value).to_numpy() & ~np.isnan(following)
    point = week + gap_weeks
    candidate = opens_gap & (following - week > gap_weeks) & (point >= enc["person_id"].map(t0_by_person).to_numpy())
    lost_at = pd.Series(point[candidate], index=enc["person_id"].to_numpy()[candidate])
    return lost_at.groupby(level=0).min()


def immortal_time(cohort, design=None):
    """Per-person immortal person-weeks and their total."""
    design = design or cohort.design
    base = cohort.baseline
    if design.anchor in EVER_EXPOSED_ANCHORS:
        contact = base["first_contact_week"].fillna(base["end_week"]).to_numpy(dtype=np.int64)
        weeks = np.clip(contact, 0, base["end_week"].to_numpy(dtype=np.int64))
    else:
        weeks = np.zeros(len(base), dtype=np.int64)
    per_person = pd.Series(weeks, index=base["person_id"].to_numpy(), name="immortal_weeks")
    return per_person, int(weeks.sum())


def build_cohort(observed, design, protocol, truth=None):
    if not isinstance(design, DesignSpec):
        design = DesignSpec(design)
    anchor = design.anchor
    window = resolve_window(design, protocol)

    if anchor is Anchor.LMP_IDEAL:
        if truth is None:
            raise DesignError("design 4A needs the ground-truth trajectories")
        persons, encounters = truth_persons(truth), None
    else:
        if observed is None:
            raise DesignError(f"design {anchor.value} needs observed data")
        data = _observed_frames(observed)
        persons, encounters = data.persons, data.encounters
    persons = persons.sort_values("person_id").reset_index(drop=True)

    sel, exclusions = select_at_anchor(persons, design, protocol, window)
    t0 = sel["t0_week"].to_numpy(dtype=np.int64)
    end = sel["end_week"].to_numpy(dtype=np.int64)

    if anchor is Anchor.PROSPECTIVE_FIRST_CONTACT:
        contact = sel["first_contact_week"].to_numpy(dtype=float, na_value=np.nan)
        until = np.where(np.isnan(contact), end, np.minimum(contact, end)).astype(np.int64)
        treated = ever_on(sel, np.zeros_like(end), until)
    elif anchor is Anchor.RETRO_END_OF_PREGNANCY:
        treated = ever_on(sel, np.zeros_like(end), end)
    else:
        treated = claims_state(sel, t0)
    if anchor in LMP_ANCHORS:
        prior = sel["rx_before"].to_numpy(dtype=np.int8)
    else:
        prior = claims_state(sel, t0 - 1)

    # follow-up
    lost = sel["end_type"].to_numpy() == EndType.LOSS.value
    y = (sel["outcome"].fillna(0).to_numpy(dtype=np.int64) == 1) & ~lost
    horizon = end + protocol.postpartum_weeks
    if anchor in (Anchor.LMP_IDEAL, Anchor.RETRO_END_OF_PREGNANCY) or len(sel) == 0:
        ltfu = np.full(len(sel), np.inf)
    else:
        t0_by_person = pd.Series(t0, index=sel["person_id"].to_numpy())
        ltfu = sel["person_id"].map(_ltfu_weeks(encounters, t0_by_person, protocol.ltfu_gap_weeks)).fillna(np.inf).to_numpy()

    composite = protocol.composite
    competing_loss = protocol.loss_is_competing and not composite
    # loss neither in the outcome nor competing: follow-up stops there
    loss_censors = not composite and not competing_loss
    cut_short = ltfu < end
    exit_week = np.where(cut_short, ltfu, np.where(lost | y, end, horizon)).astype(np.int64)
    event = ~cut_short & (y | (lost & composite))
    competing = ~cut_short & lost & competing_loss
    censored = cut_short | (~cut_short & lost & loss_censors)
    exit_reason = np.select(
        [event, competing, cut_short, censored],
        ["event", "competing_event", "lost_to_followup", "censored_loss"],
        default="administrative",
    )

    strategy_names = np.array([protocol.off_strategy.name, protocol.on_strategy.name], dtype=object)
    baseline = pd.DataFrame({
        "person_id": sel["person_id"].to_numpy(dtype=np.int64),
        "t0_week": t0,
        "exit_week": exit_week,
        "exit_reason": exit_reason,
        "assigned_strategy": strategy_names[treated],
        "treated": treated.astype(np.int8),
        "prior_treatment": prior.astype(np.int8),
        "prepreg_user": sel["prepreg_user"].to_numpy(dtype=np.int8),
        "u_proxy": sel["u_proxy"].to_numpy(dtype=float),
        "preconception_visit": sel["preconception_visit"].to_numpy(dtype=np.int8),
        "first_contact_week": sel["first_contact_week"].astype("Int64").array,
        "end_week": end,
        "immortal_weeks": np.zeros(len(sel), dtype=np.int64),
    }, columns=BASELINE_COLUMNS)

    # person-week expansion
    counts = exit_week - t0 + 1
    owner = np.repeat(np.arange(len(sel)), counts)
    offset = np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)
    week = t0[owner] + offset
    last = offset == counts[owner] - 1
    claims = sel.iloc[owner]
    rows = pd.DataFrame({
        "person_id": baseline["person_id"].to_numpy()[owner],
        "week_since_t0": offset.astype(np.int64),
        "week": week.astype(np.int64),
        "assigned_strategy": baseline["assigned_strategy"].to_numpy()[owner],
        "treated": baseline["treated"].to_numpy()[owner],
        "on_treatment": claims_state(claims, np.minimum(week, end[owner])),
        "at_risk": np.ones(len(owner), dtype=np.int8),
        "event": (last & event[owner]).astype(np.int8),
        "competing_event": (last & competing[owner]).astype(np.int8),
        "censored": (last & censored[owner]).astype(np.int8),
        "prior_treatment": baseline["prior_treatment"].to_numpy()[owner],
        "prepreg_user": baseline["prepreg_user"].to_numpy()[owner],
        "u_proxy": baseline["u_proxy"].to_numpy()[owner],
    }, columns=ROW_COLUMNS)

    cohort = AnalyticCohort(design, protocol, window, rows, baseline, exclusions)
    per_person, total = immortal_time(cohort)
    cohort.baseline["immortal_weeks"] = per_person.to_numpy()

    logging.info(f"Design {anchor.value} / {protocol.name}: {len(baseline)} of {len(persons)} eligible, "
                 f"{len(rows)} person-weeks, {total} immortal person-weeks")
    for reason, count in exclusions.items():
        if count:
            logging.info(f"  excluded {count} ({reason})")
    return cohort
