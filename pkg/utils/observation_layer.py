"""Claims-database view of simulated pregnancies.

A pregnancy enters the data only when it is registered: care inside the data
source and at least one pregnancy test or prenatal visit before it ends.
Treatment claims are kept as three run-length segments per person
(pre-pregnancy regime, early regime, regime after the decision week).
"""
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from utils.scm_engine import CarePattern, EncounterKind


class EndType(str, Enum):
    LIVE_BIRTH = "LIVE_BIRTH"
    LOSS = "LOSS"


REGISTERING_KINDS = (EncounterKind.PREGNANCY_TEST, EncounterKind.PRENATAL_VISIT)

OBSERVED_PERSON_COLUMNS = [
    "person_id", "first_contact_week", "first_prenatal_week",
    "preconception_visit", "preconception_week", "end_week", "end_type", "outcome",
    "prepreg_user", "u_proxy", "claims_start_week",
    "rx_before", "rx_start_week", "rx_early", "rx_change_week", "rx_after",
]


@dataclass(frozen=True)
class ObservedRecord:
    person_id: int
    visible_encounters: tuple
    first_pregnancy_contact_week: int
    baseline_covariates: dict = field(hash=False)
    treatment_claims: tuple = ()
    observed_end: Optional[tuple] = None
    observed_outcome: Optional[int] = None

    def _first_week(self, kinds):
        weeks = [e.week for e in self.visible_encounters if e.kind in kinds]
        return min(weeks) if weeks else None

    @property
    def first_prenatal_week(self):
        return self._first_week((EncounterKind.PRENATAL_VISIT,))

    @property
    def preconception_week(self):
        return self._first_week((EncounterKind.PRECONCEPTION_COUNSELING,))


@dataclass
class ObservedData:
    """Frame form of a set of observed records (one row per person plus encounters)."""
    persons: pd.DataFrame
    encounters: pd.DataFrame

    def __len__(self):
        return len(self.persons)


def segment_state(before, start, early, change, after, weeks):
    """Treatment indicator at ``weeks`` from run-length segments (all arrays broadcast)."""
    weeks = np.asarray(weeks)
    return np.where(weeks < start, before, np.where(weeks < change, early, after)).astype(np.int8)


def claims_state(persons, weeks):
    return segment_state(persons["rx_before"].to_numpy(), persons["rx_start_week"].to_numpy(),
                         persons["rx_early"].to_numpy(), persons["rx_change_week"].to_numpy(),
                         persons["rx_after"].to_numpy(), weeks)


def _u_proxy(u, noise, rho):
    return rho * u + math.sqrt(1.0 - rho * rho) * noise


# ==============================================================================
# RECORD-LEVEL PROJECTION
# ==============================================================================

def observe(trajectory, params):
    if trajectory.care is CarePattern.NONE:
        return None
    if not any(e.kind in REGISTERING_KINDS for e in trajectory.encounters):
        return None

    visible = tuple(trajectory.encounters)
    first_contact = min(e.week for e in visible if e.kind in REGISTERING_KINDS)
    claims_start = min(visible[0].week, first_contact - params.claims_lookback_weeks)
    claims = tuple((w, trajectory.treatment_on(w)) for w in range(claims_start, trajectory.end_week + 1))
    lost = trajectory.s_event is not None
    preconception = any(e.kind is EncounterKind.PRECONCEPTION_COUNSELING for e in visible)
    return ObservedRecord(
        person_id=trajectory.person_id,
        visible_encounters=visible,
        first_pregnancy_contact_week=first_contact,
        baseline_covariates={
            "prepreg_user": int(trajectory.prepreg_user),
            "u_proxy": float(_u_proxy(trajectory.u, trajectory.proxy_noise, params.u_proxy_correlation)),
            "preconception_visit": int(preconception),
        },
        treatment_claims=claims,
        observed_end=(trajectory.end_week, EndType.LOSS if lost else EndType.LIVE_BIRTH),
        observed_outcome=None if lost else trajectory.y,
    )


def observed_cohort(trajectories, params):
    records = []
    for trajectory in sorted(trajectories, key=lambda t: t.person_id):
        record = observe(trajectory, params)
        if record is not None:
            records.append(record)
    logging.info(f"Observed {len(records)} of {len(trajectories)} pregnancies")
    return records


# ==============================================================================
# FRAME-LEVEL PROJECTION
# ==============================================================================

def _first_week_by_person(encounters, kinds):
    values = [k.value for k in kinds]
    return encounters.loc[encounters["kind"].isin(values)].groupby("person_id")["week"].min()


def _nullable_lookup(person_ids, series):
    return pd.array(person_ids.map(series).to_numpy(dtype=float), dtype="Int64")


def observe_frames(persons, encounters, params):
    """Vectorised ``observe`` over truth frames written by the simulator."""
    registration = _first_week_by_person(encounters, REGISTERING_KINDS)
    registered = persons["person_id"].isin(registration.index).to_numpy()
    kept = persons.loc[(persons["care"] != CarePattern.NONE.value).to_numpy() & registered].reset_index(drop=True)
    kept_encounters = encounters.loc[encounters["person_id"].isin(kept["person_id"])].reset_index(drop=True)

    pid = kept["person_id"]
    preconception = _first_week_by_person(kept_encounters, (EncounterKind.PRECONCEPTION_COUNSELING,))
    first_prenatal = _first_week_by_person(kept_encounters, (EncounterKind.PRENATAL_VISIT,))
    reg_week = pid.map(registration).astype(np.int64)
    pre_week = _nullable_lookup(pid, preconception)
    has_pre = ~np.asarray(pre_week.isna(), dtype=bool)

    lost = kept["s_event"].notna().to_numpy()
    u = kept["u"].to_numpy(dtype=float)
    noise = kept["proxy_noise"].to_numpy(dtype=float)

    observed = pd.DataFrame({
        "person_id": pid.astype(np.int64),
        "first_contact_week": reg_week.to_numpy(),
        "first_prenatal_week": _nullable_lookup(pid, first_prenatal),
        "preconception_visit": has_pre.astype(np.int8),
        "preconception_week": pre_week,
        "end_week": kept["end_week"].astype(np.int64),
        "end_type": np.where(lost, EndType.LOSS.value, EndType.LIVE_BIRTH.value),
        "outcome": kept["y"].astype("Int64"),
        "prepreg_user": kept["prepreg_user"].astype(np.int8),
        "u_proxy": _u_proxy(u, noise, params.u_proxy_correlation),
        "claims_start_week": np.minimum(reg_week.to_numpy() - params.claims_lookback_weeks,
                                        np.where(has_pre, pre_week.fillna(0).to_numpy(dtype=np.int64), reg_week)).astype(np.int64),
        "rx_before": kept["prepreg_user"].astype(np.int8),
        "rx_start_week": kept["early_start_week"].astype(np.int64),
        "rx_early": kept["a0"].astype(np.int8),
        "rx_change_week": kept["decision_week"].astype(np.int64),
        "rx_after": kept["a1"].astype(np.int8),
    }, columns=OBSERVED_PERSON_COLUMNS)
    logging.info(f"Observed {len(observed)} of {len(persons)} pregnancies "
                 f"({int(lost.sum())} recorded losses)")
    return ObservedData(observed, kept_encounters[["person_id", "kind", "week"]])


def _claim_segments(record):
    """Collapse weekly claims into (before, start, early, change, after)."""
    runs = []
    for week, on in record.treatment_claims:
        if not runs or runs[-1][1] != bool(on):
            runs.append((week, bool(on)))
    if not runs:
        return 0, 0, 0, 0, 0
    beyond = record.observed_end[0] + 1 if record.observed_end else runs[-1][0] + 1
    before = runs[0][1]
    start, early = (runs[1] if len(runs) > 1 else (beyond, before))
    change, after = (runs[2] if len(runs) > 2 else (beyond, early))
    if len(runs) > 3:
        raise ValueError(f"person {record.person_id}: claims change regime more than twice")
    return int(before), int(start), int(early), int(change), int(after)


def records_to_frames(records):
    rows = []
    encounter_rows = []
    for r in records:
        before, start, early, change, after = _claim_segments(r)
        end_week, end_type = r.observed_end
        claims_start = r.treatment_claims[0][0] if r.treatment_claims else r.first_pregnancy_contact_week
        rows.append({
            "person_id": r.person_id,
            "first_contact_week": r.first_pregnancy_contact_week,
            "first_prenatal_week": r.first_prenatal_week,
            "preconception_visit": int(r.baseline_covariates.get("preconception_visit", 0)),
            "preconception_week": r.preconception_week,
            "end_week": end_week,
            "end_type": EndType(end_type).value,
            "outcome": r.observed_outcome,
            "prepreg_user": int(r.baseline_covariates.get("prepreg_user", 0)),
            "u_proxy": float(r.baseline_covariates.get("u_proxy", 0.0)),
            "claims_start_week": claims_start,
            "rx_before": before, "rx_start_week": start, "rx_early": early,
            "rx_change_week": change, "rx_after": after,
        })
        encounter_rows.extend({"person_id": r.person_id, "kind": e.kind.value, "week": e.week}
                              for e in r.visible_encounters)
    persons = pd.DataFrame(rows, columns=OBSERVED_PERSON_COLUMNS)
    for col in ("first_prenatal_week", "preconception_week", "outcome"):
        persons[col] = persons[col].astype("Int64")
    encounters = pd.DataFrame(encounter_rows, columns=["person_id", "kind", "week"])
    return ObservedData(persons, encounters)
