import logging

import numpy as np
import pandas as pd
import pytest

from utils.design_engine import (
    Anchor, DesignSpec, build_cohort, ever_on, immortal_time, resolve_window, select_at_anchor,
)
from utils.errors import ConfigError, DesignError
from utils.observation_layer import OBSERVED_PERSON_COLUMNS, ObservedData
from utils.scm_engine import WorldParams, simulate_world


def person(person_id, first_contact=6, first_prenatal=8, end_week=39, end_type="LIVE_BIRTH", outcome=0,
           preconception_week=None, rx=(0, 0, 0), prepreg_user=0):
    before, early, after = rx
    return {
        "person_id": person_id, "first_contact_week": first_contact, "first_prenatal_week": first_prenatal,
        "preconception_visit": int(preconception_week is not None), "preconception_week": preconception_week,
        "end_week": end_week, "end_type": end_type, "outcome": outcome if end_type == "LIVE_BIRTH" else None,
        "prepreg_user": prepreg_user, "u_proxy": 0.0, "claims_start_week": first_contact - 26,
        "rx_before": before, "rx_start_week": preconception_week if preconception_week is not None else 0,
        "rx_early": early, "rx_change_week": first_prenatal if first_prenatal is not None else 12,
        "rx_after": after,
    }


def encounters_for(p, visit_weeks=None):
    rows = []
    if p["preconception_week"] is not None:
        rows.append((p["person_id"], "PRECONCEPTION_COUNSELING", p["preconception_week"]))
    if p["first_prenatal_week"] is None or p["first_contact_week"] < p["first_prenatal_week"]:
        rows.append((p["person_id"], "PREGNANCY_TEST", p["first_contact_week"]))
    if visit_weeks is None and p["first_prenatal_week"] is not None:
        visit_weeks = range(p["first_prenatal_week"], p["end_week"], 4)
    rows.extend((p["person_id"], "PRENATAL_VISIT", w) for w in visit_weeks or ())
    rows.append((p["person_id"], "DELIVERY_OR_END", p["end_week"]))
    return rows


def observed(people, visits=None):
    visits = visits or {}
    persons = pd.DataFrame(people, columns=OBSERVED_PERSON_COLUMNS)
    for col in ("first_prenatal_week", "preconception_week", "outcome"):
        persons[col] = pd.to_numeric(persons[col]).astype("Int64")
    rows = [r for p in people for r in encounters_for(p, visits.get(p["person_id"]))]
    return ObservedData(persons, pd.DataFrame(rows, columns=["person_id", "kind", "week"]))


class TestDesignSpec:
    def test_parse_names_and_codes(self):
        assert Anchor.parse("4d") is Anchor.FIRST_PRENATAL_VISIT
        assert Anchor.parse("lmp_ideal") is Anchor.LMP_IDEAL
        with pytest.raises(ConfigError):
            Anchor.parse("4Z")

    def test_outcome_requirement_only_for_4b(self):
        assert DesignSpec("4B").require_outcome_observed
        assert not DesignSpec("4D").require_outcome_observed
        with pytest.raises(DesignError):
            DesignSpec("4B", require_outcome_observed=False)

    def test_empty_window(self):
        with pytest.raises(DesignError):
            DesignSpec("4D", eligibility_window=(10, 5))

    def test_4d_window_outside_protocol(self, decision_point):
        with pytest.raises(DesignError):
            resolve_window(DesignSpec("4D", eligibility_window=(2, 30)), decision_point)

    def test_default_windows(self, decision_point):
        assert resolve_window(DesignSpec("4C"), decision_point) == (-52, 20)
        assert resolve_window(DesignSpec("4D"), decision_point) == (4, 20)
        assert resolve_window(DesignSpec("4E"), decision_point) == (-52, -1)
        assert resolve_window(DesignSpec("4B"), decision_point) is None


class TestEligibility:
    def test_first_visit_outside_window(self, chap):
        data = observed([person(1, first_contact=10, first_prenatal=16), person(2, first_contact=20, first_prenatal=23)])
        cohort = build_cohort(data, "4D", chap)
        assert cohort.baseline["person_id"].tolist() == [1]
        assert cohort.exclusions["anchor_outside_window"] == 1

    def test_registered_too_late(self, chap):
        data = observed([person(1, first_contact=10, first_prenatal=16), person(2, first_contact=15, first_prenatal=16)])
        cohort = build_cohort(data, "4D", chap)
        assert cohort.baseline["person_id"].tolist() == [1]
        assert cohort.exclusions["registered_too_late"] == 1

    def test_current_use(self, stop_or_go):
        data = observed([person(1, rx=(1, 1, 1), prepreg_user=1), person(2, rx=(1, 0, 0), prepreg_user=1)])
        cohort = build_cohort(data, "4D", stop_or_go)
        assert cohort.baseline["person_id"].tolist() == [1]
        assert cohort.exclusions["not_current_user"] == 1

    def test_retrospective_needs_observed_outcome(self, decision_point):
        data = observed([person(1), person(2, first_prenatal=None, end_week=9, end_type="LOSS")])
        cohort = build_cohort(data, "4B", decision_point)
        assert cohort.baseline["person_id"].tolist() == [1]
        assert cohort.exclusions["outcome_not_observed"] == 1

    def test_preconception_anchor_excludes_others(self, decision_point):
        data = observed([person(1, preconception_week=-6), person(2), person(3, first_prenatal=15)])
        cohort = build_cohort(data, "4E", decision_point)
        assert cohort.baseline["t0_week"].tolist() == [-6]
        assert cohort.exclusions["no_preconception_visit"] == 2

    def test_post_t0_information_ignored(self, stop_or_go):
        people = [person(i, rx=(1, 1, i % 2), prepreg_user=1) for i in range(6)]
        changed = [dict(p, rx_after=1 - p["rx_after"]) for p in people]
        first, _ = select_at_anchor(observed(people).persons, DesignSpec("4D"), stop_or_go)
        second, _ = select_at_anchor(observed(changed).persons, DesignSpec("4D"), stop_or_go)
        assert first["person_id"].tolist() == second["person_id"].tolist()

    def test_preconception_anchor_ignores_later_registration(self, chap, caplog):
        early_contact = person(1, first_contact=8, first_prenatal=16, preconception_week=-6)
        late_contact = person(1, first_contact=16, first_prenatal=16, preconception_week=-6)
        with caplog.at_level(logging.INFO):
            first, _ = select_at_anchor(observed([early_contact]).persons, DesignSpec("4E"), chap)
            second, exclusions = select_at_anchor(observed([late_contact]).persons, DesignSpec("4E"), chap)
        assert first["person_id"].tolist() == second["person_id"].tolist() == [1]
        assert "registered_too_late" not in exclusions
        assert "not applied" in caplog.text

    def test_registration_still_applies_to_first_visit_anchor(self, chap):
        data = observed([person(1, first_contact=16, first_prenatal=16)])
        assert build_cohort(data, "4D", chap).exclusions["registered_too_late"] == 1

    def test_lmp_ideal_needs_truth(self, decision_point):
        with pytest.raises(DesignError, match="ground-truth"):
            build_cohort(observed([person(1)]), "4A", decision_point)

    def test_lmp_ideal_on_null_world(self, decision_point):
        world = simulate_world(WorldParams(n_persons=300, seed=1, baseline_loss_hazard=0.0))
        cohort = build_cohort(None, "4A", decision_point, truth=world.persons_frame())
        assert len(cohort) == 300
        assert (cohort.baseline["t0_week"] == 0).all()
        assert (cohort.baseline["treated"].to_numpy() == world.a0).all()


class TestFollowUp:
    def exit_of(self, cohort, pid):
        return cohort.baseline.set_index("person_id").loc[pid]

    def test_exit_reasons(self, decision_point):
        data = observed([
            person(1, outcome=1),
            person(2, first_contact=6, first_prenatal=7, end_week=10, end_type="LOSS"),
            person(3),
        ])
        cohort = build_cohort(data, "4D", decision_point)
        assert self.exit_of(cohort, 1)["exit_reason"] == "event"
        assert self.exit_of(cohort, 1)["exit_week"] == 39
        assert self.exit_of(cohort, 2)["exit_reason"] == "competing_event"
        assert self.exit_of(cohort, 3)["exit_reason"] == "administrative"
        assert self.exit_of(cohort, 3)["exit_week"] == 39 + decision_point.postpartum_weeks

    def test_event_on_last_row(self, decision_point):
        cohort = build_cohort(observed([person(1, outcome=1)]), "4D", decision_point)
        rows = cohort.rows
        assert rows["week_since_t0"].min() == 0
        assert rows["week"].iloc[0] == 8
        assert rows["event"].sum() == 1
        assert rows["event"].iloc[-1] == 1
        assert len(rows) == 39 - 8 + 1

    def test_encounter_gap_cuts_follow_up(self, decision_point):
        data = observed([person(1, outcome=1)], visits={1: [8, 12, 30, 34, 38]})
        cohort = build_cohort(data, "4D", decision_point)
        row = self.exit_of(cohort, 1)
        assert row["exit_reason"] == "lost_to_followup"
        assert row["exit_week"] == 12 + decision_point.ltfu_gap_weeks
        assert cohort.rows["event"].sum() == 0
        assert cohort.rows["censored"].iloc[-1] == 1

    def test_loss_without_competing_event_is_censored(self, decision_point):
        protocol = decision_point.with_overrides(competing_events=())
        data = observed([person(1, first_contact=6, first_prenatal=7, end_week=10, end_type="LOSS"), person(2)])
        cohort = build_cohort(data, "4D", protocol)
        row = self.exit_of(cohort, 1)
        assert row["exit_reason"] == "censored_loss"
        assert row["exit_week"] == 10
        rows = cohort.rows.loc[cohort.rows["person_id"] == 1]
        assert rows["censored"].iloc[-1] == 1
        assert rows["competing_event"].sum() == 0
        assert rows["event"].sum() == 0
        assert self.exit_of(cohort, 2)["exit_reason"] == "administrative"

    def test_composite_turns_loss_into_event(self, chap):
        data = observed([person(1, first_contact=10, first_prenatal=14, end_week=18, end_type="LOSS")])
        cohort = build_cohort(data, "4D", chap)
        assert self.exit_of(cohort, 1)["exit_reason"] == "event"

    def test_prospective_assignment_stops_at_first_contact(self, decision_point):
        starts_after_contact = person(1, first_contact=6, first_prenatal=8, rx=(0, 0, 1))
        treated_before_contact = person(2, first_contact=6, first_prenatal=8, rx=(0, 1, 0))
        data = observed([starts_after_contact, treated_before_contact])
        assert build_cohort(data, "4C", decision_point).baseline["treated"].tolist() == [0, 1]
        assert build_cohort(data, "4B", decision_point).baseline["treated"].tolist() == [1, 1]

    def test_treatment_assignment(self, decision_point):
        data = observed([person(1, rx=(0, 0, 1)), person(2, rx=(0, 1, 0))])
        cohort = build_cohort(data, "4D", decision_point)
        assert cohort.baseline["treated"].tolist() == [1, 0]
        assert cohort.baseline["prior_treatment"].tolist() == [0, 1]
        assert cohort.baseline["assigned_strategy"].tolist() == ["TREAT", "UNTREATED"]


class TestImmortalTime:
    def test_prospective_first_contact(self, decision_point):
        cohort = build_cohort(observed([person(1, first_contact=10, first_prenatal=12)]), "4C", decision_point)
        per_person, total = immortal_time(cohort)
        assert per_person.loc[1] == 10
        assert total == 10

    def test_decision_design_has_none(self, fig3b_world, decision_point):
        _, _, _, data = fig3b_world
        cohort = build_cohort(data, "4D", decision_point)
        assert immortal_time(cohort)[1] == 0
        assert (cohort.rows.groupby("person_id")["week_since_t0"].min() == 0).all()

    def test_preconception_design_has_none(self, fig3b_world, decision_point):
        _, _, _, data = fig3b_world
        assert immortal_time(build_cohort(data, "4E", decision_point))[1] == 0

    def test_retrospective_matches_recount(self, fig3b_world, decision_point):
        _, _, _, data = fig3b_world
        cohort = build_cohort(data, "4B", decision_point)
        enc = data.encounters
        first = (enc.loc[enc["kind"].isin(["PREGNANCY_TEST", "PRENATAL_VISIT"])]
                 .groupby("person_id")["week"].min())
        expected = int(first.loc[cohort.baseline["person_id"]].sum())
        assert immortal_time(cohort)[1] == expected

    def test_retrospective_survivorship(self, fig3b_world, decision_point):
        _, _, _, data = fig3b_world
        cohort = build_cohort(data, "4B", decision_point)
        assert (cohort.baseline["exit_reason"] != "competing_event").all()
        assert cohort.rows["competing_event"].sum() == 0


def test_ever_on():
    persons = pd.DataFrame([person(1, rx=(1, 0, 0)), person(2, rx=(0, 0, 1))], columns=OBSERVED_PERSON_COLUMNS)
    assert ever_on(persons, np.array([0, 0]), np.array([39, 39])).tolist() == [0, 1]
    assert ever_on(persons, np.array([-5, 0]), np.array([39, 7])).tolist() == [1, 0]
