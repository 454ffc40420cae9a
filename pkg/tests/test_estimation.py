import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from utils.design_engine import build_cohort
from utils.errors import DesignError, RankDeficientError
from utils.estimation import (
    EffectEstimate, EstimationConfig, Method, Scale, Stratum, censor_weights, clone_expand, cuminc_competing,
    estimate_effect, estimates_table, fit_logistic, ipw_weights,
)
from utils.experiment import load_experiment
from utils.observation_layer import observe_frames
from utils.protocols import Contrast
from utils.scm_engine import WorldParams, simulate_world


@pytest.fixture
def cohort(fig3b_world, decision_point):
    _, _, _, data = fig3b_world
    return build_cohort(data, "4D", decision_point)


@pytest.fixture
def stop_cohort(fig3b_world, stop_or_go):
    _, _, _, data = fig3b_world
    return build_cohort(data, "4D", stop_or_go)


class TestFitLogistic:
    def test_two_by_two_log_odds_ratio(self):
        X = np.array([[1, 1], [1, 1], [1, 0], [1, 0]], dtype=float)
        y = np.array([1, 0, 1, 0], dtype=float)
        w = np.array([30, 70, 10, 90], dtype=float)
        fit = fit_logistic(X, y, w)
        assert fit.converged
        assert fit.coefficients[0] == pytest.approx(math.log(10 / 90), abs=1e-6)
        assert fit.coefficients[1] == pytest.approx(math.log((30 / 70) / (10 / 90)), abs=1e-6)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_direct_likelihood_maximisation(self, seed):
        rng = np.random.default_rng(seed)
        n = 500
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 2)), rng.binomial(1, 0.4, n)])
        y = (rng.random(n) < expit(X @ rng.normal(0.0, 0.7, 4))).astype(float)
        w = rng.uniform(0.5, 2.0, n)

        def negative_log_likelihood(beta):
            eta = X @ beta
            value = np.sum(w * (np.logaddexp(0.0, eta) - y * eta))
            return value, X.T @ (w * (expit(eta) - y))

        reference = minimize(negative_log_likelihood, np.zeros(4), jac=True, method="BFGS",
                             options={"gtol": 1e-9, "maxiter": 2000})
        fit = fit_logistic(X, y, w)
        assert fit.converged
        assert fit.coefficients == pytest.approx(reference.x, abs=1e-5)

    def test_scaling_weights_leaves_coefficients(self):
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(300), rng.normal(size=300)])
        y = (rng.random(300) < expit(0.3 + 0.8 * X[:, 1])).astype(float)
        w = rng.uniform(0.2, 3.0, 300)
        once, twice = fit_logistic(X, y, w), fit_logistic(X, y, 2.0 * w)
        assert twice.coefficients == pytest.approx(once.coefficients, rel=1e-9, abs=1e-12)
        assert twice.iterations == once.iterations

    def test_predict_matches_rates(self):
        X = np.array([[1, 1], [1, 1], [1, 0], [1, 0]], dtype=float)
        fit = fit_logistic(X, [1, 0, 1, 0], [30, 70, 10, 90])
        assert fit.predict(np.array([[1, 1], [1, 0]])) == pytest.approx([0.3, 0.1], abs=1e-8)

    def test_rank_deficient(self):
        X = np.array([[1, 2], [1, 2], [1, 2]], dtype=float)
        with pytest.raises(RankDeficientError):
            fit_logistic(X, [0, 1, 0])

    def test_separation_flagged(self, caplog):
        X = np.column_stack([np.ones(6), [0, 0, 0, 1, 1, 1]])
        fit = fit_logistic(X, [0, 0, 0, 1, 1, 1])
        assert not fit.converged
        assert "separation" in caplog.text

    def test_bad_responses(self):
        with pytest.raises(ValueError):
            fit_logistic(np.ones((3, 1)), [0, 2, 1])

    def test_negative_weights(self):
        with pytest.raises(ValueError):
            fit_logistic(np.ones((2, 1)), [0, 1], [1, -1])


class TestIpwWeights:
    def test_no_confounding_gives_unit_weights(self):
        base = pd.DataFrame({"person_id": range(8), "treated": [0, 1, 0, 1, 0, 1, 0, 1],
                             "prior_treatment": [0, 0, 0, 0, 1, 1, 1, 1]})
        weights = ipw_weights(base, ["prior_treatment"])
        assert weights.to_numpy() == pytest.approx(np.ones(8), abs=1e-6)

    def test_no_confounders(self):
        base = pd.DataFrame({"person_id": [4, 5], "treated": [0, 1]})
        weights = ipw_weights(base, [])
        assert weights.index.tolist() == [4, 5]
        assert (weights == 1.0).all()

    def test_stabilized_mean_near_one(self, cohort):
        weights = ipw_weights(cohort, ["prior_treatment", "u_proxy"])
        assert weights.mean() == pytest.approx(1.0, abs=0.05)

    def test_positivity_warning(self, caplog):
        base = pd.DataFrame({"person_id": range(6), "treated": [0, 0, 0, 1, 1, 1],
                             "prior_treatment": [0, 0, 0, 1, 1, 1]})
        ipw_weights(base, ["prior_treatment"], config=EstimationConfig(POSITIVITY_EPS=1e-3))
        assert "Positivity" in caplog.text


class TestCloneCensorWeight:
    def test_two_replicates_per_person(self, stop_cohort):
        clones = clone_expand(stop_cohort)
        pairs = clones.rows[["person_id", "replicate_strategy"]].drop_duplicates()
        assert len(pairs) == 2 * len(stop_cohort)

    def test_deviation_row_closes_replicate(self, stop_cohort):
        rows = clone_expand(stop_cohort).rows
        deviated = rows.loc[rows["deviated"] == 1]
        assert (deviated["at_risk"] == 0).all()
        assert (deviated["censored"] == 1).all()
        assert (deviated["event"] == 0).all()
        last = rows.groupby(["person_id", "replicate_strategy"])["week_since_t0"].transform("max")
        assert (deviated["week_since_t0"] == last.loc[deviated.index]).all()

    def test_grace_period(self, stop_cohort):
        stop = clone_expand(stop_cohort).replicate("STOP")
        stop = stop.loc[stop["deviated"] == 1]
        assert (stop["week_since_t0"] > stop_cohort.protocol.grace_period_weeks).all()

    def test_weights_grow_over_time(self, stop_cohort):
        clones = censor_weights(clone_expand(stop_cohort))
        assert clones.weighted
        w = clones.rows["ipc_weight"]
        assert (w >= 1.0 - 1e-12).all()
        monotone = clones.rows.groupby(["person_id", "replicate_strategy"])["ipc_weight"].apply(
            lambda s: bool((np.diff(s.to_numpy()) >= -1e-12).all()))
        assert monotone.all()

    def test_per_protocol_equals_crude_without_later_deviations(self, cohort, decision_point):
        protocol = decision_point.with_overrides(contrast=Contrast.PER_PROTOCOL, censoring_covariates=(),
                                                 confounders=())
        clones = censor_weights(clone_expand(cohort, protocol))
        pp = estimate_effect(clones, protocol, Method.PER_PROTOCOL, scales=["RD"], n_boot=0)[0]
        crude = estimate_effect(cohort, protocol, Method.ITT_ANALOG, scales=["RD"], n_boot=0)[0]
        assert pp.point == pytest.approx(crude.point, rel=1e-9, abs=1e-12)


class TestCumulativeIncidence:
    def test_closure_identity(self, cohort):
        table = cuminc_competing(cohort.rows)
        total = table["cif_outcome"] + table["cif_competing"] + table["survival"]
        assert np.abs(total - 1.0).max() < 1e-12

    def test_no_censoring_equals_proportions(self):
        rows = pd.DataFrame({
            "person_id": [1, 2, 2, 3, 3, 3],
            "week_since_t0": [0, 0, 1, 0, 1, 2],
            "at_risk": [1] * 6,
            "event": [1, 0, 0, 0, 0, 0],
            "competing_event": [0, 0, 1, 0, 0, 0],
        })
        table = cuminc_competing(rows)
        assert table["cif_outcome"].iloc[-1] == pytest.approx(1 / 3)
        assert table["cif_competing"].iloc[-1] == pytest.approx(1 / 3)
        assert table["survival"].iloc[-1] == pytest.approx(1 / 3)


class TestEstimateEffect:
    def test_method_checks(self, cohort, decision_point):
        with pytest.raises(DesignError):
            estimate_effect(cohort, decision_point, Method.PER_PROTOCOL, n_boot=0)
        clones = clone_expand(cohort)
        with pytest.raises(DesignError):
            estimate_effect(clones, decision_point, Method.PER_PROTOCOL, n_boot=0)
        with pytest.raises(DesignError):
            estimate_effect(censor_weights(clones), decision_point, Method.NAIVE_AS_TREATED, n_boot=0)

    def test_records_per_scale(self, cohort, decision_point):
        estimates = estimate_effect(cohort, decision_point, n_boot=0)
        assert [e.scale for e in estimates] == [Scale.RISK_DIFFERENCE, Scale.RISK_RATIO]
        assert all(e.stratum == Stratum.ALL.value and e.design == "4D" for e in estimates)
        assert estimates[0].method_tag == "ipw-aalen-johansen"
        assert estimates[0].immortal_weeks == 0

    def test_bootstrap_interval(self, cohort, decision_point):
        first = estimate_effect(cohort, decision_point, scales=["RD"], n_boot=40, seed=3)[0]
        second = estimate_effect(cohort, decision_point, scales=["RD"], n_boot=40, seed=3)[0]
        assert first.ci_low <= first.point <= first.ci_high
        assert first.ci_low < first.ci_high
        assert (first.ci_low, first.ci_high) == (second.ci_low, second.ci_high)

    def test_ratio_undefined_without_events(self, decision_point, caplog):
        params = WorldParams(n_persons=800, seed=5, baseline_outcome_risk=0.0, intercept_a1=0.0)
        world = simulate_world(params)
        data = observe_frames(world.persons_frame(), world.encounters_frame(), params.encounters)
        estimates = estimate_effect(build_cohort(data, "4D", decision_point), decision_point, n_boot=0)
        rd, rr = estimates
        assert rd.point == 0.0
        assert rr.ratio_undefined and math.isnan(rr.point)
        assert "risk ratio undefined" in caplog.text

    def test_stratified_records(self, decision_point):
        params = replace(load_experiment("prevalent_user_config").params, n_persons=4000)
        world = simulate_world(params)
        data = observe_frames(world.persons_frame(), world.encounters_frame(), params.encounters)
        protocol = decision_point.with_overrides(stratify_by_prior_use=True)
        estimates = estimate_effect(build_cohort(data, "4D", protocol), protocol, n_boot=0)
        assert [(e.stratum, e.scale.value) for e in estimates] == [
            ("PRIOR_USERS", "RD"), ("PRIOR_USERS", "RR"), ("NON_USERS", "RD"), ("NON_USERS", "RR")]
        assert sum(e.n_persons for e in estimates if e.scale is Scale.RISK_DIFFERENCE) == len(
            build_cohort(data, "4D", protocol))

    def test_composite_tag(self, cohort, decision_point):
        estimate = estimate_effect(cohort, decision_point, scales=["RD"], n_boot=0, composite=True)[0]
        assert estimate.method_tag.endswith("/composite")

    def test_naive_as_treated(self, cohort, decision_point):
        estimate = estimate_effect(cohort, decision_point, Method.NAIVE_AS_TREATED, scales=["RD"], n_boot=0)[0]
        assert estimate.estimand == "NAIVE_AS_TREATED"

    def test_table(self, cohort, decision_point):
        text = estimates_table(estimate_effect(cohort, decision_point, n_boot=0))
        assert text.splitlines()[0].split()[:3] == ["DESIGN", "ESTIMAND", "STRATUM"]
        assert len(text.splitlines()) == 4


def test_estimate_rejects_interval_without_point():
    with pytest.raises(ValueError):
        EffectEstimate("ITT_ANALOG", Scale.RISK_DIFFERENCE, 0.2, 0.3, 0.4, 10, 2, "ipw-aalen-johansen")


def test_with_truth():
    estimate = EffectEstimate("ITT_ANALOG", Scale.RISK_DIFFERENCE, 0.2, 0.1, 0.3, 10, 2, "ipw-aalen-johansen")
    assert estimate.with_truth(0.15).bias == pytest.approx(0.05)
