"""Estimators for emulated trials.

- ``fit_logistic``: weighted logistic regression by IRLS (Newton-Raphson).
- ``ipw_weights``: baseline inverse-probability-of-treatment weights.
- ``clone_expand`` / ``censor_weights``: clone-censor-weight for per-protocol effects.
- ``cuminc_competing``: discrete-time Aalen-Johansen cumulative incidence.
- ``estimate_effect``: risk difference / ratio at end of follow-up with a person-level bootstrap.
"""
import logging
from dataclasses import dataclass, field, replace, asdict
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
import tqdm
from scipy.special import expit, log_expit

from utils.errors import DesignError, RankDeficientError


@dataclass
class EstimationConfig:
    TOLERANCE: float = 1e-8
    MAX_ITER: int = 50
    SEPARATION_BOUND: float = 25.0
    POSITIVITY_EPS: float = 1e-6
    TRUNCATION_QUANTILE: float = 0.99
    N_BOOT: int = 500
    CI_LEVEL: float = 0.95
    WEIGHT_MEAN_TOLERANCE: float = 0.05


ESTIMATION = EstimationConfig()


class Method(str, Enum):
    ITT_ANALOG = "ITT_ANALOG"
    PER_PROTOCOL = "PER_PROTOCOL"
    NAIVE_AS_TREATED = "NAIVE_AS_TREATED"


class Scale(str, Enum):
    RISK_DIFFERENCE = "RD"
    RISK_RATIO = "RR"


class Stratum(str, Enum):
    ALL = "ALL"
    PRIOR_USERS = "PRIOR_USERS"
    NON_USERS = "NON_USERS"


METHOD_TAGS = {
    Method.ITT_ANALOG: "ipw-aalen-johansen",
    Method.PER_PROTOCOL: "clone-censor-weight",
    Method.NAIVE_AS_TREATED: "naive-as-treated",
}


# ==============================================================================
# LOGISTIC REGRESSION
# ==============================================================================

@dataclass
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    score_norm: float
    names: tuple = ()

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return expit(X @ self.coefficients)


def fit_logistic(X, y, weights=None, config=ESTIMATION):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if len(y) != X.shape[0] or len(w) != X.shape[0]:
        raise ValueError("design matrix, responses and weights differ in length")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("responses must be 0/1")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("weights must be finite and >= 0")

    active = w > 0
    if np.linalg.matrix_rank(X[active]) < X.shape[1]:
        raise RankDeficientError(f"design matrix has rank {np.linalg.matrix_rank(X[active])} < {X.shape[1]} columns")

    total = w.sum()
    beta = np.zeros(X.shape[1])
    converged = False
    iterations = 0
    while True:
        eta = X @ beta
        p = expit(eta)
        score = X.T @ (w * (y - p))
        score_norm = float(np.max(np.abs(score)) / total)
        if score_norm < config.TOLERANCE:
            converged = True
            break
        if iterations >= config.MAX_ITER:
            logging.warning(f"IRLS did not converge in {config.MAX_ITER} iterations (score {score_norm:.2e})")
            break
        hessian = X.T @ (X * (w * p * (1.0 - p))[:, None])
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError:
            logging.warning(f"IRLS: singular information matrix at iteration {iterations}; likely separation")
            break
        beta = beta + step
        iterations += 1
        if np.max(np.abs(beta)) > config.SEPARATION_BOUND:
            logging.warning(f"IRLS: coefficients exceed {config.SEPARATION_BOUND} at iteration {iterations}; "
                            f"separation suspected, fit flagged as not converged")
            eta = X @ beta
            score_norm = float(np.max(np.abs(X.T @ (w * (y - expit(eta))))) / total)
            break

    eta = X @ beta
    log_likelihood = float(np.sum(w * (y * log_expit(eta) + (1.0 - y) * log_expit(-eta))))
    return LogisticFit(beta, converged, iterations, log_likelihood, score_norm)


def design_matrix(frame, columns):
    """Intercept plus the named columns; constant columns are dropped."""
    kept = []
    for col in columns:
        values = frame[col].to_numpy(dtype=float)
        if len(values) and np.ptp(values) > 0:
            kept.append(col)
        else:
            logging.debug(f"Dropping constant covariate {col}")
    X = np.column_stack([np.ones(len(frame))] + [frame[c].to_numpy(dtype=float) for c in kept])
    return X, ("intercept", *kept)


# ==============================================================================
# BASELINE WEIGHTS
# ==============================================================================

def ipw_weights(cohort, confounders, stabilized=True, treatment="treated", config=ESTIMATION):
    base = cohort.baseline if hasattr(cohort, "baseline") else cohort
    index = base["person_id"].to_numpy() if "person_id" in base else base.index
    a = base[treatment].to_numpy(dtype=float)
    if not confounders or len(base) == 0:
        return pd.Series(np.ones(len(base)), index=index, name="ipw")

    X, names = design_matrix(base, confounders)
    fit = fit_logistic(X, a, config=config)
    if not fit.converged:
        logging.warning(f"Propensity model did not converge ({', '.join(names)})")
    ps = fit.predict(X)

    eps = config.POSITIVITY_EPS
    extreme = (ps < eps) | (ps > 1.0 - eps)
    if extreme.any():
        strata = base.loc[extreme, list(confounders)].drop_duplicates().head(3).to_dict("records")
        logging.warning(f"Positivity: {int(extreme.sum())} propensities outside ({eps}, {1 - eps}); stratum {strata}")
        ps = np.clip(ps, eps, 1.0 - eps)

    weights = np.where(a == 1, 1.0 / ps, 1.0 / (1.0 - ps))
    if stabilized:
        p_treated = a.mean()
        weights *= np.where(a == 1, p_treated, 1.0 - p_treated)
        mean = weights.mean()
        if abs(mean - 1.0) > config.WEIGHT_MEAN_TOLERANCE:
            logging.warning(f"Mean stabilized weight {mean:.3f} is more than {config.WEIGHT_MEAN_TOLERANCE} from 1")
    return pd.Series(weights, index=index, name="ipw")


# ==============================================================================
# CLONE - CENSOR - WEIGHT
# ==============================================================================

CLONE_COLUMNS = [
    "person_id", "replicate_strategy", "week_since_t0", "week", "on_treatment", "lag_on_treatment",
    "at_risk", "event", "competing_event", "censored", "deviated", "artificial_censor_week", "ipc_weight",
    "prior_treatment", "prepreg_user", "u_proxy",
]


@dataclass
class CloneSet:
    rows: pd.DataFrame
    cohort: object
    protocol: object
    weighted: bool = False
    notes: list = field(default_factory=list)

    def replicate(self, strategy_name):
        return self.rows.loc[self.rows["replicate_strategy"] == strategy_name]


def _deviation_rows(rows, strategy, grace):
    on = rows["on_treatment"].to_numpy() == 1
    if strategy.on_treatment:
        return ~on
    return on & (rows["week_since_t0"].to_numpy() > grace)


def clone_expand(cohort, protocol=None):
    """Two replicates per eligible person, each cut at its first deviation from its strategy."""
    protocol = protocol or cohort.protocol
    rows = cohort.rows.sort_values(["person_id", "week_since_t0"]).reset_index(drop=True)
    lag = rows.groupby("person_id")["on_treatment"].shift(1)
    lag = lag.fillna(rows["prior_treatment"]).to_numpy(dtype=np.int8)

    replicates = []
    for strategy in protocol.strategies:
        dev = _deviation_rows(rows, strategy, protocol.grace_period_weeks)
        dev_week = pd.Series(np.where(dev, rows["week_since_t0"], np.iinfo(np.int64).max), index=rows.index)
        first = dev_week.groupby(rows["person_id"]).transform("min").to_numpy()
        week = rows["week_since_t0"].to_numpy()
        keep = week <= first
        at_dev = week == first

        r = rows.loc[keep].copy()
        d = at_dev[keep]
        has_dev = first[keep] != np.iinfo(np.int64).max
        r["replicate_strategy"] = strategy.name
        r["lag_on_treatment"] = lag[keep]
        r["deviated"] = d.astype(np.int8)
        r["artificial_censor_week"] = pd.array(np.where(has_dev, first[keep], 0), dtype="Int64")
        r.loc[~has_dev, "artificial_censor_week"] = pd.NA
        for col in ("event", "competing_event"):
            r.loc[d, col] = 0
        r.loc[d, "censored"] = 1
        r.loc[d, "at_risk"] = 0
        r["ipc_weight"] = 1.0
        replicates.append(r)

    out = pd.concat(replicates, ignore_index=True)[CLONE_COLUMNS]
    out = out.sort_values(["person_id", "replicate_strategy", "week_since_t0"], kind="mergesort").reset_index(drop=True)
    n_dev = int(out["deviated"].sum())
    logging.info(f"Cloned {len(cohort)} persons into {2 * len(cohort)} replicates ({n_dev} artificially censored)")
    return CloneSet(out, cohort, protocol)


def censor_weights(clones, covariates=None, config=ESTIMATION):
    """Inverse probability of remaining uncensored, pooled over the weeks in which deviations occur."""
    covariates = tuple(clones.protocol.censoring_covariates if covariates is None else covariates)
    rows = clones.rows.copy()
    baseline = clones.cohort.baseline.set_index("person_id")
    for col in covariates:
        if col not in rows:
            rows[col] = rows["person_id"].map(baseline[col]).to_numpy(dtype=float)
    weights = np.ones(len(rows))
    notes = list(clones.notes)

    for strategy in clones.protocol.strategies:
        mask = (rows["replicate_strategy"] == strategy.name).to_numpy()
        r = rows.loc[mask]
        dev = r["deviated"].to_numpy() == 1
        if not dev.any():
            notes.append(f"{strategy.name}: no deviations, censoring weights = 1")
            logging.info(notes[-1])
            continue
        dev_weeks = np.unique(r.loc[dev, "week_since_t0"])
        in_fit = r["week_since_t0"].isin(dev_weeks).to_numpy()
        if dev[in_fit].all():
            notes.append(f"{strategy.name}: every replicate deviates, censoring weights = 1")
            logging.warning(notes[-1])
            continue

        fit_rows = r.loc[in_fit]
        grouped = fit_rows.groupby(["week_since_t0", *covariates]).agg(
            n=("deviated", "size"), d=("deviated", "sum")).reset_index()
        for week in dev_weeks:
            grouped[f"wk_{week}"] = (grouped["week_since_t0"] == week).astype(float)
        week_cols = [f"wk_{week}" for week in dev_weeks]
        kept_cov = [c for c in covariates if np.ptp(grouped[c].to_numpy(dtype=float)) > 0]
        columns = week_cols + kept_cov

        def stacked(frame, cols):
            X = frame[cols].to_numpy(dtype=float)
            return (np.vstack([X, X]),
                    np.r_[np.ones(len(frame)), np.zeros(len(frame))],
                    np.r_[frame["d"].to_numpy(dtype=float), (frame["n"] - frame["d"]).to_numpy(dtype=float)])

        try:
            fit = fit_logistic(*stacked(grouped, columns), config=config)
        except RankDeficientError:
            logging.warning(f"{strategy.name}: censoring model rank deficient with {kept_cov}; using week terms only")
            columns = week_cols
            fit = fit_logistic(*stacked(grouped, columns), config=config)
        if not fit.converged:
            notes.append(f"{strategy.name}: censoring model did not converge")

        full = r.copy()
        for week in dev_weeks:
            full[f"wk_{week}"] = (full["week_since_t0"] == week).astype(float)
        p = np.where(full["week_since_t0"].isin(dev_weeks), fit.predict(full[columns].to_numpy(dtype=float)), 0.0)
        p = np.minimum(p, 1.0 - config.POSITIVITY_EPS)
        factor = pd.Series(1.0 / (1.0 - p), index=r.index)
        weights[mask] = factor.groupby(r["person_id"]).cumprod().to_numpy()

    at_risk = rows["at_risk"].to_numpy() == 1
    q = config.TRUNCATION_QUANTILE
    if q < 1.0 and at_risk.any():
        threshold = float(np.quantile(weights[at_risk], q))
        clipped = weights > threshold
        if clipped.any():
            logging.info(f"Truncated {int(clipped.sum())} censoring weights at {threshold:.4f} (quantile {q})")
            notes.append(f"truncated {int(clipped.sum())} weights at {threshold:.4f}")
            weights = np.minimum(weights, threshold)

    rows["ipc_weight"] = weights
    return CloneSet(rows, clones.cohort, clones.protocol, weighted=True, notes=notes)


# ==============================================================================
# CUMULATIVE INCIDENCE
# ==============================================================================

def _aalen_johansen(t, at, ev, comp, w, n_weeks):
    risk = np.bincount(t[at], weights=w[at], minlength=n_weeks)
    d_y = np.bincount(t[at & ev], weights=w[at & ev], minlength=n_weeks)
    d_s = np.bincount(t[at & comp], weights=w[at & comp], minlength=n_weeks)
    with np.errstate(invalid="ignore", divide="ignore"):
        h_y = np.where(risk > 0, d_y / risk, 0.0)
        h_s = np.where(risk > 0, d_s / risk, 0.0)
    survival = np.cumprod(1.0 - h_y - h_s)
    before = np.r_[1.0, survival[:-1]]
    return risk, d_y, d_s, h_y, h_s, survival, np.cumsum(h_y * before), np.cumsum(h_s * before)


def cuminc_competing(rows, weights=None, time_col="week_since_t0"):
    t = rows[time_col].to_numpy(dtype=np.int64)
    w = np.ones(len(rows)) if weights is None else np.asarray(weights, dtype=float)
    at = rows["at_risk"].to_numpy() == 1
    ev = rows["event"].to_numpy() == 1
    comp = rows["competing_event"].to_numpy() == 1
    n_weeks = int(t.max()) + 1 if len(t) else 0
    risk, d_y, d_s, h_y, h_s, surv, cif_y, cif_s = _aalen_johansen(t, at, ev, comp, w, n_weeks)
    return pd.DataFrame({
        "week_since_t0": np.arange(n_weeks),
        "at_risk": risk,
        "events": d_y,
        "competing_events": d_s,
        "hazard_outcome": h_y,
        "hazard_competing": h_s,
        "survival": surv,
        "cif_outcome": cif_y,
        "cif_competing": cif_s,
    })


# ==============================================================================
# EFFECT ESTIMATES
# ==============================================================================

@dataclass(frozen=True)
class EffectEstimate:
    estimand: str
    scale: Scale
    point: float
    ci_low: float
    ci_high: float
    n_persons: int
    n_events: int
    method_tag: str
    oracle_truth: Optional[float] = None
    bias: Optional[float] = None
    stratum: str = Stratum.ALL.value
    ratio_undefined: bool = False
    immortal_weeks: int = 0
    design: str = ""

    def __post_init__(self):
        if np.isfinite(self.point) and not self.ci_low <= self.point <= self.ci_high:
            raise ValueError(f"confidence interval [{self.ci_low}, {self.ci_high}] excludes point {self.point}")

    def with_truth(self, truth):
        return replace(self, oracle_truth=float(truth), bias=float(self.point - truth))

    def to_record(self):
        record = asdict(self)
        record["scale"] = self.scale.value
        return record


class _Analysis:
    """Rows of one stratum with arm labels and fixed analysis weights."""

    def __init__(self, rows, arm, weights, composite):
        self.rows = rows
        self.arm = arm
        self.weights = weights
        self.person_ids, self.owner = np.unique(rows["person_id"].to_numpy(), return_inverse=True)
        self.t = rows["week_since_t0"].to_numpy(dtype=np.int64)
        self.n_weeks = int(self.t.max()) + 1 if len(self.t) else 1
        self.at = rows["at_risk"].to_numpy() == 1
        event = rows["event"].to_numpy() == 1
        competing = rows["competing_event"].to_numpy() == 1
        self.ev = event | competing if composite else event
        self.comp = np.zeros_like(competing) if composite else competing

    def risks(self, multiplicity=None):
        w = self.weights if multiplicity is None else self.weights * multiplicity[self.owner]
        out = []
        for value in (1, 0):
            m = self.arm == value
            cif = _aalen_johansen(self.t[m], self.at[m], self.ev[m], self.comp[m], w[m], self.n_weeks)[6]
            out.append(float(cif[-1]))
        return out


def _contrast(scale, r1, r0):
    if scale is Scale.RISK_DIFFERENCE:
        return r1 - r0
    return r1 / r0 if r0 > 0 else np.nan


def _analysis(data, method, composite, mask_persons, confounders, config):
    if method is Method.PER_PROTOCOL:
        rows = data.rows.loc[data.rows["person_id"].isin(mask_persons)].reset_index(drop=True)
        on_name = data.protocol.on_strategy.name
        arm = (rows["replicate_strategy"] == on_name).to_numpy().astype(np.int8)
        return _Analysis(rows, arm, rows["ipc_weight"].to_numpy(dtype=float), composite)

    rows = data.rows.loc[data.rows["person_id"].isin(mask_persons)].reset_index(drop=True)
    if method is Method.ITT_ANALOG:
        base = data.baseline.loc[data.baseline["person_id"].isin(mask_persons)]
        ipw = ipw_weights(base, confounders, stabilized=True, config=config)
        arm = rows["treated"].to_numpy(dtype=np.int8)
        return _Analysis(rows, arm, rows["person_id"].map(ipw).to_numpy(dtype=float), composite)

    ever = rows.groupby("person_id")["on_treatment"].transform("max")
    return _Analysis(rows, ever.to_numpy(dtype=np.int8), np.ones(len(rows)), composite)


def estimate_effect(data, protocol=None, method=None, scales=(Scale.RISK_DIFFERENCE, Scale.RISK_RATIO),
                    n_boot=None, seed=0, stratify=None, composite=False, config=ESTIMATION, progress=False):
    """Effect estimates at the end of follow-up, one per (stratum, scale)."""
    protocol = protocol or data.protocol
    method = Method(method or protocol.contrast.value)
    n_boot = config.N_BOOT if n_boot is None else n_boot
    stratify = protocol.stratify_by_prior_use if stratify is None else stratify
    scales = [Scale(s) for s in scales]

    if method is Method.PER_PROTOCOL:
        if not isinstance(data, CloneSet) or not data.weighted:
            raise DesignError("per-protocol estimation needs weighted clones (clone_expand + censor_weights)")
        cohort = data.cohort
    else:
        if isinstance(data, CloneSet):
            raise DesignError(f"{method.value} is estimated on the analytic cohort, not on clones")
        cohort = data

    baseline = cohort.baseline
    if stratify:
        strata = [(Stratum.PRIOR_USERS, baseline["prepreg_user"] == 1), (Stratum.NON_USERS, baseline["prepreg_user"] == 0)]
    else:
        strata = [(Stratum.ALL, pd.Series(True, index=baseline.index))]

    tag = METHOD_TAGS[method] + ("/composite" if composite else "")
    design = cohort.design.anchor.value
    alpha = (1.0 - config.CI_LEVEL) / 2.0
    estimates = []
    for stratum, selected in strata:
        persons = baseline.loc[selected, "person_id"].to_numpy()
        analysis = _analysis(data, method, composite, persons, protocol.confounders, config)
        n_events = int((analysis.ev & analysis.at).sum())
        events_by_arm = [int((analysis.ev & analysis.at & (analysis.arm == v)).sum()) for v in (1, 0)]
        r1, r0 = analysis.risks() if len(persons) else (np.nan, np.nan)
        ratio_undefined = min(events_by_arm) == 0
        if ratio_undefined and Scale.RISK_RATIO in scales:
            logging.warning(f"{stratum.value}: zero events in an arm; risk ratio undefined")

        boot = np.full((n_boot, 2), np.nan)
        n_people = len(analysis.person_ids)
        for b in tqdm.tqdm(range(n_boot if n_people else 0), desc=f"Bootstrap {stratum.value}", unit="resample",
                           leave=False, disable=not progress):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
            multiplicity = np.bincount(rng.integers(0, n_people, n_people), minlength=n_people).astype(float)
            boot[b] = analysis.risks(multiplicity)

        immortal = int(cohort.baseline.loc[selected, "immortal_weeks"].sum())
        for scale in scales:
            undefined = scale is Scale.RISK_RATIO and ratio_undefined
            point = np.nan if undefined else _contrast(scale, r1, r0)
            if undefined or not np.isfinite(point):
                low = high = np.nan
            elif n_boot:
                values = np.array([_contrast(scale, on, off) for on, off in boot])
                values = values[np.isfinite(values)]
                low, high = (np.quantile(values, [alpha, 1.0 - alpha]) if len(values) else (point, point))
                low, high = min(float(low), point), max(float(high), point)
            else:
                low = high = point
            estimates.append(EffectEstimate(
                estimand=method.value, scale=scale, point=float(point), ci_low=float(low), ci_high=float(high),
                n_persons=int(len(persons)), n_events=n_events, method_tag=tag, stratum=stratum.value,
                ratio_undefined=ratio_undefined, immortal_weeks=immortal, design=design,
            ))
        logging.info(f"{method.value} {design} {stratum.value}: risk {r1:.4f} vs {r0:.4f} "
                     f"({len(persons)} persons, {n_events} events)")
    return estimates


def estimate_records(estimates):
    return [e.to_record() for e in estimates]


def estimates_table(estimates):
    header = f"{'DESIGN':<7}{'ESTIMAND':<18}{'STRATUM':<13}{'SCALE':<6}{'POINT':>10}{'CI_LOW':>10}{'CI_HIGH':>10}{'N':>8}{'EVENTS':>8}"
    lines = [header, "-" * len(header)]
    for e in estimates:
        lines.append(f"{e.design:<7}{e.estimand:<18}{e.stratum:<13}{e.scale.value:<6}"
                     f"{e.point:>10.4f}{e.ci_low:>10.4f}{e.ci_high:>10.4f}{e.n_persons:>8}{e.n_events:>8}")
    return "\n".join(lines)
