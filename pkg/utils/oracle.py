"""Ground truth by intervention on the structural model, and design bias tables."""
import atexit
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
import tqdm

from utils.design_engine import Anchor, DesignSpec, build_cohort, select_at_anchor
from utils.errors import ConfigError, OraclePrecisionError
from utils.estimation import (
    Method, Scale, Stratum, censor_weights, clone_expand, estimate_effect,
)
from utils.observation_layer import observe_frames
from utils.scm_engine import draw_block, simulate_world

MIN_DRAWS = 100
ORACLE_STREAM = 0x0AC1E
REPEAT_STREAM = 0x4E9E47


class OracleKind(str, Enum):
    EARLY = "EARLY"
    LATE = "LATE"
    JOINT = "JOINT"
    DECISION_AT_ANCHOR = "DECISION_AT_ANCHOR"


class Population(str, Enum):
    ALL_CONCEPTIONS = "ALL_CONCEPTIONS"
    SURVIVORS_TO_ANCHOR = "SURVIVORS_TO_ANCHOR"
    OBSERVED_AT_ANCHOR = "OBSERVED_AT_ANCHOR"


@dataclass(frozen=True)
class OracleEstimand:
    kind: OracleKind
    target_population: Population = Population.ALL_CONCEPTIONS
    contrast_values: Optional[tuple] = None
    mc_draws: int = 100_000
    prior_use_stratum: Optional[str] = None
    composite: bool = False
    precision_target: Optional[float] = None
    truth: Optional[float] = None
    mc_se: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", OracleKind(self.kind))
            object.__setattr__(self, "target_population", Population(self.target_population))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.kind is OracleKind.DECISION_AT_ANCHOR and self.target_population is Population.ALL_CONCEPTIONS:
            raise ConfigError("DECISION_AT_ANCHOR is defined only for persons who reach the anchor")
        if self.contrast_values is None:
            default = ((1, 1), (0, 0)) if self.kind is OracleKind.JOINT else (1, 0)
            object.__setattr__(self, "contrast_values", default)
        if self.prior_use_stratum not in (None, Stratum.ALL.value, Stratum.PRIOR_USERS.value, Stratum.NON_USERS.value):
            raise ConfigError(f"Unknown prior-use stratum '{self.prior_use_stratum}'")


def derived_seed(seed, stream, index=0):
    state = np.random.SeedSequence([int(seed), stream, int(index)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _interventions(kind, value):
    if kind is OracleKind.EARLY:
        return {"force_a0": value}
    if kind is OracleKind.JOINT:
        return {"force_a0": value[0], "force_a1": value[1]}
    return {"force_a1": value}


def _risk(world, composite):
    alive = (~world.lost).astype(float)
    if composite:
        return 1.0 - (1.0 - world.y_prob) * alive
    return world.y_prob * alive


def _members(params, natural, population, protocol):
    if population is Population.ALL_CONCEPTIONS:
        return np.ones(len(natural), dtype=bool)
    if population is Population.SURVIVORS_TO_ANCHOR:
        return ~(natural.lost & (natural.s_event < natural.decision_week))
    if protocol is None:
        raise ConfigError("OBSERVED_AT_ANCHOR needs a protocol")
    observed = observe_frames(natural.persons_frame(), natural.encounters_frame(), params.encounters)
    eligible, _ = select_at_anchor(observed.persons, DesignSpec(Anchor.FIRST_PRENATAL_VISIT), protocol)
    return np.isin(natural.person_id, eligible["person_id"].to_numpy())


def oracle_effect(params, estimand, protocol=None):
    """Monte Carlo truth for ``estimand``; returns the estimand with ``truth`` and ``mc_se`` set."""
    n = estimand.mc_draws
    if n < MIN_DRAWS:
        raise OraclePrecisionError(f"mc_draws={n} is below the minimum of {MIN_DRAWS}", required_draws=MIN_DRAWS)

    world = replace(params, n_persons=n, seed=derived_seed(params.seed, ORACLE_STREAM))
    ids = np.arange(n, dtype=np.int64)
    block = draw_block(world, ids)
    natural = simulate_world(world, ids, block=block)

    members = _members(world, natural, estimand.target_population, protocol)
    if estimand.prior_use_stratum == Stratum.PRIOR_USERS.value:
        members &= natural.prepreg_user.astype(bool)
    elif estimand.prior_use_stratum == Stratum.NON_USERS.value:
        members &= ~natural.prepreg_user.astype(bool)
    size = int(members.sum())
    if size == 0:
        raise OraclePrecisionError(f"target population {estimand.target_population.value} is empty in {n} draws",
                                   required_draws=10 * n)

    active, reference = estimand.contrast_values
    treated = simulate_world(world, ids, block=block, **_interventions(estimand.kind, active))
    untreated = simulate_world(world, ids, block=block, **_interventions(estimand.kind, reference))
    diff = (_risk(treated, estimand.composite) - _risk(untreated, estimand.composite))[members]

    truth = math.fsum(diff) / size
    mc_se = float(np.std(diff, ddof=1) / math.sqrt(size)) if size > 1 else math.inf
    target = estimand.precision_target
    if target is not None and mc_se > target:
        required = math.ceil(n * (mc_se / target) ** 2)
        raise OraclePrecisionError(f"mc_se {mc_se:.2e} exceeds target {target:.2e}; need about {required} draws",
                                   required_draws=required)
    logging.info(f"Oracle {estimand.kind.value} over {estimand.target_population.value}: "
                 f"{truth:.5f} (mc_se {mc_se:.2e}, {size} of {n} draws)")
    return replace(estimand, truth=truth, mc_se=mc_se)


# ==============================================================================
# BIAS TABLE
# ==============================================================================

_POOL = None
_POOL_WORKERS = 0


def get_pool(workers):
    global _POOL, _POOL_WORKERS
    if _POOL is not None and _POOL_WORKERS != workers:
        shutdown_pool()
    if _POOL is None:
        _POOL = ProcessPoolExecutor(max_workers=workers)
        _POOL_WORKERS = workers
    return _POOL


def shutdown_pool():
    global _POOL, _POOL_WORKERS
    if _POOL is not None:
        _POOL.shutdown()
        _POOL, _POOL_WORKERS = None, 0


atexit.register(shutdown_pool)



@dataclass
class BiasTable:
    summary: pd.DataFrame
    repeats: pd.DataFrame
    truths: dict

    def long_format(self):
        return bias_long(self.summary)


def _estimate(cohort, protocol, method, n_boot, seed, stratify):
    if method is Method.PER_PROTOCOL:
        data = censor_weights(clone_expand(cohort, protocol))
    else:
        data = cohort
    return estimate_effect(data, protocol, method, scales=(Scale.RISK_DIFFERENCE,), n_boot=n_boot,
                           seed=seed, stratify=stratify)


def _run_repeat(job):
    params, designs, protocol, methods, n_boot, stratify, repeat = job
    seed = derived_seed(params.seed, REPEAT_STREAM, repeat)
    world = simulate_world(replace(params, seed=seed))
    persons, encounters = world.persons_frame(), world.encounters_frame()
    observed = observe_frames(persons, encounters, params.encounters)
    out = []
    for design in designs:
        cohort = build_cohort(observed, DesignSpec(design), protocol, truth=persons)
        for method in methods:
            for e in _estimate(cohort, protocol, method, n_boot, seed, stratify):
                out.append({
                    "repeat": repeat, "design": e.design, "method": method.value, "stratum": e.stratum,
                    "estimate": e.point, "ci_low": e.ci_low, "ci_high": e.ci_high,
                    "n_persons": e.n_persons, "immortal_weeks": e.immortal_weeks,
                })
    return out


def bias_table(params, designs, protocol, estimand, n_repeats, n_boot=0, method=None, stratify=None,
               include_naive=False, workers=1, progress=True):
    designs = [Anchor.parse(d) for d in designs]
    stratify = protocol.stratify_by_prior_use if stratify is None else stratify
    methods = [Method(method or protocol.contrast.value)]
    if include_naive and Method.NAIVE_AS_TREATED not in methods:
        methods.append(Method.NAIVE_AS_TREATED)

    strata = [Stratum.PRIOR_USERS.value, Stratum.NON_USERS.value] if stratify else [Stratum.ALL.value]
    truths = {}
    for stratum in strata:
        scoped = replace(estimand, prior_use_stratum=None if stratum == Stratum.ALL.value else stratum, truth=None)
        if estimand.truth is not None and stratum == Stratum.ALL.value:
            truths[stratum] = estimand
        else:
            truths[stratum] = oracle_effect(params, scoped, protocol)

    jobs = [(params, designs, protocol, methods, n_boot, stratify, r) for r in range(n_repeats)]
    rows = []
    if workers > 1:
        results = get_pool(workers).map(_run_repeat, jobs)
    else:
        results = map(_run_repeat, jobs)
    for result in tqdm.tqdm(results, total=n_repeats, desc="Repeats", unit="repeat", disable=not progress):
        rows.extend(result)

    repeats = pd.DataFrame(rows, columns=["repeat", "design", "method", "stratum", "estimate", "ci_low",
                                          "ci_high", "n_persons", "immortal_weeks"])
    summary = []
    for (design, method_value, stratum), group in repeats.groupby(["design", "method", "stratum"], sort=False):
        truth = truths[stratum].truth
        values = group["estimate"].to_numpy(dtype=float)
        finite = values[np.isfinite(values)]
        mean = math.fsum(finite) / len(finite) if len(finite) else math.nan
        sd = float(np.std(finite, ddof=1)) if len(finite) > 1 else math.nan
        covered = (group["ci_low"] <= truth) & (truth <= group["ci_high"])
        summary.append({
            "design": design, "method": method_value, "stratum": stratum,
            "mean_estimate": mean, "empirical_se": sd,
            "mc_se_mean": sd / math.sqrt(len(finite)) if len(finite) > 1 else math.nan,
            "truth": truth, "truth_mc_se": truths[stratum].mc_se, "bias": mean - truth,
            "mean_immortal_weeks": float(group["immortal_weeks"].mean()),
            "coverage": float(covered.mean()) if n_boot else math.nan,
            "n_repeats": int(len(group)),
        })
    summary = pd.DataFrame(summary)
    for _, row in summary.iterrows():
        logging.info(f"{row['design']} {row['method']} {row['stratum']}: bias {row['bias']:+.4f} "
                     f"(empirical SE {row['empirical_se']:.4f})")
    return BiasTable(summary, repeats, truths)


def bias_long(summary):
    metrics = ["mean_estimate", "empirical_se", "mc_se_mean", "truth", "bias", "mean_immortal_weeks", "coverage"]
    return summary.melt(id_vars=["design", "method", "stratum"], value_vars=metrics,
                        var_name="metric", value_name="value")


def bias_text(summary):
    header = (f"{'DESIGN':<7}{'METHOD':<18}{'STRATUM':<13}{'MEAN':>10}{'EMP_SE':>10}{'TRUTH':>10}"
              f"{'BIAS':>10}{'IMMORTAL':>10}{'COVER':>7}")
    lines = [header, "-" * len(header)]
    for _, r in summary.iterrows():
        lines.append(f"{r['design']:<7}{r['method']:<18}{r['stratum']:<13}{r['mean_estimate']:>10.4f}"
                     f"{r['empirical_se']:>10.4f}{r['truth']:>10.4f}{r['bias']:>+10.4f}"
                     f"{r['mean_immortal_weeks']:>10.2f}{r['coverage']:>7.2f}")
    return "\n".join(lines)
