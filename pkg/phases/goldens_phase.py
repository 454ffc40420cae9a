import json
import math
import logging
from dataclasses import replace
from pathlib import Path

from utils.design_engine import DesignSpec, build_cohort
from utils.estimation import Method, censor_weights, clone_expand, estimate_effect
from utils.experiment import load_experiment
from utils.identifiability import catalog_graphs, check_all
from utils.observation_layer import observe_frames
from utils.oracle import OracleEstimand, oracle_effect
from utils.protocols import load_protocol
from utils.scm_engine import simulate_world, structural_hazard

GOLDEN_FILE = Path(__file__).resolve().parent.parent / "tests" / "goldens.json"

DEPLETION_DRAWS = 1_000_000
ORACLE_DRAWS = 100_000
# relative tolerance used when reporting a changed value
REPORT_RTOL = 1e-12


# ==============================================================================
# GOLDEN VALUES
# ==============================================================================

def identify_verdicts():
    out = {}
    for name, dag in catalog_graphs().items():
        out[name] = {v.estimand.value: v.identifiable for v in check_all(dag)}
    out["FIG3C_U_MEASURED"] = {v.estimand.value: v.identifiable
                               for v in check_all(catalog_graphs()["FIG3C"].with_measured("U"))}
    return out


def hazard_table():
    params = load_experiment("fig3b_config").params
    return {f"u={u:+d},a0={a0}": structural_hazard(params, u, a0, 1) for u in (-1, 0, 1) for a0 in (0, 1)}


def depletion_gap():
    """P(susceptible | chronic, never initiated) - P(susceptible | still treated at LMP)."""
    params = replace(load_experiment("prevalent_user_config").params, n_persons=DEPLETION_DRAWS)
    world = simulate_world(params)
    new_users = world.chronic & ~world.ever_initiated
    return float(world.susceptible[new_users].mean() - world.susceptible[world.prepreg_user].mean())


def observed_loss_gap():
    experiment = load_experiment("fig3b_config")
    world = simulate_world(experiment.params)
    persons, encounters = world.persons_frame(), world.encounters_frame()
    observed = observe_frames(persons, encounters, experiment.params.encounters)
    true_share = float(world.lost.mean())
    observed_share = float((observed.persons["end_type"] == "LOSS").sum() / len(persons))
    return {"true_loss_share": true_share, "observed_loss_share": observed_share,
            "gap": true_share - observed_share}


def null_world_summary():
    experiment = load_experiment("null_world_config")
    world = simulate_world(experiment.params)
    observed = observe_frames(world.persons_frame(), world.encounters_frame(), experiment.params.encounters)
    survivors = world.y[world.y >= 0]
    return {"n_persons": len(world), "n_losses": int(world.lost.sum()), "n_observed": len(observed),
            "outcome_share": float(survivors.mean())}


def _fig3b_cohort(anchor, protocol_name):
    experiment = load_experiment("fig3b_config")
    world = simulate_world(experiment.params)
    persons = world.persons_frame()
    observed = observe_frames(persons, world.encounters_frame(), experiment.params.encounters)
    return build_cohort(observed, DesignSpec(anchor), load_protocol(protocol_name), truth=persons)


def immortal_total_4b():
    cohort = _fig3b_cohort("4B", "decision_point")
    return int(cohort.baseline["immortal_weeks"].sum())


def stop_or_go_estimate():
    cohort = _fig3b_cohort("4D", "stop_or_go")
    clones = censor_weights(clone_expand(cohort))
    out = {}
    for e in estimate_effect(clones, method=Method.PER_PROTOCOL, n_boot=0):
        out[e.scale.value] = e.point
    out["n_persons"] = len(cohort)
    return out


def survivor_truths():
    params = load_experiment("fig3b_config").params
    out = {}
    for population in ("ALL_CONCEPTIONS", "SURVIVORS_TO_ANCHOR"):
        estimand = oracle_effect(params, OracleEstimand("EARLY", population, mc_draws=ORACLE_DRAWS))
        out[population] = estimand.truth
    return out


GOLDENS = {
    "identify_verdicts": identify_verdicts,
    "hazard_table": hazard_table,
    "null_world_summary": null_world_summary,
    "observed_loss_gap": observed_loss_gap,
    "immortal_total_4b": immortal_total_4b,
    "stop_or_go_estimate": stop_or_go_estimate,
    "survivor_truths": survivor_truths,
    "depletion_gap": depletion_gap,
}


def compute_goldens(names=None):
    names = list(GOLDENS) if names is None else list(names)
    unknown = [n for n in names if n not in GOLDENS]
    if unknown:
        raise KeyError(f"unknown golden value(s): {', '.join(unknown)}")
    values = {}
    for name in names:
        logging.info(f"Computing golden '{name}'")
        values[name] = GOLDENS[name]()
    return values


# ==============================================================================
# DIFF & WRITE
# ==============================================================================

def _flatten(value, prefix=""):
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
        return out
    return {prefix: value}


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float):
        if math.isnan(a) and math.isnan(b):
            return True
        return math.isclose(a, b, rel_tol=REPORT_RTOL, abs_tol=0.0)
    return a == b


def diff_goldens(old, new):
    old_flat, new_flat = _flatten(old), _flatten(new)
    lines = []
    for key in sorted(set(old_flat) | set(new_flat)):
        if key not in old_flat:
            lines.append(f"+ {key}: {new_flat[key]!r}")
        elif key not in new_flat:
            lines.append(f"- {key}: {old_flat[key]!r}")
        elif not _same(old_flat[key], new_flat[key]):
            lines.append(f"~ {key}: {old_flat[key]!r} -> {new_flat[key]!r}")
    return lines


def load_goldens(path=GOLDEN_FILE):
    path = Path(path)
    if not path.is_file():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def run_regenerate_goldens(path=GOLDEN_FILE, write=False, names=None):
    path = Path(path)
    old = load_goldens(path)
    new = compute_goldens(names)
    merged = {**old, **new}
    lines = diff_goldens({k: old[k] for k in new if k in old}, new)
    print("\n".join(lines) if lines else "golden values unchanged")

    if not write:
        if lines:
            logging.info("Dry run: pass --write to store the new values")
        return lines
    for line in lines:
        if line.startswith("~"):
            logging.warning(f"Overwriting golden value {line[2:]}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(merged, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logging.info(f"Golden values written to {path}")
    return lines
