import os

BASE_DIR = os.path.dirname(os.path.dirname(__file__))
OUTPUT_DIR = os.path.join(BASE_DIR, "output", "prevalent_user")

# susceptible initiators drop out before pregnancy, so prevalent users are the tolerant ones
SCENARIO = "PREVALENT_USER"
N_PERSONS = 20_000
SEED = 20240104

COEFFICIENTS = {
    "coef_prepreg_on_a0": 3.0,
    "intercept_a0": -2.0,
    "coef_a0_on_a1": 3.0,
    "intercept_a1": -2.0,
    "coef_a1_on_y": 0.3,
    "coef_susceptible_on_y": 1.5,
    "coef_u_on_s": 1.0,
    "coef_u_on_y": 1.0,
}
PREPREGNANCY = {
    "p_chronic_condition": 0.30,
    "p_initiate_per_month": 0.08,
    "p_adverse_event_on_initiation": 0.80,
    "p_discontinue_given_adverse": 0.90,
    "p_susceptible": 0.40,
}

PROTOCOL = "decision_point"
STRATIFY_BY_PRIOR_USE = True
DESIGNS = ["4D"]
ESTIMAND = {"kind": "DECISION_AT_ANCHOR", "target_population": "OBSERVED_AT_ANCHOR"}

N_REPEATS = 20
N_BOOT = 200
ORACLE_DRAWS = 200_000
