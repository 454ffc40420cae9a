import os

BASE_DIR = os.path.dirname(os.path.dirname(__file__))
OUTPUT_DIR = os.path.join(BASE_DIR, "output", "fig3c")

# U also drives both treatment decisions; U_proxy measures it exactly
SCENARIO = "FIG3C"
N_PERSONS = 10_000
SEED = 20240103

COEFFICIENTS = {
    "coef_u_on_s": 1.5,
    "coef_u_on_y": 1.5,
    "coef_u_on_a0": 1.0,
    "coef_u_on_a1": 1.0,
    "coef_a0_on_s": 1.2,
    "coef_a0_on_a1": 3.0,
    "coef_a0_on_y": 0.3,
    "coef_a1_on_y": 0.5,
    "intercept_a0": -0.5,
    "intercept_a1": -2.0,
}
ENCOUNTERS = {"u_proxy_correlation": 1.0}

PROTOCOL = "decision_point"
CONFOUNDERS = ["prior_treatment", "u_proxy"]
DESIGNS = ["4D"]
ESTIMAND = {"kind": "DECISION_AT_ANCHOR", "target_population": "OBSERVED_AT_ANCHOR"}

N_REPEATS = 20
N_BOOT = 200
ORACLE_DRAWS = 200_000
