import os

BASE_DIR = os.path.dirname(os.path.dirname(__file__))
OUTPUT_DIR = os.path.join(BASE_DIR, "output", "fig3b")

# early treatment changes pregnancy loss; loss shares the cause U with the outcome
SCENARIO = "FIG3B"
N_PERSONS = 10_000
SEED = 20240102

COEFFICIENTS = {
    "coef_u_on_s": 1.5,
    "coef_u_on_y": 1.5,
    "coef_a0_on_s": 1.2,
    "coef_a0_on_a1": 3.0,
    "coef_a0_on_y": 0.3,
    "coef_a1_on_y": 0.5,
    "intercept_a0": -0.5,
    "intercept_a1": -2.0,
    "baseline_loss_hazard": 0.01,
}

PROTOCOL = "decision_point"
DESIGNS = ["4B", "4C", "4D"]
ESTIMAND = {"kind": "DECISION_AT_ANCHOR", "target_population": "OBSERVED_AT_ANCHOR"}

N_REPEATS = 20
N_BOOT = 200
ORACLE_DRAWS = 200_000
INCLUDE_NAIVE = True
