import os

BASE_DIR = os.path.dirname(os.path.dirname(__file__))
OUTPUT_DIR = os.path.join(BASE_DIR, "output", "fig3a")

# loss depends on U only: every treatment effect is identifiable
SCENARIO = "FIG3A"
N_PERSONS = 10_000
SEED = 20240101

COEFFICIENTS = {
    "coef_u_on_s": 1.5,
    "coef_u_on_y": 1.5,
    "coef_a0_on_a1": 2.0,
    "coef_a0_on_y": 0.4,
    "coef_a1_on_y": 0.4,
    "intercept_a1": -1.0,
}

PROTOCOL = "decision_point"
DESIGNS = ["4A"]
ESTIMAND = {"kind": "EARLY", "target_population": "ALL_CONCEPTIONS"}

N_REPEATS = 20
N_BOOT = 200
ORACLE_DRAWS = 200_000
