import os

BASE_DIR = os.path.dirname(os.path.dirname(__file__))
OUTPUT_DIR = os.path.join(BASE_DIR, "output", "null_world")

# no treatment effects anywhere; U still drives loss and outcome
SCENARIO = "FIG3A"
N_PERSONS = 5000
SEED = 1001

COEFFICIENTS = {
    "coef_u_on_s": 1.0,
    "coef_u_on_y": 1.0,
    "coef_a0_on_a1": 2.0,
    "intercept_a1": -1.0,
}

PROTOCOL = "decision_point"
DESIGNS = ["4A", "4B", "4C", "4D"]
ESTIMAND = {"kind": "EARLY", "target_population": "ALL_CONCEPTIONS"}

N_REPEATS = 200
N_BOOT = 100
ORACLE_DRAWS = 100_000
