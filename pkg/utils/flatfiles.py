"""Versioned CSV flat files.

Every file starts with ``# schema: <kind>/<version>`` followed by a plain CSV
table. Floats are written with 17 significant digits so reruns are byte-identical.
"""
import re
import logging
from pathlib import Path

import pandas as pd

from utils.errors import OverwriteRefusedError, SchemaError
from utils.observation_layer import ObservedData

SCHEMA_RE = re.compile(r"^# schema: ([a-z_]+)/(\d+)$")

TRAJECTORY_SCHEMA = "trajectory/1"
OBSERVED_SCHEMA = "observed/1"
COHORT_SCHEMA = "cohort/1"
ESTIMATES_SCHEMA = "estimates/1"
BIAS_SCHEMA = "bias/1"
BIAS_LONG_SCHEMA = "bias_long/1"

TRAJECTORY_FILES = ("trajectories_persons.csv", "trajectories_encounters.csv")
OBSERVED_FILES = ("observed_persons.csv", "observed_encounters.csv")

NULLABLE_INT = {
    "trajectories_persons.csv": ("s_event", "y"),
    "observed_persons.csv": ("first_prenatal_week", "preconception_week", "outcome"),
}
REQUIRED_COLUMNS = {
    "trajectories_persons.csv": ("person_id", "u", "prepreg_user", "a0", "a1", "s_event", "end_week", "y",
                                 "care", "decision_week", "early_start_week", "u_proxy"),
    "trajectories_encounters.csv": ("person_id", "kind", "week"),
    "observed_persons.csv": ("person_id", "first_contact_week", "first_prenatal_week", "end_week", "end_type",
                             "outcome", "prepreg_user", "u_proxy", "rx_before", "rx_start_week", "rx_early",
                             "rx_change_week", "rx_after"),
    "observed_encounters.csv": ("person_id", "kind", "week"),
}


def check_writable(paths, force):
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise OverwriteRefusedError(f"refusing to overwrite {', '.join(existing)} (use --force)")


def write_frame(frame, path, schema, force=False):
    path = Path(path)
    check_writable([path], force)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        frame.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    logging.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_frame(path, schema):
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path} not found")
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        m = SCHEMA_RE.match(first)
        if not m:
            raise SchemaError(f"{path.name}: missing '# schema:' header", line=1)
        found = f"{m.group(1)}/{m.group(2)}"
        if found != schema:
            raise SchemaError(f"{path.name}: expected schema {schema}, found {found}", line=1)
        nullable = NULLABLE_INT.get(path.name, ())
        try:
            frame = pd.read_csv(fh, dtype={c: "Int64" for c in nullable})
        except (ValueError, pd.errors.ParserError) as e:
            raise SchemaError(f"{path.name}: {e}") from None
    for col in REQUIRED_COLUMNS.get(path.name, ()):
        if col not in frame.columns:
            raise SchemaError(f"{path.name}: missing column", line=2, field=col)
    return frame


def write_world(out_dir, persons, encounters, observed, force=False):
    out_dir = Path(out_dir)
    targets = [out_dir / name for name in TRAJECTORY_FILES + OBSERVED_FILES]
    check_writable(targets, force)
    write_frame(persons, targets[0], TRAJECTORY_SCHEMA, force=True)
    write_frame(encounters, targets[1], TRAJECTORY_SCHEMA, force=True)
    write_frame(observed.persons, targets[2], OBSERVED_SCHEMA, force=True)
    write_frame(observed.encounters, targets[3], OBSERVED_SCHEMA, force=True)
    return targets


def read_truth(data_dir):
    data_dir = Path(data_dir)
    persons_path = data_dir / TRAJECTORY_FILES[0]
    if not persons_path.is_file():
        return None
    return read_frame(persons_path, TRAJECTORY_SCHEMA)


def read_observed(data_dir):
    data_dir = Path(data_dir)
    return ObservedData(read_frame(data_dir / OBSERVED_FILES[0], OBSERVED_SCHEMA),
                        read_frame(data_dir / OBSERVED_FILES[1], OBSERVED_SCHEMA))
