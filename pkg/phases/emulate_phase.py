import os
import json
import logging
from pathlib import Path

import pandas as pd

from utils.design_engine import DesignSpec, build_cohort
from utils.estimation import (
    Method, Scale, censor_weights, clone_expand, estimate_effect, estimate_records, estimates_table,
)
from utils.flatfiles import COHORT_SCHEMA, ESTIMATES_SCHEMA, check_writable, read_observed, read_truth, write_frame
from utils.manifest import MANIFEST_NAME, RunManifest, digest
from utils.protocols import Contrast, load_protocol, protocol_to_mapping

ESTIMATES_FILE = "estimates.csv"
BASELINE_FILE = "cohort_baseline.csv"


def _data_manifest(data_dir):
    path = Path(data_dir) / MANIFEST_NAME
    if not path.is_file():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def run_emulate(data_dir, protocol_name, design_name, out_dir=None, force=False, method=None,
                scales=("RD", "RR"), n_boot=None, seed=0, stratify=None, composite=False, argv=()):
    out_dir = Path(out_dir or data_dir)
    check_writable([out_dir / ESTIMATES_FILE, out_dir / BASELINE_FILE, out_dir / MANIFEST_NAME], force)

    protocol = load_protocol(protocol_name)
    if stratify is not None:
        protocol = protocol.with_overrides(stratify_by_prior_use=stratify)
    design = DesignSpec(design_name)
    observed = read_observed(data_dir)
    truth = read_truth(data_dir)
    cohort = build_cohort(observed, design, protocol, truth=truth)

    if method is not None:
        methods = [Method(method)]
    else:
        methods = [Method.ITT_ANALOG]
        if protocol.contrast is Contrast.PER_PROTOCOL:
            methods.append(Method.PER_PROTOCOL)

    estimates = []
    for m in methods:
        data = censor_weights(clone_expand(cohort)) if m is Method.PER_PROTOCOL else cohort
        estimates.extend(estimate_effect(data, protocol, m, scales=[Scale(s) for s in scales],
                                         n_boot=n_boot, seed=seed, composite=composite, progress=True))

    immortal_total = int(cohort.immortal_weeks.sum())
    logging.info(f"Immortal person-weeks ({design.anchor.value}): {immortal_total}")
    print(estimates_table(estimates))

    upstream = _data_manifest(data_dir)
    manifest = RunManifest(
        command="emulate",
        params_digest=upstream.get("params_digest", ""),
        protocol_digest=digest(protocol_to_mapping(protocol)),
        designs=[design.anchor.value],
        master_seed=seed,
        argv=list(argv),
        params=upstream.get("params", {}),
    )
    manifest.add_output(write_frame(pd.DataFrame(estimate_records(estimates)), out_dir / ESTIMATES_FILE,
                                    ESTIMATES_SCHEMA, force=True))
    manifest.add_output(write_frame(cohort.baseline, out_dir / BASELINE_FILE, COHORT_SCHEMA, force=True))
    manifest.write(out_dir, force=True)
    logging.info(f"Estimates written to {os.path.abspath(out_dir / ESTIMATES_FILE)}")
    return estimates
