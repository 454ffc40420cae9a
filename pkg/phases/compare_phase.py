import os
import logging
from pathlib import Path

from utils.flatfiles import BIAS_LONG_SCHEMA, BIAS_SCHEMA, check_writable, write_frame
from utils.manifest import MANIFEST_NAME, RunManifest, digest
from utils.oracle import bias_table, bias_text
from utils.protocols import protocol_to_mapping
from utils.scm_engine import params_to_mapping

BIAS_FILE = "bias_table.csv"
BIAS_LONG_FILE = "bias_long.csv"
BIAS_TEXT_FILE = "bias_table.txt"


def run_compare(experiment, designs=None, n_repeats=None, out_dir=None, force=False, workers=1, argv=()):
    out_dir = Path(out_dir or experiment.output_dir)
    outputs = [out_dir / BIAS_FILE, out_dir / BIAS_LONG_FILE, out_dir / BIAS_TEXT_FILE, out_dir / MANIFEST_NAME]
    check_writable(outputs, force)

    designs = designs or experiment.designs
    n_repeats = experiment.n_repeats if n_repeats is None else n_repeats
    logging.info(f"Comparing designs {', '.join(str(getattr(d, 'value', d)) for d in designs)} "
                 f"over {n_repeats} repeats")

    table = bias_table(experiment.params, designs, experiment.protocol, experiment.estimand, n_repeats,
                       n_boot=experiment.n_boot, method=experiment.method,
                       include_naive=experiment.include_naive, workers=workers)
    text = bias_text(table.summary)
    print(text)

    manifest = RunManifest(
        command="compare",
        params_digest=digest(params_to_mapping(experiment.params)),
        protocol_digest=digest(protocol_to_mapping(experiment.protocol)),
        designs=sorted(table.summary["design"].unique().tolist()),
        master_seed=experiment.params.seed,
        argv=list(argv),
        params=params_to_mapping(experiment.params),
    )
    manifest.add_output(write_frame(table.summary, out_dir / BIAS_FILE, BIAS_SCHEMA, force=True))
    manifest.add_output(write_frame(table.long_format(), out_dir / BIAS_LONG_FILE, BIAS_LONG_SCHEMA, force=True))
    (out_dir / BIAS_TEXT_FILE).write_text(text + "\n", encoding="utf-8")
    manifest.add_output(out_dir / BIAS_TEXT_FILE)
    manifest.write(out_dir, force=True)
    logging.info(f"Bias table written to {os.path.abspath(out_dir / BIAS_FILE)}")
    return table
