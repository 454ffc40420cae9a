import os
import logging

from utils.flatfiles import write_world
from utils.manifest import RunManifest, digest
from utils.observation_layer import observe_frames
from utils.protocols import protocol_to_mapping
from utils.scm_engine import params_to_mapping, simulate_world


def run_simulate(experiment, out_dir=None, force=False, argv=()):
    out_dir = out_dir or experiment.output_dir
    params = experiment.params
    manifest = RunManifest(
        command="simulate",
        params_digest=digest(params_to_mapping(params)),
        protocol_digest=digest(protocol_to_mapping(experiment.protocol)),
        designs=[d.value for d in experiment.designs],
        master_seed=params.seed,
        argv=list(argv),
        params=params_to_mapping(params),
    )

    world = simulate_world(params)
    persons = world.persons_frame()
    encounters = world.encounters_frame()
    observed = observe_frames(persons, encounters, params.encounters)
    logging.info(f"{len(persons)} pregnancies simulated, {int(world.lost.sum())} losses, "
                 f"{len(observed)} observed")

    for path in write_world(out_dir, persons, encounters, observed, force=force):
        manifest.add_output(path)
    path = manifest.write(out_dir, force=force)
    logging.info(f"Data written to {os.path.abspath(out_dir)} (manifest {path.name})")
    return manifest
