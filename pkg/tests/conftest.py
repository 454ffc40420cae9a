import pytest

from utils.observation_layer import observe_frames
from utils.protocols import load_protocol
from utils.scm_engine import WorldParams, simulate_world


@pytest.fixture
def fig3b_params():
    return WorldParams(
        scenario="FIG3B", n_persons=3000, seed=7,
        coef_u_on_s=1.5, coef_u_on_y=1.5, coef_a0_on_s=1.2, coef_a0_on_a1=3.0,
        coef_a0_on_y=0.3, coef_a1_on_y=0.5, intercept_a0=-0.5, intercept_a1=-2.0,
        baseline_loss_hazard=0.01,
    )


@pytest.fixture
def fig3b_world(fig3b_params):
    world = simulate_world(fig3b_params)
    persons, encounters = world.persons_frame(), world.encounters_frame()
    return world, persons, encounters, observe_frames(persons, encounters, fig3b_params.encounters)


@pytest.fixture
def decision_point():
    return load_protocol("decision_point")


@pytest.fixture
def stop_or_go():
    return load_protocol("stop_or_go")


@pytest.fixture
def chap():
    return load_protocol("chap")
