import json

import pytest

from utils.design_engine import Anchor
from utils.errors import ConfigError, ParameterDomainError
from utils.experiment import load_experiment
from utils.oracle import OracleKind, Population


@pytest.mark.parametrize("name", [
    "null_world_config", "fig3a_config", "fig3b_config", "fig3c_config", "prevalent_user_config",
])
def test_shipped_configs_load(name):
    experiment = load_experiment(name)
    assert experiment.name == name
    assert experiment.designs
    assert experiment.params.n_persons > 0


def test_module_values():
    experiment = load_experiment("fig3b_config")
    assert experiment.params.scenario.value == "FIG3B"
    assert experiment.params.coef_a0_on_s == 1.2
    assert experiment.designs == (Anchor.RETRO_END_OF_PREGNANCY, Anchor.PROSPECTIVE_FIRST_CONTACT,
                                  Anchor.FIRST_PRENATAL_VISIT)
    assert experiment.estimand.kind is OracleKind.DECISION_AT_ANCHOR
    assert experiment.estimand.mc_draws == 200_000
    assert experiment.include_naive


def test_stratify_override():
    assert load_experiment("prevalent_user_config").protocol.stratify_by_prior_use


def test_json_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "scenario": "FIG3C", "n_persons": 50, "seed": 4, "designs": ["4c", "FIRST_PRENATAL_VISIT"],
        "estimand": {"kind": "LATE", "target_population": "SURVIVORS_TO_ANCHOR"}, "n_repeats": 3,
        "confounders": ["prior_treatment"],
    }), encoding="utf-8")
    experiment = load_experiment(str(path))
    assert experiment.name == "run"
    assert experiment.designs == (Anchor.PROSPECTIVE_FIRST_CONTACT, Anchor.FIRST_PRENATAL_VISIT)
    assert experiment.estimand.target_population is Population.SURVIVORS_TO_ANCHOR
    assert experiment.protocol.confounders == ("prior_treatment",)
    assert experiment.n_repeats == 3


@pytest.mark.parametrize("doc, error", [
    ({"designs": ["4Z"]}, ConfigError),
    ({"designs": []}, ConfigError),
    ({"n_boot": -1}, ConfigError),
    ({"estimand": {"kind": "EARLY", "colour": 1}}, ConfigError),
    ({"coefficients": {"baseline_loss_hazard": 1.5}}, ParameterDomainError),
])
def test_invalid_json_config(tmp_path, doc, error):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(error):
        load_experiment(str(path))


def test_broken_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"n_persons": 10,\n', encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment(str(path))


def test_missing_module():
    with pytest.raises(ConfigError):
        load_experiment("no_such_config")


def test_upper_case_json_keys(tmp_path):
    path = tmp_path / "upper.json"
    path.write_text(json.dumps({"N_PERSONS": 40, "Designs": ["4D"], "N_BOOT": 0}), encoding="utf-8")
    experiment = load_experiment(str(path))
    assert experiment.params.n_persons == 40
    assert experiment.n_boot == 0
    assert experiment.n_repeats == 20


@pytest.mark.parametrize("doc, field", [
    ({"n_persons": "many"}, "n_persons"),
    ({"include_naive": 1}, "include_naive"),
    ({"designs": ["4D", "4Q"]}, "designs"),
    ({"colour": "blue"}, "colour"),
])
def test_json_config_error_names_field(tmp_path, doc, field):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ConfigError, match=field):
        load_experiment(str(path))


def test_json_config_must_be_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_experiment(str(path))
