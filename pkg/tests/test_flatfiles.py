import pandas as pd
import pytest

from utils.errors import OverwriteRefusedError, SchemaError
from utils.flatfiles import (
    ESTIMATES_SCHEMA, OBSERVED_SCHEMA, read_frame, read_observed, write_frame, write_world,
)
from utils.manifest import MANIFEST_NAME, RunManifest, digest, file_digest


def test_header_and_float_format(tmp_path):
    path = write_frame(pd.DataFrame({"a": [1, 2], "b": [0.1, 1 / 3]}), tmp_path / "x.csv", ESTIMATES_SCHEMA)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# schema: estimates/1"
    assert lines[1] == "a,b"
    assert lines[3] == "2,0.33333333333333331"


def test_overwrite_refused(tmp_path):
    frame = pd.DataFrame({"a": [1]})
    write_frame(frame, tmp_path / "x.csv", ESTIMATES_SCHEMA)
    with pytest.raises(OverwriteRefusedError):
        write_frame(frame, tmp_path / "x.csv", ESTIMATES_SCHEMA)
    write_frame(frame, tmp_path / "x.csv", ESTIMATES_SCHEMA, force=True)


def test_wrong_schema(tmp_path):
    write_frame(pd.DataFrame({"a": [1]}), tmp_path / "x.csv", ESTIMATES_SCHEMA)
    with pytest.raises(SchemaError) as info:
        read_frame(tmp_path / "x.csv", OBSERVED_SCHEMA)
    assert info.value.line == 1


def test_missing_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_frame(tmp_path / "x.csv", ESTIMATES_SCHEMA)


def test_missing_column(tmp_path, fig3b_world):
    _, _, _, observed = fig3b_world
    path = write_frame(observed.persons.drop(columns="end_type"), tmp_path / "observed_persons.csv",
                       OBSERVED_SCHEMA)
    with pytest.raises(SchemaError) as info:
        read_frame(path, OBSERVED_SCHEMA)
    assert info.value.field == "end_type"


def test_observed_files_keep_nullable_weeks(tmp_path, fig3b_world):
    _, persons, encounters, observed = fig3b_world
    write_world(tmp_path, persons, encounters, observed)
    back = read_observed(tmp_path)
    assert back.persons["first_prenatal_week"].dtype == "Int64"
    assert back.persons["first_prenatal_week"].isna().sum() == observed.persons["first_prenatal_week"].isna().sum()
    assert len(back.encounters) == len(observed.encounters)
    with pytest.raises(OverwriteRefusedError):
        write_world(tmp_path, persons, encounters, observed)


class TestManifest:
    def test_digest_ignores_key_order(self):
        assert digest({"a": 1, "b": [1, 2]}) == digest({"b": [1, 2], "a": 1})
        assert digest({"a": 1}) != digest({"a": 2})

    def test_write(self, tmp_path):
        data = tmp_path / "x.csv"
        data.write_text("1\n", encoding="utf-8")
        manifest = RunManifest(command="simulate", master_seed=3)
        manifest.add_output(data)
        path = manifest.write(tmp_path)
        assert path.name == MANIFEST_NAME
        assert manifest.outputs == {"x.csv": file_digest(data)}
        assert manifest.finished_at
        with pytest.raises(OverwriteRefusedError):
            manifest.write(tmp_path)
