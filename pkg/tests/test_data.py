import json

import numpy as np
import pytest

from tensorgep.data import (DIMENSIONLESS, DataError, Dataset, DimVector, SchemaError, TensorField,
                            component_columns, dataset_schema, load_dataset, save_dataset, subsample)


def small_dataset(n=5, d=2):
    rng = np.random.default_rng(0)
    return Dataset.from_arrays(
        scalars={"a": (rng.normal(size=n), {"L": 1})},
        tensors={"X": (rng.normal(size=(n, d, d)), {"M": 1}), "I": ("identity", None)},
        target=("Y", rng.normal(size=(n, d, d)), {"M": 1, "L": 1}),
    )


def test_dimvector_algebra():
    e = DimVector((1, 1, -3, -1, 0, 0, 0))
    assert (e + e).exponents == (2, 2, -6, -2, 0, 0, 0)
    assert (e - e) == DIMENSIONLESS
    assert DimVector.of(M=1, L=-1, T=-2).exponents == (1, -1, -2, 0, 0, 0, 0)
    assert DIMENSIONLESS.dimensionless


@pytest.mark.parametrize("bad", [(1, 2, 3), (0.5, 0, 0, 0, 0, 0, 0), (True,) + (0,) * 6])
def test_dimvector_rejects(bad):
    with pytest.raises(ValueError):
        DimVector(bad)


def test_identity_field():
    eye = TensorField.eye("I", 4, 3)
    assert eye.values.shape == (4, 3, 3)
    assert np.array_equal(eye.values[2], np.eye(3))
    assert eye.dim == DIMENSIONLESS


def test_dataset_rejects_mismatched_rows():
    with pytest.raises(DataError):
        Dataset.from_arrays({"a": (np.ones(3), None)}, {}, ("Y", np.ones((4, 2, 2)), None))


def test_dataset_rejects_name_clash():
    with pytest.raises(SchemaError):
        Dataset.from_arrays({"Y": (np.ones(4), None)}, {}, ("Y", np.ones((4, 2, 2)), None))


def test_component_columns():
    assert component_columns("S", 2) == ["S_11", "S_12", "S_21", "S_22"]


def test_round_trip(tmp_path):
    ds = small_dataset()
    save_dataset(ds, tmp_path / "d.csv", tmp_path / "s.json")
    back = load_dataset(tmp_path / "d.csv", tmp_path / "s.json")
    assert np.array_equal(back.scalars["a"].values, ds.scalars["a"].values)
    assert np.array_equal(back.tensors["X"].values, ds.tensors["X"].values)
    assert np.array_equal(back.tensors["I"].values, ds.tensors["I"].values)
    assert np.array_equal(back.target.values, ds.target.values)
    assert back.target.dim == ds.target.dim
    assert dataset_schema(back) == dataset_schema(ds)


def test_bad_cell_names_row_and_column(tmp_path):
    ds = small_dataset()
    save_dataset(ds, tmp_path / "d.csv", tmp_path / "s.json")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    cells = lines[3].split(",")
    cells[0] = "oops"
    lines[3] = ",".join(cells)
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError) as err:
        load_dataset(tmp_path / "d.csv", tmp_path / "s.json")
    assert "oops" in str(err.value) or "row" in str(err.value)


def test_fractional_exponent_rejected(tmp_path):
    ds = small_dataset()
    save_dataset(ds, tmp_path / "d.csv", tmp_path / "s.json")
    schema = json.loads((tmp_path / "s.json").read_text())
    schema["scalars"][0]["dim"] = [0.5, 0, 0, 0, 0, 0, 0]
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "d.csv", schema)


def test_malformed_schema_reports_position(tmp_path):
    (tmp_path / "s.json").write_text('{"n_dim": 2,\n  "target": }')
    (tmp_path / "d.csv").write_text("a\n1\n")
    with pytest.raises(SchemaError, match=r":2:"):
        load_dataset(tmp_path / "d.csv", tmp_path / "s.json")


def test_subsample_is_seeded_and_ordered():
    ds = small_dataset(n=20)
    a, b = subsample(ds, 7, 5), subsample(ds, 7, 5)
    assert np.array_equal(a.target.values, b.target.values)
    rows = [int(np.nonzero(ds.scalars["a"].values == v)[0][0]) for v in a.scalars["a"].values]
    assert rows == sorted(rows)
    with pytest.raises(ValueError):
        subsample(ds, 0, 1)
    with pytest.raises(ValueError):
        subsample(ds, 21, 1)
