"""Physical quantities, dimension vectors and tabulated datasets.

A dataset is a CSV table plus a JSON schema. The schema names every
terminal, groups tensor components (row-major), and attaches a dimension
vector of the seven SI base exponents ``(M, L, T, I, Theta, N, J)``.

Example schema::

    {
      "n_dim": 3,
      "scalars": [{"name": "eps0", "column": "eps0", "dim": {"M": -1, "L": -3, "T": 4, "I": 2}}],
      "tensors": [{"name": "E_iE_j", "columns": ["EE_11", "EE_12", ...], "dim": [2, 2, -6, -2, 0, 0, 0]},
                  {"name": "delta_ij", "identity": true}],
      "target": {"name": "T_ij", "columns": ["T_11", ...], "dim": [1, -1, -2, 0, 0, 0, 0]}
    }
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

BASE_DIMENSIONS = ("M", "L", "T", "I", "Theta", "N", "J")


class SchemaError(ValueError):
    """The schema is malformed or does not match the data table."""


class DataError(ValueError):
    """A data cell is missing, non-numeric or non-finite."""


@dataclass(frozen=True)
class DimVector:
    """Integer exponents of the SI base dimensions."""

    exponents: tuple[int, ...] = (0,) * 7

    def __post_init__(self):
        exps = tuple(self.exponents)
        if len(exps) != 7:
            raise ValueError(f"a dimension vector needs 7 exponents, got {len(exps)}")
        for e in exps:
            if isinstance(e, bool) or not float(e).is_integer():
                raise ValueError(f"dimension exponents must be integers, got {e!r}")
        object.__setattr__(self, "exponents", tuple(int(e) for e in exps))

    @classmethod
    def of(cls, **powers: int) -> DimVector:
        """Build from keyword exponents, e.g. ``DimVector.of(M=1, L=-1, T=-2)``."""
        unknown = set(powers) - set(BASE_DIMENSIONS)
        if unknown:
            raise ValueError(f"unknown base dimensions: {sorted(unknown)}")
        return cls(tuple(powers.get(b, 0) for b in BASE_DIMENSIONS))

    @classmethod
    def parse(cls, spec) -> DimVector:
        """Accept a 7-sequence, a ``{base: exponent}`` mapping or None (dimensionless)."""
        if spec is None:
            return cls()
        if isinstance(spec, DimVector):
            return spec
        if isinstance(spec, Mapping):
            return cls.of(**spec)
        return cls(tuple(spec))

    @classmethod
    def _raw(cls, exps: tuple) -> DimVector:
        # skips validation; callers pass 7 ints
        obj = object.__new__(cls)
        object.__setattr__(obj, "exponents", exps)
        return obj

    @property
    def dimensionless(self) -> bool:
        return not any(self.exponents)

    def __add__(self, other: DimVector) -> DimVector:
        return DimVector._raw(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __sub__(self, other: DimVector) -> DimVector:
        return DimVector._raw(tuple(a - b for a, b in zip(self.exponents, other.exponents)))

    def __neg__(self) -> DimVector:
        return DimVector._raw(tuple(-a for a in self.exponents))

    def __iter__(self):
        return iter(self.exponents)

    def as_dict(self) -> dict[str, int]:
        return {b: e for b, e in zip(BASE_DIMENSIONS, self.exponents) if e}

    def __str__(self):
        if self.dimensionless:
            return "[1]"
        return "[" + " ".join(f"{b}^{e}" for b, e in self.as_dict().items()) + "]"


DIMENSIONLESS = DimVector()


def _finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise DataError(f"field {name!r} contains NaN or infinite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    name: str
    values: np.ndarray
    dim: DimVector = DIMENSIONLESS

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        _finite(self.name, values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_data(self) -> int:
        return self.values.shape[0]

    def take(self, rows) -> ScalarField:
        return ScalarField(self.name, self.values[rows], self.dim)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Second-order tensor sampled at every data point, stored as ``(n_data, n_dim, n_dim)``.

    ``identity`` marks the synthetic Kronecker delta; its values are generated
    rather than read from columns.
    """

    name: str
    values: np.ndarray
    dim: DimVector = DIMENSIONLESS
    identity: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError(f"tensor {self.name!r} must have shape (n_data, n_dim, n_dim), got {values.shape}")
        if values.shape[1] not in (2, 3):
            raise ValueError(f"tensor {self.name!r}: n_dim must be 2 or 3")
        _finite(self.name, values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def eye(cls, name: str, n_data: int, n_dim: int) -> TensorField:
        return cls(name, np.broadcast_to(np.eye(n_dim), (n_data, n_dim, n_dim)).copy(),
                   DIMENSIONLESS, identity=True)

    @property
    def n_data(self) -> int:
        return self.values.shape[0]

    @property
    def n_dim(self) -> int:
        return self.values.shape[1]

    def component(self, i: int, j: int) -> np.ndarray:
        return self.values[:, i, j]

    def take(self, rows) -> TensorField:
        return TensorField(self.name, self.values[rows], self.dim, self.identity)


@dataclass(frozen=True, eq=False)
class Dataset:
    scalars: Mapping[str, ScalarField]
    tensors: Mapping[str, TensorField]
    target: TensorField
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "scalars", dict(self.scalars))
        object.__setattr__(self, "tensors", dict(self.tensors))
        n, d = self.target.n_data, self.target.n_dim
        names = list(self.scalars) + list(self.tensors)
        if len(set(names)) != len(names):
            raise SchemaError("terminal names must be unique across scalars and tensors")
        if self.target.name in names:
            raise SchemaError(f"target name {self.target.name!r} collides with a terminal")
        for f in self.scalars.values():
            if f.n_data != n:
                raise DataError(f"scalar {f.name!r} has {f.n_data} rows, target has {n}")
        for t in self.tensors.values():
            if t.n_data != n or t.n_dim != d:
                raise DataError(f"tensor {t.name!r} has shape {t.values.shape}, expected ({n}, {d}, {d})")

    @classmethod
    def from_arrays(cls, scalars: Mapping[str, tuple], tensors: Mapping[str, tuple],
                    target: tuple, meta=None) -> Dataset:
        """Convenience constructor: ``{name: (values, dim)}`` maps and ``(name, values, dim)``.

        A tensor entry whose values are the string ``"identity"`` becomes the
        synthetic Kronecker delta.
        """
        tname, tvalues, tdim = target
        tfield = TensorField(tname, tvalues, DimVector.parse(tdim))
        sf = {k: ScalarField(k, v, DimVector.parse(d)) for k, (v, d) in scalars.items()}
        tf = {}
        for k, (v, d) in tensors.items():
            if isinstance(v, str) and v == "identity":
                tf[k] = TensorField.eye(k, tfield.n_data, tfield.n_dim)
            else:
                tf[k] = TensorField(k, v, DimVector.parse(d))
        return cls(sf, tf, tfield, meta or {})

    @property
    def n_data(self) -> int:
        return self.target.n_data

    @property
    def n_dim(self) -> int:
        return self.target.n_dim

    def terminal_dim(self, name: str) -> DimVector:
        if name in self.scalars:
            return self.scalars[name].dim
        return self.tensors[name].dim

    def take(self, rows: Sequence[int]) -> Dataset:
        rows = np.asarray(rows, dtype=int)
        return Dataset({k: v.take(rows) for k, v in self.scalars.items()},
                       {k: v.take(rows) for k, v in self.tensors.items()},
                       self.target.take(rows), dict(self.meta))


def subsample(ds: Dataset, k: int, seed) -> Dataset:
    """Draw ``k`` rows uniformly without replacement; rows keep their original order."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= ds.n_data:
        raise ValueError(f"subsample size must be in [1, {ds.n_data}], got {k!r}")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(ds.n_data, size=int(k), replace=False))
    return ds.take(rows)


# -- file format ---------------------------------------------------------------

def component_columns(prefix: str, n_dim: int) -> list[str]:
    """Row-major column names ``prefix_11, prefix_12, ...``."""
    return [f"{prefix}_{i + 1}{j + 1}" for i in range(n_dim) for j in range(n_dim)]


def _parse_dim(entry: Mapping, where: str) -> DimVector:
    try:
        return DimVector.parse(entry.get("dim"))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad dimension vector: {exc}") from None


def read_schema(path) -> dict:
    path = Path(path)
    try:
        schema = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(schema, dict):
        raise SchemaError(f"{path}: schema must be a JSON object")
    return schema


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty data file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    return header, body


def load_dataset(path, schema) -> Dataset:
    """Load a CSV table using a schema (a mapping, or a path to a JSON schema file)."""
    path = Path(path)
    if not isinstance(schema, Mapping):
        schema = read_schema(schema)
    if not path.exists():
        raise FileNotFoundError(path)
    n_dim = schema.get("n_dim")
    if n_dim not in (2, 3):
        raise SchemaError("schema 'n_dim' must be 2 or 3")
    if "target" not in schema:
        raise SchemaError("schema has no 'target' entry")

    header, body = _read_table(path)
    index = {name: i for i, name in enumerate(header)}

    def column(name: str, where: str) -> np.ndarray:
        if name not in index:
            raise SchemaError(f"{where}: column {name!r} not found in {path.name}")
        c = index[name]
        out = np.empty(len(body))
        for r, row in enumerate(body):
            cell = row[c].strip() if c < len(row) else ""
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"{path.name}: row {r + 1}, column {name!r}: not a number: {cell!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{path.name}: row {r + 1}, column {name!r}: non-finite value {cell!r}")
            out[r] = value
        return out

    def tensor(entry: Mapping, where: str) -> TensorField:
        name = entry.get("name")
        if not name:
            raise SchemaError(f"{where}: missing 'name'")
        if entry.get("identity"):
            return TensorField.eye(name, len(body), n_dim)
        if "dim" not in entry:
            raise SchemaError(f"{where} {name!r}: missing 'dim'")
        cols = entry.get("columns") or component_columns(name, n_dim)
        if len(cols) != n_dim * n_dim:
            raise SchemaError(f"{where} {name!r}: expected {n_dim * n_dim} columns, got {len(cols)}")
        values = np.stack([column(c, f"{where} {name!r}") for c in cols], axis=1)
        return TensorField(name, values.reshape(-1, n_dim, n_dim), _parse_dim(entry, f"{where} {name!r}"))

    scalars = {}
    for entry in schema.get("scalars", []):
        name = entry.get("name")
        if not name:
            raise SchemaError("scalar entry missing 'name'")
        if "dim" not in entry:
            raise SchemaError(f"scalar {name!r}: missing 'dim'")
        scalars[name] = ScalarField(name, column(entry.get("column", name), f"scalar {name!r}"),
                                    _parse_dim(entry, f"scalar {name!r}"))
    tensors = {}
    for entry in schema.get("tensors", []):
        t = tensor(entry, "tensor")
        tensors[t.name] = t
    target = tensor(schema["target"], "target")
    if target.identity:
        raise SchemaError("the target cannot be the synthetic identity")
    return Dataset(scalars, tensors, target, dict(schema.get("meta", {})))


def _dim_list(d: DimVector) -> list[int]:
    return list(d.exponents)


def dataset_schema(ds: Dataset) -> dict:
    """The schema document describing how :func:`save_dataset` lays out ``ds``."""
    d = ds.n_dim
    tensors = []
    for t in ds.tensors.values():
        if t.identity:
            tensors.append({"name": t.name, "identity": True})
        else:
            tensors.append({"name": t.name, "columns": component_columns(t.name, d), "dim": _dim_list(t.dim)})
    schema = {
        "n_dim": d,
        "scalars": [{"name": s.name, "column": s.name, "dim": _dim_list(s.dim)} for s in ds.scalars.values()],
        "tensors": tensors,
        "target": {"name": ds.target.name, "columns": component_columns(ds.target.name, d),
                   "dim": _dim_list(ds.target.dim)},
    }
    if ds.meta:
        schema["meta"] = dict(ds.meta)
    return schema


def save_dataset(ds: Dataset, data_path, schema_path) -> None:
    """Write ``ds`` as CSV + JSON schema. Floats use ``repr`` so a reload is exact."""
    schema = dataset_schema(ds)
    header: list[str] = []
    columns: list[np.ndarray] = []
    for s in ds.scalars.values():
        header.append(s.name)
        columns.append(s.values)
    for t in list(ds.tensors.values()) + [ds.target]:
        if t.identity:
            continue
        for i in range(ds.n_dim):
            for j in range(ds.n_dim):
                header.append(f"{t.name}_{i + 1}{j + 1}")
                columns.append(t.values[:, i, j])
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(ds.n_data):
            w.writerow([repr(float(c[r])) for c in columns])
    Path(schema_path).write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
