"""CSV ingestion, feature schema, one-hot/min-max encoding and splitting."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

SCHEMA_FORMAT_VERSION = 1
NUMERIC = "numeric"
CATEGORICAL = "categorical"
TARGET = "target"
DROP = "drop"

_OPS = {
    "==": operator.eq, "!=": operator.ne,
    "<": operator.lt, "<=": operator.le,
    ">": operator.gt, ">=": operator.ge,
}


class SchemaError(ValueError):
    pass


class EncodingError(ValueError):
    def __init__(self, feature: str, value):
        self.feature = feature
        self.value = value
        super().__init__(f"feature {feature!r}: value {value!r} is not a known category")


# --------------------------------------------------------------------------
# dataset configuration

@dataclass(frozen=True)
class RowFilter:
    column: str
    op: str
    value: float | str

    def keep(self, row: Mapping[str, str]) -> bool:
        raw = row.get(self.column, "")
        if isinstance(self.value, str):
            return _OPS[self.op](raw, self.value)
        try:
            return _OPS[self.op](float(raw), float(self.value))
        except ValueError:
            # empty or non-numeric cell never satisfies a numeric filter
            return False


@dataclass(frozen=True)
class DatasetConfig:
    """Declarative description of a CSV: how each column is used."""

    name: str
    columns: dict[str, str]
    target_column: str
    positive_label: str
    protected: tuple[str, ...] = ()
    missing_values: tuple[str, ...] = ("",)
    filters: tuple[RowFilter, ...] = ()
    unlisted: str = "error"
    labels: dict[str, str] = field(default_factory=dict)

    @property
    def feature_columns(self) -> list[str]:
        return [c for c, k in self.columns.items() if k in (NUMERIC, CATEGORICAL)]

    def label_of(self, column: str) -> str:
        """Human-readable name of a column (e.g. 'education level')."""
        return self.labels.get(column, column)

    def column_for(self, name: str) -> str:
        """Inverse of :meth:`label_of`; accepts either spelling."""
        for col, lab in self.labels.items():
            if lab == name:
                return col
        return name

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        columns = dict(d["columns"])
        bad = {k for k in columns.values() if k not in (NUMERIC, CATEGORICAL, TARGET, DROP)}
        if bad:
            raise SchemaError(f"unknown column kinds {sorted(bad)}")
        targets = [c for c, k in columns.items() if k == TARGET]
        if len(targets) != 1:
            raise SchemaError(f"exactly one target column required, got {targets}")
        protected = tuple(d.get("protected", ()))
        for p in protected:
            if columns.get(p) not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"protected feature {p!r} is not a feature column")
        unlisted = d.get("unlisted", "error")
        if unlisted not in ("error", DROP):
            raise SchemaError(f"'unlisted' must be 'error' or 'drop', got {unlisted!r}")
        return cls(
            name=d["name"],
            columns=columns,
            target_column=targets[0],
            positive_label=str(d["positive_label"]),
            protected=protected,
            missing_values=tuple(d.get("missing_values", ("",))),
            filters=tuple(RowFilter(**f) for f in d.get("filters", ())),
            unlisted=unlisted,
            labels=dict(d.get("labels", {})),
        )

    @classmethod
    def load(cls, path) -> "DatasetConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# ingestion

@dataclass
class Dataset:
    """Cleaned samples (raw feature values) with binary labels."""

    samples: list[dict]
    labels: np.ndarray
    counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def subset(self, idx: Sequence[int]) -> "Dataset":
        return Dataset([self.samples[i] for i in idx], self.labels[np.asarray(idx, dtype=int)])


def read_csv(path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a headered CSV into dicts.  Duplicate header names keep the first column."""
    path = Path(path)
    with path.open(newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        keep = {}
        for i, name in enumerate(header):
            keep.setdefault(name, i)
        rows = [{name: rec[i] if i < len(rec) else "" for name, i in keep.items()}
                for rec in reader if rec]
    return list(keep), rows


def prepare(header: Sequence[str], rows: Iterable[Mapping[str, str]], config: DatasetConfig) -> Dataset:
    """Apply filters, drop rows with missing values, parse features and labels."""
    missing_cols = [c for c in config.columns if c not in header]
    if missing_cols:
        raise SchemaError(f"config names columns absent from the table: {missing_cols}")
    unlisted = [c for c in header if c not in config.columns]
    if unlisted and config.unlisted == "error":
        raise SchemaError(f"columns not described by the config: {unlisted}")

    used = config.feature_columns + [config.target_column]
    missing = set(config.missing_values)
    samples, labels = [], []
    n_raw = n_filtered = n_missing = 0
    for row in rows:
        n_raw += 1
        if not all(f.keep(row) for f in config.filters):
            n_filtered += 1
            continue
        if any(row[c].strip() in missing for c in used):
            n_missing += 1
            continue
        s = {}
        for c in config.feature_columns:
            v = row[c].strip()
            s[c] = float(v) if config.columns[c] == NUMERIC else v
        samples.append(s)
        labels.append(1 if row[config.target_column].strip() == config.positive_label else 0)
    if not samples:
        raise SchemaError(f"dataset {config.name!r}: no rows left after cleaning")
    counts = {"raw": n_raw, "kept": len(samples), "dropped": n_raw - len(samples),
              "dropped_by_filter": n_filtered, "dropped_missing": n_missing}
    log.info("%s: kept %d of %d rows (%d filtered, %d with missing values)",
             config.name, len(samples), n_raw, n_filtered, n_missing)
    return Dataset(samples, np.asarray(labels, dtype=np.int64), counts)


def load_dataset(csv_path, config: DatasetConfig) -> Dataset:
    header, rows = read_csv(csv_path)
    return prepare(header, rows, config)


# --------------------------------------------------------------------------
# schema

@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    min: float | None = None
    max: float | None = None
    categories: tuple[str, ...] = ()
    protected: bool = False

    @property
    def width(self) -> int:
        return 1 if self.kind == NUMERIC else len(self.categories)


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    target: str
    positive_label: str
    offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in {names}")
        offs, o = [], 0
        for f in self.features:
            if f.kind == CATEGORICAL and len(f.categories) < 2:
                raise SchemaError(f"categorical feature {f.name!r} needs >= 2 categories")
            if f.kind == NUMERIC and not f.min < f.max:
                raise SchemaError(f"numeric feature {f.name!r} is constant (min=max={f.min})")
            offs.append(o)
            o += f.width
        object.__setattr__(self, "offsets", tuple(offs))

    @property
    def encoded_dim(self) -> int:
        return sum(f.width for f in self.features)

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(f"no feature named {name!r}")

    def slot_range(self, name: str) -> slice:
        for f, o in zip(self.features, self.offsets):
            if f.name == name:
                return slice(o, o + f.width)
        raise KeyError(f"no feature named {name!r}")

    def categorical_groups(self) -> list[slice]:
        return [slice(o, o + f.width) for f, o in zip(self.features, self.offsets)
                if f.kind == CATEGORICAL]

    def numeric_slots(self) -> list[int]:
        return [o for f, o in zip(self.features, self.offsets) if f.kind == NUMERIC]

    @property
    def protected(self) -> list[str]:
        return [f.name for f in self.features if f.protected]

    def column_names(self) -> list[str]:
        """One header per encoded slot, e.g. ``age`` or ``race=White``."""
        out = []
        for f in self.features:
            if f.kind == NUMERIC:
                out.append(f.name)
            else:
                out.extend(f"{f.name}={c}" for c in f.categories)
        return out

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d = {"name": f.name, "kind": f.kind, "protected": f.protected}
            if f.kind == NUMERIC:
                d.update(min=f.min, max=f.max)
            else:
                d["categories"] = list(f.categories)
            feats.append(d)
        return {"version": SCHEMA_FORMAT_VERSION, "target": self.target,
                "positive_label": self.positive_label, "encoded_dim": self.encoded_dim,
                "features": feats}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        if d.get("version") != SCHEMA_FORMAT_VERSION:
            raise SchemaError(f"unsupported schema version {d.get('version')!r}")
        feats = tuple(FeatureSpec(name=f["name"], kind=f["kind"], min=f.get("min"),
                                  max=f.get("max"), categories=tuple(f.get("categories", ())),
                                  protected=f.get("protected", False))
                      for f in d["features"])
        return cls(feats, d["target"], d["positive_label"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def fit_schema(samples: Sequence[Mapping], config: DatasetConfig,
               categories_from: Sequence[Mapping] | None = None) -> FeatureSchema:
    """Numeric ranges from ``samples``; category vocabularies from ``categories_from``
    (defaults to ``samples``), sorted lexicographically."""
    if not samples:
        raise SchemaError("cannot fit a schema on an empty table")
    vocab_rows = samples if categories_from is None else categories_from
    feats = []
    for col in config.feature_columns:
        prot = col in config.protected
        if config.columns[col] == NUMERIC:
            vals = [float(s[col]) for s in samples]
            feats.append(FeatureSpec(col, NUMERIC, min=min(vals), max=max(vals), protected=prot))
        else:
            cats = tuple(sorted({str(s[col]) for s in vocab_rows}))
            feats.append(FeatureSpec(col, CATEGORICAL, categories=cats, protected=prot))
    return FeatureSchema(tuple(feats), config.target_column, config.positive_label)


def encode(schema: FeatureSchema, sample: Mapping) -> np.ndarray:
    x = np.zeros(schema.encoded_dim)
    for f, o in zip(schema.features, schema.offsets):
        v = sample[f.name]
        if f.kind == NUMERIC:
            x[o] = (float(v) - f.min) / (f.max - f.min)
        else:
            try:
                x[o + f.categories.index(str(v))] = 1.0
            except ValueError:
                raise EncodingError(f.name, v) from None
    return x


def encode_many(schema: FeatureSchema, samples: Sequence[Mapping]) -> np.ndarray:
    X = np.zeros((len(samples), schema.encoded_dim))
    for i, s in enumerate(samples):
        X[i] = encode(schema, s)
    return X


@dataclass
class DecodedSample:
    values: dict
    slots: dict = field(default_factory=dict)


def decode(schema: FeatureSchema, vector) -> DecodedSample:
    """Map an encoded vector back to raw units; categories by argmax (lowest index on ties)."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (schema.encoded_dim,):
        raise SchemaError(f"vector length {v.shape} does not match encoded_dim {schema.encoded_dim}")
    values, slots = {}, {}
    for f, o in zip(schema.features, schema.offsets):
        if f.kind == NUMERIC:
            values[f.name] = f.min + v[o] * (f.max - f.min)
        else:
            g = v[o:o + f.width]
            values[f.name] = f.categories[int(np.argmax(g))]
            slots[f.name] = g.copy()
    return DecodedSample(values, slots)


def decode_numeric(schema: FeatureSchema, X: np.ndarray, name: str) -> np.ndarray:
    """Column of raw-unit values for numeric feature ``name`` across rows of ``X``."""
    f = schema.feature(name)
    if f.kind != NUMERIC:
        raise SchemaError(f"{name!r} is not numeric")
    return f.min + X[:, schema.slot_range(name).start] * (f.max - f.min)


def split(data, test_fraction: float, seed: int):
    """Seeded shuffle split into ``(train, test)``.  Works on lists and :class:`Dataset`."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(data)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"degenerate split: {n} rows with test_fraction={test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    if isinstance(data, Dataset):
        return data.subset(train_idx), data.subset(test_idx)
    return [data[i] for i in train_idx], [data[i] for i in test_idx]
