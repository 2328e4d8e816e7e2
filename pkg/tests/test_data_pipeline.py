import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA
from lucid.data_pipeline import (CATEGORICAL, NUMERIC, Dataset, DatasetConfig, EncodingError,
                                 FeatureSchema, FeatureSpec, SchemaError, decode, encode,
                                 encode_many, fit_schema, load_dataset, prepare, read_csv, split)
from lucid.report import _resolve_dataset_config


def cfg(columns, **kw):
    d = {"name": "t", "columns": columns, "positive_label": "1"}
    d.update(kw)
    return DatasetConfig.from_dict(d)


def bundled(name):
    return DatasetConfig.load(_resolve_dataset_config(name, DATA))


# ---------------------------------------------------------------- fit_schema

def test_numeric_range_from_data():
    c = cfg({"x": "numeric", "y": "target"})
    s = fit_schema([{"x": 10.0}, {"x": 30.0}, {"x": 20.0}], c)
    assert (s.features[0].min, s.features[0].max) == (10.0, 30.0)


def test_categories_sorted_distinct():
    c = cfg({"c": "categorical", "y": "target"})
    s = fit_schema([{"c": "b"}, {"c": "a"}, {"c": "b"}], c)
    assert s.features[0].categories == ("a", "b")
    assert s.encoded_dim == 2


def test_fit_schema_errors():
    c = cfg({"x": "numeric", "y": "target"})
    with pytest.raises(SchemaError):
        fit_schema([], c)
    with pytest.raises(SchemaError):
        fit_schema([{"x": 1.0}, {"x": 1.0}], c)
    with pytest.raises(SchemaError):
        fit_schema([{"c": "a"}, {"c": "a"}], cfg({"c": "categorical", "y": "target"}))


def test_unknown_column_in_config_rejected():
    c = cfg({"x": "numeric", "ghost": "numeric", "y": "target"})
    with pytest.raises(SchemaError, match="ghost"):
        prepare(["x", "y"], [{"x": "1", "y": "1"}], c)


def test_unlisted_column_rejected_unless_dropped():
    rows = [{"x": "1", "z": "q", "y": "1"}, {"x": "2", "z": "r", "y": "0"}]
    with pytest.raises(SchemaError, match="z"):
        prepare(["x", "z", "y"], rows, cfg({"x": "numeric", "y": "target"}))
    ds = prepare(["x", "z", "y"], rows, cfg({"x": "numeric", "y": "target"}, unlisted="drop"))
    assert len(ds) == 2 and ds.labels.tolist() == [1, 0]


def test_missing_values_dropped_and_counted():
    rows = [{"x": "1", "c": "a", "y": "1"}, {"x": "?", "c": "a", "y": "0"},
            {"x": "3", "c": "b", "y": "0"}]
    ds = prepare(["x", "c", "y"], rows, cfg({"x": "numeric", "c": "categorical", "y": "target"},
                                            missing_values=["?"]))
    assert ds.counts == {"raw": 3, "kept": 2, "dropped": 1, "dropped_by_filter": 0,
                         "dropped_missing": 1}


def test_filters():
    rows = [{"d": "-31", "y": "1"}, {"d": "5", "y": "1"}, {"d": "", "y": "0"}, {"d": "30", "y": "0"}]
    c = cfg({"d": "numeric", "y": "target"},
            filters=[{"column": "d", "op": ">=", "value": -30}, {"column": "d", "op": "<=", "value": 30}])
    ds = prepare(["d", "y"], rows, c)
    assert [s["d"] for s in ds.samples] == [5.0, 30.0]


def test_adult_encoded_dim_matches_independent_count():
    c = bundled("adult")
    ds = load_dataset(DATA / "adult.csv", c)
    s = fit_schema(ds.samples, c)
    # independent recount straight from the CSV
    with open(DATA / "adult.csv", newline="") as f:
        rows = [r for r in csv.DictReader(f) if "?" not in r.values()]
    cats = ["workclass", "education", "marital-status", "occupation", "relationship",
            "race", "sex", "native-country"]
    expected = 6 + sum(len({r[k] for r in rows}) for k in cats)
    assert s.encoded_dim == expected == 104
    assert len(ds) == len(rows) == 30162


def test_compas_standard_filter_row_count():
    ds = load_dataset(DATA / "compas-scores-two-years.csv", bundled("compas"))
    assert len(ds) == 6172


def test_read_csv_keeps_first_duplicate_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,a\n1,2,3\n")
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows == [{"a": "1", "b": "2"}]


def test_schema_json_round_trip(tiny_schema):
    back = FeatureSchema.from_dict(json.loads(tiny_schema.to_json()))
    assert back == tiny_schema
    assert back.fingerprint() == tiny_schema.fingerprint()


def test_layout_covers_every_slot_once(tiny_schema):
    covered = []
    for f in tiny_schema.features:
        covered.extend(range(*tiny_schema.slot_range(f.name).indices(tiny_schema.encoded_dim)))
    assert covered == list(range(tiny_schema.encoded_dim))
    assert len(tiny_schema.column_names()) == tiny_schema.encoded_dim


# ---------------------------------------------------------------- encode / decode

def test_encode_examples(tiny_schema):
    x = encode(tiny_schema, {"age": 50, "color": "b", "hours": 10, "sex": "M"})
    np.testing.assert_array_equal(x, [0.5, 0, 1, 0, 0.0, 0, 1])
    assert encode(tiny_schema, {"age": 100, "color": "a", "hours": 50, "sex": "F"})[[0, 4]].tolist() == [1.0, 1.0]


def test_encode_out_of_vocabulary(tiny_schema):
    with pytest.raises(EncodingError) as e:
        encode(tiny_schema, {"age": 1, "color": "z", "hours": 20, "sex": "M"})
    assert e.value.feature == "color" and e.value.value == "z"


def test_decode_extrapolates_and_argmaxes(tiny_schema):
    d = decode(tiny_schema, [1.2, 0.2, 0.7, 0.1, -0.5, 0.5, 0.5])
    assert d.values["age"] == pytest.approx(120.0)
    assert d.values["hours"] == pytest.approx(-10.0)
    assert d.values["color"] == "b"
    assert d.values["sex"] == "F"  # tie -> lowest index
    np.testing.assert_array_equal(d.slots["color"], [0.2, 0.7, 0.1])


samples = st.fixed_dictionaries({
    "age": st.floats(0, 100), "color": st.sampled_from("abc"),
    "hours": st.floats(10, 50), "sex": st.sampled_from(["F", "M"]),
})


@given(samples)
def test_round_trip_and_one_hot_soundness(tiny_schema, s):
    x = encode(tiny_schema, s)
    assert np.all((x[[0, 4]] >= 0) & (x[[0, 4]] <= 1))
    for g in tiny_schema.categorical_groups():
        assert sorted(x[g].tolist()) == [0.0] * (g.stop - g.start - 1) + [1.0]
    d = decode(tiny_schema, x)
    assert d.values["age"] == pytest.approx(s["age"], abs=1e-9)
    assert d.values["hours"] == pytest.approx(s["hours"], abs=1e-9)
    assert d.values["color"] == s["color"] and d.values["sex"] == s["sex"]
    assert encode(tiny_schema, s).tobytes() == x.tobytes()


@given(samples, samples)
def test_encode_injective(tiny_schema, a, b):
    if a != b:
        assert not np.array_equal(encode(tiny_schema, a), encode(tiny_schema, b))


def test_training_numerics_scaled_into_unit_interval():
    c = bundled("compas")
    ds = load_dataset(DATA / "compas-scores-two-years.csv", c)
    tr, _ = split(ds, 0.2, 0)
    s = fit_schema(tr.samples, c)
    X = encode_many(s, tr.samples)
    num = X[:, s.numeric_slots()]
    assert num.min() == 0.0 and num.max() == 1.0


# ---------------------------------------------------------------- split

def test_split_sizes_and_partition():
    rows = list(range(10))
    tr, te = split(rows, 0.2, seed=1)
    assert len(tr) == 8 and len(te) == 2
    assert sorted(tr + te) == rows


def test_split_deterministic():
    rows = list(range(100))
    assert split(rows, 0.3, 9) == split(rows, 0.3, 9)
    assert split(rows, 0.3, 9) != split(rows, 0.3, 10)


def test_split_dataset_keeps_labels_aligned():
    ds = Dataset([{"i": i} for i in range(20)], np.arange(20) % 2)
    tr, te = split(ds, 0.25, 3)
    for part in (tr, te):
        assert all(s["i"] % 2 == y for s, y in zip(part.samples, part.labels))


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 0.01])
def test_split_degenerate(frac):
    with pytest.raises(ValueError):
        split(list(range(10)), frac, 0)
