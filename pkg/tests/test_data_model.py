import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secoda.data_model import (
    MISSING,
    CSVFormatError,
    Dataset,
    Kind,
    LabeledDataset,
    Schema,
    SchemaError,
    infer_schema,
    load_csv,
    min_ranks,
    read_labels,
    read_scores,
    write_csv,
    write_labels,
    write_scores,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_missing_is_singleton_and_falsy():
    assert not MISSING
    assert repr(MISSING) == "MISSING"
    assert MISSING is type(MISSING)()


def test_schema_rejects_duplicates_and_empty():
    with pytest.raises(SchemaError):
        Schema.of()
    with pytest.raises(SchemaError):
        Schema.from_json('{"attributes":[{"name":"a","kind":"numerical"},{"name":"a","kind":"categorical"}]}')


def test_schema_json_round_trip(tmp_path):
    s = Schema.of(x="numerical", color="categorical")
    assert Schema.from_json(s.to_json()) == s
    s.save(tmp_path / "s.json")
    assert Schema.load(tmp_path / "s.json") == s
    assert s.kind("color") is Kind.CATEGORICAL


def test_infer_schema_rules():
    s = infer_schema(["x", "y", "color"], ["1.0,2,red"])
    assert [a.kind for a in s.attributes] == [Kind.NUMERICAL, Kind.NUMERICAL, Kind.CATEGORICAL]
    assert infer_schema(["v"], [["1"], ["2"], ["NA"]], {"NA"}).kind("v") is Kind.NUMERICAL
    assert infer_schema(["v"], [["1"], ["2"], ["two"]]).kind("v") is Kind.CATEGORICAL


def test_load_csv_basic(tmp_path):
    p = write(tmp_path, "x,c\n1,a\n,b\n3.5,NA\n")
    d = load_csv(p)
    assert d.n == 3
    assert list(d.case_ids) == [0, 1, 2]
    assert d.cell(1, "x") is MISSING
    assert d.cell(2, "c") is MISSING
    assert d.cell(2, "x") == 3.5


def test_load_csv_errors_name_location(tmp_path):
    p = write(tmp_path, "x,c\n1,a\n2\n")
    with pytest.raises(CSVFormatError) as e:
        load_csv(p)
    assert e.value.line == 3
    schema = Schema.of(x="numerical", c="categorical")
    p = write(tmp_path, "x,c\n1,a\nabc,b\n")
    with pytest.raises(CSVFormatError) as e:
        load_csv(p, schema)
    assert (e.value.line, e.value.column) == (3, "x")


def test_load_csv_rejects_non_finite(tmp_path):
    p = write(tmp_path, "x\n1\ninf\n")
    with pytest.raises(CSVFormatError):
        load_csv(p, Schema.of(x="numerical"))


def test_custom_missing_tokens(tmp_path):
    p = write(tmp_path, "x\n1\n?\n2\n")
    d = load_csv(p, missing_tokens={"?"})
    assert d.schema.kind("x") is Kind.NUMERICAL
    assert d.cell(1, "x") is MISSING


def test_dataset_immutable():
    d = Dataset.from_rows(Schema.of(x="numerical"), [[1.0], [2.0]])
    with pytest.raises(ValueError):
        d.column("x").values[0] = 5


def test_from_arrays_matches_from_rows():
    s = Schema.of(x="numerical", c="categorical")
    a = Dataset.from_arrays(s, {"x": [1.0, np.nan, 3.0], "c": ["u", None, "v"]})
    b = Dataset.from_rows(s, [[1.0, "u"], [None, MISSING], [3.0, "v"]])
    assert a == b


def test_take_renumbers():
    d = Dataset.from_rows(Schema.of(x="numerical"), [[0.0], [1.0], [2.0]])
    assert d.take([2, 0]).rows() == [(2.0,), (0.0,)]


def test_write_scores_examples(tmp_path):
    p = tmp_path / "s.csv"
    write_scores([99.0, 1.0], p)
    assert p.read_text().splitlines() == ["case_id,aas,rank", "0,99,2", "1,1,1"]
    assert read_scores(p) == {0: 99.0, 1: 1.0}
    with pytest.raises(ValueError):
        write_scores([], p)


def test_min_rank_ties():
    assert list(min_ranks([1, 1, 5])) == [1, 1, 3]


def test_labels_round_trip(tmp_path):
    d = Dataset.from_rows(Schema.of(x="numerical"), [[0.0], [1.0], [2.0]])
    lab = LabeledDataset(d, ("normal", "I", "normal"))
    write_labels(lab, tmp_path / "l.csv")
    assert read_labels(tmp_path / "l.csv") == {0: "normal", 1: "I", 2: "normal"}
    assert list(lab.anomaly_ids()) == [1]
    with pytest.raises(ValueError):
        LabeledDataset(d, ("normal", "V", "normal"))


cells = st.one_of(
    st.none(),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
)
cats = st.one_of(st.none(), st.text(alphabet="abc,\" x", min_size=1, max_size=4).filter(lambda t: t.strip() not in ("NA",) and t != ""))


@given(st.lists(st.tuples(cells, cats), min_size=1, max_size=30))
def test_csv_round_trip(tmp_path_factory, rows):
    schema = Schema.of(x="numerical", c="categorical")
    d = Dataset.from_rows(schema, rows)
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, p)
    assert load_csv(p, schema) == d


@given(st.lists(st.lists(st.sampled_from(["1", "2.5", "x", "", "NA", "-3e2"]), min_size=3, max_size=3), max_size=20))
def test_schema_inference_deterministic(rows):
    header = ["a", "b", "c"]
    assert infer_schema(header, rows) == infer_schema(header, [list(r) for r in rows])


def test_negative_zero_and_extremes_round_trip(tmp_path):
    schema = Schema.of(x="numerical")
    vals = [[-0.0], [5e-324], [1.7976931348623157e308], [0.1 + 0.2]]
    d = Dataset.from_rows(schema, vals)
    write_csv(d, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", schema)
    assert [r[0] for r in back.rows()] == [v[0] for v in vals]
    assert math.copysign(1, back.cell(0, "x")) == -1
