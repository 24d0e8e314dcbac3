"""Artifact writers: formatting stability and field round trips."""

import json

import numpy as np

from perfhom import report


def test_fmt_fixed_format():
    assert report.fmt(True) == "true"
    assert report.fmt(np.bool_(False)) == "false"
    assert report.fmt(0.1) == format(0.1, ".17g")
    assert report.fmt("abc") == "abc"
    assert report.fmt(3) == "3"


def test_jsonable_numpy_types():
    obj = {"a": np.float64(1.5), "b": np.int32(2), "c": np.bool_(True),
           "d": np.arange(3), "e": [np.float64(0.25)], 7: "x"}
    out = report._jsonable(obj)
    assert out == {"a": 1.5, "b": 2, "c": True, "d": [0, 1, 2],
                   "e": [0.25], "7": "x"}
    json.dumps(out)  # must be serializable as-is


def test_write_json_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    payload = {"z": 1.0 / 3.0, "a": [1, 2, 3], "flag": np.bool_(True)}
    report.write_json(str(p1), payload)
    report.write_json(str(p2), dict(reversed(list(payload.items()))))
    assert p1.read_bytes() == p2.read_bytes()


def test_write_csv(tmp_path):
    p = tmp_path / "t.csv"
    report.write_csv(str(p), ["x", "ok"], [(0.5, True), (1.0, False)])
    lines = p.read_text().splitlines()
    assert lines[0] == "x,ok"
    assert lines[1] == "0.5,true"
    assert lines[2] == "1,false"


def test_field_round_trip(tmp_path):
    base = str(tmp_path / "fields" / "u")
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((4, 5, 6))
    report.save_field(base, arr, {"eps": 0.5})
    back, side = report.load_field(base)
    assert (back == arr).all()
    assert side["eps"] == 0.5
    assert side["shape"] == [4, 5, 6]
