import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dipper import io as dio
from dipper.errors import InputError


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "a.txt"
    dio.atomic_write(p, "one")
    dio.atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [x.name for x in p.parent.iterdir()] == ["a.txt"]


def test_json_is_schema_tagged_sorted_and_finite():
    text = dio.dumps_json({"b": np.float64(1.5), "a": [math.inf, math.nan], "c": np.int64(3),
                           "d": np.array([1.0, 2.0]), "e": np.bool_(True)})
    data = json.loads(text)
    assert data == {"schema": 1, "a": ["inf", "nan"], "b": 1.5, "c": 3, "d": [1.0, 2.0],
                    "e": True}
    assert list(data) == sorted(data)


@settings(max_examples=50)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=10))
def test_csv_floats_round_trip_exactly(values):
    text = dio.format_csv(["x"], [(v,) for v in values])
    back = [float(line) for line in text.splitlines()[1:]]
    assert back == values


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_power_sweep_merges_duplicates(tmp_path):
    p = write(tmp_path, "s.csv", "n_photons,Q_inv,sigma\n1e6,2.0,1.0\n1e4,5.0,1.0\n1e6,4.0,1.0\n")
    pts = dio.read_power_sweep(p)
    assert list(pts.n) == [1e4, 1e6]
    assert pts.q_inv[1] == pytest.approx(3.0)
    assert pts.sigma[1] == pytest.approx(1 / math.sqrt(2))


def test_merge_inverse_variance():
    v, s = dio.merge_inverse_variance([1.0, 3.0], [1.0, 2.0])
    assert v == pytest.approx((1 + 3 / 4) / (1 + 1 / 4))
    assert s == pytest.approx((1 + 1 / 4) ** -0.5)


@pytest.mark.parametrize("text,msg,line", [
    ("", "empty", None),
    ("n_photons,Q_inv\n1,1\n", "missing", None),
    ("n_photons,Q_inv,sigma\n", "no data", None),
    ("n_photons,Q_inv,sigma\n1e4,1e-8,1e-10\n1e5,-1e-8,1e-10\n", "Q_inv", 3),
    ("n_photons,Q_inv,sigma\n1e4,1e-8,0\n", "sigma", 2),
    ("n_photons,Q_inv,sigma\n0,1e-8,1e-10\n", "n_photons", 2),
    ("n_photons,Q_inv,sigma\nabc,1e-8,1e-10\n", "n_photons", 2),
])
def test_power_sweep_errors(tmp_path, text, msg, line):
    p = write(tmp_path, "bad.csv", text)
    with pytest.raises(InputError, match=msg) as info:
        dio.read_power_sweep(p)
    assert info.value.path is not None
    if line is not None:
        assert info.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        dio.read_power_sweep(tmp_path / "nope.csv")


def test_position_sweep_round_trip(tmp_path):
    from dipper import fixtures

    rng = np.random.default_rng(0)
    sweeps = {}
    for spec in fixtures.SAMPLES:
        table, q, s = fixtures.position_sweep(spec, 7, rng=rng)
        sweeps[spec.sample_id] = dio.PositionSweep(table, q, s)
    header, rows = dio.position_sweep_rows(sweeps)
    p = write(tmp_path, "pos.csv", dio.format_csv(header, rows))
    back = dio.read_position_sweep(p)
    for sid, sw in sweeps.items():
        assert np.array_equal(back[sid].q_inv, sw.q_inv)
        assert np.array_equal(back[sid].table.p_bulk, sw.table.p_bulk)
        assert np.array_equal(back[sid].table.p_bulk_H, sw.table.p_bulk_H)


def test_ingest_dispatch(tmp_path):
    p = write(tmp_path, "s.csv", "n_photons,Q_inv,sigma\n1e4,1e-8,1e-10\n")
    assert isinstance(dio.ingest_sweep(p, "power"), dio.PowerPoints)
    with pytest.raises(ValueError):
        dio.ingest_sweep(p, "magic")
