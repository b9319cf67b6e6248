from importlib import resources

import numpy as np
import pytest

from dipper import fixtures, io as dio
from dipper.participation import predict_table


def test_bundled_data_regenerates_byte_for_byte():
    data = resources.files("dipper") / "data"
    for name, text in fixtures.bundle_files().items():
        assert (data / name).read_text() == text, name


def test_bundle_depends_on_seed():
    a = fixtures.bundle_files(1)
    b = fixtures.bundle_files(2)
    assert a["position_sweep.csv"] != b["position_sweep.csv"]
    assert a["power_withdrawn.csv"] == b["power_withdrawn.csv"]  # noiseless


def test_profile_end_points_and_forward_model():
    spec = fixtures.SAMPLES[1]
    table = fixtures.profile(spec)
    assert table.p_bulk.min() == pytest.approx(spec.p_bulk_withdrawn, rel=1e-12)
    assert table.p_bulk.max() == pytest.approx(spec.p_bulk_inserted, rel=1e-12)
    assert table.sa_ratio() == pytest.approx(spec.sa_ratio)
    q = predict_table(table, fixtures.loss_factors(spec))
    # frequency pull at full insertion is a few percent
    assert 0.02 < 1 - table.omega.min() / table.omega.max() < 0.04
    assert np.all(q > 0)


def test_withdrawn_sweep_table_values():
    pts = dio.read_power_sweep(resources.files("dipper") / "data" / "power_withdrawn.csv")
    top = pts.q_inv.max() / fixtures.WITHDRAWN_P_MA
    assert top == pytest.approx(38.2e-3, rel=0.01)


def test_sample_lookup():
    assert fixtures.sample_by_id("hemex_440um").q_sub == 19e-9
    with pytest.raises(KeyError):
        fixtures.sample_by_id("quartz")
