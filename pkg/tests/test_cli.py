import json

import pytest

from dipper import cli
from dipper.cli import bundled_data_dir, load_config, main, parse_override

DATA = bundled_data_dir()


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, json.loads(out.out), out.err


def test_parse_override():
    assert parse_override("simulate.n_shots=5") == {"simulate": {"n_shots": 5}}
    assert parse_override("separate.method=monte-carlo") == {
        "separate": {"method": "monte-carlo"}}
    with pytest.raises(ValueError):
        parse_override("no_equals_sign")


def test_load_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"simulate": {"n_shotz": 3}}))
    with pytest.raises(ValueError):
        load_config(p)
    cfg = load_config(None, ["fit_power.n_cutoff=null"])
    assert cfg["fit_power"]["n_cutoff"] is None


def test_simulate_then_fit_ringdown(tmp_path, capsys):
    code, rep, _ = call(capsys, "simulate", "--seed", "4", "-o", str(tmp_path),
                        "simulate.n_shots=5")
    assert code == 0 and rep["artifacts"] == ["ensemble.csv", "ensemble.json"]
    code, rep, _ = call(capsys, "fit-ringdown", "-i", str(tmp_path / "ensemble"),
                        "-o", str(tmp_path))
    assert code == 0
    fit = json.loads((tmp_path / "ringdown_fit.json").read_text())
    assert fit["schema"] == 1
    assert fit["power_average"]["rate_per_s"] == pytest.approx(fit["kappa_tot_true_rad_s"],
                                                               rel=1e-3)


def test_simulate_requires_seed(tmp_path, capsys):
    code, rep, err = call(capsys, "simulate", "-o", str(tmp_path), "seed=null")
    assert code == 2 and rep["status"] == "error" and "seed" in err
    assert not any(tmp_path.iterdir())


def test_fit_power_withdrawn_reports_bounds(tmp_path, capsys):
    code, rep, _ = call(capsys, "fit-power", "-i", str(DATA / "power_withdrawn.csv"),
                        "-o", str(tmp_path))
    assert code == 0
    cb = rep["result"]["cavity_bounds"]
    assert cb["q_MA_upper"] == pytest.approx(38.2e-3, rel=0.01)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fig3.csv", "tls_fit.json"]


def test_invert_with_cavity_bounds_then_separate(tmp_path, capsys):
    call(capsys, "fit-power", "-i", str(DATA / "power_withdrawn.csv"), "-o", str(tmp_path))
    code, rep, _ = call(capsys, "invert", "-i", str(DATA / "position_sweep.csv"),
                        "--cavity-bounds", str(tmp_path / "tls_fit.json"), "-o", str(tmp_path))
    assert code == 0
    inv = json.loads((tmp_path / "inversion.json").read_text())
    assert set(inv["bounds"]) == {"q_cond", "q_MA"}
    code, rep, _ = call(capsys, "separate", "-i", str(tmp_path / "inversion.json"),
                        "-o", str(tmp_path))
    assert code == 0
    assert {"fig4b.csv", "fig5.csv", "separation.json"} <= set(rep["artifacts"])


def test_sensitivity_small_grid(tmp_path, capsys):
    code, rep, _ = call(capsys, "sensitivity", "sensitivity.n_grid=2", "-o", str(tmp_path))
    assert code == 0
    assert len((tmp_path / "fig2.csv").read_text().splitlines()) == 5


@pytest.mark.parametrize("text", ["", "n_photons,Q_inv,sigma\n",
                                  "n_photons,Q_inv,sigma\n1e4,-1,1\n"])
def test_bad_sweep_exits_2_without_artifacts(tmp_path, capsys, text):
    bad = tmp_path / "in" / "bad.csv"
    bad.parent.mkdir()
    bad.write_text(text)
    out = tmp_path / "out"
    code, rep, err = call(capsys, "fit-power", "-i", str(bad), "-o", str(out))
    assert code == 2 and rep["kind"] == "validation" and "bad.csv" in err
    assert not out.exists()


def test_numerical_failure_exits_3(tmp_path, capsys):
    inv = tmp_path / "inversion.json"
    same = {"q_sub_inv": 1e-7, "q_sub_inv_stderr": 1e-9, "sa_ratio": 2e-5}
    inv.write_text(json.dumps({"samples": {"efg_100um": same, "efg_460um": same,
                                           "hemex_440um": same}}))
    code, rep, _ = call(capsys, "separate", "-i", str(inv), "-o", str(tmp_path / "o"))
    assert code == 3 and rep["kind"] == "numerical"


def test_missing_input_and_unknown_override(tmp_path, capsys):
    code, _, _ = call(capsys, "fit-power", "-i", str(tmp_path / "nope.csv"))
    assert code == 2
    code, _, _ = call(capsys, "sensitivity", "sensitivity.bogus=1", "-o", str(tmp_path))
    assert code == 2


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env_out"))
    code, rep, _ = call(capsys, "sensitivity", "sensitivity.n_grid=2")
    assert code == 0 and (tmp_path / "env_out" / "fig2.csv").exists()
