"""Command-line front end.

Every command reads one JSON config (optional; defaults below), applies
``section.key=value`` overrides, computes all artifacts in memory and only
then writes them, each through a temporary file and a rename. A JSON
summary goes to stdout.

Exit status: 0 success, 2 invalid input or config, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import figures, fixtures, io as dio, separation, tls
from .errors import InputError, NumericalError
from .inversion import LossSystem, SensitivityAssumptions, sensitivity_map, solve
from .participation import DEFAULT_OMEGA_REF, read_participation_csv
from .ringdown import (
    CavityModel,
    JitterSpectrum,
    Pulse,
    extract_kappa_ext,
    fit_decay,
    load_ensemble,
    photons_from_input,
    photons_from_output,
    reference_power,
    simulate_ensemble,
)
from .ringdown.estimators import InsufficientSNR
from .ringdown.simulate import ensemble_files

OUTPUT_ENV = "DIPPER_OUTPUT_DIR"
COMMANDS = ("simulate", "fit-ringdown", "fit-power", "invert", "sensitivity", "separate",
            "pipeline")
STOCHASTIC = ("simulate", "pipeline")

DEFAULTS = {
    "seed": 0,
    "simulate": {
        "f0_Hz": 4.55e9,
        "kappa_tot_rad_s": 2 * math.pi * 100.0,
        "kappa_ext_rad_s": 2 * math.pi * 50.0,
        "a0_sqrt_per_s": 3.6e5,
        "t_p_s": 5e-5,
        "detuning_rad_s": 0.0,
        "dt_s": 1e-5,
        "duration_s": 8e-3,
        "n_shots": 20,
        "t_m_s": 1e-5,
        "noise_std_sqrt_per_s": 0.0,
        "workers": 1,
        "jitter": {"kind": "lorentzian", "scale_per_Hz": 1.0, "corner_Hz": 100.0,
                   "f_min_Hz": 1.0, "f_max_Hz": 2000.0, "n_tones": 64,
                   "rms_linewidths": 2.0},
    },
    "fit_ringdown": {
        "window_start_s": None,
        "window_end_s": None,
        "receiver_gain": 1.0,
        "compression": 1.0,
    },
    "fit_power": {
        "position": "withdrawn",
        "n_cutoff": tls.DEFAULT_N_CUTOFF,
        "p_cond": fixtures.WITHDRAWN_P_COND,
        "p_MA": fixtures.WITHDRAWN_P_MA,
        "saturation_fraction_max": 0.1,
    },
    "invert": {
        "omega_ref_rad_s": DEFAULT_OMEGA_REF,
        "share_cond": True,
        "share_MA": True,
        "bounds": {},
    },
    "sensitivity": {
        "sample_id": "efg_460um",
        "n_positions": 30,
        "fractional_error": 0.01,
        "q_MA": 3e-2,
        "q_cond": 2e-5,
        "q_bulk_range": [1e-9, 1e-6],
        "q_SA_range": [1e-5, 1e-2],
        "n_grid": 41,
        "levels": [0.03, 0.1, 1.0],
    },
    "separate": {
        "pairs": [["efg_100um", "efg_460um"]],
        "single": ["hemex_440um"],
        "ratios": {},
        "method": "jacobian",
        "p_bulk": 0.8,
        "qubit_f_Hz": 4e9,
    },
}


class UsageError(InputError):
    pass


# ---------------------------------------------------------------------------
# config


def _merge(base: dict, extra: dict, where="config") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise UsageError(f"{where}: unknown key {k!r}")
        if isinstance(out[k], dict) and k not in ("bounds", "ratios"):
            if not isinstance(v, dict):
                raise UsageError(f"{where}: {k!r} must be an object")
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def parse_override(text: str):
    if "=" not in text:
        raise UsageError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested = value
    for part in reversed(key.strip().split(".")):
        nested = {part: nested}
    return nested


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text())
        except OSError as exc:
            raise InputError(f"cannot read config: {exc.strerror or exc}", path=path) from None
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
        user.pop("schema", None)
        cfg = _merge(cfg, user)
    for text in overrides:
        cfg = _merge(cfg, parse_override(text), "override")
    return cfg


# ---------------------------------------------------------------------------
# command implementations; each returns (summary, {filename: text})


def _cavity_and_pulse(c: dict):
    spec, rms = JitterSpectrum.from_dict(c["jitter"])
    omega0 = 2 * math.pi * float(c["f0_Hz"])
    kappa = float(c["kappa_tot_rad_s"])
    if rms is not None and spec.kind != "none":
        spec = spec.with_rms_linewidths(float(rms), omega0, kappa)
    cavity = CavityModel(omega0, kappa, float(c["kappa_ext_rad_s"]), spec)
    pulse = Pulse(float(c["a0_sqrt_per_s"]), float(c["t_p_s"]), float(c["detuning_rad_s"]))
    return cavity, pulse


def run_simulate(cfg, seed):
    c = cfg["simulate"]
    cavity, pulse = _cavity_and_pulse(c)
    ens = simulate_ensemble(cavity, pulse, float(c["dt_s"]), float(c["duration_s"]),
                            int(c["n_shots"]), seed, t_m=float(c["t_m_s"]),
                            noise_std=float(c["noise_std_sqrt_per_s"]),
                            workers=int(c["workers"]))
    ens.meta.pop("backend", None)
    files = ensemble_files(ens, "ensemble")
    summary = {"n_shots": ens.n_shots, "n_samples": int(ens.shots.shape[1]),
               "rms_linewidths": cavity.jitter.rms_linewidths(cavity.omega0, cavity.kappa_tot)}
    return summary, files, ens


def fit_ringdown(ens, cfg):
    c = cfg["fit_ringdown"]
    meta = ens.meta
    kappa_true = meta.get("cavity", {}).get("kappa_tot_rad_s")
    t_start = c["window_start_s"]
    if t_start is None:
        t_start = ens.t_p + 0.5 * ens.t_m + ens.dt
    t_end = c["window_end_s"] if c["window_end_s"] is not None else ens.times[-1] - 0.5 * ens.t_m
    window = (float(t_start), float(t_end))
    power = fit_decay(ens, window, "power-average")
    out = {"window_s": list(window), "power_average": power.to_dict()}
    try:
        out["field_average"] = fit_decay(ens, window, "field-average").to_dict()
    except InsufficientSNR as exc:
        out["field_average"] = {"error": str(exc)}
    pulse = meta.get("pulse")
    if pulse:
        a0, t_p = float(pulse["a0_sqrt_per_s"]), float(pulse["t_p_s"])
        gain = float(c["receiver_gain"])
        p_start = reference_power(a0, gain, float(c["compression"]))
        p_ring = gain * float(power.power_at(ens.t_p))
        kappa = power.rate
        k_ext = extract_kappa_ext(p_start, p_ring, kappa, t_p, "exact")
        out["coupling"] = {
            "P_start": p_start, "P_ring": p_ring,
            "kappa_ext_rad_s": k_ext,
            "kappa_ext_short_pulse_rad_s": extract_kappa_ext(p_start, p_ring, kappa, t_p,
                                                             "short-pulse"),
            "kappa_int_rad_s": kappa - k_ext,
        }
        omega0 = meta.get("cavity", {}).get("omega0_rad_s")
        if omega0:
            out["coupling"]["Q_int"] = omega0 / (kappa - k_ext) if kappa > k_ext else math.inf
            out["coupling"]["Q_ext"] = omega0 / k_ext if k_ext > 0 else math.inf
        if k_ext > 0:
            out["photons"] = {
                "from_output": photons_from_output(p_ring / gain, k_ext),
                "from_input": photons_from_input(a0, t_p, k_ext, kappa),
            }
    if kappa_true:
        out["kappa_tot_true_rad_s"] = kappa_true
    return out


def run_fit_ringdown(cfg, inputs):
    stem = _one_input(inputs, "fit-ringdown needs an ensemble (-i STEM)")
    ens = load_ensemble(Path(stem).with_suffix(""))
    result = fit_ringdown(ens, cfg)
    return result, {"ringdown_fit.json": dio.dumps_json(result)}


def _power_sweep(path, cfg, position=None):
    c = cfg["fit_power"]
    pts = dio.read_power_sweep(path)
    position = position or c["position"]
    return tls.PowerSweep(pts.n, pts.q_inv, pts.sigma, position,
                          p_cond=c["p_cond"], p_MA=c["p_MA"])


def fit_power(sweep, cfg):
    c = cfg["fit_power"]
    cutoff = c["n_cutoff"]
    fit = tls.fit_tls(sweep, cutoff)
    bounds = None
    if sweep.position == "withdrawn":
        bounds = tls.cavity_bounds(sweep, float(c["p_cond"]), float(c["p_MA"]), fit)
    report = tls.fit_report(sweep, fit, cutoff, bounds)
    report["low_power_boundary"] = {
        "saturation_fraction_max": c["saturation_fraction_max"],
        "n_max": tls.low_power_boundary(float(c["saturation_fraction_max"]), fit),
    }
    return fit, bounds, report


def run_fit_power(cfg, inputs):
    path = _one_input(inputs, "fit-power needs a power sweep CSV (-i PATH)")
    sweep = _power_sweep(path, cfg)
    fit, bounds, report = fit_power(sweep, cfg)
    files = {"tls_fit.json": dio.dumps_json(report)}
    files.update(figures.fig3([(sweep, fit, cfg["fit_power"]["n_cutoff"])]))
    return {"fit": fit.params(), "cavity_bounds": bounds.to_dict() if bounds else None}, files


def _bounds_from_file(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read cavity bounds: {exc}", path=path) from None
    cb = data.get("cavity_bounds")
    if not cb:
        raise InputError("no cavity_bounds in file (fit a withdrawn sweep)", path=path)
    return {"q_cond": (cb["q_cond_lower"], cb["q_cond_upper"]),
            "q_MA": (cb["q_MA_lower"], cb["q_MA_upper"])}


def invert(sweeps, cfg, extra_bounds=None):
    c = cfg["invert"]
    bounds = {k: tuple(v) for k, v in c["bounds"].items()}
    if extra_bounds:
        for k, v in extra_bounds.items():
            bounds.setdefault(k, tuple(v))
    ids = list(sweeps)
    system = LossSystem([sweeps[i].table for i in ids], [sweeps[i].q_inv for i in ids],
                        [sweeps[i].sigma for i in ids], bounds=bounds,
                        share_cond=bool(c["share_cond"]), share_MA=bool(c["share_MA"]),
                        omega_ref=float(c["omega_ref_rad_s"]))
    sol = solve(system)
    result = sol.to_dict()
    result.pop("schema", None)
    result["bounds"] = {k: list(v) for k, v in bounds.items()}
    result["samples"] = {
        i: {"q_sub_inv": sol.q_sub(i), "q_sub_inv_stderr": sol.stderr(f"q_sub[{i}]"),
            "sa_ratio": sweeps[i].table.sa_ratio()}
        for i in ids
    }
    return system, sol, result


def run_invert(cfg, inputs, bounds_path=None):
    path = _one_input(inputs, "invert needs a position sweep CSV (-i PATH)")
    sweeps = dio.read_position_sweep(path)
    extra = _bounds_from_file(bounds_path) if bounds_path else None
    system, sol, result = invert(sweeps, cfg, extra)
    files = {"inversion.json": dio.dumps_json(result)}
    files.update(figures.fig4a(system, sol))
    return {"samples": result["samples"], "active_bounds": result["active_bounds"]}, files


def sensitivity(cfg, table=None):
    c = cfg["sensitivity"]
    if table is None:
        spec = fixtures.sample_by_id(c["sample_id"])
        table = fixtures.profile(spec, int(c["n_positions"]))
    assumptions = SensitivityAssumptions(float(c["fractional_error"]), float(c["q_MA"]),
                                         float(c["q_cond"]))
    n = int(c["n_grid"])
    if n < 1:
        raise UsageError("sensitivity.n_grid must be at least 1")
    qb = np.geomspace(*map(float, c["q_bulk_range"]), n)
    qs = np.geomspace(*map(float, c["q_SA_range"]), n)
    smap = sensitivity_map(table, assumptions, qb, qs, levels=tuple(c["levels"]))
    k = int(np.argmin(smap.ci))
    j, i = np.unravel_index(k, smap.ci.shape)
    summary = {"sample_id": table.sample_id, "sa_ratio": smap.sa_ratio,
               "min_ci": float(smap.ci[j, i]),
               "min_ci_at": {"q_bulk_inv": float(qb[i]), "q_SA_inv": float(qs[j])},
               "max_ci": float(smap.ci.max())}
    files = {"sensitivity_map.csv": dio.format_csv(
        ("q_bulk_inv", "q_SA_inv", "ci", "frac_err"),
        [(r["q_bulk_inv"], r["q_SA_inv"], r["ci"], r["frac_err"]) for r in smap.records()])}
    figs = figures.fig2(smap)
    files["sensitivity_contours.csv"] = figs["fig2_contours.csv"]
    files.update(figs)
    files["sensitivity.json"] = dio.dumps_json(summary)
    return summary, files


def run_sensitivity(cfg, inputs):
    table = None
    if inputs:
        path = _one_input(inputs, "sensitivity takes at most one participation CSV")
        tables = read_participation_csv(path)
        sid = cfg["sensitivity"]["sample_id"]
        if sid not in tables:
            if len(tables) != 1:
                raise InputError(f"sample {sid!r} not in file", path=path)
            sid = next(iter(tables))
        table = tables[sid]
    return sensitivity(cfg, table)


def separate(samples: dict, cfg):
    """``samples``: id -> {q_sub_inv, q_sub_inv_stderr, sa_ratio}."""
    c = cfg["separate"]

    def line(sid):
        if sid not in samples:
            raise InputError(f"sample {sid!r} missing from the inversion result")
        s = samples[sid]
        ratio = float(c["ratios"].get(sid, s.get("sa_ratio", 0.0)))
        return separation.ConstraintLine(max(float(s["q_sub_inv"]), 0.0), ratio,
                                         float(s["q_sub_inv_stderr"]), label=sid)

    materials, lines, points, bars = {}, [], [], []
    p_bulk, f_q = float(c["p_bulk"]), float(c["qubit_f_Hz"])
    for a, b in c["pairs"]:
        la, lb = line(a), line(b)
        pair = separation.intersect(la, lb, method=c["method"])
        label = f"{a}+{b}"
        materials[label] = pair
        lines += [la, lb]
        points.append((label, pair))
        bars.append((label, "bulk", p_bulk, pair.first.value,
                     separation.coherence_limit(p_bulk, pair.first.value, f_q)))
    for sid in c["single"]:
        ln = line(sid)
        materials[sid] = separation.single_sample_bounds(ln)
        lines.append(ln)
        bars.append((sid, "bulk", p_bulk, ln.intercept_x,
                     separation.coherence_limit(p_bulk, ln.intercept_x, f_q)))
    projections = {f"{m}:{ch}": lim for m, ch, _, _, lim in bars}
    result = separation.summary(materials, projections)
    result["lines"] = [ln.to_dict() for ln in lines]
    files = {"separation.json": dio.dumps_json(result)}
    files.update(figures.fig4b(lines, points))
    files.update(figures.fig5(bars))
    return result, files


def run_separate(cfg, inputs):
    path = Path(_one_input(inputs, "separate needs an inversion result (-i inversion.json)"))
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read: {exc.strerror or exc}", path=path) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    if "samples" not in data:
        raise InputError("not an inversion result (no 'samples')", path=path)
    return separate(data["samples"], cfg)


def bundled_data_dir() -> Path:
    return Path(resources.files("dipper") / "data")


def run_pipeline(cfg, seed, data_dir=None):
    data_dir = Path(data_dir) if data_dir else bundled_data_dir()
    position_csv = data_dir / "position_sweep.csv"
    withdrawn_csv = data_dir / "power_withdrawn.csv"
    inserted_csv = data_dir / "power_inserted.csv"
    for p in (position_csv, withdrawn_csv, inserted_csv):
        if not p.is_file():
            raise InputError("missing pipeline input", path=p)
    files = {}
    summary = {"seed": seed}

    sim_summary, sim_files, ens = run_simulate(cfg, seed)
    files.update(sim_files)
    ring = fit_ringdown(ens, cfg)
    files["ringdown_fit.json"] = dio.dumps_json(ring)
    summary["ringdown"] = {"kappa_tot_rad_s": ring["power_average"]["rate_per_s"],
                           "kappa_tot_true_rad_s": ring.get("kappa_tot_true_rad_s"),
                           "kappa_ext_rad_s": ring.get("coupling", {}).get("kappa_ext_rad_s")}

    withdrawn = _power_sweep(withdrawn_csv, cfg, "withdrawn")
    inserted = _power_sweep(inserted_csv, cfg, "inserted")
    cutoff = cfg["fit_power"]["n_cutoff"]
    w_fit, bounds, w_report = fit_power(withdrawn, cfg)
    i_fit, _, i_report = fit_power(inserted, cfg)
    files["tls_fit_withdrawn.json"] = dio.dumps_json(w_report)
    files["tls_fit_inserted.json"] = dio.dumps_json(i_report)
    files.update(figures.fig3([(withdrawn, w_fit, cutoff), (inserted, i_fit, cutoff)]))
    summary["cavity_bounds"] = bounds.to_dict()

    sweeps = dio.read_position_sweep(position_csv)
    system, sol, inv = invert(sweeps, cfg, bounds.as_solver_bounds())
    files["inversion.json"] = dio.dumps_json(inv)
    files.update(figures.fig4a(system, sol))
    summary["inversion"] = {"samples": inv["samples"], "active_bounds": inv["active_bounds"]}

    sens_summary, sens_files = sensitivity(cfg)
    files.update(sens_files)
    summary["sensitivity"] = sens_summary

    sep, sep_files = separate(inv["samples"], cfg)
    files.update(sep_files)
    summary["separation"] = sep
    return summary, files


# ---------------------------------------------------------------------------
# entry point


def _one_input(inputs, message):
    if not inputs or len(inputs) != 1:
        raise UsageError(message)
    p = Path(inputs[0])
    return p


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or "dipper_out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dipper", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                    help="config overrides, e.g. simulate.n_shots=50")
    ap.add_argument("-c", "--config", help="JSON run config")
    ap.add_argument("-i", "--input", action="append", default=[],
                    help="input file (ensemble stem, sweep CSV, inversion JSON)")
    ap.add_argument("-o", "--output-dir",
                    help=f"artifact directory (default ${OUTPUT_ENV} or ./dipper_out)")
    ap.add_argument("--seed", type=int, help="master seed (overrides config)")
    ap.add_argument("--cavity-bounds", help="tls_fit.json of a withdrawn sweep (invert)")
    ap.add_argument("--data-dir", help="pipeline input directory (default: bundled data)")
    return ap


def run(args) -> tuple[int, dict]:
    cfg = load_config(args.config, args.overrides)
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if args.command in STOCHASTIC:
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise UsageError("a 64-bit non-negative integer seed is required")
    out_dir = Path(args.output_dir) if args.output_dir else default_output_dir()
    for p in args.input:
        if not Path(p).exists() and not Path(p).with_suffix(".json").exists():
            raise InputError("input not found", path=p)
    cmd = args.command
    if cmd == "simulate":
        summary, files, _ = run_simulate(cfg, seed)
    elif cmd == "fit-ringdown":
        summary, files = run_fit_ringdown(cfg, args.input)
    elif cmd == "fit-power":
        summary, files = run_fit_power(cfg, args.input)
    elif cmd == "invert":
        summary, files = run_invert(cfg, args.input, args.cavity_bounds)
    elif cmd == "sensitivity":
        summary, files = run_sensitivity(cfg, args.input)
    elif cmd == "separate":
        summary, files = run_separate(cfg, args.input)
    else:
        summary, files = run_pipeline(cfg, seed, args.data_dir)
    written = []
    for name in sorted(files):
        dio.atomic_write(out_dir / name, files[name])
        written.append(name)
    return 0, {"command": cmd, "status": "ok", "output_dir": str(out_dir),
               "artifacts": written, "result": summary}


def main(argv=None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    try:
        code, report = run(args)
    except (InputError, ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"command": args.command, "status": "error", "kind": "validation",
                          "message": str(msg)}), file=sys.stdout)
        print(f"dipper: error: {msg}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"command": args.command, "status": "error", "kind": "numerical",
                          "message": str(exc)}), file=sys.stdout)
        print(f"dipper: numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(dio._jsonable(report), indent=2, sort_keys=True))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
