"""Seeded Monte-Carlo ringdown shots with jitter, receiver noise and detector averaging."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import backend
from ..errors import InputError
from .model import CavityModel, Pulse

#: Largest allowed ``dt * f_max`` for the jitter synthesis.
MAX_JITTER_STEP = 0.1
#: Largest allowed ``kappa_tot * dt``.
MAX_DECAY_STEP = 0.1


@dataclass(frozen=True)
class ShotEnsemble:
    """Output-field records of many shots on a common time grid ``t = k dt``.

    ``noise_power`` is the per-sample receiver noise power ``<|n|^2>`` left
    after detector averaging; power averages subtract it.
    """

    dt: float
    t_m: float
    shots: np.ndarray
    seed: int
    t_p: float = 0.0
    noise_power: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shots = np.atleast_2d(np.asarray(self.shots, dtype=complex))
        object.__setattr__(self, "shots", shots)
        if self.t_m < self.dt * (1 - 1e-12):
            raise ValueError("t_m must be at least dt")

    @property
    def n_shots(self) -> int:
        return self.shots.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.shots.shape[1]) * self.dt

    def power_average(self) -> np.ndarray:
        """``<|a_out|^2>`` with the receiver noise power removed."""
        return np.mean(np.abs(self.shots) ** 2, axis=0) - self.noise_power

    def field_average(self) -> np.ndarray:
        """``<a_out>`` over shots."""
        return np.mean(self.shots, axis=0)


def _check_steps(cavity: CavityModel, dt: float):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if cavity.kappa_tot * dt > MAX_DECAY_STEP:
        raise ValueError(
            f"unstable step: kappa_tot*dt = {cavity.kappa_tot * dt:.3g} > {MAX_DECAY_STEP}"
        )
    f_max = cavity.jitter.f_max
    if f_max * dt > MAX_JITTER_STEP:
        raise ValueError(
            f"step does not resolve jitter: f_max*dt = {f_max * dt:.3g} > {MAX_JITTER_STEP}"
        )


def _drive(pulse: Pulse, dt: float, n: int) -> np.ndarray:
    n_p = int(round(pulse.t_p / dt))
    if n_p < 1:
        raise ValueError(f"pulse of {pulse.t_p:g} s is shorter than one step of {dt:g} s")
    a_in = np.zeros(n, dtype=complex)
    a_in[: min(n_p, n)] = pulse.a0
    return a_in


def shot_streams(seed: int, shot: int):
    """Independent generators for the jitter phases and receiver noise of one shot."""
    jitter_ss, noise_ss = np.random.SeedSequence([int(seed), int(shot)]).spawn(2)
    return np.random.default_rng(jitter_ss), np.random.default_rng(noise_ss)


def _shot_phases(cavity, seeds_shots):
    freqs, _ = cavity.jitter.tones()
    phases = np.empty((len(seeds_shots), freqs.size))
    for i, (seed, shot) in enumerate(seeds_shots):
        rng, _ = shot_streams(seed, shot)
        phases[i] = rng.uniform(0.0, 2 * math.pi, freqs.size)
    return phases


def _integrate(cavity: CavityModel, pulse: Pulse, dt, n, phases, kernels=None):
    kernels = kernels or backend
    freqs, amps = cavity.jitter.tones()
    omegas = 2 * math.pi * freqs
    coeffs = cavity.omega0 * amps / omegas if omegas.size else amps
    theta = kernels.jitter_phase(
        np.ascontiguousarray(omegas, dtype=float), np.ascontiguousarray(coeffs, dtype=float),
        np.ascontiguousarray(phases, dtype=float), float(dt), int(n),
    )
    a_in = _drive(pulse, dt, n)
    return kernels.integrate_field(
        np.ascontiguousarray(theta), a_in, float(dt), float(pulse.detuning),
        float(cavity.kappa_tot), math.sqrt(cavity.kappa_ext),
    )


def simulate_shot(cavity: CavityModel, pulse: Pulse, dt: float, duration: float,
                  seed: int, shot: int = 0, kernels=None) -> np.ndarray:
    """Noise-free output field ``a_out(k dt)`` of one shot, deterministic in ``(seed, shot)``."""
    _check_steps(cavity, dt)
    n = int(round(duration / dt)) + 1
    phases = _shot_phases(cavity, [(seed, shot)])
    return _integrate(cavity, pulse, dt, n, phases, kernels)[0]


def simulate_ensemble(cavity: CavityModel, pulse: Pulse, dt: float, duration: float,
                      n_shots: int, seed: int, t_m: float | None = None,
                      noise_std: float = 0.0, workers: int = 1, kernels=None) -> ShotEnsemble:
    """Simulate ``n_shots`` shots, add receiver noise, apply detector averaging.

    ``noise_std`` is the standard deviation of each quadrature of the
    additive receiver noise per raw sample, in sqrt(photons/s). Shots are
    split into contiguous chunks for ``workers`` threads; each shot's random
    streams depend only on ``(seed, shot)`` so results do not depend on
    ``workers``.
    """
    if n_shots < 1:
        raise ValueError("need at least one shot")
    t_m = dt if t_m is None else t_m
    _check_steps(cavity, dt)
    n = int(round(duration / dt)) + 1
    index = [(seed, s) for s in range(n_shots)]
    workers = max(1, min(workers, n_shots))
    chunks = [index[i * n_shots // workers:(i + 1) * n_shots // workers] for i in range(workers)]

    def run(chunk):
        return _integrate(cavity, pulse, dt, n, _shot_phases(cavity, chunk), kernels)

    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    shots = np.vstack(parts)
    if noise_std > 0:
        for s in range(n_shots):
            _, rng = shot_streams(seed, s)
            shots[s] += noise_std * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    weights = boxcar_weights(t_m, dt)
    shots = apply_detector_bandwidth(shots, t_m, dt)
    noise_power = 2 * noise_std**2 * float(np.sum(weights**2) / np.sum(weights) ** 2)
    meta = {
        "cavity": cavity.to_dict(),
        "pulse": pulse.to_dict(),
        "noise_std": noise_std,
        "backend": kernels.__name__ if kernels else backend.NAME,
    }
    return ShotEnsemble(dt=dt, t_m=t_m, shots=shots, seed=int(seed), t_p=pulse.t_p,
                        noise_power=noise_power, meta=meta)


def boxcar_weights(t_m: float, dt: float) -> np.ndarray:
    """Sample weights of a boxcar of width ``t_m`` centred on a sample.

    Each sample stands for an interval of length ``dt``; weights are the
    overlap of that interval with the window, so they sum to ``t_m / dt``.
    """
    if t_m < dt * (1 - 1e-12):
        raise ValueError("t_m must be at least dt")
    h = 0.5 * t_m / dt
    k_max = int(math.ceil(h - 0.5 - 1e-12))
    k = np.arange(-k_max, k_max + 1)
    w = np.clip(np.minimum(k + 0.5, h) - np.maximum(k - 0.5, -h), 0.0, 1.0)
    return w


def apply_detector_bandwidth(series, t_m: float, dt: float):
    """Boxcar average of width ``t_m`` centred on every sample.

    Samples closer to an edge than the half-width use the widest symmetric
    window that fits.
    """
    x = np.asarray(series)
    w = boxcar_weights(t_m, dt)
    if w.size == 1:
        return x.copy()
    w = w / w.sum()
    k_max = w.size // 2
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    out = np.empty_like(x2)
    n = x2.shape[1]
    csum = np.cumsum(np.concatenate([np.zeros((x2.shape[0], 1), x2.dtype), x2], axis=1), axis=1)
    for row, src in zip(out, x2):
        if n > 2 * k_max:
            row[k_max:n - k_max] = np.convolve(src, w[::-1], mode="valid")
    for i in range(min(k_max, n)):
        for j in (i, n - 1 - i):
            r = min(j, n - 1 - j)
            out[:, j] = (csum[:, j + r + 1] - csum[:, j - r]) / (2 * r + 1)
    return out[0] if squeeze else out


def ensemble_files(ensemble: ShotEnsemble, stem: str) -> dict[str, str]:
    """Text of the ``<stem>.json`` sidecar and ``<stem>.csv`` samples."""
    sidecar = {
        "schema": 1,
        "dt_s": ensemble.dt,
        "t_m_s": ensemble.t_m,
        "t_p_s": ensemble.t_p,
        "seed": ensemble.seed,
        "noise_power": ensemble.noise_power,
        "n_shots": ensemble.n_shots,
        "n_samples": int(ensemble.shots.shape[1]),
        **ensemble.meta,
    }
    t = ensemble.times
    lines = ["shot,t_s,re,im"]
    for s, shot in enumerate(ensemble.shots):
        lines.extend(f"{s},{tk!r},{v.real!r},{v.imag!r}" for tk, v in zip(t.tolist(), shot.tolist()))
    return {
        f"{stem}.json": json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
        f"{stem}.csv": "\n".join(lines) + "\n",
    }


def save_ensemble(ensemble: ShotEnsemble, stem) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (metadata) and ``<stem>.csv`` (``shot,t_s,re,im``)."""
    from ..io import atomic_write

    stem = Path(stem)
    files = ensemble_files(ensemble, stem.name)
    json_path = stem.with_suffix(".json")
    csv_path = stem.with_suffix(".csv")
    atomic_write(json_path, files[json_path.name])
    atomic_write(csv_path, files[csv_path.name])
    return json_path, csv_path


def load_ensemble(stem) -> ShotEnsemble:
    stem = Path(stem)
    json_path = stem.with_suffix(".json")
    csv_path = stem.with_suffix(".csv")
    try:
        meta = json.loads(json_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read ensemble sidecar: {exc}", path=json_path) from None
    n_shots = int(meta["n_shots"])
    n = int(meta["n_samples"])
    shots = np.zeros((n_shots, n), dtype=complex)
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["shot", "t_s", "re", "im"]:
            raise InputError("expected header shot,t_s,re,im", path=csv_path, line=1)
        counts = np.zeros(n_shots, dtype=int)
        for rec in reader:
            try:
                s = int(rec["shot"])
                k = counts[s]
                shots[s, k] = complex(float(rec["re"]), float(rec["im"]))
                counts[s] += 1
            except (ValueError, IndexError, TypeError) as exc:
                raise InputError(str(exc), path=csv_path, line=reader.line_num) from None
    if np.any(counts != n):
        raise InputError("shots have unequal or unexpected lengths", path=csv_path)
    extra = {k: v for k, v in meta.items()
             if k not in {"schema", "dt_s", "t_m_s", "t_p_s", "seed", "noise_power",
                          "n_shots", "n_samples"}}
    return ShotEnsemble(dt=meta["dt_s"], t_m=meta["t_m_s"], shots=shots, seed=meta["seed"],
                        t_p=meta.get("t_p_s", 0.0), noise_power=meta.get("noise_power", 0.0),
                        meta=extra)
