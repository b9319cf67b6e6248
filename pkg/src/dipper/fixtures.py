"""Synthetic participation profiles and measurement sets.

Profiles come from the analytic evanescent model for ``p_bulk(z)``
together with second-order polynomials for ``p_MA(p_bulk)`` and a weakly
varying ``p_cond``. Loss constants are the measured values for the
reference cavity and the sapphire samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .participation import (
    DEFAULT_OMEGA_REF,
    LossFactors,
    ParticipationTable,
    Waveguide,
    attenuation_profile,
    position_for_participation,
    predict_table,
)

# p_MA(p_bulk) and p_cond polynomial coefficients (increasing powers).
X_MA = (249e-9, -300e-9, 15800e-9)
X_COND = 43.92e-6

# Measured loss factors of the reference cavity and samples.
Q_MA = 33e-3
Q_COND = 2e-5
Q_BULK_EFG = 63e-9
Q_SA_EFG = 15e-4


@dataclass(frozen=True)
class SampleSpec:
    sample_id: str
    p_bulk_withdrawn: float
    p_bulk_inserted: float
    sa_ratio: float
    q_sub: float


#: Thin EFG, thick EFG and HEMEX samples. The SA ratios were not measured
#: directly; they are the values that reproduce the measured ``q_sub`` from the
#: EFG bulk and SA loss tangents (HEMEX: ratio of its two intercepts).
SAMPLES = (
    SampleSpec("efg_100um", 3.6e-5, 1.7e-2, 7.13e-5, 170e-9),
    SampleSpec("efg_460um", 1.2e-4, 5.66e-2, 1.67e-5, 88e-9),
    SampleSpec("hemex_440um", 4.9e-4, 7.1e-2, 1.7e-5, 19e-9),
)

#: Below-cutoff waveguide: cutoff and withdrawn mode frequency in Hz.
WAVEGUIDE_CUTOFF_HZ = 20e9
WITHDRAWN_MODE_HZ = DEFAULT_OMEGA_REF / (2 * math.pi)
#: Fractional frequency pull per unit bulk participation (3% at p_bulk ~ 0.057).
FREQ_PULL = 0.53
#: Fractional increase of p_cond at p_bulk = 0.0566 (1%).
COND_PULL = 0.01 / 0.0566
#: Electric-to-magnetic bulk participation ratio of the dipper geometry.
E_TO_H_RATIO = 200.0


def sample_by_id(sample_id: str) -> SampleSpec:
    for s in SAMPLES:
        if s.sample_id == sample_id:
            return s
    raise KeyError(sample_id)


def profile(spec: SampleSpec, n_positions: int = 30, omega_ref: float = DEFAULT_OMEGA_REF
            ) -> ParticipationTable:
    """Evanescent insertion profile from withdrawn to inserted ``p_bulk``.

    Positions are uniform in ``z``, so ``p_bulk`` is geometric between the
    two end points.
    """
    wg = Waveguide(WAVEGUIDE_CUTOFF_HZ, omega_ref / (2 * math.pi), spec.p_bulk_inserted)
    z_max = float(position_for_participation(spec.p_bulk_withdrawn, wg))
    z = np.linspace(0.0, z_max, n_positions)
    p_bulk = np.asarray(attenuation_profile(z, wg))
    p_MA = X_MA[0] + X_MA[1] * p_bulk + X_MA[2] * p_bulk**2
    p_cond = X_COND * (1.0 + COND_PULL * p_bulk)
    omega = omega_ref * (1.0 - FREQ_PULL * p_bulk)
    return ParticipationTable.from_arrays(
        spec.sample_id, omega, p_cond, p_MA, p_bulk, spec.sa_ratio * p_bulk,
        p_bulk_H=p_bulk / E_TO_H_RATIO, z=z,
    )


def loss_factors(spec: SampleSpec, omega_ref: float = DEFAULT_OMEGA_REF) -> LossFactors:
    """Forward-model loss factors for a sample (substrate loss as ``q_sub``)."""
    return LossFactors(q_cond=Q_COND, q_MA=Q_MA, q_bulk=spec.q_sub, omega_ref=omega_ref)


def position_sweep(spec: SampleSpec, n_positions=30, fractional_error=0.01, rng=None,
                   omega_ref=DEFAULT_OMEGA_REF):
    """Forward-generated ``(table, Q_inv, sigma)`` with Gaussian fractional noise.

    With ``rng=None`` the data are noiseless.
    """
    table = profile(spec, n_positions, omega_ref)
    truth = predict_table(table, loss_factors(spec, omega_ref))
    sigma = fractional_error * truth
    if rng is None:
        return table, truth, sigma
    return table, truth + sigma * rng.standard_normal(len(truth)), sigma


def tls_model(n, q_hp, q_sat, n_c, alpha):
    return q_hp + q_sat / np.sqrt(1.0 + (np.asarray(n, float) / n_c) ** alpha)


def power_sweep_points(q_hp, q_sat, n_c, alpha, n_min=1e4, n_max=1e14, n_points=41,
                       fractional_error=0.01, rng=None):
    """Synthetic ``(n, Q_inv, sigma)`` following the TLS saturation model."""
    n = np.logspace(math.log10(n_min), math.log10(n_max), n_points)
    truth = tls_model(n, q_hp, q_sat, n_c, alpha)
    sigma = fractional_error * truth
    if rng is None:
        return n, truth, sigma
    return n, truth + sigma * rng.standard_normal(n_points), sigma


# ---------------------------------------------------------------------------
# bundled example data set

#: Seed of the bundled data set; regenerating with it reproduces the files.
BUNDLE_SEED = 20220613
#: Withdrawn-position participations used for the cavity-bound sweep.
WITHDRAWN_P_COND = 43.92e-6
WITHDRAWN_P_MA = 246.5e-9
#: Withdrawn sweep: saturation model whose asymptotes sit at the measured
#: bounds on the conductor and metal-air loss factors.
WITHDRAWN_Q_HP = 1.66e-4 * WITHDRAWN_P_COND
WITHDRAWN_Q_SAT = 38.2e-3 * WITHDRAWN_P_MA - WITHDRAWN_Q_HP
WITHDRAWN_TLS = (7e9, 0.5)
#: Inserted (HEMEX-like) sweep.
INSERTED_Q_HP = 2.0e-8
INSERTED_Q_SAT = 3.0e-8
INSERTED_TLS = (3e8, 0.40)


def bundle_files(seed: int = BUNDLE_SEED) -> dict[str, str]:
    """Text of every file in the bundled example data set, keyed by file name."""
    from .io import format_csv, position_sweep_rows, PositionSweep

    rng = np.random.default_rng(seed)
    sweeps = {}
    for spec in SAMPLES:
        table, q, s = position_sweep(spec, 30, 0.01, rng)
        sweeps[spec.sample_id] = PositionSweep(table, q, s)
    header, rows = position_sweep_rows(sweeps)
    files = {"position_sweep.csv": format_csv(header, rows)}

    n, q, s = power_sweep_points(WITHDRAWN_Q_HP, WITHDRAWN_Q_SAT, *WITHDRAWN_TLS,
                                 n_min=1e4, n_max=1e14, n_points=21, fractional_error=0.002)
    files["power_withdrawn.csv"] = format_csv(("n_photons", "Q_inv", "sigma"), zip(n, q, s))
    n, q, s = power_sweep_points(INSERTED_Q_HP, INSERTED_Q_SAT, *INSERTED_TLS,
                                 n_min=1e3, n_max=1e14, n_points=34, rng=rng)
    files["power_inserted.csv"] = format_csv(("n_photons", "Q_inv", "sigma"), zip(n, q, s))
    return files


def write_bundle(directory, seed: int = BUNDLE_SEED):
    from pathlib import Path

    from .io import atomic_write

    directory = Path(directory)
    for name, text in bundle_files(seed).items():
        atomic_write(directory / name, text)
