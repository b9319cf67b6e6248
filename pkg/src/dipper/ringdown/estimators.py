"""Decay-rate, coupling-rate and photon-number estimators for ringdown data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants, integrate

from ..errors import NumericalError
from .model import CavityModel, JitterSpectrum
from .simulate import ShotEnsemble

HBAR = constants.hbar
FIT_MODES = ("power-average", "field-average")
#: Samples whose averaged value is below this multiple of its noise floor are dropped.
NOISE_FLOOR_FACTOR = 3.0


class InsufficientSNR(NumericalError):
    """Too few usable samples in the fit window."""


@dataclass(frozen=True)
class DecayFit:
    """Exponential fit ``P(t) = contrast^2 * exp(-rate (t - t_ref))``.

    ``contrast`` is the fitted field amplitude at ``t_ref`` (the square root
    of the fitted power prefactor), in the units of the recorded field.
    """

    rate: float
    rate_stderr: float
    contrast: float
    mode: str
    t_ref: float
    n_used: int
    contrast_stderr: float = 0.0

    def power_at(self, t):
        return self.contrast**2 * np.exp(-self.rate * (np.asarray(t) - self.t_ref))

    def to_dict(self) -> dict:
        return {
            "rate_per_s": self.rate, "rate_stderr_per_s": self.rate_stderr,
            "contrast": self.contrast, "contrast_stderr": self.contrast_stderr,
            "mode": self.mode, "t_ref_s": self.t_ref, "n_used": self.n_used,
        }


def _averaged(ensemble: ShotEnsemble, mode: str, sl: slice):
    shots = ensemble.shots[:, sl]
    n = ensemble.n_shots
    if mode == "power-average":
        p = np.abs(shots) ** 2
        value = p.mean(axis=0) - ensemble.noise_power
        var = p.var(axis=0) / n
        floor = np.sqrt(var)
    else:
        m = shots.mean(axis=0)
        s2 = np.mean(np.abs(shots - m) ** 2, axis=0)
        value = np.abs(m) ** 2
        floor = s2 / n
        var = 2.0 * value * floor + floor**2
    return value, var, floor


def fit_decay(ensemble: ShotEnsemble, window, mode: str = "power-average") -> DecayFit:
    """Weighted log-linear fit of the ensemble-averaged ringdown.

    ``power-average`` fits ``<|a_out|^2>`` and yields the energy decay rate,
    insensitive to frequency jitter. ``field-average`` fits ``|<a_out>|^2``,
    which also decays through dephasing. The fit stops at the first sample
    that falls below ``NOISE_FLOOR_FACTOR`` times its own noise floor.

    Parameters
    ----------
    ensemble : ShotEnsemble
    window : (float, float)
        Start and end time in s; must lie after the pulse.
    mode : {"power-average", "field-average"}
    """
    if mode not in FIT_MODES:
        raise ValueError(f"mode must be one of {FIT_MODES}")
    t_start, t_end = map(float, window)
    if t_start < ensemble.t_p - 1e-12 * max(1.0, ensemble.t_p):
        raise ValueError("fit window must start after the pulse")
    if t_end <= t_start:
        raise ValueError("empty fit window")
    t_all = ensemble.times
    i0 = int(np.searchsorted(t_all, t_start - 1e-9 * ensemble.dt))
    i1 = int(np.searchsorted(t_all, t_end + 1e-9 * ensemble.dt, side="right"))
    sl = slice(i0, i1)
    t = t_all[sl]
    value, var, floor = _averaged(ensemble, mode, sl)
    below = value <= NOISE_FLOOR_FACTOR * floor
    stop = int(np.argmax(below)) if below.any() else len(value)
    if stop < 3:
        raise InsufficientSNR(
            f"only {stop} samples above {NOISE_FLOOR_FACTOR:g}x the noise floor in the window"
        )
    t, value, var = t[:stop], value[:stop], var[:stop]
    y = np.log(value)
    # var(log P) = var(P) / P^2, floored to keep weights finite for noiseless data
    var_log = np.maximum(var / value**2, 1e-24)
    w = 1.0 / var_log
    x = t - t_start
    design = np.column_stack([np.ones_like(x), -x])
    aw = design * np.sqrt(w)[:, None]
    yw = y * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(aw, yw, rcond=None)
    resid = yw - aw @ coef
    dof = len(y) - 2
    scale = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = np.linalg.inv(aw.T @ aw) * scale
    log_a, rate = coef
    contrast = math.exp(0.5 * log_a)
    return DecayFit(
        rate=float(rate),
        rate_stderr=float(math.sqrt(max(cov[1, 1], 0.0))),
        contrast=contrast,
        mode=mode,
        t_ref=t_start,
        n_used=len(y),
        contrast_stderr=0.5 * contrast * float(math.sqrt(max(cov[0, 0], 0.0))),
    )


def extract_kappa_ext(p_start: float, p_ring: float, kappa_tot: float, t_p: float,
                      method: str = "exact") -> float:
    """Coupling rate from the output power just after the pulse starts and ends.

    ``exact`` inverts the rectangular-pulse response; ``short-pulse`` is its
    first-order form ``sqrt(P_ring / P_start) / t_p``.
    """
    if not p_start > 0:
        raise ValueError("P_start must be positive")
    if p_ring < 0:
        raise ValueError("P_ring must be non-negative")
    if not t_p > 0:
        raise ValueError("t_p must be positive")
    root = math.sqrt(p_ring / p_start)
    if method == "short-pulse":
        return root / t_p
    if method != "exact":
        raise ValueError("method must be 'exact' or 'short-pulse'")
    if not kappa_tot > 0:
        raise ValueError("exact method needs kappa_tot > 0")
    return kappa_tot / (2.0 * -math.expm1(-0.5 * kappa_tot * t_p)) * root


def reference_power(a0: float, gain: float = 1.0, compression: float = 1.0) -> float:
    """``P_start`` from an off-resonance reference pulse.

    Off resonance the port reflects the pulse unchanged, so the receiver
    sees ``gain * a0^2``; ``compression`` (<= 1) models amplifier
    compression on this large pulse only.
    """
    if not gain > 0 or not 0 < compression <= 1:
        raise ValueError("need gain > 0 and 0 < compression <= 1")
    return gain * compression * a0**2


def ring_power_at_pulse_end(kappa_ext, kappa_tot, a0, t_p):
    """``<|a_out(t_p+)|^2>`` for a resonant rectangular pulse."""
    return 4.0 * a0**2 * kappa_ext**2 / kappa_tot**2 * math.expm1(-0.5 * kappa_tot * t_p) ** 2


# ---------------------------------------------------------------------------
# photon number


def photons_from_output(a_out_sq, kappa_ext):
    """``n = |a_out|^2 / kappa_ext`` after the pulse."""
    if not kappa_ext > 0:
        raise ValueError("kappa_ext must be positive")
    return a_out_sq / kappa_ext


def photons_from_output_power(p_out, q_ext, omega_a):
    """``n = P_out Q_ext / (hbar omega_a^2)`` with ``P_out`` in W."""
    return p_out * q_ext / (HBAR * omega_a**2)


def photons_from_input(a0, t_p, kappa_ext, kappa_tot):
    """Photons injected by a resonant rectangular pulse of amplitude ``a0``."""
    if not kappa_tot > 0:
        raise ValueError("kappa_tot must be positive")
    x = 0.5 * kappa_tot * t_p
    # 1 - 2 e^-x + e^-2x = (1 - e^-x)^2, written with expm1 for small x
    return 4.0 * kappa_ext * a0**2 / kappa_tot**2 * math.expm1(-x) ** 2


def photons_short_pulse(a0, t_p, kappa_ext):
    """Short-pulse limit ``kappa_ext a0^2 t_p^2``."""
    return kappa_ext * a0**2 * t_p**2


def photons_from_input_power(p_in, t_p, q_ext):
    """Short-pulse photon number from the drive power ``P_in`` in W."""
    return p_in * t_p**2 / (HBAR * q_ext)


_PHOTON_METHODS = {
    "output": photons_from_output,
    "output-power": photons_from_output_power,
    "input": photons_from_input,
    "short-pulse": photons_short_pulse,
    "input-power": photons_from_input_power,
}


def photon_number(method: str, **kwargs):
    """Dispatch to one of the photon-number estimators by name."""
    try:
        fn = _PHOTON_METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(_PHOTON_METHODS)}")
    return fn(**kwargs)


# ---------------------------------------------------------------------------
# spectral weights and field decay


def w0(f, t):
    """``sin^2(pi f t) / (pi f)^2``; equals ``t^2`` at ``f = 0``."""
    f = np.asarray(f, dtype=float)
    t = np.asarray(t, dtype=float)
    # t^2 sinc^2 avoids the 0/0 at f = 0 (np.sinc is sin(pi x)/(pi x))
    return t**2 * np.sinc(f * t) ** 2


def w1(omega, t_m, kappa_tot):
    """``(1 - sinc^2(omega t_m / 2)) / ((kappa_tot/2)^2 + omega^2)``."""
    omega = np.asarray(omega, dtype=float)
    x = omega * t_m / 2.0
    return (1.0 - np.sinc(x / np.pi) ** 2) / ((kappa_tot / 2.0) ** 2 + omega**2)


def spectral_weight(kind: str, freq, t, kappa_tot=None):
    """``W0(f, t)`` (``freq`` in Hz) or ``W1(omega, t_m)`` (``freq`` in rad/s)."""
    if kind == "W0":
        return w0(freq, t)
    if kind == "W1":
        if kappa_tot is None:
            raise ValueError("W1 needs kappa_tot")
        return w1(freq, t, kappa_tot)
    raise ValueError("kind must be 'W0' or 'W1'")


def dephasing_variance(spectrum: JitterSpectrum, omega0: float, t: float) -> float:
    """``<theta(t)^2> = omega0^2 * integral S(f) W0(f, t) df``."""
    if spectrum.kind == "none":
        return 0.0
    if spectrum.kind == "lines":
        return float(omega0**2 * sum(v * w0(f, t) for f, v in spectrum.lines))
    integrand = lambda f: float(spectrum.psd(f) * w0(f, t))  # noqa: E731
    pts = spectrum._breakpoints() or []
    if t > 0:
        # W0 oscillates with period 1/t; hint quad at the first few nodes
        pts = sorted(set(pts) | {k / t for k in range(1, 50)
                                 if spectrum.f_min_Hz < k / t < spectrum.f_max_Hz})
    val, _ = integrate.quad(integrand, spectrum.f_min_Hz, spectrum.f_max_Hz,
                            points=pts or None, limit=500)
    return float(omega0**2 * val)


@dataclass(frozen=True)
class FieldDecayPrediction:
    t: np.ndarray
    amplitude: np.ndarray
    correction: np.ndarray
    valid: np.ndarray


def predict_field_decay(cavity: CavityModel, t) -> FieldDecayPrediction:
    """Second-order prediction of ``|<a_out>|(t)`` for unit initial amplitude.

    ``amplitude = exp(-kappa_tot t / 2) * (1 - correction)`` with
    ``correction = <theta^2> / 2``. ``valid`` is False where the correction
    exceeds 0.5 and the expansion should not be trusted.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    corr = np.array([0.5 * dephasing_variance(cavity.jitter, cavity.omega0, tk) for tk in t])
    amp = np.exp(-0.5 * cavity.kappa_tot * t) * (1.0 - corr)
    return FieldDecayPrediction(t, amp, corr, corr <= 0.5)
