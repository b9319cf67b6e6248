"""Cavity, pulse and frequency-jitter descriptions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

JITTER_KINDS = ("none", "lines", "lorentzian", "one_over_f")


@dataclass(frozen=True)
class JitterSpectrum:
    """One-sided power spectral density ``S(f)`` of the fractional frequency jitter.

    Kinds
    -----
    ``none``
        No jitter.
    ``lines``
        Discrete lines; ``lines`` holds ``(f_Hz, variance)`` pairs so that
        each line contributes ``variance`` to ``<eps^2>``.
    ``lorentzian``
        ``S(f) = scale / (1 + ((f - center_Hz) / corner_Hz)^2)`` on
        ``[f_min_Hz, f_max_Hz]``.
    ``one_over_f``
        ``S(f) = scale * f_min_Hz / f`` on ``[f_min_Hz, f_max_Hz]``.

    ``scale`` is in 1/Hz. Continuous spectra are synthesized from
    ``n_tones`` log-spaced sinusoids with random phases.
    """

    kind: str = "none"
    scale: float = 0.0
    corner_Hz: float = 1.0
    center_Hz: float = 0.0
    f_min_Hz: float = 1.0
    f_max_Hz: float = 1e4
    lines: tuple = ()
    n_tones: int = 256

    def __post_init__(self):
        if self.kind not in JITTER_KINDS:
            raise ValueError(f"unknown jitter kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("jitter scale must be non-negative")
        if self.kind in ("lorentzian", "one_over_f"):
            if not 0 < self.f_min_Hz < self.f_max_Hz:
                raise ValueError("need 0 < f_min_Hz < f_max_Hz")
            if self.corner_Hz <= 0:
                raise ValueError("corner_Hz must be positive")
            if self.n_tones < 1:
                raise ValueError("n_tones must be positive")
        lines = tuple((float(f), float(v)) for f, v in self.lines)
        if any(f <= 0 or v < 0 for f, v in lines):
            raise ValueError("lines need positive frequency and non-negative variance")
        object.__setattr__(self, "lines", lines)

    @classmethod
    def none(cls):
        return cls()

    def psd(self, f):
        """``S(f)`` in 1/Hz for the continuous kinds (zero for ``none``/``lines``)."""
        f = np.asarray(f, dtype=float)
        inside = (f >= self.f_min_Hz) & (f <= self.f_max_Hz)
        if self.kind == "lorentzian":
            s = self.scale / (1.0 + ((f - self.center_Hz) / self.corner_Hz) ** 2)
        elif self.kind == "one_over_f":
            with np.errstate(divide="ignore"):
                s = self.scale * self.f_min_Hz / f
        else:
            return np.zeros_like(f)
        return np.where(inside, s, 0.0)

    @property
    def is_trivial(self) -> bool:
        return self.variance() == 0.0

    def variance(self) -> float:
        """``<eps^2>``, the integral of ``S(f)`` plus line variances."""
        if self.kind == "none":
            return 0.0
        if self.kind == "lines":
            return float(sum(v for _, v in self.lines))
        val, _ = integrate.quad(self.psd, self.f_min_Hz, self.f_max_Hz,
                                points=self._breakpoints(), limit=200)
        return float(val)

    def _breakpoints(self):
        pts = [p for p in (self.center_Hz, self.center_Hz + self.corner_Hz, self.corner_Hz)
               if self.f_min_Hz < p < self.f_max_Hz]
        return sorted(set(pts)) or None

    def rms_linewidths(self, omega0: float, kappa_tot: float) -> float:
        """RMS frequency excursion in units of the linewidth ``kappa_tot / 2 pi``."""
        return omega0 * math.sqrt(self.variance()) / kappa_tot

    def with_rms_linewidths(self, n_linewidths: float, omega0: float, kappa_tot: float):
        """Rescaled copy whose rms excursion is ``n_linewidths`` linewidths."""
        var = self.variance()
        if var == 0:
            raise ValueError("cannot rescale an empty spectrum")
        factor = (n_linewidths * kappa_tot / omega0) ** 2 / var
        if self.kind == "lines":
            return replace(self, lines=tuple((f, v * factor) for f, v in self.lines))
        return replace(self, scale=self.scale * factor)

    def tones(self):
        """Frequencies (Hz) and cosine amplitudes of the synthesis sinusoids.

        A tone of amplitude ``A`` with uniform random phase has variance
        ``A^2 / 2``, so amplitudes are ``sqrt(2 * power_in_bin)``.
        """
        if self.kind == "none":
            return np.zeros(0), np.zeros(0)
        if self.kind == "lines":
            f = np.array([f for f, _ in self.lines])
            v = np.array([v for _, v in self.lines])
            return f, np.sqrt(2.0 * v)
        edges = np.geomspace(self.f_min_Hz, self.f_max_Hz, self.n_tones + 1)
        centers = np.sqrt(edges[:-1] * edges[1:])
        sub = np.linspace(0.0, 1.0, 17)
        grid = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * sub[None, :]
        power = integrate.trapezoid(self.psd(grid), grid, axis=1)
        return centers, np.sqrt(2.0 * power)

    @property
    def f_max(self) -> float:
        """Highest frequency present in the synthesized jitter."""
        f, a = self.tones()
        f = f[a > 0]
        return float(f.max()) if f.size else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "scale_per_Hz": self.scale, "corner_Hz": self.corner_Hz,
            "center_Hz": self.center_Hz, "f_min_Hz": self.f_min_Hz, "f_max_Hz": self.f_max_Hz,
            "lines_Hz_variance": [list(x) for x in self.lines], "n_tones": self.n_tones,
        }

    @classmethod
    def from_dict(cls, d: dict):
        d = dict(d)
        rms = d.pop("rms_linewidths", None)
        spec = cls(
            kind=d.get("kind", "none"),
            scale=float(d.get("scale_per_Hz", 0.0)),
            corner_Hz=float(d.get("corner_Hz", 1.0)),
            center_Hz=float(d.get("center_Hz", 0.0)),
            f_min_Hz=float(d.get("f_min_Hz", 1.0)),
            f_max_Hz=float(d.get("f_max_Hz", 1e4)),
            lines=tuple(tuple(x) for x in d.get("lines_Hz_variance", ())),
            n_tones=int(d.get("n_tones", 256)),
        )
        return spec, rms


@dataclass(frozen=True)
class CavityModel:
    """Single-port cavity: rates in rad/s, ``omega0`` the mean resonance."""

    omega0: float
    kappa_tot: float
    kappa_ext: float
    jitter: JitterSpectrum = field(default_factory=JitterSpectrum)

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if not self.kappa_tot > 0:
            raise ValueError("kappa_tot must be positive")
        if not 0 <= self.kappa_ext <= self.kappa_tot:
            raise ValueError("need 0 <= kappa_ext <= kappa_tot")

    @property
    def q_tot(self) -> float:
        return self.omega0 / self.kappa_tot

    @property
    def kappa_int(self) -> float:
        return self.kappa_tot - self.kappa_ext

    def to_dict(self) -> dict:
        return {
            "omega0_rad_s": self.omega0, "kappa_tot_rad_s": self.kappa_tot,
            "kappa_ext_rad_s": self.kappa_ext, "jitter": self.jitter.to_dict(),
        }


@dataclass(frozen=True)
class Pulse:
    """Rectangular drive: amplitude in sqrt(photons/s), duration in s, detuning in rad/s."""

    a0: float
    t_p: float
    detuning: float = 0.0

    def __post_init__(self):
        if not self.t_p > 0:
            raise ValueError("pulse duration must be positive")
        if self.a0 < 0:
            raise ValueError("pulse amplitude must be non-negative")

    def to_dict(self) -> dict:
        return {"a0_sqrt_per_s": self.a0, "t_p_s": self.t_p, "detuning_rad_s": self.detuning}
