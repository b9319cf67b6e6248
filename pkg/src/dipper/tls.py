"""Two-level-system saturation fits of power sweeps and the bounds they imply.

The phenomenological model is::

    Q^-1(n) = Q_hp^-1 + Q_sat^-1 / sqrt(1 + (n / n_c)^alpha)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError

#: Points above this photon number are excluded from fits by default.
DEFAULT_N_CUTOFF = 2e10
ALPHA_STARTS = (0.25, 0.5, 1.0)
ALPHA_MAX = 2.0
MIN_POINTS = 5
MIN_DECADES = 2.0


def tls_loss(n, q_hp, q_sat, n_c, alpha):
    """Evaluate the saturation model at photon numbers ``n``."""
    n = np.asarray(n, dtype=float)
    return q_hp + q_sat / np.sqrt(1.0 + (n / n_c) ** alpha)


@dataclass(frozen=True)
class PowerSweep:
    """Loss versus photon number at one sample position."""

    n: np.ndarray
    q_inv: np.ndarray
    sigma: np.ndarray
    position: str = "inserted"
    p_cond: float | None = None
    p_MA: float | None = None
    p_bulk: float | None = None

    def __post_init__(self):
        n, q, s = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (self.n, self.q_inv, self.sigma))
        if not n.shape == q.shape == s.shape:
            raise ValueError("n, q_inv and sigma must have equal length")
        if n.size == 0:
            raise ValueError("empty power sweep")
        if np.any(n <= 0) or np.any(q <= 0) or np.any(s <= 0):
            raise ValueError("n, Q_inv and sigma must all be positive")
        if self.position not in ("withdrawn", "inserted"):
            raise ValueError("position must be 'withdrawn' or 'inserted'")
        order = np.argsort(n, kind="stable")
        object.__setattr__(self, "n", n[order])
        object.__setattr__(self, "q_inv", q[order])
        object.__setattr__(self, "sigma", s[order])

    def __len__(self):
        return self.n.size

    def below(self, n_cutoff: float | None) -> "PowerSweep":
        if n_cutoff is None:
            return self
        keep = self.n <= n_cutoff
        return PowerSweep(self.n[keep], self.q_inv[keep], self.sigma[keep], self.position,
                          self.p_cond, self.p_MA, self.p_bulk)

    def check_fittable(self):
        if len(self) < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points to fit, got {len(self)}")
        span = math.log10(self.n[-1] / self.n[0])
        if span < MIN_DECADES:
            raise ValueError(f"points span {span:.2f} decades of n, need {MIN_DECADES:g}")


@dataclass(frozen=True)
class TlsFit:
    q_hp: float
    q_sat: float
    n_c: float
    alpha: float
    stderr: dict
    cost: float
    converged: bool = True
    n_used: int = 0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __call__(self, n):
        return tls_loss(n, self.q_hp, self.q_sat, self.n_c, self.alpha)

    @property
    def q_lp(self) -> float:
        return self.q_hp + self.q_sat

    def params(self) -> dict:
        return {"Q_hp_inv": self.q_hp, "Q_sat_inv": self.q_sat, "n_c": self.n_c,
                "alpha": self.alpha}

    def to_dict(self) -> dict:
        return {
            **self.params(),
            "stderr": dict(self.stderr),
            "cost": self.cost,
            "converged": self.converged,
            "n_used": self.n_used,
            "normalized_residuals": [float(r) for r in self.residuals],
        }


def _n_c_starts(n):
    lo = math.log10(n.min() / 10.0)
    hi = math.log10(n.max() * 10.0)
    count = max(3, int(math.ceil(hi - lo)) + 1)
    return np.linspace(lo, hi, count)


def fit_tls(sweep: PowerSweep, n_cutoff: float | None = DEFAULT_N_CUTOFF) -> TlsFit:
    """Weighted nonlinear least-squares fit with a grid of starting points.

    ``n_c`` is fitted in log10 and started on a grid spanning a decade beyond
    the data on either side; ``alpha`` starts at 0.25, 0.5 and 1. The lowest
    cost wins, ties going to the earliest start (smallest ``n_c``).
    Standard errors come from the Jacobian at the optimum using the given
    sigmas as absolute errors.
    """
    data = sweep.below(n_cutoff)
    data.check_fittable()
    n, y, s = data.n, data.q_inv, data.sigma
    scale = float(np.max(y))
    log_n = np.log10(n)

    def resid(p):
        q_hp, q_sat, log_nc, alpha = p
        model = tls_loss(n, q_hp * scale, q_sat * scale, 10.0**log_nc, alpha)
        return (model - y) / s

    lo = np.array([0.0, 0.0, log_n.min() - 6.0, 1e-3])
    hi = np.array([np.inf, np.inf, log_n.max() + 6.0, ALPHA_MAX])
    q_hp0 = float(y.min()) / scale
    q_sat0 = max(float(y.max() - y.min()), 1e-3 * float(y.max())) / scale
    best = None
    for log_nc in _n_c_starts(n):
        for alpha in ALPHA_STARTS:
            x0 = np.clip([q_hp0, q_sat0, log_nc, alpha], lo, hi)
            res = least_squares(resid, x0, bounds=(lo, hi), method="trf",
                                x_scale=[1.0, 1.0, 1.0, 0.1], max_nfev=2000)
            if res.status <= 0:
                continue
            if best is None or res.cost < best.cost * (1 - 1e-12):
                best = res
    if best is None:
        raise FitError("TLS fit did not converge from any start", best_cost=None)
    q_hp, q_sat, log_nc, alpha = best.x
    n_c = 10.0**log_nc
    stderr = _stderr(best.jac, scale, n_c)
    return TlsFit(
        q_hp=float(q_hp * scale),
        q_sat=float(q_sat * scale),
        n_c=float(n_c),
        alpha=float(alpha),
        stderr=stderr,
        cost=float(best.cost),
        converged=True,
        n_used=len(data),
        residuals=best.fun.copy(),
    )


def _stderr(jac, scale, n_c) -> dict:
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    d = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return {
        "Q_hp_inv": float(d[0] * scale),
        "Q_sat_inv": float(d[1] * scale),
        "n_c": float(d[2] * n_c * math.log(10.0)),
        "alpha": float(d[3]),
    }


def saturation_fraction(n, fit: TlsFit):
    """Fraction ``F`` of the saturable loss already saturated at ``n`` photons."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("n must be non-negative")
    return 1.0 - 1.0 / np.sqrt(1.0 + (n / fit.n_c) ** fit.alpha)


def low_power_boundary(f_max: float, fit: TlsFit) -> float:
    """Largest photon number at which no more than ``f_max`` of the loss is saturated."""
    if not 0.0 < f_max < 1.0:
        raise ValueError("F_max must lie in (0, 1)")
    if fit.alpha <= 0:
        raise ValueError("alpha must be positive")
    return fit.n_c * (1.0 / (1.0 - f_max) ** 2 - 1.0) ** (1.0 / fit.alpha)


@dataclass(frozen=True)
class CavityBounds:
    q_MA_lower: float
    q_MA_upper: float
    q_cond_upper: float
    q_cond_lower: float = 0.0
    delta_source: str = "raw"

    def as_solver_bounds(self) -> dict:
        return {"q_cond": (self.q_cond_lower, self.q_cond_upper),
                "q_MA": (self.q_MA_lower, self.q_MA_upper)}

    def to_dict(self) -> dict:
        return {"q_MA_lower": self.q_MA_lower, "q_MA_upper": self.q_MA_upper,
                "q_cond_lower": self.q_cond_lower, "q_cond_upper": self.q_cond_upper,
                "delta_source": self.delta_source}


def cavity_bounds(sweep: PowerSweep, p_cond: float, p_MA: float,
                  fit: TlsFit | None = None) -> CavityBounds:
    """Bounds on the cavity loss factors from a withdrawn power sweep.

    Conductor loss is taken to be power independent, so the smallest loss
    bounds it from above and any power dependence is charged to the
    metal-air interface. The change in loss is the fitted ``Q_sat^-1`` when
    a converged fit is supplied, otherwise max minus min of the data.
    """
    if not p_cond > 0 or not p_MA > 0:
        raise ValueError("p_cond and p_MA must be positive")
    q = sweep.q_inv
    upper_ma = float(q.max()) / p_MA
    if fit is not None and fit.converged:
        delta, source = fit.q_sat, "fit"
    else:
        delta, source = float(q.max() - q.min()), "raw"
    lower_ma = min(delta / p_MA, upper_ma)
    return CavityBounds(q_MA_lower=lower_ma, q_MA_upper=upper_ma,
                        q_cond_upper=float(q.min()) / p_cond, delta_source=source)


def sweep_from_points(points, position="inserted", **participations) -> PowerSweep:
    """Build a :class:`PowerSweep` from an object with ``n``, ``q_inv`` and ``sigma``."""
    return PowerSweep(points.n, points.q_inv, points.sigma, position, **participations)


def fit_report(sweep: PowerSweep, fit: TlsFit, n_cutoff=DEFAULT_N_CUTOFF,
               bounds: CavityBounds | None = None) -> dict:
    report = {
        "position": sweep.position,
        "n_cutoff": n_cutoff if n_cutoff is not None else "none",
        "fit": fit.to_dict(),
        "points": [
            {"n_photons": float(n), "Q_inv": float(q), "sigma": float(s),
             "model": float(fit(n)), "used": bool(n_cutoff is None or n <= n_cutoff)}
            for n, q, s in zip(sweep.n, sweep.q_inv, sweep.sigma)
        ],
    }
    if bounds is not None:
        report["cavity_bounds"] = bounds.to_dict()
    return report
