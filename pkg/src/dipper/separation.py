"""Bulk/surface separation, magnetic-loss bounds and coherence limits.

Each measured substrate loss ``q_sub`` of a sample with surface-to-bulk
participation ratio ``r`` defines the line

    q_sub = q_bulk + r * q_other

in the ``(q_bulk, q_other)`` plane. Two samples with different ratios pin
down both loss tangents; a single sample bounds them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InfeasibleError

#: Relative ratio difference below which two lines count as parallel.
PARALLEL_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintLine:
    """``q_sub = q_bulk + ratio * q_other`` for one sample."""

    q_sub: float
    ratio: float
    q_sub_sigma: float = 0.0
    ratio_sigma: float = 0.0
    kind: str = "equality"
    label: str = ""

    def __post_init__(self):
        if self.q_sub < 0:
            raise ValueError("q_sub must be non-negative")
        if not self.ratio > 0:
            raise ValueError("participation ratio must be positive")
        if self.q_sub_sigma < 0 or self.ratio_sigma < 0:
            raise ValueError("uncertainties must be non-negative")
        if self.kind not in ("equality", "upper-bound"):
            raise ValueError("kind must be 'equality' or 'upper-bound'")

    @property
    def intercept_x(self) -> float:
        return self.q_sub

    @property
    def intercept_y(self) -> float:
        return self.q_sub / self.ratio

    def other_at(self, q_bulk):
        """``q_other`` on the line at the given ``q_bulk``."""
        return (self.q_sub - np.asarray(q_bulk, dtype=float)) / self.ratio

    def polyline(self, n_points: int = 2):
        """Points from the y intercept to the x intercept."""
        x = np.linspace(0.0, self.intercept_x, n_points)
        return x, self.other_at(x)

    def to_dict(self) -> dict:
        return {"label": self.label, "q_sub_inv": self.q_sub, "q_sub_inv_sigma": self.q_sub_sigma,
                "ratio": self.ratio, "ratio_sigma": self.ratio_sigma, "kind": self.kind,
                "intercept_x": self.intercept_x, "intercept_y": self.intercept_y}


@dataclass(frozen=True)
class Estimate:
    """Point value with standard error, or an interval ``[lower, upper]``."""

    value: float
    sigma: float = 0.0
    lower: float | None = None
    upper: float | None = None
    unbounded: bool = False

    def to_dict(self) -> dict:
        d = {"value": self.value, "sigma": self.sigma}
        if self.lower is not None:
            d["lower"] = self.lower
        if self.upper is not None:
            d["upper"] = self.upper
        if self.unbounded:
            d["unbounded"] = True
        return d


@dataclass(frozen=True)
class LossPair:
    """Two loss tangents, e.g. ``(q_bulk, q_SA)`` or ``(q_E, q_H)``."""

    first: Estimate
    second: Estimate
    names: tuple = ("q_bulk_inv", "q_SA_inv")
    clipped: bool = False
    covariance: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for e in (self.first, self.second):
            if e.value < 0:
                raise ValueError("loss tangents must be non-negative")
            if e.lower is not None and e.upper is not None and e.lower > e.upper:
                raise ValueError("interval lower bound exceeds upper bound")

    def to_dict(self) -> dict:
        d = {self.names[0]: self.first.to_dict(), self.names[1]: self.second.to_dict(),
             "clipped": self.clipped, **self.meta}
        if self.covariance is not None:
            d["covariance"] = self.covariance.tolist()
        return d


def _solve_pair(qa, ra, qb, rb):
    det = rb - ra
    x = (rb * qa - ra * qb) / det
    y = (qb - qa) / det
    return x, y


def intersect(a: ConstraintLine, b: ConstraintLine, method: str = "jacobian",
              n_samples: int = 20000, seed: int = 0) -> LossPair:
    """Intersection of two equality lines with propagated uncertainty.

    ``method="jacobian"`` propagates the four input sigmas to first order;
    ``method="monte-carlo"`` samples Gaussian inputs and reports the sample
    covariance. Negative coordinates are clipped to zero and flagged.
    """
    if a.kind != "equality" or b.kind != "equality":
        raise ValueError("intersect needs two equality lines")
    if abs(b.ratio - a.ratio) <= PARALLEL_TOL * max(a.ratio, b.ratio):
        raise DegenerateGeometryError(
            f"lines are parallel: ratios {a.ratio:g} and {b.ratio:g}"
        )
    tol = math.hypot(a.ratio_sigma, b.ratio_sigma)
    if tol > 0 and abs(b.ratio - a.ratio) <= tol:
        raise DegenerateGeometryError(
            f"ratios {a.ratio:g} and {b.ratio:g} agree within their uncertainty {tol:g}"
        )
    x, y = _solve_pair(a.q_sub, a.ratio, b.q_sub, b.ratio)
    if method == "jacobian":
        d = b.ratio - a.ratio
        # partial derivatives with respect to (q_a, r_a, q_b, r_b)
        jx = np.array([b.ratio / d, (x - b.q_sub) / d, -a.ratio / d, (a.q_sub - x) / d])
        jy = np.array([-1.0 / d, y / d, 1.0 / d, -y / d])
        var_in = np.array([a.q_sub_sigma, a.ratio_sigma, b.q_sub_sigma, b.ratio_sigma]) ** 2
        jac = np.vstack([jx, jy])
        cov = (jac * var_in) @ jac.T
    elif method == "monte-carlo":
        rng = np.random.default_rng(seed)
        draws = rng.standard_normal((4, n_samples))
        qa = a.q_sub + a.q_sub_sigma * draws[0]
        ra = a.ratio + a.ratio_sigma * draws[1]
        qb = b.q_sub + b.q_sub_sigma * draws[2]
        rb = b.ratio + b.ratio_sigma * draws[3]
        xs, ys = _solve_pair(qa, ra, qb, rb)
        cov = np.cov(np.vstack([xs, ys]))
    else:
        raise ValueError("method must be 'jacobian' or 'monte-carlo'")
    clipped = x < 0 or y < 0
    sx, sy = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    return LossPair(Estimate(max(x, 0.0), sx), Estimate(max(y, 0.0), sy), clipped=clipped,
                    covariance=cov, meta={"method": method, "raw": [x, y]})


def single_sample_bounds(line: ConstraintLine) -> LossPair:
    """Upper bounds from one line: each loss could carry the whole ``q_sub``."""
    x_up, y_up = line.intercept_x, line.intercept_y
    sx = line.q_sub_sigma
    sy = math.hypot(line.q_sub_sigma / line.ratio, y_up * line.ratio_sigma / line.ratio)
    return LossPair(Estimate(x_up, sx, lower=0.0, upper=x_up),
                    Estimate(y_up, sy, lower=0.0, upper=y_up),
                    meta={"bound": "upper"})


def magnetic_bounds(q_bulk: float, dipper_ratio: float, stripline_q: float,
                    p_E: float, p_H: float) -> LossPair:
    """Intervals for ``(q_E, q_H)`` from a dipper measurement and a stripline Q.

    The dipper fixes ``q_E + q_H / dipper_ratio = q_bulk`` where
    ``dipper_ratio`` is ``p_E / p_H`` of the dipper sample (``inf`` for no
    magnetic participation). A stripline resonator of quality factor
    ``stripline_q`` with participations ``p_E, p_H`` requires
    ``p_E q_E + p_H q_H <= 1 / stripline_q``.
    """
    if not stripline_q > 0:
        raise ValueError("stripline Q must be positive")
    if not dipper_ratio > 0 or p_E < 0 or p_H < 0 or q_bulk < 0:
        raise ValueError("need positive dipper ratio and non-negative participations")
    budget = 1.0 / stripline_q
    h = 0.0 if math.isinf(dipper_ratio) else 1.0 / dipper_ratio
    meta = {"stripline_Q": stripline_q, "p_E": p_E, "p_H": p_H, "dipper_ratio": dipper_ratio}
    if h == 0.0:
        if p_E * q_bulk > budget * (1 + 1e-12):
            raise InfeasibleError("stripline Q is below the dipper's electric loss alone")
        q_h_max = math.inf if p_H == 0 else (budget - p_E * q_bulk) / p_H
        return LossPair(Estimate(q_bulk, lower=q_bulk, upper=q_bulk),
                        Estimate(0.0, lower=0.0, upper=q_h_max, unbounded=math.isinf(q_h_max)),
                        names=("q_E_inv", "q_H_inv"), meta=meta)
    # along the dipper line q_E = q_bulk - h q_H; stripline: p_E q_bulk + (p_H - p_E h) q_H <= budget
    slope = p_H - p_E * h
    base = p_E * q_bulk
    q_h_line_max = q_bulk / h
    if slope > 0:
        q_h_max = min((budget - base) / slope, q_h_line_max)
        if budget < base * (1 - 1e-12):
            raise InfeasibleError("dipper and stripline constraints do not intersect")
        q_h_max = max(q_h_max, 0.0)
    elif slope < 0:
        # stripline binds at small q_H instead; the feasible set is q_H >= q_h_min
        q_h_min = (budget - base) / slope
        if q_h_min > q_h_line_max:
            raise InfeasibleError("dipper and stripline constraints do not intersect")
        q_h_min = max(q_h_min, 0.0)
        return LossPair(Estimate(q_bulk - h * q_h_min, lower=0.0, upper=q_bulk - h * q_h_min),
                        Estimate(q_h_min, lower=q_h_min, upper=q_h_line_max),
                        names=("q_E_inv", "q_H_inv"), meta=meta)
    else:
        if base > budget * (1 + 1e-12):
            raise InfeasibleError("dipper and stripline constraints do not intersect")
        q_h_max = q_h_line_max
    q_e_min = q_bulk - h * q_h_max
    return LossPair(Estimate(q_bulk, lower=q_e_min, upper=q_bulk),
                    Estimate(q_h_max, lower=0.0, upper=q_h_max),
                    names=("q_E_inv", "q_H_inv"), meta=meta)


@dataclass(frozen=True)
class CoherenceLimit:
    """Loss-limited quality factor and lifetime; ``unbounded`` when no loss applies."""

    q_factor: float
    t1_s: float
    unbounded: bool = False

    def to_dict(self) -> dict:
        if self.unbounded:
            return {"unbounded": True}
        return {"Q": self.q_factor, "T1_s": self.t1_s, "unbounded": False}


def coherence_limit(p: float, q_inv: float, f_Hz: float) -> CoherenceLimit:
    """``Q = 1/(p q)`` and ``T1 = Q / (2 pi f)`` for a single loss channel."""
    if not f_Hz > 0:
        raise ValueError("frequency must be positive")
    if p < 0 or q_inv < 0:
        raise ValueError("participation and loss tangent must be non-negative")
    loss = p * q_inv
    if loss == 0:
        return CoherenceLimit(math.inf, math.inf, unbounded=True)
    q = 1.0 / loss
    return CoherenceLimit(q, q / (2 * math.pi * f_Hz))


def pcond_check(q_inserted: float, q_withdrawn: float) -> float:
    """Fractional change in conductor participation from two conductor-dominated losses."""
    if q_withdrawn == 0:
        raise ZeroDivisionError("withdrawn loss is zero")
    return (q_inserted - q_withdrawn) / q_withdrawn


def summary(materials: dict, projections: dict | None = None) -> dict:
    """Assemble a per-material report.

    ``materials`` maps a material name to a :class:`LossPair` (from
    :func:`intersect` or :func:`single_sample_bounds`); ``projections`` maps
    names to :class:`CoherenceLimit`.
    """
    out = {"materials": {k: v.to_dict() for k, v in materials.items()}}
    if projections:
        out["coherence_limits"] = {k: v.to_dict() for k, v in projections.items()}
    return out
