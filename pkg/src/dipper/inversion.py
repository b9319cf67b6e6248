"""Bounded weighted least squares on the participation matrix.

Each sample contributes rows ``[p_cond * omega_ref / omega, p_MA, p_bulk]``
and gets its own substrate column; the conductor and metal-air columns are
shared by all samples measured in the same cavity unless told otherwise.
The solver is a small active-set method over box constraints, which is
exact for the handful of unknowns involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, NumericalError, RankDeficientError
from .participation import (
    DEFAULT_OMEGA_REF,
    LossFactors,
    ParticipationTable,
    PolynomialBasis,
    predict_table,
)

#: Relative singular-value threshold (after column equilibration) below which
#: the design is reported as rank deficient.
RANK_RCOND = 1e-10


@dataclass(frozen=True)
class LossSystem:
    """Joint position-sweep system for one or more samples.

    Parameters
    ----------
    tables : sequence of ParticipationTable
    q_inv, sigma : sequence of array_like
        Measured ``Q^-1`` and its standard error, one array per table.
    bounds : dict
        ``name -> (lower, upper)`` for any column name; defaults ``(0, inf)``.
    share_cond, share_MA : bool
        Use a single conductor / metal-air loss factor for all samples.
    """

    tables: tuple[ParticipationTable, ...]
    q_inv: tuple[np.ndarray, ...]
    sigma: tuple[np.ndarray, ...]
    bounds: dict = field(default_factory=dict)
    share_cond: bool = True
    share_MA: bool = True
    omega_ref: float = DEFAULT_OMEGA_REF

    def __init__(self, tables, q_inv, sigma, bounds=None, share_cond=True, share_MA=True,
                 omega_ref=DEFAULT_OMEGA_REF):
        tables = tuple(tables)
        q_inv = tuple(np.asarray(q, dtype=float) for q in q_inv)
        sigma = tuple(np.asarray(s, dtype=float) for s in sigma)
        if not (len(tables) == len(q_inv) == len(sigma)):
            raise ValueError("tables, q_inv and sigma must have the same length")
        for t, q, s in zip(tables, q_inv, sigma):
            if q.shape != (len(t),) or s.shape != (len(t),):
                raise ValueError(f"measurement count does not match rows of {t.sample_id!r}")
        ids = [t.sample_id for t in tables]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "q_inv", q_inv)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "bounds", dict(bounds or {}))
        object.__setattr__(self, "share_cond", share_cond)
        object.__setattr__(self, "share_MA", share_MA)
        object.__setattr__(self, "omega_ref", omega_ref)
        unknown = set(self.bounds) - set(self.columns)
        if unknown:
            raise ValueError(f"bounds given for unknown columns {sorted(unknown)}")

    @property
    def columns(self) -> list[str]:
        names = []
        ids = [t.sample_id for t in self.tables]
        names += ["q_cond"] if self.share_cond else [f"q_cond[{i}]" for i in ids]
        names += ["q_MA"] if self.share_MA else [f"q_MA[{i}]" for i in ids]
        names += [f"q_sub[{i}]" for i in ids]
        return names

    def design(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return the participation matrix, ``Q^-1`` and ``sigma`` stacked over samples."""
        cols = self.columns
        index = {name: k for k, name in enumerate(cols)}
        blocks = []
        for t in self.tables:
            block = np.zeros((len(t), len(cols)))
            sid = t.sample_id
            block[:, index["q_cond" if self.share_cond else f"q_cond[{sid}]"]] = (
                t.p_cond * self.omega_ref / t.omega
            )
            block[:, index["q_MA" if self.share_MA else f"q_MA[{sid}]"]] = t.p_MA
            block[:, index[f"q_sub[{sid}]"]] = t.p_bulk
            blocks.append(block)
        return np.vstack(blocks), np.concatenate(self.q_inv), np.concatenate(self.sigma)

    def bound_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.bounds.get(c, (0.0, math.inf))[0] for c in self.columns], float)
        hi = np.array([self.bounds.get(c, (0.0, math.inf))[1] for c in self.columns], float)
        return lo, hi


@dataclass(frozen=True)
class LossSolution:
    """Solution of a :class:`LossSystem`.

    ``covariance`` covers the free parameters; rows and columns of parameters
    pinned at a bound are zero and those parameters are listed in
    ``active_bounds`` as ``name -> "lower" | "upper"``.
    """

    columns: tuple[str, ...]
    q: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    active_bounds: dict
    chi2: float
    condition_number: float
    omega_ref: float = DEFAULT_OMEGA_REF

    def value(self, name: str) -> float:
        return float(self.q[self.columns.index(name)])

    def stderr(self, name: str) -> float:
        k = self.columns.index(name)
        return float(math.sqrt(max(self.covariance[k, k], 0.0)))

    def q_sub(self, sample_id: str) -> float:
        return self.value(f"q_sub[{sample_id}]")

    def loss_factors(self, sample_id: str) -> LossFactors:
        """Loss factors of one sample, with ``q_sub`` stored as ``q_bulk``."""
        def pick(base):
            return self.value(base) if base in self.columns else self.value(f"{base}[{sample_id}]")
        return LossFactors(
            q_cond=max(pick("q_cond"), 0.0), q_MA=max(pick("q_MA"), 0.0),
            q_bulk=max(self.q_sub(sample_id), 0.0), omega_ref=self.omega_ref,
        )

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "columns": list(self.columns),
            "q": [float(v) for v in self.q],
            "stderr": [self.stderr(c) for c in self.columns],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "active_bounds": dict(self.active_bounds),
            "residuals": [float(v) for v in self.residuals],
            "chi2": float(self.chi2),
            "condition_number": float(self.condition_number),
            "omega_ref_rad_s": float(self.omega_ref),
        }


def _check_weights(sigma):
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("every sigma must be positive and finite")


def _equilibrate(a):
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("design has an all-zero column")
    return a / norms, norms


def _rank_check(a_scaled, names):
    _, s, vt = np.linalg.svd(a_scaled, full_matrices=False)
    if s[-1] <= RANK_RCOND * s[0]:
        loading = np.abs(vt[-1])
        involved = [names[k] for k in np.flatnonzero(loading > 0.1 * loading.max())]
        raise RankDeficientError(
            f"design is numerically rank deficient (s_min/s_max={s[-1] / s[0]:.2e}); "
            f"near-dependent columns: {', '.join(involved)}",
            columns=involved,
        )
    return s


def _solve_free(a, b, x, free):
    """Least squares over ``free`` columns with the others held at ``x``."""
    fixed = ~free
    rhs = b - a[:, fixed] @ x[fixed]
    sol, *_ = np.linalg.lstsq(a[:, free], rhs, rcond=None)
    z = x.copy()
    z[free] = sol
    return z


def bounded_lstsq(a, b, lo, hi, max_iter=None):
    """Minimize ``||a x - b||`` subject to ``lo <= x <= hi``.

    Active-set iteration in the style of Lawson and Hanson's bounded
    variable least squares. Returns ``(x, state)`` where ``state`` holds
    ``-1`` / ``+1`` for parameters pinned at their lower / upper bound.
    """
    n = a.shape[1]
    if np.any(lo > hi):
        raise InfeasibleError("a lower bound exceeds its upper bound")
    max_iter = max_iter or 50 * (n + 1)
    x_unc, *_ = np.linalg.lstsq(a, b, rcond=None)
    x = np.clip(x_unc, lo, hi)
    state = np.where(x_unc < lo, -1, np.where(x_unc > hi, 1, 0))
    state[lo == hi] = -1
    tol = 1e-12
    for _ in range(max_iter):
        free = state == 0
        if free.any():
            z = _solve_free(a, b, x, free)
        else:
            z = x.copy()
        viol = free & ((z < lo) | (z > hi))
        if viol.any():
            # Step toward z until the first free variable reaches a bound.
            d = z - x
            with np.errstate(divide="ignore", invalid="ignore"):
                step_lo = np.where(viol & (z < lo), (lo - x) / d, np.inf)
                step_hi = np.where(viol & (z > hi), (hi - x) / d, np.inf)
            alpha = float(np.clip(min(step_lo.min(), step_hi.min()), 0.0, 1.0))
            x = x + alpha * d
            hit_lo = free & (x <= lo + tol * np.maximum(1.0, np.abs(lo)))
            hit_hi = free & (x >= hi - tol * np.maximum(1.0, np.abs(hi)))
            x[hit_lo] = lo[hit_lo]
            x[hit_hi] = hi[hit_hi]
            state[hit_lo] = -1
            state[hit_hi] = 1
            continue
        x = z
        grad = a.T @ (a @ x - b)
        scale = np.linalg.norm(a, axis=0) * max(np.linalg.norm(b), 1e-300)
        # A pinned variable should move off its bound when the gradient points inward.
        wants_up = (state == -1) & (grad < -1e-12 * scale) & (lo < hi)
        wants_down = (state == 1) & (grad > 1e-12 * scale) & (lo < hi)
        candidates = np.flatnonzero(wants_up | wants_down)
        if candidates.size == 0:
            return x, state
        worst = candidates[np.argmax(np.abs(grad[candidates]) / scale[candidates])]
        state[worst] = 0
    raise NumericalError("active-set iteration did not terminate")


def solve(system: LossSystem) -> LossSolution:
    """Weighted, box-bounded least-squares loss factors for ``system``."""
    p, y, sigma = system.design()
    _check_weights(sigma)
    lo, hi = system.bound_arrays()
    if np.any(lo > hi):
        bad = [c for c, l, h in zip(system.columns, lo, hi) if l > h]
        raise InfeasibleError(f"infeasible bounds for {bad}")
    a = p / sigma[:, None]
    b = y / sigma
    a_s, norms = _equilibrate(a)
    s = _rank_check(a_s, system.columns)
    x_s, state = bounded_lstsq(a_s, b, lo * norms, hi * norms)
    x = x_s / norms
    free = state == 0
    cov = np.zeros((len(x), len(x)))
    if free.any():
        cov_free = _covariance_scaled(a_s[:, free]) / np.outer(norms[free], norms[free])
        cov[np.ix_(free, free)] = cov_free
    resid = y - p @ x
    active = {system.columns[k]: ("lower" if state[k] < 0 else "upper")
              for k in np.flatnonzero(~free)}
    return LossSolution(
        columns=tuple(system.columns),
        q=x,
        covariance=cov,
        residuals=resid,
        active_bounds=active,
        chi2=float(np.sum((resid / sigma) ** 2)),
        condition_number=float(np.linalg.cond(p)),
        omega_ref=system.omega_ref,
    )


def _covariance_scaled(a_s):
    _, s, vt = np.linalg.svd(a_s, full_matrices=False)
    if s[-1] <= RANK_RCOND * s[0]:
        raise NumericalError("normal matrix is singular")
    return (vt.T / s**2) @ vt


def covariance(system: LossSystem) -> np.ndarray:
    """Unconstrained parameter covariance ``(P~^T P~)^-1`` with ``P~ = P / sigma``."""
    p, _, sigma = system.design()
    _check_weights(sigma)
    a_s, norms = _equilibrate(p / sigma[:, None])
    _rank_check(a_s, system.columns)
    return _covariance_scaled(a_s) / np.outer(norms, norms)


def design_covariance(p, sigma) -> np.ndarray:
    """Covariance for a bare participation matrix ``p`` and row errors ``sigma``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    _check_weights(sigma)
    a_s, norms = _equilibrate(p / sigma[:, None])
    return _covariance_scaled(a_s) / np.outer(norms, norms)


# ---------------------------------------------------------------------------
# sensitivity maps


@dataclass(frozen=True)
class SensitivityAssumptions:
    """Design-phase assumptions for predicting the substrate-loss error."""

    fractional_error: float = 0.01
    q_MA: float = 3e-2
    q_cond: float = 2e-5
    omega_ref: float = DEFAULT_OMEGA_REF


@dataclass(frozen=True)
class SensitivityMap:
    q_bulk: np.ndarray
    q_SA: np.ndarray
    ci: np.ndarray          # shape (len(q_SA), len(q_bulk)); 2 sigma of q_sub
    frac_err: np.ndarray    # ci / q_sub
    sa_ratio: float
    contours: dict          # level -> list of (N, 2) arrays in (q_bulk, q_SA)

    def records(self):
        for j, q_sa in enumerate(self.q_SA):
            for i, q_b in enumerate(self.q_bulk):
                yield {
                    "q_bulk_inv": float(q_b),
                    "q_SA_inv": float(q_sa),
                    "ci": float(self.ci[j, i]),
                    "frac_err": float(self.frac_err[j, i]),
                }


def sensitivity_ci(table: ParticipationTable, q_bulk, q_SA,
                   assumptions: SensitivityAssumptions = SensitivityAssumptions()):
    """95% confidence interval (2 sigma) of ``q_sub`` at one hypothetical substrate."""
    q = LossFactors(assumptions.q_cond, assumptions.q_MA, q_bulk, q_SA,
                    omega_ref=assumptions.omega_ref)
    q_inv = predict_table(table, q)
    sigma = assumptions.fractional_error * q_inv
    system = LossSystem([table], [q_inv], [sigma], omega_ref=assumptions.omega_ref)
    cov = covariance(system)
    return 2.0 * math.sqrt(cov[-1, -1])


def sensitivity_map(table: ParticipationTable,
                    assumptions: SensitivityAssumptions = SensitivityAssumptions(),
                    q_bulk=None, q_SA=None,
                    levels: Sequence[float] = (0.03, 0.10, 1.0)) -> SensitivityMap:
    """Confidence interval and fractional error of ``q_sub`` over a loss-tangent grid.

    The default grid is logarithmic, ``q_bulk`` in [1e-9, 1e-6] and ``q_SA``
    in [1e-5, 1e-2], 41 points per axis.
    """
    q_bulk = np.logspace(-9, -6, 41) if q_bulk is None else np.asarray(q_bulk, float)
    q_SA = np.logspace(-5, -2, 41) if q_SA is None else np.asarray(q_SA, float)
    if assumptions.fractional_error < 0:
        raise ValueError("fractional error must be non-negative")
    ratio = table.sa_ratio()
    ci = np.empty((len(q_SA), len(q_bulk)))
    if assumptions.fractional_error == 0:
        ci[:] = 0.0
    else:
        for j, q_sa in enumerate(q_SA):
            for i, q_b in enumerate(q_bulk):
                ci[j, i] = sensitivity_ci(table, q_b, q_sa, assumptions)
    q_sub = q_bulk[None, :] + ratio * q_SA[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(q_sub > 0, ci / q_sub, np.inf)
    contours = _contours(q_bulk, q_SA, frac, levels)
    return SensitivityMap(q_bulk, q_SA, ci, frac, ratio, contours)


def _contours(q_bulk, q_SA, frac, levels):
    if len(q_bulk) < 2 or len(q_SA) < 2:
        return {float(level): [] for level in levels}
    import contourpy

    x = np.log10(q_bulk)
    y = np.log10(q_SA)
    z = np.log10(np.where(np.isfinite(frac) & (frac > 0), frac, np.nan))
    gen = contourpy.contour_generator(x, y, z, line_type=contourpy.LineType.Separate)
    out = {}
    for level in levels:
        lines = gen.lines(math.log10(level))
        out[float(level)] = [10.0 ** np.asarray(seg) for seg in lines]
    return out


# ---------------------------------------------------------------------------
# polynomial-basis sensitivity


@dataclass(frozen=True)
class PolynomialSensitivity:
    q_sub: float
    sigma: float
    term_y1: float
    term_q_MA: float
    term_x1_MA: float


def polynomial_sensitivity(basis: PolynomialBasis, q_MA: float, sigma_q_MA: float
                           ) -> PolynomialSensitivity:
    """Substrate loss and its linearly added error budget from a polynomial basis.

    ``q_sub = y1 - x1_MA q_MA``; the error is the sum of the ``y1`` error,
    the propagated ``q_MA`` error and the ``x1_MA`` error, each reported.
    """
    if q_MA < 0 or sigma_q_MA < 0:
        raise ValueError("q_MA and its error must be non-negative")
    y1 = float(basis.y[1])
    x1 = float(basis.x_MA[1])
    sy1 = float(basis.errors.get("y", np.zeros(3))[1])
    sx1 = float(basis.errors.get("x_MA", np.zeros(3))[1])
    t1 = sy1
    t2 = abs(x1) * sigma_q_MA
    t3 = sx1 * q_MA
    return PolynomialSensitivity(y1 - x1 * q_MA, t1 + t2 + t3, t1, t2, t3)
