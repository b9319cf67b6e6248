"""Participation ratios and the loss model built on them.

A mode's internal loss is the participation-weighted sum of material loss
factors::

    Q^-1 = sum_j p_j q_j^-1

Participation profiles are treated as data: they come from a table (CSV) or
from the analytic below-cutoff attenuation model in :func:`attenuation_profile`.
Nothing here solves Maxwell's equations.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import constants

from .errors import InputError, RankDeficientError

MU0 = constants.mu_0
C_LIGHT = constants.c

#: Withdrawn-position frequency of the reference cavity, used as the default
#: reference for the frequency-normalized conductor loss.
DEFAULT_OMEGA_REF = 2 * math.pi * 4.55e9

PARTICIPATION_HEADER = ("sample_id", "z_m", "omega_rad_s", "p_cond", "p_MA", "p_bulk", "p_SA")


@dataclass(frozen=True)
class ParticipationRow:
    """Participations of one mode configuration (one insertion position)."""

    omega: float
    p_cond: float
    p_MA: float
    p_bulk: float
    p_SA: float
    p_bulk_H: float = 0.0
    z: float | None = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        for name in ("p_cond", "p_MA", "p_bulk", "p_SA", "p_bulk_H"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        total = self.p_cond + self.p_MA + self.p_bulk + self.p_SA
        if total > 1.0 + 1e-12:
            raise ValueError(f"electric participations sum to {total} > 1")


@dataclass(frozen=True)
class ParticipationTable:
    """Rows of one sample's position sweep, ordered by increasing ``p_bulk``.

    Use :meth:`from_rows` to build a table from unordered rows.
    """

    rows: tuple[ParticipationRow, ...]
    sample_id: str = "sample"

    def __post_init__(self):
        if len(self.rows) < 1:
            raise ValueError("a participation table needs at least one row")
        p = [r.p_bulk for r in self.rows]
        if any(b < a for a, b in zip(p, p[1:])):
            raise ValueError("rows must be ordered by increasing p_bulk")

    @classmethod
    def from_rows(cls, rows: Iterable[ParticipationRow], sample_id: str = "sample"):
        return cls(tuple(sorted(rows, key=lambda r: r.p_bulk)), sample_id)

    @classmethod
    def from_arrays(cls, sample_id, omega, p_cond, p_MA, p_bulk, p_SA, p_bulk_H=None, z=None):
        n = len(p_bulk)
        p_bulk_H = np.zeros(n) if p_bulk_H is None else p_bulk_H
        z = [None] * n if z is None else z
        rows = [
            ParticipationRow(
                float(omega[i]), float(p_cond[i]), float(p_MA[i]), float(p_bulk[i]),
                float(p_SA[i]), float(p_bulk_H[i]), None if z[i] is None else float(z[i]),
            )
            for i in range(n)
        ]
        return cls.from_rows(rows, sample_id)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def omega(self):
        return self.column("omega")

    @property
    def p_cond(self):
        return self.column("p_cond")

    @property
    def p_MA(self):
        return self.column("p_MA")

    @property
    def p_bulk(self):
        return self.column("p_bulk")

    @property
    def p_SA(self):
        return self.column("p_SA")

    @property
    def p_bulk_H(self):
        return self.column("p_bulk_H")

    def sa_ratio(self) -> float:
        """Median ``p_SA / p_bulk`` over rows with nonzero bulk participation."""
        p_bulk = self.p_bulk
        mask = p_bulk > 0
        if not mask.any():
            raise ValueError(f"sample {self.sample_id!r} has no row with p_bulk > 0")
        return float(np.median(self.p_SA[mask] / p_bulk[mask]))


@dataclass(frozen=True)
class InterfaceModel:
    """Thickness and permittivity assumptions behind the interface participations."""

    t_SA: float = 3e-9
    t_MA: float = 3e-9
    lambda_L: float = 50e-9
    eps_MA: float = 10.0
    eps_bulk_parallel: float = 11.35
    eps_bulk_perp: float = 9.27

    def __post_init__(self):
        for name in ("t_SA", "t_MA", "lambda_L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("eps_MA", "eps_bulk_parallel", "eps_bulk_perp"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class LossFactors:
    """Material loss factors q_j^-1.

    ``q_cond`` is the conductor loss factor at ``omega_ref``; at another
    frequency the conductor term scales as ``omega_ref / omega``.  A composite
    substrate loss ``q_sub`` can be represented with ``q_bulk=q_sub, q_SA=0``.
    """

    q_cond: float = 0.0
    q_MA: float = 0.0
    q_bulk: float = 0.0
    q_SA: float = 0.0
    q_bulk_H: float = 0.0
    omega_ref: float = DEFAULT_OMEGA_REF

    def __post_init__(self):
        for name in ("q_cond", "q_MA", "q_bulk", "q_SA", "q_bulk_H"):
            value = getattr(self, name)
            if value < 0 or math.isnan(value):
                raise ValueError(f"loss factor {name}={value} must be non-negative")
        if not self.omega_ref > 0:
            raise ValueError("omega_ref must be positive")

    def __add__(self, other):
        self._check_ref(other)
        return LossFactors(
            self.q_cond + other.q_cond, self.q_MA + other.q_MA, self.q_bulk + other.q_bulk,
            self.q_SA + other.q_SA, self.q_bulk_H + other.q_bulk_H, self.omega_ref,
        )

    def scale(self, factor: float) -> "LossFactors":
        return LossFactors(
            factor * self.q_cond, factor * self.q_MA, factor * self.q_bulk,
            factor * self.q_SA, factor * self.q_bulk_H, self.omega_ref,
        )

    def _check_ref(self, other):
        if not math.isclose(self.omega_ref, other.omega_ref, rel_tol=1e-15):
            raise ValueError("loss factors refer to different reference frequencies")


def predict_loss(row: ParticipationRow, q: LossFactors) -> float:
    """Internal loss ``Q^-1`` of one configuration."""
    cond = row.p_cond * q.q_cond * (q.omega_ref / row.omega)
    return (
        cond
        + row.p_MA * q.q_MA
        + row.p_bulk * q.q_bulk
        + row.p_SA * q.q_SA
        + row.p_bulk_H * q.q_bulk_H
    )


def predict_table(table: ParticipationTable, q: LossFactors) -> np.ndarray:
    return np.array([predict_loss(r, q) for r in table.rows])


def composite_substrate_loss(p_bulk, p_SA, q_bulk, q_SA):
    """Effective substrate loss tangent ``(p_bulk q_bulk + p_SA q_SA) / p_bulk``."""
    if np.any(np.asarray(p_bulk) == 0):
        raise ZeroDivisionError("p_bulk must be nonzero")
    return q_bulk + (np.asarray(p_SA) / np.asarray(p_bulk)) * q_SA


@dataclass(frozen=True)
class Waveguide:
    """Below-cutoff waveguide section along which the sample is inserted.

    ``p_bulk0`` is the bulk participation at full insertion (``z = 0``).
    """

    cutoff_Hz: float
    mode_Hz: float
    p_bulk0: float

    @property
    def alpha(self) -> float:
        """Field attenuation constant in 1/m."""
        if self.mode_Hz >= self.cutoff_Hz:
            raise ValueError(
                f"mode at {self.mode_Hz} Hz is not below cutoff {self.cutoff_Hz} Hz"
            )
        return 2 * math.pi / C_LIGHT * math.sqrt(self.cutoff_Hz**2 - self.mode_Hz**2)


def attenuation_profile(z, waveguide: Waveguide):
    """Bulk participation at withdrawal distance ``z`` (m); energy decays at 2*alpha."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be non-negative")
    p = waveguide.p_bulk0 * np.exp(-2.0 * waveguide.alpha * z)
    return float(p) if p.ndim == 0 else p


def position_for_participation(p_bulk, waveguide: Waveguide):
    """Inverse of :func:`attenuation_profile`."""
    p_bulk = np.asarray(p_bulk, dtype=float)
    return np.log(waveguide.p_bulk0 / p_bulk) / (2.0 * waveguide.alpha)


@dataclass(frozen=True)
class PolynomialBasis:
    """Polynomial fits of ``Q^-1``, ``p_cond`` and ``p_MA`` against ``p_bulk``.

    Coefficient arrays are ordered by increasing power. ``errors`` maps
    ``"y"``, ``"x_cond"``, ``"x_MA"`` to the standard errors.
    """

    y: np.ndarray
    x_cond: np.ndarray
    x_MA: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.y) - 1


def _polyfit_with_errors(x, values, order):
    design = np.vander(x, order + 1, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < order + 1:
        raise RankDeficientError(
            f"polynomial design of order {order} has rank {rank}", columns=("p_bulk",)
        )
    resid = values - design @ coef
    dof = len(x) - (order + 1)
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    return coef, np.sqrt(np.clip(np.diag(cov), 0.0, None))


def fit_polynomial_basis(table: ParticipationTable, q_inv, order: int = 2) -> PolynomialBasis:
    """Ordinary least-squares polynomial fits in powers of ``p_bulk``.

    Parameters
    ----------
    table : ParticipationTable
    q_inv : array_like
        Measured ``Q^-1`` for each row of ``table``.
    order : int
        Polynomial order, 2 to 4.
    """
    if not 2 <= order <= 4:
        raise ValueError("order must be between 2 and 4")
    q_inv = np.asarray(q_inv, dtype=float)
    if q_inv.shape != (len(table),):
        raise ValueError("need one Q^-1 value per table row")
    if len(table) < 4:
        raise ValueError("polynomial basis needs at least 4 rows")
    p_bulk = table.p_bulk
    if len(np.unique(p_bulk)) < order + 1:
        raise RankDeficientError(
            f"{len(np.unique(p_bulk))} distinct p_bulk values cannot fix {order + 1} coefficients",
            columns=("p_bulk",),
        )
    # Rescaling the abscissa keeps the Vandermonde matrix well conditioned.
    scale = float(np.max(np.abs(p_bulk))) or 1.0
    powers = scale ** -np.arange(order + 1)
    fits = {}
    for name, values in (("y", q_inv), ("x_cond", table.p_cond), ("x_MA", table.p_MA)):
        coef, err = _polyfit_with_errors(p_bulk / scale, values, order)
        fits[name] = (coef * powers, err * powers)
    return PolynomialBasis(
        y=fits["y"][0],
        x_cond=fits["x_cond"][0],
        x_MA=fits["x_MA"][0],
        errors={name: fits[name][1] for name in fits},
    )


def surface_resistance(q_cond, omega, lambda_L=50e-9):
    """Surface resistance (ohm) from the conductor loss factor ``R_s / (omega mu0 lambda_L)``."""
    if np.any(np.asarray(omega) <= 0) or np.any(np.asarray(lambda_L) <= 0):
        raise ValueError("omega and lambda_L must be positive")
    return q_cond * omega * MU0 * lambda_L


def conductor_loss_from_resistance(r_s, omega, lambda_L=50e-9):
    """Inverse of :func:`surface_resistance`."""
    if np.any(np.asarray(omega) <= 0) or np.any(np.asarray(lambda_L) <= 0):
        raise ValueError("omega and lambda_L must be positive")
    return r_s / (omega * MU0 * lambda_L)


def read_participation_csv(path) -> dict[str, ParticipationTable]:
    """Load participation tables keyed by ``sample_id``.

    Extra columns (for instance ``Q_inv`` and ``sigma`` of a position sweep)
    are ignored; ``p_bulk_H`` defaults to 0 when absent.
    """
    path = Path(path)
    rows: dict[str, list[ParticipationRow]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [h for h in PARTICIPATION_HEADER if h not in (reader.fieldnames or ())]
        if missing:
            raise InputError(f"missing columns {missing}", path=path, line=1)
        for record in reader:
            line = reader.line_num
            rows.setdefault(record["sample_id"], []).append(_parse_row(record, path, line))
    if not rows:
        raise InputError("no data rows", path=path)
    return {sid: ParticipationTable.from_rows(r, sid) for sid, r in rows.items()}


def _parse_row(record, path, line) -> ParticipationRow:
    try:
        z = record.get("z_m")
        p_bulk_H = record.get("p_bulk_H")
        return ParticipationRow(
            omega=float(record["omega_rad_s"]),
            p_cond=float(record["p_cond"]),
            p_MA=float(record["p_MA"]),
            p_bulk=float(record["p_bulk"]),
            p_SA=float(record["p_SA"]),
            p_bulk_H=float(p_bulk_H) if p_bulk_H not in (None, "") else 0.0,
            z=float(z) if z not in (None, "") else None,
        )
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc), path=path, line=line) from None


def participation_records(tables: Sequence[ParticipationTable]):
    """Flatten tables into CSV-ready dicts (inverse of :func:`read_participation_csv`)."""
    out = []
    for table in tables:
        for r in table.rows:
            out.append({
                "sample_id": table.sample_id,
                "z_m": "" if r.z is None else repr(r.z),
                "omega_rad_s": repr(r.omega),
                "p_cond": repr(r.p_cond),
                "p_MA": repr(r.p_MA),
                "p_bulk": repr(r.p_bulk),
                "p_SA": repr(r.p_SA),
                "p_bulk_H": repr(r.p_bulk_H),
            })
    return out
