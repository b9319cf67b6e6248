"""Atomic artifact writing and sweep-file ingestion."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .participation import PARTICIPATION_HEADER, ParticipationRow, ParticipationTable

SCHEMA_VERSION = 1

POWER_HEADER = ("n_photons", "Q_inv", "sigma")
POSITION_EXTRA = ("Q_inv", "sigma")


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps_json(payload: dict) -> str:
    body = {"schema": SCHEMA_VERSION, **payload}
    return json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n"


def write_json(path, payload: dict) -> Path:
    """Write a schema-tagged JSON artifact."""
    return atomic_write(path, dumps_json(payload))


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, format_csv(header, rows))


# ---------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class PowerPoints:
    n: np.ndarray
    q_inv: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class PositionSweep:
    table: ParticipationTable
    q_inv: np.ndarray
    sigma: np.ndarray


def _read_records(path: Path, required):
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror or exc}", path=path) from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise InputError("empty file", path=path, line=1)
    header = [h.strip() for h in reader.fieldnames]
    missing = [h for h in required if h not in header]
    if missing:
        raise InputError(f"missing columns {missing}", path=path, line=1)
    reader.fieldnames = header
    records = []
    for rec in reader:
        if not any((v or "").strip() for v in rec.values()):
            continue
        records.append((reader.line_num, rec))
    if not records:
        raise InputError("no data rows", path=path)
    return records


def _float(rec, key, path, line):
    try:
        value = float(rec[key])
    except (TypeError, ValueError):
        raise InputError(f"column {key!r}: not a number: {rec[key]!r}", path=path,
                         line=line) from None
    if not math.isfinite(value):
        raise InputError(f"column {key!r}: non-finite value", path=path, line=line)
    return value


def _check_loss(q, s, path, line):
    if q < 0:
        raise InputError(f"negative Q_inv {q!r}", path=path, line=line)
    if not s > 0:
        raise InputError(f"sigma must be positive, got {s!r}", path=path, line=line)


def merge_inverse_variance(values, sigmas):
    """Inverse-variance weighted mean and its standard error."""
    if len(values) == 1:
        return float(values[0]), float(sigmas[0])
    w = 1.0 / np.asarray(sigmas, dtype=float) ** 2
    mean = float(np.sum(w * np.asarray(values, dtype=float)) / np.sum(w))
    return mean, float(1.0 / math.sqrt(np.sum(w)))


def _merge(keys, q, s):
    groups: dict = {}
    for k, qi, si in zip(keys, q, s):
        groups.setdefault(k, []).append((qi, si))
    merged = []
    for k, items in groups.items():
        qs, ss = zip(*items)
        merged.append((k, *merge_inverse_variance(qs, ss)))
    return merged


def read_power_sweep(path) -> PowerPoints:
    """Read ``n_photons,Q_inv,sigma``; duplicate ``n`` rows are merged, output sorted by ``n``."""
    path = Path(path)
    keys, q, s = [], [], []
    for line, rec in _read_records(path, POWER_HEADER):
        n = _float(rec, "n_photons", path, line)
        qi = _float(rec, "Q_inv", path, line)
        si = _float(rec, "sigma", path, line)
        if not n > 0:
            raise InputError(f"n_photons must be positive, got {n!r}", path=path, line=line)
        _check_loss(qi, si, path, line)
        keys.append(n)
        q.append(qi)
        s.append(si)
    merged = sorted(_merge(keys, q, s))
    arr = np.array([m for m in merged], dtype=float)
    return PowerPoints(arr[:, 0], arr[:, 1], arr[:, 2])


def read_position_sweep(path) -> dict[str, PositionSweep]:
    """Read a position sweep: participation columns plus ``Q_inv,sigma``.

    Rows with identical participations (same sample, frequency and
    participations) are merged by inverse-variance weighting. Each sample's
    rows come back ordered by ``p_bulk``.
    """
    path = Path(path)
    records = _read_records(path, PARTICIPATION_HEADER + POSITION_EXTRA)
    has_h = "p_bulk_H" in records[0][1]
    by_sample: dict[str, list] = {}
    for line, rec in records:
        sid = (rec.get("sample_id") or "").strip()
        if not sid:
            raise InputError("empty sample_id", path=path, line=line)
        vals = {k: _float(rec, k, path, line)
                for k in ("omega_rad_s", "p_cond", "p_MA", "p_bulk", "p_SA")}
        vals["z_m"] = _float(rec, "z_m", path, line) if (rec.get("z_m") or "").strip() else None
        p_h = _float(rec, "p_bulk_H", path, line) if has_h else 0.0
        qi = _float(rec, "Q_inv", path, line)
        si = _float(rec, "sigma", path, line)
        _check_loss(qi, si, path, line)
        try:
            row = ParticipationRow(vals["omega_rad_s"], vals["p_cond"], vals["p_MA"],
                                   vals["p_bulk"], vals["p_SA"], p_h, vals["z_m"])
        except ValueError as exc:
            raise InputError(str(exc), path=path, line=line) from None
        by_sample.setdefault(sid, []).append((row, qi, si))
    out = {}
    for sid, items in by_sample.items():
        rows, q, s = zip(*items)
        merged = _merge(rows, q, s)
        merged.sort(key=lambda m: (m[0].p_bulk, m[0].omega))
        table = ParticipationTable.from_rows([m[0] for m in merged], sample_id=sid)
        out[sid] = PositionSweep(table, np.array([m[1] for m in merged]),
                                 np.array([m[2] for m in merged]))
    return out


def ingest_sweep(path, kind: str):
    """Validated sweep structure from a CSV file of the given ``kind``."""
    if kind == "power":
        return read_power_sweep(path)
    if kind == "position":
        return read_position_sweep(path)
    raise ValueError("kind must be 'position' or 'power'")


def position_sweep_rows(sweeps: dict[str, PositionSweep]):
    header = PARTICIPATION_HEADER + ("p_bulk_H",) + POSITION_EXTRA
    rows = []
    for sid, sw in sweeps.items():
        for r, q, s in zip(sw.table.rows, sw.q_inv, sw.sigma):
            rows.append((sid, "" if r.z is None else r.z, r.omega, r.p_cond,
                         r.p_MA, r.p_bulk, r.p_SA, r.p_bulk_H, q, s))
    return header, rows
