"""Plot-ready CSV tables for the standard figures. Nothing is rendered here.

Columns
-------
fig2
    ``q_bulk_inv,q_SA_inv,ci,frac_err``: sensitivity map grid.
fig2_contours
    ``level,segment,q_bulk_inv,q_SA_inv``: fractional-error contour polylines.
fig3
    ``position,n_photons,Q_inv,sigma,model,used``: power sweeps with fitted model.
fig4a
    ``sample_id,p_bulk,Q_inv,sigma,model``: position sweeps with fitted loss.
fig4b
    ``record,label,q_bulk_inv,q_SA_inv``: constraint-line end points
    (``record=line``) and intersections (``record=intersection``).
fig5
    ``material,channel,p,q_inv,Q_limit,T1_s``: coherence-limit bars.
"""
from __future__ import annotations

import numpy as np

from .io import format_csv

FIGURES = ("fig2", "fig3", "fig4a", "fig4b", "fig5")


def fig2(smap) -> dict[str, str]:
    rows = [(r["q_bulk_inv"], r["q_SA_inv"], r["ci"], r["frac_err"]) for r in smap.records()]
    contour_rows = []
    for level in sorted(smap.contours):
        for k, seg in enumerate(smap.contours[level]):
            contour_rows.extend((level, k, float(x), float(y)) for x, y in seg)
    return {
        "fig2.csv": format_csv(("q_bulk_inv", "q_SA_inv", "ci", "frac_err"), rows),
        "fig2_contours.csv": format_csv(("level", "segment", "q_bulk_inv", "q_SA_inv"),
                                        contour_rows),
    }


def fig3(sweeps_and_fits) -> dict[str, str]:
    """``sweeps_and_fits``: iterable of ``(sweep, fit, n_cutoff)``."""
    rows = []
    for sweep, fit, n_cutoff in sweeps_and_fits:
        for n, q, s in zip(sweep.n, sweep.q_inv, sweep.sigma):
            used = n_cutoff is None or n <= n_cutoff
            rows.append((sweep.position, float(n), float(q), float(s), float(fit(n)), int(used)))
    return {"fig3.csv": format_csv(("position", "n_photons", "Q_inv", "sigma", "model", "used"),
                                   rows)}


def fig4a(system, solution) -> dict[str, str]:
    p, y, sigma = system.design()
    model = p @ solution.q
    rows = []
    k = 0
    for table in system.tables:
        for pb in table.p_bulk:
            rows.append((table.sample_id, float(pb), float(y[k]), float(sigma[k]),
                         float(model[k])))
            k += 1
    return {"fig4a.csv": format_csv(("sample_id", "p_bulk", "Q_inv", "sigma", "model"), rows)}


def fig4b(lines, intersections) -> dict[str, str]:
    """``lines``: ConstraintLines; ``intersections``: ``(label, LossPair)`` pairs."""
    rows = []
    for line in lines:
        x, y = line.polyline(2)
        rows.extend(("line", line.label, float(a), float(b)) for a, b in zip(x, y))
    for label, pair in intersections:
        rows.append(("intersection", label, pair.first.value, pair.second.value))
    return {"fig4b.csv": format_csv(("record", "label", "q_bulk_inv", "q_SA_inv"), rows)}


def fig5(bars) -> dict[str, str]:
    """``bars``: iterable of ``(material, channel, p, q_inv, CoherenceLimit)``."""
    rows = []
    for material, channel, p, q_inv, lim in bars:
        q = np.inf if lim.unbounded else lim.q_factor
        t1 = np.inf if lim.unbounded else lim.t1_s
        rows.append((material, channel, float(p), float(q_inv), float(q), float(t1)))
    return {"fig5.csv": format_csv(("material", "channel", "p", "q_inv", "Q_limit", "T1_s"),
                                   rows)}
