"""Discrimination and probabilistic-accuracy metrics with IPCW weighting.

The concordance index for competing risks compares, at a horizon tau, the
predicted CIF ordering of every informative pair: pairs where i fails
from event k before j (weighted by the inverse product of censoring
survival at the left limits), plus pairs where j fails earlier from a
different event. The Brier score reweights observed outcomes by the
censoring survival so that censored mass does not bias the quadratic
error, and the integrated version averages its time integral over events.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .calibration import check_aligned
from .curves import StepCurve, censoring_survival
from .data import CifBundle, Cohort, TimeGrid, _fmt
from .errors import NumericError

_PAIR_BLOCK = 256


@dataclass(frozen=True)
class EvaluationResult:
    c_index: dict[int, dict[float, float]]
    c_index_mean: dict[int, float]
    brier: dict[int, dict[float, float]]
    ibs: float
    mean_curves: np.ndarray
    grid: TimeGrid

    def to_dict(self) -> dict:
        def fmt_map(m):
            return {
                str(k): {repr(float(t)): (None if math.isnan(v) else v) for t, v in sorted(vals.items())}
                for k, vals in sorted(m.items())
            }

        return {
            "c_index": fmt_map(self.c_index),
            "c_index_mean": {
                str(k): (None if math.isnan(v) else v) for k, v in sorted(self.c_index_mean.items())
            },
            "brier": fmt_map(self.brier),
            "ibs": self.ibs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def cr_c_index(
    cohort: Cohort, bundle: CifBundle, k: int, tau: float, censoring: StepCurve
) -> float:
    """Concordance for event k at horizon tau; NaN when no pair is usable.

    Informative cases are samples with an observed event k by tau. A pair
    (i, j) counts through the first weight when j outlasts i (or is
    censored at the tie), and through the second when j failed earlier
    but from a different cause; concordance requires the predicted CIF of
    i to strictly exceed that of j at tau.
    """
    check_aligned(bundle, cohort)
    if float(censoring.at_left(tau)) <= 0.0:
        raise NumericError("censoring survival vanishes before the horizon; IPCW undefined")
    times, events = cohort.times, cohort.events
    g_left = censoring.at_left(times)
    cases = np.flatnonzero((times <= tau) & (events == k))
    if cases.size == 0:
        return math.nan
    preds = bundle.values_at(np.asarray([tau]))[:, k - 1, 0]
    other = (events != 0) & (events != k)
    numer = 0.0
    denom = 0.0
    for start in range(0, cases.size, _PAIR_BLOCK):
        rows = cases[start:start + _PAIR_BLOCK]
        t_i = times[rows][:, None]
        g_i = g_left[rows][:, None]
        a = (t_i < times[None, :]) | ((t_i == times[None, :]) & (events[None, :] == 0))
        b = (t_i >= times[None, :]) & other[None, :]
        w = a / (g_i * g_i) + np.where(b, 1.0, 0.0) / np.where(b, g_i * g_left[None, :], 1.0)
        q = preds[rows][:, None] > preds[None, :]
        numer += float((w * q).sum())
        denom += float(w.sum())
    if denom == 0.0:
        return math.nan
    return numer / denom


def brier_score(
    cohort: Cohort, bundle: CifBundle, k: int, tau: float, censoring: StepCurve
) -> float:
    """IPCW Brier score of event k at time tau."""
    check_aligned(bundle, cohort)
    g_tau = float(censoring.at(tau))
    if g_tau <= 0.0:
        raise NumericError("censoring survival is zero at the evaluation time")
    times, events = cohort.times, cohort.events
    g_left = censoring.at_left(times)
    known = (times <= tau) & (events != 0)
    later = times > tau
    weights = np.where(known, 1.0, 0.0) / np.where(known, g_left, 1.0) + later / g_tau
    outcome = ((times <= tau) & (events == k)).astype(float)
    preds = bundle.values_at(np.asarray([tau]))[:, k - 1, 0]
    return float(np.mean(weights * (outcome - preds) ** 2))


def integrated_brier(
    cohort: Cohort, bundle: CifBundle, grid: TimeGrid, censoring: StepCurve
) -> float:
    """Mean over events of the Riemann time integral of the Brier score,
    normalized by the grid horizon."""
    taus = grid.times
    deltas = np.diff(np.concatenate(([0.0], taus)))
    total = 0.0
    for k in range(1, bundle.k_events + 1):
        scores = np.array([brier_score(cohort, bundle, k, t, censoring) for t in taus])
        total += float((scores * deltas).sum()) / grid.t_max
    return total / bundle.k_events


def mean_incidence(bundle: CifBundle) -> np.ndarray:
    """Across-sample mean CIF per event and grid time, shape (K, d)."""
    return bundle.values.mean(axis=0)


def mean_incidence_csv(bundle: CifBundle) -> str:
    """Plot-ready CSV ``event,time,mean_cif`` of the marginal predictions."""
    curves = mean_incidence(bundle)
    lines = ["event,time,mean_cif"]
    for k in range(bundle.k_events):
        for j, t in enumerate(bundle.grid.times):
            lines.append(f"{k + 1},{_fmt(t)},{_fmt(curves[k, j])}")
    return "\n".join(lines) + "\n"


def default_horizons(cohort: Cohort) -> list[float]:
    """25/50/75 percent duration quantiles (lower interpolation)."""
    times = np.sort(cohort.times)
    n = times.size
    idx = [max(int(math.ceil(q * n)) - 1, 0) for q in (0.25, 0.5, 0.75)]
    return sorted(set(float(times[i]) for i in idx))


def evaluate_bundle(
    cohort: Cohort,
    bundle: CifBundle,
    horizons: list[float] | None = None,
) -> EvaluationResult:
    """C-index at the requested horizons, Brier there too, IBS over the
    IPCW-valid part of the bundle grid, and the mean incidence curves."""
    check_aligned(bundle, cohort)
    censoring = censoring_survival(cohort)
    if horizons is None:
        horizons = default_horizons(cohort)
    c_index: dict[int, dict[float, float]] = {}
    c_mean: dict[int, float] = {}
    brier: dict[int, dict[float, float]] = {}
    for k in range(1, bundle.k_events + 1):
        per_h = {}
        per_b = {}
        for tau in horizons:
            per_h[tau] = cr_c_index(cohort, bundle, k, tau, censoring)
            per_b[tau] = brier_score(cohort, bundle, k, tau, censoring)
        c_index[k] = per_h
        brier[k] = per_b
        defined = [v for v in per_h.values() if not math.isnan(v)]
        c_mean[k] = float(np.mean(defined)) if defined else math.nan
    valid = bundle.grid.times[censoring.at(bundle.grid.times) > 0.0]
    if valid.size == 0:
        raise NumericError("no grid time lies inside the IPCW-valid horizon")
    ibs_grid = TimeGrid(valid)
    ibs = integrated_brier(cohort, bundle, ibs_grid, censoring)
    return EvaluationResult(c_index, c_mean, brier, ibs, mean_incidence(bundle), bundle.grid)
