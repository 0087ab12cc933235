"""Post-hoc recalibration of CIF bundles.

Two methods. Additive offset recalibration shifts every sample's CIF at
each grid time by the gap between the Aalen-Johansen curve of the
calibration cohort and the model's mean prediction there, making the
recalibrated mean match the population curve exactly when no feasibility
repair triggers. Temperature scaling instead fits, independently per grid
time, a single exponent beta applied to the full probability vector
(survival plus events, so each recalibrated vector sums to one) that
minimizes the summed marginal gaps.

Recalibrated values are projected back onto the feasible set (values in
[0, 1], nondecreasing in time, event sum at most one) and every repaired
entry is counted in ``clip_events``; the exactness guarantees (mean match,
rank preservation) hold only for applications that needed no repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import check_aligned
from .curves import aalen_johansen
from .data import CifBundle, Cohort, TimeGrid, step_indices
from .errors import ValidationError

AJ_OFFSET = "aj_offset"
TEMPERATURE = "temperature"

_LOGIT_EPS = 1e-12
_BETA_GRID = np.logspace(-3.0, 3.0, 61)
_IDENTITY_SLACK = 1e-10


@dataclass
class RecalibrationMap:
    """Fitted correction: per-time offsets (with a survival row 0) for the
    additive method, or per-time temperatures for power scaling.

    ``clip_events`` records how many entries the most recent application
    had to repair to stay a valid bundle.
    """

    method: str
    grid: TimeGrid
    offsets: np.ndarray | None = None
    temperatures: np.ndarray | None = None
    clip_events: int = 0

    def __post_init__(self):
        if self.method not in (AJ_OFFSET, TEMPERATURE):
            raise ValidationError(f"unknown recalibration method {self.method!r}")
        if self.method == AJ_OFFSET:
            if self.offsets is None or self.offsets.shape[1] != self.grid.d:
                raise ValidationError("offsets must align with the grid")
            if not np.all(np.isfinite(self.offsets)):
                raise ValidationError("offsets must be finite")
        else:
            if self.temperatures is None or self.temperatures.shape != (self.grid.d,):
                raise ValidationError("temperatures must align with the grid")
            if np.any(self.temperatures <= 0):
                raise ValidationError("temperatures must be positive")

    def to_dict(self) -> dict:
        out: dict = {"method": self.method, "grid": self.grid.times.tolist()}
        if self.offsets is not None:
            out["offsets"] = self.offsets.tolist()
        if self.temperatures is not None:
            out["temperatures"] = self.temperatures.tolist()
        out["clip_events"] = self.clip_events
        return out


def _check_fit_inputs(cal_cohort: Cohort, cal_bundle: CifBundle, grid: TimeGrid):
    check_aligned(cal_bundle, cal_cohort)
    if grid.t_max > cal_bundle.grid.t_max * (1 + 1e-12):
        raise ValidationError("recalibration grid extends past the calibration bundle horizon")


def fit_aj_offsets(cal_cohort: Cohort, cal_bundle: CifBundle, grid: TimeGrid) -> RecalibrationMap:
    """Per-event, per-time additive corrections toward the AJ curves.

    Row 0 holds the survival offset (Kaplan-Meier minus mean implied
    survival); rows 1..K hold the event offsets. The event rows and the
    survival row sum to zero at every time by construction.
    """
    _check_fit_inputs(cal_cohort, cal_bundle, grid)
    curves = aalen_johansen(cal_cohort)
    mean_pred = cal_bundle.values_at(grid.times).mean(axis=0)
    k_events = cal_bundle.k_events
    offsets = np.empty((k_events + 1, grid.d))
    offsets[0] = curves.km.at(grid.times) - (1.0 - mean_pred.sum(axis=0))
    for k in range(1, k_events + 1):
        offsets[k] = curves.cif(k).at(grid.times) - mean_pred[k - 1]
    return RecalibrationMap(AJ_OFFSET, grid, offsets=offsets)


_SUM_HEADROOM = 1e-9


def _feasible_projection(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Project shifted values onto valid bundles, counting repairs.

    Forward pass over the grid: clip into [0, 1], lift below the running
    maximum, and scale down the per-time increments of any sample whose
    event sum would exceed one. Repaired sums land slightly below one so
    the implied survival stays above the metrics' floor. Bitwise identity
    with the input when nothing needs repair.
    """
    n, k, d = raw.shape
    target = 1.0 - _SUM_HEADROOM
    out = np.empty_like(raw)
    prev = np.zeros((n, k))
    prev_total = np.zeros(n)
    repairs = 0
    for j in range(d):
        col = raw[:, :, j]
        cur = np.clip(col, 0.0, 1.0)
        repairs += int(np.count_nonzero(cur != col))
        lifted = np.maximum(prev, cur)
        repairs += int(np.count_nonzero(lifted != cur))
        total = lifted.sum(axis=1)
        over = total > 1.0
        if over.any():
            gain = np.maximum(total - prev_total, 1e-300)
            scale = np.where(over, np.clip((target - prev_total) / gain, 0.0, 1.0), 1.0)
            lifted = prev + (lifted - prev) * scale[:, None]
            total = lifted.sum(axis=1)
            repairs += int(over.sum())
        out[:, :, j] = lifted
        prev = lifted
        prev_total = total
    return out, repairs


def apply_offsets(bundle: CifBundle, rmap: RecalibrationMap) -> CifBundle:
    """Shift a bundle by fitted offsets, step-extended over its grid.

    Before the first offset time no correction applies. Repairs are
    counted into ``rmap.clip_events``; with zero repairs the output equals
    the plain shift bitwise.
    """
    if rmap.method != AJ_OFFSET:
        raise ValidationError("map method mismatch: expected additive offsets")
    if bundle.k_events + 1 != rmap.offsets.shape[0]:
        raise ValidationError("offset rows do not match the bundle events")
    idx = step_indices(rmap.grid.times, bundle.grid.times)
    shift = np.where(idx[None, :] >= 0, rmap.offsets[1:, np.maximum(idx, 0)], 0.0)
    raw = bundle.values + shift[None, :, :]
    values, repairs = _feasible_projection(raw)
    rmap.clip_events = repairs
    return CifBundle(bundle.grid, values, bundle.sample_ids)


def _power_mean_gap(log_p: np.ndarray, targets: np.ndarray, beta: float) -> float:
    """Summed marginal gap after scaling all vectors with exponent beta."""
    z = beta * log_p
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    g = e / e.sum(axis=1, keepdims=True)
    return float(np.abs(g[:, 1:].mean(axis=0) - targets).sum())


def _golden_section(fun, lo: float, hi: float, tol: float = 1e-6) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = fun(x2)
    return 0.5 * (a + b)


def _normalized_vectors(bundle: CifBundle, taus: np.ndarray) -> np.ndarray:
    """Per-sample (survival, events) probability vectors, shape (n, K+1, m)."""
    preds = bundle.values_at(taus)
    surv = np.clip(1.0 - preds.sum(axis=1), 0.0, None)
    p = np.concatenate([surv[:, None, :], preds], axis=1)
    totals = p.sum(axis=1, keepdims=True)
    if np.any(totals <= 0.0):
        raise ValidationError("all-zero probability vector for some sample and time")
    return p / totals


def fit_temperature(cal_cohort: Cohort, cal_bundle: CifBundle, grid: TimeGrid) -> RecalibrationMap:
    """Per-time exponent beta minimizing the summed marginal gaps.

    The scaling map raises the normalized (survival, events) vector to a
    power and renormalizes; beta is found by a log-spaced grid scan over
    [1e-3, 1e3] refined by golden section to a relative tolerance of 1e-6.
    A beta of exactly 1 is kept whenever it is within numerical slack of
    the optimum, so already-calibrated inputs are left untouched.
    """
    _check_fit_inputs(cal_cohort, cal_bundle, grid)
    curves = aalen_johansen(cal_cohort)
    targets_all = np.stack(
        [curves.cif(k).at(grid.times) for k in range(1, cal_bundle.k_events + 1)]
    )
    p = _normalized_vectors(cal_bundle, grid.times)
    log_grid = np.log(_BETA_GRID)
    betas = np.empty(grid.d)
    for j in range(grid.d):
        log_p = np.log(p[:, :, j] + _LOGIT_EPS)
        targets = targets_all[:, j]

        def gap_at_log_beta(lb: float) -> float:
            return _power_mean_gap(log_p, targets, math.exp(lb))

        scan = np.array([_power_mean_gap(log_p, targets, b) for b in _BETA_GRID])
        best = int(scan.argmin())
        lo = log_grid[max(best - 1, 0)]
        hi = log_grid[min(best + 1, log_grid.size - 1)]
        beta = math.exp(_golden_section(gap_at_log_beta, lo, hi))
        candidate = _power_mean_gap(log_p, targets, beta)
        if _power_mean_gap(log_p, targets, 1.0) <= candidate + _IDENTITY_SLACK:
            beta = 1.0
        betas[j] = beta
    return RecalibrationMap(TEMPERATURE, grid, temperatures=betas)


def apply_temperature(bundle: CifBundle, rmap: RecalibrationMap) -> CifBundle:
    """Rescale each sample's probability vector with the fitted exponents.

    Beta is step-extended over the bundle grid and treated as 1 before the
    first fitted time; the event coordinates of the scaled vector become
    the new CIFs, then the feasibility projection restores monotonicity.
    """
    if rmap.method != TEMPERATURE:
        raise ValidationError("map method mismatch: expected temperatures")
    taus = bundle.grid.times
    idx = step_indices(rmap.grid.times, taus)
    beta = np.where(idx >= 0, rmap.temperatures[np.maximum(idx, 0)], 1.0)
    p = _normalized_vectors(bundle, taus)
    z = beta[None, None, :] * np.log(p + _LOGIT_EPS)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    g = e / e.sum(axis=1, keepdims=True)
    events = g[:, 1:, :]
    # an underflowed survival coordinate would leave the event sum at
    # exactly one; keep the same headroom as the projection repairs
    sums = events.sum(axis=1, keepdims=True)
    saturated = sums > 1.0 - _SUM_HEADROOM
    extra = int(np.count_nonzero(saturated))
    if extra:
        factor = (1.0 - _SUM_HEADROOM) / np.where(saturated, sums, 1.0)
        events = np.where(saturated, events * factor, events)
    values, repairs = _feasible_projection(events)
    rmap.clip_events = repairs + extra
    return CifBundle(bundle.grid, values, bundle.sample_ids)


def upper_predictive_bound(
    bundle: CifBundle, k: int, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample earliest grid time with normalized CIF at least 1 - gamma.

    Returns the times and an "open" flag per sample; when the threshold is
    never reached the time falls back to t_max with the flag set.
    """
    if not 0.0 < gamma < 1.0:
        raise ValidationError("gamma must lie in (0, 1)")
    if not 1 <= k <= bundle.k_events:
        raise ValidationError(f"event {k} out of range 1..{bundle.k_events}")
    ratio = bundle.values[:, k - 1, :] / bundle.values[:, k - 1, -1:]
    hit = ratio >= 1.0 - gamma
    open_flag = ~hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    times = np.where(open_flag, bundle.grid.t_max, bundle.grid.times[first])
    return times, open_flag
