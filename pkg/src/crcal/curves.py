"""Nonparametric marginal estimators: Kaplan-Meier and Aalen-Johansen.

All curves are right-continuous step functions with explicit left limits.
Ties at equal times follow the standard convention: events are processed
with the full risk set, censorings leave the risk set after the events at
that time. The censoring-survival curve G mirrors this with the roles of
event and censoring flipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Cohort, CifBundle, TimeGrid, _fmt
from .errors import ValidationError


@dataclass(frozen=True)
class StepCurve:
    """Right-continuous step function with value ``initial_value`` before
    the first jump time."""

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        if jt.shape != vals.shape or jt.ndim != 1:
            raise ValidationError("jump_times and values must be aligned 1-D arrays")
        if jt.size and np.any(np.diff(jt) <= 0):
            raise ValidationError("jump times must be strictly increasing")

    def at(self, t) -> np.ndarray:
        """Value at time t (right-continuous)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        padded = np.concatenate(([self.initial_value], self.values))
        return padded[idx + 1]

    def at_left(self, t) -> np.ndarray:
        """Left limit, the value just before time t."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="left") - 1
        padded = np.concatenate(([self.initial_value], self.values))
        return padded[idx + 1]

    def to_csv(self) -> str:
        lines = ["time,value", f"0,{_fmt(self.initial_value)}"]
        for t, v in zip(self.jump_times, self.values):
            lines.append(f"{_fmt(t)},{_fmt(v)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MarginalCurveSet:
    """Population-level step curves sharing one set of jump times.

    ``km_survival`` is the Kaplan-Meier survival, ``aj_cif[k-1]`` the
    Aalen-Johansen incidence of event k, and ``censoring_survival`` the
    Kaplan-Meier curve of the censoring distribution. At every jump time
    the construction identity sum_k AJ_k(t) + KM(t) = 1 holds when no
    record remains at risk past the last event, and more generally the
    three pieces are built from one shared risk-set pass.
    """

    event_times: np.ndarray
    km_survival: np.ndarray
    aj_cif: np.ndarray
    censoring_survival: np.ndarray

    @property
    def k_events(self) -> int:
        return self.aj_cif.shape[0]

    @property
    def km(self) -> StepCurve:
        return StepCurve(self.event_times, self.km_survival, 1.0)

    def cif(self, k: int) -> StepCurve:
        if not 1 <= k <= self.k_events:
            raise ValidationError(f"event {k} out of range 1..{self.k_events}")
        return StepCurve(self.event_times, self.aj_cif[k - 1], 0.0)

    @property
    def censoring(self) -> StepCurve:
        return StepCurve(self.event_times, self.censoring_survival, 1.0)


def _risk_table(cohort: Cohort):
    """Unique times with event counts per type, censor counts, risk sets."""
    utimes, inverse = np.unique(cohort.times, return_inverse=True)
    m = utimes.size
    k1 = cohort.k_events + 1
    flat = np.bincount(cohort.events * m + inverse, minlength=k1 * m)
    counts = flat.reshape(k1, m)
    at_risk = cohort.n - np.concatenate(([0], np.cumsum(counts.sum(axis=0))[:-1]))
    return utimes, counts, at_risk


def kaplan_meier(cohort: Cohort) -> StepCurve:
    """Kaplan-Meier survival of the time to any event.

    S(t) = prod_{t_i <= t} (Y(t_i) - d(t_i)) / Y(t_i) with d counting all
    non-censored records at t_i and Y the number still at risk there.
    """
    if cohort.n == 0:
        raise ValidationError("cohort is empty")
    utimes, counts, at_risk = _risk_table(cohort)
    d_any = counts[1:, :].sum(axis=0)
    surv = np.cumprod((at_risk - d_any) / at_risk)
    return StepCurve(utimes, surv, 1.0)


def censoring_survival(cohort: Cohort) -> StepCurve:
    """Kaplan-Meier estimate G of the censoring survival function.

    Censoring is treated as the event and any real event as censoring;
    at tied times the real events are removed from the risk set first.
    """
    if cohort.n == 0:
        raise ValidationError("cohort is empty")
    utimes, counts, at_risk = _risk_table(cohort)
    d_any = counts[1:, :].sum(axis=0)
    c = counts[0, :]
    risk_g = at_risk - d_any
    factors = np.where(risk_g > 0, (risk_g - c) / np.where(risk_g > 0, risk_g, 1), 1.0)
    return StepCurve(utimes, np.cumprod(factors), 1.0)


def aalen_johansen(cohort: Cohort) -> MarginalCurveSet:
    """Aalen-Johansen cause-specific CIFs with matching KM and G curves.

    F_k(t) = sum_{t_i <= t} S(t_i-) d_k(t_i) / Y(t_i), where S(t-) is the
    Kaplan-Meier left limit. Built in one pass so that at every jump time
    sum_k F_k + S equals 1 up to float accumulation.
    """
    if cohort.n == 0:
        raise ValidationError("cohort is empty")
    utimes, counts, at_risk = _risk_table(cohort)
    d_any = counts[1:, :].sum(axis=0)
    surv = np.cumprod((at_risk - d_any) / at_risk)
    surv_left = np.concatenate(([1.0], surv[:-1]))
    increments = surv_left[None, :] * counts[1:, :] / at_risk[None, :]
    aj = np.cumsum(increments, axis=1)
    c = counts[0, :]
    risk_g = at_risk - d_any
    factors = np.where(risk_g > 0, (risk_g - c) / np.where(risk_g > 0, risk_g, 1), 1.0)
    return MarginalCurveSet(utimes, surv, aj, np.cumprod(factors))


def marginal_bundle(curves: MarginalCurveSet, grid: TimeGrid, sample_ids) -> CifBundle:
    """Bundle that predicts the population AJ curves for every sample.

    This is the Aalen-Johansen estimator used as a (covariate-free) model.
    """
    vals = np.stack([curves.cif(k + 1).at(grid.times) for k in range(curves.k_events)])
    if np.any(vals[:, -1] <= 0.0):
        raise ValidationError("marginal CIF is zero at t_max for some event; cannot form a bundle")
    values = np.broadcast_to(vals[None, :, :], (len(sample_ids), curves.k_events, grid.d)).copy()
    return CifBundle(grid, values, tuple(sample_ids))
