"""Core data model: cohorts, time grids, CIF bundles, CSV ingestion.

A cohort holds observed records ``(time, event)`` with ``event = 0``
meaning censored and ``event in 1..K`` one of the K competing events.
A bundle holds per-sample, per-event cumulative incidence values on a
shared time grid; the implied survival at any time is one minus the sum
of the event CIFs there.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

SUM_TOL = 1e-6


def _fmt(x: float) -> str:
    """Format a float with 17 significant digits (lossless round-trip)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Cohort:
    """Observed records of a competing-risks study.

    Attributes
    ----------
    ids : tuple of str
        Unique sample identifiers, in file/row order.
    times : ndarray, shape (n,)
        Nonnegative observed durations (event or censoring times).
    events : ndarray, shape (n,)
        Integer labels in ``0..k_events``; 0 marks a censored record.
    k_events : int
        Number of competing events K.
    covariates : ndarray of shape (n, d), optional
        Passthrough covariate matrix; never interpreted by this package.
    """

    ids: tuple[str, ...]
    times: np.ndarray
    events: np.ndarray
    k_events: int
    covariates: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        events = np.asarray(self.events, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        if self.k_events < 1:
            raise ValidationError("k_events must be a positive integer")
        if times.ndim != 1 or events.shape != times.shape:
            raise ValidationError("times and events must be 1-D and aligned")
        if len(self.ids) != times.size:
            raise ValidationError("ids must align with records")
        if times.size and not np.all(np.isfinite(times)):
            raise ValidationError("non-finite time")
        if np.any(times < 0):
            raise ValidationError("negative time")
        if np.any((events < 0) | (events > self.k_events)):
            raise ValidationError("event label out of range 0..K")
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            object.__setattr__(self, "covariates", cov)
            if cov.ndim != 2 or cov.shape[0] != times.size:
                raise ValidationError("covariate row count must equal record count")

    @property
    def n(self) -> int:
        return self.times.size

    def subset(self, index: np.ndarray) -> "Cohort":
        """Select records by integer index, preserving the given order."""
        index = np.asarray(index, dtype=np.int64)
        cov = None if self.covariates is None else self.covariates[index]
        return Cohort(
            ids=tuple(self.ids[i] for i in index),
            times=self.times[index],
            events=self.events[index],
            k_events=self.k_events,
            covariates=cov,
        )


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing evaluation times; ``t_max`` is the last one."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 1:
            raise ValidationError("grid needs at least one time")
        if not np.all(np.isfinite(times)):
            raise ValidationError("grid times must be finite")
        if np.any(times <= 0):
            raise ValidationError("grid times must be positive")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("grid times must be strictly increasing")

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def d(self) -> int:
        return self.times.size


def step_indices(grid_times: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Index of the last grid time <= t, or -1 when t precedes the grid.

    This is the shared right-continuous step convention: a curve known at
    grid times is flat between them and zero (CIF) before the first one.
    """
    return np.searchsorted(grid_times, np.asarray(t, dtype=float), side="right") - 1


@dataclass(frozen=True)
class CifBundle:
    """Per-sample, per-event CIF values on a common grid.

    ``values[i, k-1, j]`` is the predicted probability that sample ``i``
    experiences event ``k`` by grid time ``j``. Values are validated to be
    probabilities, nondecreasing in time, jointly bounded by one, and
    strictly positive at the terminal grid time (every event must remain
    possible for every sample).
    """

    grid: TimeGrid
    values: np.ndarray
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 3:
            raise ValidationError("bundle values must have shape (n, K, d)")
        n, k, d = values.shape
        if n < 1 or k < 1:
            raise ValidationError("bundle must contain samples and events")
        if d != self.grid.d:
            raise ValidationError("bundle values do not match grid length")
        if len(self.sample_ids) != n:
            raise ValidationError("sample_ids must align with values")
        if not np.all(np.isfinite(values)):
            raise ValidationError("non-finite CIF value")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValidationError("CIF values must lie in [0, 1]")
        if d > 1 and np.any(np.diff(values, axis=2) < 0):
            raise ValidationError("CIF not nondecreasing along the grid")
        if np.any(values.sum(axis=1) > 1.0 + SUM_TOL):
            raise ValidationError("event probabilities exceed 1")
        if np.any(values[:, :, -1] <= 0.0):
            raise ValidationError("terminal CIF must be positive for every sample and event")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k_events(self) -> int:
        return self.values.shape[1]

    def values_at(self, t: np.ndarray) -> np.ndarray:
        """Step-evaluate all CIFs at arbitrary times, shape (n, K, len(t))."""
        idx = step_indices(self.grid.times, t)
        out = np.where(idx[None, None, :] >= 0, self.values[:, :, np.maximum(idx, 0)], 0.0)
        return out

    def values_at_own_times(self, t: np.ndarray) -> np.ndarray:
        """Step-evaluate each sample's CIFs at its own time, shape (n, K)."""
        t = np.asarray(t, dtype=float)
        if t.shape != (self.n,):
            raise ValidationError("per-sample times must align with bundle samples")
        idx = step_indices(self.grid.times, t)
        rows = np.arange(self.n)[:, None]
        cols = np.arange(self.k_events)[None, :]
        picked = self.values[rows, cols, np.maximum(idx, 0)[:, None]]
        return np.where(idx[:, None] >= 0, picked, 0.0)

    def survival_at_own_times(self, t: np.ndarray) -> np.ndarray:
        """Implied survival 1 - sum_k F_k at each sample's own time."""
        return 1.0 - self.values_at_own_times(t).sum(axis=1)

    def terminal(self) -> np.ndarray:
        """CIF values at t_max, shape (n, K); stands in for F_k(inf)."""
        return self.values[:, :, -1]


def parse_cohort(csv_text: str, k_events: int) -> Cohort:
    """Parse cohort CSV with header ``id,time,event[,x1,...,xd]``."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty cohort file") from None
    header = [h.strip() for h in header]
    if header[:3] != ["id", "time", "event"]:
        raise ValidationError("cohort header must start with id,time,event")
    cov_names = header[3:]
    ids: list[str] = []
    seen: set[str] = set()
    times: list[float] = []
    events: list[int] = []
    covs: list[list[float]] = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
        rid = row[0].strip()
        if rid in seen:
            raise ValidationError(f"row {row_no}: duplicate id {rid!r}")
        seen.add(rid)
        try:
            t = float(row[1])
        except ValueError:
            raise ValidationError(f"row {row_no}: non-numeric time {row[1]!r}") from None
        if not math.isfinite(t) or t < 0:
            raise ValidationError(f"row {row_no}: negative time")
        try:
            ev = int(row[2])
        except ValueError:
            raise ValidationError(f"row {row_no}: non-numeric event {row[2]!r}") from None
        if not 0 <= ev <= k_events:
            raise ValidationError(f"row {row_no}: event label out of range 0..{k_events}")
        if cov_names:
            try:
                covs.append([float(v) for v in row[3:]])
            except ValueError:
                raise ValidationError(f"row {row_no}: non-numeric covariate") from None
        ids.append(rid)
        times.append(t)
        events.append(ev)
    if not ids:
        raise ValidationError("cohort has no records")
    covariates = np.asarray(covs, dtype=float) if cov_names else None
    return Cohort(tuple(ids), np.asarray(times), np.asarray(events), k_events, covariates)


def cohort_to_csv(cohort: Cohort) -> str:
    """Serialize a cohort; inverse of :func:`parse_cohort`."""
    d = 0 if cohort.covariates is None else cohort.covariates.shape[1]
    lines = ["id,time,event" + "".join(f",x{j + 1}" for j in range(d))]
    for i in range(cohort.n):
        row = [cohort.ids[i], _fmt(cohort.times[i]), str(int(cohort.events[i]))]
        if d:
            row.extend(_fmt(v) for v in cohort.covariates[i])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_bundle(csv_text: str, k_events: int) -> CifBundle:
    """Parse long-format bundle CSV ``sample_id,event,time,cif``.

    Every (sample, event) pair must cover the identical set of times; the
    grid is the sorted set of distinct times. Row order is free.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty bundle file") from None
    if [h.strip() for h in header] != ["sample_id", "event", "time", "cif"]:
        raise ValidationError("bundle header must be sample_id,event,time,cif")
    entries: dict[tuple[str, int], dict[float, float]] = {}
    order: list[str] = []
    seen_samples: set[str] = set()
    all_times: set[float] = set()
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValidationError(f"row {row_no}: expected 4 fields")
        sid = row[0].strip()
        try:
            ev = int(row[1])
            t = float(row[2])
            cif = float(row[3])
        except ValueError:
            raise ValidationError(f"row {row_no}: non-numeric field") from None
        if not 1 <= ev <= k_events:
            raise ValidationError(f"row {row_no}: event label out of range 1..{k_events}")
        if not math.isfinite(t) or t <= 0:
            raise ValidationError(f"row {row_no}: time must be positive and finite")
        if not 0.0 <= cif <= 1.0:
            raise ValidationError(f"row {row_no}: cif outside [0, 1]")
        if sid not in seen_samples:
            seen_samples.add(sid)
            order.append(sid)
        cell = entries.setdefault((sid, ev), {})
        if t in cell:
            raise ValidationError(f"row {row_no}: duplicate time for sample {sid!r} event {ev}")
        cell[t] = cif
        all_times.add(t)
    if not order:
        raise ValidationError("bundle has no rows")
    grid_times = np.asarray(sorted(all_times))
    d = grid_times.size
    n = len(order)
    values = np.empty((n, k_events, d))
    for i, sid in enumerate(order):
        for ev in range(1, k_events + 1):
            cell = entries.get((sid, ev))
            if cell is None or len(cell) != d:
                raise ValidationError(f"ragged grid: sample {sid!r} event {ev} does not cover all times")
            values[i, ev - 1, :] = [cell[t] for t in grid_times]
    return CifBundle(TimeGrid(grid_times), values, tuple(order))


def bundle_to_csv(bundle: CifBundle) -> str:
    """Serialize a bundle; inverse of :func:`parse_bundle`."""
    lines = ["sample_id,event,time,cif"]
    for i, sid in enumerate(bundle.sample_ids):
        for k in range(bundle.k_events):
            for j, t in enumerate(bundle.grid.times):
                lines.append(f"{sid},{k + 1},{_fmt(t)},{_fmt(bundle.values[i, k, j])}")
    return "\n".join(lines) + "\n"


def split_cohort(
    cohort: Cohort, seed: int, fractions: tuple[float, float, float] = (0.4, 0.4, 0.2)
) -> tuple[Cohort, Cohort, Cohort]:
    """Random disjoint partition into (train, cal, test) cohorts.

    Sizes follow largest-remainder rounding of ``n * fraction`` and the
    permutation is a pure function of ``seed``.
    """
    if cohort.n == 0:
        raise ValidationError("cannot split an empty cohort")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValidationError("fractions must be three positive reals")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError("fractions must sum to 1")
    n = cohort.n
    exact = [n * f for f in fractions]
    sizes = [int(math.floor(e)) for e in exact]
    remainders = [e - s for e, s in zip(exact, sizes)]
    for _ in range(n - sum(sizes)):
        j = max(range(3), key=lambda i: (remainders[i], -i))
        sizes[j] += 1
        remainders[j] = -1.0
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = tuple(cohort.subset(np.sort(perm[bounds[i]:bounds[i + 1]])) for i in range(3))
    return parts


def quantile_grid(cohort: Cohort, d: int) -> TimeGrid:
    """Evaluation grid at duration quantiles 1/d, 2/d, ..., 1.

    Uses lower interpolation (the ceil(q*n)-th order statistic) so every
    grid point is an observed time; duplicates are dropped. The last point
    equals the maximum observed duration.
    """
    if cohort.n == 0:
        raise ValidationError("cohort is empty")
    if d < 2:
        raise ValidationError("grid size d must be at least 2")
    times = np.sort(cohort.times)
    n = times.size
    idx = np.ceil(np.arange(1, d + 1) * n / d).astype(int) - 1
    grid = np.unique(times[idx])
    if grid.size < 2:
        raise ValidationError("degenerate duration distribution: grid collapses to one point")
    if grid[0] <= 0:
        grid = grid[grid > 0]
        if grid.size < 2:
            raise ValidationError("degenerate duration distribution: grid collapses to one point")
    return TimeGrid(grid)
