import numpy as np
import pytest

from crcal.data import (
    CifBundle,
    Cohort,
    TimeGrid,
    bundle_to_csv,
    cohort_to_csv,
    parse_bundle,
    parse_cohort,
    quantile_grid,
    split_cohort,
)
from crcal.errors import ValidationError


class TestParseCohort:
    def test_basic_parse(self):
        cohort = parse_cohort("id,time,event\n1,1.0,1\n2,2.0,0\n", k_events=2)
        assert cohort.n == 2
        assert cohort.events.tolist() == [1, 0]
        assert cohort.times.tolist() == [1.0, 2.0]
        assert cohort.covariates is None

    def test_event_out_of_range(self):
        with pytest.raises(ValidationError, match="out of range"):
            parse_cohort("id,time,event\n1,1.0,3\n", k_events=2)

    def test_covariates(self):
        cohort = parse_cohort("id,time,event,x1\n1,1.0,1,0.5\n", k_events=1)
        assert cohort.covariates.shape == (1, 1)
        assert cohort.covariates[0, 0] == 0.5

    def test_negative_time_rejected(self):
        with pytest.raises(ValidationError, match="row 2"):
            parse_cohort("id,time,event\n1,-1.0,1\n", k_events=1)

    def test_duplicate_id_rejected(self):
        with pytest.raises(ValidationError, match="duplicate id"):
            parse_cohort("id,time,event\n1,1.0,1\n1,2.0,0\n", k_events=1)

    def test_non_numeric_rejected(self):
        with pytest.raises(ValidationError, match="non-numeric"):
            parse_cohort("id,time,event\n1,abc,1\n", k_events=1)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        cohort = Cohort(
            ids=tuple(str(i) for i in range(20)),
            times=rng.exponential(1.0, 20),
            events=rng.integers(0, 3, 20),
            k_events=2,
            covariates=rng.normal(size=(20, 3)),
        )
        again = parse_cohort(cohort_to_csv(cohort), k_events=2)
        assert again.ids == cohort.ids
        assert np.array_equal(again.times, cohort.times)
        assert np.array_equal(again.events, cohort.events)
        assert np.array_equal(again.covariates, cohort.covariates)


class TestParseBundle:
    def test_basic_parse(self):
        text = "sample_id,event,time,cif\n1,1,1.0,0.2\n1,1,2.0,0.5\n"
        bundle = parse_bundle(text, k_events=1)
        assert bundle.grid.times.tolist() == [1.0, 2.0]
        assert bundle.values.shape == (1, 1, 2)

    def test_non_monotone_rejected(self):
        text = "sample_id,event,time,cif\n1,1,1.0,0.5\n1,1,2.0,0.4\n"
        with pytest.raises(ValidationError, match="nondecreasing"):
            parse_bundle(text, k_events=1)

    def test_sum_above_one_rejected(self):
        text = (
            "sample_id,event,time,cif\n"
            "1,1,2.0,0.7\n"
            "1,2,2.0,0.6\n"
        )
        with pytest.raises(ValidationError, match="exceed 1"):
            parse_bundle(text, k_events=2)

    def test_ragged_grid_rejected(self):
        text = (
            "sample_id,event,time,cif\n"
            "1,1,1.0,0.2\n1,1,2.0,0.5\n"
            "2,1,1.0,0.3\n"
        )
        with pytest.raises(ValidationError, match="ragged"):
            parse_bundle(text, k_events=1)

    def test_terminal_zero_rejected(self):
        text = "sample_id,event,time,cif\n1,1,1.0,0.0\n1,1,2.0,0.0\n"
        with pytest.raises(ValidationError, match="terminal"):
            parse_bundle(text, k_events=1)

    def test_cif_out_of_bounds_rejected(self):
        with pytest.raises(ValidationError, match="outside"):
            parse_bundle("sample_id,event,time,cif\n1,1,1.0,1.2\n", k_events=1)

    def test_row_order_free_and_round_trip(self):
        rng = np.random.default_rng(1)
        grid = TimeGrid(np.array([0.5, 1.0, 2.0]))
        vals = np.sort(rng.uniform(0.05, 0.45, size=(3, 2, 3)), axis=2)
        bundle = CifBundle(grid, vals, ("a", "b", "c"))
        text = bundle_to_csv(bundle)
        lines = text.splitlines()
        shuffled = [lines[0]] + [lines[i + 1] for i in rng.permutation(len(lines) - 1)]
        again = parse_bundle("\n".join(shuffled) + "\n", k_events=2)
        order = [again.sample_ids.index(s) for s in bundle.sample_ids]
        assert np.array_equal(again.values[order], bundle.values)
        assert np.array_equal(again.grid.times, bundle.grid.times)


class TestBundleEvaluation:
    def setup_method(self):
        grid = TimeGrid(np.array([1.0, 2.0, 4.0]))
        vals = np.array([[[0.1, 0.2, 0.4], [0.05, 0.1, 0.2]]])
        self.bundle = CifBundle(grid, vals, ("s1",))

    def test_step_interpolation(self):
        out = self.bundle.values_at(np.array([0.5, 1.0, 1.5, 3.0, 9.0]))
        assert out[0, 0].tolist() == [0.0, 0.1, 0.1, 0.2, 0.4]

    def test_survival_at_own_times(self):
        s = self.bundle.survival_at_own_times(np.array([2.5]))
        assert s[0] == pytest.approx(1.0 - 0.2 - 0.1)


class TestSplitCohort:
    def _cohort(self, n):
        rng = np.random.default_rng(42)
        return Cohort(
            ids=tuple(str(i) for i in range(n)),
            times=rng.exponential(1.0, n),
            events=rng.integers(0, 3, n),
            k_events=2,
        )

    def test_sizes_and_determinism(self):
        cohort = self._cohort(10)
        parts = split_cohort(cohort, seed=7, fractions=(0.4, 0.4, 0.2))
        assert tuple(p.n for p in parts) == (4, 4, 2)
        again = split_cohort(cohort, seed=7, fractions=(0.4, 0.4, 0.2))
        for a, b in zip(parts, again):
            assert a.ids == b.ids

    def test_bad_fractions(self):
        with pytest.raises(ValidationError):
            split_cohort(self._cohort(10), seed=0, fractions=(0.5, 0.5, 0.1))

    def test_largest_remainder(self):
        parts = split_cohort(self._cohort(5), seed=3, fractions=(0.4, 0.4, 0.2))
        assert tuple(p.n for p in parts) == (2, 2, 1)

    def test_partition_property(self):
        # disjoint and exhaustive for many n, fractions, seeds
        rng = np.random.default_rng(0)
        for trial in range(25):
            n = int(rng.integers(3, 200))
            cohort = self._cohort(n)
            raw = rng.dirichlet(np.ones(3))
            fractions = tuple(raw / raw.sum())
            parts = split_cohort(cohort, seed=trial, fractions=fractions)
            ids = [i for p in parts for i in p.ids]
            assert len(ids) == n
            assert set(ids) == set(cohort.ids)


class TestQuantileGrid:
    def _cohort(self, times):
        times = np.asarray(times, dtype=float)
        return Cohort(
            ids=tuple(str(i) for i in range(times.size)),
            times=times,
            events=np.ones(times.size, dtype=int),
            k_events=1,
        )

    def test_order_statistic_small(self):
        grid = quantile_grid(self._cohort([1, 2, 3, 4]), d=2)
        assert grid.times.tolist() == [2.0, 4.0]

    def test_order_statistic_hundred(self):
        grid = quantile_grid(self._cohort(np.arange(1, 101)), d=4)
        assert grid.times.tolist() == [25.0, 50.0, 75.0, 100.0]

    def test_degenerate_rejected(self):
        with pytest.raises(ValidationError, match="degenerate"):
            quantile_grid(self._cohort([5.0] * 8), d=4)

    def test_strictly_increasing_and_max(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            times = rng.choice([0.5, 1.0, 1.5, 2.0, 5.0, 7.5], size=int(rng.integers(5, 60)))
            cohort = self._cohort(times)
            grid = quantile_grid(cohort, d=int(rng.integers(2, 12)))
            assert np.all(np.diff(grid.times) > 0)
            assert grid.t_max == times.max()
