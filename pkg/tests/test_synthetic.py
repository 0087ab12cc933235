import numpy as np
import pytest

import crcal.synthetic as syn
from crcal.data import TimeGrid
from crcal.synthetic import (
    LatentRecord,
    WeibullConfig,
    generate_cohort,
    latents_to_csv,
    oracle_bundle,
    oracle_cif,
    oracle_survival,
    oracle_values,
    square_distort,
    survival_horizon,
)


def equal_shape_cif(lams, shape, k, t):
    """Closed form when all shapes coincide: with R = sum_j L_j^-S,
    F_k(t) = (L_k^-S / R) (1 - exp(-R t^S))."""
    rate = sum(l ** -shape for l in lams)
    return (lams[k] ** -shape / rate) * (1.0 - np.exp(-rate * t**shape))


class TestGenerate:
    def test_deterministic(self):
        cfg = WeibullConfig()
        a, la = generate_cohort(cfg, 1000, seed=1)
        b, lb = generate_cohort(cfg, 1000, seed=1)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.events, b.events)
        assert la[5] == lb[5]
        c, _ = generate_cohort(cfg, 1000, seed=2)
        assert not np.array_equal(a.times, c.times)

    def test_exponential_minimum_mean(self):
        # all shapes 1: latent times exponential, min of three has mean L/3
        lam = 0.8
        cfg = WeibullConfig(
            scale_ranges=((lam, lam),) * 3,
            shape_ranges=((1.0, 1.0),) * 3,
            censoring_scale=1e12,
        )
        _, latents = generate_cohort(cfg, 100_000, seed=3)
        tstar = np.array([r.true_time for r in latents])
        assert tstar.mean() == pytest.approx(lam / 3, rel=0.05)

    def test_huge_censoring_scale_means_no_censoring(self):
        cfg = WeibullConfig(censoring_scale=1e12)
        cohort, _ = generate_cohort(cfg, 2000, seed=4)
        assert (cohort.events == 0).sum() == 0

    def test_default_censoring_rate_is_moderate(self):
        cohort, _ = generate_cohort(WeibullConfig(), 5000, seed=5)
        frac = (cohort.events == 0).mean()
        assert 0.2 < frac < 0.7

    def test_covariates_skip_constant_parameters(self):
        cohort, _ = generate_cohort(WeibullConfig(), 50, seed=6)
        # lambda_2 is constant in the default config: 2 scales + 3 shapes
        assert cohort.covariates.shape == (50, 5)


class TestOracleCif:
    def test_unit_exponential_value(self):
        rec = LatentRecord((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 0.1, 1, 1.0)
        assert oracle_cif(rec, 1, 1.0) == pytest.approx((1 - np.exp(-3)) / 3, abs=1e-9)
        assert oracle_cif(rec, 1, 1.0) == pytest.approx(0.316738, abs=5e-7)

    def test_symmetric_parameters(self):
        rec = LatentRecord((0.7, 0.7, 0.7), (2.5, 2.5, 2.5), 0.1, 1, 1.0)
        vals = [oracle_cif(rec, k, 1.3) for k in (1, 2, 3)]
        assert vals[0] == pytest.approx(vals[1], abs=1e-12)
        assert vals[1] == pytest.approx(vals[2], abs=1e-12)

    def test_zero_time(self):
        rec = LatentRecord((0.5, 1.0, 2.0), (3.0, 1.5, 2.0), 0.1, 1, 1.0)
        assert oracle_cif(rec, 2, 0.0) == 0.0

    def test_equal_shape_closed_form(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            lams = tuple(rng.uniform(0.4, 3.0, 3))
            shape = float(rng.uniform(1.0, 8.0))
            rec = LatentRecord(lams, (shape,) * 3, 0.1, 1, 1.0)
            t = float(rng.uniform(0.05, 6.0))
            k = int(rng.integers(0, 3))
            assert oracle_cif(rec, k + 1, t) == pytest.approx(
                equal_shape_cif(lams, shape, k, t), abs=1e-6
            )

    def test_step_doubling(self, monkeypatch):
        # halving every panel must not move any value by more than 1e-6
        _, latents = generate_cohort(WeibullConfig(), 40, seed=8)
        times = np.linspace(0.05, 4.0, 17)
        coarse = oracle_values(latents, times)
        monkeypatch.setattr(syn, "N_HEAD", 2 * syn.N_HEAD)
        monkeypatch.setattr(syn, "N_BODY", 2 * syn.N_BODY)
        fine = oracle_values(latents, times)
        assert np.abs(coarse - fine).max() < 1e-6


class TestOracleBundle:
    def test_single_latent_single_time(self):
        rec = LatentRecord((0.5, 1.0, 2.0), (3.0, 1.5, 2.0), 0.1, 1, 1.0)
        bundle = oracle_bundle([rec], TimeGrid(np.array([1.0])))
        assert bundle.values.shape == (1, 3, 1)

    def test_conservation_against_closed_form_survival(self):
        _, latents = generate_cohort(WeibullConfig(), 300, seed=9)
        grid = np.linspace(0.03, 6.0, 40)
        vals = oracle_values(latents, grid)
        surv = oracle_survival(latents, grid)
        assert np.abs(vals.sum(axis=1) + surv - 1.0).max() < 1e-5

    def test_horizon_realizes_terminal_mass(self):
        _, latents = generate_cohort(WeibullConfig(), 200, seed=10)
        horizon = survival_horizon(latents, eps=1e-6)
        assert oracle_survival(latents, horizon).max() <= 1e-6 * 1.0001
        bundle = oracle_bundle(latents, TimeGrid(np.array([0.5, horizon])))
        assert bundle.values[:, :, -1].sum(axis=1).min() >= 1 - 1e-5

    def test_event_frequencies_match_terminal_mass(self):
        cfg = WeibullConfig(censoring_scale=1e12)
        cohort, latents = generate_cohort(cfg, 100_000, seed=11)
        freq = np.bincount(cohort.events, minlength=4)[1:] / cohort.n
        sub = latents[:5000]
        horizon = survival_horizon(sub, eps=1e-6)
        terminal = oracle_values(sub, np.array([horizon]))[:, :, 0].mean(axis=0)
        assert np.abs(freq - terminal).max() < 0.01


class TestDistortAndCsv:
    def test_square_distort(self):
        _, latents = generate_cohort(WeibullConfig(), 5, seed=12)
        bundle = oracle_bundle(latents, TimeGrid(np.array([0.5, 1.0, 2.0])))
        distorted = square_distort(bundle)
        assert distorted.values == pytest.approx(bundle.values**2)

    def test_latents_csv(self):
        _, latents = generate_cohort(WeibullConfig(), 3, seed=13)
        text = latents_to_csv(["1", "2", "3"], latents)
        lines = text.splitlines()
        assert lines[0] == "id,l1,l2,l3,s1,s2,s3,tstar,dstar,ctime"
        assert len(lines) == 4
        parts = lines[1].split(",")
        assert float(parts[7]) == latents[0].true_time
