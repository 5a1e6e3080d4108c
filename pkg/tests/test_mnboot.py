"""Tests for the non-regularity pretest and m-out-of-n intervals."""

import numpy as np
import pytest

from dtrsense import mcsa, mnboot
from dtrsense.confound import Link, NormalPrior, PriorSpec
from dtrsense.errors import DomainError, InsufficientB
from dtrsense.linmodel import chisq_quantile
from dtrsense.simlab import OneStageDgp, gen_one_stage
from dtrsense.simlab.dgp import default_model_spec


def degenerate_zero_prior(n_terms):
    return PriorSpec(
        zeta=tuple(NormalPrior(0.0, 0.0) for _ in range(n_terms + 1)),
        beta_u=NormalPrior(0.0, 0.0),
    )


class TestPretest:
    def test_zero_coefficients_give_one(self):
        h = np.random.default_rng(0).normal(size=(50, 3))
        h[:, 0] = 1.0
        p = mnboot.pretest_pk(h, np.zeros(3), np.eye(3), 0.05)
        assert p == 1.0

    def test_huge_blip_gives_zero(self):
        h = np.ones((100, 1))
        p = mnboot.pretest_pk(h, np.array([1e6]), np.eye(1), 0.05)
        assert p == 0.0

    def test_four_row_hand_oracle(self):
        # n = 4 patients, scalar blip design, psi = 1:
        # indicator is 4 h^2 <= h^2 sigma q, q = 3.8415
        h = np.array([[0.1], [1.0], [2.0], [0.5]])
        psi = np.array([1.0])
        q = chisq_quantile(0.95)
        # sigma = 1: 4 h^2 <= 3.84 h^2 fails on every row
        assert mnboot.pretest_pk(h, psi, np.array([[1.0]]), 0.05) == 0.0
        # sigma = 4: 4 h^2 <= 15.37 h^2 holds on every row
        assert mnboot.pretest_pk(h, psi, np.array([[4.0]]), 0.05) == 1.0
        # mixed case, enumerated by hand: blips (0, .4, -.4, 1.2),
        # stats 4*blip^2 = (0, .64, .64, 5.76);
        # h' diag(.04,.01) h = (.04, .05, .05, .13), bounds = q * that
        # = (.154, .192, .192, .499): only the first row passes -> 0.25
        h3 = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, -1.0], [1.0, 3.0]])
        psi3 = np.array([0.0, 0.4])
        sigma3 = np.diag([0.04, 0.01])
        stat3 = 4.0 * (h3 @ psi3) ** 2
        bound3 = np.einsum("ij,jk,ik->i", h3, sigma3, h3) * q
        assert np.array_equal(stat3 <= bound3, [True, False, False, False])
        assert mnboot.pretest_pk(h3, psi3, sigma3, 0.05) == 0.25


class TestResampleSize:
    def test_p_zero_returns_n(self):
        assert mnboot.resample_size(0.0, 1000, 0.05) == 1000

    def test_frozen_values(self):
        assert mnboot.resample_size(1.0, 1000, 0.05) == 720
        assert mnboot.resample_size(0.5, 1000, 0.05) == 848

    def test_monotone_decreasing_on_grid(self):
        grid = np.linspace(0.0, 1.0, 101)
        sizes = [mnboot.resample_size(p, 1000, 0.05) for p in grid]
        assert all(a > b for a, b in zip(sizes, sizes[1:]))

    def test_domain(self):
        with pytest.raises(DomainError):
            mnboot.resample_size(1.2, 1000, 0.05)
        with pytest.raises(DomainError):
            mnboot.resample_size(0.5, 1, 0.05)


@pytest.fixture(scope="module")
def regular_run():
    # strongly positive blip everywhere and no confounding: the pretest
    # should find nothing near zero and keep the full resample size
    dgp = OneStageDgp(beta_u=0.0, psi=(5.0, 0.5, 0.5))
    panel, _ = gen_one_stage(dgp, 500, 3)
    spec = default_model_spec(dgp)
    cfg = mcsa.McsaConfig(
        reps=120, seed=5, confounder_terms=("x1", "x2", "a1"),
        link=Link.IDENTITY, prior=degenerate_zero_prior(3),
    )
    fit = mcsa.run(panel, spec, cfg)
    report = mnboot.intervals(
        panel, spec, cfg, mnboot.CiConfig(reps=120, seed=6), mcsa_fit=fit
    )
    return panel, spec, cfg, fit, report


class TestIntervals:
    def test_regular_case_keeps_full_size(self, regular_run):
        panel, _, _, _, report = regular_run
        assert report.p_hat_global == 0.0
        assert report.m_hat_global == panel.n

    def test_p_hat_bounds_and_global_max(self, regular_run):
        _, _, _, _, report = regular_run
        assert np.all((report.p_hat >= 0.0) & (report.p_hat <= 1.0))
        assert report.p_hat_global == report.p_hat.max()

    def test_lower_not_above_upper(self, regular_run):
        _, _, _, _, report = regular_run
        for lo, hi in zip(report.lower, report.upper):
            assert np.all(lo <= hi)

    def test_contains_point_iff_percentiles_straddle_zero(self, regular_run):
        panel, spec, cfg, fit, report = regular_run
        from dtrsense.dwols import design_matrix, stage_data

        stages = stage_data(panel, spec)
        u_design = design_matrix(panel, cfg.confounder_terms)
        draws, _ = mnboot._collect_draws(
            stages, panel.y, u_design, cfg, 120, report.m_hat_global,
            np.random.SeedSequence(6, spawn_key=(0,)),
        )
        root_m = np.sqrt(report.m_hat_global)
        centered = root_m * (draws[0] - fit.psi_adj[0])
        l, u = mnboot.boot_percentiles(centered, 0.05)
        contains = (report.lower[0] <= fit.psi_adj[0]) & (fit.psi_adj[0] <= report.upper[0])
        np.testing.assert_array_equal(contains, (l <= 0.0) & (0.0 <= u))

    def test_deterministic(self, regular_run):
        panel, spec, cfg, fit, report = regular_run
        again = mnboot.intervals(
            panel, spec, cfg, mnboot.CiConfig(reps=120, seed=6), mcsa_fit=fit
        )
        assert np.array_equal(report.p_hat, again.p_hat)
        assert report.m_hat_global == again.m_hat_global
        for a, b in zip(report.lower, again.lower):
            assert np.array_equal(a, b)
        for a, b in zip(report.upper, again.upper):
            assert np.array_equal(a, b)

    def test_insufficient_reps_rejected(self, regular_run):
        panel, spec, cfg, fit, _ = regular_run
        with pytest.raises(InsufficientB):
            mnboot.intervals(panel, spec, cfg, mnboot.CiConfig(reps=39, seed=1), mcsa_fit=fit)

    def test_sandwich_sigma_alternative_runs(self, regular_run):
        panel, spec, cfg, fit, _ = regular_run
        report = mnboot.intervals(
            panel, spec, cfg,
            mnboot.CiConfig(reps=60, seed=8, sigma_method="sandwich"),
            mcsa_fit=fit,
        )
        assert report.sigma_method == "sandwich"
        assert report.sigma.shape == (3, 3)
        # with a degenerate zero prior both covariance estimates target the
        # same sampling covariance
        default = mnboot.intervals(
            panel, spec, cfg, mnboot.CiConfig(reps=60, seed=8), mcsa_fit=fit
        )
        assert default.sigma_method == "bootstrap"
        ratio = np.diag(default.sigma) / np.diag(report.sigma)
        assert np.all((ratio > 0.5) & (ratio < 2.0))


class TestCoverageAtRegularParameters:
    def test_standard_bootstrap_coverage(self):
        # regular case: intervals behave like ordinary percentile bootstrap
        dgp = OneStageDgp(beta_u=0.0, psi=(5.0, 0.5, 0.5))
        spec = default_model_spec(dgp)
        truth = np.array(dgp.psi)
        reps, hits = 200, np.zeros(3)
        m_full = 0
        for rep in range(reps):
            panel, _ = gen_one_stage(dgp, 1000, np.random.SeedSequence(77, spawn_key=(rep,)))
            cfg = mcsa.McsaConfig(
                reps=200, seed=rep * 2 + 1, confounder_terms=("x1", "x2", "a1"),
                link=Link.IDENTITY, prior=degenerate_zero_prior(3),
            )
            fit = mcsa.run(panel, spec, cfg)
            report = mnboot.intervals(
                panel, spec, cfg, mnboot.CiConfig(reps=200, seed=rep * 2 + 2), mcsa_fit=fit
            )
            hits += (report.lower[0] <= truth) & (truth <= report.upper[0])
            m_full += report.m_hat_global == panel.n
        coverage = hits / reps
        assert m_full >= 0.95 * reps
        assert np.all(np.abs(coverage - 0.95) <= 0.03 + 1e-12)

    def test_width_scales_with_root_n(self):
        dgp = OneStageDgp(beta_u=0.0, psi=(5.0, 0.5, 0.5))
        spec = default_model_spec(dgp)
        means = {}
        for n in (300, 600):
            widths = []
            for rep in range(100):
                panel, _ = gen_one_stage(dgp, n, np.random.SeedSequence(n, spawn_key=(rep,)))
                cfg = mcsa.McsaConfig(
                    reps=60, seed=rep + 1, confounder_terms=("x1", "x2", "a1"),
                    link=Link.IDENTITY, prior=degenerate_zero_prior(3),
                )
                fit = mcsa.run(panel, spec, cfg)
                report = mnboot.intervals(
                    panel, spec, cfg, mnboot.CiConfig(reps=60, seed=rep + 5000), mcsa_fit=fit
                )
                widths.append(report.upper[0] - report.lower[0])
            means[n] = np.mean(widths, axis=0)
        ratio = means[600] / means[300]
        assert np.all(np.abs(ratio - 1.0 / np.sqrt(2.0)) <= 0.15 / np.sqrt(2.0))
