"""Hausman statistic, branch rule and the two-stage confidence interval."""

import math

import numpy as np
import pytest

import pretestcov as pc
from pretestcov.errors import DegenerateDesignError
from pretestcov.pretest import _two_stage_arrays

from conftest import CS, make_config


class TestHausmanStat:
    def test_equal_slopes_give_zero(self):
        assert pc.hausman_stat(1.8, 1.8, 2.5, 0.125, 1.0, 1.5) == 0.0

    def test_hand_value(self):
        # denominator 1/2.5 + 1.5/0.125 = 12.4, H = 1.44/12.4
        got = pc.hausman_stat(1.8, 3.0, ssw=2.5, ssb=0.125, sigma_eps_sq=1.0, q=1.5)
        assert got == pytest.approx(1.44 / 12.4, rel=1e-14)
        assert got == pytest.approx(0.116129, abs=1e-6)

    def test_scale_invariance(self):
        base = pc.hausman_stat(1.8, 3.0, 2.5, 0.125, 1.0, 1.5)
        # y -> c y scales slopes by c and sigma_eps^2 by c^2
        c = 3.7
        scaled = pc.hausman_stat(c * 1.8, c * 3.0, 2.5, 0.125, c * c * 1.0, 1.5)
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateDesignError):
            pc.hausman_stat(1.0, 2.0, 0.0, 1.0, 1.0, 0.5)
        with pytest.raises(DegenerateDesignError):
            pc.hausman_stat(1.0, 2.0, 1.0, 1.0, 0.0, 0.5)

    def test_chi2_null_distribution(self):
        # tau = 0, known variances: P(H > z^2_{0.975}) = 0.05
        cfg = make_config(estimator=pc.VarianceEstimator.KNOWN)
        batch = pc.collect_runs(cfg, 20000, 3)
        rate = (batch.hausman_known > pc.pretest_threshold(0.05)).mean()
        assert abs(rate - 0.05) < 3 * math.sqrt(0.05 * 0.95 / 20000)


class TestBranchRule:
    def test_threshold_is_squared_quantile(self):
        assert pc.pretest_threshold(0.05) == pytest.approx(
            pc.normal_quantile(0.975) ** 2, rel=1e-15
        )

    @staticmethod
    def _decide(diff, threshold):
        """Branch decision with the Hausman denominator crafted to exactly 1:
        t=2, psi_hat=0.5 give q=0.75; ssw=2, ssb=1.5 give 1/ssw + q/ssb = 1."""
        hstat, accept, _ = _two_stage_arrays(
            beta_w=np.float64(diff),
            beta_b=np.float64(0.0),
            ssw=np.float64(2.0),
            ssb=np.float64(1.5),
            r=np.float64(0.75),
            sig_eps_sq=np.float64(1.0),
            psi_hat=np.float64(0.5),
            t=2,
            z_alpha=np.float64(1.96),
            threshold=np.float64(threshold),
        )
        return float(hstat), bool(accept)

    def test_flip_exactly_at_threshold(self):
        thr = pc.pretest_threshold(0.05)
        h_lo, accept_lo = self._decide(math.sqrt(thr * (1.0 - 1e-12)), thr)
        h_hi, accept_hi = self._decide(math.sqrt(thr * (1.0 + 1e-12)), thr)
        assert h_lo < thr < h_hi
        assert accept_lo and not accept_hi

    def test_tie_accepts_null(self):
        # exactly representable statistic and threshold: H = 4 vs threshold 4
        hstat, accept = self._decide(2.0, 4.0)
        assert hstat == 4.0
        assert accept


class TestTwoStage:
    def _draw(self, cfg, seed=0):
        return pc.generate_panel(cfg, pc.base_noise(cfg.n, cfg.t, seed, 0))

    def test_alpha_tilde_near_one_forces_fixed_effects(self):
        cfg = make_config(alpha_tilde=1 - 1e-12, estimator=pc.VarianceEstimator.KNOWN)
        for seed in range(5):
            res = pc.two_stage_ci(self._draw(cfg, seed), cfg)
            assert res.branch is pc.Branch.FIXED_EFFECTS
            expect = pc.ci_within(res.beta_w, pc.xstats(self._draw(cfg, seed).x).ssw,
                                  1.0, cfg.alpha)
            assert res.interval.center == expect.center
            assert res.interval.half_width == pytest.approx(expect.half_width, rel=1e-14)

    def test_alpha_tilde_near_zero_forces_random_effects(self):
        cfg = make_config(alpha_tilde=1e-12, estimator=pc.VarianceEstimator.KNOWN)
        for seed in range(5):
            res = pc.two_stage_ci(self._draw(cfg, seed), cfg)
            assert res.branch is pc.Branch.RANDOM_EFFECTS

    def test_branch_interval_consistency_fuzz(self):
        thr = None
        for seed in range(30):
            estimator = [
                pc.VarianceEstimator.KNOWN,
                pc.VarianceEstimator.UNBIASED,
                pc.VarianceEstimator.MLE,
                pc.VarianceEstimator.WOOLDRIDGE0,
                pc.VarianceEstimator.WOOLDRIDGE2,
            ][seed % 5]
            cfg = make_config(n=20, estimator=estimator, tau=0.2, alpha_tilde=0.3)
            draw = self._draw(cfg, seed)
            res = pc.two_stage_ci(draw, cfg)
            thr = pc.pretest_threshold(cfg.alpha_tilde)
            assert res.hausman >= 0
            if res.hausman <= thr:
                assert res.branch is pc.Branch.RANDOM_EFFECTS
                assert res.interval.center == pytest.approx(res.beta_gls, rel=1e-12)
            else:
                assert res.branch is pc.Branch.FIXED_EFFECTS
                assert res.interval.center == res.beta_w
            # the recorded pair is internally consistent
            assert res.variance_pair.psi_hat == math.sqrt(
                res.variance_pair.sigma_mu_sq_hat / res.variance_pair.sigma_eps_sq_hat
            )

    def test_strong_nonexogeneity_rejects(self):
        # tau = 0.9, N = 100, known variances: the Hausman noncentrality grows
        # like sqrt(N) tau psi, so the fixed-effects branch is taken nearly always
        cfg = make_config(tau=0.9, psi=1.0, estimator=pc.VarianceEstimator.KNOWN)
        batch = pc.collect_runs(cfg, 10_000, 5)
        assert (~batch.accept_known).mean() > 0.99

    def test_known_pair_used_verbatim(self):
        cfg = make_config(
            estimator=pc.VarianceEstimator.KNOWN, psi=0.75, sigma_eps=2.0
        )
        res = pc.two_stage_ci(self._draw(cfg, 3), cfg)
        assert res.variance_pair.sigma_eps_sq_hat == 4.0
        assert res.variance_pair.sigma_mu_sq_hat == pytest.approx((0.75 * 2.0) ** 2)
