"""Data-generating process: tau conversions, covariance, panel generation."""

import math

import numpy as np
import pytest

import pretestcov as pc
from pretestcov.errors import InadmissibleParameterError

from conftest import AR1, CS, make_config


class TestTauConversion:
    def test_zero_maps_to_zero(self):
        assert pc.tau_to_tautilde(0.0, 0.7, 5, CS) == 0.0

    def test_cs_closed_form(self):
        # factor sqrt(T / (1 + (T-1) rho)) = sqrt(3 / 1.6)
        got = pc.tau_to_tautilde(0.2739, 0.3, 3, CS)
        assert got == pytest.approx(0.2739 / math.sqrt(3.0 / 1.6), rel=1e-15)
        assert got == pytest.approx(0.2000, abs=5e-5)

    def test_structures_coincide_at_rho_zero(self):
        for structure in (CS, AR1):
            assert pc.tau_to_tautilde(0.5, 0.0, 4, structure) == pytest.approx(0.25, abs=1e-15)

    def test_ar1_closed_form(self):
        rho, t = 0.4, 4
        factor = math.sqrt((t * (1 - rho) + 2 * rho) / (1 + rho))
        assert pc.tau_to_tautilde(0.3, rho, t, AR1) == pytest.approx(0.3 / factor, rel=1e-15)

    @pytest.mark.parametrize("structure", [CS, AR1])
    def test_round_trip(self, structure):
        rng = np.random.default_rng(1)
        for _ in range(300):
            t = int(rng.integers(2, 9))
            rho = float(rng.uniform(-0.95, 0.95))
            if structure is CS and 1 + (t - 1) * rho <= 0:
                continue
            tau = float(rng.uniform(-0.999, 0.999))
            tt = pc.tau_to_tautilde(tau, rho, t, structure)
            assert abs(pc.tautilde_to_tau(tt, rho, t, structure) - tau) < 1e-14

    def test_out_of_range_tau(self):
        with pytest.raises(InadmissibleParameterError, match="admissible"):
            pc.tau_to_tautilde(1.0, 0.3, 3, CS)

    def test_inadmissible_rho_cs(self):
        with pytest.raises(InadmissibleParameterError):
            pc.tau_to_tautilde(0.1, -0.9, 3, CS)


class TestBuildCovariance:
    def test_identity_case(self):
        cov = pc.build_covariance(0.0, 0.0, 1.0, 1.0, 2, CS)
        assert np.array_equal(cov, np.eye(3))

    def test_off_diagonal_block(self):
        for structure in (CS, AR1):
            cov = pc.build_covariance(0.3, 0.5, 2.0, 0.5, 2, structure)
            assert cov[0, 1] == pytest.approx(0.3 * 2.0 * 0.5, abs=1e-15)
            assert cov[0, 2] == cov[0, 1]

    def test_symmetry_and_cholesky(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            structure = CS if rng.random() < 0.5 else AR1
            t = int(rng.integers(2, 8))
            rho = float(rng.uniform(-0.9, 0.9))
            if structure is CS and 1 + (t - 1) * rho <= 0:
                continue
            tau = float(rng.uniform(-0.99, 0.99))
            tt = pc.tau_to_tautilde(tau, rho, t, structure)
            cov = pc.build_covariance(tt, rho, 1.3, 0.7, t, structure)
            assert np.array_equal(cov, cov.T)
            lower = pc.psd_cholesky(cov)
            assert np.allclose(lower @ lower.T, cov, atol=1e-12)

    def test_cs_negative_eigenvalue_rejected(self):
        # CS correlation eigenvalues are 1 + (T-1) rho and 1 - rho
        with pytest.raises(InadmissibleParameterError):
            pc.build_covariance(0.0, -0.9, 1.0, 1.0, 3, CS)

    def test_boundary_tau_is_semidefinite(self):
        # tau -> 1 makes the matrix singular but still PSD
        tt = pc.tau_to_tautilde(1.0 - 1e-13, 0.3, 3, CS)
        cov = pc.build_covariance(tt, 0.3, 1.0, 1.0, 3, CS)
        lower = pc.psd_cholesky(cov)
        assert np.all(np.isfinite(lower))


class TestPsdCholesky:
    def test_plain_spd(self):
        mat = np.array([[4.0, 2.0], [2.0, 3.0]])
        lower = pc.psd_cholesky(mat)
        assert np.allclose(lower @ lower.T, mat, atol=1e-14)

    def test_not_psd_raises(self):
        with pytest.raises(InadmissibleParameterError, match="positive semidefinite"):
            pc.psd_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_zero_pivot_column_skipped(self):
        mat = np.array([[0.0, 0.0], [0.0, 2.0]])
        lower = pc.psd_cholesky(mat)
        assert lower[0, 0] == 0.0
        assert lower[1, 1] == pytest.approx(math.sqrt(2.0))


class TestVarXbarCs:
    def test_iid_case(self):
        assert pc.var_xbar_cs(0.0, 1.0, 4) == pytest.approx(0.25, abs=1e-16)

    def test_formula(self):
        assert pc.var_xbar_cs(0.3, 1.0, 3) == pytest.approx(1.6 / 3.0, rel=1e-15)

    def test_perfect_correlation_limit(self):
        assert pc.var_xbar_cs(1.0 - 1e-12, 2.0, 2) == pytest.approx(4.0, rel=1e-11)

    def test_inadmissible(self):
        with pytest.raises(InadmissibleParameterError):
            pc.var_xbar_cs(-0.6, 1.0, 3)


class TestModelConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"n": 2},
            {"t": 1},
            {"rho": 1.0},
            {"tau": 1.0},
            {"psi": -0.1},
            {"sigma_eps": 0.0},
            {"sigma_x": -1.0},
            {"alpha": 0.0},
            {"alpha_tilde": 1.0},
            {"rho": -0.9},  # CS with T=3: 1 + 2 rho < 0
        ],
    )
    def test_invalid_configs(self, overrides):
        with pytest.raises(InadmissibleParameterError):
            make_config(**overrides)

    def test_sigma_mu_exact(self):
        cfg = make_config(psi=1.0 / 3.0, sigma_eps=3.0)
        assert cfg.sigma_mu == cfg.psi * cfg.sigma_eps
        assert cfg.psi == 1.0 / 3.0

    def test_lambda_round_trip(self):
        cfg = make_config().with_lambda(3.0)
        assert cfg.tau == 3.0 / math.sqrt(100)
        assert cfg.lam == pytest.approx(3.0, abs=1e-15)

    def test_lambda_out_of_range(self):
        with pytest.raises(InadmissibleParameterError, match="lambda"):
            make_config().with_lambda(10.0)
        with pytest.raises(InadmissibleParameterError, match="lambda"):
            make_config().with_lambda(-10.0)

    def test_psi_zero_boundary_allowed(self):
        cfg = make_config(psi=0.0)
        assert cfg.sigma_mu == 0.0


class TestGeneratePanel:
    def test_zero_noise_zero_panel(self):
        cfg = make_config()
        noise = pc.BaseNoise(np.zeros((100, 4)), np.zeros((100, 3)))
        draw = pc.generate_panel(cfg, noise)
        assert not draw.x.any() and not draw.y.any()
        assert not draw.mu.any() and not draw.eps.any()

    def test_zero_eps_gives_exact_identity(self):
        cfg = make_config(a=1.0, beta=2.0, tau=0.2)
        rng = np.random.default_rng(3)
        noise = pc.BaseNoise(rng.standard_normal((100, 4)), np.zeros((100, 3)))
        draw = pc.generate_panel(cfg, noise)
        assert np.array_equal(draw.y, 1.0 + 2.0 * draw.x + draw.mu[:, None])

    def test_reconstruction_identity_exact(self):
        cfg = make_config(a=0.7, beta=-1.3, tau=0.35, sigma_eps=2.0, sigma_x=0.5)
        noise = pc.base_noise(100, 3, 5, 0)
        draw = pc.generate_panel(cfg, noise)
        rebuilt = cfg.a + cfg.beta * draw.x + draw.mu[:, None] + draw.eps
        assert np.max(np.abs(draw.y - rebuilt)) == 0.0

    def test_determinism(self):
        cfg = make_config(tau=0.1)
        noise = pc.base_noise(100, 3, 11, 4)
        d1 = pc.generate_panel(cfg, noise)
        d2 = pc.generate_panel(cfg, noise)
        assert np.array_equal(d1.x, d2.x) and np.array_equal(d1.y, d2.y)

    def test_noise_shape_mismatch(self):
        cfg = make_config()
        with pytest.raises(ValueError, match="does not match"):
            pc.generate_panel(cfg, pc.base_noise(50, 3, 0, 0))

    def test_xbar_variance_matches_formula(self):
        # one panel with many individuals is a big i.i.d. sample of xbar_i
        n = 100_000
        cfg = make_config(n=n)
        draw = pc.generate_panel(cfg, pc.base_noise(n, 3, 17, 0))
        sample_var = draw.x.mean(axis=1).var(ddof=1)
        target = pc.var_xbar_cs(0.3, 1.0, 3)
        se = target * math.sqrt(2.0 / (n - 1))
        assert abs(sample_var - target) < 3 * se

    def test_tau_is_corr_mu_xbar(self):
        n = 200_000
        tau = 0.4
        cfg = make_config(n=n, tau=tau, psi=0.8)
        draw = pc.generate_panel(cfg, pc.base_noise(n, 3, 23, 0))
        corr = np.corrcoef(draw.mu, draw.x.mean(axis=1))[0, 1]
        se = (1 - tau**2) / math.sqrt(n)
        assert abs(corr - tau) < 4 * se

    def test_crn_continuity_in_tau(self):
        cfg = make_config(tau=0.3)
        noise = pc.base_noise(100, 3, 2, 0)
        d1 = pc.generate_panel(cfg, noise)
        d2 = pc.generate_panel(cfg.with_tau(0.3 + 1e-9), noise)
        assert np.max(np.abs(d1.x - d2.x)) < 1e-7
        assert np.max(np.abs(d1.y - d2.y)) < 1e-7


class TestBaseNoise:
    def test_base_noise_deterministic(self):
        a = pc.base_noise(10, 3, 42, 7)
        b = pc.base_noise(10, 3, 42, 7)
        assert np.array_equal(a.z_mu_x, b.z_mu_x) and np.array_equal(a.z_eps, b.z_eps)
        c = pc.base_noise(10, 3, 42, 8)
        assert not np.array_equal(a.z_mu_x, c.z_mu_x)

    def test_entries_finite_and_standard(self):
        z = pc.base_noise(2000, 4, 0, 0)
        pooled = np.concatenate([z.z_mu_x.ravel(), z.z_eps.ravel()])
        assert np.isfinite(pooled).all()
        assert abs(pooled.mean()) < 4 / math.sqrt(pooled.size)
        assert abs(pooled.std() - 1) < 0.02

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="inconsistent"):
            pc.BaseNoise(np.zeros((5, 4)), np.zeros((5, 4)))
        with pytest.raises(ValueError, match="finite"):
            pc.BaseNoise(np.full((5, 4), np.nan), np.zeros((5, 3)))
