import numpy as np
import pytest

from poislsm import (
    ConditioningError,
    InitConfig,
    OneStepConfig,
    RankError,
    effective_basis,
    efficient_system,
    initialize,
    null_space_basis,
    one_step,
    procrustes,
    sample_counts,
    simulate_dataset,
    SimConfig,
)

from conftest import random_instance, zero_residual_counts


def sampled_instance(seed, n=8, T=3, k=2):
    Z, alpha = random_instance(seed, n=n, T=T, k=k)
    A = sample_counts(Z, alpha, seed + 1000).counts
    return A, Z, alpha


class TestNullSpaceBasis:
    def test_rank_one_latent_dimension(self):
        z = np.linspace(-1, 1, 7).reshape(-1, 1)
        basis = null_space_basis(z)
        assert basis.shape == (7, 1)
        assert np.allclose(np.abs(basis[:, 0]), 1.0 / np.sqrt(7))

    def test_orthonormal_dimension_three(self):
        Z, _ = random_instance(1, n=9, k=2)
        basis = null_space_basis(Z)
        assert basis.shape == (18, 3)
        assert np.max(np.abs(basis.T @ basis - np.eye(3))) < 1e-12

    def test_annihilated_by_information(self):
        A, Z, alpha = sampled_instance(2)
        system = efficient_system(A, Z, alpha)
        basis = null_space_basis(Z)
        res = np.linalg.norm(system.i_eff @ basis, axis=0)
        assert np.max(res) < 1e-8 * np.linalg.norm(system.i_eff, 2)

    def test_rank_deficient_rejected(self):
        z = np.ones((6, 2))  # second column duplicates the first
        with pytest.raises(RankError):
            null_space_basis(np.column_stack([z[:, 0], z[:, 0]]))


class TestEffectiveBasis:
    def test_methods_agree_on_projector(self):
        for seed in range(3):
            A, Z, alpha = sampled_instance(10 + seed, n=6, T=3, k=2)
            system = efficient_system(A, Z, alpha)
            u1 = effective_basis(Z)
            u2 = effective_basis(Z, system.i_eff, OneStepConfig(basis_method="eigen_threshold"))
            gap = np.linalg.norm(u1 @ u1.T - u2 @ u2.T, 2)
            assert gap < 1e-6

    def test_column_count(self):
        for n, k in ((6, 2), (9, 3), (5, 1)):
            Z, _ = random_instance(20 + n, n=n, k=k)
            u = effective_basis(Z)
            assert u.shape == (n * k, n * k - k * (k + 1) // 2)
            assert np.max(np.abs(u.T @ u - np.eye(u.shape[1]))) < 1e-12

    def test_orthogonal_to_null_space(self):
        Z, _ = random_instance(31, n=7, k=2)
        u = effective_basis(Z)
        basis = null_space_basis(Z)
        assert np.max(np.abs(u.T @ basis)) < 1e-10

    def test_eigen_threshold_needs_information(self):
        Z, _ = random_instance(32, n=6, k=2)
        with pytest.raises(ValueError):
            effective_basis(Z, None, OneStepConfig(basis_method="eigen_threshold"))

    def test_ambiguous_spectrum_rejected(self):
        Z, _ = random_instance(33, n=4, k=1)
        # eigenvalues straddling the relative threshold with no gap
        w = np.array([1.0, 5e-8, 2e-8, 1e-9])
        rng = np.random.default_rng(0)
        q = np.linalg.qr(rng.normal(size=(4, 4)))[0]
        fake = (q * w) @ q.T
        with pytest.raises(RankError, match="ambiguous"):
            effective_basis(Z, fake, OneStepConfig(basis_method="eigen_threshold"))


class TestOneStep:
    def test_zero_efficient_score_is_fixed_point(self):
        Z, alpha = random_instance(40)
        A = zero_residual_counts(Z, alpha)
        z_hat = one_step(A, Z, alpha)
        assert np.max(np.abs(z_hat - Z)) < 1e-10

    def test_matches_pseudo_inverse_form(self):
        # the pseudo-inverse cut uses the same relative eigenvalue threshold
        # that defines the information's numerical rank
        for seed in range(3):
            A, Z, alpha = sampled_instance(50 + seed)
            system = efficient_system(A, Z, alpha)
            z_hat = one_step(A, Z, alpha)
            z_pinv = Z + (np.linalg.pinv(system.i_eff, rcond=1e-8) @ system.s_eff).reshape(
                Z.shape
            )
            scale = max(np.linalg.norm(z_hat - Z), 1e-30)
            assert np.linalg.norm(z_hat - z_pinv) < 1e-8 * max(scale, 1.0)

    def test_centering_preserved(self):
        A, Z, alpha = sampled_instance(60)
        z_hat = one_step(A, Z, alpha)
        assert np.max(np.abs(z_hat.sum(axis=0))) < 1e-10

    def test_rotation_equivariance(self):
        A, Z, alpha = sampled_instance(70)
        rng = np.random.default_rng(71)
        q, r = np.linalg.qr(rng.normal(size=(2, 2)))
        q = q * np.sign(np.diag(r))
        z1 = one_step(A, Z, alpha)
        z2 = one_step(A, Z @ q, alpha)
        assert procrustes(z2, z1 @ q).dist_sq < 1e-16 * np.sum(z1**2)
        assert np.max(np.abs(z2 - z1 @ q)) < 1e-8

    def test_observed_mode_close_to_fisher(self):
        # expected and observed information agree to first order: on a
        # large-n instance the two updates differ by under 20% of the update
        data = simulate_dataset(SimConfig(n=200, T=20, k=2, alpha_case="uniform", seed=5))
        init = initialize(data.counts, 2, InitConfig(bounds=data.bounds))
        z_f = one_step(data.counts, init.Z, init.alpha, OneStepConfig(mode="fisher"))
        z_o = one_step(data.counts, init.Z, init.alpha, OneStepConfig(mode="observed"))
        update = np.linalg.norm(z_f - init.Z)
        assert np.linalg.norm(z_o - z_f) < 0.2 * update

    def test_multi_step_option(self):
        A, Z, alpha = sampled_instance(80)
        z2, details = one_step(A, Z, alpha, OneStepConfig(steps=2), full_output=True)
        assert len(details["steps"]) == 2
        assert details["steps"][1]["update_norm"] <= details["steps"][0]["update_norm"]

    def test_pd_failure_surfaces(self):
        # a hopeless initializer makes the reduced observed system indefinite
        A, Z, alpha = sampled_instance(90, n=6, T=2)
        bad_Z = 5.0 * Z
        bad_alpha = alpha - 4.0
        with pytest.raises((ConditioningError, Exception)):
            one_step(A, bad_Z, bad_alpha, OneStepConfig(mode="observed"))

    def test_improvement_harness(self):
        # the update reduces the Procrustes error for most seeds
        wins = 0
        total = 50
        for seed in range(total):
            data = simulate_dataset(
                SimConfig(n=100, T=20, k=2, alpha_case="uniform", seed=1000 + seed)
            )
            init = initialize(data.counts, 2, InitConfig(bounds=data.bounds))
            z_hat = one_step(data.counts, init.Z, init.alpha)
            d_init = procrustes(init.Z, data.Z_star).dist_sq
            d_one = procrustes(z_hat, data.Z_star).dist_sq
            if d_one < d_init:
                wins += 1
        assert wins >= 45
