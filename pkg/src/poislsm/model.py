"""Likelihood, score, and information computations for the Poisson
latent-space model with node-by-time baselines.

The natural parameter of edge (i, j) at time t is
``theta_tij = alpha_it + alpha_jt + <z_i, z_j>`` and counts are independent
Poisson over t and unordered pairs i <= j (self-pairs included, so the
diagonal carries a factor 2 in every alpha derivative and ``2 z_i`` in the
z derivative).

Vectorization conventions, fixed package-wide:

* ``Z_v`` stacks rows ``z_1, ..., z_n`` (length ``n*k``),
* ``alpha_v`` stacks time columns ``alpha_1, ..., alpha_T`` (length ``n*T``).

All functions are pure; per-time-slice work is independent over t and totals
are combined by a fixed-order compensated reduction, so results are
reproducible bit-for-bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, NumericOverflowError, NumericsWarning, ShapeError
from .types import check_param_shapes

#: Natural parameters above this value are clamped before exponentiation.
#: On bounded parameter sets theta stays negative, so the clamp is a guard
#: against runaway iterates, not part of the model.
THETA_CLAMP = 40.0

#: Relative ridge added to each per-time nuisance information block.
ALPHA_RIDGE_SCALE = 1e-10

#: Warn when the ridge perturbs a block solve by more than this (relative).
ALPHA_RIDGE_REPORT = 1e-6

#: Running count of clamped natural-parameter entries (diagnostic only).
clamp_count = 0


def natural_params(Z, alpha) -> np.ndarray:
    """Return the (T, n, n) array of natural parameters.

    ``theta[t] = alpha_t 1' + 1 alpha_t' + Z Z'``; each slice is symmetric
    and the diagonal equals ``2 alpha_it + ||z_i||^2``.
    """
    Z, alpha = check_param_shapes(Z, alpha)
    gram = Z @ Z.T
    at = alpha.T  # (T, n)
    return at[:, :, None] + at[:, None, :] + gram[None, :, :]


def _guarded_intensities(theta):
    """exp(theta) with the +THETA_CLAMP guard; raises on non-finite input."""
    global clamp_count
    if not np.all(np.isfinite(theta)):
        idx = tuple(int(v) for v in np.argwhere(~np.isfinite(theta))[0])
        raise NumericOverflowError(
            f"non-finite natural parameter at (t, i, j) = {idx}", index=idx
        )
    over = theta > THETA_CLAMP
    n_over = int(np.count_nonzero(over))
    if n_over:
        clamp_count += n_over
        warnings.warn(
            f"clamped {n_over} natural-parameter entries at +{THETA_CLAMP:g}",
            NumericsWarning,
            stacklevel=3,
        )
        theta = np.where(over, THETA_CLAMP, theta)
    return np.exp(theta), theta


def pair_log_likelihood(A, theta) -> float:
    """Log-likelihood sum over t and pairs i <= j for given natural params.

    Each term is ``A_tij * theta_tij - exp(theta_tij)``; the Poisson
    log-factorial constant is dropped.
    """
    lam, theta = _guarded_intensities(np.asarray(theta, dtype=np.float64))
    a = np.asarray(A, dtype=np.float64)
    if a.shape != theta.shape:
        raise ShapeError(f"counts shape {a.shape} != theta shape {theta.shape}")
    terms = a * theta - lam
    # sum over i <= j == half the full sum plus half the diagonal
    full = terms.sum(axis=(1, 2))
    diag = terms.diagonal(axis1=1, axis2=2).sum(axis=1)
    return math.fsum(0.5 * (full + diag))


def log_likelihood(A, Z, alpha) -> float:
    """Poisson log-likelihood of the count tensor at (Z, alpha)."""
    Z, alpha, a = check_param_shapes(Z, alpha, A)
    return pair_log_likelihood(a, natural_params(Z, alpha))


def _residual_tilde(A, lam):
    """Residuals A - lam with doubled diagonal, per slice (T, n, n)."""
    r = np.asarray(A, dtype=np.float64) - lam
    rt = r.copy()
    idx = np.arange(r.shape[1])
    rt[:, idx, idx] *= 2.0
    return rt


def score(A, Z, alpha):
    """Analytic gradient of ``log_likelihood`` in (Z_v, alpha_v).

    Returns ``(score_z, score_alpha)`` of lengths ``n*k`` and ``n*T``. In
    residual form ``R_t = A_t - exp(theta_t)``:

    * the z-gradient is ``sum_t (R_t + Diag(diag R_t)) Z`` flattened row-wise,
    * the alpha-gradient at time t is ``(R_t + Diag(diag R_t)) 1_n``.
    """
    Z, alpha, a = check_param_shapes(Z, alpha, A)
    lam, _ = _guarded_intensities(natural_params(Z, alpha))
    rt = _residual_tilde(a, lam)
    score_z = (rt.sum(axis=0) @ Z).ravel()
    score_alpha = rt.sum(axis=2).ravel()
    return score_z, score_alpha


def fisher_blocks(Z, alpha):
    """Expected-information blocks under the Poisson model.

    Counts enter only through their means, so every block is available in
    closed form from the intensities ``lam_tij = exp(theta_tij)``:

    * ``I_zz`` (nk, nk): off-diagonal node block (a, b) is
      ``(sum_t lam_tab) z_b z_a'``; diagonal node block (a, a) is
      ``sum_j w_aj z_j z_j'`` with ``w_aj = sum_t lam_taj`` and the self-pair
      weighted by 4.
    * ``I_zalpha`` (nk, nT): time-t column block couples z_a with alpha_bt
      through the (a, b) edge only, again with diagonal factor 4.
    * ``I_alphaalpha`` (T, n, n): exactly block-diagonal over t because
      alpha_t enters only the time-t likelihood; block t has off-diagonal
      entries ``lam_tab`` and diagonal ``sum_{j != a} lam_taj + 4 lam_taa``.
    """
    Z, alpha = check_param_shapes(Z, alpha)
    n, k = Z.shape
    lam, _ = _guarded_intensities(natural_params(Z, alpha))
    idx = np.arange(n)

    lam_tot = lam.sum(axis=0)
    w = lam_tot.copy()
    w[idx, idx] *= 4.0
    i_zz = np.einsum("ab,bp,aq->apbq", lam_tot, Z, Z)
    i_zz[idx, :, idx, :] = np.einsum("aj,jp,jq->apq", w, Z, Z)
    i_zz = i_zz.reshape(n * k, n * k)
    i_zz = 0.5 * (i_zz + i_zz.T)

    blocks_za = []
    i_aa = np.empty_like(lam)
    for t in range(lam.shape[0]):
        lt = lam[t]
        l4 = lt.copy()
        l4[idx, idx] *= 4.0
        bt = np.einsum("ab,bp->apb", l4, Z)
        bt[idx, :, idx] += lt @ Z - lt[idx, idx][:, None] * Z
        blocks_za.append(bt.reshape(n * k, n))
        at = lt.copy()
        at[idx, idx] = lt.sum(axis=1) + 3.0 * lt[idx, idx]
        i_aa[t] = at
    i_zalpha = np.concatenate(blocks_za, axis=1)
    return i_zz, i_zalpha, i_aa


@dataclass
class EfficientSystem:
    """Efficient score and information for the latent positions.

    ``i_eff`` is the efficient Fisher information in ``mode="fisher"`` and
    the observed variant (negated efficient Hessian) in ``mode="observed"``;
    ``s_eff`` is identical in both modes.
    """

    s_eff: np.ndarray
    i_eff: np.ndarray
    mode: str


def _solve_alpha_block(block, rhs, t):
    """Cholesky solve of one n x n nuisance block with ridge rescue.

    The blocks are strictly diagonally dominant with positive diagonal, hence
    positive definite for finite theta, but can be ill-conditioned when
    intensities are extreme.
    """
    n = block.shape[0]
    ridge = ALPHA_RIDGE_SCALE * (np.trace(block) / n)
    try:
        factor = cho_factor(block + ridge * np.eye(n), lower=True)
    except np.linalg.LinAlgError:
        eig_min = float(np.linalg.eigvalsh(block)[0])
        raise ConditioningError(
            f"nuisance information block t={t} is singular beyond ridge rescue "
            f"(smallest eigenvalue {eig_min:.3e})",
            block=t,
            eig_min=eig_min,
        ) from None
    sol = cho_solve(factor, rhs)
    # (block + ridge I) x = b  =>  x_unridged - x = ridge * block^{-1} x;
    # estimate the shift with one extra solve against the same factor.
    shift = ridge * cho_solve(factor, sol)
    denom = max(float(np.linalg.norm(sol)), np.finfo(float).tiny)
    if np.linalg.norm(shift) / denom > ALPHA_RIDGE_REPORT:
        warnings.warn(
            f"ridge perturbs nuisance solve at t={t} by more than "
            f"{ALPHA_RIDGE_REPORT:g} (relative)",
            NumericsWarning,
            stacklevel=3,
        )
    return sol


def efficient_system(A, Z, alpha, mode="fisher") -> EfficientSystem:
    """Efficient score and (efficient or observed-efficient) information.

    Profiles out the nuisance baselines via T independent n x n solves:
    ``s_eff = score_z - I_za I_aa^{-1} score_a`` and
    ``i_eff = I_zz - I_za I_aa^{-1} I_az``. With ``mode="observed"``, returns
    the observed variant ``i_eff - (sum_t Rtilde_t) (x) I_k`` built from
    second derivatives, whose expectation is the Fisher version.
    """
    if mode not in ("fisher", "observed"):
        raise ValueError(f"mode must be 'fisher' or 'observed', got {mode!r}")
    Z, alpha, a = check_param_shapes(Z, alpha, A)
    n, k = Z.shape
    T = alpha.shape[1]
    score_z, score_alpha = score(a, Z, alpha)
    i_zz, i_zalpha, i_aa = fisher_blocks(Z, alpha)

    s_eff = score_z.copy()
    correction = np.zeros_like(i_zz)
    for t in range(T):
        bt = i_zalpha[:, t * n : (t + 1) * n]
        rhs = np.concatenate([score_alpha[t * n : (t + 1) * n, None], bt.T], axis=1)
        sol = _solve_alpha_block(i_aa[t], rhs, t)
        s_eff -= bt @ sol[:, 0]
        correction += bt @ sol[:, 1:]
    i_eff = i_zz - correction
    i_eff = 0.5 * (i_eff + i_eff.T)

    if mode == "observed":
        lam, _ = _guarded_intensities(natural_params(Z, alpha))
        rt_total = _residual_tilde(a, lam).sum(axis=0)
        i_eff = i_eff - np.kron(rt_total, np.eye(k))
        i_eff = 0.5 * (i_eff + i_eff.T)
    return EfficientSystem(s_eff=s_eff, i_eff=i_eff, mode=mode)
