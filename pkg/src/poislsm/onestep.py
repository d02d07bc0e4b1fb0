"""Generalized semiparametric one-step estimator for the latent positions.

The efficient information is singular: the likelihood is flat along common
shifts of all rows (absorbed by the baselines) and along rotations of Z, a
null space of dimension k(k+1)/2. The update is therefore restricted to the
orthogonal complement of those directions (the horizontal space), which both
regularizes the solve and preserves the centering constraint of the
initializer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, NumericOverflowError, NumericsWarning, RankError
from .model import EfficientSystem, efficient_system
from .types import CENTERING_TOL, check_param_shapes

BASIS_METHODS = ("analytic_complement", "eigen_threshold")


@dataclass
class OneStepConfig:
    mode: str = "fisher"
    basis_method: str = "analytic_complement"
    eigen_tol: float = 1e-8
    steps: int = 1

    def __post_init__(self):
        if self.mode not in ("fisher", "observed"):
            raise ValueError(f"mode must be 'fisher' or 'observed', got {self.mode!r}")
        if self.basis_method not in BASIS_METHODS:
            raise ValueError(f"basis_method must be one of {BASIS_METHODS}")
        if not 0.0 < self.eigen_tol < 1e-3:
            raise ValueError("eigen_tol must lie in (0, 1e-3)")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def null_space_basis(Z) -> np.ndarray:
    """Orthonormal basis of the flat directions of the efficient information.

    Columns span ``{vec(1_n a') : a in R^k}`` (common row shifts) together
    with ``{vec(Z S) : S skew}`` (infinitesimal rotations); with centered,
    full-rank Z the dimension is exactly ``k + k(k-1)/2 = k(k+1)/2``.
    Vectorization is row-major, matching the score layout.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise RankError(f"Z must be 2-d, got shape {Z.shape}")
    n, k = Z.shape
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv.size < k or sv[-1] <= 1e-12 * max(sv[0], 1.0):
        raise RankError("Z is rank-deficient; null directions are not well defined")
    cols = []
    ones = np.ones(n)
    for j in range(k):
        m = np.zeros((n, k))
        m[:, j] = ones
        cols.append(m.ravel())
    for p in range(k):
        for q in range(p + 1, k):
            s = np.zeros((k, k))
            s[p, q], s[q, p] = 1.0, -1.0
            cols.append((Z @ s).ravel())
    basis = np.column_stack(cols)
    q, r = np.linalg.qr(basis)
    diag = np.abs(np.diag(r))
    if np.any(diag <= 1e-12 * diag.max()):
        raise RankError("null directions are linearly dependent; Z is degenerate")
    return q


def effective_basis(Z, i_eff=None, cfg: OneStepConfig | None = None) -> np.ndarray:
    """Orthonormal basis of the horizontal space (column space of the
    efficient information), shape (nk, nk - k(k+1)/2).

    ``analytic_complement`` orthogonalizes against the known null directions
    and needs only Z; ``eigen_threshold`` keeps eigenvectors of ``i_eff``
    above ``eigen_tol * lambda_max`` and demands an unambiguous spectral gap.
    """
    cfg = cfg or OneStepConfig()
    if cfg.basis_method == "analytic_complement":
        null = null_space_basis(Z)
        full, _ = np.linalg.qr(null, mode="complete")
        return full[:, null.shape[1] :]
    if i_eff is None:
        raise ValueError("basis_method='eigen_threshold' requires i_eff")
    w, v = np.linalg.eigh(np.asarray(i_eff, dtype=np.float64))
    lam_max = float(w[-1])
    if lam_max <= 0:
        raise RankError("efficient information has no positive eigenvalues")
    thr = cfg.eigen_tol * lam_max
    keep = w > thr
    kept_min = float(w[keep].min())
    dropped_max = float(w[~keep].max()) if np.any(~keep) else -np.inf
    if kept_min - max(dropped_max, 0.0) < 10.0 * cfg.eigen_tol * lam_max:
        raise RankError(
            "ambiguous numerical rank of the efficient information: eigenvalues "
            f"straddle the threshold {thr:.3e}; spectrum = {np.sort(w)[::-1]!r}"
        )
    return v[:, keep]


def one_step(A, Z_init, alpha_init, cfg: OneStepConfig | None = None, full_output=False):
    """One Newton-type efficient-score update of the latent positions.

    fisher mode solves ``(U' I_eff U) c = U' S_eff`` and observed mode the
    same system with the observed variant (both positive definite near a good
    initializer; failure is surfaced, not regularized), then updates
    ``Z_v + U c``. The update is orthogonal to the centering directions, so a
    centered initializer yields a centered estimate. ``steps > 1`` repeats
    the update with re-evaluated score and information.
    """
    cfg = cfg or OneStepConfig()
    Z, alpha = check_param_shapes(Z_init, alpha_init)
    n, k = Z.shape
    offset = float(np.max(np.abs(Z.sum(axis=0))))
    if offset > CENTERING_TOL * max(1.0, float(np.linalg.norm(Z))):
        warnings.warn(
            "initial latent positions are not column-centered; the update "
            "preserves the offset and the centered-output guarantee is void",
            NumericsWarning,
            stacklevel=2,
        )
    details = {"mode": cfg.mode, "basis_method": cfg.basis_method, "steps": []}
    for _ in range(cfg.steps):
        system: EfficientSystem = efficient_system(A, Z, alpha, mode=cfg.mode)
        need_eig = cfg.basis_method == "eigen_threshold"
        if need_eig and cfg.mode == "observed":
            # the observed variant is only singular at a stationary point, so
            # rank detection must run on the Fisher version
            basis_sys = efficient_system(A, Z, alpha, mode="fisher")
            u = effective_basis(Z, basis_sys.i_eff, cfg)
        else:
            u = effective_basis(Z, system.i_eff if need_eig else None, cfg)
        reduced = u.T @ system.i_eff @ u
        reduced = 0.5 * (reduced + reduced.T)
        try:
            factor = cho_factor(reduced, lower=True)
        except np.linalg.LinAlgError:
            eig_min = float(np.linalg.eigvalsh(reduced)[0])
            raise ConditioningError(
                "reduced efficient information is not positive definite "
                f"(smallest eigenvalue {eig_min:.3e}); the initial estimate is "
                "likely too far from the truth",
                eig_min=eig_min,
            ) from None
        update = u @ cho_solve(factor, u.T @ system.s_eff)
        if not np.all(np.isfinite(update)):
            raise NumericOverflowError("non-finite one-step update")
        Z = Z + update.reshape(n, k)
        details["steps"].append(
            {
                "update_norm": float(np.linalg.norm(update)),
                "reduced_spectrum": np.linalg.eigvalsh(reduced).tolist(),
            }
        )
    if full_output:
        return Z, details
    return Z
