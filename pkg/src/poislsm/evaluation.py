"""Alignment and error metrics: orthogonal Procrustes distance, interaction-
matrix error, and the scaling-law regression used by the experiment harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class AlignmentResult:
    """Optimal orthogonal alignment of an estimate to a reference.

    ``Q`` minimizes ``||Z_hat - Z_star Q||_F`` over the full orthogonal group
    (reflections included); ``per_row[i] = ||zhat_i - Q' zstar_i||`` so that
    ``dist_sq == sum(per_row**2)``.
    """

    Q: np.ndarray
    dist_sq: float
    per_row: np.ndarray


def procrustes(Z_hat, Z_star) -> AlignmentResult:
    """Rotation-invariant estimation error of latent positions.

    With ``U S V' = svd(Z_hat' Z_star)`` the minimizer is ``Q = V U'`` and
    ``dist_sq = ||Z_hat - Z_star Q||_F^2``.
    """
    Z_hat = np.asarray(Z_hat, dtype=np.float64)
    Z_star = np.asarray(Z_star, dtype=np.float64)
    if Z_hat.shape != Z_star.shape or Z_hat.ndim != 2 or Z_hat.shape[1] < 1:
        raise ShapeError(f"shape mismatch: {Z_hat.shape} vs {Z_star.shape}")
    u, _, vt = np.linalg.svd(Z_hat.T @ Z_star)
    q = vt.T @ u.T
    diff = Z_hat - Z_star @ q
    per_row = np.linalg.norm(diff, axis=1)
    return AlignmentResult(Q=q, dist_sq=float(np.sum(diff**2)), per_row=per_row)


def g_error(G_hat, G_star) -> float:
    """Scaled interaction-matrix error ``||G_hat - G_star||_F^2 / n``."""
    G_hat = np.asarray(G_hat, dtype=np.float64)
    G_star = np.asarray(G_star, dtype=np.float64)
    if G_hat.shape != G_star.shape or G_hat.ndim != 2:
        raise ShapeError(f"shape mismatch: {G_hat.shape} vs {G_star.shape}")
    return float(np.sum((G_hat - G_star) ** 2) / G_hat.shape[0])


def slope_fit(pairs):
    """OLS fit of log(error) on log(T).

    ``pairs`` is a sequence of (T, value) with positive entries; returns
    (slope, intercept, r_squared).
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 points, got {len(pairs)}")
    t = np.asarray([p[0] for p in pairs], dtype=np.float64)
    v = np.asarray([p[1] for p in pairs], dtype=np.float64)
    if np.any(t <= 0) or np.any(v <= 0):
        raise ValueError("slope_fit requires positive T and positive values")
    x, y = np.log(t), np.log(v)
    xc = x - x.mean()
    denom = float(np.sum(xc**2))
    if denom == 0.0:
        raise ValueError("all T values are identical")
    slope = float(np.sum(xc * (y - y.mean())) / denom)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return slope, intercept, r2


def elementwise_error(Z_hat, alpha_hat, Z_star, alpha_star) -> float:
    """Max over (i, t) of ``|alpha_hat_it - alpha_star_it| + per-row z error``,
    the quantity controlled by the initializer guarantee."""
    align = procrustes(Z_hat, Z_star)
    d_alpha = np.abs(np.asarray(alpha_hat) - np.asarray(alpha_star))
    return float(np.max(d_alpha + align.per_row[:, None]))
