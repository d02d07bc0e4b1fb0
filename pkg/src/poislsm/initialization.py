"""Two-stage initial estimator.

Stage 1 builds a spectral warm start: denoise each count slice by universal
singular value thresholding, take logs to estimate the natural parameters,
read the baselines off with the closed-form centering inverse, average out
the baselines to estimate the interaction matrix, and factor its top-k
eigenspace. Stage 2 refines the pair by projected gradient ascent on the
log-likelihood over the box/centering constraint set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, NumericsWarning, RankError, ShapeError
from .model import log_likelihood, score
from .types import ModelBounds, as_count_array

#: Consecutive backtracked iterations before the base step is halved.
_BACKTRACK_PATIENCE = 5

#: Smallest usable base step.
_MIN_STEP = 1e-12


@dataclass
class InitConfig:
    """Tuning constants for both initialization stages.

    ``clip_floor`` and the PGD step sizes default to data-driven values:
    the floor is the smallest admissible intensity ``exp(-(m_z1 + 2 m_alpha))``
    and the steps are ``1 / (2 max_t ||E_t||_op)`` of the denoised slices.
    """

    bounds: ModelBounds
    usvt_threshold_mult: float = 2.1
    clip_floor: Optional[float] = None
    pgd_step_z: Optional[float] = None
    pgd_step_alpha: Optional[float] = None
    pgd_max_iters: int = 500
    pgd_tol: float = 1e-7

    def __post_init__(self):
        if self.usvt_threshold_mult <= 0:
            raise ValueError("usvt_threshold_mult must be positive")
        if self.clip_floor is not None and self.clip_floor <= 0:
            raise ValueError("clip_floor must be positive")
        for name in ("pgd_step_z", "pgd_step_alpha"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pgd_max_iters < 1:
            raise ValueError("pgd_max_iters must be >= 1")
        if not 0.0 < self.pgd_tol < 1.0:
            raise ValueError("pgd_tol must lie in (0, 1)")

    def resolved_clip_floor(self) -> float:
        if self.clip_floor is not None:
            return self.clip_floor
        return math.exp(-(self.bounds.m_z1 + 2.0 * self.bounds.m_alpha))


def usvt_denoise(A_t, cfg: InitConfig) -> np.ndarray:
    """Spectral denoising of one symmetric count slice.

    Keeps spectral components with singular value above
    ``mult * sqrt(n * mean(A_t))`` (the Poisson noise scale, since entry
    variance equals the mean), then clips entries into
    ``[clip_floor, max(A_t) + 1]`` so the subsequent log is finite.
    """
    a = np.asarray(A_t, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"slice must be square, got shape {a.shape}")
    floor = cfg.resolved_clip_floor()
    n = a.shape[0]
    mean = float(a.mean())
    if mean == 0.0:
        warnings.warn("all-zero count slice; returning constant floor matrix", NumericsWarning)
        return np.full_like(a, floor)
    a = 0.5 * (a + a.T)
    tau = cfg.usvt_threshold_mult * math.sqrt(n * mean)
    # for a symmetric matrix the singular values are |eigenvalues| and the
    # thresholded SVD reconstruction is the corresponding eigen-truncation
    w, v = np.linalg.eigh(a)
    keep = np.abs(w) > tau
    est = (v[:, keep] * w[keep]) @ v[:, keep].T
    return np.clip(est, floor, a.max() + 1.0)


def init_alpha(theta_t) -> np.ndarray:
    """Closed-form baseline read-off from one natural-parameter slice.

    Returns ``H_n^{-1} theta_t 1_n`` with
    ``H_n^{-1} = (I - 11'/(2n)) / n``; exact whenever the slice comes from
    centered latent positions.
    """
    th = np.asarray(theta_t, dtype=np.float64)
    if th.ndim != 2 or th.shape[0] != th.shape[1]:
        raise ShapeError(f"slice must be square, got shape {th.shape}")
    n = th.shape[0]
    row = th.sum(axis=1)
    return (row - row.sum() / (2.0 * n)) / n


def stage1_from_intensities(E, k) -> tuple[np.ndarray, np.ndarray]:
    """Stage-1 algebra applied to already-denoised intensity slices.

    Split out so that the noiseless exact-recovery path can be exercised
    without going through the thresholding step.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 3 or E.shape[1] != E.shape[2]:
        raise ShapeError(f"intensity stack must be (T, n, n), got {E.shape}")
    if np.any(E <= 0):
        raise ValueError("intensities must be strictly positive before the log")
    theta = np.log(E)
    alpha0 = np.stack([init_alpha(th) for th in theta], axis=1)  # (n, T)
    at = alpha0.T
    g = (theta - at[:, :, None] - at[:, None, :]).mean(axis=0)
    g = 0.5 * (g + g.T)
    w, v = np.linalg.eigh(g)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    floor = 1e-12 * max(float(np.abs(w).max()), 1.0)
    n_pos = int(np.count_nonzero(w > floor))
    if n_pos < k:
        raise RankError(
            f"only {n_pos} usable positive eigenvalues in the stage-1 interaction "
            f"estimate; choose a smaller k than {k}"
        )
    z0 = v[:, :k] * np.sqrt(np.maximum(w[:k], 0.0))
    z0 -= z0.mean(axis=0)
    return z0, alpha0


def init_stage1(A, k, cfg: InitConfig):
    """USVT warm start: returns the crude pair (Z0, alpha0)."""
    a = as_count_array(A)
    E = np.stack([usvt_denoise(a[t], cfg) for t in range(a.shape[0])], axis=0)
    return stage1_from_intensities(E, k)


def project_latent(Z, m_z1) -> np.ndarray:
    """Exact projection onto {column means zero} composed with radial
    projection of violating rows onto the row-norm ball, iterated to a joint
    fixed point so the output satisfies both constraints."""
    z = np.asarray(Z, dtype=np.float64).copy()
    for _ in range(100):
        z -= z.mean(axis=0)
        sq = np.sum(z**2, axis=1)
        viol = sq > m_z1
        if not viol.any():
            return z
        z[viol] *= np.sqrt(m_z1 / sq[viol])[:, None] * (1.0 - 1e-15)
    return z - z.mean(axis=0)


def project_baseline(alpha, m_alpha) -> np.ndarray:
    return np.clip(np.asarray(alpha, dtype=np.float64), -m_alpha, m_alpha)


def _default_steps(A, cfg: InitConfig):
    """1 / (2 max_t ||slice||_op); the slice operator norm bounds the local
    curvature scale of the likelihood."""
    a = as_count_array(A)
    op = max(float(np.linalg.norm(a[t], 2)) for t in range(a.shape[0]))
    op = max(op, 1.0)
    return 0.5 / op


def init_stage2_pgd(A, Z0, alpha0, cfg: InitConfig, step_scale=None):
    """Projected gradient ascent on the log-likelihood over the constraint
    set; returns (Z, alpha, trace).

    Only improving steps are accepted (per-iteration halving), so the trace
    is non-decreasing; five consecutive backtracked iterations halve the base
    steps, and steps below 1e-12 raise ConvergenceError with the trace.
    """
    a = as_count_array(A)
    m_z1, m_alpha = cfg.bounds.m_z1, cfg.bounds.m_alpha
    z = project_latent(Z0, m_z1)
    al = project_baseline(alpha0, m_alpha)
    n, k = z.shape
    T = al.shape[1]

    default = None
    if cfg.pgd_step_z is None or cfg.pgd_step_alpha is None:
        default = step_scale if step_scale is not None else _default_steps(a, cfg)
    eta_z = cfg.pgd_step_z if cfg.pgd_step_z is not None else default
    eta_a = cfg.pgd_step_alpha if cfg.pgd_step_alpha is not None else default

    cur = log_likelihood(a, z, al)
    trace = [cur]
    consecutive_backtracks = 0
    for _ in range(cfg.pgd_max_iters):
        gz, ga = score(a, z, al)
        gz = gz.reshape(n, k)
        ga = ga.reshape(T, n).T
        factor = 1.0
        stalled = False
        while True:
            z_new = project_latent(z + factor * eta_z * gz, m_z1)
            al_new = project_baseline(al + factor * eta_a * ga, m_alpha)
            new = log_likelihood(a, z_new, al_new)
            if new >= cur:
                break
            factor *= 0.5
            if factor * min(eta_z, eta_a) < _MIN_STEP:
                if new >= cur - 1e-9 * max(abs(cur), 1.0):
                    stalled = True  # round-off plateau, not a genuine decrease
                    break
                raise ConvergenceError(
                    "projected gradient ascent stalled: step below 1e-12", trace=trace
                )
        if stalled:
            break
        if factor < 1.0:
            consecutive_backtracks += 1
            if consecutive_backtracks >= _BACKTRACK_PATIENCE:
                eta_z *= 0.5
                eta_a *= 0.5
                consecutive_backtracks = 0
                if min(eta_z, eta_a) < _MIN_STEP:
                    raise ConvergenceError(
                        "projected gradient ascent stalled: base step below 1e-12",
                        trace=trace,
                    )
        else:
            consecutive_backtracks = 0
        improvement = new - cur
        z, al, cur = z_new, al_new, new
        trace.append(cur)
        if improvement < cfg.pgd_tol * max(abs(cur), 1.0):
            break
    return z, al, trace


def estimate_bounds(A, usvt_threshold_mult=2.1) -> ModelBounds:
    """Data-driven box constants for real data.

    Runs the stage-1 algebra under provisional bounds and sizes the boxes
    with 25% slack over the crude estimates: ``m_z1`` from the diagonal of
    the interaction estimate (the row-norm squares), ``m_alpha`` from the
    baseline magnitudes.
    """
    a = as_count_array(A)
    provisional = InitConfig(bounds=ModelBounds(4.0, 4.0), usvt_threshold_mult=usvt_threshold_mult)
    E = np.stack([usvt_denoise(a[t], provisional) for t in range(a.shape[0])], axis=0)
    theta = np.log(E)
    alpha0 = np.stack([init_alpha(th) for th in theta], axis=1)
    at = alpha0.T
    g = (theta - at[:, :, None] - at[:, None, :]).mean(axis=0)
    m_z1 = 1.25 * float(np.max(np.diag(g)))
    if m_z1 <= 0:
        m_z1 = 4.0
    m_alpha = max(1.25 * float(np.max(np.abs(alpha0))), 1.0)
    return ModelBounds(m_z1=m_z1, m_alpha=m_alpha)


@dataclass
class InitResult:
    Z: np.ndarray
    alpha: np.ndarray
    trace: list = field(repr=False)
    Z_stage1: np.ndarray = field(repr=False, default=None)
    alpha_stage1: np.ndarray = field(repr=False, default=None)


def initialize(A, k, cfg: InitConfig) -> InitResult:
    """Full two-stage initializer: USVT warm start then PGD refinement."""
    a = as_count_array(A)
    E = np.stack([usvt_denoise(a[t], cfg) for t in range(a.shape[0])], axis=0)
    z0, alpha0 = stage1_from_intensities(E, k)
    op = max(float(np.linalg.norm(E[t], 2)) for t in range(E.shape[0]))
    z, alpha, trace = init_stage2_pgd(a, z0, alpha0, cfg, step_scale=0.5 / max(op, 1.0))
    return InitResult(Z=z, alpha=alpha, trace=trace, Z_stage1=z0, alpha_stage1=alpha0)
