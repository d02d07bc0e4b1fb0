"""Ground-truth parameter generation and Poisson count sampling.

Latent positions are drawn uniformly on the unit ball, centered, and scaled
so that ``||Z Z'||_F = n``; baselines come in a uniform case and a two-block
trend case. All draws use counter-style streams derived from
``(seed, tag, ...)`` so that per-slice sampling is order-independent and a
(config, seed) pair fully determines every output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericOverflowError, RankError, ShapeError
from .model import THETA_CLAMP, natural_params
from .types import CountTensor, ModelBounds

ALPHA_CASES = ("uniform", "two_block")

_TAG_LATENT = 101
_TAG_ALPHA = 102
_TAG_COUNTS = 103

#: Default baseline bound; covers both alpha cases with slack.
DEFAULT_M_ALPHA = 4.0

#: Row-norm bound multiplier applied to the realized latent positions.
M_Z1_SLACK = 1.25


def _stream(seed, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags)))


@dataclass(frozen=True)
class SimConfig:
    n: int
    T: int
    k: int
    alpha_case: str = "uniform"
    seed: int = 0
    bounds: Optional[ModelBounds] = None

    def __post_init__(self):
        if self.n < 2 or self.T < 1 or not (1 <= self.k < self.n):
            raise ShapeError(
                f"need n >= 2, T >= 1, 1 <= k < n; got n={self.n}, T={self.T}, k={self.k}"
            )
        if self.alpha_case not in ALPHA_CASES:
            raise ValueError(f"alpha_case must be one of {ALPHA_CASES}, got {self.alpha_case!r}")

    def to_dict(self):
        d = {
            "n": self.n,
            "T": self.T,
            "k": self.k,
            "alpha_case": self.alpha_case,
            "seed": self.seed,
        }
        if self.bounds is not None:
            d["bounds"] = self.bounds.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        bounds = ModelBounds.from_dict(d["bounds"]) if d.get("bounds") else None
        return cls(
            n=int(d["n"]),
            T=int(d["T"]),
            k=int(d["k"]),
            alpha_case=d.get("alpha_case", "uniform"),
            seed=int(d.get("seed", 0)),
            bounds=bounds,
        )


def _uniform_ball(rng, n, k):
    """n i.i.d. points uniform on the unit k-ball: normalized Gaussian
    direction times a U^(1/k) radius."""
    g = rng.standard_normal((n, k))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / k)
    return g * r[:, None]


def gen_latent(n, k, seed) -> np.ndarray:
    """Ground-truth latent positions: centered ball samples scaled so that
    the interaction matrix satisfies ``||Z Z'||_F = n``.

    Resamples (fresh stream) when the centered sample is rank-deficient;
    raises RankError after 10 attempts.
    """
    if not 1 <= k < n:
        raise ShapeError(f"need 1 <= k < n, got k={k}, n={n}")
    for attempt in range(10):
        rng = _stream(seed, _TAG_LATENT, attempt)
        w = _uniform_ball(rng, n, k)
        w -= w.mean(axis=0)
        s = np.linalg.svd(w, compute_uv=False)
        if s[-1] > 1e-12 * max(s[0], 1.0):
            scale = np.sqrt(n) / np.sqrt(np.sqrt(np.sum(s**4)))
            return w * scale
    raise RankError(f"centered ball sample is rank-deficient after 10 attempts (n={n}, k={k})")


def gen_alpha(n, T, alpha_case, seed) -> np.ndarray:
    """Baseline heterogeneity parameters, shape (n, T).

    ``uniform``: entries i.i.d. U(-2, 0). ``two_block``: the first half of
    the nodes follows an increasing trend ``t/T + U(-3, -1)``, the second
    half a decreasing trend ``-2t/T + U(-2, 0)``.
    """
    if alpha_case not in ALPHA_CASES:
        raise ValueError(f"alpha_case must be one of {ALPHA_CASES}, got {alpha_case!r}")
    rng = _stream(seed, _TAG_ALPHA)
    if alpha_case == "uniform":
        return rng.uniform(-2.0, 0.0, size=(n, T))
    half = n // 2
    trend = np.arange(1, T + 1, dtype=np.float64) / T
    alpha = np.empty((n, T))
    alpha[:half] = trend[None, :] + rng.uniform(-3.0, -1.0, size=(half, T))
    alpha[half:] = -2.0 * trend[None, :] + rng.uniform(-2.0, 0.0, size=(n - half, T))
    return alpha


def sample_counts(Z, alpha, seed) -> CountTensor:
    """Sample the symmetric Poisson count tensor at (Z, alpha).

    Each unordered pair (i <= j, diagonal included) is drawn once per time
    point from its own slice stream and mirrored, so symmetry is exact.
    """
    theta = natural_params(Z, alpha)
    if theta.max() > THETA_CLAMP:
        idx = tuple(int(v) for v in np.argwhere(theta > THETA_CLAMP)[0])
        raise NumericOverflowError(
            f"intensity overflow at (t, i, j) = {idx}: theta = {theta[idx]:.3g}", index=idx
        )
    T, n, _ = theta.shape
    iu = np.triu_indices(n)
    counts = np.zeros((T, n, n), dtype=np.int64)
    for t in range(T):
        rng = _stream(seed, _TAG_COUNTS, t)
        vals = rng.poisson(np.exp(theta[t][iu]))
        counts[t][iu] = vals
        counts[t].T[iu] = vals
    return CountTensor(counts)


def default_bounds(Z, m_alpha=DEFAULT_M_ALPHA) -> ModelBounds:
    """Box constants for downstream projections: row-norm bound with slack
    over the realized positions, and a fixed baseline bound."""
    m_z1 = M_Z1_SLACK * float(np.max(np.sum(np.asarray(Z) ** 2, axis=1)))
    return ModelBounds(m_z1=m_z1, m_alpha=float(m_alpha))


@dataclass
class SimData:
    config: SimConfig
    Z_star: np.ndarray
    alpha_star: np.ndarray
    counts: CountTensor
    bounds: ModelBounds


def simulate_dataset(cfg: SimConfig) -> SimData:
    """Generate (Z*, alpha*, counts) plus the bounds used by estimators."""
    Z = gen_latent(cfg.n, cfg.k, cfg.seed)
    alpha = gen_alpha(cfg.n, cfg.T, cfg.alpha_case, cfg.seed)
    counts = sample_counts(Z, alpha, cfg.seed)
    bounds = cfg.bounds if cfg.bounds is not None else default_bounds(Z)
    return SimData(config=cfg, Z_star=Z, alpha_star=alpha, counts=counts, bounds=bounds)
