"""Core data containers: count tensors and parameter bounds.

Latent positions are plain ``(n, k)`` arrays and baselines plain ``(n, T)``
arrays throughout the package; this module provides the validated wrapper for
observed count data and the box constants used by constrained procedures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

#: Maximum tolerated column-mean magnitude after a centering projection.
CENTERING_TOL = 1e-10


@dataclass(frozen=True)
class ModelBounds:
    """Box constants for the constraint set: ``||z_i||^2 <= m_z1``,
    ``|alpha_it| <= m_alpha``, and natural parameters ``<= -m_theta1``."""

    m_z1: float
    m_alpha: float
    m_theta1: float = 0.0

    def __post_init__(self):
        if not (self.m_z1 > 0 and self.m_alpha > 0):
            raise ValueError("m_z1 and m_alpha must be strictly positive")
        if self.m_theta1 < 0:
            raise ValueError("m_theta1 must be nonnegative")

    def to_dict(self):
        return {"m_z1": self.m_z1, "m_alpha": self.m_alpha, "m_theta1": self.m_theta1}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d[k]) for k in ("m_z1", "m_alpha", "m_theta1")})


@dataclass
class CountTensor:
    """T symmetric nonnegative integer interaction-count matrices.

    ``counts`` has shape ``(T, n, n)``; slice t holds the pairwise event
    counts at time point t.
    """

    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        self.validate()

    @property
    def n(self) -> int:
        return self.counts.shape[1]

    @property
    def T(self) -> int:
        return self.counts.shape[0]

    def validate(self):
        a = self.counts
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ShapeError(f"counts must have shape (T, n, n), got {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 2:
            raise ShapeError(f"need T >= 1 and n >= 2, got T={a.shape[0]}, n={a.shape[1]}")
        if np.issubdtype(a.dtype, np.floating):
            if not np.all(np.isfinite(a)):
                raise ValueError("counts contain non-finite entries")
            if not np.array_equal(a, np.round(a)):
                raise ValueError("counts must be integral")
            self.counts = a = a.astype(np.int64)
        elif not np.issubdtype(a.dtype, np.integer):
            raise ValueError(f"counts must be integer-valued, got dtype {a.dtype}")
        if a.min() < 0:
            raise ValueError("counts must be nonnegative")
        if not np.array_equal(a, a.transpose(0, 2, 1)):
            t, i, j = np.argwhere(a != a.transpose(0, 2, 1))[0]
            raise ValueError(f"slice {t} is not symmetric at entry ({i}, {j})")

    @classmethod
    def from_slices(cls, slices) -> "CountTensor":
        return cls(np.stack([np.asarray(s) for s in slices], axis=0))


def as_count_array(A) -> np.ndarray:
    """Return counts as a float ``(T, n, n)`` array.

    Accepts a CountTensor or a raw array; fractional "counts" are allowed so
    that zero-residual constructions can be used in tests.
    """
    a = A.counts if isinstance(A, CountTensor) else A
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ShapeError(f"count array must have shape (T, n, n), got {a.shape}")
    return a


def check_param_shapes(Z, alpha, A=None):
    """Validate that Z is (n, k), alpha is (n, T), and A matches (T, n, n)."""
    Z = np.asarray(Z, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if Z.ndim != 2:
        raise ShapeError(f"Z must be a 2-d array, got shape {Z.shape}")
    if alpha.ndim != 2:
        raise ShapeError(f"alpha must be a 2-d array, got shape {alpha.shape}")
    if Z.shape[0] != alpha.shape[0]:
        raise ShapeError(
            f"Z has {Z.shape[0]} rows but alpha has {alpha.shape[0]}; node counts differ"
        )
    if A is not None:
        a = as_count_array(A)
        if a.shape != (alpha.shape[1], Z.shape[0], Z.shape[0]):
            raise ShapeError(
                f"counts shape {a.shape} does not match n={Z.shape[0]}, T={alpha.shape[1]}"
            )
        return Z, alpha, a
    return Z, alpha
