"""ARD stationary kernels with optional in-kernel discretization."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .space import SearchSpace, ValidationError

SQRT5 = np.sqrt(5.0)
JITTER = 1e-10
LENGTH_SCALE_BOUNDS = (1e-2, 1e2)


class Family(str, Enum):
    SQUARED_EXPONENTIAL = "se"
    MATERN52 = "matern52"


class Discretization(str, Enum):
    NAIVE = "naive"
    COMPLEX = "complex"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family, discretization mode and (fitted) hyperparameters.

    ``length_scales`` may be ``None`` in a template; :meth:`for_dim`
    expands it to unit length scales.
    """

    family: Family = Family.MATERN52
    discretization: Discretization = Discretization.COMPLEX
    length_scales: tuple[float, ...] | None = None
    signal_variance: float = 1.0
    noise_variance: float = 1e-6
    length_scale_bounds: tuple[float, float] = LENGTH_SCALE_BOUNDS

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "discretization", Discretization(self.discretization))
        if not self.signal_variance > 0:
            raise ValidationError(f"signal_variance must be > 0, got {self.signal_variance}")
        if not self.noise_variance >= 0:
            raise ValidationError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.length_scales is not None:
            ls = tuple(float(v) for v in np.ravel(self.length_scales))
            lo, hi = self.length_scale_bounds
            if any(not lo <= v <= hi for v in ls):
                raise ValidationError(f"length scales must lie in [{lo}, {hi}], got {ls}")
            object.__setattr__(self, "length_scales", ls)

    @property
    def complex(self) -> bool:
        return self.discretization is Discretization.COMPLEX

    def for_dim(self, dim: int) -> "KernelConfig":
        if self.length_scales is None:
            return replace(self, length_scales=(1.0,) * dim)
        if len(self.length_scales) != dim:
            raise ValidationError(f"kernel has {len(self.length_scales)} length scales, space has {dim} dims")
        return self

    def to_dict(self) -> dict:
        return {"family": self.family.value, "discretization": self.discretization.value}


def correlation(family: Family, r2):
    """Unit-variance kernel value as a function of squared scaled distance."""
    r2 = np.maximum(np.asarray(r2, dtype=float), 0.0, dtype=float)
    if r2.ndim == 0:
        r2 = r2.reshape(1)
        return correlation(family, r2)[0]
    if family is Family.SQUARED_EXPONENTIAL:
        r2 *= -0.5
        return np.exp(r2, out=r2)
    r = np.sqrt(r2)
    r *= SQRT5
    out = np.exp(-r)
    r += 1.0
    r2 *= 5.0 / 3.0
    r += r2
    out *= r
    return out


def scaled_sqdist(A, B, length_scales) -> np.ndarray:
    """Pairwise ``sum_d ((a_d - b_d) / l_d)^2`` for rows of ``A`` and ``B``."""
    ls = np.asarray(length_scales, dtype=float)
    A = np.atleast_2d(A) / ls
    B = np.atleast_2d(B) / ls
    return ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)


def cross_cov(family: Family, length_scales, signal_variance: float, A, B) -> np.ndarray:
    return signal_variance * correlation(family, scaled_sqdist(A, B, length_scales))


def prepare(cfg: KernelConfig, space: SearchSpace, X) -> np.ndarray:
    """Apply the discretization wrapper: coerce inputs in complex mode."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != space.warped_dim:
        raise ValidationError(f"expected {space.warped_dim} coordinates, got {X.shape[-1]}")
    return space.coerce(X) if cfg.complex else X


def kernel_eval(cfg: KernelConfig, space: SearchSpace, x1, x2) -> float:
    """Covariance between two warped points (no noise term)."""
    cfg = cfg.for_dim(space.warped_dim)
    u1 = prepare(cfg, space, np.asarray(x1, dtype=float).reshape(1, -1))
    u2 = prepare(cfg, space, np.asarray(x2, dtype=float).reshape(1, -1))
    r2 = float((((u1 - u2) / np.asarray(cfg.length_scales)) ** 2).sum())
    return float(cfg.signal_variance * correlation(cfg.family, r2))


def kernel_matrix(cfg: KernelConfig, space: SearchSpace, X: Sequence) -> np.ndarray:
    """Gram matrix with ``noise_variance + jitter`` added to the diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValidationError("kernel_matrix needs at least one point")
    cfg = cfg.for_dim(space.warped_dim)
    U = prepare(cfg, space, X)
    diff = U[:, None, :] - U[None, :, :]
    r2 = ((diff / np.asarray(cfg.length_scales)) ** 2).sum(-1)
    K = cfg.signal_variance * correlation(cfg.family, r2)
    K[np.diag_indices_from(K)] += cfg.noise_variance + JITTER * cfg.signal_variance
    return K
