"""Exact Gaussian-process regression on warped inputs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .kernels import JITTER, KernelConfig
from .metaopt import DEParams, de_minimize, uniform_init
from .space import SearchSpace, ValidationError

log = logging.getLogger(__name__)

LOG2PI = math.log(2.0 * math.pi)
MAX_JITTER = 1e-4
LOG10_LS_BOUNDS = (-2.0, 2.0)
LOG10_SIGNAL_BOUNDS = (-3.0, 3.0)
LOG10_NOISE_BOUNDS = (-8.0, -1.0)
FIT_DE = DEParams(population_size=15, F=0.8, CR=0.9, max_generations=40)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
            raise ValidationError(f"dataset needs n >= 1 matching rows, got X {X.shape}, y {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValidationError("dataset targets must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]


def normalize_inputs(space: SearchSpace, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Affinely map each warped dimension to [0, 1] using the space bounds.

    Dimensions with ``low == high`` are pinned to 0.5.
    """
    X = np.asarray(X, dtype=float)
    lo, hi = space.lower, space.upper
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    Xn = np.where(width > 0, (X - lo) / safe, 0.5)
    return Xn, lo.copy(), hi.copy()


def _cholesky(K: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float] | None:
    """Cholesky with jitter escalation; ``K`` already carries the base jitter."""
    jitter = JITTER
    extra = 0.0
    while True:
        try:
            if extra:
                K = K.copy()
                K[np.diag_indices_from(K)] += extra
            return np.linalg.cholesky(K), jitter
        except np.linalg.LinAlgError:
            if jitter * 10 > MAX_JITTER * (1 + 1e-9):
                return None
            new = jitter * 10
            extra = (new - jitter) * signal_variance
            jitter = new


def _gram(cfg: KernelConfig, Xn: np.ndarray) -> np.ndarray:
    K = kernels.cross_cov(cfg.family, cfg.length_scales, cfg.signal_variance, Xn, Xn)
    K[np.diag_indices_from(K)] += cfg.noise_variance + JITTER * cfg.signal_variance
    return K


def log_marginal_likelihood(cfg: KernelConfig, data: Dataset) -> float:
    """Log evidence of ``data`` under a zero-mean GP with kernel ``cfg``.

    Inputs are used as given (already coerced/normalized by the caller) and
    targets are not re-normalized.  Returns ``-inf`` if the Gram matrix
    cannot be factorized even after jitter escalation.
    """
    cfg = cfg.for_dim(data.X.shape[1])
    fac = _cholesky(_gram(cfg, data.X), cfg.signal_variance)
    if fac is None:
        return -math.inf
    L, _ = fac
    z = solve_triangular(L, data.y, lower=True)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * data.n * LOG2PI)


def _lml_batch(theta: np.ndarray, D2: np.ndarray, y: np.ndarray, family) -> np.ndarray:
    """LML for a population of log10 hyperparameter vectors.

    ``theta`` rows are ``[log10 l_1..l_d, log10 signal, log10 noise]`` and
    ``D2`` is the ``(n, n, d)`` tensor of squared coordinate differences.
    """
    d = D2.shape[-1]
    n = y.shape[0]
    inv_l2 = 10.0 ** (-2.0 * theta[:, :d])
    s2 = 10.0 ** theta[:, d]
    noise = 10.0 ** theta[:, d + 1]
    r2 = (D2.reshape(n * n, d) @ inv_l2.T).T.reshape(-1, n, n)
    K = s2[:, None, None] * kernels.correlation(family, r2)
    idx = np.arange(n)
    K[:, idx, idx] += (noise + JITTER * s2)[:, None]
    out = np.empty(theta.shape[0])
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        for p in range(theta.shape[0]):
            fac = _cholesky(K[p], s2[p])
            if fac is None:
                out[p] = -np.inf
                continue
            Lp = fac[0]
            z = solve_triangular(Lp, y, lower=True)
            out[p] = -0.5 * z @ z - np.log(np.diag(Lp)).sum() - 0.5 * n * LOG2PI
        return out
    z = np.stack([solve_triangular(Lp, y, lower=True, check_finite=False) for Lp in L])
    logdet = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(1)
    return -0.5 * (z * z).sum(1) - logdet - 0.5 * n * LOG2PI


@dataclass(frozen=True)
class GPModel:
    """A fitted GP posterior; immutable, safe to share between readers.

    ``X`` holds the prepared (coerced in complex mode) warped training
    inputs and ``y`` the raw targets.
    """

    cfg: KernelConfig
    space: SearchSpace
    X: np.ndarray
    y: np.ndarray
    Xn: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    x_lo: np.ndarray
    x_hi: np.ndarray
    jitter: float = JITTER
    fallback: bool = False
    lml: float = math.nan

    def __post_init__(self) -> None:
        ls = np.asarray(self.cfg.length_scales, dtype=float)
        xs = self.Xn / ls
        object.__setattr__(self, "_ls", ls)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_xs_sq", (xs * xs).sum(1))
        eye = np.eye(self.chol.shape[0])
        object.__setattr__(self, "_chol_inv", solve_triangular(self.chol, eye, lower=True, check_finite=False))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def normalized_predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and std in normalized output units for ``(m, d)`` inputs."""
        U = kernels.prepare(self.cfg, self.space, np.atleast_2d(X))
        Un, _, _ = normalize_inputs(self.space, U)
        Us = Un / self._ls
        r2 = (Us * Us).sum(1)[:, None] + self._xs_sq[None, :] - 2.0 * Us @ self._xs.T
        Ks = self.cfg.signal_variance * kernels.correlation(self.cfg.family, r2)
        mean = Ks @ self.alpha
        v = Ks @ self._chol_inv.T
        var = np.maximum(self.cfg.signal_variance - (v * v).sum(1), 0.0)
        return mean, np.sqrt(var)

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        mean, std = self.normalized_predict(X)
        return mean * self.y_std + self.y_mean, std * self.y_std

    def predict(self, x) -> tuple[float, float]:
        mean, std = self.predict_many(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(std[0])

    def condition(self, X_new, y_new) -> "GPModel":
        """Posterior with extra (pseudo-)observations; hyperparameters and
        output normalization are kept, the Gram matrix is refactorized."""
        X_new = kernels.prepare(self.cfg, self.space, np.atleast_2d(X_new))
        y_new = np.asarray(y_new, dtype=float).reshape(-1)
        return build_model(
            self.space,
            np.vstack([self.X, X_new]),
            np.concatenate([self.y, y_new]),
            self.cfg,
            y_mean=self.y_mean,
            y_std=self.y_std,
            fallback=self.fallback,
        )

    def hyperparameters(self) -> dict:
        return {
            "length_scales": list(self.cfg.length_scales),
            "signal_variance": self.cfg.signal_variance,
            "noise_variance": self.cfg.noise_variance,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "lml": self.lml,
            "fallback": self.fallback,
        }


def _output_norm(y: np.ndarray) -> tuple[float, float]:
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not y_std > 0:
        y_std = 1.0
    return y_mean, y_std


def build_model(
    space: SearchSpace,
    X,
    y,
    cfg: KernelConfig,
    y_mean: float | None = None,
    y_std: float | None = None,
    fallback: bool = False,
) -> GPModel:
    """Posterior for fixed hyperparameters (no fitting)."""
    cfg = cfg.for_dim(space.warped_dim)
    X = kernels.prepare(cfg, space, np.atleast_2d(X))
    y = np.asarray(y, dtype=float).reshape(-1)
    if y_mean is None or y_std is None:
        y_mean, y_std = _output_norm(y)
    Xn, lo, hi = normalize_inputs(space, X)
    yt = (y - y_mean) / y_std
    fac = _cholesky(_gram(cfg, Xn), cfg.signal_variance)
    if fac is None:
        raise np.linalg.LinAlgError("Gram matrix not positive definite even after jitter escalation")
    L, jitter = fac
    alpha = solve_triangular(L.T, solve_triangular(L, yt, lower=True), lower=False)
    z = solve_triangular(L, yt, lower=True)
    lml = float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * y.size * LOG2PI)
    return GPModel(cfg, space, X, y, Xn, L, alpha, y_mean, y_std, lo, hi, jitter, fallback, lml)


def hyperparameter_bounds(dim: int) -> np.ndarray:
    return np.array([LOG10_LS_BOUNDS] * dim + [LOG10_SIGNAL_BOUNDS, LOG10_NOISE_BOUNDS])


def fit(space: SearchSpace, data: Dataset, cfg_template: KernelConfig, seed) -> GPModel:
    """Fit ARD hyperparameters by maximizing the log marginal likelihood.

    The search runs Differential Evolution over log10 length scales,
    signal variance and noise variance on normalized inputs/outputs.
    """
    cfg_template = cfg_template.for_dim(space.warped_dim)
    X = kernels.prepare(cfg_template, space, data.X)
    y_mean, y_std = _output_norm(data.y)
    Xn, _, _ = normalize_inputs(space, X)
    yt = (data.y - y_mean) / y_std
    D2 = (Xn[:, None, :] - Xn[None, :, :]) ** 2
    d = space.warped_dim

    bounds = hyperparameter_bounds(d)
    rng = np.random.default_rng(seed)
    init = uniform_init(bounds, FIT_DE.population_size, rng)

    def neg_lml(theta):
        return -_lml_batch(theta, D2, yt, cfg_template.family)

    res = de_minimize(neg_lml, bounds, FIT_DE, init, rng)
    if not np.isfinite(res.fun):
        log.warning("all hyperparameter candidates rejected; using template defaults")
        return build_model(space, X, data.y, cfg_template, y_mean, y_std, fallback=True)
    theta = res.x
    ls_lo, ls_hi = cfg_template.length_scale_bounds
    cfg = replace(
        cfg_template,
        length_scales=tuple(np.clip(10.0 ** theta[:d], ls_lo, ls_hi)),
        signal_variance=float(10.0 ** theta[d]),
        noise_variance=float(10.0 ** theta[d + 1]),
    )
    return build_model(space, X, data.y, cfg, y_mean, y_std)
