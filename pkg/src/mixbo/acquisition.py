"""Expected Improvement and sequential batch construction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .gp import GPModel, normalize_inputs
from .metaopt import MetaOptimizer

log = logging.getLogger(__name__)

S_FLOOR = 1e-12
SQRT2PI = np.sqrt(2.0 * np.pi)
DEDUP_TOL = 1e-9


class StrategyKind(str, Enum):
    KRIGING_BELIEVER = "kriging_believer"
    CONSTANT_LIAR = "constant_liar"


@dataclass(frozen=True)
class BatchStrategy:
    """How pending batch members are filled in.

    ``liar_value`` is ``"fmin"``, ``"fmax"``, ``"mean"`` or a number and is
    only used by the constant liar.
    """

    kind: StrategyKind = StrategyKind.KRIGING_BELIEVER
    liar_value: str | float = "fmin"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if isinstance(self.liar_value, str) and self.liar_value not in ("fmin", "fmax", "mean"):
            raise ValueError(f"liar_value must be fmin, fmax, mean or a number, got {self.liar_value!r}")


KRIGING_BELIEVER = BatchStrategy()


def constant_liar(value: str | float = "fmin") -> BatchStrategy:
    return BatchStrategy(StrategyKind.CONSTANT_LIAR, value)


def ei_from_moments(f_min: float, mean, std, s_floor: float = 0.0):
    """Closed-form EI for minimization; ``std <= s_floor`` uses the
    deterministic limit ``max(f_min - mean, 0)``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    imp = f_min - mean
    live = std > s_floor
    s = np.where(live, std, 1.0)
    z = imp / s
    ei = imp * ndtr(z) + s * np.exp(-0.5 * z * z) / SQRT2PI
    return np.where(live, np.maximum(ei, 0.0), np.maximum(imp, 0.0))


@dataclass(frozen=True)
class AcquisitionContext:
    """Frozen posterior plus incumbent and pending (believed) points.

    ``model`` is fitted on observed data only; ``augmented`` additionally
    conditions on ``pending``.
    """

    model: GPModel
    f_min: float
    pending: tuple[tuple[np.ndarray, float], ...] = ()
    augmented: GPModel | None = field(default=None, repr=False)

    @classmethod
    def from_model(cls, model: GPModel) -> "AcquisitionContext":
        return cls(model, float(np.min(model.y)))

    @property
    def posterior(self) -> GPModel:
        return self.augmented if self.augmented is not None else self.model

    def predict_many(self, X):
        return self.posterior.predict_many(X)

    def ei_many(self, X) -> np.ndarray:
        post = self.posterior
        mean, std = post.predict_many(X)
        return ei_from_moments(self.f_min, mean, std, S_FLOOR * post.y_std)

    def known_points(self) -> np.ndarray:
        """Training plus pending inputs, as the kernel sees them."""
        return self.posterior.X


def expected_improvement(ctx: AcquisitionContext, x) -> float:
    return float(ctx.ei_many(np.asarray(x, dtype=float).reshape(1, -1))[0])


def _liar(ctx: AcquisitionContext, strategy: BatchStrategy) -> float:
    lv = strategy.liar_value
    if lv == "fmin":
        return ctx.f_min
    if lv == "fmax":
        return float(np.max(ctx.model.y))
    if lv == "mean":
        return float(np.mean(ctx.model.y))
    return float(lv)


def augment(ctx: AcquisitionContext, x, strategy: BatchStrategy = KRIGING_BELIEVER) -> AcquisitionContext:
    """Return a new context that treats ``x`` as observed with a believed value."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if strategy.kind is StrategyKind.KRIGING_BELIEVER:
        value = ctx.posterior.predict(x)[0]
    else:
        value = _liar(ctx, strategy)
    pending = ctx.pending + ((x.copy(), float(value)),)
    Xp = np.array([p for p, _ in pending])
    yp = np.array([v for _, v in pending])
    return AcquisitionContext(ctx.model, ctx.f_min, pending, ctx.model.condition(Xp, yp))


def _is_duplicate(space, cand: np.ndarray, known_n: np.ndarray) -> bool:
    cn, _, _ = normalize_inputs(space, space.coerce(cand))
    if known_n.size == 0:
        return False
    return bool(np.any(np.max(np.abs(known_n - cn), axis=1) <= DEDUP_TOL))


def _pick_slot(ctx: AcquisitionContext, res, rng: np.random.Generator) -> np.ndarray:
    """Coerced EI maximizer, or the best non-duplicate alternative."""
    space = ctx.model.space
    known = space.coerce(ctx.known_points())
    known_n, _, _ = normalize_inputs(space, known)
    best = space.coerce(res.x)
    if not _is_duplicate(space, best, known_n):
        return best
    for i in np.argsort(res.population_values, kind="stable"):
        cand = space.coerce(res.population[i])
        if not _is_duplicate(space, cand, known_n):
            return cand
    return _random_slot(space, known_n, rng)


def _random_slot(space, known_n: np.ndarray, rng: np.random.Generator, tries: int = 100) -> np.ndarray:
    cand = space.coerce(space.sample_warped(1, rng)[0])
    for _ in range(tries):
        if not _is_duplicate(space, cand, known_n):
            break
        cand = space.coerce(space.sample_warped(1, rng)[0])
    return cand


def build_batch(
    ctx: AcquisitionContext,
    q: int,
    meta: MetaOptimizer,
    seed,
    strategy: BatchStrategy = KRIGING_BELIEVER,
    promising: Sequence[tuple[np.ndarray, float]] = (),
) -> list[np.ndarray]:
    """Construct ``q`` query points by sequential EI maximization.

    After each slot the chosen point is inserted into the posterior with a
    believed value (kriging believer or constant liar).  Returned points
    are coerced to their discrete cells and are distinct from training
    and from each other.
    """
    if q < 1:
        raise ValueError(f"batch size must be >= 1, got {q}")
    rng = np.random.default_rng(seed)
    space = ctx.model.space
    coerce_init = ctx.model.cfg.complex
    batch = []
    for slot in range(q):
        current = ctx

        def objective(X):
            return -current.ei_many(X)

        try:
            res = meta.minimize(objective, space, rng, promising=promising, coerce=coerce_init)
            x = _pick_slot(ctx, res, rng)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("meta-optimizer failed on slot %d (%s); using a random point", slot, exc)
            known_n, _, _ = normalize_inputs(space, space.coerce(ctx.known_points()))
            x = _random_slot(space, known_n, rng)
        batch.append(x)
        if slot + 1 < q:
            ctx = augment(ctx, x, strategy)
    return batch
