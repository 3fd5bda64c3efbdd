"""Inner optimizers that minimize the (negated) acquisition over the warped box.

Objectives passed here are *vectorized*: they take an ``(m, d)`` array and
return ``m`` values.  NaN values are treated as ``+inf``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .space import SearchSpace, ValidationError

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], np.ndarray]


class MetaKind(str, Enum):
    DE = "de"
    LOCAL = "local"


class MetaInit(str, Enum):
    RANDOM = "random"
    QUASI_RANDOM = "quasi_random"


@dataclass(frozen=True)
class DEParams:
    """rand/1/bin settings; ``population_size=None`` sizes it from the dimension."""

    population_size: int | None = None
    F: float = 0.8
    CR: float = 0.9
    max_generations: int = 60

    def __post_init__(self) -> None:
        if not 0 < self.F < 2:
            raise ValidationError(f"DE F must be in (0, 2), got {self.F}")
        if not 0 <= self.CR <= 1:
            raise ValidationError(f"DE CR must be in [0, 1], got {self.CR}")
        if self.population_size is not None and self.population_size < 4:
            raise ValidationError(f"DE population_size must be >= 4, got {self.population_size}")
        if self.max_generations < 0:
            raise ValidationError("DE max_generations must be >= 0")

    def pop_for(self, dim: int) -> int:
        if self.population_size is not None:
            return self.population_size
        return max(20, min(15 * dim, 100))


@dataclass(frozen=True)
class QuasiParams:
    top_k: int = 5
    sigma_frac: float = 0.1
    fraction_local: float = 0.5

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValidationError("quasi top_k must be >= 1")
        if self.sigma_frac < 0:
            raise ValidationError("quasi sigma_frac must be >= 0")
        if not 0 <= self.fraction_local <= 1:
            raise ValidationError(f"quasi fraction_local must be in [0, 1], got {self.fraction_local}")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    population: np.ndarray
    population_values: np.ndarray
    nfev: int
    trace: list[float] = field(default_factory=list)

    def __iter__(self):
        # allows ``best_x, best_f = de_minimize(...)``
        return iter((self.x, self.fun))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _bounds(bounds) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] > b[:, 1]):
        raise ValidationError(f"bounds must be an (d, 2) array with low <= high, got {b.shape}")
    return b[:, 0], b[:, 1]


def _evaluate(objective: Objective, X: np.ndarray) -> np.ndarray:
    vals = np.asarray(objective(X), dtype=float).reshape(-1)
    if vals.shape[0] != X.shape[0]:
        raise ValueError(f"objective returned {vals.shape[0]} values for {X.shape[0]} points")
    return np.where(np.isnan(vals), np.inf, vals)


def uniform_init(bounds, n: int, seed) -> np.ndarray:
    lo, hi = _bounds(bounds)
    return _as_rng(seed).uniform(lo, hi, size=(n, lo.size))


def _distinct_triples(rng: np.random.Generator, P: int):
    """For each member ``i`` three distinct indices, all different from ``i``,
    sampled uniformly without replacement."""
    i = np.arange(P)
    a = rng.integers(0, P - 1, size=P)
    a += a >= i
    lo, hi = np.minimum(i, a), np.maximum(i, a)
    b = rng.integers(0, P - 2, size=P)
    b += b >= lo
    b += b >= hi
    s = np.sort(np.stack([i, a, b]), axis=0)
    c = rng.integers(0, P - 3, size=P)
    for row in s:
        c += c >= row
    return a, b, c


def de_minimize(
    objective: Objective,
    bounds,
    params: DEParams,
    init_population,
    seed,
    max_evals: int | None = None,
    time_cap_s: float | None = None,
) -> OptimizeResult:
    """Differential Evolution, rand/1/bin with greedy selection.

    ``trace`` holds the best-so-far value after initialization and after
    every completed generation.  The wall-clock cap is checked between
    generations only.
    """
    rng = _as_rng(seed)
    lo, hi = _bounds(bounds)
    pop = np.array(init_population, dtype=float)
    P, d = pop.shape
    if P < 4:
        raise ValidationError(f"DE needs a population of at least 4, got {P}")
    if d != lo.size:
        raise ValidationError(f"population has {d} dims, bounds have {lo.size}")
    if np.any(pop < lo) or np.any(pop > hi):
        raise ValidationError("initial population must lie within bounds")
    budget = math.inf if max_evals is None else int(max_evals)
    start = time.perf_counter()

    n_first = int(min(P, budget))
    fit = np.full(P, np.inf)
    if n_first:
        fit[:n_first] = _evaluate(objective, pop[:n_first])
    nfev = n_first
    best = int(np.argmin(fit))
    best_x, best_f = pop[best].copy(), float(fit[best])
    trace = [best_f]

    rows = np.arange(P)
    for _ in range(params.max_generations):
        if nfev + P > budget:
            break
        if time_cap_s is not None and time.perf_counter() - start > time_cap_s:
            break
        ia, ib, ic = _distinct_triples(rng, P)
        a, b, c = pop[ia], pop[ib], pop[ic]
        mutant = np.clip(a + params.F * (b - c), lo, hi)
        cross = rng.random((P, d)) < params.CR
        cross[rows, rng.integers(d, size=P)] = True
        trial = np.where(cross, mutant, pop)

        trial_fit = _evaluate(objective, trial)
        nfev += P
        better = trial_fit <= fit
        pop[better] = trial[better]
        fit[better] = trial_fit[better]
        i = int(np.argmin(fit))
        if fit[i] < best_f:
            best_x, best_f = pop[i].copy(), float(fit[i])
        trace.append(best_f)

    return OptimizeResult(best_x, best_f, pop, fit, nfev, trace)


def quasi_random_init(
    space: SearchSpace | None,
    bounds,
    population_size: int,
    promising: Sequence[tuple[np.ndarray, float]],
    params: QuasiParams,
    seed,
    coerce: bool = False,
) -> np.ndarray:
    """Seed a population partly around the best known points.

    ``promising`` is a list of ``(warped_point, value)`` pairs sorted best
    first.  ``ceil(fraction_local * population_size)`` members are Gaussian
    perturbations of the ``top_k`` best points (cycled) with per-dimension
    standard deviation ``sigma_frac * (high - low)``; the rest are uniform.
    With ``coerce=True`` every member is snapped to its discrete cell.
    """
    rng = _as_rng(seed)
    lo, hi = _bounds(bounds)
    uniform = rng.uniform(lo, hi, size=(population_size, lo.size))
    if promising:
        n_local = min(population_size, math.ceil(params.fraction_local * population_size))
        centers = np.array([np.asarray(p, dtype=float) for p, _ in promising[: params.top_k]])
        idx = np.arange(n_local) % len(centers)
        sigma = params.sigma_frac * (hi - lo)
        noise = rng.standard_normal((n_local, lo.size)) * sigma
        local = np.clip(centers[idx] + noise, lo, hi)
        pop = np.vstack([local, uniform[n_local:]])
    else:
        pop = uniform
    if coerce:
        if space is None:
            raise ValidationError("coerce=True needs a search space")
        pop = space.coerce(pop)
    return pop


def local_search_minimize(
    objective: Objective,
    bounds,
    restarts: int,
    seed,
    max_evals: int | None = None,
    starts=None,
) -> OptimizeResult:
    """Multi-start compass (coordinate pattern) search.

    Each start polls ``x +/- step * range`` along every coordinate, moves to
    the best improving neighbour, and halves the step when none improves;
    the step shrinks from 0.1 to 1e-6 of each dimension's range.  The
    evaluation budget is split evenly across restarts.  Starts are uniform
    random unless ``starts`` is given.
    """
    if restarts < 1:
        raise ValidationError("local search needs restarts >= 1")
    rng = _as_rng(seed)
    lo, hi = _bounds(bounds)
    d = lo.size
    span = hi - lo
    if starts is None:
        starts = rng.uniform(lo, hi, size=(restarts, d))
    starts = np.clip(np.asarray(starts, dtype=float).reshape(-1, d)[:restarts], lo, hi)
    per_start = math.inf if max_evals is None else int(max_evals) // len(starts)

    ends, end_vals = [], []
    nfev = 0
    best_x, best_f = starts[0].copy(), math.inf
    trace = []
    for x0 in starts:
        if per_start < 1:
            break
        x = x0.copy()
        fx = float(_evaluate(objective, x[None, :])[0])
        used = 1
        step = 0.1
        while step >= 1e-6 and used + 2 * d <= per_start:
            moves = np.vstack([np.eye(d), -np.eye(d)]) * (step * span)
            cand = np.clip(x + moves, lo, hi)
            vals = _evaluate(objective, cand)
            used += cand.shape[0]
            j = int(np.argmin(vals))
            if vals[j] < fx:
                x, fx = cand[j], float(vals[j])
            else:
                step *= 0.5
        nfev += used
        ends.append(x)
        end_vals.append(fx)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        trace.append(best_f)
    return OptimizeResult(best_x, best_f, np.array(ends), np.array(end_vals), nfev, trace)


@dataclass(frozen=True)
class MetaOptimizer:
    """Configured acquisition maximizer.

    ``max_evals=None`` gives the local search the same evaluation budget a
    DE run would use, so the two are compared at equal cost.
    """

    kind: MetaKind = MetaKind.DE
    de: DEParams = DEParams()
    meta_init: MetaInit = MetaInit.QUASI_RANDOM
    quasi: QuasiParams = QuasiParams()
    max_evals: int | None = None
    time_cap_s: float | None = None
    restarts: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MetaKind(self.kind))
        object.__setattr__(self, "meta_init", MetaInit(self.meta_init))

    def budget(self, dim: int) -> int:
        if self.max_evals is not None:
            return self.max_evals
        return self.de.pop_for(dim) * (self.de.max_generations + 1)

    def initial_population(self, space, bounds, n, promising, seed, coerce) -> np.ndarray:
        if self.meta_init is MetaInit.QUASI_RANDOM:
            return quasi_random_init(space, bounds, n, promising, self.quasi, seed, coerce=coerce)
        return quasi_random_init(space, bounds, n, (), self.quasi, seed, coerce=coerce)

    def minimize(
        self,
        objective: Objective,
        space: SearchSpace,
        seed,
        promising: Sequence[tuple[np.ndarray, float]] = (),
        coerce: bool = False,
    ) -> OptimizeResult:
        rng = _as_rng(seed)
        bounds = space.bounds
        dim = space.warped_dim
        if self.kind is MetaKind.DE:
            n = self.de.pop_for(dim)
            init = self.initial_population(space, bounds, n, promising, rng, coerce)
            return de_minimize(
                objective, bounds, self.de, init, rng,
                max_evals=self.budget(dim), time_cap_s=self.time_cap_s,
            )
        starts = self.initial_population(space, bounds, self.restarts, promising, rng, coerce)
        return local_search_minimize(
            objective, bounds, self.restarts, rng, max_evals=self.budget(dim), starts=starts
        )

    def to_dict(self) -> dict:
        return {
            "meta_optimizer": self.kind.value,
            "meta_init": self.meta_init.value,
            "de": {
                "pop": self.de.population_size,
                "F": self.de.F,
                "CR": self.de.CR,
                "gens": self.de.max_generations,
            },
            "quasi": {
                "top_k": self.quasi.top_k,
                "sigma_frac": self.quasi.sigma_frac,
                "fraction_local": self.quasi.fraction_local,
            },
        }
