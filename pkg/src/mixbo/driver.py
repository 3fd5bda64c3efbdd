"""Batch suggest/observe optimizer loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import IO, Any, Mapping

import numpy as np

from . import acquisition, gp
from .acquisition import AcquisitionContext, BatchStrategy, StrategyKind
from .kernels import Discretization, Family, KernelConfig
from .metaopt import DEParams, MetaInit, MetaKind, MetaOptimizer, QuasiParams
from .space import Kind, SearchSpace, ValidationError

log = logging.getLogger(__name__)

# stream tags for deterministic per-purpose seeds
_INIT, _FIT, _BATCH, _FAILSAFE = 0, 1, 2, 3


class BudgetExhausted(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    pass


class Origin(str, Enum):
    PRIME = "prime"
    SUGGESTED = "suggested"


@dataclass(frozen=True)
class OptimizerConfig:
    """Everything that parameterizes a run except the search space.

    Defaults are the recommended configuration: Matern 5/2 with complex
    discretization, DE meta-optimizer with quasi-random meta-initialization,
    five Latin-hypercube priming batches, 16 batches of 8.
    """

    family: Family = Family.MATERN52
    discretization: Discretization = Discretization.COMPLEX
    batch_strategy: StrategyKind = StrategyKind.KRIGING_BELIEVER
    liar_value: str | float = "fmin"
    batch_size: int = 8
    total_batches: int = 16
    init: str = "lh"
    init_batches: int = 5
    seed: int = 0
    time_cap_s: float = 640.0
    meta_optimizer: MetaKind = MetaKind.DE
    meta_init: MetaInit = MetaInit.QUASI_RANDOM
    de: DEParams = DEParams()
    quasi: QuasiParams = QuasiParams()

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "discretization", Discretization(self.discretization))
        object.__setattr__(self, "batch_strategy", StrategyKind(self.batch_strategy))
        object.__setattr__(self, "meta_optimizer", MetaKind(self.meta_optimizer))
        object.__setattr__(self, "meta_init", MetaInit(self.meta_init))
        if self.init not in ("random", "lh"):
            raise ValidationError(f"init must be 'random' or 'lh', got {self.init!r}")
        if self.batch_size < 1 or self.total_batches < 1:
            raise ValidationError("batch_size and total_batches must be >= 1")
        if self.init_batches < 1:
            raise ValidationError("init_batches must be >= 1")
        if self.init_batches * self.batch_size < 2:
            raise ValidationError("priming needs at least two queries")
        if self.init_batches > self.total_batches:
            raise ValidationError("init_batches cannot exceed total_batches")
        if not self.time_cap_s > 0:
            raise ValidationError("time_cap_s must be positive")
        BatchStrategy(self.batch_strategy, self.liar_value)

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.family, self.discretization)

    @property
    def strategy(self) -> BatchStrategy:
        return BatchStrategy(self.batch_strategy, self.liar_value)

    @property
    def meta(self) -> MetaOptimizer:
        return MetaOptimizer(self.meta_optimizer, self.de, self.meta_init, self.quasi)

    @property
    def total_evaluations(self) -> int:
        return self.total_batches * self.batch_size

    def to_dict(self) -> dict:
        d = {
            "kernel": KernelConfig(self.family, self.discretization).to_dict(),
            "batch_strategy": self.batch_strategy.value,
            "liar_value": self.liar_value,
            "batch_size": self.batch_size,
            "total_batches": self.total_batches,
            "init": self.init,
            "init_batches": self.init_batches,
            "seed": self.seed,
            "time_cap_s": self.time_cap_s,
        }
        d.update(self.meta.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "OptimizerConfig":
        """Parse the run-config document (a ``space`` key, if present, is ignored)."""
        known = {
            "space", "kernel", "family", "discretization", "batch_strategy", "liar_value", "batch_size", "total_batches",
            "init", "init_batches", "seed", "time_cap_s", "meta_optimizer", "meta_init", "de", "quasi",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        kernel = {**d.get("kernel", {})}
        for key in ("family", "discretization"):
            if key in d:
                kernel[key] = d[key]
            if key in kernel:
                kw[key] = kernel[key]
        for key in ("batch_strategy", "liar_value", "batch_size", "total_batches", "init",
                    "init_batches", "seed", "time_cap_s", "meta_optimizer", "meta_init"):
            if key in d:
                kw[key] = d[key]
        if "de" in d:
            de = d["de"]
            kw["de"] = DEParams(
                population_size=de.get("pop"),
                F=de.get("F", 0.8),
                CR=de.get("CR", 0.9),
                max_generations=de.get("gens", 60),
            )
        if "quasi" in d:
            kw["quasi"] = QuasiParams(**d["quasi"])
        try:
            return cls(**kw)
        except (ValueError, TypeError) as exc:
            raise ValidationError(str(exc)) from None


@dataclass
class TrialRecord:
    assignment: dict
    warped: np.ndarray
    value: float | None
    origin: Origin
    batch_index: int
    flagged: bool = False

    @property
    def pending(self) -> bool:
        return self.value is None


# -- priming designs --------------------------------------------------------


def random_init(space: SearchSpace, n_batches: int, batch_size: int, seed) -> list[dict]:
    """Uniform samples in the warped box, decoded (log-uniform in log space)."""
    if n_batches < 1:
        raise ValidationError("n_batches must be >= 1")
    rng = np.random.default_rng(seed)
    return [space.unwarp(x) for x in space.sample_warped(n_batches * batch_size, rng)]


def latin_hypercube_init(space: SearchSpace, n_batches: int, batch_size: int, seed) -> list[dict]:
    """Latin-hypercube design built in the warped space.

    Numeric dimensions use the midpoints of an ``n``-way partition of their
    warped range, categorical blocks a random permutation of category
    indices tiled to length ``n``, booleans alternate; every column is
    independently shuffled.  Points that coincide after coercion with an
    earlier point are resampled at random; if the space has fewer than
    ``n`` distinct cells the remainder is filled randomly with a warning.
    """
    n = n_batches * batch_size
    if n < 2:
        raise ValidationError("Latin hypercube needs at least two points")
    rng = np.random.default_rng(seed)
    X = np.zeros((n, space.warped_dim))
    mid = (np.arange(n) + 0.5) / n
    for p, sl in zip(space.params, space.slices):
        if p.kind is Kind.CATEGORICAL:
            k = len(p.categories)
            levels = np.resize(rng.permutation(k), n)
            X[np.arange(n), sl.start + rng.permutation(levels)] = 1.0
        elif p.kind is Kind.BOOL:
            X[:, sl.start] = rng.permutation(np.arange(n) % 2)
        else:
            lo, hi = space.lower[sl.start], space.upper[sl.start]
            X[:, sl.start] = rng.permutation(lo + mid * (hi - lo))

    out: list[dict] = []
    seen: set[tuple] = set()
    leftovers = 0
    for x in X:
        key = tuple(np.round(space.coerce(x), 12))
        if key in seen:
            leftovers += 1
            continue
        seen.add(key)
        out.append(space.unwarp(x))
    exhausted = False
    while leftovers:
        for _ in range(1000):
            x = space.sample_warped(1, rng)[0]
            key = tuple(np.round(space.coerce(x), 12))
            if key not in seen:
                break
        else:
            exhausted = True
        seen.add(key)
        out.append(space.unwarp(x))
        leftovers -= 1
    if exhausted:
        log.warning("space has fewer than %d distinct points; filled the design randomly", n)
    return out


# -- optimizer ----------------------------------------------------------------


class Optimizer:
    """Single-owner run state: alternate :meth:`suggest` and :meth:`observe`.

    Examples
    --------
    >>> from mixbo.space import SearchSpace, Real
    >>> opt = Optimizer(SearchSpace([Real("x", -1, 1)]), OptimizerConfig(total_batches=3, init_batches=2, batch_size=2))
    >>> while not opt.finished:
    ...     batch = opt.suggest()
    ...     opt.observe([a["x"] ** 2 for a in batch])
    >>> len(opt.trials)
    6
    """

    def __init__(self, space: SearchSpace, config: OptimizerConfig | None = None):
        self.space = space
        self.config = config or OptimizerConfig()
        self.trials: list[TrialRecord] = []
        self.batch_index = 0
        self.elapsed = 0.0
        self.hyperparameters: list[dict] = []
        cfg = self.config
        init_fn = latin_hypercube_init if cfg.init == "lh" else random_init
        self._design = init_fn(space, cfg.init_batches, cfg.batch_size, self._seed(_INIT))

    def _seed(self, tag: int, index: int = 0) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.config.seed, tag, index])

    @property
    def finished(self) -> bool:
        return self.batch_index >= self.config.total_batches

    @property
    def pending(self) -> list[TrialRecord]:
        return [t for t in self.trials if t.pending]

    @property
    def observed(self) -> list[TrialRecord]:
        return [t for t in self.trials if not t.pending]

    def suggest(self) -> list[dict]:
        if self.pending:
            raise ProtocolError("suggest called while a batch is pending")
        if self.finished:
            raise BudgetExhausted(f"all {self.config.total_batches} batches used")
        cfg = self.config
        t0 = time.perf_counter()
        i = self.batch_index
        if i < cfg.init_batches:
            batch = self._design[i * cfg.batch_size:(i + 1) * cfg.batch_size]
            origin = Origin.PRIME
        elif self.elapsed > cfg.time_cap_s:
            log.warning("time cap of %.0f s exceeded; suggesting a random batch", cfg.time_cap_s)
            batch = random_init(self.space, 1, cfg.batch_size, self._seed(_FAILSAFE, i))
            origin = Origin.SUGGESTED
        else:
            batch = self._model_batch(i)
            origin = Origin.SUGGESTED
        for a in batch:
            self.trials.append(TrialRecord(a, self.space.warp(a), None, origin, i))
        self.elapsed += time.perf_counter() - t0
        return [dict(a) for a in batch]

    def _training_data(self) -> gp.Dataset:
        obs = self.observed
        X = np.array([t.warped for t in obs])
        y = np.array([t.value for t in obs], dtype=float)
        finite = np.isfinite(y)
        if not finite.any():
            y = np.zeros_like(y)
        elif not finite.all():
            y = np.where(finite, y, y[finite].max())
        return gp.Dataset(X, y)

    def _model_batch(self, i: int) -> list[dict]:
        cfg = self.config
        data = self._training_data()
        model = gp.fit(self.space, data, cfg.kernel, self._seed(_FIT, i))
        self.hyperparameters.append({"batch": i, **model.hyperparameters()})
        order = np.argsort(data.y, kind="stable")
        promising = [(data.X[j], float(data.y[j])) for j in order]
        ctx = AcquisitionContext.from_model(model)
        points = acquisition.build_batch(
            ctx, cfg.batch_size, cfg.meta, self._seed(_BATCH, i), cfg.strategy, promising
        )
        return [self.space.unwarp(x) for x in points]

    def observe(self, values) -> None:
        pend = self.pending
        if not pend:
            raise ProtocolError("observe called with no pending batch")
        values = list(values)
        if len(values) != len(pend):
            raise ProtocolError(f"expected {len(pend)} values, got {len(values)}")
        t0 = time.perf_counter()
        for t, v in zip(pend, values):
            v = float(v)
            if not math.isfinite(v):
                log.warning("non-finite objective value %r recorded as +inf", v)
                t.flagged = True
                v = math.inf
            t.value = v
        self.batch_index += 1
        self.elapsed += time.perf_counter() - t0

    def best(self) -> tuple[dict, float]:
        obs = self.observed
        if not obs:
            raise ValueError("no observed trials yet")
        best = min(obs, key=lambda t: t.value)  # min keeps the earliest on ties
        return dict(best.assignment), best.value

    def incumbent_trace(self) -> list[float]:
        """Best observed value after each completed batch."""
        trace, cur = [], math.inf
        for b in range(self.batch_index):
            vals = [t.value for t in self.trials if t.batch_index == b and t.value is not None]
            cur = min([cur, *vals])
            trace.append(cur)
        return trace


# -- line protocol ------------------------------------------------------------


def _jsonable(a: Mapping[str, Any]) -> dict:
    out = {}
    for k, v in a.items():
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def serve_protocol(opt: Optimizer, instream: IO[str], outstream: IO[str]) -> tuple[dict, float]:
    """Drive ``opt`` over newline-delimited JSON.

    Emits ``{"suggest": [...], "batch": i}`` and expects
    ``{"observe": [...], "batch": i}`` in reply, then finishes with
    ``{"done": true, "best": {...}, "value": v}``.
    """
    while not opt.finished:
        i = opt.batch_index
        batch = opt.suggest()
        outstream.write(json.dumps({"suggest": [_jsonable(a) for a in batch], "batch": i}) + "\n")
        outstream.flush()
        line = instream.readline()
        if not line:
            raise ProtocolError(f"input closed while waiting for batch {i}")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed JSON for batch {i}: {exc}") from None
        if not isinstance(msg, dict) or "observe" not in msg:
            raise ProtocolError(f"expected an 'observe' message for batch {i}")
        if msg.get("batch") != i:
            raise ProtocolError(f"observe for batch {msg.get('batch')!r}, expected {i}")
        vals = msg["observe"]
        if not isinstance(vals, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) and v is not None for v in vals
        ):
            raise ProtocolError(f"observe values for batch {i} must be a list of numbers")
        opt.observe([math.nan if v is None else v for v in vals])
    best, value = opt.best()
    outstream.write(json.dumps({"done": True, "best": _jsonable(best), "value": value}) + "\n")
    outstream.flush()
    return best, value
