"""Mixed-type search spaces and the warped real-vector domain.

A :class:`SearchSpace` maps native parameter values (reals, integers,
category labels, booleans) to a fixed-length real vector and back.  The
:meth:`SearchSpace.coerce` map snaps an arbitrary vector to the canonical
representative of its discrete cell; kernels use it for the "complex"
discretization mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised for malformed spaces, assignments or points."""


class Kind(str, Enum):
    REAL = "real"
    INT = "int"
    CATEGORICAL = "cat"
    BOOL = "bool"


class ConfigSpace(str, Enum):
    LINEAR = "linear"
    LOG = "log"


def round_half_away(x):
    """Round to nearest integer, halves away from zero (platform independent)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ParameterSpec:
    """One parameter of the objective function.

    Parameters
    ----------
    name : str
        Identifier, unique within a space.
    kind : Kind
        ``real``, ``int``, ``cat`` or ``bool``.
    low, high : float, optional
        Native bounds for ``real`` and ``int`` kinds.
    categories : tuple, optional
        Ordered labels for ``cat`` kind.
    space : ConfigSpace
        ``linear`` or ``log`` configuration space (numeric kinds only).
    """

    name: str
    kind: Kind
    low: float | None = None
    high: float | None = None
    categories: tuple = ()
    space: ConfigSpace = ConfigSpace.LINEAR

    def __post_init__(self) -> None:
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError(f"parameter name must be a non-empty string, got {self.name!r}")
        try:
            space = ConfigSpace(self.space)
        except ValueError:
            raise ValidationError(
                f"parameter {self.name!r}: unsupported configuration space {self.space!r} "
                "(only 'linear' and 'log' are implemented)"
            ) from None
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "categories", tuple(self.categories))

        if kind in (Kind.REAL, Kind.INT):
            if self.low is None or self.high is None:
                raise ValidationError(f"parameter {self.name!r}: numeric kinds need low and high")
            low, high = float(self.low), float(self.high)
            if not (math.isfinite(low) and math.isfinite(high)):
                raise ValidationError(f"parameter {self.name!r}: bounds must be finite")
            if kind is Kind.REAL and not low < high:
                raise ValidationError(f"parameter {self.name!r}: need low < high, got ({low}, {high})")
            if kind is Kind.INT:
                if low != int(low) or high != int(high):
                    raise ValidationError(f"parameter {self.name!r}: int bounds must be integral")
                if not low <= high:
                    raise ValidationError(f"parameter {self.name!r}: need low <= high, got ({low}, {high})")
                low, high = int(low), int(high)
            if space is ConfigSpace.LOG and low <= 0:
                raise ValidationError(f"parameter {self.name!r}: log space requires low > 0")
            object.__setattr__(self, "low", low)
            object.__setattr__(self, "high", high)
        elif kind is Kind.CATEGORICAL:
            if len(self.categories) < 2 or len(set(self.categories)) != len(self.categories):
                raise ValidationError(f"parameter {self.name!r}: need >= 2 distinct categories")
            if space is not ConfigSpace.LINEAR:
                raise ValidationError(f"parameter {self.name!r}: categorical parameters have no configuration space")
        elif space is not ConfigSpace.LINEAR:
            raise ValidationError(f"parameter {self.name!r}: bool parameters have no configuration space")

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind is Kind.CATEGORICAL else 1

    def _warp_scalar(self, v: float) -> float:
        return float(np.log10(v)) if self.space is ConfigSpace.LOG else float(v)

    def warped_bounds(self) -> list[tuple[float, float]]:
        if self.kind in (Kind.REAL, Kind.INT):
            return [(self._warp_scalar(self.low), self._warp_scalar(self.high))]
        return [(0.0, 1.0)] * self.width

    def validate(self, value: Any) -> Any:
        """Return ``value`` normalized to its native Python type or raise."""
        if self.kind is Kind.BOOL:
            if isinstance(value, (bool, np.bool_)):
                return bool(value)
            raise ValidationError(f"parameter {self.name!r}: expected bool, got {value!r}")
        if self.kind is Kind.CATEGORICAL:
            if value in self.categories:
                return value
            raise ValidationError(f"parameter {self.name!r}: {value!r} not in {list(self.categories)}")
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise ValidationError(f"parameter {self.name!r}: expected a number, got {value!r}")
        if self.kind is Kind.INT:
            if float(value) != int(value):
                raise ValidationError(f"parameter {self.name!r}: expected an integer, got {value!r}")
            value = int(value)
        else:
            value = float(value)
            if not math.isfinite(value):
                raise ValidationError(f"parameter {self.name!r}: value must be finite")
        if not self.low <= value <= self.high:
            raise ValidationError(
                f"parameter {self.name!r}: {value!r} outside bounds [{self.low}, {self.high}]"
            )
        return value

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind.value}
        if self.kind in (Kind.REAL, Kind.INT):
            d.update(low=self.low, high=self.high, space=self.space.value)
        elif self.kind is Kind.CATEGORICAL:
            d["categories"] = list(self.categories)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ParameterSpec":
        unknown = set(d) - {"name", "kind", "low", "high", "space", "categories"}
        if unknown:
            raise ValidationError(f"parameter {d.get('name')!r}: unknown fields {sorted(unknown)}")
        try:
            kind = Kind(d["kind"])
        except (KeyError, ValueError):
            raise ValidationError(f"parameter {d.get('name')!r}: bad kind {d.get('kind')!r}") from None
        return cls(
            name=d.get("name"),
            kind=kind,
            low=d.get("low"),
            high=d.get("high"),
            categories=tuple(d.get("categories", ())),
            space=d.get("space", "linear"),
        )


def Real(name: str, low: float, high: float, log: bool = False) -> ParameterSpec:
    return ParameterSpec(name, Kind.REAL, low, high, space=ConfigSpace.LOG if log else ConfigSpace.LINEAR)


def Int(name: str, low: int, high: int, log: bool = False) -> ParameterSpec:
    return ParameterSpec(name, Kind.INT, low, high, space=ConfigSpace.LOG if log else ConfigSpace.LINEAR)


def Categorical(name: str, categories: Sequence) -> ParameterSpec:
    return ParameterSpec(name, Kind.CATEGORICAL, categories=tuple(categories))


def Bool(name: str) -> ParameterSpec:
    return ParameterSpec(name, Kind.BOOL)


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of parameters with a warped-vector layout.

    Numeric parameters take one warped coordinate (``log10`` of the value
    in log space), booleans one coordinate in ``[0, 1]`` and categoricals
    one one-hot coordinate per label.

    Examples
    --------
    >>> sp = SearchSpace([Real("lr", 1e-4, 1.0, log=True), Bool("nesterov")])
    >>> sp.warp({"lr": 0.01, "nesterov": True}).tolist()
    [-2.0, 1.0]
    """

    params: tuple[ParameterSpec, ...]
    slices: tuple[slice, ...] = field(init=False, repr=False)
    lower: np.ndarray = field(init=False, repr=False, compare=False)
    upper: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, params: Sequence[ParameterSpec]):
        params = tuple(params)
        if not params:
            raise ValidationError("a search space needs at least one parameter")
        names = [p.name for p in params]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValidationError(f"duplicate parameter names: {dupes}")
        object.__setattr__(self, "params", params)

        slices, bounds = [], []
        int_lin, int_log, bools, blocks = [], [], [], []
        pos = 0
        for p in params:
            sl = slice(pos, pos + p.width)
            slices.append(sl)
            bounds.extend(p.warped_bounds())
            if p.kind is Kind.INT:
                (int_log if p.space is ConfigSpace.LOG else int_lin).append(pos)
            elif p.kind is Kind.BOOL:
                bools.append(pos)
            elif p.kind is Kind.CATEGORICAL:
                blocks.append((sl.start, sl.stop))
            pos += p.width
        b = np.array(bounds, dtype=float)
        lower, upper = b[:, 0].copy(), b[:, 1].copy()
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "slices", tuple(slices))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "_int_lin", np.array(int_lin, dtype=int))
        object.__setattr__(self, "_int_log", np.array(int_log, dtype=int))
        object.__setattr__(self, "_bools", np.array(bools, dtype=int))
        object.__setattr__(self, "_blocks", tuple(blocks))

    def __hash__(self) -> int:
        return hash(self.params)

    @property
    def warped_dim(self) -> int:
        return self.lower.size

    @property
    def bounds(self) -> np.ndarray:
        """``(warped_dim, 2)`` array of warped bounds."""
        return np.column_stack([self.lower, self.upper])

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def is_continuous(self) -> bool:
        return all(p.kind is Kind.REAL for p in self.params)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParameterSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    # -- validation -------------------------------------------------------

    def validate(self, assignment: Mapping[str, Any]) -> dict[str, Any]:
        known = set(self.names)
        unknown = [k for k in assignment if k not in known]
        if unknown:
            raise ValidationError(f"unknown parameter {unknown[0]!r}")
        out = {}
        for p in self.params:
            if p.name not in assignment:
                raise ValidationError(f"missing parameter {p.name!r}")
            out[p.name] = p.validate(assignment[p.name])
        return out

    def _check_points(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        if x.shape[-1:] != (self.warped_dim,):
            raise ValidationError(
                f"expected warped points with {self.warped_dim} coordinates, got shape {x.shape}"
            )
        return x

    def clip(self, points) -> np.ndarray:
        x = self._check_points(points)
        return np.clip(x, self.lower, self.upper)

    # -- maps ---------------------------------------------------------------

    def warp(self, assignment: Mapping[str, Any]) -> np.ndarray:
        """Map a native assignment to its warped point."""
        a = self.validate(assignment)
        out = np.zeros(self.warped_dim)
        for p, sl in zip(self.params, self.slices):
            v = a[p.name]
            if p.kind is Kind.CATEGORICAL:
                out[sl.start + p.categories.index(v)] = 1.0
            elif p.kind is Kind.BOOL:
                out[sl.start] = 1.0 if v else 0.0
            else:
                out[sl.start] = p._warp_scalar(v)
        return out

    def warp_many(self, assignments: Sequence[Mapping[str, Any]]) -> np.ndarray:
        return np.array([self.warp(a) for a in assignments]).reshape(-1, self.warped_dim)

    def unwarp(self, point) -> dict[str, Any]:
        """Decode a warped point (rounding discrete dimensions) to native values."""
        x = self.clip(point)
        if x.ndim != 1:
            raise ValidationError(f"unwarp expects a single point, got shape {x.shape}")
        out: dict[str, Any] = {}
        for p, sl in zip(self.params, self.slices):
            if p.kind is Kind.CATEGORICAL:
                out[p.name] = p.categories[int(np.argmax(x[sl]))]
            elif p.kind is Kind.BOOL:
                out[p.name] = bool(round_half_away(x[sl.start]) >= 1.0)
            else:
                v = 10.0 ** x[sl.start] if p.space is ConfigSpace.LOG else float(x[sl.start])
                if p.kind is Kind.INT:
                    v = int(min(max(round_half_away(v), p.low), p.high))
                else:
                    v = float(min(max(v, p.low), p.high))
                out[p.name] = v
        return out

    def coerce(self, points) -> np.ndarray:
        """Snap warped points to the canonical representative of their cell.

        Accepts a single point or an ``(m, warped_dim)`` array.  Real
        coordinates are only clipped; integer coordinates are rounded (in
        native units for log space), each categorical block becomes one-hot
        at its argmax (lowest index wins ties) and booleans are rounded and
        clipped to ``{0, 1}``.
        """
        x = self.clip(points).copy()
        if self._int_lin.size:
            x[..., self._int_lin] = round_half_away(x[..., self._int_lin])
        if self._int_log.size:
            x[..., self._int_log] = np.log10(round_half_away(10.0 ** x[..., self._int_log]))
        if self._bools.size:
            x[..., self._bools] = np.clip(round_half_away(x[..., self._bools]), 0.0, 1.0)
        for start, stop in self._blocks:
            block = x[..., start:stop]
            hot = np.argmax(block, axis=-1)
            block[...] = 0.0
            np.put_along_axis(block, hot[..., None], 1.0, axis=-1)
        return x

    # -- sampling -------------------------------------------------------------

    def sample_warped(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points in the warped box (not coerced)."""
        return rng.uniform(self.lower, self.upper, size=(n, self.warped_dim))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {"params": [p.to_dict() for p in self.params]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SearchSpace":
        if not isinstance(d, Mapping) or "params" not in d:
            raise ValidationError("search space document needs a 'params' list")
        return cls([ParameterSpec.from_dict(p) for p in d["params"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SearchSpace":
        return cls.from_dict(json.loads(text))
