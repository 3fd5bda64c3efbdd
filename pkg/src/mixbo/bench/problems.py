"""Synthetic objectives with known optima."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from ..space import Bool, Categorical, Int, Real, SearchSpace


@dataclass(frozen=True)
class Problem:
    name: str
    space: SearchSpace
    evaluate: Callable[[Mapping[str, Any]], float]
    known_optimum: float | None
    optimum_assignment: dict | None = None

    def __call__(self, assignment: Mapping[str, Any]) -> float:
        return float(self.evaluate(assignment))


def _vec(a: Mapping[str, Any], names) -> np.ndarray:
    return np.array([a[n] for n in names], dtype=float)


def sphere(dim: int = 5) -> Problem:
    names = [f"x{i}" for i in range(dim)]
    space = SearchSpace([Real(n, -5.0, 5.0) for n in names])
    return Problem(
        f"sphere{dim}", space,
        lambda a: float((_vec(a, names) ** 2).sum()),
        0.0, {n: 0.0 for n in names},
    )


def branin_fn(x1: float, x2: float) -> float:
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


def branin() -> Problem:
    space = SearchSpace([Real("x1", -5.0, 10.0), Real("x2", 0.0, 15.0)])
    return Problem(
        "branin", space, lambda a: branin_fn(a["x1"], a["x2"]),
        0.39788735772973816, {"x1": math.pi, "x2": 2.275},
    )


def rastrigin(dim: int = 4) -> Problem:
    names = [f"x{i}" for i in range(dim)]
    space = SearchSpace([Real(n, -5.12, 5.12) for n in names])

    def f(a):
        x = _vec(a, names)
        return float(10 * dim + (x**2 - 10 * np.cos(2 * np.pi * x)).sum())

    return Problem(f"rastrigin{dim}", space, f, 0.0, {n: 0.0 for n in names})


def mixed() -> Problem:
    """Two reals (one log-scaled), two log-scaled integers and a flag.

    The flag moves the optimum of ``a`` and adds a constant penalty when
    off; the global optimum 0 sits at a=1, b=0.1, n1=100, n2=8, flag=True.
    """
    space = SearchSpace([
        Real("a", -3.0, 3.0),
        Real("b", 1e-3, 10.0, log=True),
        Int("n1", 1, 1000, log=True),
        Int("n2", 1, 64, log=True),
        Bool("flag"),
    ])

    def f(p):
        center = 1.0 if p["flag"] else -1.0
        return (
            (p["a"] - center) ** 2
            + (math.log10(p["b"]) + 1.0) ** 2
            + (math.log10(p["n1"]) - 2.0) ** 2
            + 0.25 * (math.log2(p["n2"]) - 3.0) ** 2
            + (0.0 if p["flag"] else 0.5)
        )

    opt = {"a": 1.0, "b": 0.1, "n1": 100, "n2": 8, "flag": True}
    return Problem("mixed", space, f, 0.0, opt)


CATEGORY_BOWLS = {
    "red": (1.0, (1.0, 1.0)),
    "green": (0.6, (-1.0, 1.0)),
    "blue": (0.0, (0.5, -1.0)),
    "black": (0.3, (-1.0, -1.0)),
}


def categorical() -> Problem:
    """Four categories, each a quadratic bowl with its own offset and centre."""
    space = SearchSpace([
        Categorical("color", list(CATEGORY_BOWLS)),
        Real("x", -2.0, 2.0),
        Real("y", -2.0, 2.0),
    ])

    def f(p):
        offset, (cx, cy) = CATEGORY_BOWLS[p["color"]]
        return offset + (p["x"] - cx) ** 2 + (p["y"] - cy) ** 2

    return Problem("categorical", space, f, 0.0, {"color": "blue", "x": 0.5, "y": -1.0})


def builtin_problems() -> list[Problem]:
    return [sphere(5), branin(), rastrigin(4), mixed(), categorical()]


def get_problem(name: str) -> Problem:
    for p in builtin_problems():
        if p.name == name:
            return p
    raise KeyError(f"unknown problem {name!r}; choose from {[p.name for p in builtin_problems()]}")
