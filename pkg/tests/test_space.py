import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixbo.space import (
    Bool,
    Categorical,
    Int,
    ParameterSpec,
    Real,
    SearchSpace,
    ValidationError,
    round_half_away,
)


@pytest.fixture
def mixed_space():
    return SearchSpace([
        Real("a", -3.0, 3.0),
        Real("b", 1.0, 1000.0, log=True),
        Int("k", 0, 10),
        Int("n", 1, 1000, log=True),
        Categorical("c", ["x", "y", "z"]),
        Bool("f"),
    ])


class TestConstruction:
    def test_layout(self, mixed_space):
        assert mixed_space.warped_dim == 1 + 1 + 1 + 1 + 3 + 1
        np.testing.assert_array_equal(mixed_space.lower, [-3, 0, 0, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(mixed_space.upper, [3, 3, 10, 3, 1, 1, 1, 1])

    @pytest.mark.parametrize("doc", [
        dict(name="r", kind="real", low=1.0, high=1.0),
        dict(name="r", kind="real", low=0.0, high=1.0, space="log"),
        dict(name="i", kind="int", low=3, high=2),
        dict(name="i", kind="int", low=0.5, high=2),
        dict(name="c", kind="cat", categories=["a"]),
        dict(name="c", kind="cat", categories=["a", "a"]),
        dict(name="r", kind="real", low=0.1, high=1.0, space="logit"),
        dict(name="r", kind="real", low=0.1, high=1.0, space="bilog"),
    ])
    def test_invalid_parameters(self, doc):
        with pytest.raises(ValidationError):
            ParameterSpec.from_dict(doc)

    def test_unsupported_space_message(self):
        with pytest.raises(ValidationError, match="logit"):
            ParameterSpec("lr", "real", 0.1, 0.9, space="logit")

    def test_int_allows_equal_bounds(self):
        assert Int("k", 3, 3).warped_bounds() == [(3.0, 3.0)]

    def test_duplicate_names(self):
        with pytest.raises(ValidationError, match="duplicate"):
            SearchSpace([Real("a", 0, 1), Bool("a")])

    def test_json_roundtrip(self, mixed_space):
        text = mixed_space.to_json()
        doc = json.loads(text)
        assert [p["kind"] for p in doc["params"]] == ["real", "real", "int", "int", "cat", "bool"]
        assert doc["params"][1]["space"] == "log"
        assert SearchSpace.from_json(text) == mixed_space


class TestWarp:
    def test_log_real(self):
        sp = SearchSpace([Real("x", 1.0, 1000.0, log=True)])
        assert sp.warp({"x": 100.0}).tolist() == [2.0]

    def test_one_hot(self):
        sp = SearchSpace([Categorical("c", ["a", "b", "c"])])
        assert sp.warp({"c": "b"}).tolist() == [0.0, 1.0, 0.0]

    def test_bool(self):
        sp = SearchSpace([Bool("f")])
        assert sp.warp({"f": True}).tolist() == [1.0]
        assert sp.warp({"f": False}).tolist() == [0.0]

    @pytest.mark.parametrize("assignment,match", [
        ({"a": 0.0}, "missing"),
        ({"a": 0.0, "b": 10.0, "k": 1, "n": 5, "c": "x", "f": True, "zz": 1}, "zz"),
        ({"a": 5.0, "b": 10.0, "k": 1, "n": 5, "c": "x", "f": True}, "'a'"),
        ({"a": 0.0, "b": 10.0, "k": 1.5, "n": 5, "c": "x", "f": True}, "'k'"),
        ({"a": 0.0, "b": 10.0, "k": 1, "n": 5, "c": "w", "f": True}, "'c'"),
        ({"a": 0.0, "b": 10.0, "k": 1, "n": 5, "c": "x", "f": 1}, "'f'"),
    ])
    def test_validation_names_parameter(self, mixed_space, assignment, match):
        with pytest.raises(ValidationError, match=match):
            mixed_space.warp(assignment)


class TestUnwarp:
    def test_log_inverse(self):
        sp = SearchSpace([Real("x", 1.0, 1000.0, log=True)])
        assert sp.unwarp([2.0])["x"] == pytest.approx(100.0, rel=1e-14)

    def test_argmax_decode(self):
        sp = SearchSpace([Categorical("c", ["a", "b", "c"])])
        assert sp.unwarp([0.2, 0.7, 0.5]) == {"c": "b"}

    def test_int_rounding(self):
        sp = SearchSpace([Int("k", 0, 10)])
        assert sp.unwarp([3.4]) == {"k": 3}
        assert sp.unwarp([3.5]) == {"k": 4}

    def test_out_of_bounds_clipped(self, mixed_space):
        a = mixed_space.unwarp([9.0, -1.0, 11.2, 3.5, 2.0, -1.0, 0.0, 7.0])
        assert a == {"a": 3.0, "b": 1.0, "k": 10, "n": 1000, "c": "x", "f": True}

    def test_length_mismatch(self, mixed_space):
        with pytest.raises(ValidationError):
            mixed_space.unwarp([0.0, 1.0])

    def test_tie_lowest_index(self):
        sp = SearchSpace([Categorical("c", ["a", "b", "c"])])
        assert sp.unwarp([0.5, 0.5, 0.5]) == {"c": "a"}


class TestCoerce:
    def test_int_log_formula(self):
        sp = SearchSpace([Int("n", 1, 100, log=True)])
        # 10**0.4 = 2.51..., rounds to 3
        assert sp.coerce([0.4])[0] == pytest.approx(0.47712125471966244, abs=1e-12)

    def test_bool_round_and_clip(self):
        sp = SearchSpace([Bool("f")])
        assert sp.coerce([0.7]).tolist() == [1.0]
        assert sp.coerce([-0.2]).tolist() == [0.0]

    def test_categorical_block(self):
        sp = SearchSpace([Categorical("c", ["a", "b", "c"])])
        assert sp.coerce([0.2, 0.7, 0.5]).tolist() == [0.0, 1.0, 0.0]

    def test_real_identity(self):
        sp = SearchSpace([Real("x", 0, 1), Real("y", 1, 10, log=True)])
        p = np.array([0.1234, 0.5678])
        np.testing.assert_array_equal(sp.coerce(p), p)

    def test_int_linear(self):
        sp = SearchSpace([Int("k", -5, 5)])
        assert sp.coerce([[2.3], [-2.5], [1.8]]).ravel().tolist() == [2.0, -3.0, 2.0]

    def test_tie_deterministic(self):
        sp = SearchSpace([Categorical("c", ["a", "b", "c"])])
        assert sp.coerce([0.0, 0.9, 0.9]).tolist() == [0.0, 1.0, 0.0]

    def test_batch_matches_single(self, mixed_space):
        rng = np.random.default_rng(0)
        X = mixed_space.sample_warped(20, rng)
        batch = mixed_space.coerce(X)
        for x, cx in zip(X, batch):
            np.testing.assert_array_equal(mixed_space.coerce(x), cx)


def test_round_half_away():
    assert round_half_away([0.5, 1.5, 2.5, -0.5, -1.5, 0.49]).tolist() == [1, 2, 3, -1, -2, 0]


# -- properties -------------------------------------------------------------

def _assignments(space):
    parts = {}
    for p in space.params:
        if p.kind.value == "real":
            parts[p.name] = st.floats(p.low, p.high, allow_nan=False)
        elif p.kind.value == "int":
            parts[p.name] = st.integers(p.low, p.high)
        elif p.kind.value == "cat":
            parts[p.name] = st.sampled_from(p.categories)
        else:
            parts[p.name] = st.booleans()
    return st.fixed_dictionaries(parts)


SPACE = SearchSpace([
    Real("a", -3.0, 3.0),
    Real("b", 1e-3, 10.0, log=True),
    Int("k", -4, 7),
    Int("n", 1, 1000, log=True),
    Categorical("c", ["x", "y", "z", "w"]),
    Bool("f"),
])


@settings(max_examples=200, deadline=None)
@given(_assignments(SPACE))
def test_roundtrip(a):
    back = SPACE.unwarp(SPACE.warp(a))
    for p in SPACE.params:
        if p.kind.value == "real":
            assert math.isclose(back[p.name], a[p.name], rel_tol=1e-12, abs_tol=1e-12)
        else:
            assert back[p.name] == a[p.name]


@settings(max_examples=200, deadline=None)
@given(_assignments(SPACE))
def test_warp_outputs_canonical(a):
    w = SPACE.warp(a)
    np.testing.assert_allclose(SPACE.coerce(w), w, rtol=0, atol=1e-12)


def test_roundtrip_exhaustive_discrete_grid():
    sp = SearchSpace([Int("k", 0, 6), Int("n", 1, 40, log=True), Categorical("c", "pqr"), Bool("f")])
    for k, n, c, f in itertools.product(range(7), range(1, 41), "pqr", (False, True)):
        a = {"k": k, "n": n, "c": c, "f": f}
        w = sp.warp(a)
        assert sp.unwarp(w) == a
        np.testing.assert_array_equal(sp.coerce(w), w)


points = st.lists(st.floats(-20, 20, allow_nan=False), min_size=SPACE.warped_dim, max_size=SPACE.warped_dim)


@settings(max_examples=300, deadline=None)
@given(points)
def test_coerce_idempotent_and_consistent(p):
    c = SPACE.coerce(p)
    np.testing.assert_array_equal(SPACE.coerce(c), c)
    assert SPACE.unwarp(p) == SPACE.unwarp(c)
    block = c[SPACE.slices[4]]
    assert sorted(block.tolist()) == [0.0, 0.0, 0.0, 1.0]
    assert np.all(c >= SPACE.lower) and np.all(c <= SPACE.upper)
