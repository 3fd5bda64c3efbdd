import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixbo.kernels import (
    JITTER,
    Family,
    KernelConfig,
    kernel_eval,
    kernel_matrix,
)
from mixbo.space import Bool, Categorical, Int, Real, SearchSpace, ValidationError

FAMILIES = [Family.SQUARED_EXPONENTIAL, Family.MATERN52]


def cfg(family=Family.MATERN52, disc="naive", ls=None, s2=1.0, noise=0.0):
    return KernelConfig(family, disc, ls, s2, noise)


LINE = SearchSpace([Real("x", -10.0, 10.0)])
MIXED = SearchSpace([
    Real("a", -3.0, 3.0),
    Int("k", 0, 9),
    Int("n", 1, 100, log=True),
    Categorical("c", ["p", "q", "r"]),
    Bool("f"),
])


@pytest.mark.parametrize("family", FAMILIES)
def test_self_covariance_is_signal_variance(family):
    assert kernel_eval(cfg(family), LINE, [0.3], [0.3]) == 1.0
    assert kernel_eval(cfg(family, s2=2.5), LINE, [0.3], [0.3]) == 2.5


def test_se_unit_distance():
    assert kernel_eval(cfg(Family.SQUARED_EXPONENTIAL, ls=[1.0]), LINE, [0.0], [1.0]) == pytest.approx(
        math.exp(-0.5), abs=1e-15
    )
    assert math.exp(-0.5) == pytest.approx(0.606531, abs=1e-6)


def test_matern_unit_distance():
    expected = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    assert expected == pytest.approx(0.523994, abs=1e-6)
    assert kernel_eval(cfg(Family.MATERN52, ls=[1.0]), LINE, [0.0], [1.0]) == pytest.approx(expected, abs=1e-15)


def test_ard_scaled_distance():
    sp = SearchSpace([Real("x", 0, 10), Real("y", 0, 10)])
    # r^2 = (3/2)^2 + (4/4)^2 = 3.25
    k = kernel_eval(cfg(Family.SQUARED_EXPONENTIAL, ls=[2.0, 4.0]), sp, [0, 0], [3, 4])
    assert k == pytest.approx(math.exp(-0.5 * 3.25), rel=1e-14)


def test_complex_same_int_cell():
    sp = SearchSpace([Int("k", 0, 9)])
    c = cfg(disc="complex", s2=1.7)
    assert kernel_eval(c, sp, [2.3], [1.8]) == 1.7
    assert kernel_eval(cfg(disc="naive", s2=1.7), sp, [2.3], [1.8]) < 1.7


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        kernel_eval(cfg(), LINE, [0.0, 1.0], [0.0, 1.0])


class TestKernelMatrix:
    def test_single_point(self):
        c = cfg(s2=2.0, noise=0.1)
        K = kernel_matrix(c, LINE, [[0.5]])
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(2.0 + 0.1 + JITTER * 2.0, rel=1e-15)

    def test_identical_points_complex(self):
        sp = SearchSpace([Int("k", 0, 9)])
        K = kernel_matrix(cfg(disc="complex", s2=1.3), sp, [[2.2], [1.9]])
        assert K[0, 1] == K[1, 0] == 1.3

    @pytest.mark.parametrize("family", FAMILIES)
    def test_positive_definite(self, family):
        rng = np.random.default_rng(3)
        X = MIXED.sample_warped(25, rng)
        K = kernel_matrix(cfg(family, disc="complex", ls=[0.5] * MIXED.warped_dim), MIXED, X)
        np.testing.assert_array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() > 0
        np.linalg.cholesky(K)

    def test_empty(self):
        with pytest.raises(ValidationError):
            kernel_matrix(cfg(), LINE, np.zeros((0, 1)))


def test_config_validation():
    with pytest.raises(ValidationError):
        KernelConfig(signal_variance=0.0)
    with pytest.raises(ValidationError):
        KernelConfig(noise_variance=-1.0)
    with pytest.raises(ValidationError):
        KernelConfig(length_scales=(1e3,))


# -- properties -------------------------------------------------------------

pts = st.lists(st.floats(-3, 3, allow_nan=False), min_size=MIXED.warped_dim, max_size=MIXED.warped_dim)


@settings(max_examples=150, deadline=None)
@given(pts, pts, st.sampled_from(FAMILIES), st.sampled_from(["naive", "complex"]),
       st.floats(0.05, 20), st.floats(0.1, 5))
def test_symmetric_and_bounded(x1, x2, family, disc, ls, s2):
    c = cfg(family, disc, [ls] * MIXED.warped_dim, s2)
    k12 = kernel_eval(c, MIXED, x1, x2)
    assert k12 == kernel_eval(c, MIXED, x2, x1)
    assert k12 <= s2
    assert k12 >= 0
    # strictly positive whenever not underflowed
    if ls > 1:
        assert k12 > 0


@pytest.mark.parametrize("family", FAMILIES)
def test_complex_cell_invariance(family):
    rng = np.random.default_rng(0)
    c = cfg(family, "complex", ls=[0.7] * MIXED.warped_dim)
    for _ in range(200):
        x1 = MIXED.sample_warped(1, rng)[0]
        cell = MIXED.coerce(x1)
        # jitter discrete coordinates while staying inside the cell
        x2 = x1.copy()
        x2[0] = x1[0]
        x2[1] = cell[1] + rng.uniform(-0.49, 0.49)
        x2[3:6] = cell[3:6] * rng.uniform(0.6, 1.0) + (1 - cell[3:6]) * rng.uniform(0, 0.5, 3)
        x2[6] = cell[6] + (rng.uniform(0, 0.49) if cell[6] == 0 else -rng.uniform(0, 0.49))
        assert np.array_equal(MIXED.coerce(x2)[[1, 3, 4, 5, 6]], cell[[1, 3, 4, 5, 6]])
        x2[2] = x1[2]
        z = MIXED.sample_warped(1, rng)[0]
        assert kernel_eval(c, MIXED, x1, z) == kernel_eval(c, MIXED, x2, z)


@pytest.mark.parametrize("family", FAMILIES)
def test_ard_large_length_scale_ignores_dimension(family):
    sp = SearchSpace([Real("x", 0, 1), Real("y", 0, 1)])
    x = np.array([0.2, 0.3])
    xd = x + np.array([0.0, 0.5])
    gaps = []
    for ls in [0.1, 1.0, 10.0, 100.0]:
        gaps.append(abs(kernel_eval(cfg(family, ls=[1.0, ls]), sp, x, xd) - 1.0))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-4


def test_families_agree_at_zero_and_decrease():
    r = np.linspace(0, 5, 51)
    for family in FAMILIES:
        vals = [kernel_eval(cfg(family, ls=[1.0]), LINE, [0.0], [d]) for d in r]
        assert vals[0] == 1.0
        assert all(a > b for a, b in zip(vals, vals[1:]))
