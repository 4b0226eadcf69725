import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segsca.errors import ConfigError
from segsca.smoothing import NeighbourIndex, SmoothingSpec, smooth

from conftest import make_area, random_city


def brute_smooth(area, radius):
    xy, counts = area.coords, area.counts
    out = np.zeros_like(counts)
    for p in range(len(area)):
        d2 = ((xy - xy[p]) ** 2).sum(axis=1)
        out[p] = counts[d2 <= radius * radius].sum(axis=0)
    return out


def test_line_radius_one(line3):
    props = smooth(line3, SmoothingSpec(1.0)).proportions[:, 0]
    assert props.tolist() == pytest.approx([0.35, 0.50, 0.65], abs=1e-15)


def test_below_spacing_is_own_cell(line3):
    env = smooth(line3, SmoothingSpec(0.4))
    assert np.array_equal(env.group_counts, line3.counts)


def test_boundary_is_inclusive():
    area = make_area([(0, 0, 1, 1), (3, 4, 2, 2)])
    assert smooth(area, SmoothingSpec(5.0)).totals.tolist() == [6.0, 6.0]
    assert smooth(area, SmoothingSpec(4.999)).totals.tolist() == [2.0, 4.0]


def test_uniform_composition_constant():
    area = make_area([(x, y, 3 * (x + 1), 7 * (x + 1)) for x in range(4) for y in range(3)])
    for r in (0.5, 1.0, 2.5, 10.0):
        props = smooth(area, SmoothingSpec(r)).proportions
        assert np.allclose(props[:, 0], 0.3, atol=1e-15)


def test_empty_neighbourhood_is_nan():
    area = make_area([(0, 0, 0, 0), (5, 0, 1, 1)])
    props = smooth(area, SmoothingSpec(1.0)).proportions
    assert np.isnan(props[0]).all()
    assert props[1].tolist() == [0.5, 0.5]


def test_index_reused_for_smaller_radius():
    city = random_city(4, nx=6, ny=6)
    index = NeighbourIndex(city, 3.0)
    for r in (0.5, 1.0, 2.0, 3.0):
        a = smooth(city, SmoothingSpec(r), index=index).group_counts
        assert np.array_equal(a, smooth(city, SmoothingSpec(r)).group_counts)
    with pytest.raises(ConfigError):
        index.weights(3.5)


def test_bad_spec():
    with pytest.raises(ConfigError):
        SmoothingSpec(0.0)
    with pytest.raises(ConfigError):
        SmoothingSpec(1.0, kernel="gaussian")
    with pytest.raises(ConfigError):
        SmoothingSpec(1.0, boundary_rule="wrap")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), radius=st.floats(0.1, 6.0))
def test_matches_brute_force(seed, radius):
    city = random_city(seed)
    got = smooth(city, SmoothingSpec(radius)).group_counts
    assert np.allclose(got, brute_smooth(city, radius), rtol=1e-12, atol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_irregular_points(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    xy = rng.uniform(0, 10, (n, 2))
    counts = rng.uniform(0, 100, (n, 2))
    counts[0] += 1
    area = make_area([(x, y, a, b) for (x, y), (a, b) in zip(xy, counts)])
    r = float(rng.uniform(0.1, 5))
    assert np.allclose(smooth(area, SmoothingSpec(r)).group_counts, brute_smooth(area, r), rtol=1e-12)
