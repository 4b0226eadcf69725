import numpy as np
import pytest

from segsca.grid import CityConfig, GridCell, GroupScheme, UrbanArea, generate_synthetic_city

TWO = GroupScheme(("focal", "other"), ("focal",), "two")


def make_area(rows, fua_id="T", country="XX", groups=("focal", "other"), core=()):
    """rows: (x, y, counts...) tuples; cell ids follow input order."""
    cells = [GridCell(f"k{i:03d}", x, y, tuple(c)) for i, (x, y, *c) in enumerate(rows)]
    return UrbanArea(fua_id, fua_id, country, groups, tuple(cells), frozenset(core))


@pytest.fixture
def line3():
    # totals 100, focal 20 / 50 / 80 at x = 0, 1, 2 km
    return make_area([(0, 0, 20, 80), (1, 0, 50, 50), (2, 0, 80, 20)])


@pytest.fixture
def pair2():
    return make_area([(0, 0, 50, 50), (1, 0, 0, 100)])


def random_city(seed, pattern="random", nx=None, ny=None):
    rng = np.random.default_rng(seed)
    cfg = CityConfig(
        nx=nx or int(rng.integers(2, 9)),
        ny=ny or int(rng.integers(2, 9)),
        total_population=float(rng.uniform(1e3, 1e6)),
        focal_share=float(rng.uniform(0.05, 0.6)),
        pattern=pattern,
        core_radius_km=2.0,
        fua_id=f"R{seed}",
    )
    return generate_synthetic_city(cfg, seed)
