"""Synthetic inputs for end-to-end runs: multi-area grids and covariate panels."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError
from .grid import PATTERNS, CityConfig, UrbanArea, generate_synthetic_city
from .sca import VariableMeta


def synthetic_areas(n_fua: int, n_countries: int, seed: int, nx: int = 8, ny: int = 8,
                    pattern: str = "random") -> list[UrbanArea]:
    """``n_fua`` synthetic cities spread over ``n_countries`` countries.

    ``pattern="mixed"`` cycles through all generator patterns.
    """
    if n_fua < 1 or n_countries < 1:
        raise ConfigError("need at least one area and one country")
    if pattern != "mixed" and pattern not in PATTERNS:
        raise ConfigError(f"unknown pattern {pattern!r}")
    rng = np.random.default_rng(seed)
    children = np.random.SeedSequence(seed).spawn(n_fua)
    areas = []
    for i in range(n_fua):
        pat = PATTERNS[i % len(PATTERNS)] if pattern == "mixed" else pattern
        cfg = CityConfig(
            nx=nx, ny=ny,
            total_population=float(rng.lognormal(11.0, 0.8)),
            focal_share=float(rng.uniform(0.05, 0.4)),
            pattern=pat,
            core_radius_km=max(nx, ny) / 4,
            fua_id=f"F{i + 1:04d}",
            country=f"C{i % n_countries + 1:02d}",
        )
        areas.append(generate_synthetic_city(cfg, int(children[i].generate_state(1)[0])))
    return areas


def _country_codes(n_rows, n_countries, rng):
    if n_countries < 2 or n_rows < 2 * n_countries:
        raise ConfigError("need at least two countries with two rows each")
    codes = np.arange(n_rows) % n_countries
    rng.shuffle(codes)
    return codes


def _z(v):
    return (v - v.mean()) / v.std()


def synthetic_panel(
    n_rows: int = 717,
    n_countries: int = 30,
    n_null: int = 10,
    effects: Mapping[str, float] | None = None,
    seed: int = 0,
    n_base: int = 5,
    country_effects: Mapping[str, float] | None = None,
    n_country_null: int = 0,
    noise: float = 1.0,
    countries: Sequence[str] | None = None,
) -> tuple[pd.DataFrame, list[VariableMeta]]:
    """Area-level covariates and an outcome with known effects.

    Candidates ``v###`` (no effect) and the keys of ``effects`` (the given
    effect per standard deviation) share the subgroup ``focal``; three
    auxiliary candidates form the subgroups ``aux_a`` (two variables) and
    ``aux_b``.  Country-level candidates, when requested, each get their own
    subgroup.  ``countries`` fixes the country label of every row (and
    overrides ``n_rows``/``n_countries``).  Returns the table and its catalog.
    """
    effects = dict(effects or {})
    country_effects = dict(country_effects or {})
    rng = np.random.default_rng(seed)
    if countries is not None:
        labels, codes = np.unique(np.asarray(countries), return_inverse=True)
        n_rows, n_countries = len(codes), len(labels)
        country_labels = [str(c) for c in np.asarray(countries)]
    else:
        codes = _country_codes(n_rows, n_countries, rng)
        country_labels = [f"C{c + 1:02d}" for c in codes]
    shift = rng.normal(0.0, 0.5, (n_countries, n_base))
    base = rng.normal(size=(n_rows, n_base)) + shift[codes]
    aux = rng.normal(size=(n_rows, 3))
    frame = {
        "fua_id": [f"F{i + 1:04d}" for i in range(n_rows)],
        "country": country_labels,
    }
    catalog = [VariableMeta("y", "fua", "outcome", "", "outcome")]
    for j in range(n_base):
        frame[f"base{j + 1}"] = base[:, j]
        catalog.append(VariableMeta(f"base{j + 1}", "fua", "population", "base", "base_control"))
    for j, (name, sub) in enumerate((("aux_a1", "aux_a"), ("aux_a2", "aux_a"), ("aux_b1", "aux_b"))):
        frame[name] = aux[:, j]
        catalog.append(VariableMeta(name, "fua", "auxiliary", sub, "candidate"))

    y = 0.5 * base[:, 0] - 0.3 * base[:, 1]
    y += rng.normal(0.0, 1.0, n_countries)[codes] + rng.normal(0.0, noise, n_rows)

    focal_names = [f"v{j + 1:03d}" for j in range(n_null)] + list(effects)
    for name in focal_names:
        # variables with an effect stay independent of the other regressors, since
        # specs for the null variables never include them (same subgroup)
        if name in effects:
            v = rng.normal(size=n_rows)
        else:
            v = 0.3 * base[:, 0] + 0.3 * aux[:, 0] + rng.normal(size=n_rows)
        frame[name] = v
        y += effects.get(name, 0.0) * _z(v)
        catalog.append(VariableMeta(name, "fua", "focal", "focal", "candidate"))

    country_names = [f"w{j + 1:02d}" for j in range(n_country_null)] + list(country_effects)
    for name in country_names:
        w = rng.normal(size=n_countries)[codes]
        frame[name] = w
        y += country_effects.get(name, 0.0) * _z(w)
        catalog.append(VariableMeta(name, "country", "country", name, "country_candidate"))

    frame["y"] = y
    cols = ["fua_id", "country", "y"] + [k for k in frame if k not in ("fua_id", "country", "y")]
    return pd.DataFrame(frame)[cols], catalog
