"""Local environments: population counts aggregated within a radius of each cell."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import ConfigError
from .grid import UrbanArea

KERNELS = ("uniform-disc",)
BOUNDARY_RULES = ("truncate-at-area",)


@dataclass(frozen=True)
class SmoothingSpec:
    radius_km: float = 1.0
    kernel: str = "uniform-disc"
    boundary_rule: str = "truncate-at-area"

    def __post_init__(self):
        if not (self.radius_km > 0 and np.isfinite(self.radius_km)):
            raise ConfigError(f"radius must be positive, got {self.radius_km!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unsupported kernel {self.kernel!r}")
        if self.boundary_rule not in BOUNDARY_RULES:
            raise ConfigError(f"unsupported boundary rule {self.boundary_rule!r}")


class NeighbourIndex:
    """Cell pairs within ``max_radius_km`` of each other, reusable for smaller radii.

    Pair search goes through a k-d tree; membership is then decided exactly
    on squared centroid distances (boundary inclusive).
    """

    def __init__(self, area: UrbanArea, max_radius_km: float):
        self.area = area
        self.max_radius_km = float(max_radius_km)
        coords = area.coords
        tree = cKDTree(coords)
        # small slack so that rounding in the tree never drops a boundary pair
        pairs = tree.query_pairs(self.max_radius_km * (1 + 1e-9) + 1e-12, output_type="ndarray")
        n = len(area)
        i = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
        j = np.concatenate([np.arange(n), pairs[:, 1], pairs[:, 0]])
        diff = coords[i] - coords[j]
        d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2
        order = np.lexsort((j, i))
        self._i, self._j, self._d2 = i[order], j[order], d2[order]

    def weights(self, radius_km: float) -> sparse.csr_matrix:
        """0/1 matrix W with W[p, q] = 1 iff d(p, q) <= radius; columns sorted per row."""
        if radius_km > self.max_radius_km:
            raise ConfigError(f"radius {radius_km} exceeds index radius {self.max_radius_km}")
        keep = self._d2 <= radius_km * radius_km
        n = len(self.area)
        w = sparse.csr_matrix(
            (np.ones(int(keep.sum())), (self._i[keep], self._j[keep])), shape=(n, n)
        )
        w.sort_indices()
        return w


@dataclass(frozen=True)
class LocalEnvironment:
    """Smoothed totals and group counts for each cell of an area."""

    area: UrbanArea
    spec: SmoothingSpec
    group_counts: np.ndarray  # (cells, groups)

    @cached_property
    def totals(self) -> np.ndarray:
        return self.group_counts.sum(axis=1)

    @cached_property
    def proportions(self) -> np.ndarray:
        """Local group proportions; rows with zero smoothed population are NaN."""
        tot = self.totals[:, None]
        out = np.full_like(self.group_counts, np.nan)
        np.divide(self.group_counts, tot, out=out, where=tot > 0)
        return out


def smooth(area: UrbanArea, spec: SmoothingSpec, index: NeighbourIndex | None = None) -> LocalEnvironment:
    """Sum each group's counts over all cells of ``area`` within ``spec.radius_km``.

    Only cells of the area contribute.  Neighbours are accumulated in
    ``cell_id`` order, so the result does not depend on input ordering.
    """
    if index is None or index.area is not area:
        index = NeighbourIndex(area, spec.radius_km)
    w = index.weights(spec.radius_km)
    return LocalEnvironment(area, spec, np.asarray(w @ area.counts))
