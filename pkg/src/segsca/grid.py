"""Gridded population data: cells, urban areas, ingestion and preprocessing.

Counts are real valued everywhere.  An :class:`UrbanArea` stores its cells in
canonical ``cell_id`` order, so every downstream computation is independent
of input row order.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateZoneError,
    SchemaError,
    ValidationError,
)

LOGGER = logging.getLogger(__name__)

DEFAULT_GROUPS = ("native", "eu_imm", "noneu_imm")

PATTERNS = ("uniform", "radial-gradient", "two-block", "random")


def _finite_nonneg(value, what):
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{what} is not finite: {value!r}")
    if value < 0:
        raise ValidationError(f"{what} is negative: {value!r}")
    return value


@dataclass(frozen=True)
class GridCell:
    """One grid cell: centroid in planar km and population counts by group."""

    cell_id: str
    x_km: float
    y_km: float
    counts: tuple[float, ...]
    male_count: float | None = None
    female_count: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x_km) and math.isfinite(self.y_km)):
            raise ValidationError(f"cell {self.cell_id}: non-finite centroid")
        counts = tuple(_finite_nonneg(c, f"cell {self.cell_id} count") for c in self.counts)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "x_km", float(self.x_km))
        object.__setattr__(self, "y_km", float(self.y_km))
        for name in ("male_count", "female_count"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _finite_nonneg(val, f"cell {self.cell_id} {name}"))

    @property
    def total(self) -> float:
        return math.fsum(self.counts)

    @property
    def has_sex_counts(self) -> bool:
        return self.male_count is not None and self.female_count is not None


@dataclass(frozen=True)
class GroupScheme:
    """Ordered group labels and the focal side of a two-group partition.

    Every group not listed in ``focal`` belongs to the reference side.
    """

    groups: tuple[str, ...]
    focal: tuple[str, ...]
    label: str = ""

    def __post_init__(self):
        groups = tuple(self.groups)
        focal = tuple(g for g in groups if g in set(self.focal))
        unknown = set(self.focal) - set(groups)
        if unknown:
            raise ConfigError(f"focal groups not in scheme: {sorted(unknown)}")
        if not focal:
            raise ConfigError("focal side of the partition is empty")
        if len(focal) == len(groups):
            raise ConfigError("reference side of the partition is empty")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "focal", focal)
        if not self.label:
            object.__setattr__(self, "label", "+".join(focal) + "|" + "+".join(self.reference))

    @property
    def reference(self) -> tuple[str, ...]:
        return tuple(g for g in self.groups if g not in self.focal)

    @property
    def focal_mask(self) -> np.ndarray:
        return np.array([g in self.focal for g in self.groups])

    def swapped(self) -> "GroupScheme":
        return GroupScheme(self.groups, self.reference, label=f"swap({self.label})")

    def two_group_counts(self, counts: np.ndarray) -> np.ndarray:
        """Collapse an (n, groups) count matrix into (n, 2) = [focal, reference]."""
        mask = self.focal_mask
        return np.column_stack([counts[:, mask].sum(axis=1), counts[:, ~mask].sum(axis=1)])


SCHEMES = {
    "immigrant": GroupScheme(DEFAULT_GROUPS, ("eu_imm", "noneu_imm"), "immigrant"),
    "eu": GroupScheme(DEFAULT_GROUPS, ("eu_imm",), "eu"),
    "noneu": GroupScheme(DEFAULT_GROUPS, ("noneu_imm",), "noneu"),
}


@dataclass(frozen=True)
class UrbanArea:
    """A functional urban area: named, country-tagged collection of cells."""

    fua_id: str
    name: str
    country_code: str
    groups: tuple[str, ...]
    cells: tuple[GridCell, ...]
    core_mask: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        cells = tuple(sorted(self.cells, key=lambda c: c.cell_id))
        if not cells:
            raise ValidationError(f"urban area {self.fua_id}: no cells")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "core_mask", frozenset(self.core_mask))
        ids = [c.cell_id for c in cells]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"urban area {self.fua_id}: duplicate cell ids")
        seen = set()
        for c in cells:
            if len(c.counts) != len(self.groups):
                raise ValidationError(
                    f"urban area {self.fua_id}: cell {c.cell_id} has {len(c.counts)} counts, "
                    f"expected {len(self.groups)}"
                )
            key = (c.x_km, c.y_km)
            if key in seen:
                raise ValidationError(
                    f"urban area {self.fua_id}: duplicate centroid ({c.x_km}, {c.y_km})"
                )
            seen.add(key)
        if not self.core_mask <= set(ids):
            raise ValidationError(f"urban area {self.fua_id}: core mask references unknown cells")
        if not self.total_population > 0:
            raise ValidationError(f"urban area {self.fua_id}: total population is zero")

    @cached_property
    def cell_ids(self) -> tuple[str, ...]:
        return tuple(c.cell_id for c in self.cells)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.array([[c.x_km, c.y_km] for c in self.cells], dtype=float)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([c.counts for c in self.cells], dtype=float).reshape(len(self.cells), -1)

    @cached_property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total_population(self) -> float:
        return float(np.sum([c.total for c in self.cells]))

    def __len__(self):
        return len(self.cells)

    def subset(self, cell_ids: Iterable[str], suffix: str = "") -> "UrbanArea":
        keep = set(cell_ids)
        return replace(
            self,
            fua_id=self.fua_id + suffix,
            cells=tuple(c for c in self.cells if c.cell_id in keep),
            core_mask=self.core_mask & keep,
        )

    def core(self) -> "UrbanArea":
        if not self.core_mask:
            raise ValidationError(f"urban area {self.fua_id}: empty core mask")
        return self.subset(self.core_mask)

    def scaled(self, factor: float) -> "UrbanArea":
        """Copy with every count multiplied by ``factor``."""
        cells = tuple(
            replace(
                c,
                counts=tuple(v * factor for v in c.counts),
                male_count=None if c.male_count is None else c.male_count * factor,
                female_count=None if c.female_count is None else c.female_count * factor,
            )
            for c in self.cells
        )
        return replace(self, cells=cells)


# ---------------------------------------------------------------------------
# Flat-file ingestion


@dataclass(frozen=True)
class GridSchema:
    """Column mapping for the grid CSV."""

    fua_id: str = "fua_id"
    fua_name: str = "fua_name"
    country: str = "country"
    x_km: str = "x_km"
    y_km: str = "y_km"
    group_columns: tuple[tuple[str, str], ...] = (
        ("native", "pop_native"),
        ("eu_imm", "pop_eu_imm"),
        ("noneu_imm", "pop_noneu_imm"),
    )
    male: str = "male"
    female: str = "female"
    core_flag: str = "core_flag"
    cell_id: str = "cell_id"

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(g for g, _ in self.group_columns)

    @property
    def required(self) -> tuple[str, ...]:
        return (self.fua_id, self.country, self.x_km, self.y_km) + tuple(
            c for _, c in self.group_columns
        )


def _parse_float(raw, column, rownum):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"row {rownum}: column {column!r} is not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"row {rownum}: column {column!r} is not finite: {raw!r}")
    return value


def _parse_count(raw, column, rownum):
    value = _parse_float(raw, column, rownum)
    if value < 0:
        raise ValidationError(f"row {rownum}: negative count {raw!r} in column {column!r}")
    return value


def default_cell_id(x_km: float, y_km: float) -> str:
    return f"{x_km!r}_{y_km!r}"


def ingest_grid(path, schema: GridSchema = GridSchema()) -> list[UrbanArea]:
    """Read a grid CSV into urban areas, sorted by ``fua_id``.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"grid file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in schema.required:
            if col not in header:
                raise SchemaError(col, path)
        has_sex = schema.male in header and schema.female in header
        has_core = schema.core_flag in header
        has_id = schema.cell_id in header

        by_fua: dict[str, dict] = {}
        for rownum, row in enumerate(reader, start=2):
            fua = row[schema.fua_id].strip()
            x = _parse_float(row[schema.x_km], schema.x_km, rownum)
            y = _parse_float(row[schema.y_km], schema.y_km, rownum)
            counts = tuple(_parse_count(row[c], c, rownum) for _, c in schema.group_columns)
            male = female = None
            if has_sex and row[schema.male] not in ("", None) and row[schema.female] not in ("", None):
                male = _parse_count(row[schema.male], schema.male, rownum)
                female = _parse_count(row[schema.female], schema.female, rownum)
            cell_id = row[schema.cell_id].strip() if has_id and row[schema.cell_id] else default_cell_id(x, y)
            entry = by_fua.setdefault(
                fua,
                {
                    "name": (row.get(schema.fua_name) or fua).strip(),
                    "country": row[schema.country].strip(),
                    "cells": [],
                    "core": set(),
                    "centroids": {},
                },
            )
            if (x, y) in entry["centroids"]:
                raise ValidationError(
                    f"row {rownum}: duplicate centroid ({x}, {y}) in fua {fua!r} "
                    f"(first seen at row {entry['centroids'][(x, y)]})"
                )
            entry["centroids"][(x, y)] = rownum
            entry["cells"].append(GridCell(cell_id, x, y, counts, male, female))
            if has_core and str(row[schema.core_flag]).strip() in ("1", "true", "True", "TRUE"):
                entry["core"].add(cell_id)

    return [
        UrbanArea(fua, e["name"], e["country"], schema.groups, tuple(e["cells"]), frozenset(e["core"]))
        for fua, e in sorted(by_fua.items())
    ]


def write_grid(areas: Sequence[UrbanArea], path, schema: GridSchema = GridSchema()) -> Path:
    """Write urban areas in the grid CSV layout; ``ingest_grid`` reads it back."""
    path = Path(path)
    with_sex = any(c.has_sex_counts for a in areas for c in a.cells)
    header = [schema.fua_id, schema.fua_name, schema.country, schema.cell_id, schema.x_km, schema.y_km]
    header += [c for _, c in schema.group_columns]
    if with_sex:
        header += [schema.male, schema.female]
    header.append(schema.core_flag)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for area in sorted(areas, key=lambda a: a.fua_id):
            for c in area.cells:
                row = [area.fua_id, area.name, area.country_code, c.cell_id, repr(c.x_km), repr(c.y_km)]
                row += [repr(v) for v in c.counts]
                if with_sex:
                    row += ["" if c.male_count is None else repr(c.male_count),
                            "" if c.female_count is None else repr(c.female_count)]
                row.append("1" if c.cell_id in area.core_mask else "0")
                writer.writerow(row)
    return path


# ---------------------------------------------------------------------------
# Dasymetric interpolation


@dataclass(frozen=True)
class SourceZone:
    """A census zone and the fine cells its counts are spread over."""

    zone_id: str
    counts: tuple[float, ...]
    members: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "counts", tuple(_finite_nonneg(c, f"zone {self.zone_id} count") for c in self.counts)
        )
        object.__setattr__(
            self,
            "members",
            tuple((str(f), _finite_nonneg(w, f"zone {self.zone_id} weight")) for f, w in self.members),
        )


def dasymetric_interpolate(
    zones: Iterable[SourceZone], target: Mapping[str, str]
) -> dict[str, np.ndarray]:
    """Two-step areal interpolation: zone -> fine cells (by weight) -> target cells.

    Each zone's counts are split over its fine cells in proportion to their
    weights; fine-cell allocations are then summed into their target cells.
    Nothing is rounded, so per-group totals are preserved up to floating
    point summation error.

    Raises
    ------
    ValidationError
        A fine cell is missing from ``target``.
    DegenerateZoneError
        A zone has positive counts but no positive weight.
    """
    parts: dict[str, list[list[float]]] = {}
    ngroups = None
    for zone in sorted(zones, key=lambda z: z.zone_id):
        if ngroups is None:
            ngroups = len(zone.counts)
        elif len(zone.counts) != ngroups:
            raise ValidationError(f"zone {zone.zone_id}: inconsistent number of groups")
        for fine_id, _ in zone.members:
            if fine_id not in target:
                raise ValidationError(f"zone {zone.zone_id}: fine cell {fine_id!r} has no target cell")
        wsum = math.fsum(w for _, w in zone.members)
        if wsum <= 0:
            if any(c > 0 for c in zone.counts):
                raise DegenerateZoneError(
                    f"zone {zone.zone_id} has population {sum(zone.counts)} but no positive weight"
                )
            continue
        for fine_id, w in zone.members:
            bucket = parts.setdefault(target[fine_id], [[] for _ in range(ngroups)])
            share = w / wsum
            for g, count in enumerate(zone.counts):
                bucket[g].append(count * share)
    return {
        tid: np.array([math.fsum(vals) for vals in bucket]) for tid, bucket in sorted(parts.items())
    }


def read_dasymetric_inputs(
    zones_path, weights_path, group_columns: Sequence[str]
) -> tuple[list[SourceZone], dict[str, str]]:
    """Load the zones CSV and the weights CSV.

    zones: ``zone_id`` plus one column per group.  weights: ``zone_id,
    fine_cell_id, weight, target_cell_id``.
    """
    zones_path, weights_path = Path(zones_path), Path(weights_path)
    members: dict[str, list[tuple[str, float]]] = {}
    target: dict[str, str] = {}
    with weights_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("zone_id", "fine_cell_id", "weight", "target_cell_id"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(col, weights_path)
        for rownum, row in enumerate(reader, start=2):
            fine = row["fine_cell_id"].strip()
            tgt = row["target_cell_id"].strip()
            if target.get(fine, tgt) != tgt:
                raise ValidationError(f"row {rownum}: fine cell {fine!r} mapped to two target cells")
            target[fine] = tgt
            members.setdefault(row["zone_id"].strip(), []).append(
                (fine, _parse_count(row["weight"], "weight", rownum))
            )
    zones = []
    with zones_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("zone_id", *group_columns):
            if col not in (reader.fieldnames or []):
                raise SchemaError(col, zones_path)
        for rownum, row in enumerate(reader, start=2):
            zid = row["zone_id"].strip()
            counts = tuple(_parse_count(row[c], c, rownum) for c in group_columns)
            zones.append(SourceZone(zid, counts, tuple(members.get(zid, ()))))
    return zones, target


# ---------------------------------------------------------------------------
# Outlier cells


class OutlierFilterResult(NamedTuple):
    area: UrbanArea
    removed: list[str]
    skipped: bool


def filter_outlier_cells(
    area: UrbanArea,
    scheme: GroupScheme,
    min_share: float = 0.5,
    neighbour_ratio: float = 5.0,
    sex_ratio: float = 2.0,
    n_neighbours: int = 4,
) -> OutlierFilterResult:
    """Drop implausible cells such as dormitories or reception centres.

    A cell is removed when its focal share is at least ``min_share`` and
    either its share is at least ``neighbour_ratio`` times the mean focal
    share of its ``n_neighbours`` nearest cells, or (when both sex counts
    are present) it has at least ``sex_ratio`` times as many men as women.
    Nearest-cell ties are broken by ``cell_id``.

    The input area is not modified.  Areas with too few cells to define the
    neighbour set are returned unchanged with ``skipped=True``.
    """
    n = len(area)
    if n < n_neighbours + 1:
        warnings.warn(
            f"urban area {area.fua_id}: {n} cells, outlier filter needs at least "
            f"{n_neighbours + 1}; skipped",
            stacklevel=2,
        )
        return OutlierFilterResult(area, [], True)

    two = scheme.two_group_counts(area.counts)
    totals = two.sum(axis=1)
    share = np.divide(two[:, 0], totals, out=np.zeros(n), where=totals > 0)
    coords = area.coords
    order = np.arange(n)  # cells are already in cell_id order

    removed = []
    for i in np.flatnonzero(share >= min_share):
        d2 = ((coords - coords[i]) ** 2).sum(axis=1)
        d2[i] = np.inf
        nearest = np.lexsort((order, d2))[:n_neighbours]
        neigh_mean = share[nearest].mean()
        is_enclave = share[i] >= neighbour_ratio * neigh_mean
        cell = area.cells[i]
        is_skewed = cell.has_sex_counts and cell.male_count >= sex_ratio * cell.female_count
        if is_enclave or is_skewed:
            removed.append(cell.cell_id)

    if not removed:
        return OutlierFilterResult(area, [], False)
    dropped = set(removed)
    kept = [c.cell_id for c in area.cells if c.cell_id not in dropped]
    LOGGER.debug("urban area %s: removed %d outlier cells", area.fua_id, len(removed))
    return OutlierFilterResult(area.subset(kept), removed, False)


# ---------------------------------------------------------------------------
# Synthetic cities


@dataclass(frozen=True)
class CityConfig:
    """Parameters of a synthetic city on a regular ``nx`` by ``ny`` grid."""

    nx: int = 10
    ny: int = 10
    total_population: float = 100_000.0
    focal_share: float = 0.2
    pattern: str = "random"
    spacing_km: float = 1.0
    eu_fraction: float = 0.5
    core_radius_km: float | None = None
    fua_id: str = "SYN"
    name: str = ""
    country: str = "XX"

    def validate(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx <= 0 or self.ny <= 0:
            raise ConfigError(f"grid dimensions must be positive integers, got {self.nx}x{self.ny}")
        if not self.total_population > 0:
            raise ConfigError("total population must be positive")
        if not 0 < self.focal_share < 1:
            raise ConfigError("focal share must lie strictly between 0 and 1")
        if not self.spacing_km > 0:
            raise ConfigError("cell spacing must be positive")
        if not 0 <= self.eu_fraction <= 1:
            raise ConfigError("eu_fraction must lie in [0, 1]")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.pattern == "two-block" and self.nx < 2:
            raise ConfigError("two-block pattern needs nx >= 2")


def _mean_preserving_shares(pop, signal, share):
    """Focal shares in [0, 1] following ``signal`` whose population-weighted mean is ``share``."""
    centred = signal - np.dot(pop, signal) / pop.sum()
    hi, lo = centred.max(), centred.min()
    bounds = []
    if hi > 0:
        bounds.append((1 - share) / hi)
    if lo < 0:
        bounds.append(share / -lo)
    amp = min(bounds) if bounds else 0.0
    return np.clip(share + amp * centred, 0.0, 1.0)


def generate_synthetic_city(config: CityConfig, seed: int = 0) -> UrbanArea:
    """Deterministic synthetic urban area.

    ``uniform`` gives every cell the same size and composition;
    ``two-block`` puts the whole focal population in the left half of the
    grid; ``radial-gradient`` concentrates both population and the focal
    group towards the centre; ``random`` draws cell sizes and compositions
    from ``seed``.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    nx, ny = int(config.nx), int(config.ny)
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    x = ii * config.spacing_km
    y = jj * config.spacing_km
    n = nx * ny
    total, share = float(config.total_population), float(config.focal_share)

    if config.pattern == "uniform":
        pop = np.full(n, total / n)
        q = np.full(n, share)
    elif config.pattern == "two-block":
        left = ii < nx // 2
        pop = np.where(left, total * share / left.sum(), total * (1 - share) / (~left).sum())
        q = left.astype(float)
    elif config.pattern == "radial-gradient":
        cx, cy = x.mean(), y.mean()
        r = np.hypot(x - cx, y - cy)
        scale = max(r.max(), config.spacing_km)
        weight = np.exp(-2.0 * r / scale)
        pop = total * weight / weight.sum()
        q = _mean_preserving_shares(pop, 1.0 - r / scale, share)
    else:
        weight = rng.lognormal(0.0, 1.0, n)
        pop = total * weight / weight.sum()
        q = _mean_preserving_shares(pop, rng.uniform(0.0, 1.0, n), share)

    focal = pop * q
    if config.pattern == "random":
        eu_split = rng.uniform(0.0, 1.0, n) * 2 * min(config.eu_fraction, 1 - config.eu_fraction)
        eu_split += config.eu_fraction - min(config.eu_fraction, 1 - config.eu_fraction)
    else:
        eu_split = np.full(n, config.eu_fraction)
    eu = focal * eu_split
    cells = tuple(
        GridCell(f"c{jj[k]:05d}_{ii[k]:05d}", float(x[k]), float(y[k]),
                 (float(pop[k] - focal[k]), float(eu[k]), float(focal[k] - eu[k])))
        for k in range(n)
    )
    core = frozenset()
    if config.core_radius_km is not None:
        cx, cy = x.mean(), y.mean()
        inside = (x - cx) ** 2 + (y - cy) ** 2 <= config.core_radius_km ** 2
        core = frozenset(cells[k].cell_id for k in np.flatnonzero(inside))
    return UrbanArea(
        config.fua_id, config.name or config.fua_id, config.country, DEFAULT_GROUPS, cells, core
    )
