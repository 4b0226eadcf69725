"""Segregation and dispersion indices for urban areas."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateCompositionError, EmptyGroupError, ValidationError
from .grid import GroupScheme, UrbanArea
from .smoothing import NeighbourIndex, SmoothingSpec, smooth

INDEX_KINDS = ("spatial_D", "spatial_P", "aspatial_D", "aspatial_P")


@dataclass(frozen=True)
class SegScore:
    fua_id: str
    index_kind: str
    value: float
    radius_km: float | None = None
    group_partition: str = ""
    filters: dict = field(default_factory=dict)
    country: str = ""

    def filters_label(self) -> str:
        return ";".join(f"{k}={v}" for k, v in sorted(self.filters.items())) or "none"


@dataclass(frozen=True)
class DispersionScore:
    fua_id: str
    value: float
    country: str = ""


def _two_group(area: UrbanArea, scheme: GroupScheme) -> np.ndarray:
    if tuple(area.groups) != tuple(scheme.groups):
        raise ValidationError(
            f"urban area {area.fua_id}: groups {area.groups} do not match scheme {scheme.groups}"
        )
    return scheme.two_group_counts(area.counts)


def _composition(counts: np.ndarray, fua_id: str):
    group_tot = counts.sum(axis=0)
    total = group_tot.sum()
    pi = group_tot / total
    interaction = float(np.sum(pi * (1 - pi)))
    if interaction <= 0:
        raise DegenerateCompositionError(
            f"urban area {fua_id}: only one group present, dissimilarity undefined"
        )
    return total, pi, interaction


def _dissimilarity(raw: np.ndarray, local_props: np.ndarray, fua_id: str) -> float:
    total, pi, interaction = _composition(raw, fua_id)
    tau = raw.sum(axis=1)
    live = tau > 0
    dev = np.abs(local_props[live] - pi).sum(axis=1)
    value = float(np.sum(tau[live] * dev)) / (2.0 * total * interaction)
    return float(min(value, 1.0))


def _isolation(raw: np.ndarray, local_focal: np.ndarray, fua_id: str) -> float:
    focal_total = raw[:, 0].sum()
    if not focal_total > 0:
        raise EmptyGroupError(f"urban area {fua_id}: focal group is empty, isolation undefined")
    live = raw[:, 0] > 0
    return float(np.sum(raw[live, 0] * local_focal[live]) / focal_total)


def _filters(filters) -> dict:
    return dict(filters or {})


def _local_props(area, scheme, spec, index):
    smoothed = scheme.two_group_counts(smooth(area, spec, index=index).group_counts)
    tot = smoothed.sum(axis=1, keepdims=True)
    props = np.full_like(smoothed, np.nan)
    np.divide(smoothed, tot, out=props, where=tot > 0)
    return props


def spatial_dissimilarity(
    area: UrbanArea, scheme: GroupScheme, spec: SmoothingSpec, *, index: NeighbourIndex | None = None,
    filters: dict | None = None,
) -> SegScore:
    """Spatial dissimilarity: population-weighted deviation of local from overall composition.

    ``sum_m sum_p tau_p |local_pm - pi_m| / (2 T I)`` with ``I = sum_m pi_m (1 - pi_m)``,
    taken over the focal/reference partition of ``scheme``.
    """
    raw = _two_group(area, scheme)
    value = _dissimilarity(raw, _local_props(area, scheme, spec, index), area.fua_id)
    return SegScore(area.fua_id, "spatial_D", value, spec.radius_km, scheme.label,
                    _filters(filters), area.country_code)


def spatial_isolation(
    area: UrbanArea, scheme: GroupScheme, spec: SmoothingSpec, *, index: NeighbourIndex | None = None,
    filters: dict | None = None,
) -> SegScore:
    """Mean local focal share experienced by members of the focal group."""
    raw = _two_group(area, scheme)
    value = _isolation(raw, _local_props(area, scheme, spec, index)[:, 0], area.fua_id)
    return SegScore(area.fua_id, "spatial_P", value, spec.radius_km, scheme.label,
                    _filters(filters), area.country_code)


def aspatial_indices(
    area: UrbanArea, scheme: GroupScheme, *, filters: dict | None = None
) -> tuple[SegScore, SegScore]:
    """Classical dissimilarity D and isolation P* from raw cell proportions."""
    raw = _two_group(area, scheme)
    tau = raw.sum(axis=1)
    props = np.full_like(raw, np.nan)
    np.divide(raw, tau[:, None], out=props, where=tau[:, None] > 0)
    d = _dissimilarity(raw, props, area.fua_id)
    p = _isolation(raw, props[:, 0], area.fua_id)
    f = _filters(filters)
    return (
        SegScore(area.fua_id, "aspatial_D", d, None, scheme.label, f, area.country_code),
        SegScore(area.fua_id, "aspatial_P", p, None, scheme.label, f, area.country_code),
    )


def population_dispersion(area: UrbanArea) -> DispersionScore:
    """Normalised Shannon entropy of population shares across populated cells.

    0 when everybody lives in one cell, 1 when all populated cells are equal.
    """
    tau = area.totals
    total = tau.sum()
    if not total > 0:
        raise ValidationError(f"urban area {area.fua_id}: zero total population")
    s = tau[tau > 0] / total
    if s.size <= 1:
        return DispersionScore(area.fua_id, 0.0, area.country_code)
    h = float(-np.sum(s * np.log(s)) / math.log(s.size))
    return DispersionScore(area.fua_id, min(max(h, 0.0), 1.0), area.country_code)


def scale_profile(
    area: UrbanArea,
    scheme: GroupScheme,
    radii: Sequence[float],
    kinds: Sequence[str] = ("spatial_D",),
    *,
    filters: dict | None = None,
) -> list[SegScore]:
    """Spatial indices at several radii, sharing one neighbour search.

    Output is ordered radius-major, following ``radii`` then ``kinds``.
    """
    if not radii:
        return []
    specs = [SmoothingSpec(r) for r in radii]
    _two_group(area, scheme)
    index = NeighbourIndex(area, max(radii))
    ops = {"spatial_D": spatial_dissimilarity, "spatial_P": spatial_isolation}
    out = []
    for spec in specs:
        for kind in kinds:
            out.append(ops[kind](area, scheme, spec, index=index, filters=filters))
    return out


def core_vs_fua(
    area: UrbanArea, scheme: GroupScheme, spec: SmoothingSpec, kind: str = "spatial_D"
) -> tuple[SegScore, SegScore]:
    """Index for the whole area and for its core treated as a standalone area."""
    core = area.core()
    op = {"spatial_D": spatial_dissimilarity, "spatial_P": spatial_isolation}[kind]
    full = op(area, scheme, spec, filters={"core_only": False})
    inner = op(core, scheme, spec, filters={"core_only": True})
    return full, inner


class VarianceShares(NamedTuple):
    between: float
    within: float
    zero_variance: bool


def variance_decomposition(scores: Iterable[tuple[str, float]]) -> VarianceShares:
    """One-way ANOVA split of the variance of ``value`` into between- and within-country parts."""
    pairs = list(scores)
    if len(pairs) < 2:
        raise ValidationError("variance decomposition needs at least two scores")
    countries = sorted({c for c, _ in pairs})
    if len(countries) < 2:
        raise ValidationError("variance decomposition needs at least two countries")
    values = np.array([v for _, v in pairs], dtype=float)
    labels = np.array([countries.index(c) for c, _ in pairs])
    grand = values.mean()
    ssb = 0.0
    ssw = 0.0
    for g in range(len(countries)):
        vals = values[labels == g]
        m = vals.mean()
        ssb += len(vals) * (m - grand) ** 2
        ssw += float(np.sum((vals - m) ** 2))
    sst = ssb + ssw
    if sst <= 0:
        return VarianceShares(0.0, 0.0, True)
    between = ssb / sst
    return VarianceShares(between, 1.0 - between, False)


SCORE_COLUMNS = ("fua_id", "country", "index_kind", "radius_km", "group_partition", "filters", "value")


def write_scores(scores: Iterable[SegScore], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for s in scores:
            w.writerow([s.fua_id, s.country, s.index_kind,
                        "" if s.radius_km is None else repr(float(s.radius_km)),
                        s.group_partition, s.filters_label(), repr(float(s.value))])
    return path


def read_scores(path) -> list[SegScore]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            filters = {}
            if row["filters"] and row["filters"] != "none":
                filters = dict(item.split("=", 1) for item in row["filters"].split(";"))
            out.append(SegScore(row["fua_id"], row["index_kind"], float(row["value"]),
                                float(row["radius_km"]) if row["radius_km"] else None,
                                row["group_partition"], filters, row["country"]))
    return out
