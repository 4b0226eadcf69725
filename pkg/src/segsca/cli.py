"""Command-line front end: ``segsca {indices,sca,synth,interpolate}``.

Every run writes ``manifest.json`` next to its outputs.  Exit codes: 0 on
success, 1 for invalid input or configuration, 2 for numeric failures.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd

from . import __version__, grid, indices, sca, synth
from .errors import ConfigError, NumericError, SegscaError, ValidationError
from .smoothing import SmoothingSpec

LOGGER = logging.getLogger("segsca")

INDEX_FLAGS = {
    "spatial-d": "spatial_D",
    "spatial-p": "spatial_P",
    "aspatial-d": "aspatial_D",
    "aspatial-p": "aspatial_P",
}
ESTIMATOR_FLAGS = {
    "fixed-effects": "fixed_effects",
    "multilevel": "random_intercept",
    "random-intercept": "random_intercept",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors are validation errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _floats(values):
    out = []
    for v in values or []:
        for part in str(v).split(","):
            if part.strip():
                out.append(float(part))
    return out


def _strings(values):
    return [p.strip() for v in values or [] for p in str(v).split(",") if p.strip()]


def write_manifest(out_dir: Path, command: str, options: dict, inputs, outputs, started: float,
                   extra: dict | None = None) -> Path:
    """Record what was run, on which inputs, and digests of everything written."""
    config = {k: v for k, v in sorted(options.items()) if k not in ("func", "config")}
    # where outputs go, worker count and verbosity do not change results
    keyed = {k: v for k, v in config.items() if k not in ("output_dir", "threads", "verbose")}
    digest = hashlib.sha256(json.dumps(keyed, sort_keys=True, default=str).encode()).hexdigest()
    manifest = {
        "command": command,
        "config": config,
        "config_digest": digest,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": options.get("seed"),
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": [{"path": str(Path(p).relative_to(out_dir)), "sha256": _sha256(p)}
                    for p in sorted(outputs)],
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# indices


def _area_scores(area, args, scheme, radii, kinds):
    filters = {"outlier_filter": "on" if args.outlier_filter else "off"}
    removed = []
    if args.outlier_filter:
        area, removed, _ = grid.filter_outlier_cells(area, scheme)
    targets = [(area, dict(filters, core_only=False))]
    if args.core:
        if not area.core_mask:
            raise ValidationError(f"fua {area.fua_id}: --core requested but the area has no core cells")
        targets.append((area.core(), dict(filters, core_only=True)))
    scores = []
    try:
        for sub, f in targets:
            spatial = [k for k in kinds if k.startswith("spatial")]
            if spatial:
                scores += indices.scale_profile(sub, scheme, radii, spatial, filters=f)
            aspatial = [k for k in kinds if k.startswith("aspatial")]
            if aspatial:
                d, p = indices.aspatial_indices(sub, scheme, filters=f)
                scores += [s for s in (d, p) if s.index_kind in aspatial]
        disp = indices.population_dispersion(area) if args.dispersion else None
    except SegscaError as exc:
        if area.fua_id not in str(exc):
            raise type(exc)(f"fua {area.fua_id}: {exc}") from exc
        raise
    return scores, disp, removed


def cmd_indices(args) -> int:
    started = time.time()
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    radii = _floats(args.radius) or [1.0]
    for r in radii:
        SmoothingSpec(r)
    kinds = []
    for k in _strings(args.index) or ["spatial-d"]:
        if k not in INDEX_FLAGS:
            raise ConfigError(f"unknown index {k!r}; choose from {sorted(INDEX_FLAGS)}")
        kinds.append(INDEX_FLAGS[k])
    if args.partition not in grid.SCHEMES:
        raise ConfigError(f"unknown partition {args.partition!r}; choose from {sorted(grid.SCHEMES)}")
    scheme = grid.SCHEMES[args.partition]
    areas = grid.ingest_grid(args.input)

    def one(area):
        return _area_scores(area, args, scheme, radii, kinds)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            per_area = list(pool.map(one, areas))
    else:
        per_area = [one(a) for a in areas]

    outputs = [indices.write_scores([s for scores, _, _ in per_area for s in scores],
                                    out_dir / "scores.csv")]
    if args.dispersion:
        path = out_dir / "dispersion.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fua_id", "country", "value"])
            for _, d, _ in per_area:
                w.writerow([d.fua_id, d.country, repr(d.value)])
        outputs.append(path)
    removed = {a.fua_id: r for a, (_, _, r) in zip(areas, per_area) if r}
    write_manifest(out_dir, "indices", vars(args), [args.input], outputs, started,
                   {"n_areas": len(areas), "outlier_cells_removed": removed})
    return 0


# ---------------------------------------------------------------------------
# sca


def _load_outcome_scores(args) -> pd.DataFrame:
    scores = [s for s in indices.read_scores(args.scores)
              if s.index_kind == args.score_index
              and s.group_partition == args.score_partition
              and str(s.filters.get("core_only", "False")) in ("False", "false")
              and (s.radius_km is None or abs(s.radius_km - args.score_radius) < 1e-12)]
    if not scores:
        raise ValidationError(f"no {args.score_index} scores at radius {args.score_radius} in {args.scores}")
    frame = pd.DataFrame({"fua_id": [s.fua_id for s in scores], "_score": [s.value for s in scores]})
    if frame.fua_id.duplicated().any():
        raise ValidationError("score file holds several matching rows for one fua; narrow the selection")
    return frame


def cmd_sca(args) -> int:
    started = time.time()
    if args.seed is None:
        raise ConfigError("sca requires --seed")
    if args.estimator not in ESTIMATOR_FLAGS:
        raise ConfigError(f"unknown estimator {args.estimator!r}; choose from {sorted(ESTIMATOR_FLAGS)}")
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    catalog = sca.read_catalog(args.catalog)
    frame = pd.read_csv(args.input, dtype={"fua_id": str, "country": str})
    inputs = [args.input, args.catalog]
    outcome = args.outcome
    if args.scores:
        inputs.append(args.scores)
        outcome = outcome or "segregation"
        if outcome in frame:
            raise ValidationError(f"covariate table already has a column {outcome!r}")
        scores = _load_outcome_scores(args)
        frame = frame.merge(scores.rename(columns={"_score": outcome}), on="fua_id", how="inner")
        catalog = [v for v in catalog if v.role != "outcome"]
    data = sca.prepare_data(frame, catalog, outcome, impute=args.impute)
    config = sca.SCAConfig(
        limits=sca.EnumerationLimits(args.min_focal, args.max_focal, args.min_country, args.max_country),
        estimator=ESTIMATOR_FLAGS[args.estimator],
        standardize=not args.no_standardize,
        replications=args.reps,
        seed=args.seed,
        threads=args.threads,
        test2_rule=args.test2_rule,
    )
    specs, results, cfs = sca.run_sca(catalog, data, config, focal=_strings(args.focal) or None)
    outputs = sca.write_results(results, cfs, out_dir)
    outputs.append(sca.write_specs(specs, out_dir / "specs.csv"))
    factors = sca.spec_count_factors(catalog, config.limits, config.estimator)
    extra = {
        "n_rows": data.n,
        "outcome": data.outcome,
        "n_imputed_cells": 0 if data.imputed is None else int(data.imputed.to_numpy().sum()),
        "spec_counts": factors,
        "n_variables": len(results),
    }
    write_manifest(out_dir, "sca", vars(args), inputs, outputs, started, extra)
    return 0


# ---------------------------------------------------------------------------
# synth / interpolate


def _parse_effects(items):
    effects = {}
    for item in _strings(items):
        name, _, value = item.partition("=")
        if not value:
            raise ConfigError(f"effect {item!r} must look like name=value")
        effects[name] = float(value)
    return effects


def cmd_synth(args) -> int:
    started = time.time()
    if args.seed is None:
        raise ConfigError("synth requires --seed")
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    areas = synth.synthetic_areas(args.n_fua, args.n_countries, args.seed, args.grid_size,
                                  args.grid_size, args.pattern)
    grid_path = grid.write_grid(areas, out_dir / "grid.csv")
    frame, catalog = synth.synthetic_panel(
        n_null=args.n_null, effects=_parse_effects(args.effect), seed=args.seed,
        countries=[a.country_code for a in areas], n_country_null=args.n_country,
    )
    frame["fua_id"] = [a.fua_id for a in areas]
    cov_path = out_dir / "covariates.csv"
    frame.to_csv(cov_path, index=False, lineterminator="\n", float_format="%.17g")
    cat_path = sca.write_catalog(catalog, out_dir / "catalog.csv")
    write_manifest(out_dir, "synth", vars(args), [], [grid_path, cov_path, cat_path], started)
    return 0


def cmd_interpolate(args) -> int:
    started = time.time()
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = _strings(args.groups) or [c for _, c in grid.GridSchema().group_columns]
    zones, target = grid.read_dasymetric_inputs(args.input, args.weights, groups)
    result = grid.dasymetric_interpolate(zones, target)
    path = out_dir / "interpolated.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_cell_id", *groups])
        for tid, counts in result.items():
            w.writerow([tid, *(repr(float(c)) for c in counts)])
    write_manifest(out_dir, "interpolate", vars(args), [args.input, args.weights], [path], started,
                   {"n_zones": len(zones), "n_target_cells": len(result)})
    return 0


# ---------------------------------------------------------------------------
# parser and config file


def _common(p):
    p.add_argument("--output-dir", required=False, default=".", help="directory for outputs")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--config", help="key = value file mirroring the command-line flags")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segsca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"segsca {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("indices", help="segregation indices per urban area")
    p.add_argument("--input", required=False, help="grid CSV")
    p.add_argument("--radius", nargs="+", help="smoothing radii in km (default 1)")
    p.add_argument("--index", nargs="+", help=f"index kinds: {', '.join(INDEX_FLAGS)}")
    p.add_argument("--partition", default="immigrant", help=f"group partition: {', '.join(grid.SCHEMES)}")
    p.add_argument("--outlier-filter", action="store_true", help="drop outlier cells first")
    p.add_argument("--core", action="store_true", help="also compute indices for the core city")
    p.add_argument("--dispersion", action="store_true", help="write population dispersion")
    p.add_argument("--seed", type=int, default=None, help="unused; accepted for uniformity")
    _common(p)
    p.set_defaults(func=cmd_indices)

    p = sub.add_parser("sca", help="specification curve analysis")
    p.add_argument("--input", required=False, help="covariate CSV (fua_id, country, variables)")
    p.add_argument("--catalog", required=False, help="variable catalog CSV")
    p.add_argument("--outcome", help="outcome column (default: catalog outcome)")
    p.add_argument("--scores", help="scores.csv from `indices`, used as the outcome")
    p.add_argument("--score-index", default="spatial_D")
    p.add_argument("--score-radius", type=float, default=1.0)
    p.add_argument("--score-partition", default="immigrant")
    p.add_argument("--estimator", default="fixed-effects", help=f"{', '.join(ESTIMATOR_FLAGS)}")
    p.add_argument("--min-focal", type=int, default=1)
    p.add_argument("--max-focal", type=int, default=4)
    p.add_argument("--min-country", type=int, default=0)
    p.add_argument("--max-country", type=int, default=3)
    p.add_argument("--focal", nargs="+", help="restrict curves to these variables")
    p.add_argument("--reps", type=int, default=500, help="bootstrap replications (0: estimates only)")
    p.add_argument("--seed", type=int, default=None, help="master seed (required)")
    p.add_argument("--impute", default="none", choices=("none", "mean"))
    p.add_argument("--no-standardize", action="store_true", help="report raw-scale coefficients")
    p.add_argument("--test2-rule", default="absolute", choices=("absolute", "signed"))
    _common(p)
    p.set_defaults(func=cmd_sca)

    p = sub.add_parser("synth", help="write synthetic grid and covariate inputs")
    p.add_argument("--n-fua", type=int, default=60)
    p.add_argument("--n-countries", type=int, default=6)
    p.add_argument("--grid-size", type=int, default=8)
    p.add_argument("--pattern", default="random", help=f"{', '.join(grid.PATTERNS)}, mixed")
    p.add_argument("--n-null", type=int, default=4, help="candidates without effect")
    p.add_argument("--n-country", type=int, default=0, help="country-level candidates without effect")
    p.add_argument("--effect", nargs="+", help="name=value true effects per SD")
    p.add_argument("--seed", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("interpolate", help="dasymetric interpolation of zone counts")
    p.add_argument("--input", required=False, help="zones CSV")
    p.add_argument("--weights", required=False, help="weights CSV")
    p.add_argument("--groups", nargs="+", help="group columns of the zones CSV")
    p.add_argument("--seed", type=int, default=None, help="unused; accepted for uniformity")
    _common(p)
    p.set_defaults(func=cmd_interpolate)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def load_config(path, subparser) -> dict:
    """Parse ``key = value`` lines; keys are flag names with or without dashes."""
    by_dest = {a.dest: a for a in subparser._actions}
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        dest = key.strip().lstrip("-").replace("-", "_")
        action = by_dest.get(dest)
        if action is None or dest in ("config", "help"):
            raise ConfigError(f"{path}:{lineno}: unknown option {key.strip()!r}")
        raw = raw.strip()
        if isinstance(action, argparse._StoreTrueAction):
            values[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            values[dest] = [p.strip() for p in raw.split(",") if p.strip()]
        else:
            values[dest] = action.type(raw) if action.type else raw
    return values


def _check_required(args):
    needed = {"indices": ["input"], "sca": ["input", "catalog"], "interpolate": ["input", "weights"]}
    for name in needed.get(args.command, []):
        if not getattr(args, name):
            raise ConfigError(f"{args.command} requires --{name.replace('_', '-')}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            sub = _subparser(parser, args.command)
            sub.set_defaults(**load_config(args.config, sub))
            args = parser.parse_args(argv)
        _check_required(args)
        return args.func(args)
    except ValidationError as exc:
        print(f"segsca {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"segsca {args.command}: numeric failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, pd.errors.ParserError) as exc:
        print(f"segsca {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
