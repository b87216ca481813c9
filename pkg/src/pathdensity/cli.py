"""Command-line pipeline: simulate, estimate, oracle, converge.

All outputs are plain CSV/JSON/SVG, written deterministically for a given
seed and input (the worker count never changes the bytes). Exit codes:
0 success, 2 usage or configuration, 3 data, 4 numerical failure.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .figure import render_four_panel_svg
from .flow import (FlowNumericalError, find_critical_points, kde_flow_config,
                   mean_shift_paths, trace_ascent_paths)
from .grids import GridField, GridSpec
from .kernels import KernelSpec, PointCloud
from .levelset import level_set, quantile_threshold
from .model import FilamentModel, random_pentagon_model, two_gaussian_model
from .oracle import convergence_experiment, model_flow_config, oracle_field
from .parallel import worker_count
from .path_density import PathEnsemble, default_bandwidths, path_density_field

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


# -- file I/O -----------------------------------------------------------------

def write_points_csv(path, points: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("x,y\n")
        for x, y in points:
            f.write(f"{_fmt(x)},{_fmt(y)}\n")


def read_points_csv(path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if lineno == 1 and line.lower().replace(" ", "") == "x,y":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{path}: line {lineno}: expected two fields")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric value")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 points")
    return PointCloud(np.asarray(rows))


def write_paths_csv(path, paths, trims=None):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("path_id,step,x,y\n")
        for pid, p in enumerate(paths):
            start = 0 if trims is None else min(trims[pid], len(p.vertices) - 1)
            for step in range(start, len(p.vertices)):
                x, y = p.vertices[step]
                f.write(f"{pid},{step},{_fmt(x)},{_fmt(y)}\n")


def write_field_csv(path, fld: GridField):
    s = fld.spec
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# nx={s.nx} ny={s.ny}\n")
        f.write(f"# xmin={_fmt(s.xmin)} xmax={_fmt(s.xmax)} "
                f"ymin={_fmt(s.ymin)} ymax={_fmt(s.ymax)}\n")
        f.write("x,y,value\n")
        xs, ys = s.xs(), s.ys()
        for i in range(s.nx):
            for j in range(s.ny):
                f.write(f"{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(fld.values[i, j])}\n")


def write_mask_csv(path, mask: np.ndarray, grid: GridSpec):
    xs, ys = grid.xs(), grid.ys()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("i,j,x,y\n")
        for i, j in zip(*np.nonzero(mask)):
            f.write(f"{i},{j},{_fmt(xs[i])},{_fmt(ys[j])}\n")


def write_critical_points_csv(path, crit):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("x,y,kind,eig1,eig2\n")
        for c in crit:
            f.write(f"{_fmt(c.location[0])},{_fmt(c.location[1])},{c.kind},"
                    f"{_fmt(c.hessian_eigenvalues[0])},{_fmt(c.hessian_eigenvalues[1])}\n")


# -- builtin models -----------------------------------------------------------

def _builtin_model(name: str, n: int, seed: int):
    rng = np.random.default_rng(seed)
    if name == "pentagon":
        model, cloud = random_pentagon_model(rng, n=n)
    elif name == "pentagon-bg":
        model, cloud = random_pentagon_model(rng, n=n, background=True)
    elif name == "two-gaussian":
        model = two_gaussian_model()
        cloud = model.sample(n, rng)
    else:
        raise UsageError(f"unknown builtin model {name!r} "
                         "(choose pentagon, pentagon-bg, or two-gaussian)")
    return model, cloud


def _load_model(args) -> FilamentModel:
    if not getattr(args, "model_json", None):
        raise UsageError("this command needs --model-json (a saved model file)")
    p = Path(args.model_json)
    if not p.exists():
        raise UsageError(f"model file not found: {p}")
    return FilamentModel.load(p)


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.seed is None:
        raise UsageError("simulate requires --seed")
    if args.model is not None and args.model_json is not None:
        raise UsageError("give either --model or --model-json, not both")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model_json is not None:
        model = _load_model(args)
        cloud = model.sample(args.n, np.random.default_rng(args.seed))
        source = f"custom:{args.model_json}"
    else:
        name = args.model if args.model is not None else "pentagon"
        model, cloud = _builtin_model(name, args.n, args.seed)
        source = name
    write_points_csv(out / "points.csv", cloud.points)
    doc = model.to_dict()
    doc["meta"] = {
        "builtin": source,
        "seed": args.seed,
        "n": args.n,
        "notes": ("pentagon vertices drawn uniformly on the unit square and "
                  "ordered by angle; per-side counts allocated by largest "
                  "remainder; side weight density beta(1/2, 1/2) rescaled to "
                  "each side length"),
    }
    with open(out / "model.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
    print(f"wrote {out / 'points.csv'} ({cloud.n} rows) and {out / 'model.json'}")
    return 0


def _parse_bounds(text):
    parts = [float(t) for t in text.split(",")]
    if len(parts) != 4:
        raise UsageError("--bounds needs xmin,xmax,ymin,ymax")
    return tuple(parts)


def cmd_estimate(args) -> int:
    t_start = time.time()
    cloud = read_points_csv(args.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kernel = KernelSpec()

    if args.h is not None and args.nu is not None:
        h, nu = args.h, args.nu
    else:
        plan = default_bandwidths(cloud.n, cloud.spread, c_h=args.c_h, c_nu=args.c_nu)
        h = args.h if args.h is not None else plan.h
        nu = args.nu if args.nu is not None else plan.nu
    if h <= 0 or nu <= 0:
        raise UsageError("bandwidths must be positive")

    bounds = _parse_bounds(args.bounds) if args.bounds else cloud.bounds(margin=0.05)
    grid = GridSpec.from_bounds(bounds, args.grid)
    cfg = kde_flow_config(cloud, kernel, h)

    if args.tracer == "meanshift":
        paths = mean_shift_paths(cloud, kernel, h, cloud.points, cfg)
    elif args.tracer == "flow":
        from .kernels import KernelDensityField
        paths = trace_ascent_paths(KernelDensityField(cloud, kernel, h),
                                   cloud.points, cfg)
    else:
        raise UsageError(f"unknown tracer {args.tracer!r}")

    ensemble = PathEnsemble(paths)
    fld = path_density_field(ensemble, kernel, nu, grid,
                             workers=worker_count(args.workers))
    lam = quantile_threshold(fld, cloud, args.quantile)
    mask_set = level_set(fld, lam)

    if args.trim == "auto":
        trims = [p.trim_hint for p in paths]
    else:
        try:
            trims = [int(args.trim)] * len(paths)
        except ValueError:
            raise UsageError("--trim must be an integer or 'auto'")

    write_paths_csv(out / "paths.csv", paths)
    write_field_csv(out / "field.csv", fld)
    write_mask_csv(out / "levelset.csv", mask_set.mask, grid)
    svg = render_four_panel_svg(
        cloud.points,
        [p.vertices for p in paths],
        [p.vertices[min(t, len(p.vertices) - 1):] for p, t in zip(paths, trims)],
        mask_set.mask, grid, bounds,
    )
    with open(out / "figure.svg", "w", encoding="utf-8") as f:
        f.write(svg)
    with open(out / "estimate.json", "w", encoding="utf-8") as f:
        json.dump({"n": cloud.n, "h": h, "nu": nu, "quantile": args.quantile,
                   "level": lam, "grid": args.grid, "bounds": list(bounds),
                   "tracer": args.tracer}, f, indent=1, sort_keys=True)
    print(f"estimate done in {time.time() - t_start:.1f}s "
          f"(h={h:.4g}, nu={nu:.4g}, level={lam:.4g})", file=sys.stderr)
    print(f"wrote paths.csv, field.csv, levelset.csv, figure.svg in {out}")
    return 0


def cmd_oracle(args) -> int:
    model = _load_model(args)
    if args.seed is None:
        raise UsageError("oracle requires --seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sig = model.max_sigma
    xmin, xmax, ymin, ymax = model.box
    pad = 2 * sig
    bounds = (_parse_bounds(args.bounds) if args.bounds
              else (xmin - pad, xmax + pad, ymin - pad, ymax + pad))
    grid = GridSpec.from_bounds(bounds, args.grid)

    cfg = model_flow_config(model)
    crit = find_critical_points(model, model.box, cfg)
    maxima = [c.location for c in crit if c.kind == "maximum"]
    rng = np.random.default_rng(args.seed)
    fld = oracle_field(model, model, grid, args.n_mc, rng, r1=args.r1,
                       cfg=cfg, maxima=maxima)
    write_field_csv(out / "oracle_field.csv", fld)
    write_critical_points_csv(out / "critical_points.csv", crit)
    print(f"wrote oracle_field.csv and critical_points.csv in {out}")
    return 0


def cmd_converge(args) -> int:
    if args.seed is None:
        raise UsageError("converge requires --seed")
    if args.model_json:
        model = _load_model(args)
    elif args.model == "two-gaussian":
        model = two_gaussian_model()
    else:
        raise UsageError("converge needs --model two-gaussian or --model-json")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_list = [int(t) for t in args.n.split(",")]
    xmin, xmax, ymin, ymax = model.box
    probe = GridSpec(xmin, xmax, ymin, ymax, args.probes, args.probes)
    table = convergence_experiment(model, n_list, args.reps, probe, args.seed,
                                   oracle_n_mc=args.oracle_n_mc,
                                   oracle_r1=args.oracle_r1)
    with open(out / "rate_table.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("n,replicate,sup_error\n")
        for n, rep, err in table.rows:
            f.write(f"{n},{rep},{_fmt(err)}\n")
    with open(out / "rate_summary.json", "w", encoding="utf-8") as f:
        json.dump({"slope": table.slope, "slope_stderr": table.slope_stderr,
                   "ci95": list(table.ci95),
                   "median_sup_error_by_n": table.median_by_n(),
                   "meta": table.meta}, f, indent=1, sort_keys=True)
    print(f"wrote rate_table.csv ({len(table.rows)} rows) and rate_summary.json in {out}")
    return 0


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathdensity",
        description="Detect filamentary structure in 2-D point clouds by "
                    "tracing steepest-ascent paths of a kernel density "
                    "estimate and thresholding their path density.")
    parser.add_argument("--config", default=None,
                        help="JSON file whose keys mirror the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic point cloud")
    p.add_argument("--model", default=None,
                   help="pentagon (default) | pentagon-bg | two-gaussian")
    p.add_argument("--model-json", default=None, dest="model_json",
                   help="sample from a saved custom model instead")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="trace paths and rasterize their density")
    p.add_argument("--points", required=True, help="two-column CSV (x,y)")
    p.add_argument("--out", default=".")
    p.add_argument("--h", type=float, default=None, help="KDE bandwidth")
    p.add_argument("--nu", type=float, default=None, help="path-distance bandwidth")
    p.add_argument("--c-h", type=float, default=0.125, dest="c_h")
    p.add_argument("--c-nu", type=float, default=0.125, dest="c_nu")
    p.add_argument("--grid", type=int, default=120, help="grid nodes per axis")
    p.add_argument("--bounds", default=None, help="xmin,xmax,ymin,ymax")
    p.add_argument("--quantile", type=float, default=0.9)
    p.add_argument("--trim", default="auto", help="integer or 'auto'")
    p.add_argument("--tracer", default="meanshift", help="meanshift | flow")
    p.add_argument("--workers", type=int, default=None,
                   help="overrides PATHDENSITY_WORKERS")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="Monte-Carlo truth field for a saved model")
    p.add_argument("--model-json", default=None, dest="model_json")
    p.add_argument("--out", default=".")
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--bounds", default=None)
    p.add_argument("--n-mc", type=int, default=10_000, dest="n_mc")
    p.add_argument("--r1", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("converge", help="error-vs-sample-size experiment")
    p.add_argument("--model", default="two-gaussian")
    p.add_argument("--model-json", default=None, dest="model_json")
    p.add_argument("--n", default="200,800,3200")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--probes", type=int, default=20)
    p.add_argument("--oracle-n-mc", type=int, default=100_000, dest="oracle_n_mc")
    p.add_argument("--oracle-r1", type=float, default=0.02, dest="oracle_r1")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    if "--config" in argv:
        i = argv.index("--config")
        try:
            with open(argv[i + 1], "r", encoding="utf-8") as f:
                defaults = json.load(f)
        except (OSError, json.JSONDecodeError, IndexError) as e:
            print(f"error: cannot read config: {e}", file=sys.stderr)
            return EXIT_USAGE
        for sp in parser._subparsers._group_actions[0].choices.values():
            sp.set_defaults(**{k: v for k, v in defaults.items()})

    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FlowNumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
