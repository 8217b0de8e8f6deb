"""Command line interface.

Subcommands
-----------
build            vertex and edge tables of a level
diagnose         constants of the assembled form at a level
solve-elliptic   weak solution for the configured data ``f``
solve-parabolic  theta-scheme trajectory from the configured ``u0``
converge         single-space, varying-space, diagonal or metric experiments

Every CSV starts with ``# key=value`` lines echoing the inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, evaluate_spec, function_spec, load_config, parse_config
from .exceptions import (
    BoundViolationError,
    ConvergenceError,
    HardyLevelError,
    InfeasibleCoefficientsError,
    StructureError,
)
from .experiments import (
    ExperimentSpec,
    diagnose,
    run_diagonal,
    run_single_space,
    run_varying_space,
)
from .fields import SymbolicField
from .forms import assemble
from .harmonic import assemble_form
from .metric_graph import assemble_metric
from .solvers import solve_elliptic, solve_parabolic

__all__ = ["main", "build_parser"]

EXIT_USAGE = 2
EXIT_FAILURE = 1


@contextmanager
def _open_out(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with Path(path).open("w", newline="") as fh:
            yield fh


def _write_csv(path, header, columns, rows):
    with _open_out(path) as fh:
        for key, value in header.items():
            fh.write(f"# {key}={_fmt_meta(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _fmt_meta(value):
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, default=float, separators=(",", ":"))
    return _fmt(value)


def _write_plot_data(directory, name, x, y):
    """One ``x,y`` series file per column."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    with (path / f"{name}.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"])
        for xi, yi in zip(x, y):
            writer.writerow([_fmt(xi), _fmt(yi)])


def _config(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return parse_config({"preset": args.preset})


def _header(args, cfg, **extra):
    out = {"command": args.command, "structure": cfg.hs.structure.name,
           "config": getattr(args, "config", None) or f"preset:{args.preset}",
           "measure": cfg.measure.weights.tolist()}
    out.update(extra)
    return out


def cmd_build(args):
    cfg = _config(args)
    table = cfg.hs.level(args.level)
    rows = [(vid, lvl, word, alpha) for vid, lvl, word, alpha in table.vertex_rows()]
    header = _header(args, cfg, level=args.level, n_vertices=table.n_vertices)
    _write_csv(args.vertices, header, ("vertex_id", "level", "word", "boundary_index"), rows)
    if args.edges:
        form = assemble_form(cfg.hs, args.level)
        _write_csv(args.edges, dict(header, n_edges=form.n_edges),
                   ("p", "q", "conductance"), form.edge_rows())
    return 0


def cmd_diagnose(args):
    cfg = _config(args)
    dump = diagnose(cfg.hs, cfg.measure, cfg.coefficients, args.level)
    notes = dump.pop("notes")
    rows = [(k, v) for k, v in dump.items()]
    rows.extend(("note", n) for n in notes)
    _write_csv(args.out, _header(args, cfg, level=args.level), ("key", "value"), rows)
    return 0


def _assembled(args, cfg):
    if args.mode == "metric":
        return assemble_metric(cfg.hs, cfg.measure, cfg.coefficients, args.level,
                               subdiv=args.subdiv)
    return assemble(cfg.hs, cfg.measure, cfg.coefficients, args.level)


def _node_data(form, values):
    """Vertex data, interpolated to metric nodes when needed."""
    if hasattr(form, "metric"):
        return form.metric.interpolate(values)
    return values


def _node_columns(form):
    if hasattr(form, "metric"):
        return form.metric.node_edge_offset
    return None


def cmd_solve_elliptic(args):
    cfg = _config(args)
    form = _assembled(args, cfg)
    f = _node_data(form, cfg.data_values("f", args.level))
    strict = args.mode == "graph" and not args.no_strict
    sol = solve_elliptic(form, f, method=args.method, strict=strict, shift=args.shift)
    header = _header(args, cfg, level=args.level, mode=args.mode, subdiv=args.subdiv,
                     residual=sol.residual, bound_ratio=sol.bound_ratio, shift=sol.shift)
    extra = _node_columns(form)
    cols = ("vertex_id", "value") + (("edge_id", "offset") if extra is not None else ())
    rows = []
    for p, value in enumerate(sol.u):
        row = (p, value)
        if extra is not None:
            row += (int(extra[0][p]), float(extra[1][p]))
        rows.append(row)
    _write_csv(args.out, header, cols, rows)
    if args.plot_data:
        _write_plot_data(args.plot_data, "solution", np.arange(sol.u.size), sol.u)
    return 0


def cmd_solve_parabolic(args):
    cfg = _config(args)
    form = _assembled(args, cfg)
    u0 = _node_data(form, cfg.data_values("u0", args.level))
    strict = args.mode == "graph" and not args.no_strict
    traj = solve_parabolic(form, u0, args.t_final, args.steps, theta=args.theta,
                           richardson_tol=args.richardson_tol, method=args.method,
                           strict=strict, shift=args.shift)
    header = _header(args, cfg, level=args.level, mode=args.mode, subdiv=args.subdiv,
                     t_final=args.t_final, steps=traj.steps, theta=traj.theta, dt=traj.dt,
                     refinements=[[s, c] for s, c in traj.refinements], shift=traj.shift)
    extra = _node_columns(form)
    cols = ("vertex_id", "value", "time") + (("edge_id", "offset") if extra is not None else ())
    rows = []
    for t, snap in zip(traj.times, traj.values):
        for p, value in enumerate(snap):
            row = (p, value, t)
            if extra is not None:
                row += (int(extra[0][p]), float(extra[1][p]))
            rows.append(row)
    _write_csv(args.out, header, cols, rows)
    if args.plot_data:
        _write_plot_data(args.plot_data, "norm", traj.times, traj.norms)
        _write_plot_data(args.plot_data, "smoothing", traj.times, traj.smoothing)
    return 0


def _levels(exp, args):
    if args.levels:
        lo, hi = args.levels
    else:
        lo, hi = exp.get("levels", [2, 5])
    return tuple(range(int(lo), int(hi) + 1))


def _spec(args, cfg, levels, reference):
    exp = cfg.experiment
    manufactured = exp.get("manufactured")
    mode = "metric" if args.mode == "metric" else exp.get("mode", "graph")
    return ExperimentSpec(
        hs=cfg.hs, measure=cfg.measure, coefficients=cfg.coefficients,
        equation=args.equation or exp.get("equation", "elliptic"),
        data=None,
        levels=levels,
        reference_level=reference,
        t_final=float(exp.get("t_final", 0.5)),
        steps=int(exp.get("steps", 200)),
        theta=float(exp.get("theta", 1.0)),
        mode=mode,
        subdiv=int(args.subdiv if args.subdiv is not None else exp.get("subdiv", 1)),
        manufactured=None if manufactured is None else function_spec(manufactured, cfg.hs),
        strict=not args.no_strict and bool(exp.get("strict", True)),
        seed=int(args.seed if args.seed is not None else exp.get("seed", 0)),
    )


def _with_data(spec, cfg, level):
    key = "u0" if spec.equation == "parabolic" else "f"
    return replace(spec, data=cfg.data_values(key, level))


def _perturbation(cfg, spec, level):
    """Perturbation directions; random ones come from the seeded generator."""
    table = cfg.experiment.get("perturbation", {"a": "random"})
    rng = np.random.default_rng(spec.seed)
    out = {}
    n = cfg.hs.level(level).n_vertices
    for key in ("a", "c"):
        if key in table:
            value = table[key]
            out[key] = (rng.uniform(-1.0, 1.0, n) if value == "random"
                        else evaluate_spec(value, cfg.hs, level))
    for key in ("b", "b_hat"):
        if key in table:
            terms = table[key] if isinstance(table[key], list) else [table[key]]
            out[key] = SymbolicField(tuple(
                (function_spec(t["g"], cfg.hs), function_spec(t["f"], cfg.hs)) for t in terms))
    return out


def cmd_converge(args):
    cfg = _config(args)
    exp = cfg.experiment
    if args.mode == "single":
        level = int(args.level if args.level is not None else exp.get("level", 5))
        spec = _with_data(_spec(args, cfg, (level,), level), cfg, level)
        ns = tuple(int(n) for n in exp.get("ns", [1, 2, 4, 8, 16, 32, 64]))
        amplitude = float(args.amplitude if args.amplitude is not None
                          else exp.get("amplitude", 1e-4))
        table = run_single_space(spec, _perturbation(cfg, spec, level), ns, amplitude)
    else:
        levels = _levels(exp, args)
        reference = int(args.reference_level if args.reference_level is not None
                        else exp.get("reference_level", max(levels) + 2))
        spec = _with_data(_spec(args, cfg, levels, reference), cfg, reference)
        if args.mode == "diagonal":
            target = exp.get("a_target")
            if target is None:
                raise ConfigError("diagonal experiments need experiment.a_target")
            a_target = evaluate_spec(target, cfg.hs, reference)
            ns = tuple(int(n) for n in exp.get("ns", [0, 1, 2]))
            table = run_diagonal(spec, a_target, ns)
        else:
            table = run_varying_space(spec)
    header = _header(args, cfg, **table.meta)
    _write_csv(args.out, header, table.columns, table.rows)
    if args.plot_data:
        x = table.column(table.columns[0])
        for col in ("sup_error", "l2_error"):
            _write_plot_data(args.plot_data, col, x, table.column(col))
    return 0


def _add_source(p):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--config", help="TOML configuration file")
    group.add_argument("--preset", default="sg", choices=("interval", "sg", "vicsek"),
                       help="built-in structure when no config is given (default: sg)")


def _add_solver_flags(p):
    p.add_argument("--level", type=int, default=4, help="level m (default: 4)")
    p.add_argument("--mode", choices=("graph", "metric"), default="graph")
    p.add_argument("--subdiv", type=int, default=1,
                   help="interior nodes per edge in metric mode (default: 1)")
    p.add_argument("--method", default="auto", choices=("auto", "dense", "splu", "bicgstab"))
    p.add_argument("--shift", action="store_true",
                   help="solve the shifted problem when c0 <= 0")
    p.add_argument("--no-strict", action="store_true",
                   help="skip the feasibility requirement")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--plot-data", metavar="DIR", help="also write x,y series files")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="resistpde",
        description="Elliptic and parabolic problems on self-similar resistance spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="vertex and edge tables of a level")
    _add_source(p)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--vertices", help="vertex CSV (default: stdout)")
    p.add_argument("--edges", help="edge CSV with p,q,conductance")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("diagnose", help="constants of the form at a level")
    _add_source(p)
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("solve-elliptic", help="weak solution of L u = f")
    _add_source(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve_elliptic)

    p = sub.add_parser("solve-parabolic", help="theta-scheme for u' = L u")
    _add_source(p)
    _add_solver_flags(p)
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--richardson-tol", type=float)
    p.set_defaults(func=cmd_solve_parabolic)

    p = sub.add_parser("converge", help="convergence experiments")
    _add_source(p)
    p.add_argument("--mode", required=True,
                   choices=("single", "varying", "diagonal", "metric"),
                   help="metric runs the varying-space experiment on metric graphs")
    p.add_argument("--equation", choices=("elliptic", "parabolic"))
    p.add_argument("--levels", type=int, nargs=2, metavar=("M_LO", "M_HI"))
    p.add_argument("--level", type=int, help="working level of single-space runs")
    p.add_argument("--reference-level", type=int)
    p.add_argument("--subdiv", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-strict", action="store_true")
    p.add_argument("--out")
    p.add_argument("--plot-data", metavar="DIR")
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StructureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleCoefficientsError, HardyLevelError, BoundViolationError,
            ConvergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
