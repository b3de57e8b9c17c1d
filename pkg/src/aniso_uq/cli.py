"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure.
The number of worker threads for sample solves is read from
``ANISO_UQ_THREADS`` (default 1).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import run_checks
from .config import format_config, parse_config
from .covariance import DEFAULT_MODEL
from .errors import AnisoUQError, DomainError, NumericalError, ResourceError, StructureError, ValidationError
from .fem import example_bvp, fe_norm, solve_sample
from .kl import build_kl
from .mesh import MAX_LEVEL, BoundaryTag, build_cube_mesh
from .quadrature import halton_rule, mc_rule, mc_sample_count, qmc_sample_count, sg_level_schedule, sg_rule, sg_weights
from .uq import CSV_COLUMNS, convergence_study
from .vtk import write_vtk

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _level(text):
    value = int(text)
    if not 0 <= value <= MAX_LEVEL:
        raise argparse.ArgumentTypeError(f"level must lie in 0..{MAX_LEVEL}")
    return value


def cmd_mesh_info(args, out):
    mesh = build_cube_mesh(args.level)
    areas = mesh.area_by_tag()
    print(f"level: {mesh.level}", file=out)
    print(f"tets: {mesh.n_tets}", file=out)
    print(f"vertices: {mesh.n_vertices}", file=out)
    print(f"boundary faces: {len(mesh.boundary_faces)}", file=out)
    print(f"volume: {mesh.volumes.sum():.15g}", file=out)
    for tag in BoundaryTag:
        print(f"area {tag.name}: {areas[tag]:.15g}", file=out)
    if args.vtk:
        write_vtk(args.vtk, mesh, title=f"unit cube level {mesh.level}")


def cmd_kl(args, out):
    kl = build_kl(build_cube_mesh(args.level), DEFAULT_MODEL)
    print(f"# M={kl.M}", file=out)
    print(f"# residual_rel_trace={kl.residual_rel_trace:.6e}", file=out)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["k", "gamma"])
    for k, g in enumerate(kl.gamma):
        writer.writerow([k, f"{g:.12e}"])


def cmd_rule(args, out):
    method = args.method.upper()
    M = args.dim if args.dim is not None else build_kl(build_cube_mesh(args.level), DEFAULT_MODEL).M
    if method == "MC":
        rule = mc_rule(M, mc_sample_count(args.level), [args.seed, args.level])
    elif method == "QMC":
        rule = halton_rule(M, qmc_sample_count(args.level, args.delta))
    else:
        if args.dim is not None:
            raise ValidationError("--dim is not supported for SG; its weights come from the level's expansion")
        kl = build_kl(build_cube_mesh(args.level), DEFAULT_MODEL)
        rule = sg_rule(sg_level_schedule(args.level), M, sg_weights(kl.gamma[1:]))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["index"] + [f"y_{k + 1}" for k in range(M)] + ["weight"])
    for i, (y, w) in enumerate(zip(rule.nodes, rule.weights)):
        writer.writerow([i] + [repr(float(v)) for v in y] + [repr(float(w))])


def cmd_solve(args, out):
    mesh = build_cube_mesh(args.level)
    kl = build_kl(mesh, DEFAULT_MODEL)
    y = np.zeros(kl.M)
    given = np.asarray(args.y or [], dtype=float)
    if len(given) > kl.M:
        raise ValidationError(f"{len(given)} parameters given but the expansion has M={kl.M}")
    y[: len(given)] = given
    u = solve_sample(mesh, kl, args.a, y, example_bvp(args.example), rtol=args.rtol)
    path = Path(args.output or f"solve_example{args.example}_level{args.level}.vtk")
    write_vtk(path, mesh, {"u": u}, title=f"example {args.example} level {args.level}")
    print(f"M: {kl.M}", file=out)
    for kind in ("L2", "H1", "W11"):
        print(f"{kind}: {fe_norm(u, kind):.12e}", file=out)
    print(f"vtk: {path}", file=out)


def plot_script(csv_name: str, example: int, methods, anchors=None) -> str:
    """gnuplot script drawing both error quantities on a log scale with a 2^-l guide.

    ``anchors`` maps a quantity to a ``(level, error)`` point the guide line
    passes through.
    """
    anchors = anchors or {}
    columns = {"err_mean_h1": CSV_COLUMNS.index("err_mean_h1") + 1, "err_var_w11": CSV_COLUMNS.index("err_var_w11") + 1}
    lines = [
        f"# plots {csv_name}; run with: gnuplot {Path(csv_name).stem}.gp",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set terminal pngcairo size 1200,500",
        f"set output '{Path(csv_name).stem}.png'",
        "set multiplot layout 1,2",
        "set logscale y 2",
        "set xlabel 'level l'",
        "set key bottom left",
        "set grid",
    ]
    for quantity, col in columns.items():
        lines.append(f"set title 'example {example}: {quantity}'")
        curves = [
            f"'{csv_name}' every ::1 using 1:(strcol(2) eq '{m}' ? ${col} : 1/0) with linespoints title '{m}'"
            for m in methods
        ]
        l0, e0 = anchors.get(quantity, (0, 1.0))
        curves.append(f"{e0!r} * 2**({l0} - x) with lines dashtype 2 title '2^{{-l}}'")
        lines.append("plot " + ", \\\n     ".join(curves))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def _anchors(rows):
    first = min(rows, key=lambda r: r.level)
    return {q: (first.level, getattr(first, q)) for q in ("err_mean_h1", "err_var_w11")}


def cmd_converge(args, out):
    config = parse_config(Path(args.config).read_text())
    out_dir = Path(args.output_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.ini").write_text(format_config(config))
    result = convergence_study(config, out_dir)
    (out_dir / f"convergence_example{config.example}.gp").write_text(
        plot_script(result.csv_path.name, config.example, config.methods, _anchors(result.rows))
    )
    if config.write_vtk:
        write_vtk(
            out_dir / f"reference_example{config.example}.vtk",
            result.reference.mesh,
            {"mean": result.reference.mean, "variance": result.reference.variance},
            title=f"reference moments example {config.example}",
        )
    for (method, quantity), rate in sorted(result.rates.items()):
        print(f"rate {method} {quantity}: {rate:.3f}", file=out)
    print(f"csv: {result.csv_path}", file=out)


def cmd_check(args, out):
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}", file=out)
    if not all(r.passed for r in results):
        raise NumericalError(f"{sum(not r.passed for r in results)} check(s) failed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aniso-uq", description="Random anisotropic diffusion on the unit cube: meshes, KL, rules, UQ.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh-info", help="mesh counts and boundary areas")
    p.add_argument("level", type=_level)
    p.add_argument("--vtk", help="also write the mesh as legacy VTK")
    p.set_defaults(func=cmd_mesh_info)

    p = sub.add_parser("kl", help="truncated expansion: M and gamma as CSV")
    p.add_argument("level", type=_level)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("rule", help="quadrature nodes and weights as CSV")
    p.add_argument("method", type=str.upper, choices=["MC", "QMC", "SG"])
    p.add_argument("level", type=_level)
    p.add_argument("--dim", type=int, help="parameter dimension (default: M of the level's expansion)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.2)
    p.set_defaults(func=cmd_rule)

    p = sub.add_parser("solve", help="solve one sample and write VTK")
    p.add_argument("example", type=int, choices=[1, 2])
    p.add_argument("level", type=_level)
    p.add_argument("--y", type=float, nargs="*", help="leading parameters; missing entries are 0")
    p.add_argument("--a", type=float, default=0.12)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("-o", "--output", help="VTK path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="convergence study from a config file")
    p.add_argument("config")
    p.add_argument("--output-dir", help="overrides output_dir from the config")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("check", help="run the invariant suite")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args, out)
    except (ValidationError, DomainError, ResourceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, StructureError, AnisoUQError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
