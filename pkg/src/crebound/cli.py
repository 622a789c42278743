"""Command line interface.

::

    crebound run CASE.ini [--output DIR] [--quiet]
    crebound fixtures list
    crebound fixtures write NAME PATH
    crebound mesh info PATH|fixture:NAME

Exit status is 0 on success, 2 for invalid input (configuration, mesh,
unwritable output) and 3 for a numerical failure.
"""
import argparse
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import FIXTURE_PREFIX, load_config
from .errors import ConfigError, NumericalError, ValidationError
from .estimator import Method, admissible_stress, cre, effectivity
from .export import density, export_fields, write_summary
from .fem import assemble_solve
from .fixtures import FIXTURES, get_fixture
from .mesh import read_mesh, write_mesh
from .reference import reference_error

__all__ = ["main", "run_case", "CaseResult", "EXIT_OK", "EXIT_INVALID", "EXIT_NUMERICAL"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class CaseResult:
    config: object
    solution: object
    reference: object
    reports: list
    rows: list
    files: dict = field(default_factory=dict)


def _label(report):
    return report.method.lower() if report.cost is None else f"{report.method.lower()}_{report.cost}"


def _normalized_times(reports, times, costs):
    """Wall-clock of each report relative to EET with the same cost.

    SPET, which has no cost function, is compared with the first configured
    EET cost. Without an EET run the column is NaN.
    """
    eet = {r.cost: t for r, t in zip(reports, times) if r.method == Method.EET}
    out = []
    for r, t in zip(reports, times):
        if r.method == Method.EET:
            out.append(1.0)
            continue
        key = r.cost if r.cost is not None else next((c for c in costs if c in eet), None)
        base = eet.get(key)
        out.append(t / base if base else float("nan"))
    return out


def run_case(config, output=None, log=None):
    """Solve, estimate with every configured method and write the artifacts."""
    log = log or (lambda msg: None)
    mesh, material, loads = config.build()
    name = config.fixture or Path(config.mesh).name
    log(f"case {name}: {mesh.n_nodes} nodes, {mesh.n_elements} elements")
    try:
        solution = assemble_solve(mesh, material, loads)
        reference = reference_error(solution, config.reference_levels)
    except NumericalError as exc:
        raise type(exc)(f"{name}: reference computation: {exc}") from exc
    log(f"reference error {reference.value:.6g} ({config.reference_levels} levels, "
        f"{reference.method})")

    reports, times = [], []
    for method in config.methods:
        costs = (None,) if method == Method.SPET else config.costs
        for cost in costs:
            walls = []
            for _ in range(config.repeats):
                t0 = time.perf_counter()
                try:
                    adm, phases = admissible_stress(solution, method, cost or "J0", config.k,
                                                    config.penalty, config.pinning)
                    _, local = cre(solution, adm)
                except NumericalError as exc:
                    where = method if cost is None else f"{method} {cost}"
                    raise type(exc)(f"{name}: {where}: {exc}") from exc
                walls.append(time.perf_counter() - t0)
            report = effectivity(method, cost, local, reference, phases)
            reports.append(report)
            times.append(statistics.median(walls))
            log(f"{method:5s} {cost or '-':2s}  theta {report.theta:.6g}  eta {report.eta:.4f}  "
                f"bound {'ok' if report.bound_holds else 'VIOLATED'}")

    cpu = _normalized_times(reports, times, config.costs)
    rows = [{"method": r.method, "cost": r.cost or "-", "theta": r.theta,
             "ref_error": r.ref_error, "eta": r.eta, "cpu_normalized": c}
            for r, c in zip(reports, cpu)]

    out_dir = Path(output) if output is not None else config.output_dir()
    maps = {"ref_error": reference.per_element,
            "ref_density": density(mesh, reference.per_element)}
    for r in reports:
        lab = _label(r)
        maps[f"{lab}_theta"] = r.contributions
        maps[f"{lab}_density"] = density(mesh, r.contributions)
        maps[f"{lab}_eta"] = r.local_eta
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = write_summary(rows, out_dir / "summary.csv")
        vtk, csv_path = export_fields(mesh, maps, out_dir)
    except OSError as exc:
        raise ConfigError(f"cannot write results to {out_dir}: {exc.strerror or exc}") from None
    files = {"summary": summary, "vtk": vtk, "csv": csv_path}
    return CaseResult(config, solution, reference, reports, rows, files)


def _format_rows(rows):
    head = f"{'method':7s}{'cost':>5s}{'theta':>16s}{'ref_error':>16s}{'eta':>10s}{'cpu':>8s}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['method']:7s}{r['cost']:>5s}{r['theta']:16.8g}{r['ref_error']:16.8g}"
                     f"{r['eta']:10.4f}{r['cpu_normalized']:8.2f}")
    return "\n".join(lines)


def _cmd_run(args):
    config = load_config(args.config)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    result = run_case(config, output=args.output, log=log)
    print(_format_rows(result.rows))
    if not args.quiet:
        for kind, path in result.files.items():
            print(f"{kind}: {path}", file=sys.stderr)
    return EXIT_OK


def _cmd_fixtures_list(args):
    for name in sorted(FIXTURES):
        fx = get_fixture(name)
        print(f"{name:26s}{fx.mesh.n_elements:6d} elements  {fx.description}")
    return EXIT_OK


def _cmd_fixtures_write(args):
    fx = get_fixture(args.name)
    try:
        write_mesh(fx.mesh, args.path)
    except OSError as exc:
        raise ConfigError(f"cannot write {args.path}: {exc.strerror or exc}") from None
    print(f"wrote {args.path}")
    return EXIT_OK


def _cmd_mesh_info(args):
    if args.path.startswith(FIXTURE_PREFIX):
        mesh = get_fixture(args.path[len(FIXTURE_PREFIX):]).mesh
    else:
        try:
            mesh = read_mesh(args.path)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.path}: {exc.strerror or exc}") from None
    for key, value in mesh.summary().items():
        if isinstance(value, dict):
            value = ", ".join(f"{k}={v}" for k, v in value.items()) or "-"
        elif isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key:14s}{value}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crebound",
        description="Guaranteed energy-norm error bounds for 2D linear elasticity.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the estimators described by a case file")
    run.add_argument("config", help="case file (INI format)")
    run.add_argument("-o", "--output", help="output directory (overrides the case file "
                     "and CREBOUND_OUTPUT_DIR)")
    run.add_argument("-q", "--quiet", action="store_true", help="print the table only")
    run.set_defaults(func=_cmd_run)

    fixtures = sub.add_parser("fixtures", help="built-in test problems")
    fsub = fixtures.add_subparsers(dest="action", required=True)
    fsub.add_parser("list", help="list the fixtures").set_defaults(func=_cmd_fixtures_list)
    fw = fsub.add_parser("write", help="write a fixture mesh to a file")
    fw.add_argument("name")
    fw.add_argument("path")
    fw.set_defaults(func=_cmd_fixtures_write)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="action", required=True)
    info = msub.add_parser("info", help="print mesh statistics")
    info.add_argument("path", help="mesh file or fixture:NAME")
    info.set_defaults(func=_cmd_mesh_info)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
