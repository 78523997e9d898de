"""Command-line entry point.

    perfhom [--config FILE] [--out DIR] [--tol T] [--refine N] COMMAND

Commands: cell, effective, macro, fine --eps E, converge, twoscale.
Exit codes: 0 success, 2 configuration or mesh error, 3 solver failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import harness
from .corrector import galerkin_residual
from .errors import ConfigError, PerfhomError
from .fem import h1_seminorm, l2_norm
from .vtk import write_vtk


def _common(default=None) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they do not clobber flags given before the command
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    p.add_argument("--config", help="config file (default: bundled default.cfg)")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("--tol", type=float, help="solver tolerance (overrides solver.tol)")
    p.add_argument("--refine", type=int, help="cell mesh refinements (overrides mesh.cell_refine)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfhom", description=__doc__.split("\n\n")[0], parents=[_common()])
    common = _common(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("cell", parents=[common], help="solve the corrector problems and write cell.vtk")
    eff = sub.add_parser("effective", parents=[common], help="print and save the effective model")
    eff.add_argument("--study", type=int, metavar="LEVELS", help="Richardson study over LEVELS refinements")
    sub.add_parser("macro", parents=[common], help="solve the homogenized problem")
    fine = sub.add_parser("fine", parents=[common], help="solve the perforated problem for one eps")
    fine.add_argument("--eps", required=True, help="period, e.g. 1/8")
    sub.add_parser("converge", parents=[common], help="full eps sweep, writes report.csv")
    sub.add_parser("twoscale", parents=[common], help="pairing diagnostics, writes twoscale.csv")
    return parser


def _config(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    changes = {}
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.refine is not None:
        changes["cell_refine"] = args.refine
    if args.out is not None:
        changes["out_dir"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_cell(cfg, args) -> None:
    cs, model = harness.effective_stage(cfg)
    path = write_vtk(
        _outdir(cfg) / "cell.vtk", cs.mesh, {f"chi_{i}{j}": cs.chi[(i, j)] for i, j in ((0, 0), (1, 1), (0, 1))}
    )
    print(f"cell mesh: {cs.mesh.n_nodes} nodes, {cs.mesh.n_triangles} triangles, h = {cs.mesh.h:.6g}")
    for ij in ((0, 0), (1, 1), (0, 1)):
        rep = cs.reports[ij]
        print(f"chi_{ij[0]}{ij[1]}: {rep.iterations} CG iterations, residual {rep.relative_residual:.3e}, "
              f"L2 {l2_norm(cs.mesh, cs.chi[ij]):.6e}")
    print(f"galerkin residual: {galerkin_residual(cs):.3e}")
    print(f"wrote {path}")


def cmd_effective(cfg, args) -> None:
    out = _outdir(cfg)
    if args.study:
        study = harness.convergence_study(cfg, args.study)
        for h, d in zip(study.h[1:], study.differences):
            print(f"h = {h:.6g}: |q_h - q_2h| = {d:.6e}")
        print("difference ratios: " + ", ".join(f"{r:.4f}" for r in study.ratios))
        text = harness.fixture_text(study, cfg)
        (out / "effective_richardson.txt").write_text(text)
        print(text, end="")
        return
    _, model = harness.effective_stage(cfg)
    text = model.to_text()
    (out / "effective.txt").write_text(text)
    print(text, end="")


def cmd_macro(cfg, args) -> None:
    _, model = harness.effective_stage(cfg)
    sol = harness.macro_stage(cfg, model)
    path = write_vtk(_outdir(cfg) / "macro.vtk", sol.mesh, {"u0": sol.u0}, {"sigma0": sol.stress})
    print(f"macro mesh: {sol.mesh.n_nodes} nodes; CG {sol.report.iterations} iterations")
    print(f"compliance = {sol.compliance!r}")
    print(f"||u0||_L2 = {l2_norm(sol.mesh, sol.u0)!r}, |u0|_H1 = {h1_seminorm(sol.mesh, sol.u0)!r}")
    print(f"wrote {path}")


def cmd_fine(cfg, args) -> None:
    eps = harness._number(args.eps, "--eps")
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"--eps must lie in (0, 1), got {eps}")
    sol = harness.fine_stage(cfg, eps)
    path = write_vtk(_outdir(cfg) / f"fine_eps{eps:.6g}.vtk", sol.mesh, {"u_eps": sol.u_eps})
    print("eps,h,n_dofs,cg_iterations,energy_norm,surface_l2")
    print(f"{eps!r},{sol.mesh.h!r},{sol.n_dofs},{sol.report.iterations},{sol.energy_norm!r},{sol.surface_l2!r}")
    print(f"wrote {path}")


def cmd_converge(cfg, args) -> None:
    state = harness.run_full(cfg)
    out = _outdir(cfg)
    harness.write_artifacts(state, out)
    sys.stdout.write(state.report.to_csv())
    failed = [k for k, v in state.report.checks.items() if not all(v)]
    print("checks: " + ("all passed" if not failed else "FAILED " + ", ".join(failed)))
    print(f"wrote {out / 'report.csv'}")


def cmd_twoscale(cfg, args) -> None:
    state = harness.run_full(cfg)
    text = harness.twoscale_table(state)
    out = _outdir(cfg)
    (out / "twoscale.csv").write_text(text)
    sys.stdout.write(text)
    print(f"wrote {out / 'twoscale.csv'}")


COMMANDS = {
    "cell": cmd_cell,
    "effective": cmd_effective,
    "macro": cmd_macro,
    "fine": cmd_fine,
    "converge": cmd_converge,
    "twoscale": cmd_twoscale,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except PerfhomError as exc:
        print(f"perfhom {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
