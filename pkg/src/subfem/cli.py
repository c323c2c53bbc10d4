"""Command line interface.

Subcommands:
  ml-eval         evaluate the Mittag-Leffler function at one point
  weights         emit convolution quadrature weights as j,omega rows
  solve           run one splitting solve from a TOML config, write probe
                  CSV (and optional VTK) output
  converge-space  spatial convergence study from a TOML config
  converge-time   temporal convergence study from a TOML config

Configs use sections [problem], [discretization], [study], [output]; see
the configs/ directory for the table reproduction recipes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from subfem.cq import bdf_gen, cq_weights
from subfem.fem import DensityLoad, LineLoad, PointLoad, build_space, export_vtk
from subfem.harness import StudyConfig, run_space_study, run_time_study
from subfem.mesh import structured_square
from subfem.special import MlParams, mittag_leffler
from subfem.splitting import FracProblem, Source, recombine, solve as split_solve


def _load_config(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _initial_from(spec):
    if spec is None:
        return None
    kind = spec["kind"]
    if kind == "point":
        return PointLoad(tuple(spec["x0"]))
    if kind == "line":
        return LineLoad(tuple(spec["start"]), tuple(spec["end"]))
    if kind == "constant":
        value = float(spec.get("value", 1.0))
        return DensityLoad(lambda p: np.full(len(p), value))
    if kind == "eigenmode":
        kx, ky = int(spec.get("kx", 1)), int(spec.get("ky", 1))
        amp = float(spec.get("amplitude", 1.0))
        return DensityLoad(lambda p: amp * np.sin(kx * np.pi * p[:, 0])
                           * np.sin(ky * np.pi * p[:, 1]))
    raise ValueError(f"unknown initial data kind {kind!r}")


def _poly_derivs(coeffs, count):
    """Callables for g(t) = sum_i c_i t^i and its derivatives."""
    out = []
    c = np.asarray(coeffs, dtype=float)
    for _ in range(count):
        cc = c.copy()
        out.append(lambda t, cc=cc: float(np.polynomial.polynomial.polyval(t, cc))
                   if len(cc) else 0.0)
        c = np.polynomial.polynomial.polyder(c) if len(c) > 1 else np.array([])
    return tuple(out)


def _source_from(spec):
    if spec is None:
        return None
    g = spec.get("g", "one")
    if g == "one":
        derivs = _poly_derivs([1.0], 10)
    elif isinstance(g, list):
        derivs = _poly_derivs(g, max(len(g) + 2, 10))
    else:
        raise ValueError("source g must be 'one' or a coefficient list")
    f = _initial_from(spec["f"])
    return Source(derivs, f, taylor_depth=spec.get("taylor_depth"))


def _problem_from(cfg, tau=None):
    p = cfg["problem"]
    d = cfg.get("discretization", {})
    return FracProblem(
        alpha=float(p["alpha"]),
        T=float(p.get("T", 1.0)),
        m=int(p.get("m", 0)),
        k=int(p.get("k", 1)),
        tau=float(tau if tau is not None else d.get("tau", 1.0 / 32.0)),
        initial=_initial_from(p.get("initial")),
        source=_source_from(p.get("source")),
    )


def _study_from(cfg, kind):
    s = cfg["study"]
    d = cfg.get("discretization", {})
    o = cfg.get("output", {})
    tau_ref = s.get("tau_ref")
    problem = _problem_from(cfg, tau=tau_ref)
    for key in ("csv", "markdown", "figure"):
        if o.get(key):
            Path(o[key]).parent.mkdir(parents=True, exist_ok=True)
    return StudyConfig(
        kind=kind,
        problem=problem,
        ladder=tuple(s["ladder"]),
        r=int(d.get("r", 1)),
        strategy=d.get("strategy", "plain"),
        h_ref=s.get("h_ref"),
        tau_ref=tau_ref,
        gamma=s.get("gamma"),
        oracle=bool(s.get("oracle", False)),
        oracle_truncation=int(s.get("truncation", 200)),
        cauchy=bool(s.get("cauchy", True)),
        theoretical=s.get("theoretical", {}),
        csv=o.get("csv"),
        markdown=o.get("markdown"),
        figure=o.get("figure"),
        label=s.get("label", ""),
    )


def _cmd_ml_eval(args):
    val = mittag_leffler(MlParams(args.alpha, args.beta), args.x)
    print(repr(val))
    return 0


def _cmd_weights(args):
    w = cq_weights(bdf_gen(args.k), args.beta, args.n)
    rows = [f"{j},{w.omega[j]:.17g}" for j in range(args.n + 1)]
    text = "j,omega\n" + "\n".join(rows) + "\n"
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        with open(args.csv, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_solve(args):
    cfg = _load_config(args.config)
    d = cfg.get("discretization", {})
    o = cfg.get("output", {})
    problem = _problem_from(cfg)
    h = float(d.get("h", 1.0 / 16.0))
    n = int(round(1.0 / h))
    space = build_space(structured_square(n), int(d.get("r", 1)))
    strategy = d.get("strategy", "plain")
    graded_space = None
    if strategy == "graded_plain":
        from subfem.mesh import GradingSpec, graded_refine

        load = problem.initial
        gmesh = graded_refine(structured_square(n),
                              GradingSpec(centers=(load.start, load.end),
                                          gamma=float(d["gamma"]), h=h))
        graded_space = build_space(gmesh, int(d.get("r", 1)))
    sol = split_solve(space, problem, strategy=strategy,
                      graded_space=graded_space)
    probes = np.asarray(o.get("probes", [[0.5, 0.5]]), dtype=float)

    csv_path = o.get("csv", "solution_probes.csv")
    Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w") as fh:
        heads = ",".join(f"u(x{i})" for i in range(len(probes)))
        fh.write(f"t,{heads}\n")
        start = 1 if problem.m >= 1 else 0
        for step in range(start, problem.n_steps + 1):
            u = recombine(sol, step)
            vals = u.evaluate(probes)
            cells = ",".join(f"{v:.12e}" for v in vals)
            fh.write(f"{step * problem.tau:.12g},{cells}\n")
    print(f"wrote {csv_path}")
    if o.get("vtk"):
        u = recombine(sol, problem.n_steps)
        export_vtk(u.fe, o["vtk"])
        print(f"wrote {o['vtk']}")
    return 0


def _cmd_converge(args, kind):
    cfg = _study_from(_load_config(args.config), kind)
    report = run_space_study(cfg) if kind == "space" else run_time_study(cfg)
    for c in report.columns:
        orders = ["-" if o is None else f"{o:.2f}" for o in
                  [r.orders[c] for r in report.rows]]
        print(f"{c}: E = "
              + " ".join(f"{r.errors[c]:.3e}" for r in report.rows)
              + " | orders " + " ".join(orders))
    for key in ("csv", "markdown", "figure"):
        path = getattr(cfg, key)
        if path:
            print(f"wrote {path}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="subfem",
                                     description="Subdiffusion splitting FEM")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ml-eval", help="evaluate E_{alpha,beta}(x)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.set_defaults(func=_cmd_ml_eval)

    p = sub.add_parser("weights", help="convolution quadrature weights")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("solve", help="single solve with probe output")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("converge-space", help="spatial convergence study")
    p.add_argument("--config", required=True)
    p.set_defaults(func=lambda a: _cmd_converge(a, "space"))

    p = sub.add_parser("converge-time", help="temporal convergence study")
    p.add_argument("--config", required=True)
    p.set_defaults(func=lambda a: _cmd_converge(a, "time"))

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
