"""Convergence-study orchestration: mesh/step ladders, Cauchy differences,
observed orders, and report emission (CSV, markdown, log-log figure).

Space studies refine a nested mesh chain (red refinement, or graded
bisection chains for line-Dirac singular parts) at a fixed reference time
step; time studies halve the step on a fixed mesh.  Errors are Cauchy
differences between adjacent levels, optionally joined by a direct-error
column against the unit-square spectral reference.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from subfem.fem import build_space, norms
from subfem.mesh import (
    GradingSpec,
    TriMesh,
    graded_refine,
    red_refine,
    structured_square,
)
from subfem.splitting import (
    FracProblem,
    SpectralReference,
    recombine,
    singular_coefficient,
    singular_parts,
    step_regular,
)

SOLVER_FLOOR = 1e-13


@dataclass
class StudyConfig:
    """One convergence study.

    kind     "space" (mesh ladder at fixed tau_ref) or "time" (step ladder
             at fixed h_ref)
    problem  FracProblem template; tau/T are overridden per level as the
             study dictates
    ladder   decreasing h or tau values, each half the previous, >= 3
    r        Lagrange degree
    strategy singular-part strategy for m >= 1
    gamma    grading exponent for graded line-Dirac singular ladders
    oracle   attach a direct-error column against the spectral reference
    """

    kind: str
    problem: FracProblem
    ladder: tuple
    r: int
    strategy: str = "plain"
    h_ref: float | None = None
    tau_ref: float | None = None
    gamma: float | None = None
    oracle: bool = False
    oracle_truncation: int = 200
    cauchy: bool = True
    theoretical: dict = field(default_factory=dict)
    csv: str | None = None
    markdown: str | None = None
    figure: str | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("space", "time"):
            raise ValueError("kind must be 'space' or 'time'")
        lad = tuple(float(x) for x in self.ladder)
        if len(lad) < 3:
            raise ValueError("ladder needs at least 3 levels")
        for a, b in zip(lad[:-1], lad[1:]):
            if abs(a / b - 2.0) > 1e-9:
                raise ValueError("ladder must decrease by factors of 2")
        self.ladder = lad
        if self.kind == "time" and self.h_ref is None:
            raise ValueError("time study needs h_ref")
        if self.kind == "space" and self.tau_ref is None:
            raise ValueError("space study needs tau_ref")
        if not self.cauchy:
            if not self.oracle:
                raise ValueError("cauchy=False requires oracle=True")
            if self.problem.m != 0:
                raise ValueError("direct-error mode covers m = 0 studies")


@dataclass
class ReportRow:
    level: float
    errors: dict
    orders: dict
    solves: int
    wall_s: float
    floored: bool


@dataclass
class ConvergenceReport:
    kind: str
    columns: list
    rows: list
    theoretical: dict
    metadata: dict

    def column(self, name):
        return [row.errors[name] for row in self.rows]

    def orders_of(self, name):
        return [row.orders[name] for row in self.rows
                if row.orders.get(name) is not None]

    def final_order(self, name):
        orders = self.orders_of(name)
        return orders[-1] if orders else None


def observed_orders(errors):
    """Adjacent-level orders -log2(E_{j+1}/E_j); first entry None."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return out


def _assemble_report(kind, columns, levels, errors, solves, walls,
                     theoretical, metadata, floor=SOLVER_FLOOR):
    rows = []
    order_table = {c: observed_orders(errors[c]) for c in columns}
    for i, lev in enumerate(levels):
        errs = {c: errors[c][i] for c in columns}
        rows.append(ReportRow(
            level=lev,
            errors=errs,
            orders={c: order_table[c][i] for c in columns},
            solves=solves[i],
            wall_s=walls[i],
            floored=any(e < 100.0 * floor for e in errs.values())))
    return ConvergenceReport(kind, list(columns), rows, theoretical, metadata)


def _mesh_chain(ladder):
    n0 = int(round(1.0 / ladder[0]))
    if abs(n0 * ladder[0] - 1.0) > 1e-9:
        raise ValueError("ladder entries must be reciprocals of integers")
    meshes = [structured_square(n0)]
    for _ in ladder[1:]:
        meshes.append(red_refine(meshes[-1]))
    return meshes


def _graded_chain(ladder, centers, gamma):
    chain = []
    n0 = int(round(1.0 / ladder[0]))
    cur = structured_square(n0)
    for h in ladder:
        cur = graded_refine(cur, GradingSpec(centers=centers, gamma=gamma, h=h))
        chain.append(cur)
    return chain


def is_unit_square(mesh: TriMesh, tol=1e-12) -> bool:
    v = mesh.vertices
    return (abs(v[:, 0].min()) < tol and abs(v[:, 0].max() - 1.0) < tol
            and abs(v[:, 1].min()) < tol and abs(v[:, 1].max() - 1.0) < tol
            and abs(mesh.signed_areas().sum() - 1.0) < 1e-9)


def _count_solves(problem):
    # one factorized solve per time step plus the seed chain
    return problem.n_steps + 1 + problem.m


def _singular_sum(comps, alpha, t):
    """FE part of sum_j c_j(t) phi_{j,h} (closed forms cancel in
    same-correction Cauchy differences and are omitted here)."""
    acc = None
    for j, comp in enumerate(comps, start=1):
        term = singular_coefficient(alpha, j, t) * comp.fe
        acc = term if acc is None else acc + term
    return acc


def run_space_study(cfg: StudyConfig) -> ConvergenceReport:
    """Cauchy-difference spatial study at fixed tau_ref, final time T.

    m = 0 reports a single 'total' column; m >= 1 reports 'regular',
    'singular', and 'recombined' columns (Dirac corrections keep their
    closed-form parts, which cancel exactly between levels).  The
    graded_plain strategy builds a separate nested graded ladder for the
    singular column.
    """
    prob0 = cfg.problem
    problem = FracProblem(alpha=prob0.alpha, T=prob0.T, m=prob0.m, k=prob0.k,
                          tau=cfg.tau_ref, initial=prob0.initial,
                          source=prob0.source)
    meshes = _mesh_chain(cfg.ladder)
    spaces, finals, singulars, recombs = [], [], [], []
    solves, walls = [], []
    oracle_fn = None
    if cfg.oracle:
        if not is_unit_square(meshes[0]):
            from subfem.errors import UnsupportedDomainError

            raise UnsupportedDomainError(
                "the spectral reference covers the unit square only")
        ref = SpectralReference(problem, truncation=cfg.oracle_truncation)
        oracle_fn = lambda pts: ref(pts, problem.T)  # noqa: E731

    graded_chain = None
    if problem.m >= 1 and cfg.strategy == "graded_plain":
        if cfg.gamma is None:
            raise ValueError("graded_plain study needs gamma")
        load = problem.initial
        centers = (load.start, load.end)
        graded_chain = _graded_chain(cfg.ladder, centers, cfg.gamma)

    for i, h in enumerate(cfg.ladder):
        t0 = time.perf_counter()
        space = build_space(meshes[i], cfg.r)
        spaces.append(space)
        traj = step_regular(space, problem)
        finals.append(traj.final())
        if problem.m >= 1:
            if cfg.strategy == "graded_plain":
                gspace = build_space(graded_chain[i], cfg.r)
                sing = singular_parts(space, problem, cfg.strategy,
                                      graded_space=gspace)
                gsing = singular_parts(gspace, problem, "plain")
                singulars.append((sing, gspace, gsing))
            else:
                sing = singular_parts(space, problem, cfg.strategy)
                singulars.append((sing, None, None))
            from subfem.splitting import SplitSolution

            sol = SplitSolution(sing, traj, problem.alpha, problem.tau,
                                problem.m)
            recombs.append(recombine(sol, problem.n_steps))
        walls.append(time.perf_counter() - t0)
        solves.append(_count_solves(problem))

    levels = list(cfg.ladder[:-1]) if cfg.cauchy else list(cfg.ladder)
    errors, columns = {}, []
    tt = problem.T

    if not cfg.cauchy:
        # direct-error mode against the spectral reference, all levels
        columns.append("oracle")
        errors["oracle"] = [
            norms(spaces[i], finals[i], oracle_fn)["l2_error"]
            for i in range(len(levels))]
        meta = {"alpha": problem.alpha, "m": problem.m, "k": problem.k,
                "r": cfg.r, "strategy": cfg.strategy, "T": problem.T,
                "tau_ref": cfg.tau_ref, "label": cfg.label,
                "wall_total_s": float(sum(walls))}
        report = _assemble_report("space", columns, levels, errors,
                                  solves, walls, dict(cfg.theoretical), meta)
        _emit_outputs(cfg, report)
        return report

    if problem.m == 0:
        columns.append("total")
        errors["total"] = [
            norms(spaces[i + 1], finals[i + 1], finals[i])["l2_error"]
            for i in range(len(levels))]
    else:
        columns += ["regular", "singular", "recombined"]
        errors["regular"] = [
            norms(spaces[i + 1], finals[i + 1], finals[i])["l2_error"]
            for i in range(len(levels))]
        sing_err = []
        for i in range(len(levels)):
            if cfg.strategy == "graded_plain":
                _, gsp_c, gs_c = singulars[i]
                _, gsp_f, gs_f = singulars[i + 1]
                diff_c = _singular_sum(gs_c, problem.alpha, tt)
                diff_f = _singular_sum(gs_f, problem.alpha, tt)
                sing_err.append(norms(gsp_f, diff_f, diff_c)["l2_error"])
            else:
                s_c = _singular_sum(singulars[i][0], problem.alpha, tt)
                s_f = _singular_sum(singulars[i + 1][0], problem.alpha, tt)
                sing_err.append(norms(spaces[i + 1], s_f, s_c)["l2_error"])
        errors["singular"] = sing_err
        errors["recombined"] = [
            norms(spaces[i + 1], recombs[i + 1].fe, recombs[i].fe)["l2_error"]
            for i in range(len(levels))]

    if oracle_fn is not None:
        columns.append("oracle")
        if problem.m == 0:
            errors["oracle"] = [
                norms(spaces[i], finals[i], oracle_fn)["l2_error"]
                for i in range(len(levels))]
        else:
            errors["oracle"] = [
                norms(spaces[i], recombs[i].fe, lambda p, i=i:
                      oracle_fn(p) - _closed_sum(recombs[i], p))["l2_error"]
                for i in range(len(levels))]

    meta = {"alpha": problem.alpha, "m": problem.m, "k": problem.k,
            "r": cfg.r, "strategy": cfg.strategy, "T": problem.T,
            "tau_ref": cfg.tau_ref, "label": cfg.label,
            "wall_total_s": float(sum(walls))}
    theoretical = dict(cfg.theoretical)
    report = _assemble_report("space", columns, levels, errors,
                              solves[:-1], walls[:-1], theoretical, meta)
    _emit_outputs(cfg, report)
    return report


def _closed_sum(recombined, pts):
    pts = np.atleast_2d(pts)
    out = np.zeros(len(pts))
    for c, f in recombined.closed_terms:
        out += c * f(pts)
    return out


def run_time_study(cfg: StudyConfig) -> ConvergenceReport:
    """Cauchy differences in time at t = T on a fixed h_ref mesh.

    Singular parts are time-independent, so step-halving differences of
    the full solution equal those of the regular part; the study reports
    that single 'total' column, per BDF order."""
    prob0 = cfg.problem
    n_ref = int(round(1.0 / cfg.h_ref))
    mesh = structured_square(n_ref)
    space = build_space(mesh, cfg.r)
    finals, solves, walls = [], [], []
    for tau in cfg.ladder:
        t0 = time.perf_counter()
        problem = FracProblem(alpha=prob0.alpha, T=prob0.T, m=prob0.m,
                              k=prob0.k, tau=tau, initial=prob0.initial,
                              source=prob0.source)
        traj = step_regular(space, problem)
        finals.append(traj.final())
        walls.append(time.perf_counter() - t0)
        solves.append(_count_solves(problem))

    levels = list(cfg.ladder[:-1])
    errors = {"total": [(finals[i] - finals[i + 1]).l2_norm()
                        for i in range(len(levels))]}
    meta = {"alpha": prob0.alpha, "m": prob0.m, "k": prob0.k, "r": cfg.r,
            "strategy": cfg.strategy, "T": prob0.T, "h_ref": cfg.h_ref,
            "label": cfg.label, "wall_total_s": float(sum(walls))}
    report = _assemble_report("time", ["total"], levels, errors,
                              solves[:-1], walls[:-1],
                              {"total": float(prob0.k)}, meta)
    _emit_outputs(cfg, report)
    return report


# ---------------------------------------------------------------------------
# emission


def emit(report: ConvergenceReport, fmt: str, path) -> None:
    """Write the report as 'csv' (deterministic bytes: no wall times) or
    'markdown' (paper-style table with a theor. conv. footer)."""
    if fmt == "csv":
        lines = []
        cols = []
        for c in report.columns:
            cols += [f"E_{c}", f"order_{c}"]
        lines.append(",".join(["level"] + cols + ["solves", "floored"]))
        for row in report.rows:
            cells = [f"{row.level:.12g}"]
            for c in report.columns:
                cells.append(f"{row.errors[c]:.12e}")
                o = row.orders[c]
                cells.append("" if o is None else f"{o:.6f}")
            cells.append(str(row.solves))
            cells.append(str(int(row.floored)))
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
    elif fmt == "markdown":
        head = "| level |"
        sep = "|---|"
        for c in report.columns:
            head += f" E_{c} | conv. |"
            sep += "---|---|"
        head += " solves | wall [s] |"
        sep += "---|---|"
        lines = [f"### {report.metadata.get('label') or report.kind} study",
                 "", _meta_line(report.metadata), "", head, sep]
        for row in report.rows:
            cells = f"| {row.level:.6g} |"
            for c in report.columns:
                o = row.orders[c]
                cells += (f" {row.errors[c]:.3e} |"
                          f" {'-' if o is None else f'{o:.2f}'} |")
            flag = "*" if row.floored else ""
            cells += f" {row.solves} | {row.wall_s:.2f}{flag} |"
            lines.append(cells)
        foot = "| theor. conv. |"
        for c in report.columns:
            th = report.theoretical.get(c)
            foot += f"  | {'-' if th is None else f'{th:.2f}'} |"
        foot += "  |  |"
        lines.append(foot)
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)


def _meta_line(meta):
    keys = ["alpha", "m", "k", "r", "strategy", "T", "tau_ref", "h_ref",
            "wall_total_s"]
    parts = [f"{k}={meta[k]}" for k in keys if meta.get(k) is not None]
    return ", ".join(parts)


def render_figure(report: ConvergenceReport, path) -> None:
    """Log-log error-vs-level plot with dashed reference slopes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    levels = np.array([row.level for row in report.rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for c in report.columns:
        e = np.array(report.column(c))
        ax.loglog(levels, e, "o-", label=f"E_{c}")
        final = report.final_order(c)
        if final is not None and np.isfinite(final) and e[-1] > 0:
            slope = np.round(final)
            ref = e[-1] * (levels / levels[-1]) ** slope
            ax.loglog(levels, ref, "k--", linewidth=0.8,
                      label=f"slope {slope:.0f}")
    xlabel = "h" if report.kind == "space" else "tau"
    ax.set_xlabel(xlabel)
    ax.set_ylabel("L2 Cauchy difference")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    ax.set_title(report.metadata.get("label") or f"{report.kind} study")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _emit_outputs(cfg: StudyConfig, report: ConvergenceReport) -> None:
    if cfg.csv:
        emit(report, "csv", cfg.csv)
    if cfg.markdown:
        emit(report, "markdown", cfg.markdown)
    if cfg.figure:
        render_figure(report, cfg.figure)
