"""Command-line interface for the weighted Sobolev laboratory.

Subcommands
-----------
domain validate    check a domain file, report its singular structure
mesh build         domain file -> mesh file, optionally graded and refined
mesh refine        refine an existing mesh file
weights dump       CSV of eta and r_omega at the mesh nodes
weights certify    sampled equivalence constants for the two weights
norm               weighted Sobolev norm of a closed-form field
poincare           weighted Poincare certificate, variational + constructive
solve              Dirichlet solve, optionally across refinement levels
regularity-study   shift-theorem stability ratio across refinement levels
window-probe       conjugated-operator stability sweep over the index a

Every run writes canonical JSON (and, for convergence studies, CSV)
into the --out directory; identical configuration and seed reproduce
identical bytes. Study loops across refinement levels may run in
parallel, capped by the KLAB_THREADS environment variable (default 1,
serial); results are merged in level order either way, so reports do
not depend on the worker count.

Exit codes: 0 success, 2 invalid input (bad files, bad schema, bad
parameters), 3 numerical failure (non-convergence, indefiniteness).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import (expressions, femcore, geometry, kernels, mesh as meshmod,
               poincare, report, sobolev, weights, wellposed)
from .config import SCHEMA_VERSION, worker_count
from .errors import NumericalError, SpecError, ValidationError
from .femcore import FemField
from .geometry import Polyhedron
from .sobolev import NormSpec

DEFAULT_SEED = poincare.DEFAULT_SEED


# ---------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------


@dataclass
class RunConfig:
    """One CLI invocation, validated.

    Mesh parameters apply to subcommands that build their own mesh; the
    problem path to solve-like subcommands. Tolerance overrides: tol is
    the iterative-solver relative tolerance, threshold the stability
    indicator cutoff of the window probe.
    """

    subcommand: str
    domain: str | None = None
    mesh_path: str | None = None
    problem: str | None = None
    h: float | None = None
    kappa: float | None = None
    levels: int | None = None
    out: str = "."
    seed: int = DEFAULT_SEED
    tol: float = 1e-10
    threshold: float = 0.1
    samples: int = 1000
    cap_levels: int = 4
    expr: str | None = None
    mu: int = 0
    a: float | None = None
    polar_vertex: int | None = None
    a_grid: tuple = ()
    f_expr: str | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tol <= 0.0 or self.threshold <= 0.0:
            raise SpecError("tolerances must be positive")
        if self.h is not None and self.h <= 0.0:
            raise SpecError("--h must be positive")
        if self.kappa is not None and not 0.0 < self.kappa <= 1.0:
            raise SpecError("--kappa must lie in (0, 1]")
        if self.levels is not None and self.levels < 0:
            raise SpecError("--levels must be nonnegative")
        if self.samples <= 0:
            raise SpecError("--samples must be positive")
        if self.cap_levels <= 0:
            raise SpecError("--cap-levels must be positive")
        self.seed = int(self.seed)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    known = {f for f in RunConfig.__dataclass_fields__}
    payload = {}
    extras = {}
    for key, value in vars(args).items():
        if key in ("func", "action"):
            continue
        if key in known:
            payload[key] = value
        else:
            extras[key] = value
    payload["extras"] = extras
    return RunConfig(**payload)


# ---------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------


def _load_domain(path) -> Polyhedron:
    if path is None:
        raise SpecError("this subcommand needs --domain")
    return geometry.load_domain(path)


def _make_mesh(domain: Polyhedron, h: float, kappa: float | None,
               levels: int | None) -> meshmod.SimplicialMesh:
    if h is None:
        raise SpecError("this subcommand needs --h (or a mesh file)")
    grading = None
    if kappa is not None and kappa < 1.0:
        grading = meshmod.default_grading(domain, kappa)
    m = meshmod.build_mesh(domain, h, grading=grading)
    if levels:
        m = meshmod.refine(m, levels, grading=grading)
    return m


def _mesh_for(cfg: RunConfig, domain: Polyhedron) -> meshmod.SimplicialMesh:
    if cfg.mesh_path is not None:
        return meshmod.read_mesh(cfg.mesh_path)
    return _make_mesh(domain, cfg.h, cfg.kappa, cfg.levels)


def _mesh_summary(m: meshmod.SimplicialMesh) -> dict:
    return {
        "dimension": m.dimension,
        "nodes": m.num_nodes,
        "elements": m.num_elements,
        "h_max": m.h_max(),
        "h_min": m.h_min(),
        "min_angle": {"value": meshmod.minimum_angle(m),
                      "provenance": "quadrature"},
        "total_volume": m.total_volume(),
        "graded": m.grading is not None,
        "kappa": None if m.grading is None else m.grading.kappa,
    }


def _out_path(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _run_ordered(tasks):
    """Run thunks, in parallel if KLAB_THREADS allows, keeping order."""
    workers = min(worker_count(), len(tasks))
    if workers <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------


def _field(spec: dict, key: str, kind, path: str, required: bool = False,
           default=None):
    if key not in spec:
        if required:
            raise SpecError(f"{path}.{key}: missing required field")
        return default
    value = spec[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) \
            else "/".join(k.__name__ for k in kind)
        raise SpecError(f"{path}.{key}: expected {names}, "
                        f"got {type(value).__name__}")
    return value


def load_problem(path) -> dict:
    """Read and validate a problem file; compile its expressions.

    Schema (JSON): schema_version, name, domain (inline domain object
    or a path relative to the problem file), mesh {h, kappa}, a, sign,
    polar_vertex, and the expression strings f, g, exact, exact_grad.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"problem: invalid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise SpecError("problem: top level must be an object")
    version = _field(spec, "schema_version", int, "problem", required=True)
    if version != SCHEMA_VERSION:
        raise SpecError(f"problem.schema_version: unsupported version {version}")

    domain_spec = spec.get("domain")
    if isinstance(domain_spec, str):
        base = os.path.dirname(os.path.abspath(path))
        domain = geometry.load_domain(os.path.join(base, domain_spec))
    elif isinstance(domain_spec, dict):
        domain = geometry.domain_from_dict(domain_spec)
    else:
        raise SpecError("problem.domain: expected an object or a file path")

    mesh_spec = _field(spec, "mesh", dict, "problem", required=True)
    h = _field(mesh_spec, "h", float, "problem.mesh", required=True)
    kappa = _field(mesh_spec, "kappa", float, "problem.mesh", default=1.0)
    if h <= 0.0:
        raise SpecError("problem.mesh.h: must be positive")
    if not 0.0 < kappa <= 1.0:
        raise SpecError("problem.mesh.kappa: must lie in (0, 1]")

    a = _field(spec, "a", float, "problem", default=0.0)
    sign = _field(spec, "sign", str, "problem",
                  default=wellposed.SIGN_CONVENTIONS[1])
    if sign not in wellposed.SIGN_CONVENTIONS:
        raise SpecError(f"problem.sign: must be one of "
                        f"{wellposed.SIGN_CONVENTIONS}")

    polar = None
    if "polar_vertex" in spec:
        idx = _field(spec, "polar_vertex", int, "problem")
        polar = expressions.polar_frame(domain, idx)

    def expr(key):
        text = _field(spec, key, str, "problem")
        if text is None:
            return None
        return expressions.parse_expression(text, domain.dimension, polar)

    exact_grad = None
    if spec.get("exact_grad") is not None:
        texts = _field(spec, "exact_grad", list, "problem")
        exact_grad = expressions.parse_vector(texts, domain.dimension, polar)

    return {
        "name": _field(spec, "name", str, "problem", default="problem"),
        "domain": domain,
        "h": h,
        "kappa": kappa,
        "a": a,
        "sign": sign,
        "f": expr("f"),
        "g": expr("g"),
        "exact": expr("exact"),
        "exact_grad": exact_grad,
        "source": {k: spec.get(k) for k in
                   ("name", "a", "sign", "f", "g", "exact", "polar_vertex")},
    }


def _solution_errors(m: meshmod.SimplicialMesh, u: FemField, exact,
                     exact_grad, degree: int = 5) -> dict:
    """L2 and (when the gradient is known) full H1 error by quadrature."""
    rule = femcore.simplex_rule(m.dimension, degree)
    vols = m.element_volumes()
    pts = femcore.quadrature_points(m, rule)
    flat = pts.reshape(-1, m.dimension)
    uq = u.at_quadrature(rule)
    exq = np.asarray(exact(flat), dtype=float).reshape(uq.shape)
    diff_sq = (uq - exq) ** 2
    l2_sq = float(kernels.neumaier_sum(
        np.einsum("e,q,eq->e", vols, rule.weights, diff_sq)))
    out = {"l2_error": math.sqrt(max(l2_sq, 0.0)), "h1_error": None}
    if exact_grad is not None:
        gq = np.asarray(exact_grad(flat), dtype=float).reshape(pts.shape)
        gu = u.element_gradients()[:, None, :]
        gdiff = gu - gq
        gsq = np.einsum("eqd,eqd->eq", gdiff, gdiff)
        semi_sq = float(kernels.neumaier_sum(
            np.einsum("e,q,eq->e", vols, rule.weights, gsq)))
        out["h1_error"] = math.sqrt(max(semi_sq + l2_sq, 0.0))
    return out


def _study_meshes(domain: Polyhedron, h: float, kappa: float,
                  n_levels: int) -> list:
    grading = None
    if kappa < 1.0:
        grading = meshmod.default_grading(domain, kappa)
    out = [meshmod.build_mesh(domain, h, grading=grading)]
    for _ in range(n_levels - 1):
        out.append(meshmod.refine(out[-1], 1, grading=grading))
    return out


def _solve_levels(cfg: RunConfig, setup: dict) -> list:
    h0 = cfg.h if cfg.h is not None else setup["h"]
    kappa = cfg.kappa if cfg.kappa is not None else setup["kappa"]
    a = cfg.a if cfg.a is not None else setup["a"]
    n_levels = cfg.levels if cfg.levels else 1
    meshes = _study_meshes(setup["domain"], h0, kappa, n_levels)

    def task(level, m):
        def run():
            problem = wellposed.BvpProblem(
                setup["domain"], m, f=setup["f"], g=setup["g"], a=a,
                sign=setup["sign"], solver_tol=cfg.tol)
            solved = wellposed.solve_dirichlet(problem)
            entry = {"level": level, "h": h0 * 0.5 ** level,
                     "nodes": m.num_nodes, "elements": m.num_elements,
                     "report": solved.as_dict()}
            if setup["exact"] is not None:
                entry.update(_solution_errors(m, solved.solution,
                                              setup["exact"],
                                              setup["exact_grad"]))
            return entry
        return run

    return _run_ordered([task(i, m) for i, m in enumerate(meshes)])


# ---------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------


def _cmd_domain_validate(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    payload = {
        "domain": geometry.domain_to_dict(domain),
        "dimension": domain.dimension,
        "num_vertices": len(domain.vertices),
        "num_faces": len(domain.boundary_faces),
        "min_singular_separation": domain.min_singular_separation(),
    }
    if domain.dimension == 3:
        payload["num_singular_edges"] = len(domain.edges)
    if domain.dimension == 2:
        angles = [geometry.interior_angle(domain, i)
                  for i in range(len(domain.vertices))]
        payload["interior_angles"] = angles
        payload["max_interior_angle"] = max(angles)
    else:
        angles = [geometry.dihedral_angle(domain, i)
                  for i in range(len(domain.edges))]
        payload["dihedral_angles"] = angles
        payload["max_dihedral_angle"] = max(angles)
        payload["vertex_clearance"] = domain.vertex_clearance()
        payload["min_edge_length"] = domain.min_edge_length()
    path = report.write_json(_out_path(cfg, "domain_validate.json"), payload)
    print(f"domain OK: {domain.generator}, dimension {domain.dimension}, "
          f"{len(domain.vertices)} vertices")
    print(f"report: {path}")
    return 0


def _cmd_mesh_build(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    m = _make_mesh(domain, cfg.h, cfg.kappa, cfg.levels)
    mesh_path = _out_path(cfg, "mesh.txt")
    meshmod.write_mesh(mesh_path, m)
    payload = {"mesh_file": os.path.basename(mesh_path),
               "summary": _mesh_summary(m)}
    path = report.write_json(_out_path(cfg, "mesh_build.json"), payload)
    print(f"mesh: {m.num_nodes} nodes, {m.num_elements} elements, "
          f"h_max {m.h_max():.6g}")
    print(f"files: {mesh_path}, {path}")
    return 0


def _cmd_mesh_refine(cfg: RunConfig) -> int:
    if cfg.mesh_path is None:
        raise SpecError("mesh refine needs --mesh")
    m = meshmod.read_mesh(cfg.mesh_path)
    m = meshmod.refine(m, cfg.levels or 1)
    mesh_path = _out_path(cfg, "mesh_refined.txt")
    meshmod.write_mesh(mesh_path, m)
    payload = {"mesh_file": os.path.basename(mesh_path),
               "levels": cfg.levels or 1, "summary": _mesh_summary(m)}
    path = report.write_json(_out_path(cfg, "mesh_refine.json"), payload)
    print(f"refined mesh: {m.num_nodes} nodes, {m.num_elements} elements")
    print(f"files: {mesh_path}, {path}")
    return 0


def _cmd_weights_dump(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    m = _mesh_for(cfg, domain)
    eta = weights.eta_field(domain)(m.nodes)
    rom = weights.romega_field(domain, mesh=m)(m.nodes)
    axes = "xyz"[:m.dimension]
    header = ["node_id", *axes, "eta", "r_omega"]
    rows = [[i, *m.nodes[i], eta[i], rom[i]] for i in range(m.num_nodes)]
    csv_path = report.write_csv(_out_path(cfg, "weights.csv"), header, rows)
    payload = {"csv_file": os.path.basename(csv_path),
               "summary": _mesh_summary(m),
               "eta_min": float(eta.min()), "eta_max": float(eta.max())}
    path = report.write_json(_out_path(cfg, "weights_dump.json"), payload)
    print(f"wrote {m.num_nodes} rows: {csv_path}")
    print(f"report: {path}")
    return 0


def _cmd_weights_certify(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    m = None
    if cfg.mesh_path is not None or cfg.h is not None:
        m = _mesh_for(cfg, domain)
    rep = weights.certify_equivalence(domain, mesh=m, n=cfg.samples)
    payload = rep.as_dict()
    path = report.write_json(_out_path(cfg, "weights_certify.json"), payload)
    print(f"equivalence on {cfg.samples} samples: "
          f"{rep.lower:.6g} <= r_omega/eta <= {rep.upper:.6g}")
    print(f"report: {path}")
    return 0


def _cmd_norm(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    m = _mesh_for(cfg, domain)
    polar = None
    if cfg.polar_vertex is not None:
        polar = expressions.polar_frame(domain, cfg.polar_vertex)
    if cfg.expr is None:
        raise SpecError("norm needs --expr")
    fn = expressions.parse_expression(cfg.expr, domain.dimension, polar)
    u = femcore.interpolate(m, fn)
    a = cfg.a if cfg.a is not None else 0.0
    rep = sobolev.k_norm(u, weights.eta_field(domain), NormSpec(cfg.mu, a))
    payload = {"expr": cfg.expr, "mu": cfg.mu, "a": a,
               "mesh": _mesh_summary(m), "norm": rep.as_dict(),
               "provenance": "quadrature"}
    path = report.write_json(_out_path(cfg, "norm.json"), payload)
    rows = [[k, v] for k, v in sorted(rep.terms.items())]
    rows.append(["value", rep.value])
    print(report.render_table(["term", "squared integral"], rows[:-1]))
    print(f"norm value: {rep.value!r} (mu={cfg.mu}, a={a!r})")
    print(f"report: {path}")
    return 0


def _cmd_poincare(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    m = _mesh_for(cfg, domain)
    decomp = poincare.build_decomposition(domain, samples=cfg.samples,
                                          seed=cfg.seed,
                                          cap_levels=cfg.cap_levels)
    cert = poincare.constructive_kappa(domain, m, decomposition=decomp,
                                       samples=cfg.samples, seed=cfg.seed)
    payload = cert.as_dict()
    payload["mesh"] = _mesh_summary(m)
    path = report.write_json(_out_path(cfg, "poincare.json"), payload)
    rows = []
    for term in cert.region_terms:
        rows.append([term["label"], term["kind"], term["constant"],
                     term["provenance"], term["term"]])
    rows.append(["residual", "offset region", cert.poincare_constant,
                 "eigensolve", cert.residual_term])
    print(report.render_table(
        ["region", "kind", "constant", "provenance", "term"], rows))
    print(f"constructive kappa: {cert.constructive!r}")
    print(f"variational kappa:  {cert.variational!r}")
    print(f"certificate {'PASSED' if cert.passed else 'FAILED'} "
          f"(slack {cert.slack!r})")
    print(f"report: {path}")
    return 0


def _cmd_solve(cfg: RunConfig) -> int:
    if cfg.problem is None:
        raise SpecError("solve needs --problem")
    setup = load_problem(cfg.problem)
    levels = _solve_levels(cfg, setup)
    hs = [e["h"] for e in levels]
    payload = {"problem": setup["source"], "levels": levels}
    header = ["level", "h", "nodes", "residual", "stability_ratio"]
    rows = [[e["level"], e["h"], e["nodes"], e["report"]["residual"],
             e["report"]["stability_ratio"]] for e in levels]
    if setup["exact"] is not None:
        l2 = [e["l2_error"] for e in levels]
        payload["l2_rates"] = report.observed_rates(hs, l2)
        payload["l2_rate_fit"] = report.fitted_rate(hs, l2)
        header += ["l2_error", "l2_rate"]
        for row, e, rate in zip(rows, levels, payload["l2_rates"]):
            row += [e["l2_error"], rate]
        if all(e["h1_error"] is not None for e in levels):
            h1 = [e["h1_error"] for e in levels]
            payload["h1_rates"] = report.observed_rates(hs, h1)
            payload["h1_rate_fit"] = report.fitted_rate(hs, h1)
            header += ["h1_error", "h1_rate"]
            for row, e, rate in zip(rows, levels, payload["h1_rates"]):
                row += [e["h1_error"], rate]
    csv_path = report.write_csv(_out_path(cfg, "solve_convergence.csv"),
                                header, rows)
    payload["csv_file"] = os.path.basename(csv_path)
    path = report.write_json(_out_path(cfg, "solve.json"), payload)
    print(report.render_table(header, rows))
    if "l2_rate_fit" in payload and payload["l2_rate_fit"] is not None:
        print(f"fitted L2 rate: {payload['l2_rate_fit']:.3f}")
    if payload.get("h1_rate_fit") is not None:
        print(f"fitted H1 rate: {payload['h1_rate_fit']:.3f}")
    print(f"files: {csv_path}, {path}")
    return 0


def _cmd_regularity_study(cfg: RunConfig) -> int:
    if cfg.problem is None:
        raise SpecError("regularity-study needs --problem")
    setup = load_problem(cfg.problem)
    levels = _solve_levels(cfg, setup)
    k2 = [e["report"]["norms"]["u_K2_a1"] for e in levels]
    drift = [None]
    for i in range(1, len(k2)):
        drift.append((k2[i] - k2[i - 1]) / k2[i - 1] if k2[i - 1] else None)
    header = ["level", "h", "nodes", "k2_norm", "k2_drift",
              "stability_ratio"]
    rows = [[e["level"], e["h"], e["nodes"], k2[i], drift[i],
             e["report"]["stability_ratio"]] for i, e in enumerate(levels)]
    payload = {"problem": setup["source"], "levels": levels,
               "k2_norms": k2, "k2_drift": drift}
    csv_path = report.write_csv(_out_path(cfg, "regularity_study.csv"),
                                header, rows)
    payload["csv_file"] = os.path.basename(csv_path)
    path = report.write_json(_out_path(cfg, "regularity_study.json"), payload)
    print(report.render_table(header, rows))
    print(f"files: {csv_path}, {path}")
    return 0


def _cmd_window_probe(cfg: RunConfig) -> int:
    domain = _load_domain(cfg.domain)
    m = _mesh_for(cfg, domain)
    if not cfg.a_grid:
        raise SpecError("window-probe needs --a-grid")
    f = None
    if cfg.f_expr is not None:
        f = expressions.parse_expression(cfg.f_expr, domain.dimension)
    probe = wellposed.weight_window_probe(domain, m, list(cfg.a_grid),
                                          threshold=cfg.threshold, f=f)
    payload = probe.as_dict()
    payload["mesh"] = _mesh_summary(m)
    path = report.write_json(_out_path(cfg, "window_probe.json"), payload)
    header = ["a", "indicator", "stable", "solve_ok", "response_norm"]
    rows = [[e["a"], e["indicator"], e["stable"], e["solve_ok"],
             e.get("response_norm")] for e in probe.entries]
    print(report.render_table(header, rows))
    print(f"stable window: [{probe.window['lower']!r}, "
          f"{probe.window['upper']!r}]")
    if probe.bracket is not None:
        print(f"onset bracket: ({probe.bracket['last_stable']!r}, "
              f"{probe.bracket['first_unstable']!r})")
    if probe.predicted_edge is not None:
        print(f"analytic prediction: {probe.predicted_edge!r}")
    print(f"report: {path}")
    return 0


# ---------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------


def _add_out(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="seed for randomized property runs")


def _add_mesh_args(p, with_mesh_file: bool = True):
    p.add_argument("--h", type=float, default=None, help="target spacing")
    p.add_argument("--kappa", type=float, default=None,
                   help="grading exponent in (0, 1]; 1 or omitted = uniform")
    p.add_argument("--levels", type=int, default=None,
                   help="number of nested mesh levels in the study "
                        "(base mesh plus levels-1 refinements)")
    if with_mesh_file:
        p.add_argument("--mesh", dest="mesh_path", default=None,
                       help="use an existing mesh file instead of --h")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="klab",
        description="Weighted Sobolev laboratory for polyhedral domains")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("domain", help="domain-file operations")
    dsub = p.add_subparsers(dest="action", required=True)
    d = dsub.add_parser("validate", help="check a domain file")
    d.add_argument("--domain", required=True)
    _add_out(d)
    d.set_defaults(func=_cmd_domain_validate, subcommand="domain validate")

    p = sub.add_parser("mesh", help="mesh generation")
    msub = p.add_subparsers(dest="action", required=True)
    b = msub.add_parser("build", help="mesh a domain")
    b.add_argument("--domain", required=True)
    _add_mesh_args(b, with_mesh_file=False)
    _add_out(b)
    b.set_defaults(func=_cmd_mesh_build, subcommand="mesh build")
    r = msub.add_parser("refine", help="refine a mesh file")
    r.add_argument("--mesh", dest="mesh_path", required=True)
    r.add_argument("--levels", type=int, default=1)
    _add_out(r)
    r.set_defaults(func=_cmd_mesh_refine, subcommand="mesh refine")

    p = sub.add_parser("weights", help="singular weight functions")
    wsub = p.add_subparsers(dest="action", required=True)
    d = wsub.add_parser("dump", help="CSV of eta and r_omega at mesh nodes")
    d.add_argument("--domain", required=True)
    _add_mesh_args(d)
    _add_out(d)
    d.set_defaults(func=_cmd_weights_dump, subcommand="weights dump")
    c = wsub.add_parser("certify", help="sampled equivalence constants")
    c.add_argument("--domain", required=True)
    c.add_argument("--samples", type=int, default=2048)
    _add_mesh_args(c)
    _add_out(c)
    c.set_defaults(func=_cmd_weights_certify, subcommand="weights certify")

    n = sub.add_parser("norm", help="weighted norm of a closed-form field")
    n.add_argument("--domain", required=True)
    n.add_argument("--expr", required=True, help="field expression")
    n.add_argument("--mu", type=int, default=0, help="derivative order")
    n.add_argument("--a", type=float, default=0.0, help="weight index")
    n.add_argument("--polar-vertex", dest="polar_vertex", type=int,
                   default=None, help="corner index for r, theta")
    _add_mesh_args(n)
    _add_out(n)
    n.set_defaults(func=_cmd_norm, subcommand="norm")

    q = sub.add_parser("poincare", help="weighted Poincare certificate")
    q.add_argument("--domain", required=True)
    q.add_argument("--samples", type=int, default=1000)
    q.add_argument("--cap-levels", dest="cap_levels", type=int, default=4)
    _add_mesh_args(q)
    _add_out(q)
    q.set_defaults(func=_cmd_poincare, subcommand="poincare")

    s = sub.add_parser("solve", help="Dirichlet solve / convergence study")
    s.add_argument("--problem", required=True, help="problem file (JSON)")
    s.add_argument("--a", type=float, default=None,
                   help="override the conjugation index")
    s.add_argument("--tol", type=float, default=1e-10,
                   help="iterative solver relative tolerance")
    _add_mesh_args(s, with_mesh_file=False)
    _add_out(s)
    s.set_defaults(func=_cmd_solve, subcommand="solve")

    g = sub.add_parser("regularity-study",
                       help="stability ratio across refinement levels")
    g.add_argument("--problem", required=True)
    g.add_argument("--a", type=float, default=None)
    g.add_argument("--tol", type=float, default=1e-10)
    _add_mesh_args(g, with_mesh_file=False)
    _add_out(g)
    g.set_defaults(func=_cmd_regularity_study,
                   subcommand="regularity-study")

    w = sub.add_parser("window-probe",
                       help="stability sweep over the conjugation index")
    w.add_argument("--domain", required=True)
    w.add_argument("--a-grid", dest="a_grid_text", required=True,
                   help="comma-separated indices, e.g. 0,0.3,0.5")
    w.add_argument("--threshold", type=float, default=0.1,
                   help="indicator cutoff relative to a = 0")
    w.add_argument("--f", dest="f_expr", default=None,
                   help="probe source expression (default: 1)")
    _add_mesh_args(w)
    _add_out(w)
    w.set_defaults(func=_cmd_window_probe, subcommand="window-probe")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "a_grid_text", None) is not None:
        try:
            args.a_grid = tuple(float(s) for s in
                                args.a_grid_text.split(",") if s.strip())
        except ValueError as exc:
            print(f"error: bad --a-grid: {exc}", file=sys.stderr)
            return 2
        del args.a_grid_text
    handler = args.func
    try:
        cfg = _config_from_args(args)
        return handler(cfg)
    except FileNotFoundError as exc:
        print(f"error: missing input file: {exc.filename}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
