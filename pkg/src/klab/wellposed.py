"""Dirichlet solves, conjugated operators and stability probes.

The bilinear form is B(u, v) = integral of grad u . grad v, so the
discrete problem B u = F with F(v) = integral of f~ v solves the
boundary value problem whose strong form is -Delta u = f~, the
default reading of the data. Problem data given in the Delta u = f
convention is loaded with a sign flip, recorded in the report.

Conjugation by a power of the singular distance replaces B with

    B_a(u, v) = integral of grad(w^a u) . grad(w^-a v)
              = B(u, v) + a * [u q . grad v - v q . grad u]
                        - a^2 * integral of |q|^2 u v,    q = grad w / w,

expanded by the product rule at quadrature points. The family is the
operator side of the shifted-index solution theory: B_a stays coercive
while |a| is below the first singular exponent, and the weight-window
probe measures exactly where the discrete coercivity degrades.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from . import femcore, geometry, kernels, sobolev, weights
from .errors import (ConvergenceError, IndefiniteOperatorError,
                     InadmissibleIndexError)
from .femcore import FemField
from .geometry import Polyhedron
from .mesh import SimplicialMesh
from .sobolev import NormSpec

SIGN_CONVENTIONS = ("laplace", "minus_laplace")
MAX_CONJUGATION = 2.0
INDICATOR_MAXITER = 30


@dataclass
class BvpProblem:
    """Dirichlet problem data on a meshed domain.

    f and g may be callables of an (N, d) coordinate array, nodal
    arrays, or None (zero). sign records how f is to be read:
    "minus_laplace" (the default) means f prescribes -Delta u = f,
    "laplace" means f prescribes Delta u = f (the load is then -f).
    """

    domain: Polyhedron
    mesh: SimplicialMesh
    f: object = None
    g: object = None
    a: float = 0.0
    sign: str = "minus_laplace"
    f_degree: int = 4
    solver_tol: float = 1e-10

    def __post_init__(self):
        if self.sign not in SIGN_CONVENTIONS:
            raise ValueError(f"sign must be one of {SIGN_CONVENTIONS}")
        if not self.solver_tol > 0.0:
            raise ValueError("solver tolerance must be positive")
        self.a = float(self.a)


@dataclass
class SolveReport:
    """Solution together with the norms entering the stability estimate."""

    solution: FemField
    a: float
    residual: float
    iterations: int
    method: str
    norms: dict
    stability_ratio: float | None
    sign_note: str

    def as_dict(self) -> dict:
        return {"a": self.a, "residual": self.residual,
                "iterations": self.iterations, "method": self.method,
                "norms": dict(self.norms),
                "stability_ratio": self.stability_ratio,
                "sign_note": self.sign_note}


def lift_boundary_data(domain: Polyhedron, mesh: SimplicialMesh,
                       g) -> FemField:
    """Lift of the boundary data: the K(1, 1)-minimal extension."""
    if g is None:
        return FemField(mesh, np.zeros(mesh.num_nodes))
    return sobolev.minimal_extension(domain, mesh, g)


def conjugate_parts(domain: Polyhedron, mesh: SimplicialMesh,
                    weight=None, degree: int = 5):
    """Component matrices (K, skew, M) of the conjugated family.

    B_a = K + a * skew - a^2 * M with skew = G^T - G for the
    convection matrix G of q = grad w / w, and M the |q|^2 weighted
    mass. The weight defaults to the singular distance, whose
    logarithmic gradient satisfies |q| = 1 / eta.
    """
    k_mat = femcore.assemble_stiffness(mesh)
    w = weight if weight is not None else weights.eta_field(domain)
    q_fn = w.grad_over_value

    def q_sq(points):
        q = np.asarray(q_fn(points), dtype=float)
        return np.einsum("nd,nd->n", q, q)

    g_mat = femcore.assemble_gradvec(mesh, q_fn, degree=degree)
    m_mat = femcore.assemble_weighted_mass(mesh, q_sq, degree=degree)
    return k_mat, (g_mat.T - g_mat).tocsr(), m_mat


def combine_conjugate(parts, a: float):
    """B_a from precomputed parts; a = 0 returns K itself."""
    if abs(a) > MAX_CONJUGATION:
        raise InadmissibleIndexError(
            f"conjugation exponent {a} outside [-{MAX_CONJUGATION}, "
            f"{MAX_CONJUGATION}]")
    k_mat, skew, m_mat = parts
    if a == 0.0:
        return k_mat
    return (k_mat + a * skew - (a * a) * m_mat).tocsr()


def conjugate_operator(domain: Polyhedron, mesh: SimplicialMesh, a: float,
                       weight=None, degree: int = 5):
    """Stiffness matrix of the conjugated form B_a.

    At a = 0 this is exactly assemble_stiffness; otherwise the product
    rule expansion assembled at quadrature points.
    """
    if abs(a) > MAX_CONJUGATION:
        raise InadmissibleIndexError(
            f"conjugation exponent {a} outside [-{MAX_CONJUGATION}, "
            f"{MAX_CONJUGATION}]")
    if a == 0.0:
        return femcore.assemble_stiffness(mesh)
    return combine_conjugate(conjugate_parts(domain, mesh, weight, degree), a)


def _load_vector(problem: BvpProblem) -> np.ndarray:
    mesh = problem.mesh
    if problem.f is None:
        return np.zeros(mesh.num_nodes)
    flip = -1.0 if problem.sign == "laplace" else 1.0
    if callable(problem.f):
        fn = problem.f
        return flip * femcore.assemble_load(mesh, fn, degree=problem.f_degree)
    f_nodes = np.asarray(problem.f, dtype=float)
    mass = femcore.assemble_weighted_mass(mesh, lambda p: np.ones(len(p)),
                                          degree=2)
    return flip * (mass @ f_nodes)


def _sign_note(problem: BvpProblem) -> str:
    if problem.sign == "laplace":
        return ("data f read as Delta u = f; the assembled load is -f "
                "since B(u, v) = integral of grad u . grad v")
    return "data f read as -Delta u = f; the assembled load is +f"


def solve_dirichlet(problem: BvpProblem) -> SolveReport:
    """Solve B_a u = F with Dirichlet data lifted by minimal extension.

    a = 0 uses conjugate-free assembly and conjugate-gradient solves;
    conjugated systems are nonsymmetric and go through a sparse direct
    factorization.
    """
    domain, mesh = problem.domain, problem.mesh
    b_mat = conjugate_operator(domain, mesh, problem.a)
    f_vec = _load_vector(problem)
    lift = lift_boundary_data(domain, mesh, problem.g)

    constrained = mesh.boundary_node_mask()
    free = np.where(~constrained)[0]
    if not len(free):
        raise ValueError("mesh has no interior nodes")
    rhs_full = f_vec - b_mat @ lift.values
    rhs = rhs_full[free]
    b_ff = b_mat[free][:, free].tocsr()

    if problem.a == 0.0:
        x, info = femcore.cg_solve(b_ff, rhs, tol=problem.solver_tol)
        iterations = info["iterations"]
        method = "cg"
    else:
        lu = scipy.sparse.linalg.splu(b_ff.tocsc())
        x = lu.solve(rhs)
        iterations = 1
        method = "direct_lu"
    res_vec = rhs - b_ff @ x
    rhs_norm = math.sqrt(max(kernels.neumaier_dot(rhs, rhs), 1e-300))
    residual = math.sqrt(max(kernels.neumaier_dot(res_vec, res_vec), 0.0)) \
        / rhs_norm

    values = np.array(lift.values)
    values[free] += x
    u = FemField(mesh, values)

    eta = weights.eta_field(domain)
    u_high = sobolev.k_norm(u, eta, NormSpec(mu=2, a=problem.a + 1.0))
    u_base = sobolev.k_norm(u, eta, NormSpec(mu=0, a=1.0))
    if problem.f is None:
        f_norm = 0.0
    else:
        f_arg = problem.f if callable(problem.f) \
            else np.asarray(problem.f, dtype=float)
        f_norm = sobolev.k_data_norm(domain, mesh, f_arg,
                                     a=problem.a - 1.0).value
    if problem.g is None:
        g_surr = 0.0
    else:
        g_surr = sobolev.trace_norm_surrogate(domain, mesh, problem.g).value

    denom = f_norm + g_surr + u_base.value
    if denom == 0.0:
        ratio = None
        note = "undefined (zero data and zero solution)"
    else:
        ratio = u_high.value / denom
        note = _sign_note(problem)
    norms = {"u_K2_a1": u_high.value, "u_K0_1": u_base.value,
             "f_K0_am1": f_norm, "g_surrogate": g_surr,
             "u_terms": dict(u_high.terms)}
    return SolveReport(solution=u, a=problem.a, residual=residual,
                       iterations=iterations, method=method, norms=norms,
                       stability_ratio=ratio, sign_note=note)


def regularity_ratio(domain: Polyhedron, mesh: SimplicialMesh, u: FemField,
                     f=None, g=None) -> float | None:
    """Shift-theorem quotient norm(u, K21) over the data norms.

    Returns None when both data and solution vanish (the quotient is
    undefined), mirroring the zero-solution guard in solve reports.
    """
    eta = weights.eta_field(domain)
    u_high = sobolev.k_norm(u, eta, NormSpec(mu=2, a=1.0)).value
    u_base = sobolev.k_norm(u, eta, NormSpec(mu=0, a=1.0)).value
    f_norm = 0.0 if f is None else sobolev.k_data_norm(domain, mesh, f,
                                                       a=-1.0).value
    g_surr = 0.0 if g is None else sobolev.trace_norm_surrogate(
        domain, mesh, g).value
    denom = f_norm + g_surr + u_base
    if denom == 0.0:
        return None
    return u_high / denom


# ---------------------------------------------------------------------
# weight window probe
# ---------------------------------------------------------------------


def _pencil_min(s_ff, k_ff, x0: np.ndarray, maxiter: int = INDICATOR_MAXITER,
                tol: float = 1e-12):
    """Smallest eigenvalue of (S, K) by inverse iteration with warm start.

    Solving with S detects loss of positivity: an indefinite S raises
    IndefiniteOperatorError from the inner conjugate-gradient solver.
    Returns (eigenvalue, iterations, converged).
    """
    x = x0 / math.sqrt(max(kernels.neumaier_dot(x0, k_ff @ x0), 1e-300))
    lam = kernels.neumaier_dot(x, s_ff @ x)
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        y, _ = femcore.cg_solve(s_ff, k_ff @ x, tol=1e-12)
        norm = math.sqrt(max(kernels.neumaier_dot(y, k_ff @ y), 0.0))
        if norm == 0.0:
            raise ConvergenceError("pencil iteration collapsed to zero")
        x = y / norm
        lam_new = kernels.neumaier_dot(x, s_ff @ x)
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            lam = lam_new
            converged = True
            break
        lam = lam_new
    return float(lam), it, converged


def predicted_window_edge(domain: Polyhedron) -> float | None:
    """Analytic first singular exponent for polygons: min of pi / theta.

    Only implemented in 2D. For 3D domains the edge exponents pi per
    dihedral angle interact with the vertex pencils, so no analytic
    prediction is reported; the probe then carries the empirical
    bracket only.
    """
    if domain.dimension != 2:
        return None
    angles = [geometry.interior_angle(domain, i)
              for i in range(len(domain.vertices))]
    return min(math.pi / t for t in angles)


@dataclass
class WindowReport:
    """Per-exponent stability data and the detected symmetric window."""

    a_values: list
    entries: list
    threshold: float
    indicator_zero: float
    acrit_estimate: dict
    predicted_edge: float | None
    window: dict
    bracket: dict | None

    def as_dict(self) -> dict:
        return {"a_values": list(self.a_values),
                "entries": [dict(e) for e in self.entries],
                "threshold": self.threshold,
                "indicator_zero": self.indicator_zero,
                "acrit_estimate": dict(self.acrit_estimate),
                "predicted_edge": None if self.predicted_edge is None
                else {"value": self.predicted_edge, "provenance": "analytic"},
                "window": dict(self.window),
                "bracket": dict(self.bracket) if self.bracket else None}


def weight_window_probe(domain: Polyhedron, mesh: SimplicialMesh,
                        a_values, threshold: float = 0.1,
                        f=None) -> WindowReport:
    """Probe the coercivity of the conjugated family over a grid of a.

    For each a the indicator is the smallest eigenvalue of the
    symmetric part (K - a^2 M, K) on the zero-trace subspace, found by
    inverse iteration capped at 30 steps; the energy of B_a equals the
    energy of its symmetric part, so this is the singular-value proxy
    of the conjugated system in the energy metric. A point is stable
    when the indicator stays above threshold times its a = 0 value and
    the conjugated solve against the fixed source succeeds.
    """
    a_values = [float(a) for a in a_values]
    for a in a_values:
        if abs(a) > MAX_CONJUGATION:
            raise InadmissibleIndexError(f"probe exponent {a} out of range")
    eta = weights.eta_field(domain)
    k_mat = femcore.assemble_stiffness(mesh)
    m_mat = femcore.assemble_weighted_mass(
        mesh, weights.power_weight(eta, -2.0), degree=5)
    free = np.where(~mesh.boundary_node_mask())[0]
    k_ff = k_mat[free][:, free].tocsr()
    m_ff = m_mat[free][:, free].tocsr()

    lam_max, v_max, eig_info = femcore.generalized_eig_extreme(
        m_ff, k_ff, which="max")
    acrit = 1.0 / math.sqrt(lam_max)
    acrit_note = {"value": acrit, "eigenvalue": lam_max,
                  "iterations": eig_info["iterations"],
                  "provenance": "eigensolve"}

    if f is None:
        def f(points):
            return np.ones(len(points))
    f_vec = femcore.assemble_load(mesh, f, degree=4)
    parts = conjugate_parts(domain, mesh)

    entries = []
    indicator_zero = 1.0
    for a in a_values:
        entry = {"a": a}
        s_ff = (k_ff - (a * a) * m_ff).tocsr()
        try:
            lam, its, conv = _pencil_min(s_ff, k_ff, v_max)
            entry.update(indicator=lam, indicator_iterations=its,
                         indicator_converged=bool(conv))
        except (IndefiniteOperatorError, ConvergenceError) as exc:
            entry.update(indicator=None, indicator_iterations=None,
                         indicator_converged=False,
                         note=f"energy breakdown: {exc}")

        b_mat = combine_conjugate(parts, a)
        b_ff = b_mat[free][:, free].tocsr()
        try:
            if a == 0.0:
                x, info = femcore.cg_solve(b_ff, f_vec[free], tol=1e-10)
            else:
                lu = scipy.sparse.linalg.splu(b_ff.tocsc())
                x = lu.solve(f_vec[free])
            res = f_vec[free] - b_ff @ x
            rnorm = math.sqrt(max(kernels.neumaier_dot(res, res), 0.0))
            fnorm = math.sqrt(max(kernels.neumaier_dot(f_vec[free],
                                                       f_vec[free]), 1e-300))
            response = math.sqrt(max(kernels.neumaier_dot(x, k_ff @ x), 0.0))
            entry.update(solve_ok=True, response_norm=response,
                         solve_residual=rnorm / fnorm)
        except (RuntimeError, ConvergenceError,
                IndefiniteOperatorError) as exc:
            entry.update(solve_ok=False, response_norm=None,
                         solve_residual=None,
                         solve_note=f"conjugated solve failed: {exc}")

        stable = (entry.get("indicator") is not None
                  and entry["indicator"] >= threshold * indicator_zero
                  and entry.get("solve_ok", False))
        entry["stable"] = bool(stable)
        entries.append(entry)

    by_abs = sorted(entries, key=lambda e: abs(e["a"]))
    edge = 0.0
    for e in by_abs:
        if e["stable"]:
            edge = max(edge, abs(e["a"]))
        else:
            break
    unstable_abs = sorted(abs(e["a"]) for e in entries if not e["stable"])
    bracket = None
    if unstable_abs:
        bracket = {"last_stable": edge, "first_unstable": unstable_abs[0]}
    window = {"lower": -edge, "upper": edge}

    return WindowReport(a_values=a_values, entries=entries,
                        threshold=threshold, indicator_zero=indicator_zero,
                        acrit_estimate=acrit_note,
                        predicted_edge=predicted_window_edge(domain),
                        window=window, bracket=bracket)


# ---------------------------------------------------------------------
# mapping-property probes
# ---------------------------------------------------------------------


def laplacian_proxy(u: FemField) -> np.ndarray:
    """Per-element Laplacian surrogate: trace of the recovered Hessian."""
    hess = femcore.element_hessians(u)
    return np.einsum("edd->e", hess)


def mapping_ratio(domain: Polyhedron, u: FemField, a: float) -> dict:
    """Quotient norm(proxy Delta u, K(0, a - 2)) / norm(u, K(2, a))."""
    mesh = u.mesh
    eta = weights.eta_field(domain)
    num = sobolev.k_data_norm(domain, mesh, laplacian_proxy(u),
                              a=a - 2.0).value
    den = sobolev.k_norm(u, eta, NormSpec(mu=2, a=a)).value
    return {"a": a, "numerator": num, "denominator": den,
            "ratio": num / den if den > 0.0 else math.inf}


def bump_basis(domain: Polyhedron, n: int = 10) -> list:
    """Fixed family of Gaussian bumps centered at interior Halton points.

    The bumps are smooth functions of position, so they can be
    interpolated consistently on any mesh of the domain.
    """
    centers = weights.sample_interior(domain, n)
    dists = domain.boundary_distance(centers)

    def make(c, s):
        def bump(points):
            rel = np.atleast_2d(points) - c
            return np.exp(-np.einsum("nd,nd->n", rel, rel) / (2.0 * s * s))
        return bump

    return [make(centers[i], max(0.35 * dists[i], 0.05)) for i in range(n)]


def conjugation_lipschitz(domain: Polyhedron, mesh: SimplicialMesh,
                          a_grid) -> dict:
    """Max-row-sum Lipschitz estimate of a -> B_a over a grid.

    Reports max over consecutive grid pairs of
    norm(B_a1 - B_a2, inf) / |a1 - a2|.
    """
    a_grid = sorted(float(a) for a in a_grid)
    if len(a_grid) < 2:
        raise ValueError("need at least two grid points")
    parts = conjugate_parts(domain, mesh)
    mats = [combine_conjugate(parts, a) for a in a_grid]
    pairs = []
    worst = 0.0
    for i in range(len(a_grid) - 1):
        diff = (mats[i + 1] - mats[i]).tocsr()
        num = float(np.abs(diff).sum(axis=1).max())
        rate = num / (a_grid[i + 1] - a_grid[i])
        pairs.append({"a_low": a_grid[i], "a_high": a_grid[i + 1],
                      "rate": rate})
        worst = max(worst, rate)
    return {"norm": "max_row_sum", "grid": a_grid, "pairs": pairs,
            "lipschitz": worst}
