"""Linear finite elements in 1D, the H^1 error norm and convergence studies.

The solver handles ``-(sigma u')' = f`` with homogeneous Dirichlet data on the
sides not listed as Neumann and the flux ``g`` on the others. Meshes coming
out of training can contain repeated nodes; those are merged first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import UsageError
from .problems import ELLIPTIC, ProblemSpec
from .quadrature import element_quadrature, gauss_rule


@dataclass
class TridiagonalSystem:
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def solve(self) -> np.ndarray:
        return _kernels.thomas(self.sub, self.diag, self.sup, self.rhs)


def merge_nodes(x, length: float) -> np.ndarray:
    """Drop nodes closer than ``1e-12 * length`` to their predecessor."""
    x = np.sort(np.asarray(x, dtype=float))
    keep = np.concatenate([[True], np.diff(x) > 1e-12 * length])
    out = x[keep]
    out[-1] = x[-1]
    return out


def assemble_1d(x, spec: ProblemSpec, q: int = 10) -> TridiagonalSystem:
    """Stiffness and load for all nodes, before boundary conditions."""
    h = np.diff(x)
    mid = 0.5 * (x[:-1] + x[1:])
    k = np.asarray(spec.sigma_at(mid), dtype=float) / h
    n = x.size
    diag = np.zeros(n)
    diag[:-1] += k
    diag[1:] += k
    off = -k
    rule = gauss_rule(q)
    t, w = rule.unit_points, rule.unit_weights
    xq = x[:-1, None] + h[:, None] * t
    fw = np.asarray(spec.source(xq), dtype=float) * w * h[:, None]
    rhs = np.zeros(n)
    rhs[:-1] += np.sum(fw * (1.0 - t), axis=1)
    rhs[1:] += np.sum(fw * t, axis=1)
    for side in spec.neumann:
        i = -1 if side.side else 0
        rhs[i] += float(np.asarray(spec.flux(side, np.array([x[i]])))[0])
    return TridiagonalSystem(off.copy(), diag, off.copy(), rhs)


def dirichlet_sides(spec: ProblemSpec) -> list:
    neumann = {s.side for s in spec.neumann}
    return [s for s in (0, 1) if s not in neumann]


def fem_solve_1d(coords, spec: ProblemSpec, q: int = 10):
    """Nodal values of the linear FEM solution on ``coords``.

    Returns ``(nodes, values)``; ``nodes`` is ``coords`` with duplicates merged.
    """
    if spec.kind != ELLIPTIC or spec.d != 1:
        raise UsageError("the FEM baseline handles 1D elliptic problems")
    a, b = spec.box[0]
    x = merge_nodes(coords, b - a)
    if x[0] != a or x[-1] != b or x.size < 2:
        raise UsageError(f"mesh must span [{a}, {b}]")
    fixed = dirichlet_sides(spec)
    if not fixed:
        raise UsageError("pure Neumann problem: the stiffness matrix is singular")
    sysm = assemble_1d(x, spec, q)
    u = np.zeros(x.size)
    if spec.lift.u_D is not None:
        for s in fixed:
            i = -1 if s else 0
            u[i] = float(np.asarray(spec.lift.u_D(np.array([x[i]])))[0])
    free = np.ones(x.size, dtype=bool)
    for s in fixed:
        free[-1 if s else 0] = False
    # move the known boundary values to the right-hand side
    rhs = sysm.rhs.copy()
    rhs[1:] -= sysm.sub * u[:-1]
    rhs[:-1] -= sysm.sup * u[1:]
    idx = np.flatnonzero(free)
    lo, hi = idx[0], idx[-1] + 1
    reduced = TridiagonalSystem(
        sysm.sub[lo : hi - 1], sysm.diag[lo:hi], sysm.sup[lo : hi - 1], rhs[lo:hi]
    )
    u[lo:hi] = reduced.solve()
    return x, u


def energy_norm_error(u, du, spec: ProblemSpec, breakpoints=(), q: int = 8) -> float:
    """``sqrt(int (u_exact - u)^2 + |u_exact' - u'|^2)`` in 1D.

    ``u`` and ``du`` are callables on arrays; they must be smooth between
    ``breakpoints``. Integration runs on the union of the breakpoints and the
    problem's reference mesh, which is graded toward any singular point.
    """
    a, b = spec.box[0]
    ref = spec.reference_axes()[0] if spec.reference_axes is not None else np.linspace(a, b, 2001)
    x = merge_nodes(np.concatenate([ref, np.asarray(breakpoints, dtype=float), [a, b]]), b - a)
    pts, wts = element_quadrature([x], gauss_rule(q))
    xq = pts[..., 0]
    e0 = spec.exact_u(xq) - u(xq)
    e1 = spec.exact_grad(xq)[0] - du(xq)
    return float(np.sqrt(np.sum(wts * (e0**2 + e1**2))))


def piecewise_linear(nodes, values):
    """``(u, du)`` callables of the interpolant through ``(nodes, values)``.

    Repeated nodes are merged (the first value is kept); the slope at a node
    is that of the element to its right.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.concatenate([[True], np.diff(nodes) > 0])
    xs, us = nodes[keep], values[keep]
    slopes = np.diff(us) / np.diff(xs)

    def u(x):
        return np.interp(x, xs, us)

    def du(x):
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[i]

    return u, du


def solution_error(nodes, values, spec: ProblemSpec, q: int = 8) -> float:
    """Energy-norm error of a piecewise-linear nodal solution."""
    u, du = piecewise_linear(nodes, values)
    return energy_norm_error(u, du, spec, breakpoints=nodes, q=q)


@dataclass
class ConvergenceStudy:
    elements: np.ndarray
    errors: np.ndarray
    rate: float


def fitted_rate(elements, errors) -> float:
    """Negated least-squares slope of ``log(error)`` against ``log(elements)``."""
    return float(-np.polyfit(np.log(elements), np.log(errors), 1)[0])


def convergence_study(spec: ProblemSpec, elements, meshes=None, q: int = 8) -> ConvergenceStudy:
    """FEM error for each element count on uniform meshes or on ``meshes[n]``."""
    elements = np.asarray(list(elements), dtype=int)
    if elements.size < 3:
        raise UsageError("a convergence study needs at least 3 element counts")
    a, b = spec.box[0]
    errs = []
    for n in elements:
        x = np.linspace(a, b, n + 1) if meshes is None else np.asarray(meshes[int(n)], dtype=float)
        nodes, vals = fem_solve_1d(x, spec)
        errs.append(solution_error(nodes, vals, spec, q))
    errs = np.array(errs)
    return ConvergenceStudy(elements, errs, fitted_rate(elements, errs))
