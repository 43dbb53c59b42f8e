"""Loss functionals over a piecewise-linear solution.

* ``loss_collocation``: integrated absolute residual of ``beta u' + u - f``.
* ``loss_least_squares``: square root of the integrated squared residual.
* ``loss_ritz``: ``1/2 int sigma |grad u|^2 - int f u - int_{Gamma_N} g u``.

These functions walk the mesh element by element and work on floats or tape
Variables alike; :mod:`radapt.pipeline` has the vectorised equivalent used
during training. Elements of zero volume, and elements whose midpoint lies
outside the physical domain, contribute exactly 0.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import UsageError
from .model import PiecewiseSolution
from .problems import ELLIPTIC, HYPERBOLIC, ProblemSpec
from .quadrature import gauss_rule, integrate_boundary_2d_edge, integrate_element

DEFAULT_Q = 5


def _local(point, lo, hi):
    return [(p - l) / (h - l) for p, l, h in zip(point, lo, hi)]


def _element_box(mesh, elem):
    lo = tuple(ax[i] for ax, i in zip(mesh.axes, elem))
    hi = tuple(ax[i + 1] for ax, i in zip(mesh.axes, elem))
    return lo, hi


def residual_advection(sol: PiecewiseSolution, spec: ProblemSpec, elem, t):
    """``beta u_p' + u_p - f`` at local coordinate ``t`` of a 1D element."""
    lo, hi = _element_box(sol.mesh, elem)
    x = lo[0] + t[0] * (hi[0] - lo[0])
    du = sol.gradient_in_element(elem, t)[0]
    return spec.beta * du + sol.local_value(elem, t) - spec.source(x)


def _residual_integral(sol, spec, q, transform):
    if spec.kind != HYPERBOLIC:
        raise UsageError("residual losses need the hyperbolic problem")
    if sol.mesh.d != 1:
        raise UsageError("residual losses are implemented in 1D")
    rule = gauss_rule(q)
    total = 0.0
    for elem in sol.mesh.elements():
        lo, hi = _element_box(sol.mesh, elem)
        total = total + integrate_element(
            lambda p: transform(residual_advection(sol, spec, elem, _local(p, lo, hi))), lo, hi, rule
        )
    return total


def loss_collocation(sol: PiecewiseSolution, spec: ProblemSpec, q: int = DEFAULT_Q):
    return _residual_integral(sol, spec, q, abs)


def loss_least_squares(sol: PiecewiseSolution, spec: ProblemSpec, q: int = DEFAULT_Q):
    return ad.sqrt(_residual_integral(sol, spec, q, lambda r: r * r))


def loss_ritz(sol: PiecewiseSolution, spec: ProblemSpec, q: int = DEFAULT_Q):
    if spec.kind != ELLIPTIC:
        raise UsageError("the Ritz energy needs an elliptic problem")
    mesh = sol.mesh
    rule = gauss_rule(q)
    total = 0.0
    for elem in mesh.elements():
        mid = mesh.element_midpoint(elem)
        if not spec.is_active(*mid):
            continue
        sigma = spec.sigma_at(*mid)
        lo, hi = _element_box(mesh, elem)

        def density(p, elem=elem, lo=lo, hi=hi, sigma=sigma):
            t = _local(p, lo, hi)
            grad = sol.gradient_in_element(elem, t)
            g2 = grad[0] * grad[0]
            for gk in grad[1:]:
                g2 = g2 + gk * gk
            return 0.5 * sigma * g2 - spec.source(*p) * sol.local_value(elem, t)

        total = total + integrate_element(density, lo, hi, rule)
    return total - neumann_term(sol, spec, rule)


def neumann_term(sol: PiecewiseSolution, spec: ProblemSpec, rule):
    """``int_{Gamma_N} g u`` for the piecewise solution."""
    mesh = sol.mesh
    total = 0.0
    for side in spec.neumann:
        if mesh.d == 1:
            i = len(mesh.axes[0]) - 1 if side.side else 0
            x = mesh.axes[0][i]
            total = total + spec.flux(side, ad.value(x)) * sol.values[i]
            continue
        k, other = side.axis, 1 - side.axis
        fixed_i = len(mesh.axes[k]) - 1 if side.side else 0
        pos = mesh.axes[k][fixed_i]
        line = mesh.axes[other]
        for j in range(len(line) - 1):
            mid = [0.0, 0.0]
            mid[k] = ad.value(pos)
            mid[other] = 0.5 * (ad.value(line[j]) + ad.value(line[j + 1]))
            if not spec.is_active(*mid):
                continue
            start, end = [None, None], [None, None]
            start[k] = end[k] = pos
            start[other], end[other] = line[j], line[j + 1]
            elem = [0, 0]
            elem[k] = fixed_i - 1 if side.side else 0
            elem[other] = j

            def gu(p, elem=tuple(elem), start=start, end=end):
                t = [0.0, 0.0]
                t[k] = float(side.side)
                t[other] = (p[other] - start[other]) / (end[other] - start[other])
                return spec.flux(side, *p) * sol.local_value(elem, t)

            total = total + integrate_boundary_2d_edge(gu, tuple(start), tuple(end), rule)
    return total


def loss_error(loss, spec: ProblemSpec) -> float:
    """Loss minus its value at the exact solution."""
    if spec.exact_energy is None:
        raise UsageError(f"experiment {spec.id} has no reference loss")
    return float(ad.value(loss)) - spec.exact_energy


LOSSES = {
    "collocation": loss_collocation,
    "least_squares": loss_least_squares,
    "ritz": loss_ritz,
}


def check_pairing(spec: ProblemSpec, kind: str) -> str:
    kind = kind.replace("-", "_")
    if kind not in LOSSES:
        raise UsageError(f"unknown loss {kind!r}; choose from {sorted(LOSSES)}")
    if kind not in spec.loss_kinds:
        raise UsageError(f"experiment {spec.id} ({spec.kind}) does not admit the {kind} loss")
    return kind


def element_midpoints(axes) -> np.ndarray:
    mids = [0.5 * (np.asarray(ax[:-1]) + np.asarray(ax[1:])) for ax in axes]
    return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)
