"""Gauss-Legendre rules on [-1, 1], mapped to mesh elements and boundary edges."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import value
from .errors import NumericalError, UsageError

MAX_POINTS = 16


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def unit_points(self) -> np.ndarray:
        """Points mapped to [0, 1]."""
        return 0.5 * (self.points + 1.0)

    @property
    def unit_weights(self) -> np.ndarray:
        """Weights for [0, 1]; they sum to 1."""
        return 0.5 * self.weights


@lru_cache(maxsize=None)
def gauss_rule(q: int) -> QuadRule:
    if not 1 <= q <= MAX_POINTS:
        raise UsageError(f"quadrature point count must be in [1, {MAX_POINTS}], got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(x, w)


def integrate_element(f, lo, hi, rule: QuadRule):
    """Integrate ``f`` over the box ``[lo, hi]`` with a tensorized rule.

    ``lo``/``hi`` are per-axis bounds (floats or Variables). ``f`` receives
    one physical point as a tuple of coordinates. Elements of zero volume
    return exactly 0 without evaluating ``f``.
    """
    lo = tuple(lo) if isinstance(lo, (tuple, list)) else (lo,)
    hi = tuple(hi) if isinstance(hi, (tuple, list)) else (hi,)
    extents = [h - l for l, h in zip(lo, hi)]
    if any(value(e) == 0.0 for e in extents):
        return 0.0
    jac = 1.0
    for e in extents:
        jac = jac * e
    jac = jac * (0.5 ** len(extents))
    total = 0.0
    grids = np.meshgrid(*([np.arange(rule.order)] * len(lo)), indexing="ij")
    for idx in zip(*(g.ravel() for g in grids)):
        point = tuple(l + 0.5 * (rule.points[k] + 1.0) * e for l, e, k in zip(lo, extents, idx))
        fx = f(point)
        if not math.isfinite(value(fx)):
            raise NumericalError(
                f"non-finite integrand on element {tuple(map(value, lo))}-{tuple(map(value, hi))} "
                f"at point {tuple(map(value, point))}"
            )
        w = 1.0
        for k in idx:
            w *= rule.weights[k]
        total = total + w * fx
    return jac * total


def integrate_boundary_1d_point(g, u, x):
    """Neumann contribution at a 1D boundary point: ``g(x) * u(x)``."""
    return g(x) * u(x)


def integrate_boundary_2d_edge(gu, start, end, rule: QuadRule):
    """Integrate ``gu`` along the axis-aligned edge from ``start`` to ``end``.

    ``gu`` receives a point tuple. ``end`` must not precede ``start`` along
    the varying coordinate; the Jacobian is the edge length / 2.
    """
    length = 0.0
    for s, e in zip(start, end):
        if value(e) != value(s):
            length = e - s
    if value(length) == 0.0:
        return 0.0
    total = 0.0
    for t, w in zip(rule.unit_points, rule.weights):
        point = tuple(s + t * (e - s) for s, e in zip(start, end))
        total = total + w * gu(point)
    return 0.5 * length * total


def element_quadrature(axes, rule: QuadRule):
    """Physical quadrature points and weights for every element of a tensor mesh.

    Returns ``points`` of shape ``(n_K, q**d, d)`` and ``weights`` of shape
    ``(n_K, q**d)`` with elements in row-major order. Weights already include
    the element Jacobian, so zero-volume elements carry zero weight.
    """
    d = len(axes)
    lo = [np.asarray(ax[:-1], dtype=float) for ax in axes]
    h = [np.diff(np.asarray(ax, dtype=float)) for ax in axes]
    t, w = rule.unit_points, rule.unit_weights
    # per-axis points (n_i - 1, q) and weights
    pts = [l[:, None] + hh[:, None] * t[None, :] for l, hh in zip(lo, h)]
    wts = [hh[:, None] * w[None, :] for hh in h]
    if d == 1:
        return pts[0][:, :, None], wts[0]
    nx, ny, q = len(h[0]), len(h[1]), rule.order
    px = np.broadcast_to(pts[0][:, None, :, None], (nx, ny, q, q))
    py = np.broadcast_to(pts[1][None, :, None, :], (nx, ny, q, q))
    ww = wts[0][:, None, :, None] * wts[1][None, :, None, :]
    points = np.stack([px, py], axis=-1).reshape(nx * ny, q * q, 2)
    return points, ww.reshape(nx * ny, q * q)
