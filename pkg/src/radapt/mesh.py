"""Trainable 1D coordinate vectors and the tensor-product meshes built from them.

An axis is parameterised by a vector ``psi`` of ``n_delta + 2`` reals. The
coordinates are obtained by sorting ``psi``, rescaling it affinely so its
extreme entries land on ``a`` and ``b``, then merging in the fixed interior
coordinates ``x_fix`` and sorting again. The extreme entries of ``psi`` are
therefore inert: they are pinned to the domain ends whatever their value.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DegenerateAxisError, UsageError


def init_uniform(n_delta: int) -> np.ndarray:
    """``psi_i = i`` for ``i = 1 .. n_delta + 2``; maps to a uniform axis."""
    if n_delta < 0:
        raise UsageError(f"n_delta must be >= 0, got {n_delta}")
    return np.arange(1.0, n_delta + 3.0)


def n_delta_for(n_elements: int, n_fix: int = 0) -> int:
    """Free coordinates needed for ``n_elements`` along an axis with ``n_fix`` fixed nodes."""
    n_delta = n_elements - 1 - n_fix
    if n_delta < 0:
        raise UsageError(f"{n_elements} elements cannot hold {n_fix} fixed interior nodes")
    return n_delta


def _check_axis_args(n_psi, a, b, x_fix):
    if not a < b:
        raise UsageError(f"axis requires a < b, got a={a}, b={b}")
    if n_psi < 2:
        raise UsageError("psi needs at least two entries")
    xf = np.asarray(x_fix, dtype=float)
    if xf.size and (np.any(xf <= a) or np.any(xf >= b) or np.any(np.diff(xf) < 0)):
        raise UsageError(f"fixed coordinates must be sorted and strictly inside ({a}, {b})")


def build_axis(psi, a: float, b: float, x_fix: Sequence[float] = ()):
    """Sorted node coordinates of one axis.

    Works on floats (returns an ndarray) or on autodiff Variables (returns a
    list; the end points and fixed nodes are plain floats and so carry no
    gradient).
    """
    psi = list(psi)
    _check_axis_args(len(psi), a, b, x_fix)
    s = ad.sort(psi)
    span = s[-1] - s[0]
    if ad.value(span) == 0.0:
        raise DegenerateAxisError("all trainable coordinates coincide after sorting")
    coords = [a] + [(v - s[0]) / span * (b - a) + a for v in s[1:-1]] + [b]
    if len(x_fix):
        coords = ad.sort(coords + [float(x) for x in x_fix])
    if any(isinstance(c, ad.Variable) for c in coords):
        return coords
    return np.array(coords, dtype=float)


@dataclass
class AxisMap:
    """Vectorised forward pass of :func:`build_axis` with its pullback."""

    coords: np.ndarray
    order: np.ndarray  # argsort of psi
    merge: np.ndarray  # argsort of concatenate(scaled, x_fix)
    unit: np.ndarray  # sorted psi rescaled to [0, 1]
    span: float
    length: float  # b - a

    def pullback(self, dcoords: np.ndarray) -> np.ndarray:
        """Adjoint of ``psi`` given the adjoint of the coordinates."""
        n_psi = self.order.size
        dmerged = np.empty_like(dcoords)
        dmerged[self.merge] = dcoords
        dt = dmerged[:n_psi] * self.length
        dt[0] = dt[-1] = 0.0
        ds = dt / self.span
        ds[0] += np.dot(dt, self.unit - 1.0) / self.span
        ds[-1] -= np.dot(dt, self.unit) / self.span
        dpsi = np.empty(n_psi)
        dpsi[self.order] = ds
        return dpsi


def build_axis_map(psi: np.ndarray, a: float, b: float, x_fix: Sequence[float] = ()) -> AxisMap:
    psi = np.asarray(psi, dtype=float)
    _check_axis_args(psi.size, a, b, x_fix)
    order = np.argsort(psi, kind="stable")
    s = psi[order]
    span = s[-1] - s[0]
    if span == 0.0:
        raise DegenerateAxisError("all trainable coordinates coincide after sorting")
    unit = (s - s[0]) / span
    scaled = unit * (b - a) + a
    scaled[0], scaled[-1] = a, b
    merged = np.concatenate([scaled, np.asarray(x_fix, dtype=float)])
    merge = np.argsort(merged, kind="stable")
    return AxisMap(merged[merge], order, merge, unit, span, b - a)


@dataclass
class TensorMesh:
    """Cartesian product of ``d`` coordinate vectors.

    Nodes are ordered row-major (last axis fastest); element ``e`` has the
    multi-index of its lower corner in the same ordering over ``n_i - 1``.
    """

    axes: list
    shape: tuple = field(init=False)

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise UsageError("only 1D and 2D meshes are supported")
        if any(len(ax) < 2 for ax in self.axes):
            raise UsageError("every axis needs at least two coordinates")
        self.shape = tuple(len(ax) for ax in self.axes)

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod([n - 1 for n in self.shape]))

    def node_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def nodes(self) -> list[tuple]:
        return list(itertools.product(*self.axes))

    def node_array(self) -> np.ndarray:
        return np.array([[ad.value(c) for c in p] for p in self.nodes()], dtype=float)

    def elements(self) -> list[tuple]:
        return list(itertools.product(*(range(n - 1) for n in self.shape)))

    def element_corners(self, elem) -> list[int]:
        """Global node indices of an element's corners in lexicographic order."""
        offsets = itertools.product(*([(0, 1)] * self.d))
        return [self.node_index(tuple(i + o for i, o in zip(elem, off))) for off in offsets]

    def element_midpoint(self, elem) -> np.ndarray:
        return np.array(
            [0.5 * (ad.value(ax[i]) + ad.value(ax[i + 1])) for ax, i in zip(self.axes, elem)]
        )


def build_mesh(axes) -> TensorMesh:
    return TensorMesh(list(axes))


def element_geometry(mesh: TensorMesh, elem):
    """``(lower corner, upper corner, volume)`` of an element.

    ``elem`` is a multi-index or a flat row-major element number.
    """
    if isinstance(elem, (int, np.integer)):
        elem = np.unravel_index(int(elem), tuple(n - 1 for n in mesh.shape))
    lo = tuple(ax[i] for ax, i in zip(mesh.axes, elem))
    hi = tuple(ax[i + 1] for ax, i in zip(mesh.axes, elem))
    volume = 1.0
    for l, h in zip(lo, hi):
        volume = volume * (h - l)
    return lo, hi, volume


def element_flags(axes: Sequence[np.ndarray], region: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate ``region`` at every element midpoint, shaped like the element grid."""
    mids = [0.5 * (ax[:-1] + ax[1:]) for ax in axes]
    grids = np.meshgrid(*mids, indexing="ij")
    return region(np.stack(grids, axis=-1))
