"""Network surrogate, Dirichlet lift and piecewise-multilinear projection.

The approximate solution is built in three steps: the feed-forward network
is evaluated at the mesh nodes, the lift ``u_D + phi_D * u_nn`` enforces the
Dirichlet data strongly, and the nodal values are interpolated
multilinearly over each element.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from . import autodiff as ad
from .errors import UsageError
from .mesh import TensorMesh

DEFAULT_HIDDEN = (10, 10, 10, 10, 10)


@dataclass
class Network:
    """Feed-forward net; sigmoid on hidden layers, identity on the last.

    ``theta`` stores, layer by layer, the weight matrix (``N_i x N_{i-1}``,
    row-major) followed by the bias vector.
    """

    sizes: tuple
    theta: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise UsageError(f"invalid layer sizes {self.sizes}")
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.size != n_params(self.sizes):
            raise UsageError(
                f"theta has {self.theta.size} entries, layers {self.sizes} need {n_params(self.sizes)}"
            )

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def layers(self, theta=None):
        """Yield ``(W, b)`` per layer as views (or nested lists for Variables)."""
        theta = self.theta if theta is None else theta
        off = 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = theta[off : off + n_in * n_out]
            off += n_in * n_out
            b = theta[off : off + n_out]
            off += n_out
            if isinstance(theta, np.ndarray):
                yield w.reshape(n_out, n_in), b
            else:
                yield [list(w[r * n_in : (r + 1) * n_in]) for r in range(n_out)], list(b)


def n_params(sizes: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


def init_network(d: int, hidden: Sequence[int] = DEFAULT_HIDDEN, seed: int = 0) -> Network:
    """Glorot-uniform weights, zero biases."""
    sizes = (d, *hidden, 1)
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-bound, bound, size=n_out * n_in))
        parts.append(np.zeros(n_out))
    return Network(sizes, np.concatenate(parts))


def nn_forward(net: Network, points, theta=None):
    """Network output at each point.

    ``points`` is an ``(n, d)`` array, or a sequence of coordinate tuples
    whose entries may be Variables. With a Variable ``theta`` (or Variable
    coordinates) the evaluation is recorded on the tape, one scalar at a time.
    """
    theta = net.theta if theta is None else theta
    scalar = not isinstance(theta, np.ndarray) or not isinstance(points, np.ndarray)
    if not scalar:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != net.sizes[0]:
            raise UsageError(f"expected points of shape (n, {net.sizes[0]}), got {points.shape}")
        acts = _kernels.mlp_forward(theta, np.array(net.sizes, dtype=np.int64), points)
        return acts[:, -1].copy()
    layers = list(net.layers(theta))
    out = []
    for p in points:
        if len(p) != net.sizes[0]:
            raise UsageError(f"point {p} has dimension {len(p)}, network expects {net.sizes[0]}")
        h = list(p)
        for k, (w, b) in enumerate(layers):
            z = [_dot(row, h) + bias for row, bias in zip(w, b)]
            h = z if k == len(layers) - 1 else [ad.sigmoid(v) for v in z]
        out.append(h[0])
    return out


def _dot(row, h):
    acc = row[0] * h[0]
    for w, x in zip(row[1:], h[1:]):
        acc = acc + w * x
    return acc


@dataclass(frozen=True)
class DirichletLift:
    """``D(u) = u_D + phi_D * u``; ``phi_D`` vanishes on the Dirichlet boundary.

    Callables take one argument per coordinate and must accept floats,
    Variables and arrays. ``*_grad`` return one partial per coordinate and
    are only needed by the vectorised pipeline.
    """

    phi: Callable
    phi_grad: Callable
    u_D: Optional[Callable] = None
    u_D_grad: Optional[Callable] = None


def apply_lift(values, lift: DirichletLift, coords):
    """Lifted nodal values ``u_D(x) + phi_D(x) * values``."""
    if isinstance(coords, np.ndarray) and isinstance(values, np.ndarray):
        cols = coords.T
        out = lift.phi(*cols) * values
        if lift.u_D is not None:
            out = out + lift.u_D(*cols)
        return out
    out = []
    for v, p in zip(values, coords):
        u = lift.phi(*p) * v
        if lift.u_D is not None:
            u = u + lift.u_D(*p)
        out.append(u)
    return out


class PiecewiseSolution:
    """Continuous piecewise-(multi)linear function given by nodal values."""

    def __init__(self, mesh: TensorMesh, values):
        if len(values) != mesh.n_nodes:
            raise UsageError(f"{len(values)} nodal values for {mesh.n_nodes} nodes")
        self.mesh = mesh
        self.values = values

    def corner_values(self, elem):
        return [self.values[i] for i in self.mesh.element_corners(elem)]

    def local_value(self, elem, t):
        """Value at local coordinates ``t`` in [0, 1]^d of element ``elem``."""
        vals = self.corner_values(elem)
        total = 0.0
        for c, off in zip(vals, itertools.product(*([(0, 1)] * self.mesh.d))):
            basis = 1.0
            for tk, o in zip(t, off):
                basis = basis * (tk if o else 1.0 - tk)
            total = total + basis * c
        return total

    def gradient_in_element(self, elem, t):
        """Gradient at local coordinates ``t`` of a positive-volume element."""
        mesh = self.mesh
        h = [ax[i + 1] - ax[i] for ax, i in zip(mesh.axes, elem)]
        if any(ad.value(hk) == 0.0 for hk in h):
            raise UsageError(f"gradient requested on zero-volume element {elem}")
        vals = self.corner_values(elem)
        offs = list(itertools.product(*([(0, 1)] * mesh.d)))
        grad = []
        for k in range(mesh.d):
            acc = 0.0
            for c, off in zip(vals, offs):
                basis = 1.0 if off[k] else -1.0
                for j, (tj, o) in enumerate(zip(t, off)):
                    if j != k:
                        basis = basis * (tj if o else 1.0 - tj)
                acc = acc + basis * c
            grad.append(acc / h[k])
        return grad

    def locate(self, x):
        """Element multi-index and local coordinates containing point ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        elem, t = [], []
        for ax, xk in zip(self.mesh.axes, x):
            ax = np.array([ad.value(c) for c in ax])
            if not ax[0] <= xk <= ax[-1]:
                raise UsageError(f"point {tuple(x)} outside the domain box")
            i = int(np.clip(np.searchsorted(ax, xk, side="right") - 1, 0, len(ax) - 2))
            # skip zero-length elements at the located position
            while ax[i + 1] == ax[i] and i + 1 < len(ax) - 1:
                i += 1
            h = ax[i + 1] - ax[i]
            elem.append(i)
            t.append(0.0 if h == 0.0 else (xk - ax[i]) / h)
        return tuple(elem), t

    def evaluate(self, x):
        elem, t = self.locate(x)
        return self.local_value(elem, t)
