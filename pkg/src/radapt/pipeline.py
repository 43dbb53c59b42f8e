"""Loss and exact gradient of the full chain ``(theta, psi) -> mesh -> u_p -> loss``.

Two routes compute the same quantity:

* :class:`LossPipeline` is vectorised: the axis maps, the network, the lift and
  the loss each provide a forward kernel and an adjoint, chained by hand.
  This is the route used in training.
* :func:`record_loss` replays the same chain on the scalar tape of
  :mod:`radapt.autodiff`. It is slow but has no hand-written adjoints, so it
  serves as the oracle for the vectorised route.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import autodiff as ad
from .errors import NumericalError, UsageError
from .losses import LOSSES, check_pairing, element_midpoints
from .mesh import build_axis, build_axis_map, build_mesh, init_uniform, n_delta_for
from .model import Network, PiecewiseSolution, apply_lift, nn_forward
from .problems import ProblemSpec
from .quadrature import gauss_rule

GUARD = 1e-30


@dataclass
class Evaluation:
    loss: float
    dtheta: np.ndarray
    dpsi: list
    axes: list
    values: np.ndarray  # lifted nodal values, row-major


def initial_psi(spec: ProblemSpec, elements) -> list:
    """Uniform-mesh ``psi`` per axis for the requested element counts."""
    elements = _per_axis(elements, spec.d)
    return [init_uniform(n_delta_for(n, len(spec.fixed_for(k)))) for k, n in enumerate(elements)]


def _per_axis(elements, d):
    if np.ndim(elements) == 0:
        return (int(elements),) * d
    elements = tuple(int(e) for e in elements)
    if len(elements) != d:
        raise UsageError(f"need {d} element counts, got {len(elements)}")
    return elements


def build_axes(spec: ProblemSpec, psis) -> list:
    return [build_axis_map(p, *spec.box[k], spec.fixed_for(k)).coords for k, p in enumerate(psis)]


def node_grid(axes) -> np.ndarray:
    """Row-major ``(n_nodes, d)`` array of node coordinates."""
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


class LossPipeline:
    """Vectorised loss and gradient for one problem, loss kind and network shape."""

    def __init__(self, spec: ProblemSpec, loss: str, sizes, q: int = 5):
        self.spec = spec
        self.loss = check_pairing(spec, loss)
        self.sizes = np.array(sizes, dtype=np.int64)
        if self.sizes[0] != spec.d or self.sizes[-1] != 1:
            raise UsageError(f"network {tuple(sizes)} does not map R^{spec.d} to R")
        rule = gauss_rule(q)
        self.t = rule.unit_points
        self.w = rule.unit_weights

    def nodal_values(self, theta, psis):
        maps = [build_axis_map(p, *self.spec.box[k], self.spec.fixed_for(k)) for k, p in enumerate(psis)]
        axes = [m.coords for m in maps]
        X = node_grid(axes)
        acts = _kernels.mlp_forward(theta, self.sizes, X)
        uhat = acts[:, -1]
        cols = X.T
        phi = self.spec.lift.phi(*cols)
        U = phi * uhat
        if self.spec.lift.u_D is not None:
            U = U + self.spec.lift.u_D(*cols)
        return maps, axes, X, acts, uhat, phi, U

    def evaluate(self, theta, psis) -> Evaluation:
        spec = self.spec
        theta = np.asarray(theta, dtype=float)
        maps, axes, X, acts, uhat, phi, U = self.nodal_values(theta, psis)
        loss, dU, daxes = self.nodal_loss(axes, U)

        # back through the lift, then the network
        cols = X.T
        dX = np.outer(dU * uhat, np.ones(spec.d)) * np.stack(spec.lift.phi_grad(*cols), axis=1)
        if spec.lift.u_D_grad is not None:
            dX += dU[:, None] * np.stack(spec.lift.u_D_grad(*cols), axis=1)
        dtheta, dXnet = _kernels.mlp_backward(theta, self.sizes, acts, dU * phi)
        dX += dXnet

        # node coordinates -> axis coordinates -> psi
        shape = tuple(len(ax) for ax in axes)
        dX = dX.reshape(shape + (spec.d,))
        dpsi = []
        for k, m in enumerate(maps):
            other = tuple(j for j in range(spec.d) if j != k)
            dcoord = daxes[k] + dX[..., k].sum(axis=other)
            dpsi.append(m.pullback(dcoord))
        return Evaluation(float(loss), dtheta, dpsi, axes, U)

    def nodal_loss(self, axes, U):
        """Loss of the piecewise-linear field with row-major nodal values ``U``.

        Returns ``(loss, dloss/dU, [dloss/daxis_k])``.
        """
        U = np.asarray(U, dtype=float)
        if self.spec.d == 1:
            loss, dU, daxes = self._loss_1d(np.asarray(axes[0], dtype=float), U)
        else:
            loss, dU, daxes = self._loss_2d([np.asarray(a, dtype=float) for a in axes], U)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite {self.loss} loss")
        return float(loss), dU, daxes

    # -- loss kernels ---------------------------------------------------------

    def _quad_1d(self, x):
        h = np.diff(x)
        xq = x[:-1, None] + h[:, None] * self.t
        live = np.broadcast_to((h > 0)[:, None], xq.shape)
        # zero-length elements are skipped by the kernels; keep their data finite
        xs = np.where(live, xq, np.repeat(0.5 * (x[:-1] + x[1:]), self.t.size).reshape(xq.shape))
        with np.errstate(all="ignore"):
            fq = np.asarray(self.spec.source(xs), dtype=float)
            dfq = np.asarray(self.spec.source_grad(xs)[0], dtype=float)
        fq = np.where(live & np.isfinite(fq), fq, 0.0)
        dfq = np.where(live & np.isfinite(dfq), dfq, 0.0)
        return fq, dfq

    def _loss_1d(self, x, U):
        spec = self.spec
        fq, dfq = self._quad_1d(x)
        if self.loss == "ritz":
            mid = 0.5 * (x[:-1] + x[1:])
            sigma = np.asarray(spec.sigma_at(mid), dtype=float)
            active = np.asarray(spec.is_active(mid), dtype=bool)
            value, dU, dx = _kernels.ritz_1d(x, U, sigma, active, fq, dfq, self.t, self.w)
            for side in spec.neumann:
                i = -1 if side.side else 0
                g = float(np.asarray(spec.flux(side, np.array([x[i]])))[0])
                value -= g * U[i]
                dU[i] -= g
            return value, dU, [dx]
        power = 1 if self.loss == "collocation" else 2
        value, dU, dx = _kernels.residual_1d(x, U, spec.beta, fq, dfq, self.t, self.w, power)
        if power == 2:
            root = np.sqrt(max(value, GUARD))
            scale = 0.5 / root
            return np.sqrt(value), dU * scale, [dx * scale]
        return value, dU, [dx]

    def _loss_2d(self, axes, U):
        spec = self.spec
        x, y = axes
        nx, ny = len(x), len(y)
        Ug = U.reshape(nx, ny)
        mids = element_midpoints(axes)
        sigma = np.asarray(spec.sigma_at(mids[..., 0], mids[..., 1]), dtype=float)
        active = np.asarray(spec.is_active(mids[..., 0], mids[..., 1]), dtype=bool)
        xq = x[:-1, None] + np.diff(x)[:, None] * self.t
        yq = y[:-1, None] + np.diff(y)[:, None] * self.t
        XQ = np.broadcast_to(xq[:, None, :, None], (nx - 1, ny - 1, self.t.size, self.t.size))
        YQ = np.broadcast_to(yq[None, :, None, :], XQ.shape)
        fq = np.asarray(spec.source(XQ, YQ), dtype=float) * np.ones(XQ.shape)
        dfx, dfy = (np.asarray(g, dtype=float) * np.ones(XQ.shape) for g in spec.source_grad(XQ, YQ))
        value, dUg, dx, dy = _kernels.ritz_2d(
            x, y, Ug, sigma, active, np.ascontiguousarray(fq), np.ascontiguousarray(dfx),
            np.ascontiguousarray(dfy), self.t, self.w,
        )
        dU = dUg.copy()
        daxes = [dx, dy]
        for side in spec.neumann:
            k, other = side.axis, 1 - side.axis
            idx = -1 if side.side else 0
            pos = axes[k][idx]
            line = axes[other]
            tq = line[:-1, None] + np.diff(line)[:, None] * self.t
            mid = 0.5 * (line[:-1] + line[1:])
            coords = [None, None]
            coords[k], coords[other] = np.full(tq.shape, pos), tq
            mcoords = [None, None]
            mcoords[k], mcoords[other] = np.full(mid.shape, pos), mid
            live = np.asarray(spec.is_active(*mcoords), dtype=bool)
            with np.errstate(all="ignore"):
                gq = np.asarray(spec.flux(side, *coords), dtype=float)
                dgq = np.asarray(spec.flux_grad(side, *coords)[other], dtype=float)
            ok = live[:, None] & np.isfinite(gq) & np.isfinite(dgq)
            gq = np.where(ok, gq, 0.0)
            dgq = np.where(ok, dgq, 0.0)
            Uline = np.ascontiguousarray(Ug[idx, :] if k == 0 else Ug[:, idx])
            v, dUl, dtl = _kernels.line_load(line, Uline, gq, dgq, self.t, self.w, live)
            value -= v
            if k == 0:
                dU[idx, :] -= dUl
            else:
                dU[:, idx] -= dUl
            daxes[other] = daxes[other] - dtl
        return value, dU.ravel(), daxes


def record_loss(spec: ProblemSpec, loss: str, net: Network, theta, psis, q: int = 5):
    """Record the whole chain on a fresh tape.

    Returns ``(tape, loss_variable, theta_variables, psi_variables)``.
    """
    kind = check_pairing(spec, loss)
    tape = ad.Tape()
    tv = [tape.variable(float(v)) for v in np.asarray(theta, dtype=float)]
    pv = [[tape.variable(float(v)) for v in np.asarray(p, dtype=float)] for p in psis]
    axes = [build_axis(p, *spec.box[k], spec.fixed_for(k)) for k, p in enumerate(pv)]
    mesh = build_mesh(axes)
    nodes = mesh.nodes()
    uhat = nn_forward(net, nodes, tv)
    values = apply_lift(uhat, spec.lift, nodes)
    out = LOSSES[kind](PiecewiseSolution(mesh, values), spec, q)
    if not isinstance(out, ad.Variable):
        out = tape.constant(float(out))
    return tape, out, tv, pv
