"""Catalogue of model problems with manufactured data and exact solutions.

Experiment 1 is the 1D advection-reaction problem ``beta u' + u = 1`` with
an inflow condition at ``x = 0``. Experiments 2-6 are elliptic problems
``-div(sigma grad u) = f`` solved through their Ritz energy.

All field callables take one argument per coordinate and are written with
the dispatching math of :mod:`radapt.autodiff`, so they evaluate floats,
numpy arrays and tape Variables alike. ``*_grad`` companions (arrays only)
feed the vectorised training pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .errors import UsageError
from .model import DirichletLift
from .quadrature import element_quadrature, gauss_rule

HYPERBOLIC = "hyperbolic"
ELLIPTIC = "elliptic"

LOSS_KINDS = {HYPERBOLIC: ("collocation", "least_squares"), ELLIPTIC: ("ritz",)}


@dataclass(frozen=True)
class NeumannSide:
    """One side of the domain box: ``axis`` and ``side`` (0 = lower, 1 = upper)."""

    axis: int
    side: int

    @property
    def normal_sign(self) -> float:
        return 1.0 if self.side else -1.0


@dataclass
class ProblemSpec:
    id: int
    kind: str
    box: tuple  # ((a, b), ...) per axis
    source: Callable
    source_grad: Callable
    exact_u: Callable
    exact_grad: Callable
    lift: DirichletLift
    fixed: tuple = ()  # interior fixed coordinates per axis
    sigma: Optional[Callable] = None
    beta: float = 0.0
    neumann: tuple = ()  # NeumannSide entries
    flux: Optional[Callable] = None  # g(side, *x)
    flux_grad: Optional[Callable] = None  # tangential-capable gradient of g
    active: Optional[Callable] = None  # True where the point lies in the physical domain
    bc_segments: dict = field(default_factory=dict)
    singular_points: tuple = ()
    reference_axes: Optional[Callable] = None  # builds the dense evaluation mesh
    exact_energy: Optional[float] = None
    defaults: dict = field(default_factory=dict)
    name: str = ""

    @property
    def d(self) -> int:
        return len(self.box)

    @property
    def loss_kinds(self) -> tuple:
        return LOSS_KINDS[self.kind]

    def fixed_for(self, axis: int) -> tuple:
        return tuple(self.fixed[axis]) if self.fixed else ()

    def is_active(self, *x):
        if self.active is None:
            return np.ones(np.shape(x[0]), dtype=bool) if isinstance(x[0], np.ndarray) else True
        return self.active(*x)

    def sigma_at(self, *x):
        if self.sigma is None:
            return np.ones(np.shape(x[0])) if isinstance(x[0], np.ndarray) else 1.0
        return self.sigma(*x)


def _const(c):
    def fn(*x):
        if isinstance(x[0], np.ndarray):
            return np.full(x[0].shape, float(c))
        return c

    return fn


def _zero_grad(*x):
    return tuple(np.zeros(np.shape(x[0])) for _ in x)


# ----------------------------------------------------------------------------
# lifts


def lift_left(a: float, b: float) -> DirichletLift:
    """Zero at ``a`` only."""
    L = b - a
    return DirichletLift(
        phi=lambda x: (x - a) / L,
        phi_grad=lambda x: (np.full(np.shape(x), 1.0 / L),),
    )


def lift_both(a: float, b: float) -> DirichletLift:
    """Zero at both ends, normalised to 1 at the midpoint."""
    c = 4.0 / (b - a) ** 2
    return DirichletLift(
        phi=lambda x: c * (x - a) * (b - x),
        phi_grad=lambda x: (c * (a + b - 2.0 * x),),
    )


def lift_unit_square() -> DirichletLift:
    return DirichletLift(
        phi=lambda x, y: 16.0 * x * (1.0 - x) * y * (1.0 - y),
        phi_grad=lambda x, y: (
            16.0 * (1.0 - 2.0 * x) * y * (1.0 - y),
            16.0 * x * (1.0 - x) * (1.0 - 2.0 * y),
        ),
    )


def _lshape_distance(x, y):
    r = ad.sqrt(x * x + y * y)
    d1 = ad.where(x <= 0, abs(y), r)  # to the leg {y = 0, x in [-1, 0]}
    d2 = ad.where(y <= 0, abs(x), r)  # to the leg {x = 0, y in [-1, 0]}
    return ad.minimum(d1, d2)


def _lshape_phi(x, y):
    return ad.minimum(1.0, _lshape_distance(x, y))


def _lshape_phi_grad(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    rs = np.where(r > 0, r, 1.0)
    gr = (np.where(r > 0, x / rs, 0.0), np.where(r > 0, y / rs, 0.0))
    d1 = np.where(x <= 0, np.abs(y), r)
    d2 = np.where(y <= 0, np.abs(x), r)
    g1 = (np.where(x <= 0, 0.0, gr[0]), np.where(x <= 0, np.sign(y), gr[1]))
    g2 = (np.where(y <= 0, np.sign(x), gr[0]), np.where(y <= 0, 0.0, gr[1]))
    first = d1 <= d2
    g = [np.where(first, a, b) for a, b in zip(g1, g2)]
    flat = np.minimum(d1, d2) >= 1.0
    return tuple(np.where(flat, 0.0, gk) for gk in g)


def lift_lshape() -> DirichletLift:
    """``min(1, dist)`` to the two Dirichlet legs meeting at the re-entrant corner."""
    return DirichletLift(phi=_lshape_phi, phi_grad=_lshape_phi_grad)


# ----------------------------------------------------------------------------
# experiment 1: advection-reaction boundary layer


def _experiment_1(beta: float) -> ProblemSpec:
    if beta <= 0:
        raise UsageError("beta must be positive (inflow at x = 0)")
    return ProblemSpec(
        id=1,
        kind=HYPERBOLIC,
        box=((0.0, 1.0),),
        source=_const(1.0),
        source_grad=_zero_grad,
        exact_u=lambda x: 1.0 - ad.exp(-x / beta),
        exact_grad=lambda x: (ad.exp(-x / beta) / beta,),
        lift=lift_left(0.0, 1.0),
        beta=beta,
        bc_segments={"inflow": ((0, 0),), "outflow": ((0, 1),)},
        exact_energy=0.0,
        defaults=dict(elements=8, stage1_epochs=3000, stage2_epochs=5000, lr=1e-2),
        name="advection-reaction boundary layer",
    )


# ----------------------------------------------------------------------------
# experiments 2-4: 1D elliptic


def _experiment_2() -> ProblemSpec:
    return ProblemSpec(
        id=2,
        kind=ELLIPTIC,
        box=((0.0, 10.0),),
        source=lambda x: 0.21 * x ** -1.3,
        source_grad=lambda x: (-0.273 * x ** -2.3,),
        exact_u=lambda x: x ** 0.7,
        exact_grad=lambda x: (0.7 * x ** -0.3,),
        lift=lift_left(0.0, 10.0),
        neumann=(NeumannSide(0, 1),),
        flux=lambda side, x: 0.7 * 10.0 ** -0.3 + 0.0 * x,
        flux_grad=lambda side, x: (np.zeros(np.shape(x)),),
        bc_segments={"dirichlet": ((0, 0),), "neumann": ((0, 1),)},
        singular_points=((0.0,),),
        reference_axes=lambda: [np.concatenate([[0.0], 10.0 * 2.0 ** -np.arange(80.0, -1.0, -1.0)])],
        defaults=dict(elements=16, stage1_epochs=1000, stage2_epochs=7000, lr=1e-2),
        name="singular solution x^0.7",
    )


def _atan_s(x):
    return 2.0 * x - 10.0


def _experiment_3() -> ProblemSpec:
    def f(x):
        s = _atan_s(x)
        return 8.0 * s / (1.0 + s * s) ** 2

    def f_grad(x):
        s = _atan_s(x)
        return (16.0 * (1.0 - 3.0 * s * s) / (1.0 + s * s) ** 3,)

    return ProblemSpec(
        id=3,
        kind=ELLIPTIC,
        box=((0.0, 10.0),),
        source=f,
        source_grad=f_grad,
        exact_u=lambda x: ad.atan(_atan_s(x)) + math.atan(10.0),
        exact_grad=lambda x: (2.0 / (1.0 + _atan_s(x) ** 2),),
        lift=lift_left(0.0, 10.0),
        neumann=(NeumannSide(0, 1),),
        flux=lambda side, x: 2.0 / 101.0 + 0.0 * x,
        flux_grad=lambda side, x: (np.zeros(np.shape(x)),),
        bc_segments={"dirichlet": ((0, 0),), "neumann": ((0, 1),)},
        reference_axes=lambda: [np.linspace(0.0, 10.0, 4001)],
        defaults=dict(elements=16, stage1_epochs=1000, stage2_epochs=5000, lr=1e-2),
        name="steep arctan layer",
    )


def _sigma_4(x):
    return ad.where(x < 0.5, 1.0, 10.0)


def _experiment_4() -> ProblemSpec:
    two_pi = 2.0 * math.pi
    return ProblemSpec(
        id=4,
        kind=ELLIPTIC,
        box=((0.0, 1.0),),
        fixed=((0.5,),),
        sigma=_sigma_4,
        source=lambda x: two_pi**2 * ad.sin(two_pi * x),
        source_grad=lambda x: (two_pi**3 * np.cos(two_pi * x),),
        exact_u=lambda x: ad.sin(two_pi * x) / _sigma_4(x),
        exact_grad=lambda x: (two_pi * ad.cos(two_pi * x) / _sigma_4(x),),
        lift=lift_both(0.0, 1.0),
        bc_segments={"dirichlet": ((0, 0), (0, 1))},
        reference_axes=lambda: [np.linspace(0.0, 1.0, 2001)],
        defaults=dict(elements=16, stage1_epochs=500, stage2_epochs=1000, lr=1e-2),
        name="two materials, interface at 0.5",
    )


# ----------------------------------------------------------------------------
# experiments 5-6: 2D elliptic


def _p(x):
    return x * x * (x - 1.0)


def _dp(x):
    return 3.0 * x * x - 2.0 * x


def _ddp(x):
    return 6.0 * x - 2.0


def _experiment_5() -> ProblemSpec:
    return ProblemSpec(
        id=5,
        kind=ELLIPTIC,
        box=((0.0, 1.0), (0.0, 1.0)),
        source=lambda x, y: -(_ddp(x) * _p(y) + _p(x) * _ddp(y)),
        source_grad=lambda x, y: (
            -(6.0 * _p(y) + _dp(x) * _ddp(y)),
            -(_ddp(x) * _dp(y) + 6.0 * _p(x)),
        ),
        exact_u=lambda x, y: _p(x) * _p(y),
        exact_grad=lambda x, y: (_dp(x) * _p(y), _p(x) * _dp(y)),
        lift=lift_unit_square(),
        bc_segments={"dirichlet": ((0, 0), (0, 1), (1, 0), (1, 1))},
        reference_axes=lambda: [np.linspace(0.0, 1.0, 65)] * 2,
        defaults=dict(elements=16, stage1_epochs=1000, stage2_epochs=5000, lr=1e-2),
        name="smooth 2D polynomial",
    )


def _lshape_angle(x, y):
    """Angle of the rotated point ``-y + i x`` in [0, 2 pi); zero along the leg ``x = 0, y < 0``."""
    a = ad.atan2(x, -y)
    return ad.where(a < 0, a + 2.0 * math.pi, a)


def _lshape_u(x, y):
    r2 = x * x + y * y
    return ad.where(r2 > 0, r2 ** (1.0 / 3.0) * ad.sin(2.0 / 3.0 * _lshape_angle(x, y)), 0.0 * r2)


def _lshape_grad(x, y):
    # u = Im F(z), F(z) = (i z)^(2/3): grad u = (Im F', Re F')
    r2 = x * x + y * y
    a = _lshape_angle(x, y)
    c = 2.0 / 3.0 * r2 ** (-1.0 / 6.0)
    return (c * ad.cos(a / 3.0), c * ad.sin(a / 3.0))


def _lshape_hessian(x, y):
    r2 = np.asarray(x * x + y * y, dtype=float)
    a = _lshape_angle(x, y)
    c = 2.0 / 9.0 * r2 ** (-2.0 / 3.0)
    uxx = -c * np.sin(4.0 * a / 3.0)
    uxy = c * np.cos(4.0 * a / 3.0)
    return uxx, uxy, -uxx


def _lshape_flux(side: NeumannSide, x, y):
    return side.normal_sign * _lshape_grad(x, y)[side.axis]


def _lshape_flux_grad(side: NeumannSide, x, y):
    uxx, uxy, uyy = _lshape_hessian(x, y)
    row = (uxx, uxy) if side.axis == 0 else (uxy, uyy)
    return tuple(side.normal_sign * v for v in row)


def _lshape_active(x, y):
    if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
        return ~((np.asarray(x) < 0) & (np.asarray(y) < 0))
    return not (x < 0 and y < 0)


def _graded_symmetric(levels: int = 40) -> np.ndarray:
    g = 2.0 ** -np.arange(levels, -1.0, -1.0)
    return np.concatenate([-g[::-1], [0.0], g])


def _experiment_6() -> ProblemSpec:
    return ProblemSpec(
        id=6,
        kind=ELLIPTIC,
        box=((-1.0, 1.0), (-1.0, 1.0)),
        fixed=((0.0,), (0.0,)),
        source=_const(0.0),
        source_grad=_zero_grad,
        exact_u=_lshape_u,
        exact_grad=_lshape_grad,
        lift=lift_lshape(),
        neumann=tuple(NeumannSide(a, s) for a in (0, 1) for s in (0, 1)),
        flux=_lshape_flux,
        flux_grad=_lshape_flux_grad,
        active=_lshape_active,
        bc_segments={
            "dirichlet": ("x2 = 0, x1 in [-1, 0]", "x1 = 0, x2 in [-1, 0]"),
            "neumann": ((0, 0), (0, 1), (1, 0), (1, 1)),
        },
        singular_points=((0.0, 0.0),),
        reference_axes=lambda: [_graded_symmetric()] * 2,
        defaults=dict(elements=16, stage1_epochs=1000, stage2_epochs=9000, lr=1e-2),
        name="L-shape re-entrant corner",
    )


_BUILDERS = {2: _experiment_2, 3: _experiment_3, 4: _experiment_4, 5: _experiment_5, 6: _experiment_6}


def make_experiment(id: int, beta: float = 1e-3) -> ProblemSpec:
    """Problem instance for experiment ``id``; ``beta`` applies to experiment 1."""
    return _cached(int(id), float(beta) if id == 1 else None)


@lru_cache(maxsize=None)
def _cached(id: int, beta) -> ProblemSpec:
    if id == 1:
        return _experiment_1(beta)
    if id not in _BUILDERS:
        raise UsageError(f"unknown experiment {id}; choose 1-6")
    spec = _BUILDERS[id]()
    spec.exact_energy = exact_energy_reference(spec)
    return spec


# ----------------------------------------------------------------------------
# reference energies


def ritz_energy_of_field(spec: ProblemSpec, u, grad_u, axes, q: int = 8) -> float:
    """Ritz energy of a field given by callables, on the tensor mesh ``axes``."""
    rule = gauss_rule(q)
    pts, wts = element_quadrature(axes, rule)
    xs = [pts[..., k] for k in range(spec.d)]
    mids = [0.5 * (np.asarray(ax[:-1]) + np.asarray(ax[1:])) for ax in axes]
    mid_grid = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, spec.d)
    mid_cols = [mid_grid[:, k] for k in range(spec.d)]
    active = np.asarray(spec.is_active(*mid_cols), dtype=bool)
    sigma = np.asarray(spec.sigma_at(*mid_cols), dtype=float)
    live = active & (wts.sum(axis=1) > 0)
    wts = np.where(live[:, None], wts, 0.0)
    with np.errstate(all="ignore"):
        g = grad_u(*xs)
        grad2 = sum(gk**2 for gk in g)
        dens = 0.5 * sigma[:, None] * grad2 - spec.source(*xs) * u(*xs)
    energy = float(np.sum(np.where(wts > 0, wts * dens, 0.0)))
    return energy - neumann_work(spec, u, axes, q)


def neumann_work(spec: ProblemSpec, u, axes, q: int = 8) -> float:
    """``int_{Gamma_N} g u`` for a field ``u`` on the tensor mesh ``axes``."""
    total = 0.0
    rule = gauss_rule(q)
    for side in spec.neumann:
        pos = spec.box[side.axis][side.side]
        if spec.d == 1:
            x = np.array([pos])
            total += float(spec.flux(side, x)[0] * u(x)[0])
            continue
        other = 1 - side.axis
        t_ax = np.asarray(axes[other], dtype=float)
        pts, wts = element_quadrature([t_ax], rule)
        tq = pts[..., 0]
        coords = [None, None]
        coords[side.axis] = np.full(tq.shape, pos)
        coords[other] = tq
        mid = 0.5 * (t_ax[:-1] + t_ax[1:])
        mc = [None, None]
        mc[side.axis] = np.full(mid.shape, pos)
        mc[other] = mid
        live = np.asarray(spec.is_active(*mc), dtype=bool)
        with np.errstate(all="ignore"):
            vals = spec.flux(side, *coords) * u(*coords)
        total += float(np.sum(np.where(live[:, None], wts * vals, 0.0)))
    return total


def exact_energy_reference(spec: ProblemSpec, axes=None, q: int = 8) -> float:
    """Ritz energy of the exact solution on a dense (graded where needed) mesh."""
    if spec.kind != ELLIPTIC:
        raise UsageError("reference energies exist for elliptic problems only")
    axes = spec.reference_axes() if axes is None else axes
    return ritz_energy_of_field(spec, spec.exact_u, spec.exact_grad, axes, q)

