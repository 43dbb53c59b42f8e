import dataclasses

import numpy as np
import pytest

from radapt import autodiff as ad
from radapt.errors import UsageError
from radapt.losses import (
    check_pairing, loss_collocation, loss_error, loss_least_squares, loss_ritz, residual_advection,
)
from radapt.mesh import build_mesh
from radapt.model import PiecewiseSolution
from radapt.pipeline import LossPipeline
from radapt.problems import make_experiment


def _sol(x, values):
    return PiecewiseSolution(build_mesh([np.asarray(x, dtype=float)]), list(values))


def _advection(source):
    return dataclasses.replace(make_experiment(1), source=source, source_grad=None)


def test_residual_examples():
    spec = make_experiment(1)
    zero = _sol(np.linspace(0, 1, 5), np.zeros(5))
    for t in (0.1, 0.5, 0.9):
        assert residual_advection(zero, spec, (2,), [t]) == -1.0
    sol = _sol([0.0, 0.125], [0.0, 1.0])
    for t in (0.2, 0.7):
        r = residual_advection(sol, spec, (0,), [t])
        assert abs(r - (1e-3 * 8 + t - 1.0)) < 1e-15


def test_zero_solution_losses_are_one():
    spec = make_experiment(1)
    zero = _sol(np.linspace(0, 1, 9), np.zeros(9))
    assert abs(loss_collocation(zero, spec) - 1.0) < 1e-14
    assert abs(loss_least_squares(zero, spec) - 1.0) < 1e-14


def test_manufactured_zero_residual():
    beta = 1e-3
    c0, c1 = 0.3, -2.0
    spec = _advection(lambda x: beta * c1 + c0 + c1 * x)
    x = np.array([0.0, 0.2, 0.7, 1.0])
    sol = _sol(x, c0 + c1 * x)
    assert abs(loss_collocation(sol, spec)) < 1e-14
    assert abs(loss_least_squares(sol, spec)) < 1e-14


def test_least_squares_homogeneous():
    x = np.linspace(0, 1, 6)
    vals = np.sin(3 * x)
    one = loss_least_squares(_sol(x, vals), _advection(lambda s: 1.0 + s))
    two = loss_least_squares(_sol(x, 2 * vals), _advection(lambda s: 2.0 * (1.0 + s)))
    assert abs(two - 2 * one) < 1e-13


def test_interpolant_collocation_positive():
    spec = make_experiment(1)
    x = np.linspace(0, 1, 9)
    assert loss_collocation(_sol(x, spec.exact_u(x)), spec, q=12) > 0.01


def test_zero_volume_contributes_nothing():
    spec = make_experiment(3)
    x = np.array([0.0, 2.0, 5.0, 5.0, 10.0])
    vals = np.array([0.0, 1.0, 2.0, 2.0, 3.0])
    merged = loss_ritz(_sol(np.delete(x, 3), np.delete(vals, 3)), spec)
    assert loss_ritz(_sol(x, vals), spec) == merged


def test_ritz_zero():
    for eid in (2, 4):
        spec = make_experiment(eid)
        x = np.linspace(*spec.box[0], 5)
        assert loss_ritz(_sol(x, np.zeros(5)), spec) == 0.0


def test_ritz_ex2_graded_interpolant():
    spec = make_experiment(2)
    x = 10.0 * (np.arange(401) / 400) ** 6
    val = loss_ritz(_sol(x, spec.exact_u(x)), spec, q=8)
    assert abs(val - (-1.5385)) < 2e-3


def test_ritz_ex5_dense_interpolant():
    spec = make_experiment(5)
    ax = [np.linspace(0, 1, 17)] * 2
    mesh = build_mesh(ax)
    vals = [spec.exact_u(p[0], p[1]) for p in mesh.nodes()]
    val = loss_ritz(PiecewiseSolution(mesh, vals), spec)
    assert abs(val - (-0.0013)) < 1e-4
    # the vectorised route on a denser mesh
    ax = [np.linspace(0, 1, 65)] * 2
    X, Y = np.meshgrid(*ax, indexing="ij")
    pipe = LossPipeline(spec, "ritz", (2, 1))
    assert abs(pipe.nodal_loss(ax, spec.exact_u(X, Y).ravel())[0] - (-0.0013)) < 1e-4


def test_loss_error_examples():
    spec = make_experiment(2)
    assert loss_error(spec.exact_energy, spec) == 0.0
    assert abs(loss_error(-1.5, spec) - 0.0385) < 2e-3
    tape = ad.Tape()
    assert loss_error(tape.variable(-1.5), spec) == loss_error(-1.5, spec)


def test_pairing():
    assert check_pairing(make_experiment(1), "least-squares") == "least_squares"
    with pytest.raises(UsageError):
        check_pairing(make_experiment(1), "ritz")
    with pytest.raises(UsageError):
        check_pairing(make_experiment(2), "collocation")
    with pytest.raises(UsageError):
        check_pairing(make_experiment(2), "galerkin")
    with pytest.raises(UsageError):
        loss_ritz(_sol([0.0, 1.0], [0.0, 1.0]), make_experiment(1))


def test_scalar_and_vector_routes_agree_on_values():
    rng = np.random.default_rng(0)
    for eid, kind in ((1, "collocation"), (1, "least_squares"), (2, "ritz"), (4, "ritz")):
        spec = make_experiment(eid)
        a, b = spec.box[0]
        x = np.sort(np.concatenate([[a, b], rng.uniform(a, b, 6), [0.5] if eid == 4 else []]))
        vals = rng.normal(size=x.size)
        vals[0] = 0.0
        from radapt.losses import LOSSES

        scalar = LOSSES[kind](_sol(x, vals), spec)
        vector = LossPipeline(spec, kind, (1, 1)).nodal_loss([x], vals)[0]
        assert abs(scalar - vector) < 1e-12 * max(1.0, abs(scalar))


def test_2d_neumann_routes_agree():
    spec = make_experiment(6)
    rng = np.random.default_rng(1)
    ax = [np.sort(np.concatenate([[-1, 0, 1], rng.uniform(-1, 1, 3)])) for _ in range(2)]
    mesh = build_mesh(ax)
    vals = rng.normal(size=mesh.n_nodes)
    scalar = loss_ritz(PiecewiseSolution(mesh, list(vals)), spec)
    vector = LossPipeline(spec, "ritz", (2, 1)).nodal_loss(ax, vals)[0]
    assert abs(scalar - vector) < 1e-12


def test_refinement_monotone_interpolant_ex3():
    spec = make_experiment(3)
    energies = []
    for n in (4, 8, 16):
        x = np.linspace(0, 10, n + 1)
        energies.append(loss_ritz(_sol(x, spec.exact_u(x)), spec, q=8))
    assert energies[0] >= energies[1] >= energies[2]
