import dataclasses

import numpy as np
import pytest

from radapt.errors import UsageError
from radapt.fem import (
    assemble_1d, convergence_study, energy_norm_error, fem_solve_1d, fitted_rate, merge_nodes,
    piecewise_linear, solution_error,
)
from radapt.losses import loss_ritz
from radapt.mesh import build_mesh
from radapt.model import PiecewiseSolution
from radapt.problems import NeumannSide, make_experiment


def _unit(source, u, du, flux):
    return dataclasses.replace(
        make_experiment(2), box=((0.0, 1.0),), source=source, exact_u=u, exact_grad=lambda x: (du(x),),
        neumann=(NeumannSide(0, 1),), flux=lambda side, x: np.full(np.shape(x), flux),
        reference_axes=None, singular_points=(), sigma=None,
    )


def test_linear_solution_reproduced():
    spec = _unit(lambda x: 0 * x, lambda x: x, lambda x: 1 + 0 * x, 1.0)
    x = np.array([0.0, 0.1, 0.45, 0.5, 0.9, 1.0])
    nodes, u = fem_solve_1d(x, spec)
    np.testing.assert_allclose(u, nodes, atol=1e-13)


def test_quadratic_nodal_exactness():
    spec = _unit(lambda x: 2 + 0 * x, lambda x: 2 * x - x**2, lambda x: 2 - 2 * x, 0.0)
    x = np.sort(np.concatenate([[0, 1], np.random.default_rng(0).uniform(0, 1, 9)]))
    nodes, u = fem_solve_1d(x, spec)
    np.testing.assert_allclose(u, 2 * nodes - nodes**2, atol=1e-12)
    # dense direct solve of the same system
    s = assemble_1d(nodes, spec)
    A = np.diag(s.diag) + np.diag(s.sub, -1) + np.diag(s.sup, 1)
    np.testing.assert_allclose(np.linalg.solve(A[1:, 1:], s.rhs[1:]), u[1:], atol=1e-12)


def test_nodal_exactness_smooth_load():
    # Ex 2 is left out: its load is singular at 0 and cannot be integrated exactly
    spec = make_experiment(3)
    x = np.linspace(0, 10, 33)
    nodes, u = fem_solve_1d(x, spec, q=16)
    np.testing.assert_allclose(u, spec.exact_u(nodes), atol=1e-9)


def test_ex4_flux_continuity():
    spec = make_experiment(4)
    x = np.linspace(0, 1, 513)
    nodes, u = fem_solve_1d(x, spec)
    i = np.flatnonzero(nodes == 0.5)[0]
    left = 1.0 * (u[i] - u[i - 1]) / (nodes[i] - nodes[i - 1])
    right = 10.0 * (u[i + 1] - u[i]) / (nodes[i + 1] - nodes[i])
    assert abs(left - right) < 1e-8
    assert abs(left - spec.exact_grad(0.5 - 1e-14)[0]) < 1e-3
    np.testing.assert_allclose(u, spec.exact_u(nodes), atol=1e-8)


def test_energy_norm_examples():
    spec = _unit(lambda x: 0 * x, lambda x: x, lambda x: 1 + 0 * x, 1.0)
    zero = lambda x: 0 * x
    assert abs(energy_norm_error(zero, zero, spec) - np.sqrt(4 / 3)) < 1e-12
    assert energy_norm_error(spec.exact_u, lambda x: spec.exact_grad(x)[0], spec) == 0.0
    ex2 = make_experiment(2)
    err = solution_error(*fem_solve_1d(np.linspace(0, 10, 17), ex2), ex2)
    assert 0.3 <= err <= 0.6


def test_uniform_rate_ex2():
    study = convergence_study(make_experiment(2), [32, 64, 128, 256, 512])
    assert abs(study.rate - 0.2) < 0.03


def test_uniform_rate_ex3():
    study = convergence_study(make_experiment(3), [32, 64, 128, 256, 512])
    assert abs(study.rate - 1.0) < 0.1


def test_graded_rate_ex2():
    counts = [32, 64, 128, 256, 512]
    meshes = {n: 10.0 * (np.arange(n + 1) / n) ** 6 for n in counts}
    study = convergence_study(make_experiment(2), counts, meshes)
    assert study.rate >= 0.9


def test_fitted_rate_and_minimum_counts():
    assert abs(fitted_rate([1, 2, 4], [1, 0.5, 0.25]) - 1.0) < 1e-12
    with pytest.raises(UsageError):
        convergence_study(make_experiment(2), [4, 8])


def test_galerkin_energy_below_interpolant():
    rng = np.random.default_rng(3)
    for eid in (2, 3, 4):
        spec = make_experiment(eid)
        a, b = spec.box[0]
        for _ in range(3):
            x = np.unique(np.concatenate([[a, b], rng.uniform(a, b, 10), [0.5] if eid == 4 else []]))
            nodes, u = fem_solve_1d(x, spec, q=10)
            fem = loss_ritz(PiecewiseSolution(build_mesh([nodes]), list(u)), spec, q=10)
            interp = loss_ritz(PiecewiseSolution(build_mesh([nodes]), list(spec.exact_u(nodes))), spec, q=10)
            assert fem <= interp + 1e-12


def test_errors():
    with pytest.raises(UsageError):
        fem_solve_1d(np.linspace(0, 1, 5), make_experiment(1))
    with pytest.raises(UsageError):
        fem_solve_1d(np.linspace(0, 1, 5), make_experiment(5))
    both = dataclasses.replace(make_experiment(2), neumann=(NeumannSide(0, 0), NeumannSide(0, 1)))
    with pytest.raises(UsageError):
        fem_solve_1d(np.linspace(0, 10, 5), both)
    with pytest.raises(UsageError):
        fem_solve_1d(np.linspace(0, 9, 5), make_experiment(2))


def test_duplicate_nodes_merged():
    spec = make_experiment(3)
    x = np.array([0.0, 2.0, 5.0, 5.0, 5.0 + 1e-13, 10.0])
    np.testing.assert_array_equal(merge_nodes(x, 10.0), [0.0, 2.0, 5.0, 10.0])
    a = fem_solve_1d(x, spec)
    b = fem_solve_1d(np.array([0.0, 2.0, 5.0, 10.0]), spec)
    np.testing.assert_array_equal(a[1], b[1])


def test_piecewise_linear_with_repeats():
    u, du = piecewise_linear([0.0, 1.0, 1.0, 3.0], [0.0, 2.0, 2.0, 0.0])
    assert u(0.5) == 1.0 and du(np.array([0.5]))[0] == 2.0 and du(np.array([2.0]))[0] == -1.0
