import numpy as np
import pytest

from radapt import _kernels as K
from radapt.quadrature import gauss_rule

numba = pytest.importorskip("numba")

RNG = np.random.default_rng(11)
RULE = gauss_rule(5)
T, W = RULE.unit_points, RULE.unit_weights


def _axis(n, a=0.0, b=1.0, dup=True):
    x = np.sort(np.concatenate([[a, b], RNG.uniform(a, b, n - 1)]))
    if dup:
        x[2] = x[3]  # one zero-length element
    return x


def _inputs(name):
    sizes = np.array([2, 5, 4, 1], dtype=np.int64)
    theta = RNG.normal(size=(2 * 5 + 5) + (5 * 4 + 4) + (4 + 1))
    if name == "mlp_forward":
        return theta, sizes, RNG.normal(size=(30, 2))
    if name == "mlp_backward":
        acts = K.np_mlp_forward(theta, sizes, RNG.normal(size=(30, 2)))
        return theta, sizes, acts, RNG.normal(size=30)
    if name in ("ritz_1d", "residual_1d"):
        x = _axis(9)
        n = x.size - 1
        U = RNG.normal(size=x.size)
        fq, dfq = RNG.normal(size=(n, T.size)), RNG.normal(size=(n, T.size))
        if name == "ritz_1d":
            return x, U, RNG.uniform(1, 10, n), RNG.uniform(size=n) > 0.2, fq, dfq, T, W
        return x, U, 1e-3, fq, dfq, T, W, 1
    if name == "line_load":
        x = _axis(7)
        n = x.size - 1
        return x, RNG.normal(size=x.size), RNG.normal(size=(n, T.size)), RNG.normal(size=(n, T.size)), T, W, RNG.uniform(size=n) > 0.3
    if name == "ritz_2d":
        x, y = _axis(6, -1, 1), _axis(5, -1, 1, dup=False)
        sh = (x.size - 1, y.size - 1, T.size, T.size)
        return (
            x, y, RNG.normal(size=(x.size, y.size)), RNG.uniform(1, 2, sh[:2]), RNG.uniform(size=sh[:2]) > 0.25,
            RNG.normal(size=sh), RNG.normal(size=sh), RNG.normal(size=sh), T, W,
        )
    if name == "thomas":
        n = 12
        return -np.ones(n - 1), 4 + RNG.uniform(size=n), -np.ones(n - 1), RNG.normal(size=n)
    raise KeyError(name)


@pytest.mark.parametrize("name", sorted(K._LOOPS))
def test_compiled_matches_numpy(name):
    args = _inputs(name)
    ref = K._NUMPY[name](*args)
    got = numba.njit(K._LOOPS[name])(*args)
    ref = ref if isinstance(ref, tuple) else (ref,)
    got = got if isinstance(got, tuple) else (got,)
    assert len(ref) == len(got)
    for a, b in zip(ref, got):
        np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)


def test_residual_power_two_matches():
    x = _axis(9)
    n = x.size - 1
    args = (x, RNG.normal(size=x.size), 0.1, RNG.normal(size=(n, T.size)), RNG.normal(size=(n, T.size)), T, W, 2)
    for a, b in zip(K.np_residual_1d(*args), numba.njit(K._LOOPS["residual_1d"])(*args)):
        np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)


def test_thomas_solves():
    sub, diag, sup, rhs = _inputs("thomas")
    A = np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)
    np.testing.assert_allclose(K.thomas(sub, diag, sup, rhs), np.linalg.solve(A, rhs), atol=1e-12)


def test_network_kernels_stay_on_numpy():
    assert K.mlp_forward is K._NUMPY["mlp_forward"]
    assert K.mlp_backward is K._NUMPY["mlp_backward"]
