"""Hot numeric kernels: network forward/backward and element-loop assembly.

Each kernel exists twice: an explicit-loop version compiled with numba
``@njit`` and a vectorised numpy version. Set ``RADAPT_NUMBA=0`` before
import to force the numpy path (also used when numba is missing). Both
paths share signatures and return identical quantities up to rounding. The
network kernels stay on numpy in both modes (``NUMPY_ALWAYS``).

Loss kernels return ``(value, grads...)`` where the gradients are taken with
respect to nodal values and node coordinates. Elements whose length is
exactly zero, or whose ``active`` flag is false, contribute nothing.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("RADAPT_NUMBA", "1") != "0"


# ----------------------------------------------------------------------------
# numpy implementations


def _np_sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def np_mlp_forward(theta, sizes, X):
    n = X.shape[0]
    acts = np.empty((n, int(np.sum(sizes))))
    acts[:, : sizes[0]] = X
    col, off = 0, 0
    h = X
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        n_in, n_out = sizes[k], sizes[k + 1]
        W = theta[off : off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = theta[off : off + n_out]
        off += n_out
        z = h @ W.T + b
        h = z if k == n_layers - 1 else _np_sig(z)
        col += n_in
        acts[:, col : col + n_out] = h
    return acts


def np_mlp_backward(theta, sizes, acts, dout):
    n_layers = len(sizes) - 1
    starts = np.concatenate([[0], np.cumsum(sizes)])
    offs = [0]
    for k in range(n_layers):
        offs.append(offs[-1] + sizes[k] * sizes[k + 1] + sizes[k + 1])
    dtheta = np.empty_like(theta)
    g = dout[:, None]
    for k in range(n_layers - 1, -1, -1):
        n_in, n_out = sizes[k], sizes[k + 1]
        if k != n_layers - 1:
            a = acts[:, starts[k + 1] : starts[k + 2]]
            g = g * a * (1.0 - a)
        off = offs[k]
        W = theta[off : off + n_in * n_out].reshape(n_out, n_in)
        h_in = acts[:, starts[k] : starts[k + 1]]
        dtheta[off : off + n_in * n_out] = (g.T @ h_in).ravel()
        dtheta[off + n_in * n_out : offs[k + 1]] = g.sum(axis=0)
        g = g @ W
    return dtheta, g


def np_ritz_1d(x, U, sigma, active, fq, dfq, t, w):
    h = np.diff(x)
    live = (h > 0.0) & active
    hs = np.where(live, h, 1.0)
    du = np.where(live, (U[1:] - U[:-1]) / hs, 0.0)
    uq = U[:-1, None] * (1.0 - t) + U[1:, None] * t
    wf = w * fq
    load = np.sum(wf * uq, axis=1)
    contrib = 0.5 * sigma * du * du * h - load * h
    value = np.sum(np.where(live, contrib, 0.0))
    dU0 = -sigma * du - h * np.sum(wf * (1.0 - t), axis=1)
    dU1 = sigma * du - h * np.sum(wf * t, axis=1)
    dh = -0.5 * sigma * du * du - load
    dxq = -(h[:, None] * w) * dfq * uq
    dx0 = -dh + np.sum(dxq * (1.0 - t), axis=1)
    dx1 = dh + np.sum(dxq * t, axis=1)
    dU = np.zeros_like(U)
    dx = np.zeros_like(x)
    for arr, lo, hi in ((dU, dU0, dU1), (dx, dx0, dx1)):
        lo = np.where(live, lo, 0.0)
        hi = np.where(live, hi, 0.0)
        arr[:-1] += lo
        arr[1:] += hi
    return value, dU, dx


def np_residual_1d(x, U, beta, fq, dfq, t, w, power):
    h = np.diff(x)
    live = h > 0.0
    hs = np.where(live, h, 1.0)
    du = np.where(live, (U[1:] - U[:-1]) / hs, 0.0)
    uq = U[:-1, None] * (1.0 - t) + U[1:, None] * t
    r = beta * du[:, None] + uq - fq
    if power == 1:
        phi, dphi = np.abs(r), np.sign(r)
    else:
        phi, dphi = r * r, 2.0 * r
    hw = h[:, None] * w
    value = np.sum(np.where(live[:, None], hw * phi, 0.0))
    g = hw * dphi  # d value / d r at each point
    dU0 = np.sum(g * (-beta / hs[:, None] + (1.0 - t)), axis=1)
    dU1 = np.sum(g * (beta / hs[:, None] + t), axis=1)
    dh = np.sum(w * phi - w * dphi * beta * du[:, None], axis=1)
    dxq = -g * dfq
    dx0 = -dh + np.sum(dxq * (1.0 - t), axis=1)
    dx1 = dh + np.sum(dxq * t, axis=1)
    dU = np.zeros_like(U)
    dx = np.zeros_like(x)
    for arr, lo, hi in ((dU, dU0, dU1), (dx, dx0, dx1)):
        lo = np.where(live, lo, 0.0)
        hi = np.where(live, hi, 0.0)
        arr[:-1] += lo
        arr[1:] += hi
    return value, dU, dx


def np_line_load(x, U, gq, dgq, t, w, active):
    h = np.diff(x)
    live = (h > 0.0) & active
    uq = U[:-1, None] * (1.0 - t) + U[1:, None] * t
    wg = w * gq
    load = np.sum(wg * uq, axis=1)
    value = np.sum(np.where(live, load * h, 0.0))
    dU0 = h * np.sum(wg * (1.0 - t), axis=1)
    dU1 = h * np.sum(wg * t, axis=1)
    dh = load
    dxq = (h[:, None] * w) * dgq * uq
    dx0 = -dh + np.sum(dxq * (1.0 - t), axis=1)
    dx1 = dh + np.sum(dxq * t, axis=1)
    dU = np.zeros_like(U)
    dx = np.zeros_like(x)
    for arr, lo, hi in ((dU, dU0, dU1), (dx, dx0, dx1)):
        lo = np.where(live, lo, 0.0)
        hi = np.where(live, hi, 0.0)
        arr[:-1] += lo
        arr[1:] += hi
    return value, dU, dx


def np_ritz_2d(x, y, U, sigma, active, fq, dfx, dfy, t, w):
    hx, hy = np.diff(x), np.diff(y)
    live = (hx > 0.0)[:, None] & (hy > 0.0)[None, :] & active
    hxs = np.where(hx > 0.0, hx, 1.0)[:, None, None, None]
    hys = np.where(hy > 0.0, hy, 1.0)[None, :, None, None]
    HX = hx[:, None, None, None]
    HY = hy[None, :, None, None]
    lam = t[None, None, :, None]
    mu = t[None, None, None, :]
    W = (w[:, None] * w[None, :])[None, None]
    U00 = U[:-1, :-1][..., None, None]
    U10 = U[1:, :-1][..., None, None]
    U01 = U[:-1, 1:][..., None, None]
    U11 = U[1:, 1:][..., None, None]
    A = (U10 - U00) * (1.0 - mu) + (U11 - U01) * mu
    B = (U01 - U00) * (1.0 - lam) + (U11 - U10) * lam
    ux = A / hxs
    uy = B / hys
    uq = U00 * (1 - lam) * (1 - mu) + U10 * lam * (1 - mu) + U01 * (1 - lam) * mu + U11 * lam * mu
    sig = sigma[..., None, None]
    integrand = 0.5 * sig * (ux * ux + uy * uy) - fq * uq
    omega = W * HX * HY
    L = live[..., None, None]
    value = np.sum(np.where(L, omega * integrand, 0.0))
    dA = np.where(L, omega * sig * ux / hxs, 0.0)
    dB = np.where(L, omega * sig * uy / hys, 0.0)
    duq = np.where(L, -omega * fq, 0.0)
    d00 = -dA * (1 - mu) - dB * (1 - lam) + duq * (1 - lam) * (1 - mu)
    d10 = dA * (1 - mu) - dB * lam + duq * lam * (1 - mu)
    d01 = -dA * mu + dB * (1 - lam) + duq * (1 - lam) * mu
    d11 = dA * mu + dB * lam + duq * lam * mu
    dU = np.zeros_like(U)
    dU[:-1, :-1] += d00.sum(axis=(2, 3))
    dU[1:, :-1] += d10.sum(axis=(2, 3))
    dU[:-1, 1:] += d01.sum(axis=(2, 3))
    dU[1:, 1:] += d11.sum(axis=(2, 3))
    dhx = np.where(L, W * HY * (integrand - sig * ux * ux), 0.0)
    dhy = np.where(L, W * HX * (integrand - sig * uy * uy), 0.0)
    dxq = np.where(L, -omega * dfx * uq, 0.0)
    dyq = np.where(L, -omega * dfy * uq, 0.0)
    dx0 = (-dhx + dxq * (1 - lam)).sum(axis=(1, 2, 3))
    dx1 = (dhx + dxq * lam).sum(axis=(1, 2, 3))
    dy0 = (-dhy + dyq * (1 - mu)).sum(axis=(0, 2, 3))
    dy1 = (dhy + dyq * mu).sum(axis=(0, 2, 3))
    dx = np.zeros_like(x)
    dy = np.zeros_like(y)
    dx[:-1] += dx0
    dx[1:] += dx1
    dy[:-1] += dy0
    dy[1:] += dy1
    return value, dU, dx, dy


def np_thomas(sub, diag, sup, rhs):
    n = diag.size
    c = np.empty(n)
    d = np.empty(n)
    c[0] = sup[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - sub[i - 1] * c[i - 1]
        c[i] = sup[i] / m if i < n - 1 else 0.0
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / m
    out = np.empty(n)
    out[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]
    return out


# ----------------------------------------------------------------------------
# explicit loops (compiled by numba)


def _loop_mlp_forward(theta, sizes, X):
    n = X.shape[0]
    total = 0
    for s in sizes:
        total += s
    acts = np.empty((n, total))
    n_layers = sizes.size - 1
    for p in range(n):
        for j in range(sizes[0]):
            acts[p, j] = X[p, j]
        col_in, off = 0, 0
        for k in range(n_layers):
            n_in, n_out = sizes[k], sizes[k + 1]
            col_out = col_in + n_in
            b_off = off + n_in * n_out
            for o in range(n_out):
                z = theta[b_off + o]
                for i in range(n_in):
                    z += theta[off + o * n_in + i] * acts[p, col_in + i]
                if k == n_layers - 1:
                    acts[p, col_out + o] = z
                else:
                    acts[p, col_out + o] = 0.5 * (1.0 + np.tanh(0.5 * z))
            off = b_off + n_out
            col_in = col_out
    return acts


def _loop_mlp_backward(theta, sizes, acts, dout):
    n = acts.shape[0]
    n_layers = sizes.size - 1
    starts = np.zeros(n_layers + 2, dtype=np.int64)
    for k in range(n_layers + 1):
        starts[k + 1] = starts[k] + sizes[k]
    offs = np.zeros(n_layers + 1, dtype=np.int64)
    for k in range(n_layers):
        offs[k + 1] = offs[k] + sizes[k] * sizes[k + 1] + sizes[k + 1]
    dtheta = np.zeros(theta.size)
    width = 0
    for s in sizes:
        width = max(width, s)
    g = np.zeros(width)
    g_in = np.zeros(width)
    dX = np.empty((n, sizes[0]))
    for p in range(n):
        g[0] = dout[p]
        for k in range(n_layers - 1, -1, -1):
            n_in, n_out = sizes[k], sizes[k + 1]
            if k != n_layers - 1:
                for o in range(n_out):
                    a = acts[p, starts[k + 1] + o]
                    g[o] *= a * (1.0 - a)
            off = offs[k]
            b_off = off + n_in * n_out
            for i in range(n_in):
                g_in[i] = 0.0
            for o in range(n_out):
                go = g[o]
                dtheta[b_off + o] += go
                for i in range(n_in):
                    dtheta[off + o * n_in + i] += go * acts[p, starts[k] + i]
                    g_in[i] += go * theta[off + o * n_in + i]
            for i in range(n_in):
                g[i] = g_in[i]
        for j in range(sizes[0]):
            dX[p, j] = g[j]
    return dtheta, dX


def _loop_ritz_1d(x, U, sigma, active, fq, dfq, t, w):
    n_el = x.size - 1
    nq = t.size
    value = 0.0
    dU = np.zeros(U.size)
    dx = np.zeros(x.size)
    for e in range(n_el):
        h = x[e + 1] - x[e]
        if not (h > 0.0) or not active[e]:
            continue
        du = (U[e + 1] - U[e]) / h
        s = sigma[e]
        load = 0.0
        lw0 = 0.0
        lw1 = 0.0
        dxq0 = 0.0
        dxq1 = 0.0
        for k in range(nq):
            tk = t[k]
            uq = U[e] * (1.0 - tk) + U[e + 1] * tk
            wf = w[k] * fq[e, k]
            load += wf * uq
            lw0 += wf * (1.0 - tk)
            lw1 += wf * tk
            g = -h * w[k] * dfq[e, k] * uq
            dxq0 += g * (1.0 - tk)
            dxq1 += g * tk
        value += 0.5 * s * du * du * h - load * h
        dU[e] += -s * du - h * lw0
        dU[e + 1] += s * du - h * lw1
        dh = -0.5 * s * du * du - load
        dx[e] += -dh + dxq0
        dx[e + 1] += dh + dxq1
    return value, dU, dx


def _loop_residual_1d(x, U, beta, fq, dfq, t, w, power):
    n_el = x.size - 1
    nq = t.size
    value = 0.0
    dU = np.zeros(U.size)
    dx = np.zeros(x.size)
    for e in range(n_el):
        h = x[e + 1] - x[e]
        if not (h > 0.0):
            continue
        du = (U[e + 1] - U[e]) / h
        dU0 = 0.0
        dU1 = 0.0
        dh = 0.0
        dxq0 = 0.0
        dxq1 = 0.0
        for k in range(nq):
            tk = t[k]
            uq = U[e] * (1.0 - tk) + U[e + 1] * tk
            r = beta * du + uq - fq[e, k]
            if power == 1:
                phi = abs(r)
                dphi = 1.0 if r > 0.0 else (-1.0 if r < 0.0 else 0.0)
            else:
                phi = r * r
                dphi = 2.0 * r
            g = h * w[k] * dphi
            value += h * w[k] * phi
            dU0 += g * (-beta / h + (1.0 - tk))
            dU1 += g * (beta / h + tk)
            dh += w[k] * phi - w[k] * dphi * beta * du
            dxq0 -= g * dfq[e, k] * (1.0 - tk)
            dxq1 -= g * dfq[e, k] * tk
        dU[e] += dU0
        dU[e + 1] += dU1
        dx[e] += -dh + dxq0
        dx[e + 1] += dh + dxq1
    return value, dU, dx


def _loop_line_load(x, U, gq, dgq, t, w, active):
    n_el = x.size - 1
    nq = t.size
    value = 0.0
    dU = np.zeros(U.size)
    dx = np.zeros(x.size)
    for e in range(n_el):
        h = x[e + 1] - x[e]
        if not (h > 0.0) or not active[e]:
            continue
        load = 0.0
        lw0 = 0.0
        lw1 = 0.0
        dxq0 = 0.0
        dxq1 = 0.0
        for k in range(nq):
            tk = t[k]
            uq = U[e] * (1.0 - tk) + U[e + 1] * tk
            wg = w[k] * gq[e, k]
            load += wg * uq
            lw0 += wg * (1.0 - tk)
            lw1 += wg * tk
            g = h * w[k] * dgq[e, k] * uq
            dxq0 += g * (1.0 - tk)
            dxq1 += g * tk
        value += load * h
        dU[e] += h * lw0
        dU[e + 1] += h * lw1
        dx[e] += -load + dxq0
        dx[e + 1] += load + dxq1
    return value, dU, dx


def _loop_ritz_2d(x, y, U, sigma, active, fq, dfx, dfy, t, w):
    nx = x.size - 1
    ny = y.size - 1
    nq = t.size
    value = 0.0
    dU = np.zeros(U.shape)
    dx = np.zeros(x.size)
    dy = np.zeros(y.size)
    for i in range(nx):
        hx = x[i + 1] - x[i]
        if not (hx > 0.0):
            continue
        for j in range(ny):
            hy = y[j + 1] - y[j]
            if not (hy > 0.0) or not active[i, j]:
                continue
            u00 = U[i, j]
            u10 = U[i + 1, j]
            u01 = U[i, j + 1]
            u11 = U[i + 1, j + 1]
            s = sigma[i, j]
            for a in range(nq):
                lam = t[a]
                for b in range(nq):
                    mu = t[b]
                    W = w[a] * w[b]
                    A = (u10 - u00) * (1.0 - mu) + (u11 - u01) * mu
                    B = (u01 - u00) * (1.0 - lam) + (u11 - u10) * lam
                    ux = A / hx
                    uy = B / hy
                    uq = (
                        u00 * (1 - lam) * (1 - mu)
                        + u10 * lam * (1 - mu)
                        + u01 * (1 - lam) * mu
                        + u11 * lam * mu
                    )
                    f = fq[i, j, a, b]
                    integrand = 0.5 * s * (ux * ux + uy * uy) - f * uq
                    omega = W * hx * hy
                    value += omega * integrand
                    dA = omega * s * ux / hx
                    dB = omega * s * uy / hy
                    duq = -omega * f
                    dU[i, j] += -dA * (1 - mu) - dB * (1 - lam) + duq * (1 - lam) * (1 - mu)
                    dU[i + 1, j] += dA * (1 - mu) - dB * lam + duq * lam * (1 - mu)
                    dU[i, j + 1] += -dA * mu + dB * (1 - lam) + duq * (1 - lam) * mu
                    dU[i + 1, j + 1] += dA * mu + dB * lam + duq * lam * mu
                    dhx = W * hy * (integrand - s * ux * ux)
                    dhy = W * hx * (integrand - s * uy * uy)
                    dxq = -omega * dfx[i, j, a, b] * uq
                    dyq = -omega * dfy[i, j, a, b] * uq
                    dx[i] += -dhx + dxq * (1 - lam)
                    dx[i + 1] += dhx + dxq * lam
                    dy[j] += -dhy + dyq * (1 - mu)
                    dy[j + 1] += dhy + dyq * mu
    return value, dU, dx, dy


_LOOPS = {
    "mlp_forward": _loop_mlp_forward,
    "mlp_backward": _loop_mlp_backward,
    "ritz_1d": _loop_ritz_1d,
    "residual_1d": _loop_residual_1d,
    "line_load": _loop_line_load,
    "ritz_2d": _loop_ritz_2d,
    "thomas": np_thomas,
}
_NUMPY = {
    "mlp_forward": np_mlp_forward,
    "mlp_backward": np_mlp_backward,
    "ritz_1d": np_ritz_1d,
    "residual_1d": np_residual_1d,
    "line_load": np_line_load,
    "ritz_2d": np_ritz_2d,
    "thomas": np_thomas,
}


# Dense layers over thousands of nodes are faster as numpy matrix products
# than as compiled scalar loops (see benchmarks/bench_kernels.py), so the
# network keeps the numpy path even when numba is enabled.
NUMPY_ALWAYS = ("mlp_forward", "mlp_backward")


def _compiled():
    return {name: numba.njit(cache=True)(fn) for name, fn in _LOOPS.items()}


def _select():
    if not USE_NUMBA:
        return dict(_NUMPY)
    table = _compiled()
    table.update({name: _NUMPY[name] for name in NUMPY_ALWAYS})
    return table


KERNELS = _select()

mlp_forward = KERNELS["mlp_forward"]
mlp_backward = KERNELS["mlp_backward"]
ritz_1d = KERNELS["ritz_1d"]
residual_1d = KERNELS["residual_1d"]
line_load = KERNELS["line_load"]
ritz_2d = KERNELS["ritz_2d"]
thomas = KERNELS["thomas"]
