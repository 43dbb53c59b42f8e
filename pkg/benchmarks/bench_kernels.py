"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Also times one full training epoch (loss + gradient) of experiments 2 and 5
with each backend, by re-running itself with ``RADAPT_NUMBA=0``.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from radapt import _kernels
from radapt.model import init_network
from radapt.quadrature import gauss_rule


def kernel_cases(n_1d=513, n_2d=65):
    rng = np.random.default_rng(0)
    net = init_network(2, seed=0)
    sizes = np.array(net.sizes, dtype=np.int64)
    X = rng.uniform(size=(n_2d * n_2d, 2))
    acts = _kernels.np_mlp_forward(net.theta, sizes, X)
    dout = rng.normal(size=X.shape[0])
    r = gauss_rule(5)
    t, w = r.unit_points, r.unit_weights
    x = np.sort(rng.uniform(size=n_1d))
    x[0], x[-1] = 0.0, 1.0
    U = rng.normal(size=n_1d)
    e = n_1d - 1
    ones, act = np.ones(e), np.ones(e, dtype=bool)
    fq, dfq = rng.normal(size=(e, 5)), rng.normal(size=(e, 5))
    y = np.linspace(0, 1, n_2d)
    U2 = rng.normal(size=(n_2d, n_2d))
    m = n_2d - 1
    f4 = rng.normal(size=(m, m, 5, 5))
    return {
        "mlp_forward": (net.theta, sizes, X),
        "mlp_backward": (net.theta, sizes, acts, dout),
        "ritz_1d": (x, U, ones, act, fq, dfq, t, w),
        "residual_1d": (x, U, 1e-3, fq, dfq, t, w, 2),
        "ritz_2d": (y, y, U2, np.ones((m, m)), np.ones((m, m), dtype=bool), f4, f4, f4, t, w),
    }


def bench_kernels(repeat):
    compiled = _kernels._compiled() if _kernels.HAVE_NUMBA else {}
    rows = []
    for name, args in kernel_cases().items():
        row = {"kernel": name}
        for label, table in (("numpy", _kernels._NUMPY), ("numba", compiled)):
            if name not in table:
                continue
            fn = table[name]
            fn(*args)  # warm-up / compile
            row[label] = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
        rows.append(row)
    return rows


def epoch_times(repeat):
    from radapt.pipeline import LossPipeline, initial_psi
    from radapt.problems import make_experiment

    out = {}
    for eid, n in ((2, 64), (5, 32)):
        spec = make_experiment(eid)
        net = init_network(spec.d, seed=0)
        pipe = LossPipeline(spec, "ritz", net.sizes)
        psis = initial_psi(spec, n)
        pipe.evaluate(net.theta, psis)
        out[f"ex{eid}_{n}"] = min(
            timeit.repeat(lambda: pipe.evaluate(net.theta, psis), number=1, repeat=repeat)
        )
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--epoch-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.epoch_only:
        print(json.dumps(epoch_times(args.repeat)))
        return
    print(f"{'kernel':<14}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for row in bench_kernels(args.repeat):
        a, b = row.get("numpy", np.nan) * 1e3, row.get("numba", np.nan) * 1e3
        print(f"{row['kernel']:<14}{a:12.3f}{b:12.3f}{a / b:10.1f}")
    print("\nfull loss + gradient evaluation")
    res = {}
    for label, flag in (("numpy", "0"), ("numba", "1")):
        env = dict(os.environ, RADAPT_NUMBA=flag)
        cmd = [sys.executable, __file__, "--epoch-only", "--repeat", str(args.repeat)]
        res[label] = json.loads(subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout)
    for case in res["numpy"]:
        a, b = res["numpy"][case] * 1e3, res["numba"][case] * 1e3
        print(f"{case:<14}{a:12.3f}{b:12.3f}{a / b:10.1f}")


if __name__ == "__main__":
    main()
