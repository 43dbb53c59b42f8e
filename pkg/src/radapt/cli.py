"""Command-line runner: ``radapt run --experiment N [...]``.

A run trains both stages and writes CSV artifacts plus a ``manifest`` that
can be fed back with ``--config`` to reproduce the run exactly.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import platform
import re
import sys
from pathlib import Path

import numpy as np

from . import _kernels, __version__
from .errors import UsageError
from .fem import fem_solve_1d, solution_error
from .losses import check_pairing
from .model import init_network
from .problems import ELLIPTIC, make_experiment
from .training import TrainConfig, TrainingAborted, train_two_stage

log = logging.getLogger("radapt")

N_EXACT = 1000
N_EXACT_2D = 32  # points per axis of the 2D exact-solution grid
RUN_KEYS = (
    "experiment", "loss", "elements", "beta", "seed", "stage1_epochs",
    "stage2_epochs", "lr", "quad_points", "convergence",
)


def _fmt(v) -> str:
    return repr(float(v))


def emit_solution_csv(axes, values, path) -> None:
    """Nodal values; ``x,u_pred`` (1D) or ``x,y,u_pred`` in row-major order (2D)."""
    grids = np.meshgrid(*axes, indexing="ij")
    cols = [g.ravel() for g in grids] + [np.asarray(values, dtype=float).ravel()]
    header = ["x", "u_pred"] if len(axes) == 1 else ["x", "y", "u_pred"]
    _write(path, header, zip(*cols))


def emit_exact_csv(spec, path) -> None:
    if spec.d == 1:
        x = np.linspace(*spec.box[0], N_EXACT)
        _write(path, ["x", "u_exact"], zip(x, spec.exact_u(x)))
        return
    axes = [np.linspace(a, b, N_EXACT_2D) for a, b in spec.box]
    X, Y = (g.ravel() for g in np.meshgrid(*axes, indexing="ij"))
    keep = np.asarray(spec.is_active(X, Y), dtype=bool)
    X, Y = X[keep], Y[keep]
    _write(path, ["x", "y", "u_exact"], zip(X, Y, spec.exact_u(X, Y)))


def emit_loss_csv(history, stage: int, path) -> None:
    """``epoch,lossN`` rows for one stage; epochs count across both stages."""
    rows = [(e, err) for e, s, _, err in history if s == stage]
    with open(path, "w", newline="") as fh:
        fh.write("epoch,lossN\n")
        for e, err in rows:
            fh.write(f"{int(e)},{_fmt(err)}\n")


def _write(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dotted keys are metadata."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if "." in key:
            continue
        if key not in RUN_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        out[key] = val
    return out


def parse_counts(text: str) -> list:
    """``"1,2,4,...,512"`` -> [1, 2, 4, ..., 512]; the ellipsis continues the ratio."""
    parts = [p.strip() for p in re.split(r",", text.replace("…", "...")) if p.strip()]
    out = []
    for i, p in enumerate(parts):
        if p != "...":
            out.append(int(p))
            continue
        if len(out) < 2 or i + 1 >= len(parts):
            raise UsageError("an ellipsis needs two values before it and one after")
        ratio, end = out[-1] / out[-2], int(parts[i + 1])
        if ratio <= 1:
            raise UsageError("counts before an ellipsis must increase")
        while out[-1] * ratio < end:
            out.append(int(round(out[-1] * ratio)))
    if not out or min(out) < 1:
        raise UsageError(f"invalid element counts {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="train one experiment and write CSV artifacts")
    r.add_argument("--config", help="flat key = value file; flags override it")
    r.add_argument("--experiment", type=int)
    r.add_argument("--loss", help="collocation, least-squares or ritz")
    r.add_argument("--elements", type=int, help="elements per axis")
    r.add_argument("--beta", type=float, help="velocity for experiment 1")
    r.add_argument("--seed", type=int)
    r.add_argument("--stage1-epochs", type=int)
    r.add_argument("--stage2-epochs", type=int)
    r.add_argument("--lr", type=float)
    r.add_argument("--quad-points", type=int)
    r.add_argument("--convergence", help="element counts for norma.csv, e.g. 1,2,4,...,512")
    r.add_argument("--out", help="output directory (default: $RADAPT_OUT or ./out)")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(args) -> dict:
    """Merge defaults, config file and flags into a validated run config."""
    cfg = read_config(args.config) if args.config else {}
    for key in RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if "experiment" not in cfg:
        raise UsageError("--experiment is required")
    eid = int(cfg["experiment"])
    beta = float(cfg.get("beta", 1e-3))
    spec = make_experiment(eid, beta)
    d = spec.defaults
    loss = cfg.get("loss", spec.loss_kinds[-1])
    out = dict(
        experiment=eid,
        loss=check_pairing(spec, str(loss)),
        elements=int(cfg.get("elements", d["elements"])),
        beta=beta,
        seed=int(cfg.get("seed", 0)),
        stage1_epochs=int(cfg.get("stage1_epochs", d["stage1_epochs"])),
        stage2_epochs=int(cfg.get("stage2_epochs", d["stage2_epochs"])),
        lr=float(cfg.get("lr", d["lr"])),
        quad_points=int(cfg.get("quad_points", 5)),
        convergence=str(cfg.get("convergence", "")),
    )
    if out["elements"] < 1:
        raise UsageError("--elements must be >= 1")
    if out["convergence"]:
        parse_counts(out["convergence"])
        if spec.kind != ELLIPTIC or spec.d != 1:
            raise UsageError("convergence tables need a 1D elliptic experiment")
    return out


def train_config(run: dict) -> TrainConfig:
    return TrainConfig(
        stage1_epochs=run["stage1_epochs"], stage2_epochs=run["stage2_epochs"],
        lr1=run["lr"], lr2=run["lr"], seed=run["seed"], q=run["quad_points"],
    )


def _train(spec, run, elements):
    net = init_network(spec.d, seed=run["seed"])
    return train_two_stage(spec, run["loss"], elements, net, train_config(run))


def write_manifest(run: dict, path) -> None:
    lines = [f"{k} = {run[k]}" for k in RUN_KEYS]
    lines += [
        f"version.radapt = {__version__}",
        f"version.python = {platform.python_version()}",
        f"version.numpy = {np.__version__}",
        f"version.numba = {_kernels.numba.__version__ if _kernels.HAVE_NUMBA else 'absent'}",
        f"version.kernels = {'numba' if _kernels.USE_NUMBA else 'numpy'}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def convergence_table(spec, run, counts, path) -> None:
    """``elements,static,static_FEM,r,r_FEM`` energy-norm errors per element count."""
    rows = []
    a, b = spec.box[0]
    for n in counts:
        res = _train(spec, run, n)
        uniform = np.linspace(a, b, n + 1)
        adapted = res.stage2.axes[0]
        rows.append((
            n,
            solution_error(res.stage1.axes[0], res.stage1.values, spec),
            solution_error(*fem_solve_1d(uniform, spec), spec),
            solution_error(adapted, res.stage2.values, spec),
            solution_error(*fem_solve_1d(adapted, spec), spec),
        ))
        log.info("convergence: %d elements done", n)
    with open(path, "w", newline="") as fh:
        fh.write("elements,static,static_FEM,r,r_FEM\n")
        for n, *errs in rows:
            fh.write(f"{n}," + ",".join(_fmt(e) for e in errs) + "\n")


def run(run_cfg: dict, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_experiment(run_cfg["experiment"], run_cfg["beta"])
    write_manifest(run_cfg, out / "manifest")
    emit_exact_csv(spec, out / "exact.csv")
    try:
        res = _train(spec, run_cfg, run_cfg["elements"])
    except TrainingAborted as exc:
        if exc.partial is not None:
            for stage in (1, 2):
                emit_loss_csv(exc.partial.history, stage, out / f"loss_clean{stage - 1}.csv")
            if exc.partial.stage1 is not None:
                s = exc.partial.stage1
                emit_solution_csv(s.axes, s.values, out / "partition_0.csv")
        print(f"radapt: training aborted: {exc}", file=sys.stderr)
        return 2
    for i, snap in enumerate((res.stage1, res.stage2)):
        emit_solution_csv(snap.axes, snap.values, out / f"partition_{i}.csv")
        emit_loss_csv(res.history, i + 1, out / f"loss_clean{i}.csv")
    for w in res.warnings:
        print(f"radapt: warning: {w}", file=sys.stderr)
    if run_cfg["convergence"]:
        convergence_table(spec, run_cfg, parse_counts(run_cfg["convergence"]), out / "norma.csv")
    print(
        f"experiment {spec.id}: loss_error stage 1 {res.stage1.loss_error:.6g}, "
        f"stage 2 {res.stage2.loss_error:.6g}; artifacts in {out}"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        run_cfg = resolve(args)
    except (UsageError, OSError, ValueError) as exc:
        print(f"radapt: error: {exc}", file=sys.stderr)
        return 1
    out = args.out or os.environ.get("RADAPT_OUT") or "out"
    try:
        return run(run_cfg, out)
    except OSError as exc:
        print(f"radapt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
