"""Adam over the joint parameter vector and the two-stage training schedule.

Stage 1 trains the network weights on the frozen uniform mesh. Stage 2
releases the mesh coordinates ``psi`` too; their Adam moments start from
zero at that point, as for a freshly created optimizer.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError, UsageError
from .model import Network
from .pipeline import Evaluation, LossPipeline, initial_psi
from .problems import ProblemSpec

log = logging.getLogger(__name__)

THETA_ONLY = "theta-only"
ALL = "all"


class TrainingAborted(NumericalError):
    """Raised when an epoch cannot be completed; carries what was done so far."""

    def __init__(self, msg, epoch, partial=None):
        super().__init__(f"epoch {epoch}: {msg}")
        self.epoch = epoch
        self.partial = partial


class IntegrationWarning(UserWarning):
    """The loss fell below the exact minimum: quadrature is being exploited."""


@dataclass
class TrainConfig:
    stage1_epochs: int = 1000
    stage2_epochs: int = 5000
    lr1: float = 1e-2
    lr2: float = 1e-2
    decay: float = 0.5
    decay_every: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    q: int = 5
    record_every: int = 1
    integration_tol: float = 1e-4

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise UsageError("epoch counts must be >= 0")
        if not (self.lr1 > 0 and self.lr2 > 0):
            raise UsageError("learning rates must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise UsageError("Adam betas must lie in [0, 1)")
        if self.record_every < 1 or self.decay_every < 1:
            raise UsageError("record_every and decay_every must be >= 1")

    def lr_at(self, epoch: int) -> float:
        """Learning rate at the 0-based global ``epoch``."""
        base = self.lr1 if epoch < self.stage1_epochs else self.lr2
        return base * self.decay ** (epoch // self.decay_every)


@dataclass
class TrainState:
    """Parameters ``theta`` followed by each axis' ``psi``, plus Adam moments."""

    params: np.ndarray
    sizes: tuple  # lengths of (theta, psi_0, psi_1, ...)
    m: np.ndarray = None
    v: np.ndarray = None
    counts: np.ndarray = None  # per-parameter update counts (bias correction)
    step: int = 0
    mask: np.ndarray = None  # True where the parameter is trainable
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.params = np.array(self.params, dtype=float)
        if sum(self.sizes) != self.params.size:
            raise UsageError("block sizes do not add up to the parameter count")
        n = self.params.size
        self.m = np.zeros(n) if self.m is None else self.m
        self.v = np.zeros(n) if self.v is None else self.v
        self.counts = np.zeros(n, dtype=np.int64) if self.counts is None else self.counts
        self.mask = np.ones(n, dtype=bool) if self.mask is None else self.mask

    @classmethod
    def from_blocks(cls, theta, psis):
        blocks = [np.asarray(theta, dtype=float)] + [np.asarray(p, dtype=float) for p in psis]
        return cls(np.concatenate(blocks), tuple(b.size for b in blocks))

    def blocks(self):
        edges = np.cumsum((0,) + self.sizes)
        return [self.params[a:b] for a, b in zip(edges[:-1], edges[1:])]

    @property
    def theta(self):
        return self.blocks()[0]

    @property
    def psis(self):
        return self.blocks()[1:]

    def name(self, i: int) -> str:
        edges = np.cumsum((0,) + self.sizes)
        k = int(np.searchsorted(edges, i, side="right") - 1)
        label = "theta" if k == 0 else f"psi_{k - 1}"
        return f"{label}[{i - edges[k]}]"


def freeze_mask(state: TrainState, which: str) -> TrainState:
    """Train only ``theta`` (``"theta-only"``) or every parameter (``"all"``)."""
    if which == THETA_ONLY:
        state.mask = np.zeros(state.params.size, dtype=bool)
        state.mask[: state.sizes[0]] = True
    elif which == ALL:
        state.mask = np.ones(state.params.size, dtype=bool)
    else:
        raise UsageError(f"unknown mask {which!r}")
    return state


def adam_step(state: TrainState, grad, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> TrainState:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.params.shape:
        raise UsageError(f"gradient shape {grad.shape} != parameter shape {state.params.shape}")
    bad = ~np.isfinite(grad) & state.mask
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"non-finite gradient {grad[i]} for parameter {state.name(i)}")
    on = state.mask
    state.counts[on] += 1
    state.m[on] = beta1 * state.m[on] + (1.0 - beta1) * grad[on]
    state.v[on] = beta2 * state.v[on] + (1.0 - beta2) * grad[on] ** 2
    t = state.counts[on]
    m_hat = state.m[on] / (1.0 - beta1**t)
    v_hat = state.v[on] / (1.0 - beta2**t)
    state.params[on] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    state.step += 1
    return state


@dataclass
class Snapshot:
    """Solution and mesh at a stage boundary."""

    axes: list
    values: np.ndarray
    theta: np.ndarray
    psis: list
    loss: float
    loss_error: float


@dataclass
class TrainResult:
    stage1: Snapshot
    stage2: Snapshot
    history: list  # (epoch, stage, loss, loss_error)
    warnings: list = field(default_factory=list)

    def stage_history(self, stage: int):
        return [h for h in self.history if h[1] == stage]


def train_two_stage(
    spec: ProblemSpec,
    loss: str,
    elements,
    net: Network,
    config: TrainConfig,
    callback: Optional[Callable] = None,
) -> TrainResult:
    """Run both stages from the uniform mesh; ``net`` supplies the initial weights.

    ``callback(epoch, stage, evaluation)`` sees every evaluation, e.g. to
    inspect the mesh the loss was computed on.
    """
    pipe = LossPipeline(spec, loss, net.sizes, config.q)
    state = TrainState.from_blocks(net.theta, initial_psi(spec, elements))
    ref = spec.exact_energy
    result = TrainResult(None, None, [])
    flagged = False
    adam = dict(beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)

    def snapshot():
        ev = pipe.evaluate(state.theta, state.psis)
        return Snapshot(
            [a.copy() for a in ev.axes], ev.values.copy(), state.theta.copy(),
            [p.copy() for p in state.psis], ev.loss, ev.loss - ref,
        )

    epoch = 0
    for stage, n_epochs, which in ((1, config.stage1_epochs, THETA_ONLY), (2, config.stage2_epochs, ALL)):
        freeze_mask(state, which)
        for _ in range(n_epochs):
            try:
                ev = pipe.evaluate(state.theta, state.psis)
                if callback is not None:
                    callback(epoch, stage, ev)
                grad = np.concatenate([ev.dtheta] + ev.dpsi)
                err = ev.loss - ref
                if epoch % config.record_every == 0:
                    result.history.append((epoch, stage, ev.loss, err))
                if err < -config.integration_tol and not flagged:
                    flagged = True
                    msg = (
                        f"epoch {epoch}: loss {ev.loss:.6g} is below the exact minimum {ref:.6g}; "
                        "the quadrature is being exploited (integration error)"
                    )
                    result.warnings.append(msg)
                    warnings.warn(msg, IntegrationWarning, stacklevel=2)
                adam_step(state, grad, config.lr_at(epoch), **adam)
            except NumericalError as exc:
                raise TrainingAborted(str(exc), epoch, result) from exc
            epoch += 1
        try:
            snap = snapshot()
        except NumericalError as exc:
            raise TrainingAborted(str(exc), epoch, result) from exc
        if stage == 1:
            result.stage1 = snap
        else:
            result.stage2 = snap
        log.info("stage %d done: loss %.6g, loss_error %.6g", stage, snap.loss, snap.loss_error)
    return result
