import warnings

import numpy as np
import pytest

from radapt.errors import NumericalError, UsageError
from radapt.mesh import build_axis, init_uniform
from radapt.model import init_network
from radapt.problems import make_experiment
from radapt.training import (
    IntegrationWarning, TrainConfig, TrainState, TrainingAborted, adam_step, freeze_mask, train_two_stage,
)


def _state(n_theta=2, n_psi=3):
    return TrainState.from_blocks(np.zeros(n_theta), [np.arange(1.0, n_psi + 1)])


def test_first_adam_step_is_lr():
    s = adam_step(_state(), np.ones(5), 1e-3)
    np.testing.assert_allclose(s.params[:2], [-1e-3, -1e-3], rtol=1e-4)
    assert s.step == 1


def test_zero_gradient_keeps_params():
    s = _state()
    before = s.params.copy()
    adam_step(s, np.zeros(5), 0.1)
    np.testing.assert_array_equal(s.params, before)


def test_adam_quadratic_convergence():
    s = TrainState.from_blocks(np.array([0.0]), [])
    for _ in range(2000):
        adam_step(s, 2 * (s.params - 2.0), 0.05)
    assert abs(s.params[0] - 2.0) < 1e-3


def test_nonfinite_gradient_names_parameter():
    s = _state()
    g = np.zeros(5)
    g[3] = np.nan
    with pytest.raises(NumericalError, match=r"psi_0\[1\]"):
        adam_step(s, g, 0.1)
    # a frozen parameter may carry any gradient
    freeze_mask(s, "theta-only")
    adam_step(s, g, 0.1)


def test_freeze_mask():
    s = freeze_mask(_state(), "theta-only")
    psi = s.psis[0].copy()
    adam_step(s, np.ones(5), 0.1)
    np.testing.assert_array_equal(s.psis[0], psi)
    assert np.all(s.theta != 0)
    assert np.all(s.m[2:] == 0) and np.all(s.counts[2:] == 0)
    freeze_mask(s, "all")
    adam_step(s, np.ones(5), 0.1)
    assert np.all(s.psis[0] != psi)
    # newly released parameters start from zeroed moments: their first step is lr
    np.testing.assert_allclose(s.psis[0], psi - 0.1, rtol=1e-6)
    np.testing.assert_array_equal(s.counts, [2, 2, 1, 1, 1])
    with pytest.raises(UsageError):
        freeze_mask(s, "psi-only")


def test_config_validation_and_schedule():
    with pytest.raises(UsageError):
        TrainConfig(stage1_epochs=-1)
    with pytest.raises(UsageError):
        TrainConfig(lr1=0.0)
    with pytest.raises(UsageError):
        TrainConfig(adam_beta2=1.0)
    c = TrainConfig(stage1_epochs=1000, lr1=1e-2, lr2=5e-3)
    assert c.lr_at(0) == 1e-2 and c.lr_at(1000) == 5e-3 and c.lr_at(2000) == 2.5e-3


def _short(eid, s1=30, s2=30, **kw):
    spec = make_experiment(eid)
    cfg = TrainConfig(stage1_epochs=s1, stage2_epochs=s2, **kw)
    return spec, cfg


def test_zero_stage2_reproduces_stage1():
    spec, cfg = _short(2, s2=0)
    r = train_two_stage(spec, "ritz", 8, init_network(1, seed=0), cfg)
    np.testing.assert_array_equal(r.stage1.values, r.stage2.values)
    np.testing.assert_array_equal(r.stage1.axes[0], r.stage2.axes[0])
    assert r.stage1.loss == r.stage2.loss


def test_stage1_mesh_is_uniform_every_epoch():
    spec, cfg = _short(4)
    uniform = build_axis(init_uniform(8 - 1 - 1), 0.0, 1.0, (0.5,))
    seen = []

    def cb(epoch, stage, ev):
        if stage == 1:
            np.testing.assert_array_equal(ev.axes[0], uniform)
        seen.append(stage)

    train_two_stage(spec, "ritz", 8, init_network(1, seed=1), cfg, callback=cb)
    assert seen.count(1) == 30 and seen.count(2) == 30


def test_history_layout():
    spec, cfg = _short(2, record_every=5)
    r = train_two_stage(spec, "ritz", 8, init_network(1, seed=0), cfg)
    epochs = [h[0] for h in r.history]
    assert epochs == list(range(0, 60, 5))
    assert {h[1] for h in r.stage_history(2)} == {2}
    assert all(abs(h[3] - (h[2] - spec.exact_energy)) < 1e-15 for h in r.history)


def test_determinism():
    spec, cfg = _short(5, 10, 10, seed=3)
    a = train_two_stage(spec, "ritz", 4, init_network(2, seed=3), cfg)
    b = train_two_stage(spec, "ritz", 4, init_network(2, seed=3), cfg)
    assert a.history == b.history
    np.testing.assert_array_equal(a.stage2.values, b.stage2.values)


def test_abort_reports_epoch():
    spec, cfg = _short(2, 5, 5)
    net = init_network(1, seed=0)
    net.theta[:] = np.nan
    with pytest.raises(TrainingAborted) as info:
        train_two_stage(spec, "ritz", 4, net, cfg)
    assert info.value.epoch == 0 and info.value.partial is not None


def test_ex2_two_stage_improves():
    spec = make_experiment(2)
    d = spec.defaults
    cfg = TrainConfig(stage1_epochs=d["stage1_epochs"], stage2_epochs=d["stage2_epochs"])
    r = train_two_stage(spec, "ritz", 16, init_network(1, seed=0), cfg)
    assert r.stage2.loss_error < r.stage1.loss_error


def test_ex3_nodes_accumulate_at_front():
    spec = make_experiment(3)
    cfg = TrainConfig(stage1_epochs=1000, stage2_epochs=5000)
    r = train_two_stage(spec, "ritz", 16, init_network(1, seed=0), cfg)
    inner = r.stage2.axes[0][1:-1]
    assert np.sum((inner > 4) & (inner < 6)) >= 8


def test_ex3_single_stage_flags_integration_error():
    spec = make_experiment(3)
    cfg = TrainConfig(stage1_epochs=0, stage2_epochs=5000)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r = train_two_stage(spec, "ritz", 16, init_network(1, seed=0), cfg)
    assert r.warnings
    assert any(issubclass(w.category, IntegrationWarning) for w in caught)
    assert min(h[3] for h in r.history) < -cfg.integration_tol


def _stage2_errors(eid):
    spec = make_experiment(eid)
    d = spec.defaults
    cfg = TrainConfig(stage1_epochs=d["stage1_epochs"], stage2_epochs=d["stage2_epochs"])
    r = train_two_stage(spec, "ritz", d["elements"], init_network(spec.d, seed=0), cfg)
    e = np.array([h[3] for h in r.stage_history(2)])
    return np.convolve(e, np.ones(100) / 100, mode="valid")


@pytest.mark.parametrize("eid", [2, 4])
def test_stage2_trend_downward(eid):
    ma = _stage2_errors(eid)
    assert ma[-1] < ma[0]
    assert ma[-1] <= ma.min() + 1e-3


@pytest.mark.xfail(reason="Adam spikes make the 100-epoch moving average rise locally by up to ~1e-4", strict=False)
@pytest.mark.parametrize("eid", [2, 4])
def test_stage2_moving_average_nonincreasing(eid):
    ma = _stage2_errors(eid)
    assert np.all(np.diff(ma) <= 0)
