import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerialsplat.losses import FIELDS
from aerialsplat.net import AerialSplatNet, NetConfig
from aerialsplat.numcore import Parameter, no_grad
from aerialsplat.trainer import (LOSS_HEADER, Checkpoint, ConfigError, FreezeViolation, OptimizerState, TrainConfig,
                                 adamw_step, build_teacher, evaluate, read_losses, spread_views, train_stage1,
                                 train_stage2, window)

TINY = dict(dim=16, heads=2, layers=2, inject_layers=(1, 2), n_completion=4, prior_dim=8, patch=8,
            image_size=(32, 32))


def tiny_cfg(stage=1, steps=2, **kw):
    return TrainConfig(stage=stage, steps=steps, net=NetConfig(**TINY), **kw)


# -- optimizer ---------------------------------------------------------------------

def _adamw_scalar(w, grads, lr, b1, b2, eps, wd, decay):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        if decay:
            w = w - lr * wd * w
        w = w - lr * mhat / (math.sqrt(vhat) + eps)
    return w


@pytest.mark.parametrize("decay", [False, True])
def test_adamw_matches_scalar_recurrence(decay):
    p = Parameter(np.array([0.7]), "w", decay=decay)
    state = OptimizerState.for_params([p])
    grads = [0.3, -0.2, 0.05]
    for g in grads:
        p.grad = np.array([g])
        adamw_step([p], state, lr=0.01, beta1=0.8, beta2=0.95, eps=1e-8, weight_decay=0.1)
    want = _adamw_scalar(0.7, grads, 0.01, 0.8, 0.95, 1e-8, 0.1, decay)
    assert abs(p.data[0] - want) <= 1e-12


def test_zero_gradients_leave_parameters():
    p = Parameter(np.arange(4.0), "w", decay=True)
    state = OptimizerState.for_params([p])
    adamw_step([p], state, lr=0.1, weight_decay=0.0)
    np.testing.assert_array_equal(p.data, np.arange(4.0))


def test_quadratic_descends():
    p = Parameter(np.array([1.0]), "w")
    state = OptimizerState.for_params([p])
    p.grad = p.data.copy()   # d/dw w^2/2
    adamw_step([p], state, lr=0.1)
    assert p.data[0] < 1.0


def test_clipping_uses_global_norm():
    a, b = Parameter(np.array([3.0]), "a"), Parameter(np.array([4.0]), "b")
    a.grad, b.grad = np.array([30.0]), np.array([40.0])
    state = OptimizerState.for_params([a, b])
    adamw_step([a, b], state, lr=0.1, beta1=0.0, beta2=0.0, eps=0.0, clip_norm=1.0)
    # with beta=0 the step is sign(g) * lr regardless of scale, the moments carry the clipped values
    np.testing.assert_allclose(state.m["a"], [0.6], rtol=1e-12)
    np.testing.assert_allclose(state.m["b"], [0.8], rtol=1e-12)


def test_non_finite_gradient_skips_step():
    p = Parameter(np.array([1.0, 2.0]), "w")
    state = OptimizerState.for_params([p])
    p.grad = np.array([np.nan, 1.0])
    assert not adamw_step([p], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert state.step == 0 and state.skipped == [0]


def test_gates_and_gains_are_not_decayed():
    net = AerialSplatNet(NetConfig(**TINY))
    decayed = {p.name for p in net.parameters() if p.decay}
    assert decayed and all(n.endswith(".w") for n in decayed)
    assert not any(".gate." in n for n in decayed)


# -- config and views --------------------------------------------------------------

def test_config_validation_and_defaults():
    assert TrainConfig().peak_lr == 2e-3 and TrainConfig(stage=2).peak_lr == 1e-3
    with pytest.raises(ConfigError):
        TrainConfig(stage=2, student_views=4, teacher_views=4)
    with pytest.raises(ConfigError):
        TrainConfig(stage=3)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"steps": 3, "learning_rate": 1.0})
    cfg = tiny_cfg(steps=40)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_warmup_schedule():
    cfg = TrainConfig(steps=100, lr=1.0)
    assert [cfg.lr_at(i) for i in (0, 1, 4, 5, 99)] == [0.2, 0.4, 1.0, 1.0, 1.0]


def test_view_selection():
    pool = [i for i in range(16) if i % 8]
    assert spread_views(pool, 8, 16) == [1, 3, 5, 7, 9, 11, 13, 15]
    assert spread_views(pool, 4, 16) == [2, 6, 10, 14]
    seen = set()
    for t in range(30):
        stud, teach = window(pool, t, 4, 12, 16)
        assert len(stud) == 4 and len(teach) == 12
        assert set(stud) <= set(teach) <= set(pool)
        seen.add((tuple(stud), tuple(teach)))
    assert len(seen) == 15


# -- checkpoints -------------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_checkpoint_round_trip_is_bit_exact(seed, stage):
    net = AerialSplatNet(NetConfig(**TINY, seed=seed))
    params = net.parameters()
    state = OptimizerState.for_params(params)
    rng = np.random.default_rng(seed)
    for p in params:
        state.m[p.name] = rng.normal(size=p.shape)
        state.v[p.name] = rng.uniform(size=p.shape) * 1e-7
    state.step = seed
    ck = Checkpoint.capture(net, state, tiny_cfg(stage=stage, seed=seed), stage, seed, {"note": "x"})
    back = Checkpoint.from_bytes(ck.to_bytes())
    assert back.to_bytes() == ck.to_bytes()
    assert back.stage == stage and back.step == seed and back.config == ck.config
    for k, v in ck.params.items():
        assert np.array_equal(back.params[k], v)
        assert np.array_equal(back.optimizer.m[k], state.m[k]) and np.array_equal(back.optimizer.v[k], state.v[k])


# -- training ----------------------------------------------------------------------

def test_zero_steps_returns_initialization(small_bundle):
    cfg = tiny_cfg(steps=0)
    res = train_stage1(cfg, small_bundle)
    init = AerialSplatNet(cfg.net)
    for p in init.parameters():
        assert np.array_equal(res.checkpoint.params[p.name], p.data)
    assert res.losses == []


def test_stage1_run_directory(small_bundle, tmp_path):
    cfg = tiny_cfg(steps=3)
    res = train_stage1(cfg, small_bundle, out=tmp_path)
    header = (tmp_path / "losses.csv").read_text().splitlines()[0].split(",")
    assert tuple(header) == LOSS_HEADER and LOSS_HEADER[1:] == FIELDS
    rows = read_losses(tmp_path / "losses.csv")
    assert [r["step"] for r in rows] == [0, 1, 2]
    assert [r["total"] for r in rows] == [l["total"] for l in res.losses]
    for name in ("config.json", "eval_step000.csv", "eval_step003.csv", "checkpoints/step003.bin"):
        assert (tmp_path / name).exists(), name
    t = small_bundle.target[0]
    assert (tmp_path / "renders" / f"step003_view{t:02d}.ppm").exists()
    assert Checkpoint.load(tmp_path / "checkpoints" / "step003.bin").to_bytes() == res.checkpoint.to_bytes()
    # the stage-1 loss report only carries stage-1 components
    assert all(r["pres"] == 0.0 and r["d2s_rgb"] == 0.0 for r in rows)


def test_stage1_is_deterministic(small_bundle):
    a = train_stage1(tiny_cfg(steps=3), small_bundle)
    b = train_stage1(tiny_cfg(steps=3), small_bundle)
    assert a.losses == b.losses
    assert a.checkpoint.to_bytes() == b.checkpoint.to_bytes()


def test_non_finite_loss_aborts_with_last_good_checkpoint(small_bundle, tmp_path, monkeypatch):
    from aerialsplat.trainer import NumericAbort, loops
    real = loops.stage1_losses
    calls = []

    def poisoned(*args, **kw):
        report, rec = real(*args, **kw)
        calls.append(1)
        if len(calls) == 2:
            report.values["total"] = float("nan")
        return report, rec

    monkeypatch.setattr(loops, "stage1_losses", poisoned)
    with pytest.raises(NumericAbort) as info:
        train_stage1(tiny_cfg(steps=4), small_bundle, out=tmp_path)
    assert info.value.step == 1
    assert (tmp_path / "checkpoints" / "step001.bin").exists()
    assert Checkpoint.load(info.value.path).step == 1


def test_training_requires_geometry(small_bundle):
    from dataclasses import replace
    from aerialsplat.scenegen import DatasetError
    broken = replace(small_bundle, valid=[np.zeros_like(v) for v in small_bundle.valid])
    with pytest.raises(DatasetError):
        train_stage1(tiny_cfg(steps=1), broken)


# -- teacher and stage II ----------------------------------------------------------

def test_teacher_matches_student_scaffold(small_bundle):
    net = AerialSplatNet(NetConfig(**TINY))
    idx = [1, 3, 5, 7]
    images, cams = small_bundle.stack_images(idx), [small_bundle.cameras[i] for i in idx]
    teacher = build_teacher(net, images, cams)
    with no_grad():
        student = net(images, cams, mode="scaffold").scene
    for a, b in zip(teacher.fields(), student.fields()):
        assert np.array_equal(a.data, b.data)
        assert not a.requires_grad
    dense = [1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13]
    big = build_teacher(net, small_bundle.stack_images(dense), [small_bundle.cameras[i] for i in dense])
    assert len(big) == 3 * len(teacher)


@pytest.fixture(scope="module")
def stage1_tiny(small_bundle):
    return train_stage1(tiny_cfg(steps=2), small_bundle).checkpoint


def test_stage2_freezes_scaffold(small_bundle, stage1_tiny):
    res = train_stage2(tiny_cfg(stage=2, steps=6), stage1_tiny, small_bundle)
    assert res.frozen_grad == [0.0] * 6
    net = AerialSplatNet(NetConfig(**TINY))
    frozen = {p.name for p in net.scaffold_parameters()}
    moved = False
    for name, value in res.checkpoint.params.items():
        if name in frozen:
            assert np.array_equal(value, stage1_tiny.params[name])
        else:
            moved |= not np.array_equal(value, stage1_tiny.params[name])
    assert moved


def test_stage2_first_step_preserves_scaffold(small_bundle, stage1_tiny):
    res = train_stage2(tiny_cfg(stage=2, steps=1), stage1_tiny, small_bundle)
    assert res.losses[0]["pres"] == 0.0
    assert res.losses[0]["reg_residual"] == 0.0


def test_frozen_gradient_is_detected(small_bundle, stage1_tiny, monkeypatch):
    from aerialsplat.trainer import loops
    real = loops.stage2_losses

    def leaky(net, *args, **kw):
        report, final = real(net, *args, **kw)
        net.decoder.parameters()[0].grad += 1.0
        return report, final

    monkeypatch.setattr(loops, "stage2_losses", leaky)
    with pytest.raises(FreezeViolation):
        train_stage2(tiny_cfg(stage=2, steps=2), stage1_tiny, small_bundle)


# -- evaluation --------------------------------------------------------------------

def test_scaffold_and_full_agree_on_stage1_checkpoint(small_bundle, stage1_tiny):
    a = evaluate(stage1_tiny, small_bundle, "scaffold")
    b = evaluate(stage1_tiny, small_bundle, "full")
    for t in small_bundle.target:
        assert np.array_equal(a.renders[t], b.renders[t])
    assert [r["psnr"] for r in a.rows] == [r["psnr"] for r in b.rows]
    assert len(a.rows) == len(small_bundle.target)


def test_evaluation_is_deterministic_and_round_trips(small_bundle, stage1_tiny, tmp_path):
    stage1_tiny.save(tmp_path / "c.bin")
    again = evaluate(Checkpoint.load(tmp_path / "c.bin"), small_bundle, "full", out=tmp_path / "m.csv")
    first = evaluate(stage1_tiny, small_bundle, "full")
    assert first.rows == again.rows
    assert (tmp_path / "m.csv").exists()


def test_evaluation_never_reads_target_images(small_bundle, stage1_tiny):
    from dataclasses import replace
    images = list(small_bundle.images)
    for t in small_bundle.target:
        images[t] = np.full_like(images[t], np.nan)
    blind = replace(small_bundle, images=images)
    a = evaluate(stage1_tiny, small_bundle, "full")
    b = evaluate(stage1_tiny, blind, "full")
    for t in small_bundle.target:
        assert np.array_equal(a.renders[t], b.renders[t])
    with pytest.raises(ValueError):
        evaluate(stage1_tiny, small_bundle, "full", views=[0, 1])
