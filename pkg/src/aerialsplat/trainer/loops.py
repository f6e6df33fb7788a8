"""Two-stage training: scaffold pathway first, then the completion branch."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..diagnostics import DiagThresholds, write_metrics_csv
from ..losses import (loss_d2s, loss_depth_z, loss_normal, loss_pres_renders, loss_ray_anchor, loss_reg, loss_rgb,
                      stage1_total, stage2_total)
from ..net import AerialSplatNet, compose_latent
from ..numcore import Parameter, backward, no_grad, zero_grads
from ..scenegen import DatasetError, GroundTruthBundle
from ..splat import GaussianScene, RenderOptions, render
from .checkpoint import Checkpoint
from .config import TrainConfig
from .evaluate import Evaluation, default_views, evaluate_net
from .optim import OptimizerState, adamw_step
from .rundir import RunDir
from .views import spread_views, window

log = logging.getLogger(__name__)


class NumericAbort(RuntimeError):
    """A non-finite loss stopped training; ``checkpoint`` is the last good state."""

    def __init__(self, step: int, checkpoint: Checkpoint, path=None):
        super().__init__(f"non-finite loss at step {step}")
        self.step, self.checkpoint, self.path = step, checkpoint, path


class FreezeViolation(AssertionError):
    pass


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: list = field(default_factory=list)       # one dict of FIELDS per step
    evals: dict = field(default_factory=dict)        # step -> Evaluation
    events: list = field(default_factory=list)
    frozen_grad: list = field(default_factory=list)  # stage 2: sum |grad| over frozen parameters per step
    seconds: float = 0.0


def _require_geometry(bundle: GroundTruthBundle) -> None:
    if not bundle.depths or not bundle.normals or not any(v.any() for v in bundle.valid):
        raise DatasetError("training needs ground-truth depth and normals")


def _cams(bundle, idx):
    return [bundle.cameras[i] for i in idx]


class _Loop:
    """Shared step bookkeeping: logging, evaluation, checkpoints and numeric aborts."""

    def __init__(self, config: TrainConfig, net: AerialSplatNet, trainable: list[Parameter], stage: int,
                 out, eval_fn, extra: dict | None = None):
        self.cfg, self.net, self.trainable, self.stage = config, net, trainable, stage
        self.state = OptimizerState.for_params(trainable)
        self.run = RunDir(out)
        self.eval_fn = eval_fn
        self.extra = extra or {}
        self.result = TrainResult(None)
        self.run.write_config(config.to_dict())

    def snapshot(self, step: int) -> Checkpoint:
        return Checkpoint.capture(self.net, self.state, self.cfg, self.stage, step, self.extra)

    def evaluate(self, step: int) -> None:
        ev = self.eval_fn()
        self.result.evals[step] = ev
        self.run.write_eval(step, ev, {"stage": self.stage, "step": step, "views": ev.views})

    def step(self, t: int, report) -> None:
        values = dict(report.values)
        if not np.isfinite(values["total"]):
            good = self.snapshot(t)
            path = self.run.checkpoint_path(t)
            if path is not None:
                good.save(path)
            self.result.events.append({"step": t, "event": "non-finite loss"})
            self.run.write_events(self.result.events)
            raise NumericAbort(t, good, path)
        backward(report.total)
        applied = adamw_step(self.trainable, self.state, self.cfg.lr_at(t), self.cfg.beta1, self.cfg.beta2,
                             self.cfg.eps, self.cfg.weight_decay, self.cfg.clip_norm)
        if not applied:
            self.result.events.append({"step": t, "event": "non-finite gradient, step skipped"})
        self.result.losses.append(values)
        self.run.log_losses(t, values)

    def periodic(self, t: int) -> None:
        """Called after step ``t``; ``t + 1`` steps have been applied."""
        done = t + 1
        if self.cfg.eval_every and done % self.cfg.eval_every == 0 and done < self.cfg.steps:
            self.evaluate(done)
        if self.cfg.checkpoint_every and done % self.cfg.checkpoint_every == 0 and done < self.cfg.steps:
            path = self.run.checkpoint_path(done)
            if path is not None:
                self.snapshot(done).save(path)

    def finish(self, start: float) -> TrainResult:
        steps = self.cfg.steps
        self.evaluate(steps)
        ckpt = self.snapshot(steps)
        path = self.run.checkpoint_path(steps)
        if path is not None:
            ckpt.save(path)
        self.run.write_events(self.result.events)
        self.result.checkpoint = ckpt
        self.result.seconds = time.perf_counter() - start
        return self.result


# -- stage I ------------------------------------------------------------------------

def stage1_losses(net: AerialSplatNet, bundle: GroundTruthBundle, views: list[int], supervise: list[int],
                  config: TrainConfig, opts: RenderOptions | None = None):
    """Scaffold reconstruction from ``views`` scored at the ``supervise`` cameras."""
    w = config.weights
    cams = _cams(bundle, views)
    rec = net(bundle.stack_images(views), cams, mode="scaffold")
    rgb, dz, normal = [], [], []
    for i in supervise:
        out = render(rec.scene, bundle.cameras[i], opts)
        rgb.append(loss_rgb(out, bundle.images[i]))
        mask = bundle.valid[i] & out.valid
        dz.append(loss_depth_z(out.depth, bundle.depths[i], mask))
        normal.append(loss_normal(out, bundle.cameras[i], bundle.depths[i], bundle.valid[i], w.flat, w.huber_delta))
    n = float(len(supervise))
    parts = {"rgb": sum(rgb[1:], rgb[0]) / n, "depth_z": sum(dz[1:], dz[0]) / n,
             "normal": sum(normal[1:], normal[0]) / n, "depth_xy": loss_ray_anchor(rec.scene, cams)}
    return stage1_total(parts, w), rec


def train_stage1(config: TrainConfig, bundle: GroundTruthBundle, net: AerialSplatNet | None = None,
                 out=None, opts: RenderOptions | None = None, thresholds: DiagThresholds | None = None) -> TrainResult:
    """Train encoder and decoder on the scaffold pathway (completion branch inactive).

    Inputs are ``context_views`` views spread over the training pool; each
    step supervises every input view plus ``targets_per_step`` other pool
    views drawn without replacement.
    """
    if config.stage != 1:
        raise ValueError("train_stage1 needs a stage-1 config")
    _require_geometry(bundle)
    start = time.perf_counter()
    net = net or AerialSplatNet(config.net)
    views = spread_views(bundle.context, config.context_views, len(bundle))
    others = [v for v in bundle.context if v not in views]
    rng = np.random.default_rng([config.seed, 1])
    trainable = net.scaffold_parameters()
    for p in trainable:
        p.requires_grad = True
    loop = _Loop(config, net, trainable, 1, out,
                 lambda: evaluate_net(net, bundle, "scaffold", views, thresholds=thresholds, opts=opts))
    loop.evaluate(0)
    for t in range(config.steps):
        k = min(config.targets_per_step, len(others))
        extra = sorted(rng.choice(others, k, replace=False).tolist()) if k else []
        zero_grads(net.parameters())
        report, _ = stage1_losses(net, bundle, views, views + extra, config, opts)
        loop.step(t, report)
        loop.periodic(t)
    return loop.finish(start)


# -- stage II -----------------------------------------------------------------------

def build_teacher(net: AerialSplatNet, images: np.ndarray, cameras: list) -> GaussianScene:
    """Dense-view teacher: the shared scaffold pathway on ``images``, fully detached."""
    with no_grad():
        rec = net(images, cameras, mode="scaffold")
    return rec.scene.detach()


class _Stage2Cache:
    """Values that depend only on frozen parameters and a view set.

    Encoder, decoder and the teacher are frozen in stage 2, so the teacher
    scene, its renders, the student encoding and the scaffold renders for
    a given view set are the same in every iteration; caching them is
    equivalent to recomputing them.
    """

    def __init__(self, net, bundle, opts):
        self.net, self.bundle, self.opts = net, bundle, opts
        self._teacher, self._teacher_render, self._student = {}, {}, {}

    def teacher_render(self, teach: tuple, view: int):
        key = (teach, view)
        if key not in self._teacher_render:
            if teach not in self._teacher:
                self._teacher[teach] = build_teacher(self.net, self.bundle.stack_images(teach),
                                                     _cams(self.bundle, teach))
            with no_grad():
                self._teacher_render[key] = render(self._teacher[teach], self.bundle.cameras[view], self.opts)
        return self._teacher_render[key]

    def student(self, stud: tuple):
        """``(images, cameras, fields, z_geo, prior features, scaffold renders, s_max)``."""
        if stud not in self._student:
            images, cams = self.bundle.stack_images(stud), _cams(self.bundle, stud)
            with no_grad():
                fields, z_geo = self.net.encode(images)
                feats = self.net.prior(images)
                scaffold = self.net.decode(z_geo, images, cams).detach()
                renders = [render(scaffold, c, self.opts) for c in cams]
            self._student[stud] = (images, cams, fields, z_geo, feats, renders, 0.1 * scaffold.extent())
        return self._student[stud]


def stage2_losses(net: AerialSplatNet, cache: _Stage2Cache, stud: list[int], teach: list[int], d2s: list[int],
                  supervise: list[int], config: TrainConfig):
    w, bundle, opts = config.weights, cache.bundle, cache.opts
    images, cams, fields, z_geo, feats, scaffold_renders, s_max = cache.student(tuple(stud))
    out = net.complete(fields, z_geo, images, feats)
    z_final = compose_latent(z_geo, out.delta)
    final = net.decode(z_final, images, cams)
    rgb = [loss_rgb(render(final, bundle.cameras[i], opts), bundle.images[i]) for i in supervise]
    teacher = [cache.teacher_render(tuple(teach), i) for i in d2s]
    d_rgb, d_depth = loss_d2s(final, teacher, _cams(bundle, d2s), w.d, opts, parts=True)
    residual, gate, gauss = loss_reg(out.delta, out.gates, final, s_max, parts=True)
    parts = {"d2s_rgb": d_rgb, "d2s_depth": d_depth, "pres": loss_pres_renders(final, scaffold_renders, cams, opts),
             "reg_residual": residual, "reg_gate": gate, "reg_gauss": gauss}
    if rgb:
        parts["rgb"] = sum(rgb[1:], rgb[0]) / float(len(rgb))
    return stage2_total(parts, w), final


def train_stage2(config: TrainConfig, init: Checkpoint, bundle: GroundTruthBundle, out=None,
                 opts: RenderOptions | None = None, thresholds: DiagThresholds | None = None,
                 check_freeze: bool = True) -> TrainResult:
    """Freeze the scaffold pathway and train the completion branch.

    Each iteration takes a student/teacher view window (``views.window``),
    draws ``d2s_cameras`` distillation cameras from the teacher views not
    in the student set and ``targets_per_step`` held-out pool views for
    L_rgb. Preservation uses the student cameras.
    """
    if config.stage != 2:
        raise ValueError("train_stage2 needs a stage-2 config")
    if init.stage not in (1, 2):
        raise ValueError("invalid initial checkpoint")
    _require_geometry(bundle)
    start = time.perf_counter()
    config = TrainConfig.from_dict({**config.to_dict(), "net": init.config.net.to_dict()})
    net = init.build_net()
    frozen, trainable = net.scaffold_parameters(), net.completion_parameters()
    for p in frozen:
        p.requires_grad = False
    for p in trainable:
        p.requires_grad = True
    before = [p.data.copy() for p in frozen]
    pool, total = bundle.context, len(bundle)
    eval_views = default_views(bundle, 2, config.context_views, config.student_views)
    cache = _Stage2Cache(net, bundle, opts)
    rng = np.random.default_rng([config.seed, 2])
    loop = _Loop(config, net, trainable, 2, out,
                 lambda: evaluate_net(net, bundle, "full", eval_views, thresholds=thresholds, opts=opts),
                 {"init_stage": init.stage, "init_step": init.step})
    loop.evaluate(0)
    for t in range(config.steps):
        stud, teach = window(pool, t, config.student_views, config.teacher_views, total)
        candidates = [v for v in teach if v not in stud]
        d2s = sorted(rng.choice(candidates, min(config.d2s_cameras, len(candidates)), replace=False).tolist())
        held = [v for v in pool if v not in stud]
        supervise = sorted(rng.choice(held, min(config.targets_per_step, len(held)), replace=False).tolist())
        zero_grads(net.parameters())
        report, _ = stage2_losses(net, cache, stud, teach, d2s, supervise, config)
        loop.step(t, report)
        if check_freeze:
            leak = float(sum(np.abs(p.grad).sum() for p in frozen))
            loop.result.frozen_grad.append(leak)
            if leak != 0.0:
                raise FreezeViolation(f"frozen parameters received gradient {leak} at step {t}")
        loop.periodic(t)
    for p, b in zip(frozen, before):
        if not np.array_equal(p.data, b):
            raise FreezeViolation(f"frozen parameter {p.name} changed")
    return loop.finish(start)


def evaluate(checkpoint: Checkpoint, bundle: GroundTruthBundle, mode: str = "full", views: list[int] | None = None,
             targets: list[int] | None = None, thresholds: DiagThresholds | None = None,
             opts: RenderOptions | None = None, out=None) -> Evaluation:
    """Score a checkpoint on held-out targets; ``mode='scaffold'`` forces a zero residual.

    ``views`` defaults to the stage's evaluation inputs (stage-1 context set
    or stage-2 student set). ``out`` is a CSV path.
    """
    if mode not in ("scaffold", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg = checkpoint.config
    views = default_views(bundle, checkpoint.stage, cfg.context_views, cfg.student_views) if views is None else views
    ev = evaluate_net(checkpoint.build_net(), bundle, mode, list(views), targets, thresholds, opts)
    if out is not None:
        write_metrics_csv(out, ev.rows, {"stage": checkpoint.stage, "step": checkpoint.step, "mode": mode,
                                         "views": list(views), "thresholds": (thresholds or DiagThresholds()).to_dict()})
    return ev
