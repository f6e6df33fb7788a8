"""Finite-difference gradient suites shared by the test-suite and ``aerialsplat gradcheck``.

Every case looks its primitive up in ``numcore.REGISTRY`` at call time, so a
replaced registry entry is what gets checked.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import splat  # noqa: F401  (registers the rasterize primitive)
from .losses import (loss_d2s, loss_depth_z, loss_normal, loss_pres, loss_ray_anchor, loss_reg, loss_rgb)
from .net import AerialSplatNet, NetConfig, TokenField, compose_latent
from .numcore import REGISTRY, NonFiniteError, Tensor, grad_check
from .splat import Camera, GaussianScene, RenderOptions, look_at, render
from .splat.render import RenderOutput

SUITES = ("core", "render", "losses", "net")
TOLERANCE = {"core": 1e-6, "render": 1e-4, "losses": 1e-3, "net": 1e-3}
EPS = 1e-5


@dataclass
class CheckResult:
    suite: str
    name: str
    error: float
    tol: float
    seconds: float = 0.0
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)


def _op(name: str) -> Callable:
    return lambda *args, **kw: REGISTRY[name](*args, **kw)


def _away(rng, shape, kinks=(0.0,), margin=10 * EPS, lo=-2.0, hi=2.0):
    """Uniform samples pushed at least ``10 * margin`` away from every kink."""
    x = rng.uniform(lo, hi, shape)
    for k in kinks:
        close = np.abs(x - k) < 10 * margin
        x[close] += np.where(x[close] >= k, 20 * margin, -20 * margin)
    return x


def _pair_apart(rng, shape):
    a = rng.uniform(-2, 2, shape)
    b = a + rng.choice([-1, 1], shape) * rng.uniform(0.01, 1.0, shape)
    return a, b


def _raster_case(r):
    n = 3
    mean2d = r.uniform(2, 6, (n, 2))
    a = r.uniform(0.3, 0.8, n)
    c = r.uniform(0.3, 0.8, n)
    b = r.uniform(-0.1, 0.1, n)
    rq = np.concatenate([r.normal(size=(n, 3)), np.tile([1.0, 0.1, 0.2, 1.2, 0.1, 2.0], (n, 1))], 1)
    return [mean2d, np.stack([a, b, c], 1), r.uniform(0.2, 0.8, n), r.normal(size=(n, 2)), rq]


def primitive_cases() -> dict:
    """``name -> (builder(rng) -> input arrays, f(*tensors) -> Tensor)`` for every primitive."""
    o = _op
    return {
        "add": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))], o("add")),
        "sub": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 1))], o("sub")),
        "mul": (lambda r: [r.normal(size=(3, 2)), r.normal(size=(3, 2))], o("mul")),
        "div": (lambda r: [r.normal(size=(3,)), r.uniform(0.5, 2, (3,)) * r.choice([-1, 1], 3)], o("div")),
        "maximum": (lambda r: list(_pair_apart(r, (5,))), o("maximum")),
        "minimum": (lambda r: list(_pair_apart(r, (5,))), o("minimum")),
        "neg": (lambda r: [r.normal(size=(4,))], o("neg")),
        "power": (lambda r: [r.uniform(0.3, 2.0, (4,))], lambda x: REGISTRY["power"](x, 2.5)),
        "exp": (lambda r: [r.normal(size=(4,))], o("exp")),
        "log": (lambda r: [r.uniform(0.2, 3.0, (4,))], o("log")),
        "sqrt": (lambda r: [r.uniform(0.2, 3.0, (4,))], o("sqrt")),
        "sigmoid": (lambda r: [r.normal(0, 3, (5,))], o("sigmoid")),
        "tanh": (lambda r: [r.normal(size=(5,))], o("tanh")),
        "softplus": (lambda r: [r.normal(0, 3, (5,))], o("softplus")),
        "relu": (lambda r: [_away(r, (6,))], o("relu")),
        "gelu": (lambda r: [r.normal(size=(6,))], o("gelu")),
        "abs": (lambda r: [_away(r, (6,))], o("abs")),
        "huber": (lambda r: [_away(r, (6,), kinks=(-0.5, 0.5))], lambda x: REGISTRY["huber"](x, 0.5)),
        "sum": (lambda r: [r.normal(size=(3, 4))], lambda x: REGISTRY["sum"](x, axis=0)),
        "mean": (lambda r: [r.normal(size=(3, 4))], lambda x: REGISTRY["mean"](x, axis=1, keepdims=True)),
        "softmax": (lambda r: [r.normal(size=(2, 5))], o("softmax")),
        "layer_norm": (lambda r: [r.normal(size=(3, 6)), r.normal(size=(6,)), r.normal(size=(6,))],
                       o("layer_norm")),
        "matmul": (lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(4, 2))], o("matmul")),
        "reshape": (lambda r: [r.normal(size=(2, 6))], lambda x: REGISTRY["reshape"](x, (3, 4))),
        "transpose": (lambda r: [r.normal(size=(2, 3, 4))], lambda x: REGISTRY["transpose"](x, (2, 0, 1))),
        "slice": (lambda r: [r.normal(size=(5, 3))],
                  lambda x: REGISTRY["slice"](x, (np.array([0, 2, 2, 4]), slice(0, 2)))),
        "concat": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(1, 3))],
                   lambda a, b: REGISTRY["concat"]([a, b], axis=0)),
        "stack": (lambda r: [r.normal(size=(3,)), r.normal(size=(3,))],
                  lambda a, b: REGISTRY["stack"]([a, b], axis=1)),
        "broadcast_to": (lambda r: [r.normal(size=(3, 1))], lambda x: REGISTRY["broadcast_to"](x, (2, 3, 4))),
        "rasterize": (_raster_case, lambda m, c, op, f, q: REGISTRY["rasterize"](
            m, c, op, f, q, (6.0, 7.0, 4.0, 4.0), 8, 8, 0.0, 0.0)),
    }


def _worst(f: Callable, build: Callable, trials: int, eps: float = EPS, **kw) -> float:
    worst = 0.0
    for seed in range(trials):
        inputs = [Tensor(x) for x in build(np.random.default_rng(seed))]
        worst = max(worst, grad_check(f, inputs, eps=eps, seed=seed, **kw))
    return worst


def core_checks(trials: int = 20) -> list[tuple[str, Callable[[], float]]]:
    cases = primitive_cases()
    out = []
    for name in sorted(REGISTRY):
        if name not in cases:
            out.append((name, None))
            continue
        build, f = cases[name]
        n = max(1, trials // 5) if name == "rasterize" else trials
        out.append((name, lambda build=build, f=f, n=n: _worst(f, build, n)))
    return out


# -- renderer ---------------------------------------------------------------------

FIELD_NAMES = ("means", "log_scales", "rotations", "opacity_logits", "colors")


def _random_scene(n, seed):
    rng = np.random.default_rng(seed)
    means = rng.uniform(-1, 1, (n, 3))
    means[:, 2] *= 0.5
    return [means, rng.uniform(-2.5, -1.0, (n, 3)) + 1.0, rng.normal(size=(n, 4)), rng.normal(0, 2, n),
            rng.uniform(0, 1, (n, 3))]


def render_checks(trials: int = 2) -> list[tuple[str, Callable[[], float]]]:
    cam = look_at([0.1, -0.2, 3.0], [0, 0, 0], up=(0, -1, 0), width=16, height=16, fov_deg=50)
    opts = RenderOptions().exact()

    def check(k):
        worst = 0.0
        for seed in range(1, trials + 1):
            fields = _random_scene(6, seed)

            def f(x):
                args = [Tensor(a) for a in fields]
                args[k] = x
                out = render(GaussianScene(*args), cam, opts)
                return REGISTRY["concat"]([out.rgb.reshape(-1), out.depth.reshape(-1), out.alpha.reshape(-1),
                                           out.normal.reshape(-1), out.s_min.reshape(-1)], axis=0)
            worst = max(worst, grad_check(f, [Tensor(fields[k])], eps=1e-6, seed=seed))
        return worst

    return [(f"render.{name}", lambda k=k: check(k)) for k, name in enumerate(FIELD_NAMES)]


# -- losses -----------------------------------------------------------------------

def _identity_cam(w=16, h=16, f=20.0):
    return Camera(fx=f, fy=f, cx=w / 2, cy=h / 2, R=np.eye(3), T=np.zeros(3), width=w, height=h)


def _blob(n, seed, z=3.0):
    rng = np.random.default_rng(seed)
    means = np.c_[rng.uniform(-0.4, 0.4, (n, 2)), rng.uniform(z - 0.3, z + 0.3, n)]
    return GaussianScene(Tensor(means), Tensor(rng.uniform(-2.2, -1.6, (n, 3))), Tensor(rng.normal(size=(n, 4))),
                         Tensor(rng.normal(1.0, 0.5, n)), Tensor(rng.uniform(0.1, 0.9, (n, 3))))


def _tiny_net_setup():
    cfg = NetConfig(patch=4, dim=16, prior_dim=8, n_completion=4, heads=2, layers=4, inject_layers=(2, 4),
                    image_size=(16, 16), max_views=2, per_token=1)
    net = AerialSplatNet(cfg)
    rng = np.random.default_rng(1)
    for p in net.parameters():
        if not np.any(p.data):
            p.assign(rng.normal(0.0, 0.05, p.shape))
    eyes = [[0.4 * np.cos(a), 0.4 * np.sin(a), 3.0] for a in (0.0, np.pi)]
    cams = [look_at(e, [0, 0, 0], up=(0, 1, 0), width=16, height=16, fov_deg=50) for e in eyes]
    imgs = np.random.default_rng(0).uniform(size=(2, 16, 16, 3))
    return net, cams, imgs


def _loss_rgb():
    rng = np.random.default_rng(1)
    gt = rng.uniform(size=(6, 6, 3))
    pred = gt + rng.choice([-1, 1], gt.shape) * rng.uniform(0.05, 0.3, gt.shape)
    mask = rng.uniform(size=(6, 6)) < 0.7
    return grad_check(lambda p: loss_rgb(p, gt, mask), [Tensor(pred)])


def _loss_depth_z():
    rng = np.random.default_rng(2)
    ref = rng.uniform(1.0, 4.0, (8, 8))
    pred = ref * rng.uniform(0.7, 1.4, ref.shape)
    mask = rng.uniform(size=ref.shape) < 0.8
    return grad_check(lambda p: loss_depth_z(p, ref, mask), [Tensor(pred)])


def _loss_ray_anchor():
    cam = _identity_cam()
    rng = np.random.default_rng(0)
    means = np.c_[rng.uniform(-0.5, 0.5, (5, 2)), rng.uniform(2, 4, 5)]
    px = rng.uniform(2, 14, (5, 2))
    n = len(means)

    def f(m):
        scene = GaussianScene(m, np.zeros((n, 3)), np.tile([1.0, 0, 0, 0], (n, 1)), np.zeros(n), np.zeros((n, 3)),
                              source_view=np.zeros(n, int), source_pixel=px)
        return loss_ray_anchor(scene, [cam])
    return grad_check(f, [Tensor(means)])


def _loss_normal():
    cam = _identity_cam(w=10, h=10)
    rng = np.random.default_rng(0)
    depth = 2.0 + rng.uniform(0, 0.05, (10, 10))
    n = rng.normal(size=(10, 10, 3)) + [0, 0, -2]
    normal = n / np.linalg.norm(n, axis=-1, keepdims=True)
    s_min = rng.uniform(0.01, 0.1, (10, 10))
    valid = np.ones((10, 10), bool)

    def f(nm, s):
        out = RenderOutput(Tensor(np.zeros((10, 10, 3))), Tensor(depth), Tensor(np.ones((10, 10))), nm, s, valid)
        return loss_normal(out, cam, depth, flat=0.3)
    return grad_check(f, [Tensor(normal), Tensor(s_min)])


def _loss_d2s():
    cams = [_identity_cam(w=12, h=12, f=16.0)]
    student, teacher = _blob(4, 0), _blob(4, 3)
    opts = RenderOptions().exact()

    def f(means, colors):
        s = GaussianScene(means, student.log_scales, student.rotations, student.opacity_logits, colors)
        return loss_d2s(s, teacher, cams, opts=opts)
    return grad_check(f, [Tensor(student.means.data), Tensor(student.colors.data)])


def _loss_pres():
    net, cams, imgs = _tiny_net_setup()
    _, z = net.encode(imgs)
    z_geo = TokenField(Tensor(z.tokens.data), z.layer)
    delta = Tensor(np.random.default_rng(2).normal(0, 0.3, z_geo.shape))
    opts = RenderOptions().exact()

    def f(d):
        return loss_pres(compose_latent(z_geo, TokenField(d, z_geo.layer)), z_geo, net.decoder, imgs, cams, opts)
    return grad_check(f, [delta], samples=40)


def _loss_reg():
    scene = _blob(6, 0)
    rng = np.random.default_rng(0)
    delta = rng.normal(size=(2, 3, 4))
    gates = rng.uniform(0.1, 0.9, (3, 1))
    scales = np.log(rng.uniform(0.05, 0.4, (len(scene), 3)))

    def f(d, g, s):
        sc = GaussianScene(scene.means.data, s, scene.rotations.data, scene.opacity_logits.data, scene.colors.data)
        return loss_reg(d, [g], sc, s_max=0.2)
    return grad_check(f, [Tensor(delta), Tensor(gates), Tensor(scales)])


def loss_checks() -> list[tuple[str, Callable[[], float]]]:
    return [("loss_rgb", _loss_rgb), ("loss_depth_z", _loss_depth_z), ("loss_ray_anchor", _loss_ray_anchor),
            ("loss_normal", _loss_normal), ("loss_d2s", _loss_d2s), ("loss_pres", _loss_pres),
            ("loss_reg", _loss_reg)]


# -- network ----------------------------------------------------------------------

def _net_full():
    net, cams, imgs = _tiny_net_setup()
    feats = net.prior(imgs)
    opts = RenderOptions().exact()

    def f(*_):
        out = render(net(imgs, cams, prior_features=feats).scene, cams[0], opts)
        return out.rgb + out.depth.reshape(16, 16, 1) * 0.1
    return grad_check(f, net.parameters(), samples=3, seed=2)


def net_checks() -> list[tuple[str, Callable[[], float]]]:
    return [("net.full_pipeline", _net_full)]


# -- driver -----------------------------------------------------------------------

def checks(suite: str) -> list[tuple[str, Callable[[], float] | None]]:
    table = {"core": core_checks, "render": render_checks, "losses": loss_checks, "net": net_checks}
    if suite not in table:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    return table[suite]()


def run(suites=SUITES, report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    """Run suites in order; each check yields one :class:`CheckResult`."""
    results = []
    for suite in suites:
        for name, fn in checks(suite):
            start = time.perf_counter()
            note = ""
            if fn is None:
                err, note = float("inf"), "no gradient case registered"
            else:
                try:
                    err = float(fn())
                except (NonFiniteError, FloatingPointError, ValueError) as exc:
                    err, note = float("inf"), f"{type(exc).__name__}: {exc}"
            res = CheckResult(suite, name, err, TOLERANCE[suite], time.perf_counter() - start, note)
            results.append(res)
            if report is not None:
                report(res)
    return results
