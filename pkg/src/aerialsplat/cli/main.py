"""``aerialsplat`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .. import gradsuite
from ..diagnostics import (INVALID, WEAK, absrel, classify_regions, delta1, psnr, ssim, write_metrics_csv,
                           write_region_ppm)
from ..net import compose_latent
from ..numcore import CheckpointFormatError, no_grad
from ..scenegen import (FACADE, GROUND, LABEL_NAMES, ROOF, DatasetError, build_layout, cast_camera, generate_city,
                        load_bundle, make_dataset, sample_aerial_cameras, save_bundle)
from ..splat import render
from ..splat.io import load_scene, read_depth_pgm, read_ppm, save_scene, write_ppm
from ..trainer import Checkpoint, ConfigError, NumericAbort, default_views, evaluate, train_stage1, train_stage2
from .runconfig import RunConfig

log = logging.getLogger("aerialsplat")

OK, CHECK_FAILED, CONFIG_ERROR, IO_ERROR, MISSING, NUMERIC = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _snapshot(out: Path, payload: dict) -> None:
    """Write the resolved configuration before any compute; refuse to overwrite a different one."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    text = json.dumps(payload, indent=1, sort_keys=True)
    if path.exists() and path.read_text() != text:
        raise CliError(CONFIG_ERROR, f"{path} holds a different configuration")
    path.write_text(text)


def _bundle(path):
    if path is None:
        raise CliError(CONFIG_ERROR, "--data is required")
    if not Path(path).is_dir() or not (Path(path) / "cameras.json").exists():
        raise CliError(MISSING, f"dataset {path} not found")
    return load_bundle(path)


def _checkpoint(path) -> Checkpoint:
    if path is None or not Path(path).is_file():
        raise CliError(MISSING, f"checkpoint {path} not found")
    try:
        return Checkpoint.load(path)
    except CheckpointFormatError as exc:
        raise CliError(IO_ERROR, f"{path}: {exc}") from None


def _views(text, bundle, default):
    if text is None:
        return default
    try:
        views = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(CONFIG_ERROR, f"bad view list {text!r}") from None
    bad = [v for v in views if not 0 <= v < len(bundle)]
    if bad or not views:
        raise CliError(CONFIG_ERROR, f"view indices {bad or text} out of range 0..{len(bundle) - 1}")
    return views


# -- commands -----------------------------------------------------------------------

def cmd_gen(args, cfg: RunConfig) -> int:
    from dataclasses import replace
    traj = cfg.trajectory if args.views is None else replace(cfg.trajectory, n_views=args.views)
    cfg = RunConfig(cfg.city, traj, cfg.net, cfg.train, cfg.weights, cfg.diag, cfg.seed)
    out = Path(args.out)
    _snapshot(out, {"command": "gen", **cfg.to_dict()})
    layout = build_layout(cfg.city)
    bundle = make_dataset(generate_city(cfg.city, layout), sample_aerial_cameras(traj), layout=layout)
    save_bundle(bundle, out)
    print(f"wrote {len(bundle)} views to {out} (targets {bundle.target})")
    return OK


def _train(args, cfg: RunConfig, stage: int) -> int:
    init = None
    if stage == 2:
        if args.init is None:
            raise CliError(MISSING, "train2 needs --init <stage-1 checkpoint>")
        init = _checkpoint(args.init)
    tc = cfg.train_config(stage, steps=args.steps, data=str(args.data), out=str(args.out),
                          init=None if args.init is None else str(args.init))
    bundle = _bundle(args.data)
    try:
        if stage == 1:
            res = train_stage1(tc, bundle, out=args.out)
        else:
            res = train_stage2(tc, init, bundle, out=args.out)
    except NumericAbort as exc:
        raise CliError(NUMERIC, f"{exc}; last good checkpoint {exc.path}") from None
    except FileExistsError as exc:
        raise CliError(CONFIG_ERROR, str(exc)) from None
    final = res.evals[max(res.evals)].rows
    mean = np.mean([r["psnr"] for r in final])
    print(f"stage {stage}: {tc.steps} steps in {res.seconds:.1f}s, held-out PSNR {mean:.2f} dB, run dir {args.out}")
    return OK


def cmd_train1(args, cfg):
    return _train(args, cfg, 1)


def cmd_train2(args, cfg):
    return _train(args, cfg, 2)


def cmd_render(args, cfg: RunConfig) -> int:
    ckpt = _checkpoint(args.ckpt)
    bundle = _bundle(args.data)
    views = _views(args.views, bundle, default_views(bundle, ckpt.stage, ckpt.config.context_views,
                                                     ckpt.config.student_views))
    targets = _views(args.targets, bundle, bundle.target)
    out = Path(args.out)
    _snapshot(out, {"command": "render", "ckpt": str(args.ckpt), "data": str(args.data), "views": views,
                    "targets": targets, "mode": args.mode, **cfg.to_dict()})
    net = ckpt.build_net()
    images, cams = bundle.stack_images(views), [bundle.cameras[i] for i in views]
    t0 = time.perf_counter()
    with no_grad():
        fields, z = net.encode(images)
        if args.mode == "full":
            z = compose_latent(z, net.complete(fields, z, images).delta)
        t1 = time.perf_counter()
        scene = net.decode(z, images, cams)
        t2 = time.perf_counter()
        # render what the exported file holds so re-imports reproduce the images exactly
        save_scene(out / "scene.splat", scene)
        scene = load_scene(out / "scene.splat")
        frames = {t: render(scene, bundle.cameras[t]).rgb.data for t in targets}
    t3 = time.perf_counter()
    for t, rgb in frames.items():
        write_ppm(out / f"view{t:02d}.ppm", rgb)
    timing = {"predict_s": t1 - t0, "decode_s": t2 - t1, "render_s": t3 - t2, "total_s": t3 - t0}
    meta = {"views": views, "targets": targets, "mode": args.mode, "gaussians": len(scene), "timing": timing}
    (out / "meta.json").write_text(json.dumps(meta, indent=1))
    print(f"reconstructed {len(scene)} Gaussians from views {views}, rendered {len(targets)} targets "
          f"in {timing['total_s']:.2f}s")
    return OK


def _score_images(bundle, pred_dir: Path, targets, mode: str) -> list[dict]:
    rows = []
    for t in targets:
        path = pred_dir / "images" / f"{t:03d}.ppm"
        if not path.exists():
            path = pred_dir / f"view{t:02d}.ppm"
        if not path.exists():
            raise CliError(MISSING, f"no prediction for view {t} in {pred_dir}")
        rgb = read_ppm(path)
        rows.append({"scene": "toy", "view": t, "mode": mode, "psnr": psnr(rgb, bundle.images[t]),
                     "ssim": ssim(rgb, bundle.images[t])})
    return rows


def cmd_eval(args, cfg: RunConfig) -> int:
    bundle = _bundle(args.data)
    out = Path(args.out)
    targets = _views(args.targets, bundle, bundle.target)
    if args.pred_dir is not None:
        _snapshot(out, {"command": "eval", "pred_dir": str(args.pred_dir), "data": str(args.data), **cfg.to_dict()})
        rows = _score_images(bundle, Path(args.pred_dir), targets, "images")
        write_metrics_csv(out / "eval_images.csv", rows, {"pred_dir": str(args.pred_dir)})
    else:
        ckpt = _checkpoint(args.ckpt)
        views = _views(args.views, bundle, default_views(bundle, ckpt.stage, ckpt.config.context_views,
                                                         ckpt.config.student_views))
        if set(views) & set(targets):
            raise CliError(CONFIG_ERROR, "context views and targets overlap")
        _snapshot(out, {"command": "eval", "ckpt": str(args.ckpt), "data": str(args.data), "views": views,
                        "mode": args.mode, **cfg.to_dict()})
        ev = evaluate(ckpt, bundle, args.mode, views, targets, cfg.diag, out=out / f"eval_{args.mode}.csv")
        rows = ev.rows
    for r in rows:
        print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return OK


def cmd_diag(args, cfg: RunConfig) -> int:
    bundle = _bundle(args.data)
    out = Path(args.out)
    views = _views(args.views, bundle, default_views(bundle, 2, cfg.train.context_views, cfg.train.student_views))
    targets = [t for t in _views(args.targets, bundle, bundle.target) if t not in views]
    _snapshot(out, {"command": "diag", "data": str(args.data), "views": views, "targets": targets,
                    "pred_depth_dir": None if args.pred_depth_dir is None else str(args.pred_depth_dir),
                    **cfg.to_dict()})
    cams = [bundle.cameras[i] for i in views]
    ctx_depths = [bundle.depths[i] for i in views]
    layout = bundle.layout
    rows, totals = [], {}
    for t in targets:
        rm = classify_regions(bundle.depths[t], bundle.cameras[t], ctx_depths, cams, cfg.diag)
        write_region_ppm(out / f"regions_view{t:02d}.ppm", rm)
        valid = rm.labels != INVALID
        row = {"scene": "toy", "view": t, "valid": int(valid.sum()), "weak_fraction": rm.fraction(WEAK)}
        if layout is not None:
            hits = cast_camera(layout, bundle.cameras[t])
            for label in (ROOF, FACADE, GROUND):
                m = (hits.label == label) & valid
                row[f"weak_fraction_{LABEL_NAMES[label]}"] = rm.fraction(WEAK, hits.label == label)
                w, n = totals.get(label, (0, 0))
                totals[label] = (w + int((rm.labels[m] == WEAK).sum()), n + int(m.sum()))
        if args.pred_depth_dir is not None:
            path = Path(args.pred_depth_dir) / "depth" / f"{t:03d}.pgm16"
            if not path.exists():
                raise CliError(MISSING, f"no predicted depth for view {t} at {path}")
            pred = read_depth_pgm(path)
            for name, label in (("obs", 1), ("weak", WEAK)):
                m = rm.labels == label
                row[f"{name}_delta1"] = delta1(pred, bundle.depths[t], m)
                row[f"{name}_absrel"] = absrel(pred, bundle.depths[t], m)
        rows.append(row)
    summary = {LABEL_NAMES[k]: (w / n if n else None) for k, (w, n) in totals.items()}
    write_metrics_csv(out / "diag.csv", rows, {"views": views, "thresholds": cfg.diag.to_dict(),
                                               "weak_fraction_by_surface": summary})
    for r in rows:
        print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    if summary:
        print("weak fraction by surface: " + ", ".join(f"{k}={v:.3f}" for k, v in summary.items() if v is not None))
    return OK


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    suites = gradsuite.SUITES if args.suite == "all" else (args.suite,)

    def report(r):
        status = "ok  " if r.passed else "FAIL"
        note = f"  ({r.note})" if r.note else ""
        print(f"{status} {r.suite:<7} {r.name:<28} worst rel err {r.error:.3e}  tol {r.tol:.0e}{note}", flush=True)

    results = gradsuite.run(suites, report)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}")
        return CHECK_FAILED
    print(f"all {len(results)} gradient checks passed")
    return OK


COMMANDS = {"gen": cmd_gen, "train1": cmd_train1, "train2": cmd_train2, "render": cmd_render, "eval": cmd_eval,
            "diag": cmd_diag, "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aerialsplat", description="Sparse aerial Gaussian reconstruction toolkit")
    p.add_argument("--seed", type=int, default=None, help="override every seed in the configuration")
    p.add_argument("--threads", type=int, default=None, help="cap compiled-kernel threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a toy city dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--views", type=int, default=None, help="number of trajectory views")

    for name in ("train1", "train2"):
        t = sub.add_parser(name, help=f"stage-{name[-1]} training")
        t.add_argument("--config")
        t.add_argument("--data", required=True)
        t.add_argument("--out", required=True)
        t.add_argument("--steps", type=int, default=None)
        t.add_argument("--init", default=None, help="stage-1 checkpoint (train2)")

    r = sub.add_parser("render", help="feed-forward reconstruction and rendering")
    r.add_argument("--config")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--views", default=None, help="comma-separated context view indices")
    r.add_argument("--targets", default=None, help="comma-separated views to render (default: held-out targets)")
    r.add_argument("--mode", choices=("scaffold", "full"), default="full")
    r.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="held-out metrics for a checkpoint or a directory of predicted images")
    e.add_argument("--config")
    e.add_argument("--ckpt", default=None)
    e.add_argument("--pred-dir", default=None)
    e.add_argument("--data", required=True)
    e.add_argument("--views", default=None)
    e.add_argument("--targets", default=None)
    e.add_argument("--mode", choices=("scaffold", "full"), default="full")
    e.add_argument("--out", required=True)

    d = sub.add_parser("diag", help="observed / weakly constrained region diagnostics")
    d.add_argument("--config")
    d.add_argument("--data", required=True)
    d.add_argument("--views", default=None)
    d.add_argument("--targets", default=None)
    d.add_argument("--pred-depth-dir", default=None)
    d.add_argument("--out", required=True)

    c = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    c.add_argument("--suite", choices=gradsuite.SUITES + ("all",), default="all")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors, which matches the config code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        import numba
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return CONFIG_ERROR
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        if args.command == "eval" and (args.ckpt is None) == (args.pred_dir is None):
            raise CliError(CONFIG_ERROR, "eval needs exactly one of --ckpt or --pred-dir")
        cfg = RunConfig.load(getattr(args, "config", None)).with_seed(args.seed)
        return COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return MISSING
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return IO_ERROR
