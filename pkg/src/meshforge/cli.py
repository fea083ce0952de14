"""Command-line front end.

Subcommands: generate, render, gradcheck, select-primitive.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import ast
import os
import sys
from dataclasses import fields

import numpy as np

from .errors import MeshforgeError, ParameterError
from .optimize import RunConfig

CONFIG_ENV_URL = "MESHFORGE_SCORER_URL"


def load_config_file(path) -> dict:
    """key = value lines; values use Python literal syntax; # comments."""
    values = {}
    valid = {f.name: f.type for f in fields(RunConfig)}
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{ln}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in valid:
                raise ParameterError(f"{path}:{ln}: unknown key {key!r}")
            try:
                values[key] = ast.literal_eval(value.strip())
            except (ValueError, SyntaxError):
                raise ParameterError(f"{path}:{ln}: bad value for {key!r}") from None
    return values


def build_run_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(load_config_file(args.config))
    overrides = {
        "scorer": args.scorer,
        "prompt": args.prompt,
        "primitive": args.primitive,
        "level": args.level,
        "depth": args.depth,
        "iterations": args.iters,
        "views_per_iter": args.views,
        "resolution": args.res,
        "texture_size": args.texture_size,
        "lambda0": args.lambda0,
        "lr_vertices": args.lr_vertices,
        "lr_texture": args.lr_texture,
        "lr_normal": args.lr_normal,
        "sigma": args.sigma,
        "seed": args.seed,
        "distance": args.distance,
        "select_views": args.select_views,
        "checkpoint_every": args.checkpoint_every,
        "out_dir": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if args.no_bg_aug:
        values["bg_aug"] = False
    if args.no_fov_aug:
        values["fov_aug"] = False
    if args.no_offset_aug:
        values["offset_aug"] = False
    if args.learn_background:
        values["learn_background"] = True
    if not values.get("scorer") and os.environ.get(CONFIG_ENV_URL):
        values["scorer"] = "remote:" + os.environ[CONFIG_ENV_URL]
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def cmd_generate(args) -> int:
    try:
        cfg = build_run_config(args)
    except (MeshforgeError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        from .optimize import run

        out, history = run(cfg)
    except MeshforgeError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return 1
    final = history[-1][1] if history else float("nan")
    print(f"wrote assets to {out} ({len(history)} iterations, final loss {final:.6f})")
    return 0


def _load_saved_maps(model_dir):
    from PIL import Image as PILImage

    from .raster import TexelMap

    def logits_of(path):
        arr = np.asarray(PILImage.open(path).convert("RGB"), dtype=np.float64) / 255.0
        arr = np.clip(arr, 1.0 / 512.0, 1.0 - 1.0 / 512.0)
        return np.log(arr / (1.0 - arr))

    wrap_u = False
    config_path = os.path.join(model_dir, "config.txt")
    if os.path.exists(config_path):
        snapshot = load_config_file(config_path)
        wrap_u = snapshot.get("primitive", "") == "sphere"

    tex = TexelMap(logits_of(os.path.join(model_dir, "texture.png")), "color",
                   wrap_u=wrap_u)
    png = np.asarray(
        PILImage.open(os.path.join(model_dir, "normal.png")).convert("RGB"),
        dtype=np.float64,
    ) / 255.0
    n = 2.0 * png - 1.0
    raw = np.empty_like(n)
    half = np.clip((n[..., 0] + 1.0) / 2.0, 1e-4, 1.0 - 1e-4)
    raw[..., 0] = np.log(half / (1.0 - half))
    half = np.clip((n[..., 1] + 1.0) / 2.0, 1e-4, 1.0 - 1e-4)
    raw[..., 1] = np.log(half / (1.0 - half))
    z = np.clip(n[..., 2], 1e-4, 1.0 - 1e-4)
    raw[..., 2] = np.log(z / (1.0 - z))
    nrm = TexelMap(raw, "normal", wrap_u=wrap_u)
    return tex, nrm


def cmd_render(args) -> int:
    if not (0.0 <= args.elevation <= 100.0):
        print("render error: elevation must be in [0, 100]", file=sys.stderr)
        return 2
    obj_path = os.path.join(args.model_dir, "model.obj")
    for needed in (obj_path, os.path.join(args.model_dir, "texture.png"),
                   os.path.join(args.model_dir, "normal.png")):
        if not os.path.exists(needed):
            print(f"render error: missing asset {needed}", file=sys.stderr)
            return 2
    try:
        from PIL import Image as PILImage

        from .cameras import BackgroundSpec, ViewSample, camera_pose
        from .mesh import load_obj
        from .raster import RenderConfig, render

        mesh = load_obj(obj_path)
        tex, nrm = _load_saved_maps(args.model_dir)
        view = ViewSample(args.azimuth, args.elevation, args.fov, args.distance,
                          np.zeros(2), BackgroundSpec("solid", 0))
        cfg = RenderConfig(resolution=args.res, sigma=args.sigma)
        img, _ = render(mesh.vertices, mesh.faces, mesh.uvs, mesh.uv_indices,
                        tex, nrm, camera_pose(view), None, cfg)
        if args.alpha_only:
            data = np.clip(np.floor(img.alpha * 255.0 + 0.5), 0, 255).astype(np.uint8)
            PILImage.fromarray(data, "L").save(args.out)
        else:
            data = np.clip(np.floor(img.rgb * 255.0 + 0.5), 0, 255).astype(np.uint8)
            PILImage.fromarray(data, "RGB").save(args.out)
    except MeshforgeError as err:
        print(f"render failed: {err}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    try:
        results = run_suite(args.preset, seed=args.seed)
    except ValueError as err:
        print(f"gradcheck error: {err}", file=sys.stderr)
        return 2
    failures = []
    for name, (err, threshold, ok) in results.items():
        status = "ok" if ok else "FAIL"
        print(f"{name:18s} max-rel-err {err:.3e}  threshold {threshold:.0e}  {status}")
        if not ok:
            failures.append(name)
    if failures:
        print("failed components: " + ", ".join(failures), file=sys.stderr)
        return 1
    return 0


def cmd_select_primitive(args) -> int:
    try:
        cfg = build_run_config(args)
    except (MeshforgeError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        from .cameras import ViewConfig, camera_pose, make_background, sample_view
        from .loss import RemoteScorer, TargetImageScorer
        from .mesh import make_primitive
        from .optimize import load_target_fixture, select_primitive
        from .raster import RenderConfig

        render_cfg = RenderConfig(resolution=cfg.resolution, sigma=cfg.sigma)
        kind, _, arg = cfg.scorer.partition(":")
        if kind == "target":
            targets, cams = load_target_fixture(arg)
            scorer = TargetImageScorer(targets)
            bgs = [np.zeros((cfg.resolution, cfg.resolution, 3)) for _ in cams]
        else:
            scorer = RemoteScorer(arg, cfg.prompt)
            rng = np.random.default_rng(cfg.seed)
            view_cfg = ViewConfig(distance=cfg.distance, fov_jitter=cfg.fov_aug,
                                  offset_jitter=cfg.offset_aug,
                                  background_jitter=cfg.bg_aug)
            cams, bgs = [], []
            for _ in range(cfg.select_views):
                view = sample_view(rng, view_cfg)
                cams.append(camera_pose(view))
                bgs.append(make_background(view.background, cfg.resolution))
        kinds = ("sphere", "cuboid_horizontal", "cuboid_vertical")
        candidates = [make_primitive(k, cfg.level) for k in kinds]
        best, table = select_primitive(candidates, scorer, cams, bgs, cfg.depth,
                                       render_cfg)
        print(f"{'primitive':20s} mean_loss")
        for k, score in zip(kinds, table):
            marker = "  <-- selected" if candidates[kinds.index(k)] is best else ""
            print(f"{k:20s} {score:+.6f}{marker}")
    except MeshforgeError as err:
        print(f"selection failed: {err}", file=sys.stderr)
        return 1
    return 0


def _add_generate_flags(p):
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--scorer", help="target:<dir> or remote:<url>")
    p.add_argument("--prompt", help="text prompt for the remote scorer")
    p.add_argument("--primitive", choices=["auto", "sphere", "cuboid_horizontal",
                                           "cuboid_vertical"])
    p.add_argument("--level", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--views", type=int, help="views per iteration (prompt mode)")
    p.add_argument("--res", type=int)
    p.add_argument("--texture-size", type=int, dest="texture_size")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lr-vertices", type=float, dest="lr_vertices")
    p.add_argument("--lr-texture", type=float, dest="lr_texture")
    p.add_argument("--lr-normal", type=float, dest="lr_normal")
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--distance", type=float)
    p.add_argument("--select-views", type=int, dest="select_views")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--out", help="output directory")
    p.add_argument("--learn-background", action="store_true",
                   help="optimize a solid background color instead of sampling")
    p.add_argument("--no-bg-aug", action="store_true")
    p.add_argument("--no-fov-aug", action="store_true")
    p.add_argument("--no-offset-aug", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="meshforge",
                                     description="text/image guided 3D asset generation")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="optimize an asset")
    _add_generate_flags(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("render", help="render saved assets from one view")
    r.add_argument("model_dir")
    r.add_argument("--azimuth", type=float, default=0.0)
    r.add_argument("--elevation", type=float, default=15.0)
    r.add_argument("--fov", type=float, default=45.0)
    r.add_argument("--distance", type=float, default=5.0)
    r.add_argument("--res", type=int, default=224)
    r.add_argument("--sigma", type=float, default=0.02)
    r.add_argument("--alpha-only", action="store_true")
    r.add_argument("--out", default="render.png")
    r.set_defaults(func=cmd_render)

    c = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    c.add_argument("preset", nargs="?", default="small")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("select-primitive", help="score starting primitives (dry run)")
    _add_generate_flags(s)
    s.set_defaults(func=cmd_select_primitive)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
