"""Optimization driver: Adam over {control vertices, texture, normal map},
primitive selection, the main loop, and versioned binary checkpoints."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .cameras import (
    BackgroundSpec,
    ViewConfig,
    ViewSample,
    camera_pose,
    make_background,
    sample_view,
)
from .errors import OptimizationAbort, ParameterError
from .loss import LambdaSchedule, LaplacianEnergy, lambda_step, total_objective
from .mesh import ControlMesh, make_primitive, save_assets
from .raster import RenderConfig, TexelMap
from .subdiv import build_operator

PARAM_GROUPS = ("vertices", "texture", "normal_map")

CHECKPOINT_MAGIC = b"MFCHKPT\n"
CHECKPOINT_VERSION = 1


@dataclass
class RunConfig:
    scorer: str = ""                 # "target:<dir>" or "remote:<url>"
    prompt: str = ""
    primitive: str = "auto"          # or explicit kind
    level: int = 2
    depth: int = 2
    iterations: int = 2000
    views_per_iter: int = 4
    resolution: int = 224
    texture_size: int = 512
    lambda0: float = 30.0
    lr_vertices: float = 1e-2
    lr_texture: float = 1e-2
    lr_normal: float = 5e-3
    sigma: float = 0.02
    seed: int = 0
    distance: float = 5.0
    bg_aug: bool = True
    fov_aug: bool = True
    offset_aug: bool = True
    learn_background: bool = False
    lr_background: float = 1e-2
    select_views: int = 8
    checkpoint_every: int = 100
    out_dir: str = "out"

    def validate(self):
        if self.iterations < 0:
            raise ParameterError("iterations must be >= 0")
        if self.views_per_iter < 1:
            raise ParameterError("views_per_iter must be >= 1")
        if not self.scorer:
            raise ParameterError("a scorer must be selected (target:<dir> or remote:<url>)")
        kind = self.scorer.split(":", 1)[0]
        if kind not in ("target", "remote"):
            raise ParameterError(f"unknown scorer kind {kind!r}")
        if kind == "remote" and not self.prompt:
            raise ParameterError("remote scorer requires a prompt")
        ts = self.texture_size
        if ts < 16 or ts > 1024 or (ts & (ts - 1)) != 0:
            raise ParameterError("texture_size must be a power of two in [16, 1024]")


@dataclass
class AdamState:
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, grads: dict, params: dict, lrs: dict) -> None:
    """One Adam update, in place, with bias correction and per-group rates."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise OptimizationAbort(f"non-finite gradient in parameter group '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] *= state.beta1
        state.m[name] += (1.0 - state.beta1) * g
        state.v[name] *= state.beta2
        state.v[name] += (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p -= lrs[name] * m_hat / (np.sqrt(v_hat) + state.eps)


def initialize_parameters(mesh: ControlMesh, texture_size: int, rng):
    """Control vertices from the primitive; texture logits near mid-gray;
    normal parameters decoding to near-flat normals (mean tilt < 5 degrees)."""
    ts = texture_size
    if ts < 16 or ts > 1024 or (ts & (ts - 1)) != 0:
        raise ParameterError("texture_size must be a power of two in [16, 1024]")
    v0 = mesh.vertices.copy()
    tex = TexelMap(rng.normal(0.0, 0.5, (ts, ts, 3)), "color", wrap_u=mesh.uv_wrap_u)
    nrm_data = np.empty((ts, ts, 3))
    nrm_data[..., :2] = rng.normal(0.0, 0.1, (ts, ts, 2))
    nrm_data[..., 2] = 2.0
    nrm = TexelMap(nrm_data, "normal", wrap_u=mesh.uv_wrap_u)
    return v0, tex, nrm


def neutral_maps(size: int = 32, wrap_u: bool = False):
    """Mid-gray texture and exactly flat normal map (used for selection)."""
    tex = TexelMap(np.zeros((size, size, 3)), "color", wrap_u=wrap_u)
    nrm_data = np.zeros((size, size, 3))
    nrm_data[..., 2] = 2.0
    nrm = TexelMap(nrm_data, "normal", wrap_u=wrap_u)
    return tex, nrm


def select_primitive(candidates, scorer, cameras, backgrounds, depth, render_cfg):
    """Render every candidate with the same neutral maps from the same views
    and return (best_mesh, table of mean losses). Ties keep list order."""
    from .raster import render

    if not candidates:
        raise ParameterError("need at least one candidate")
    table = []
    best = None
    for mesh in candidates:
        op = build_operator(mesh, depth)
        tex, nrm = neutral_maps(wrap_u=mesh.uv_wrap_u)
        refined = op.apply(mesh.vertices)
        images = []
        for cam, bg in zip(cameras, backgrounds):
            img, _ = render(refined, op.refined_faces, op.refined_uvs,
                            op.refined_uv_indices, tex, nrm, cam, bg, render_cfg)
            images.append(img.rgb)
        mean_loss = scorer.score(images, want_grad=False).loss
        table.append(mean_loss)
        if best is None or mean_loss < table[best]:
            best = len(table) - 1
    return candidates[best], table


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, iteration, params, adam, schedule, rng, seed, lrs):
    groups = list(params)
    arrays = [(g, params[g]) for g in groups]
    for g in groups:
        arrays.append((f"adam_m_{g}", adam.m.get(g, np.zeros_like(params[g]))))
        arrays.append((f"adam_v_{g}", adam.v.get(g, np.zeros_like(params[g]))))
    header = {
        "iteration": iteration,
        "groups": groups,
        "seed": seed,
        "adam": {"t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps},
        "lambda": {
            "lambda0": schedule.lambda0,
            "lambda_min": schedule.lambda_min,
            "k": schedule.k,
            "t": schedule.t,
            "current": schedule.current,
        },
        "lrs": lrs,
        "rng_state": rng.bit_generator.state,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ParameterError(f"{path} is not a checkpoint file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            arrays[spec["name"]] = np.frombuffer(
                f.read(count * 8), dtype="<f8"
            ).reshape(shape).copy()
    groups = header.get("groups", list(PARAM_GROUPS))
    params = {g: arrays[g] for g in groups}
    adam = AdamState(
        t=header["adam"]["t"], beta1=header["adam"]["beta1"],
        beta2=header["adam"]["beta2"], eps=header["adam"]["eps"],
        m={g: arrays[f"adam_m_{g}"] for g in groups},
        v={g: arrays[f"adam_v_{g}"] for g in groups},
    )
    lam = header["lambda"]
    schedule = LambdaSchedule(lambda0=lam["lambda0"], k=lam["k"], t=lam["t"],
                              current=lam["current"], lambda_min=lam["lambda_min"])
    rng = np.random.default_rng(0)
    rng.bit_generator.state = header["rng_state"]
    return {
        "iteration": header["iteration"],
        "seed": header["seed"],
        "params": params,
        "adam": adam,
        "schedule": schedule,
        "rng": rng,
        "lrs": header["lrs"],
    }


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------

def run_optimization(operator, laplacian, scorer, view_provider, params, texture,
                     normal_map, adam, schedule, lrs_fn, iterations, render_cfg,
                     rng, seed, out_dir=None, checkpoint_every=0, start_iteration=0,
                     log_rows=None):
    """Core loop shared by the CLI and tests.

    ``view_provider(t, rng)`` yields (cameras, backgrounds) for iteration t;
    ``lrs_fn(t)`` yields the per-group learning rates. Returns loss history
    rows (t, total, similarity, laplacian, lambda).
    """
    history = log_rows if log_rows is not None else []
    ckpt_path = os.path.join(out_dir, "checkpoint.bin") if out_dir else None

    for t in range(start_iteration + 1, iterations + 1):
        cameras, backgrounds = view_provider(t, rng)
        lambda_step(schedule)
        lam = schedule.current
        total, parts, grads = total_objective(
            params["vertices"], texture, normal_map, operator, laplacian,
            scorer, cameras, backgrounds, lam, render_cfg,
            background_logits=params.get("background"),
        )
        if not np.isfinite(total):
            raise OptimizationAbort(f"non-finite loss at iteration {t}")
        lrs = lrs_fn(t)
        adam_step(adam, grads, params, lrs)
        history.append((t, float(total), float(parts["similarity"]),
                        float(parts["laplacian"]), float(lam)))
        if ckpt_path and checkpoint_every and t % checkpoint_every == 0:
            save_checkpoint(ckpt_path, t, params, adam, schedule, rng, seed, lrs)

    if ckpt_path:
        save_checkpoint(ckpt_path, iterations, params, adam, schedule, rng, seed,
                        lrs_fn(max(iterations, 1)))
    return history


def decayed_lrs(cfg: RunConfig, t: int) -> dict:
    """Exponential decay to 10% of the initial rate by the final iteration."""
    frac = 0.1 ** (t / max(1, cfg.iterations))
    lrs = {
        "vertices": cfg.lr_vertices * frac,
        "texture": cfg.lr_texture * frac,
        "normal_map": cfg.lr_normal * frac,
    }
    if cfg.learn_background:
        lrs["background"] = cfg.lr_background * frac
    return lrs


def load_target_fixture(dir_path):
    """Fixture layout: cameras.txt rows '<png> <azimuth> <elevation> <fov> <distance>'
    next to the referenced target images."""
    from PIL import Image as PILImage

    cameras_file = os.path.join(dir_path, "cameras.txt")
    if not os.path.exists(cameras_file):
        raise ParameterError(f"missing {cameras_file}")
    targets, cams = [], []
    with open(cameras_file) as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ParameterError(f"bad camera line: {line!r}")
            name, az, el, fov, dist = parts
            img = np.asarray(
                PILImage.open(os.path.join(dir_path, name)).convert("RGB"),
                dtype=np.float64,
            ) / 255.0
            targets.append(img)
            view = ViewSample(float(az), float(el), float(fov), float(dist),
                              np.zeros(2), BackgroundSpec("solid", 0))
            cams.append(camera_pose(view))
    if not targets:
        raise ParameterError(f"no targets listed in {cameras_file}")
    return targets, cams


def write_loss_log(path, history):
    with open(path, "w") as f:
        f.write("iter,loss_total,loss_sim,loss_lap,lambda_t\n")
        for t, total, sim, lap, lam in history:
            f.write(f"{t},{total!r},{sim!r},{lap!r},{lam!r}\n")


def write_config_snapshot(path, cfg: RunConfig):
    with open(path, "w") as f:
        for key, value in sorted(asdict(cfg).items()):
            f.write(f"{key} = {value!r}\n")


def run(cfg: RunConfig):
    """Full pipeline: primitive selection, optimization, asset export.

    Returns (out_dir, history). In target mode every fixture view is rendered
    each iteration; in remote (prompt) mode ``views_per_iter`` views are drawn
    from the view distribution per iteration.
    """
    from .loss import RemoteScorer, TargetImageScorer

    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    render_cfg = RenderConfig(resolution=cfg.resolution, sigma=cfg.sigma)
    view_cfg = ViewConfig(
        distance=cfg.distance, fov_jitter=cfg.fov_aug,
        offset_jitter=cfg.offset_aug, background_jitter=cfg.bg_aug,
    )

    kind, _, arg = cfg.scorer.partition(":")
    target_mode = kind == "target"
    if target_mode:
        targets, fixture_cams = load_target_fixture(arg)
        if {t.shape for t in targets} != {(cfg.resolution, cfg.resolution, 3)}:
            raise ParameterError(
                f"target images must be {cfg.resolution}x{cfg.resolution} RGB"
            )
        scorer = TargetImageScorer(targets)
        black = [np.zeros((cfg.resolution, cfg.resolution, 3)) for _ in targets]

        def view_provider(t, _rng):
            return fixture_cams, black

        select_cams, select_bgs = fixture_cams, black
    else:
        scorer = RemoteScorer(arg, cfg.prompt)
        scorer.prompt_context()

        def sample_cams(n, local_rng):
            cams, bgs = [], []
            for _ in range(n):
                view = sample_view(local_rng, view_cfg)
                cams.append(camera_pose(view))
                bgs.append(make_background(view.background, cfg.resolution))
            return cams, bgs

        def view_provider(t, local_rng):
            return sample_cams(cfg.views_per_iter, local_rng)

        select_cams, select_bgs = sample_cams(cfg.select_views, rng)

    if cfg.primitive == "auto":
        candidates = [make_primitive(k, cfg.level) for k in
                      ("sphere", "cuboid_horizontal", "cuboid_vertical")]
        mesh, _ = select_primitive(candidates, scorer, select_cams, select_bgs,
                                   cfg.depth, render_cfg)
    else:
        mesh = make_primitive(cfg.primitive, cfg.level)

    operator = build_operator(mesh, cfg.depth)
    laplacian = LaplacianEnergy(operator.refined_faces, operator.n_refined)
    v0, texture, normal_map = initialize_parameters(mesh, cfg.texture_size, rng)
    params = {"vertices": v0, "texture": texture.data, "normal_map": normal_map.data}
    if cfg.learn_background:
        params["background"] = rng.normal(0.0, 0.5, 3)
    adam = AdamState()
    schedule = LambdaSchedule(lambda0=cfg.lambda0)

    write_config_snapshot(os.path.join(cfg.out_dir, "config.txt"), cfg)

    history = []
    try:
        run_optimization(
            operator, laplacian, scorer, view_provider, params, texture,
            normal_map, adam, schedule, lambda t: decayed_lrs(cfg, t),
            cfg.iterations, render_cfg, rng, cfg.seed, out_dir=cfg.out_dir,
            checkpoint_every=cfg.checkpoint_every, log_rows=history,
        )
    finally:
        write_loss_log(os.path.join(cfg.out_dir, "loss.csv"), history)
    refined = operator.apply(params["vertices"])
    save_assets(operator.refined_mesh(refined), refined, texture, normal_map, cfg.out_dir)
    return cfg.out_dir, history


def count_inverted_faces(vertices, faces, center=None):
    """Faces whose outward orientation flips relative to the star center."""
    v = np.asarray(vertices)
    if center is None:
        center = v.mean(axis=0)
    a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    normal = np.cross(b - a, c - a)
    centroid = (a + b + c) / 3.0 - center
    return int(np.sum(np.einsum("ij,ij->i", normal, centroid) < 0.0))
