"""Finite-difference verification suites exposed to tests and the CLI.

Each component compares hand-written reverse-mode gradients against central
differences on a small fixed scene and reports the worst relative error
(norm of the difference over the larger norm).
"""

from __future__ import annotations

import numpy as np

from . import loss as loss_mod
from .cameras import BackgroundSpec, ViewSample, camera_pose
from .mesh import make_primitive
from .raster import RenderConfig, TexelMap, render, render_backward
from .subdiv import build_operator

THRESHOLDS = {
    "subdiv-adjoint": 1e-6,
    "laplacian": 1e-6,
    "raster-texels": 1e-4,
    "raster-vertices": 1e-2,
    "objective": 2e-2,
}


def _rel(fd, an):
    fd = np.asarray(fd, dtype=np.float64).ravel()
    an = np.asarray(an, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-30)
    return float(np.linalg.norm(fd - an) / denom)


def _camera(azimuth=25.0, elevation=18.0, offset=(0.1, -0.05)):
    view = ViewSample(azimuth, elevation, 45.0, 5.0, np.asarray(offset, float),
                      BackgroundSpec("fixed", 0))
    return camera_pose(view)


def _flat_normal(size, noise, rng):
    data = np.zeros((size, size, 3))
    data[..., 2] = 2.0
    if noise:
        data[..., :2] = rng.normal(0.0, noise, (size, size, 2))
    return data


def check_subdiv_adjoint(seed=0):
    rng = np.random.default_rng(seed)
    mesh = make_primitive("sphere", 0)
    op = build_operator(mesh, 1)
    v0 = mesh.vertices + 0.05 * rng.normal(size=mesh.vertices.shape)
    w = rng.normal(size=(op.n_refined, 3))

    def f(v):
        out = op.apply(v)
        return float(np.sum(w * out * out) / 2.0)

    grad = op.apply_adjoint(w * op.apply(v0))
    h = 1e-5
    fd = np.zeros_like(v0)
    for i in range(v0.shape[0]):
        for j in range(3):
            vp, vm = v0.copy(), v0.copy()
            vp[i, j] += h
            vm[i, j] -= h
            fd[i, j] = (f(vp) - f(vm)) / (2 * h)
    return _rel(fd, grad)


def check_laplacian(seed=0):
    rng = np.random.default_rng(seed)
    mesh = make_primitive("sphere", 0)
    lap = loss_mod.LaplacianEnergy(mesh.faces, mesh.n_vertices)
    v = mesh.vertices + rng.normal(0, 0.2, mesh.vertices.shape)
    grad = lap.grad(v)
    h = 1e-6
    fd = np.zeros_like(v)
    for i in range(v.shape[0]):
        for j in range(3):
            vp, vm = v.copy(), v.copy()
            vp[i, j] += h
            vm[i, j] -= h
            fd[i, j] = (lap.value(vp) - lap.value(vm)) / (2 * h)
    return _rel(fd, grad)


def _raster_scene(seed, texture_size=32, resolution=64, sigma=0.03):
    rng = np.random.default_rng(seed)
    mesh = make_primitive("sphere", 0)
    tex = TexelMap(rng.normal(0, 0.5, (texture_size, texture_size, 3)), "color",
                   wrap_u=True)
    nrm = TexelMap(_flat_normal(texture_size, 0.1, rng), "normal", wrap_u=True)
    cam = _camera()
    cfg = RenderConfig(resolution=resolution, sigma=sigma)
    bg = rng.uniform(0, 1, (resolution, resolution, 3))
    w = rng.normal(size=(resolution, resolution, 3))
    return mesh, tex, nrm, cam, cfg, bg, w


def check_raster_texels(seed=0):
    mesh, tex, nrm, cam, cfg, bg, w = _raster_scene(seed)

    def scalar(tex_data, nrm_data):
        t = TexelMap(tex_data, "color", wrap_u=True)
        n = TexelMap(nrm_data, "normal", wrap_u=True)
        img, _ = render(mesh.vertices, mesh.faces, mesh.uvs, mesh.uv_indices,
                        t, n, cam, bg, cfg)
        return float(np.sum(w * img.rgb))

    _, tape = render(mesh.vertices, mesh.faces, mesh.uvs, mesh.uv_indices,
                     tex, nrm, cam, bg, cfg)
    grads = render_backward(tape, w)
    h = 1e-3
    idx = [(i, j, c) for i in range(0, 32, 9) for j in range(0, 32, 9) for c in range(3)]
    worst = 0.0
    for data, key in ((tex.data, "texture"), (nrm.data, "normal_map")):
        fd = np.zeros(len(idx))
        an = np.zeros(len(idx))
        for k, (i, j, c) in enumerate(idx):
            dp, dm = data.copy(), data.copy()
            dp[i, j, c] += h
            dm[i, j, c] -= h
            if key == "texture":
                fd[k] = (scalar(dp, nrm.data) - scalar(dm, nrm.data)) / (2 * h)
            else:
                fd[k] = (scalar(tex.data, dp) - scalar(tex.data, dm)) / (2 * h)
            an[k] = grads[key][i, j, c]
        worst = max(worst, _rel(fd, an))
    return worst


def check_raster_vertices(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0

    # single triangle, mean pixel intensity, h = 1e-3
    tri_v = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.0, 0.8, -0.1]])
    tri_f = np.array([[0, 1, 2]], np.int32)
    tri_uv = np.array([[0.1, 0.1], [0.9, 0.2], [0.5, 0.9]])
    tri_uvi = np.array([[0, 1, 2]], np.int32)
    tex = TexelMap(rng.normal(0, 0.8, (8, 8, 3)), "color")
    nrm = TexelMap(_flat_normal(8, 0.0, rng), "normal")
    cam = _camera(0.0, 0.0, (0.0, 0.0))
    cfg = RenderConfig(resolution=64, sigma=0.01)

    def tri_loss(v):
        img, _ = render(v, tri_f, tri_uv, tri_uvi, tex, nrm, cam, None, cfg)
        return float(img.rgb.mean())

    _, tape = render(tri_v, tri_f, tri_uv, tri_uvi, tex, nrm, cam, None, cfg)
    grad = render_backward(tape, np.full((64, 64, 3), 1.0 / (64 * 64 * 3)))["vertices"]
    h = 1e-3
    fd = np.zeros_like(tri_v)
    for i in range(3):
        for j in range(3):
            vp, vm = tri_v.copy(), tri_v.copy()
            vp[i, j] += h
            vm[i, j] -= h
            fd[i, j] = (tri_loss(vp) - tri_loss(vm)) / (2 * h)
    worst = max(worst, _rel(fd, grad))

    # icosahedron, random-weight loss, h = 1e-4
    mesh, tex, nrm, cam, cfg, bg, w = _raster_scene(seed + 1)
    v0 = mesh.vertices

    def ico_loss(v):
        img, _ = render(v, mesh.faces, mesh.uvs, mesh.uv_indices, tex, nrm, cam, bg, cfg)
        return float(np.sum(w * img.rgb))

    _, tape = render(v0, mesh.faces, mesh.uvs, mesh.uv_indices, tex, nrm, cam, bg, cfg)
    grad = render_backward(tape, w)["vertices"]
    h = 1e-4
    fd = np.zeros_like(v0)
    for i in range(v0.shape[0]):
        for j in range(3):
            vp, vm = v0.copy(), v0.copy()
            vp[i, j] += h
            vm[i, j] -= h
            fd[i, j] = (ico_loss(vp) - ico_loss(vm)) / (2 * h)
    worst = max(worst, _rel(fd, grad))
    return worst


def check_objective(seed=0):
    rng = np.random.default_rng(seed)
    mesh = make_primitive("sphere", 0)
    op = build_operator(mesh, 0)
    lap = loss_mod.LaplacianEnergy(op.refined_faces, op.n_refined)
    tex = TexelMap(rng.normal(0, 0.5, (16, 16, 3)), "color", wrap_u=True)
    nrm = TexelMap(_flat_normal(16, 0.1, rng), "normal", wrap_u=True)
    cams = [_camera(0.0, 15.0, (0, 0)), _camera(140.0, 25.0, (0, 0))]
    res = 48
    bgs = [np.full((res, res, 3), 0.25) for _ in cams]
    cfg = RenderConfig(resolution=res, sigma=0.03)

    refined = op.apply(mesh.vertices * 1.08)
    targets = []
    for cam, bg in zip(cams, bgs):
        img, _ = render(refined, op.refined_faces, op.refined_uvs,
                        op.refined_uv_indices, tex, nrm, cam, bg, cfg)
        targets.append(img.rgb)
    scorer = loss_mod.TargetImageScorer(targets)
    lam = 0.7
    v0 = mesh.vertices

    def objective(v, tex_data, nrm_data):
        t = TexelMap(tex_data, "color", wrap_u=True)
        n = TexelMap(nrm_data, "normal", wrap_u=True)
        total, _, _ = loss_mod.total_objective(v, t, n, op, lap, scorer, cams, bgs,
                                               lam, cfg)
        return total

    _, _, grads = loss_mod.total_objective(v0, tex, nrm, op, lap, scorer, cams, bgs,
                                           lam, cfg)
    h = 1e-4
    fd = np.zeros_like(v0)
    for i in range(v0.shape[0]):
        for j in range(3):
            vp, vm = v0.copy(), v0.copy()
            vp[i, j] += h
            vm[i, j] -= h
            fd[i, j] = (objective(vp, tex.data, nrm.data)
                        - objective(vm, tex.data, nrm.data)) / (2 * h)
    worst = _rel(fd, grads["vertices"])

    h = 1e-3
    idx = [(i, j, c) for i in range(0, 16, 6) for j in range(0, 16, 6) for c in range(3)]
    fd_t = np.zeros(len(idx))
    an_t = np.zeros(len(idx))
    for k, (i, j, c) in enumerate(idx):
        dp, dm = tex.data.copy(), tex.data.copy()
        dp[i, j, c] += h
        dm[i, j, c] -= h
        fd_t[k] = (objective(v0, dp, nrm.data) - objective(v0, dm, nrm.data)) / (2 * h)
        an_t[k] = grads["texture"][i, j, c]
    return max(worst, _rel(fd_t, an_t))


CHECKS = {
    "subdiv-adjoint": check_subdiv_adjoint,
    "laplacian": check_laplacian,
    "raster-texels": check_raster_texels,
    "raster-vertices": check_raster_vertices,
    "objective": check_objective,
}


def run_suite(preset: str = "small", seed: int = 0):
    """Run every component; returns {name: (error, threshold, passed)}."""
    if preset != "small":
        raise ValueError(f"unknown preset {preset!r}")
    results = {}
    for name, fn in CHECKS.items():
        err = fn(seed)
        results[name] = (err, THRESHOLDS[name], err < THRESHOLDS[name])
    return results
