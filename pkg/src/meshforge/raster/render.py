"""Differentiable soft rasterizer.

Forward: perspective projection, front-most triangle per pixel with
perspective-correct UV interpolation, bilinear texture sampling,
tangent-space normal mapping, Lambertian shading, and soft silhouette
coverage alpha = sigmoid(signed_distance / sigma) composited over a
background. Pixels just outside the silhouette are shaded with the color of
the nearest boundary point so coverage blending stays continuous across the
edge.

Backward: exact reverse-mode gradients of that computation for vertex
positions, texture parameters and normal-map parameters (and the background),
with the usual almost-everywhere caveats at visibility switches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ParameterError
from . import kernels
from .texel import TexelMap, bilinear_backward, bilinear_batch

_EPS_AREA = 1e-14


@dataclass
class RenderConfig:
    resolution: int = 224
    sigma: float = 0.02                       # soft-edge width, image-height units
    lights: tuple = (((1.0, 1.0, 1.0), 0.5), ((-1.0, 0.5, -1.0), 0.35))
    ambient: float = 0.35
    gamma: bool = False
    near: float = 0.05
    alpha_min: float = 1e-7

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ParameterError("sigma must be positive")
        if any(i < 0.0 for _, i in self.lights) or self.ambient < 0.0:
            raise ParameterError("light intensities must be nonnegative")


@dataclass
class Image:
    rgb: np.ndarray     # (H, W, 3) in [0, 1]
    alpha: np.ndarray   # (H, W) soft coverage

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@dataclass
class RenderTape:
    """Everything the reverse pass needs from one forward render."""

    cfg: RenderConfig
    n_vertices: int
    faces: np.ndarray
    uv_indices: np.ndarray
    uvs: np.ndarray
    texture: TexelMap
    normal_map: TexelMap
    # camera
    right: np.ndarray
    cam_up: np.ndarray
    fwd: np.ndarray
    tanf: float
    # projection
    xn: np.ndarray
    yn: np.ndarray
    depth: np.ndarray
    vertex_valid: np.ndarray
    screen: np.ndarray
    # frames
    frames: np.ndarray
    frame_aux: dict
    # silhouette
    seg_p: np.ndarray
    seg_q: np.ndarray
    seg_face: np.ndarray
    seg_slot_p: np.ndarray
    seg_slot_q: np.ndarray
    # pixels
    covered: np.ndarray
    sdist: np.ndarray
    seg_idx: np.ndarray
    tpar: np.ndarray
    alpha: np.ndarray
    background: np.ndarray
    # shaded pixel bundle
    py: np.ndarray
    px: np.ndarray
    is_ext: np.ndarray
    fid: np.ndarray
    bary: np.ndarray
    corner_depth: np.ndarray
    inv_sum: np.ndarray
    beta: np.ndarray
    uv_pix: np.ndarray
    tex_cache: tuple
    nrm_cache: tuple
    tex_decoded: np.ndarray
    nrm_decoded: np.ndarray
    albedo: np.ndarray
    m_tan: np.ndarray
    w_vec: np.ndarray
    w_norm: np.ndarray
    n_world: np.ndarray
    ndl: np.ndarray
    lum: np.ndarray
    shaded: np.ndarray
    rgb_pre: np.ndarray


def soft_coverage(sdist, sigma: float):
    """Smooth monotone coverage: sigmoid(sdist / sigma)."""
    if sigma <= 0.0:
        raise ParameterError("sigma must be positive")
    return expit(np.asarray(sdist, dtype=np.float64) / sigma)


def camera_frame(camera):
    eye = np.asarray(camera.position, dtype=np.float64)
    target = np.asarray(camera.look_at, dtype=np.float64)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ParameterError("degenerate camera: position equals look-at point")
    fwd = fwd / norm
    up = np.asarray(camera.up, dtype=np.float64)
    right = np.cross(fwd, up)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-9:
        raise ParameterError("degenerate camera: up parallel to view direction")
    right = right / rnorm
    cam_up = np.cross(right, fwd)
    return eye, right, cam_up, fwd


def compute_tangent_frames(vertices, faces, uvs, uv_indices):
    """Per-face orthonormal (tangent, bitangent, normal) columns from UV derivatives.

    Degenerate UV triangles fall back to an arbitrary frame orthogonal to the
    geometric normal; the count of such faces is reported for diagnostics.
    """
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    uv0 = uvs[uv_indices[:, 0]]
    duv1 = uvs[uv_indices[:, 1]] - uv0
    duv2 = uvs[uv_indices[:, 2]] - uv0
    det = duv1[:, 0] * duv2[:, 1] - duv1[:, 1] * duv2[:, 0]

    c = np.cross(e1, e2)
    cn = np.linalg.norm(c, axis=1)
    cn_safe = np.maximum(cn, 1e-30)
    ng = c / cn_safe[:, None]

    degenerate = np.abs(det) < 1e-12
    det_safe = np.where(degenerate, 1.0, det)
    k1 = duv2[:, 1] / det_safe
    k2 = -duv1[:, 1] / det_safe
    traw = k1[:, None] * e1 + k2[:, None] * e2

    # fallback: cross the least-aligned axis with the normal
    axis_pick = np.argmin(np.abs(ng), axis=1)
    axis = np.zeros_like(ng)
    axis[np.arange(len(ng)), axis_pick] = 1.0
    fallback = np.cross(axis, ng)
    traw = np.where(degenerate[:, None], fallback, traw)

    tgs = traw - np.sum(traw * ng, axis=1, keepdims=True) * ng
    tn = np.linalg.norm(tgs, axis=1)
    # UV tangent collapsed onto the normal: same fallback
    collapsed = (tn < 1e-12) & ~degenerate
    if collapsed.any():
        degenerate = degenerate | collapsed
        traw = np.where(collapsed[:, None], fallback, traw)
        tgs = traw - np.sum(traw * ng, axis=1, keepdims=True) * ng
        tn = np.linalg.norm(tgs, axis=1)
    tn_safe = np.maximum(tn, 1e-30)
    tangent = tgs / tn_safe[:, None]
    bitangent = np.cross(ng, tangent)
    frames = np.stack([tangent, bitangent, ng], axis=2)

    aux = {
        "e1": e1, "e2": e2, "c": c, "cn": cn_safe, "ng": ng,
        "traw": traw, "tgs": tgs, "tn": tn_safe,
        "k1": k1, "k2": k2, "axis": axis,
        "degenerate": degenerate, "tangent": tangent, "bitangent": bitangent,
        "degenerate_count": int(degenerate.sum()),
    }
    return frames, aux


def _as_background(background, height, width):
    if background is None:
        return np.zeros((height, width, 3))
    if hasattr(background, "rgb"):
        background = background.rgb
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim == 1:
        return np.broadcast_to(bg, (height, width, 3)).copy()
    if bg.shape != (height, width, 3):
        raise ParameterError(f"background shape {bg.shape} != ({height}, {width}, 3)")
    return bg.copy()


def _silhouette_segments(faces, face_ok):
    """Edges with exactly one adjacent visible front face."""
    f_count = len(faces)
    raw = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = np.sort(raw, axis=1)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    face_of = np.tile(np.arange(f_count, dtype=np.int64), 3)
    order = np.argsort(inverse, kind="stable")
    starts = np.searchsorted(inverse[order], np.arange(len(uniq)))
    f0 = face_of[order[starts]]
    f1 = np.full(len(uniq), -1, dtype=np.int64)
    twice = counts >= 2
    f1[twice] = face_of[order[starts[twice] + 1]]

    front0 = face_ok[f0]
    front1 = np.where(f1 >= 0, face_ok[np.maximum(f1, 0)], False)
    sil = front0 != front1
    p = uniq[sil, 0]
    q = uniq[sil, 1]
    sface = np.where(front0[sil], f0[sil], f1[sil])
    fverts = faces[sface]
    slot_p = (fverts == p[:, None]).argmax(axis=1)
    slot_q = (fverts == q[:, None]).argmax(axis=1)
    return p, q, sface.astype(np.int64), slot_p, slot_q


def render(vertices, faces, uvs, uv_indices, texture: TexelMap, normal_map: TexelMap,
           camera, background=None, cfg: RenderConfig | None = None):
    """Render one view; returns (Image, RenderTape)."""
    cfg = cfg or RenderConfig()
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    uvs = np.ascontiguousarray(uvs, dtype=np.float64)
    uv_indices = np.ascontiguousarray(uv_indices, dtype=np.int32)
    res = cfg.resolution
    eye, right, cam_up, fwd = camera_frame(camera)
    tanf = math.tan(math.radians(camera.fov) / 2.0)

    rel = vertices - eye
    x = rel @ right
    y = rel @ cam_up
    depth = rel @ fwd
    vertex_valid = depth > cfg.near
    depth_safe = np.where(vertex_valid, depth, 1.0)
    xn = np.where(vertex_valid, x / (depth_safe * tanf), 0.0)
    yn = np.where(vertex_valid, y / (depth_safe * tanf), 0.0)
    screen = np.stack([(xn + 1.0) / 2.0, (yn + 1.0) / 2.0], axis=1)

    sa = screen[faces[:, 0]]
    sb = screen[faces[:, 1]]
    sc = screen[faces[:, 2]]
    area = (sb[:, 0] - sa[:, 0]) * (sc[:, 1] - sa[:, 1]) - (sb[:, 1] - sa[:, 1]) * (
        sc[:, 0] - sa[:, 0]
    )
    face_ok = (
        vertex_valid[faces[:, 0]]
        & vertex_valid[faces[:, 1]]
        & vertex_valid[faces[:, 2]]
        & (area > _EPS_AREA)
    )

    pix_tri, pix_bary = kernels.coverage_pass(screen, depth, faces, face_ok, res, res)
    covered = pix_tri >= 0

    seg_p, seg_q, seg_face, slot_p, slot_q = _silhouette_segments(faces, face_ok)
    segs = np.concatenate([screen[seg_p], screen[seg_q]], axis=1)
    sdist, seg_idx, tpar = kernels.sdist_pass(segs, covered, res, res)
    alpha = soft_coverage(sdist, cfg.sigma)

    frames, frame_aux = compute_tangent_frames(vertices, faces, uvs, uv_indices)

    ext_near = (~covered) & (seg_idx >= 0) & (alpha > cfg.alpha_min)
    shade_mask = covered | ext_near
    py, px = np.nonzero(shade_mask)
    is_ext = ext_near[py, px]

    fid = np.where(is_ext, seg_face[np.maximum(seg_idx[py, px], 0)], pix_tri[py, px])
    bary = pix_bary[py, px].copy()
    if is_ext.any():
        ext_rows = np.flatnonzero(is_ext)
        sidx = seg_idx[py[ext_rows], px[ext_rows]]
        t = tpar[py[ext_rows], px[ext_rows]]
        b_ext = np.zeros((len(ext_rows), 3))
        b_ext[np.arange(len(ext_rows)), slot_p[sidx]] = 1.0 - t
        b_ext[np.arange(len(ext_rows)), slot_q[sidx]] += t
        bary[ext_rows] = b_ext

    tri = faces[fid]
    corner_depth = depth[tri]
    ratios = bary / corner_depth
    inv_sum = ratios.sum(axis=1)
    beta = ratios / inv_sum[:, None]
    uv_corner = uvs[uv_indices[fid]]
    uv_pix = np.einsum("pk,pkc->pc", beta, uv_corner)

    tex_decoded = texture.decode()
    nrm_decoded = normal_map.decode()
    albedo, tex_cache = bilinear_batch(tex_decoded, uv_pix, texture.wrap_u)
    m_tan, nrm_cache = bilinear_batch(nrm_decoded, uv_pix, normal_map.wrap_u)

    w_vec = np.einsum("pij,pj->pi", frames[fid], m_tan)
    w_norm = np.maximum(np.linalg.norm(w_vec, axis=1), 1e-30)
    n_world = w_vec / w_norm[:, None]

    light_dirs = np.array([d for d, _ in cfg.lights], dtype=np.float64)
    if len(light_dirs):
        light_dirs /= np.linalg.norm(light_dirs, axis=1, keepdims=True)
    light_ints = np.array([i for _, i in cfg.lights], dtype=np.float64)
    ndl = n_world @ light_dirs.T if len(light_dirs) else np.zeros((len(py), 0))
    lum = cfg.ambient + (np.maximum(ndl, 0.0) * light_ints).sum(axis=1)
    shaded = albedo * lum[:, None]

    bg = _as_background(background, res, res)
    rgb = bg.copy()
    a_pix = alpha[py, px]
    rgb[py, px] = a_pix[:, None] * shaded + (1.0 - a_pix[:, None]) * bg[py, px]
    rgb_pre = rgb
    if cfg.gamma:
        rgb = np.maximum(rgb_pre, 0.0) ** (1.0 / 2.2)

    image = Image(rgb=rgb, alpha=alpha)
    tape = RenderTape(
        cfg=cfg, n_vertices=len(vertices), faces=faces, uv_indices=uv_indices, uvs=uvs,
        texture=texture, normal_map=normal_map,
        right=right, cam_up=cam_up, fwd=fwd, tanf=tanf,
        xn=xn, yn=yn, depth=depth_safe, vertex_valid=vertex_valid, screen=screen,
        frames=frames, frame_aux=frame_aux,
        seg_p=seg_p, seg_q=seg_q, seg_face=seg_face, seg_slot_p=slot_p, seg_slot_q=slot_q,
        covered=covered, sdist=sdist, seg_idx=seg_idx, tpar=tpar, alpha=alpha,
        background=bg,
        py=py, px=px, is_ext=is_ext, fid=fid, bary=bary,
        corner_depth=corner_depth, inv_sum=inv_sum, beta=beta, uv_pix=uv_pix,
        tex_cache=tex_cache, nrm_cache=nrm_cache,
        tex_decoded=tex_decoded, nrm_decoded=nrm_decoded,
        albedo=albedo, m_tan=m_tan, w_vec=w_vec, w_norm=w_norm, n_world=n_world,
        ndl=ndl, lum=lum, shaded=shaded, rgb_pre=rgb_pre,
    )
    return image, tape


def _frames_backward(tape, g_frames):
    """Per-face frame gradients back to vertex positions, (n, 3)."""
    aux = tape.frame_aux
    faces = tape.faces
    ng = aux["ng"]
    tangent = aux["tangent"]
    degenerate = aux["degenerate"]

    gt = g_frames[:, :, 0]
    gb = g_frames[:, :, 1]
    gng = g_frames[:, :, 2].copy()

    # bitangent = ng x tangent
    gng += np.cross(tangent, gb)
    gt = gt + np.cross(gb, ng)

    # tangent = tgs / |tgs|
    tn = aux["tn"][:, None]
    gtgs = (gt - np.sum(gt * tangent, axis=1, keepdims=True) * tangent) / tn

    # tgs = traw - (traw . ng) ng
    traw = aux["traw"]
    dot_tn = np.sum(traw * ng, axis=1, keepdims=True)
    dot_g = np.sum(gtgs * ng, axis=1, keepdims=True)
    gtraw = gtgs - dot_g * ng
    gng += -dot_g * traw - dot_tn * gtgs

    # traw: uv-derived (k1 e1 + k2 e2) or fallback cross(axis, ng)
    k1 = aux["k1"][:, None]
    k2 = aux["k2"][:, None]
    reg = ~degenerate
    ge1 = np.where(reg[:, None], k1 * gtraw, 0.0)
    ge2 = np.where(reg[:, None], k2 * gtraw, 0.0)
    gng += np.where(degenerate[:, None], np.cross(gtraw, aux["axis"]), 0.0)

    # ng = c / |c|
    cn = aux["cn"][:, None]
    gc = (gng - np.sum(gng * ng, axis=1, keepdims=True) * ng) / cn

    # c = e1 x e2
    ge1 += np.cross(aux["e2"], gc)
    ge2 += np.cross(gc, aux["e1"])

    g_vertices = np.zeros((tape.n_vertices, 3))
    np.add.at(g_vertices, faces[:, 1], ge1)
    np.add.at(g_vertices, faces[:, 2], ge2)
    np.add.at(g_vertices, faces[:, 0], -(ge1 + ge2))
    return g_vertices


def render_backward(tape: RenderTape, grad_rgb):
    """Reverse pass. Returns gradients for vertices, texture and normal-map
    parameters plus the background image."""
    grad_rgb = np.asarray(grad_rgb, dtype=np.float64)
    res = tape.cfg.resolution
    if grad_rgb.shape != (res, res, 3):
        raise ParameterError(f"grad image shape {grad_rgb.shape} != ({res}, {res}, 3)")

    go = grad_rgb
    if tape.cfg.gamma:
        pre = np.maximum(tape.rgb_pre, 1e-9)
        go = go * (1.0 / 2.2) * pre ** (1.0 / 2.2 - 1.0)

    py, px = tape.py, tape.px
    a_pix = tape.alpha[py, px]
    go_pix = go[py, px]

    g_background = go.copy()
    g_background[py, px] = go_pix * (1.0 - a_pix[:, None])

    g_shaded = go_pix * a_pix[:, None]
    g_alpha = np.sum(go_pix * (tape.shaded - tape.background[py, px]), axis=1)

    # shading chain
    g_albedo = g_shaded * tape.lum[:, None]
    g_lum = np.sum(g_shaded * tape.albedo, axis=1)
    light_dirs = np.array([d for d, _ in tape.cfg.lights], dtype=np.float64)
    if len(light_dirs):
        light_dirs /= np.linalg.norm(light_dirs, axis=1, keepdims=True)
        light_ints = np.array([i for _, i in tape.cfg.lights], dtype=np.float64)
        active = (tape.ndl > 0.0) * light_ints
        g_n = (g_lum[:, None] * active) @ light_dirs
    else:
        g_n = np.zeros_like(tape.n_world)

    # n = w / |w|
    wn = tape.w_norm[:, None]
    g_w = (g_n - np.sum(g_n * tape.n_world, axis=1, keepdims=True) * tape.n_world) / wn

    # w = frames[fid] @ m
    g_m = np.einsum("pij,pi->pj", tape.frames[tape.fid], g_w)
    g_frames = np.zeros_like(tape.frames)
    np.add.at(g_frames, tape.fid, np.einsum("pi,pj->pij", g_w, tape.m_tan))

    # texel scatters + uv position gradients
    g_tex_decoded = np.zeros_like(tape.tex_decoded)
    g_nrm_decoded = np.zeros_like(tape.nrm_decoded)
    guv = bilinear_backward(tape.tex_decoded, tape.tex_cache, g_albedo, g_tex_decoded)
    guv += bilinear_backward(tape.nrm_decoded, tape.nrm_cache, g_m, g_nrm_decoded)

    # uv = sum_k beta_k uv_corner_k
    uv_corner = tape.uvs[tape.uv_indices[tape.fid]]
    g_beta = np.einsum("pc,pkc->pk", guv, uv_corner)

    # beta_k = (b_k / d_k) / sum_j (b_j / d_j)
    s_dot = np.sum(g_beta * tape.beta, axis=1, keepdims=True)
    g_b = (g_beta - s_dot) / (tape.corner_depth * tape.inv_sum[:, None])
    g_d_corner = -g_b * tape.bary / tape.corner_depth

    g_screen = np.zeros((tape.n_vertices, 2))
    g_depth = np.zeros(tape.n_vertices)
    tri = tape.faces[tape.fid]
    np.add.at(g_depth, tri.ravel(), g_d_corner.ravel())

    qx = (px + 0.5) / res
    qy = 1.0 - (py + 0.5) / res

    interior = ~tape.is_ext
    if interior.any():
        rows = np.flatnonzero(interior)
        t_int = tri[rows]
        s0 = tape.screen[t_int[:, 0]]
        s1 = tape.screen[t_int[:, 1]]
        s2 = tape.screen[t_int[:, 2]]
        qxi = qx[rows]
        qyi = qy[rows]
        b_int = tape.bary[rows]
        gb_int = g_b[rows]
        # w_k raw edge functions: b_k = w_k / sum(w); area = sum(w)
        area = (
            (s1[:, 0] - s0[:, 0]) * (s2[:, 1] - s0[:, 1])
            - (s1[:, 1] - s0[:, 1]) * (s2[:, 0] - s0[:, 0])
        )
        g_dot = np.sum(gb_int * b_int, axis=1)
        corners = (s0, s1, s2)
        for k in range(3):
            gw_k = (gb_int[:, k] - g_dot) / area
            nxt = corners[(k + 1) % 3]
            nnx = corners[(k + 2) % 3]
            # d w_k / d corner_(k+1) and d w_k / d corner_(k+2)
            d1 = np.stack([nnx[:, 1] - qyi, qxi - nnx[:, 0]], axis=1)
            d2 = np.stack([qyi - nxt[:, 1], nxt[:, 0] - qxi], axis=1)
            np.add.at(g_screen, t_int[:, (k + 1) % 3], gw_k[:, None] * d1)
            np.add.at(g_screen, t_int[:, (k + 2) % 3], gw_k[:, None] * d2)

    if tape.is_ext.any():
        rows = np.flatnonzero(tape.is_ext)
        sidx = tape.seg_idx[py[rows], px[rows]]
        pv = tape.seg_p[sidx]
        qv = tape.seg_q[sidx]
        slot_p = tape.seg_slot_p[sidx]
        slot_q = tape.seg_slot_q[sidx]
        gb_ext = g_b[rows]
        g_t = gb_ext[np.arange(len(rows)), slot_q] - gb_ext[np.arange(len(rows)), slot_p]
        a_s = tape.screen[pv]
        b_s = tape.screen[qv]
        e = b_s - a_s
        h = np.stack([qx[rows], qy[rows]], axis=1) - a_s
        l2 = np.maximum(np.sum(e * e, axis=1), 1e-24)
        traw = np.sum(h * e, axis=1) / l2
        unclamped = (traw > 0.0) & (traw < 1.0)
        gtc = np.where(unclamped, g_t, 0.0)[:, None]
        dt_da = (-e - h + 2.0 * traw[:, None] * e) / l2[:, None]
        dt_db = (h - 2.0 * traw[:, None] * e) / l2[:, None]
        np.add.at(g_screen, pv, gtc * dt_da)
        np.add.at(g_screen, qv, gtc * dt_db)

    # coverage chain: alpha -> signed distance -> segment endpoints
    sel = tape.seg_idx[py, px] >= 0
    if sel.any():
        rows = np.flatnonzero(sel)
        sidx = tape.seg_idx[py[rows], px[rows]]
        a_r = a_pix[rows]
        g_sd = g_alpha[rows] * a_r * (1.0 - a_r) / tape.cfg.sigma
        sign = np.where(tape.covered[py[rows], px[rows]], 1.0, -1.0)
        pv = tape.seg_p[sidx]
        qv = tape.seg_q[sidx]
        a_s = tape.screen[pv]
        b_s = tape.screen[qv]
        t = tape.tpar[py[rows], px[rows]][:, None]
        closest = a_s + t * (b_s - a_s)
        dvec = np.stack([qx[rows], qy[rows]], axis=1) - closest
        dist = np.maximum(np.linalg.norm(dvec, axis=1), 1e-12)
        dhat = dvec / dist[:, None]
        g_dist = (sign * g_sd)[:, None]
        np.add.at(g_screen, pv, g_dist * (-(1.0 - t)) * dhat)
        np.add.at(g_screen, qv, g_dist * (-t) * dhat)

    # frame gradients to vertices
    g_vertices = _frames_backward(tape, g_frames)

    # projection chain: screen/depth to world positions
    gxn = g_screen[:, 0] / 2.0
    gyn = g_screen[:, 1] / 2.0
    inv_dt = 1.0 / (tape.depth * tape.tanf)
    g_depth = g_depth - gxn * tape.xn / tape.depth - gyn * tape.yn / tape.depth
    gx = gxn * inv_dt
    gy = gyn * inv_dt
    valid = tape.vertex_valid.astype(np.float64)[:, None]
    g_vertices += (
        gx[:, None] * tape.right + gy[:, None] * tape.cam_up + g_depth[:, None] * tape.fwd
    ) * valid

    return {
        "vertices": g_vertices,
        "texture": tape.texture.decode_backward(g_tex_decoded),
        "normal_map": tape.normal_map.decode_backward(g_nrm_decoded),
        "background": g_background,
    }
