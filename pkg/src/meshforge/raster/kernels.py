"""Hot per-pixel kernels with a compiled core and a pure-NumPy fallback.

The compiled extension is selected at import when available; set
``MESHFORGE_FORCE_FALLBACK=1`` to force the NumPy path. Both paths perform the
same arithmetic in the same order so results agree.
"""

from __future__ import annotations

import os

import numpy as np

BIG_DISTANCE = 1.0e6

_speedups = None
if not os.environ.get("MESHFORGE_FORCE_FALLBACK"):
    try:
        from . import _speedups  # type: ignore[attr-defined]
    except ImportError:
        _speedups = None

USING_COMPILED = _speedups is not None


def pixel_grid(height: int, width: int):
    """Pixel-center screen coordinates; x right, y up, unit square."""
    qx = (np.arange(width, dtype=np.float64) + 0.5) / width
    qy = 1.0 - (np.arange(height, dtype=np.float64) + 0.5) / height
    return qx, qy


def coverage_pass_np(screen, depth, faces, face_ok, height, width):
    """Front-most covering triangle per pixel with screen barycentrics.

    Depth ordering uses the perspective-correct inverse depth sum(b_k / d_k);
    ties keep the first (lowest index) face, so results are deterministic.
    """
    pix_tri = np.full((height, width), -1, dtype=np.int32)
    pix_inv = np.zeros((height, width), dtype=np.float64)
    pix_bary = np.zeros((height, width, 3), dtype=np.float64)
    qx, qy = pixel_grid(height, width)

    for f in np.flatnonzero(face_ok):
        ia, ib, ic = faces[f]
        ax, ay = screen[ia]
        bx, by = screen[ib]
        cx, cy = screen[ic]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        lox = min(ax, bx, cx)
        hix = max(ax, bx, cx)
        loy = min(ay, by, cy)
        hiy = max(ay, by, cy)
        j0 = max(0, int(np.ceil(lox * width - 0.5)))
        j1 = min(width - 1, int(np.floor(hix * width - 0.5)))
        i0 = max(0, int(np.ceil((1.0 - hiy) * height - 0.5)))
        i1 = min(height - 1, int(np.floor((1.0 - loy) * height - 0.5)))
        if j0 > j1 or i0 > i1:
            continue
        gx = qx[j0 : j1 + 1][None, :]
        gy = qy[i0 : i1 + 1][:, None]
        w0 = (cx - bx) * (gy - by) - (cy - by) * (gx - bx)
        w1 = (ax - cx) * (gy - cy) - (ay - cy) * (gx - cx)
        w2 = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        b0 = w0 / area
        b1 = w1 / area
        b2 = w2 / area
        inv = b0 / depth[ia] + b1 / depth[ib] + b2 / depth[ic]
        window_inv = pix_inv[i0 : i1 + 1, j0 : j1 + 1]
        upd = inside & (inv > window_inv)
        if not upd.any():
            continue
        np.copyto(window_inv, inv, where=upd)
        np.copyto(pix_tri[i0 : i1 + 1, j0 : j1 + 1], np.int32(f), where=upd)
        window_bary = pix_bary[i0 : i1 + 1, j0 : j1 + 1]
        np.copyto(window_bary[..., 0], b0, where=upd)
        np.copyto(window_bary[..., 1], b1, where=upd)
        np.copyto(window_bary[..., 2], b2, where=upd)
    return pix_tri, pix_bary


def sdist_pass_np(segs, covered, height, width):
    """Signed screen distance to the nearest silhouette segment per pixel.

    Positive inside the covered region. Returns (sdist, seg_idx, t_clamped);
    seg_idx is -1 (and |sdist| = BIG_DISTANCE) when there are no segments.
    """
    qx, qy = pixel_grid(height, width)
    gx = np.broadcast_to(qx[None, :], (height, width))
    gy = np.broadcast_to(qy[:, None], (height, width))
    best_d2 = np.full((height, width), np.inf)
    seg_idx = np.full((height, width), -1, dtype=np.int32)
    tpar = np.zeros((height, width), dtype=np.float64)

    for s in range(len(segs)):
        ax, ay, bx, by = segs[s]
        ex = bx - ax
        ey = by - ay
        l2 = ex * ex + ey * ey
        if l2 < 1e-24:
            t = np.zeros((height, width))
        else:
            t = ((gx - ax) * ex + (gy - ay) * ey) / l2
            t = np.clip(t, 0.0, 1.0)
        dx = gx - (ax + t * ex)
        dy = gy - (ay + t * ey)
        d2 = dx * dx + dy * dy
        upd = d2 < best_d2
        if upd.any():
            np.copyto(best_d2, d2, where=upd)
            np.copyto(seg_idx, np.int32(s), where=upd)
            np.copyto(tpar, t, where=upd)

    dist = np.where(np.isfinite(best_d2), np.sqrt(best_d2), BIG_DISTANCE)
    sdist = np.where(covered, dist, -dist)
    return sdist, seg_idx, tpar


def coverage_pass(screen, depth, faces, face_ok, height, width):
    screen = np.ascontiguousarray(screen, dtype=np.float64)
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    ok = np.ascontiguousarray(face_ok, dtype=np.uint8)
    if _speedups is not None:
        return _speedups.coverage_pass(screen, depth, faces, ok, height, width)
    return coverage_pass_np(screen, depth, faces, ok, height, width)


def sdist_pass(segs, covered, height, width):
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    cov = np.ascontiguousarray(covered, dtype=np.uint8)
    if _speedups is not None:
        return _speedups.sdist_pass(segs, cov, height, width)
    return sdist_pass_np(segs, cov, height, width)
