# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-pixel kernels. Mirrors kernels.py arithmetic exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt

cnp.import_array()

DEF BIG_DISTANCE = 1.0e6


def coverage_pass(double[:, ::1] screen, double[::1] depth, int[:, ::1] faces,
                  unsigned char[::1] face_ok, int height, int width):
    cdef cnp.ndarray[cnp.int32_t, ndim=2] pix_tri_arr = np.full((height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pix_inv_arr = np.zeros((height, width), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] pix_bary_arr = np.zeros((height, width, 3), dtype=np.float64)
    cdef int[:, ::1] pix_tri = pix_tri_arr
    cdef double[:, ::1] pix_inv = pix_inv_arr
    cdef double[:, :, ::1] pix_bary = pix_bary_arr

    cdef Py_ssize_t f, n_faces = faces.shape[0]
    cdef int ia, ib, ic, i, j, i0, i1, j0, j1
    cdef double ax, ay, bx, by, cx, cy, area
    cdef double lox, hix, loy, hiy
    cdef double qx, qy, w0, w1, w2, b0, b1, b2, inv
    cdef double da, db, dc

    for f in range(n_faces):
        if not face_ok[f]:
            continue
        ia = faces[f, 0]; ib = faces[f, 1]; ic = faces[f, 2]
        ax = screen[ia, 0]; ay = screen[ia, 1]
        bx = screen[ib, 0]; by = screen[ib, 1]
        cx = screen[ic, 0]; cy = screen[ic, 1]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        da = depth[ia]; db = depth[ib]; dc = depth[ic]

        lox = min(ax, min(bx, cx)); hix = max(ax, max(bx, cx))
        loy = min(ay, min(by, cy)); hiy = max(ay, max(by, cy))
        j0 = <int>ceil(lox * width - 0.5)
        j1 = <int>floor(hix * width - 0.5)
        i0 = <int>ceil((1.0 - hiy) * height - 0.5)
        i1 = <int>floor((1.0 - loy) * height - 0.5)
        if j0 < 0: j0 = 0
        if j1 > width - 1: j1 = width - 1
        if i0 < 0: i0 = 0
        if i1 > height - 1: i1 = height - 1
        if j0 > j1 or i0 > i1:
            continue
        for i in range(i0, i1 + 1):
            qy = 1.0 - (i + 0.5) / height
            for j in range(j0, j1 + 1):
                qx = (j + 0.5) / width
                w0 = (cx - bx) * (qy - by) - (cy - by) * (qx - bx)
                if w0 < 0.0:
                    continue
                w1 = (ax - cx) * (qy - cy) - (ay - cy) * (qx - cx)
                if w1 < 0.0:
                    continue
                w2 = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
                if w2 < 0.0:
                    continue
                b0 = w0 / area; b1 = w1 / area; b2 = w2 / area
                inv = b0 / da + b1 / db + b2 / dc
                if inv > pix_inv[i, j]:
                    pix_inv[i, j] = inv
                    pix_tri[i, j] = <int>f
                    pix_bary[i, j, 0] = b0
                    pix_bary[i, j, 1] = b1
                    pix_bary[i, j, 2] = b2
    return pix_tri_arr, pix_bary_arr


def sdist_pass(double[:, ::1] segs, unsigned char[:, ::1] covered, int height, int width):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] sdist_arr = np.empty((height, width), dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] seg_idx_arr = np.full((height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tpar_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] sdist = sdist_arr
    cdef int[:, ::1] seg_idx = seg_idx_arr
    cdef double[:, ::1] tpar = tpar_arr

    cdef Py_ssize_t s, n_segs = segs.shape[0]
    cdef int i, j
    cdef double qx, qy, ax, ay, bx, by, ex, ey, l2, t, dx, dy, d2
    cdef double best, best_t, dist
    cdef int best_s

    for i in range(height):
        qy = 1.0 - (i + 0.5) / height
        for j in range(width):
            qx = (j + 0.5) / width
            best = BIG_DISTANCE * BIG_DISTANCE
            best_s = -1
            best_t = 0.0
            for s in range(n_segs):
                ax = segs[s, 0]; ay = segs[s, 1]
                bx = segs[s, 2]; by = segs[s, 3]
                ex = bx - ax; ey = by - ay
                l2 = ex * ex + ey * ey
                if l2 < 1e-24:
                    t = 0.0
                else:
                    t = ((qx - ax) * ex + (qy - ay) * ey) / l2
                    if t < 0.0: t = 0.0
                    elif t > 1.0: t = 1.0
                dx = qx - (ax + t * ex)
                dy = qy - (ay + t * ey)
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    best_s = <int>s
                    best_t = t
            if best_s < 0:
                dist = BIG_DISTANCE
            else:
                dist = sqrt(best)
            if covered[i, j]:
                sdist[i, j] = dist
            else:
                sdist[i, j] = -dist
            seg_idx[i, j] = best_s
            tpar[i, j] = best_t
    return sdist_arr, seg_idx_arr, tpar_arr
