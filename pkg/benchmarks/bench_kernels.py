"""Compare the compiled rasterizer kernels against the pure-NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--res 128] [--repeat 5]

Times the two hot kernels (pixel coverage and silhouette distance) and one
full forward+backward render on an icosphere scene, and verifies both paths
produce identical outputs.
"""

import argparse
import time

import numpy as np

import meshforge as mf
from meshforge.cameras import BackgroundSpec, ViewSample, camera_pose
from meshforge.raster import RenderConfig, TexelMap, render, render_backward
from meshforge.raster import kernels
from meshforge.subdiv import build_operator


def build_scene(res):
    rng = np.random.default_rng(0)
    mesh = mf.make_primitive("sphere", 1)
    op = build_operator(mesh, 2)
    refined = op.apply(mesh.vertices)
    tex = TexelMap(rng.normal(0, 0.5, (128, 128, 3)), "color", wrap_u=True)
    nrm_data = np.zeros((128, 128, 3))
    nrm_data[..., 2] = 2.0
    nrm = TexelMap(nrm_data, "normal", wrap_u=True)
    cam = camera_pose(ViewSample(30.0, 20.0, 45.0, 5.0, np.zeros(2),
                                 BackgroundSpec("fixed", 0)))
    cfg = RenderConfig(resolution=res, sigma=0.02)
    return op, refined, tex, nrm, cam, cfg


def timed(fn, repeat):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn()
    return (time.perf_counter() - t0) / repeat, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--res", type=int, default=128)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not kernels.USING_COMPILED:
        print("compiled kernels are not available; build the extension first")
        return

    op, refined, tex, nrm, cam, cfg = build_scene(args.res)
    faces = op.refined_faces
    img, tape = render(refined, faces, op.refined_uvs, op.refined_uv_indices,
                       tex, nrm, cam, None, cfg)
    res = args.res

    sa, sb, sc = (tape.screen[faces[:, k]] for k in range(3))
    area = (sb[:, 0] - sa[:, 0]) * (sc[:, 1] - sa[:, 1]) - (sb[:, 1] - sa[:, 1]) * (
        sc[:, 0] - sa[:, 0]
    )
    vv = tape.vertex_valid
    ok = vv[faces[:, 0]] & vv[faces[:, 1]] & vv[faces[:, 2]] & (area > 1e-14)
    segs = np.concatenate([tape.screen[tape.seg_p], tape.screen[tape.seg_q]], axis=1)
    covered = (tape.covered).astype(np.uint8)

    print(f"scene: {len(faces)} faces, {len(segs)} silhouette segments, {res}x{res}")
    print(f"{'kernel':22s} {'compiled':>12s} {'numpy':>12s} {'speedup':>9s}  agree")

    t_c, out_c = timed(lambda: kernels.coverage_pass(
        tape.screen, tape.depth, faces, ok, res, res), args.repeat)
    t_n, out_n = timed(lambda: kernels.coverage_pass_np(
        tape.screen, tape.depth, faces, ok.astype(np.uint8), res, res), args.repeat)
    agree = np.array_equal(out_c[0], out_n[0]) and np.array_equal(out_c[1], out_n[1])
    print(f"{'coverage_pass':22s} {t_c*1e3:10.2f}ms {t_n*1e3:10.2f}ms {t_n/t_c:8.1f}x  {agree}")

    t_c, out_c = timed(lambda: kernels.sdist_pass(segs, covered, res, res), args.repeat)
    t_n, out_n = timed(lambda: kernels.sdist_pass_np(segs, covered, res, res), args.repeat)
    agree = all(np.array_equal(a, b) for a, b in zip(out_c, out_n))
    print(f"{'sdist_pass':22s} {t_c*1e3:10.2f}ms {t_n*1e3:10.2f}ms {t_n/t_c:8.1f}x  {agree}")

    grad = np.ones((res, res, 3))

    def full(use_compiled):
        saved = kernels._speedups
        kernels._speedups = saved if use_compiled else None
        try:
            img, tape = render(refined, faces, op.refined_uvs, op.refined_uv_indices,
                               tex, nrm, cam, None, cfg)
            render_backward(tape, grad)
            return img
        finally:
            kernels._speedups = saved

    t_c, img_c = timed(lambda: full(True), args.repeat)
    t_n, img_n = timed(lambda: full(False), args.repeat)
    agree = np.array_equal(img_c.rgb, img_n.rgb)
    print(f"{'render fwd+bwd':22s} {t_c*1e3:10.2f}ms {t_n*1e3:10.2f}ms {t_n/t_c:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
