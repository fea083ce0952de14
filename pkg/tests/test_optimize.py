import os

import numpy as np
import pytest

import meshforge as mf
from conftest import fixture_cameras, flat_normal_map, render_targets, two_color_texture
from meshforge.errors import OptimizationAbort, ParameterError
from meshforge.loss import LambdaSchedule, LaplacianEnergy, TargetImageScorer
from meshforge.optimize import (
    AdamState,
    RunConfig,
    adam_step,
    count_inverted_faces,
    decayed_lrs,
    initialize_parameters,
    load_checkpoint,
    run,
    run_optimization,
    save_checkpoint,
    select_primitive,
)
from meshforge.raster import RenderConfig, TexelMap
from meshforge.subdiv import build_operator


class TestAdam:
    def test_zero_gradients_leave_parameters(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(5, 3))
        params = {"vertices": p.copy(), "texture": p.copy(), "normal_map": p.copy()}
        state = AdamState()
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        lrs = {k: 1e-2 for k in params}
        adam_step(state, grads, params, lrs)
        for k in params:
            assert np.array_equal(params[k], p)

    def test_first_step_is_signed_learning_rate(self):
        rng = np.random.default_rng(1)
        g = rng.normal(size=(4, 4))
        g[np.abs(g) < 0.1] = 0.5  # keep magnitudes well above eps
        p = np.zeros((4, 4))
        params = {"vertices": p}
        state = AdamState()
        lr = 3e-3
        adam_step(state, {"vertices": g}, params, {"vertices": lr})
        update = -params["vertices"] / lr  # should be ~sign(g)
        assert np.all(np.sign(-params["vertices"]) == np.sign(g))
        assert np.abs(params["vertices"]).min() >= 0.99 * lr
        assert np.abs(params["vertices"]).max() <= lr

    def test_two_runs_bit_identical(self):
        def trajectory():
            rng = np.random.default_rng(2)
            p = {"vertices": np.zeros((3, 3))}
            state = AdamState()
            for t in range(25):
                g = {"vertices": rng.normal(size=(3, 3))}
                adam_step(state, g, p, {"vertices": 1e-2})
            return p["vertices"]

        assert np.array_equal(trajectory(), trajectory())

    def test_non_finite_gradient_names_group(self):
        params = {"texture": np.zeros((2, 2))}
        g = {"texture": np.array([[np.nan, 0.0], [0.0, 0.0]])}
        with pytest.raises(OptimizationAbort, match="texture"):
            adam_step(AdamState(), g, params, {"texture": 1e-2})


class TestInitializeParameters:
    def test_decoded_colors_in_range(self):
        mesh = mf.make_primitive("sphere", 1)
        rng = np.random.default_rng(3)
        _, tex, _ = initialize_parameters(mesh, 32, rng)
        decoded = tex.decode()
        assert decoded.min() > 0.0 and decoded.max() < 1.0

    def test_initial_normals_near_flat(self):
        mesh = mf.make_primitive("sphere", 1)
        rng = np.random.default_rng(4)
        _, _, nrm = initialize_parameters(mesh, 64, rng)
        decoded = nrm.decode()
        angles = np.degrees(np.arccos(np.clip(decoded[..., 2], -1, 1)))
        assert angles.mean() < 5.0

    def test_same_seed_identical(self):
        mesh = mf.make_primitive("sphere", 1)
        a = initialize_parameters(mesh, 32, np.random.default_rng(5))
        b = initialize_parameters(mesh, 32, np.random.default_rng(5))
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1].data, b[1].data)
        assert np.array_equal(a[2].data, b[2].data)

    def test_bad_texture_size(self):
        mesh = mf.make_primitive("sphere", 0)
        with pytest.raises(ParameterError):
            initialize_parameters(mesh, 48, np.random.default_rng(0))


class _ConstantScorer:
    def score(self, images, want_grad=True):
        from meshforge.loss import ScoreResult

        grads = [np.zeros_like(np.asarray(i)) for i in images] if want_grad else []
        return ScoreResult(0.5, [0.0] * len(images), grads)


class _MseScorer:
    """mean((img - c)^2) fixture with exact gradients."""

    def __init__(self, c):
        self.c = c

    def score(self, images, want_grad=True):
        from meshforge.loss import ScoreResult

        k = len(images)
        losses = []
        grads = []
        for img in images:
            img = np.asarray(img, dtype=np.float64)
            diff = img - self.c
            losses.append(float((diff ** 2).mean()))
            if want_grad:
                grads.append(2.0 * diff / (k * diff.size))
        return ScoreResult(float(np.mean(losses)), [-l for l in losses], grads)


def _selection_setup(resolution=48):
    specs, cams = fixture_cameras(n=6, elevation=20.0)
    bgs = [np.zeros((resolution, resolution, 3)) for _ in cams]
    cfg = RenderConfig(resolution=resolution, sigma=0.02)
    return specs, cams, bgs, cfg


class TestSelectPrimitive:
    @pytest.mark.parametrize("true_kind", ["sphere", "cuboid_horizontal", "cuboid_vertical"])
    def test_self_target_selects_matching_primitive(self, true_kind):
        from meshforge.optimize import neutral_maps
        from meshforge.raster import render

        specs, cams, bgs, cfg = _selection_setup()
        truth = mf.make_primitive(true_kind, 1)
        op = build_operator(truth, 1)
        tex, nrm = neutral_maps(wrap_u=truth.uv_wrap_u)
        refined = op.apply(truth.vertices)
        targets = []
        for cam, bg in zip(cams, bgs):
            img, _ = render(refined, op.refined_faces, op.refined_uvs,
                            op.refined_uv_indices, tex, nrm, cam, bg, cfg)
            targets.append(img.rgb)
        scorer = TargetImageScorer(targets)
        candidates = [mf.make_primitive(k, 1) for k in
                      ("sphere", "cuboid_horizontal", "cuboid_vertical")]
        best, table = select_primitive(candidates, scorer, cams, bgs, 1, cfg)
        assert best is candidates[["sphere", "cuboid_horizontal",
                                   "cuboid_vertical"].index(true_kind)]
        assert min(table) == pytest.approx(-1.0, abs=1e-9)

    def test_single_candidate(self):
        specs, cams, bgs, cfg = _selection_setup()
        only = mf.make_primitive("sphere", 0)
        best, table = select_primitive([only], _ConstantScorer(), cams, bgs, 0, cfg)
        assert best is only
        assert table == [0.5]

    def test_tie_keeps_first(self):
        specs, cams, bgs, cfg = _selection_setup()
        candidates = [mf.make_primitive(k, 0) for k in
                      ("cuboid_vertical", "sphere", "cuboid_horizontal")]
        best, table = select_primitive(candidates, _ConstantScorer(), cams, bgs, 0, cfg)
        assert best is candidates[0]
        assert table == [0.5, 0.5, 0.5]


def _loop_setup(rng, iterations=10, resolution=32, lr=1e-2):
    mesh = mf.make_primitive("sphere", 0)
    op = build_operator(mesh, 1)
    lap = LaplacianEnergy(op.refined_faces, op.n_refined)
    v0, tex, nrm = initialize_parameters(mesh, 16, rng)
    params = {"vertices": v0, "texture": tex.data, "normal_map": nrm.data}
    specs, cams = fixture_cameras(n=2, elevation=18.0)
    targets = render_targets(mesh, mesh.vertices * 1.1, 1, cams, resolution,
                             texture=two_color_texture(16),
                             normal_map=flat_normal_map(16))
    scorer = TargetImageScorer(targets)
    bgs = [np.zeros((resolution, resolution, 3)) for _ in cams]

    def provider(t, _rng):
        return cams, bgs

    cfg = RenderConfig(resolution=resolution, sigma=0.02)
    return op, lap, scorer, provider, params, tex, nrm, cfg


class TestRunOptimization:
    def test_zero_learning_rates_freeze_everything(self):
        rng = np.random.default_rng(6)
        op, lap, scorer, provider, params, tex, nrm, cfg = _loop_setup(rng)
        before = {k: v.copy() for k, v in params.items()}
        schedule = LambdaSchedule(lambda0=0.0)  # keep lambda_t constant too
        history = run_optimization(
            op, lap, scorer, provider, params, tex, nrm, AdamState(), schedule,
            lambda t: {k: 0.0 for k in params}, 8, cfg,
            np.random.default_rng(0), 0,
        )
        for k in params:
            assert np.array_equal(params[k], before[k])
        totals = [row[1] for row in history]
        assert max(totals) - min(totals) < 1e-12

    def test_mse_fixture_monotone_texture_only(self):
        rng = np.random.default_rng(7)
        op, lap, _, provider, params, tex, nrm, cfg = _loop_setup(rng)
        scorer = _MseScorer(np.array([0.2, 0.6, 0.4]))
        schedule = LambdaSchedule(lambda0=0.0)
        history = run_optimization(
            op, lap, scorer, provider, params, tex, nrm, AdamState(), schedule,
            lambda t: {"vertices": 0.0, "texture": 1e-2, "normal_map": 0.0},
            100, cfg, np.random.default_rng(0), 0,
        )
        totals = [row[1] for row in history]
        assert all(b <= a + 1e-12 for a, b in zip(totals, totals[1:]))

    def test_identical_seeds_identical_history(self):
        def one():
            rng = np.random.default_rng(8)
            op, lap, scorer, provider, params, tex, nrm, cfg = _loop_setup(rng)
            schedule = LambdaSchedule(lambda0=5.0)
            return run_optimization(
                op, lap, scorer, provider, params, tex, nrm, AdamState(), schedule,
                lambda t: {"vertices": 1e-2, "texture": 1e-2, "normal_map": 5e-3},
                6, cfg, np.random.default_rng(1), 0,
            )

        assert one() == one()

    def test_checkpoint_restores_exact_trajectory(self, tmp_path):
        def fresh(seed=9):
            rng = np.random.default_rng(seed)
            return _loop_setup(rng)

        lrs_fn = lambda t: {"vertices": 1e-2, "texture": 1e-2, "normal_map": 5e-3}

        # straight 10-iteration run
        op, lap, scorer, provider, params_a, tex_a, nrm_a, cfg = fresh()
        sched_a = LambdaSchedule(lambda0=5.0)
        rng_a = np.random.default_rng(2)
        hist_a = run_optimization(op, lap, scorer, provider, params_a, tex_a, nrm_a,
                                  AdamState(), sched_a, lrs_fn, 10, cfg, rng_a, 0)

        # 5 iterations, checkpoint, restore, continue to 10
        op, lap, scorer, provider, params_b, tex_b, nrm_b, cfg = fresh()
        sched_b = LambdaSchedule(lambda0=5.0)
        adam_b = AdamState()
        rng_b = np.random.default_rng(2)
        hist_b = run_optimization(op, lap, scorer, provider, params_b, tex_b, nrm_b,
                                  adam_b, sched_b, lrs_fn, 5, cfg, rng_b, 0)
        path = str(tmp_path / "ck.bin")
        save_checkpoint(path, 5, params_b, adam_b, sched_b, rng_b, 0, lrs_fn(5))

        state = load_checkpoint(path)
        params_c = state["params"]
        tex_c = TexelMap(params_c["texture"], "color", wrap_u=tex_b.wrap_u)
        nrm_c = TexelMap(params_c["normal_map"], "normal", wrap_u=nrm_b.wrap_u)
        assert state["iteration"] == 5
        hist_c = run_optimization(op, lap, scorer, provider, params_c, tex_c, nrm_c,
                                  state["adam"], state["schedule"], lrs_fn, 10, cfg,
                                  state["rng"], 0, start_iteration=5)
        assert hist_b + hist_c == hist_a
        for k in params_a:
            assert np.array_equal(params_a[k], params_c[k])

    def test_non_finite_loss_aborts(self):
        rng = np.random.default_rng(10)
        op, lap, _, provider, params, tex, nrm, cfg = _loop_setup(rng)

        class NanScorer:
            def score(self, images, want_grad=True):
                from meshforge.loss import ScoreResult

                return ScoreResult(float("nan"), [0.0] * len(images),
                                   [np.zeros_like(np.asarray(i)) for i in images])

        with pytest.raises(OptimizationAbort):
            run_optimization(op, lap, NanScorer(), provider, params, tex, nrm,
                             AdamState(), LambdaSchedule(lambda0=1.0),
                             lambda t: {k: 1e-2 for k in params}, 3, cfg,
                             np.random.default_rng(0), 0)


class TestRun:
    def _cfg(self, fixture_dir, out_dir, iterations=3):
        return RunConfig(
            scorer=f"target:{fixture_dir}",
            primitive="sphere",
            level=1,
            depth=1,
            iterations=iterations,
            resolution=64,
            texture_size=32,
            lambda0=10.0,
            seed=3,
            checkpoint_every=2,
            out_dir=out_dir,
        )

    def test_zero_iterations_writes_initial_assets(self, ellipsoid_fixture, tmp_path):
        cfg = self._cfg(ellipsoid_fixture, str(tmp_path / "o"), iterations=0)
        out, history = run(cfg)
        assert history == []
        for name in ("model.obj", "texture.png", "normal.png", "loss.csv",
                     "config.txt", "checkpoint.bin"):
            assert os.path.exists(os.path.join(out, name)), name
        assert (tmp_path / "o" / "loss.csv").read_text() == \
            "iter,loss_total,loss_sim,loss_lap,lambda_t\n"

    def test_same_config_same_seed_byte_identical(self, ellipsoid_fixture, tmp_path):
        cfg_a = self._cfg(ellipsoid_fixture, str(tmp_path / "a"))
        cfg_b = self._cfg(ellipsoid_fixture, str(tmp_path / "b"))
        run(cfg_a)
        run(cfg_b)
        for name in ("loss.csv", "checkpoint.bin"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_loss_decreases_on_fixture(self, ellipsoid_fixture, tmp_path):
        cfg = self._cfg(ellipsoid_fixture, str(tmp_path / "o"), iterations=25)
        _, history = run(cfg)
        assert history[-1][2] < history[0][2]  # similarity term improves


class TestInvertedFaces:
    def test_clean_sphere_has_none(self):
        mesh = mf.make_primitive("sphere", 1)
        assert count_inverted_faces(mesh.vertices, mesh.faces) == 0

    def test_flipped_face_detected(self):
        mesh = mf.make_primitive("sphere", 1)
        faces = mesh.faces.copy()
        faces[0] = faces[0][[0, 2, 1]]
        assert count_inverted_faces(mesh.vertices, faces) == 1


class TestLearnedBackground:
    def test_background_gradient_finite_difference(self):
        from meshforge.loss import total_objective

        rng = np.random.default_rng(11)
        op_, lap, scorer, provider, params, tex, nrm, cfg = _loop_setup(rng)
        cams, bgs = provider(1, rng)
        bg_logits = rng.normal(0, 0.5, 3)
        _, _, grads = total_objective(params["vertices"], tex, nrm, op_, lap,
                                      scorer, cams, bgs, 0.5, cfg,
                                      background_logits=bg_logits)
        h = 1e-5
        fd = np.zeros(3)
        for c in range(3):
            bp, bm = bg_logits.copy(), bg_logits.copy()
            bp[c] += h
            bm[c] -= h
            tp, _, _ = total_objective(params["vertices"], tex, nrm, op_, lap,
                                       scorer, cams, bgs, 0.5, cfg,
                                       background_logits=bp)
            tm, _, _ = total_objective(params["vertices"], tex, nrm, op_, lap,
                                       scorer, cams, bgs, 0.5, cfg,
                                       background_logits=bm)
            fd[c] = (tp - tm) / (2 * h)
        rel = np.linalg.norm(fd - grads["background"]) / np.linalg.norm(fd)
        assert rel < 1e-6

    def test_learned_background_converges_to_target_color(self):
        # MSE scorer against a constant color: the learned background color
        # should move toward it in the uncovered region
        from scipy.special import expit

        rng = np.random.default_rng(12)
        op_, lap, _, provider, params, tex, nrm, cfg = _loop_setup(rng)
        target_color = np.array([0.15, 0.7, 0.35])
        scorer = _MseScorer(target_color)
        params["background"] = rng.normal(0, 0.5, 3)
        start = expit(params["background"]).copy()
        run_optimization(
            op_, lap, scorer, provider, params, tex, nrm, AdamState(),
            LambdaSchedule(lambda0=0.0),
            lambda t: {"vertices": 0.0, "texture": 0.0, "normal_map": 0.0,
                       "background": 5e-2},
            120, cfg, np.random.default_rng(0), 0,
        )
        end = expit(params["background"])
        assert np.linalg.norm(end - target_color) < np.linalg.norm(start - target_color)
        assert np.abs(end - target_color).max() < 0.05

    def test_checkpoint_round_trips_background_group(self, tmp_path):
        rng = np.random.default_rng(13)
        op_, lap, scorer, provider, params, tex, nrm, cfg = _loop_setup(rng)
        params["background"] = rng.normal(0, 0.5, 3)
        adam = AdamState()
        sched = LambdaSchedule(lambda0=1.0)
        run_optimization(op_, lap, scorer, provider, params, tex, nrm, adam, sched,
                         lambda t: {k: 1e-2 for k in params}, 2, cfg,
                         np.random.default_rng(0), 0)
        path = str(tmp_path / "ck.bin")
        save_checkpoint(path, 2, params, adam, sched, np.random.default_rng(0), 0,
                        {k: 1e-2 for k in params})
        state = load_checkpoint(path)
        assert "background" in state["params"]
        assert np.array_equal(state["params"]["background"], params["background"])
