"""Regenerate the committed golden-render fixture.

Builds a deterministic asset (unit icosphere, two-band texture, flat normal
map), saves it under golden_model/, and renders the reference view with the
CLI renderer. Run from the repository root:

    python tests/fixtures/generate_golden.py
"""

import os
import sys

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, ".."))

import meshforge as mf  # noqa: E402
from conftest import two_color_texture, flat_normal_map  # noqa: E402
from meshforge.cli import main  # noqa: E402
from meshforge.optimize import write_config_snapshot, RunConfig  # noqa: E402
from meshforge.subdiv import build_operator  # noqa: E402


def build():
    model_dir = os.path.join(HERE, "golden_model")
    os.makedirs(model_dir, exist_ok=True)
    mesh = mf.make_primitive("sphere", 1)
    op = build_operator(mesh, 1)
    refined = op.apply(mesh.vertices)
    tex = two_color_texture(64)
    nrm = flat_normal_map(64)
    mf.save_assets(op.refined_mesh(refined), refined, tex, nrm, model_dir)
    write_config_snapshot(os.path.join(model_dir, "config.txt"),
                          RunConfig(scorer="target:unused", primitive="sphere"))
    rc = main([
        "render", model_dir,
        "--azimuth", "0", "--elevation", "15", "--fov", "45",
        "--res", "64", "--out", os.path.join(HERE, "golden_render.png"),
    ])
    if rc != 0:
        raise SystemExit(rc)
    print("golden fixture regenerated")


if __name__ == "__main__":
    build()
