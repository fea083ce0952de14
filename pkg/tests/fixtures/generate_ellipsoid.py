"""Regenerate the committed ellipsoid target fixture used in the README.

    python tests/fixtures/generate_ellipsoid.py
"""

import os
import sys

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, ".."))

import meshforge as mf  # noqa: E402
from conftest import fixture_cameras, render_targets, write_target_fixture  # noqa: E402


def build():
    mesh = mf.make_primitive("sphere", 1)
    stretched = mesh.vertices * np.array([1.15, 0.8, 0.95])
    specs, cams = fixture_cameras(n=12)
    images = render_targets(mesh, stretched, depth=2, cameras=cams, resolution=64)
    write_target_fixture(os.path.join(HERE, "ellipsoid"), images, specs)
    print("ellipsoid fixture regenerated")


if __name__ == "__main__":
    build()
