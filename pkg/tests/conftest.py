import os

import numpy as np
import pytest
from PIL import Image as PILImage

import meshforge as mf
from meshforge.cameras import BackgroundSpec, ViewSample, camera_pose
from meshforge.raster import RenderConfig, TexelMap, render
from meshforge.subdiv import build_operator


def two_color_texture(size=64, wrap_u=True):
    """Two horizontal color bands, stored as logits."""
    decoded = np.empty((size, size, 3))
    decoded[: size // 2] = (0.8, 0.25, 0.2)
    decoded[size // 2 :] = (0.2, 0.4, 0.75)
    logits = np.log(decoded / (1.0 - decoded))
    return TexelMap(logits, "color", wrap_u=wrap_u)


def flat_normal_map(size=64, wrap_u=True):
    data = np.zeros((size, size, 3))
    data[..., 2] = 2.0
    return TexelMap(data, "normal", wrap_u=wrap_u)


def render_targets(mesh, vertices, depth, cameras, resolution, texture=None,
                   normal_map=None, sigma=0.02):
    """Render fixture target views with the given (or neutral) maps."""
    op = build_operator(mesh, depth)
    tex = texture if texture is not None else two_color_texture(wrap_u=mesh.uv_wrap_u)
    nrm = normal_map if normal_map is not None else flat_normal_map(wrap_u=mesh.uv_wrap_u)
    cfg = RenderConfig(resolution=resolution, sigma=sigma)
    refined = op.apply(vertices)
    images = []
    for cam in cameras:
        img, _ = render(refined, op.refined_faces, op.refined_uvs,
                        op.refined_uv_indices, tex, nrm, cam, None, cfg)
        images.append(img.rgb)
    return images


def fixture_cameras(n=12, elevation=15.0, fov=45.0, distance=5.0):
    specs = [(az, elevation, fov, distance) for az in np.linspace(0.0, 360.0, n,
                                                                  endpoint=False)]
    cams = [
        camera_pose(ViewSample(az, el, fv, d, np.zeros(2), BackgroundSpec("solid", 0)))
        for az, el, fv, d in specs
    ]
    return specs, cams


def write_target_fixture(dir_path, images, camera_specs):
    os.makedirs(dir_path, exist_ok=True)
    lines = []
    for k, (img, (az, el, fov, dist)) in enumerate(zip(images, camera_specs)):
        name = f"view_{k:02d}.png"
        data = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
        PILImage.fromarray(data, "RGB").save(os.path.join(dir_path, name))
        lines.append(f"{name} {az} {el} {fov} {dist}")
    with open(os.path.join(dir_path, "cameras.txt"), "w") as f:
        f.write("# target  azimuth  elevation  fov  distance\n")
        f.write("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def ellipsoid_fixture(tmp_path_factory):
    """12 views of a scaled icosphere with a two-band texture, 64x64."""
    root = tmp_path_factory.mktemp("ellipsoid")
    mesh = mf.make_primitive("sphere", 1)
    stretched = mesh.vertices * np.array([1.15, 0.8, 0.95])
    specs, cams = fixture_cameras(n=12)
    images = render_targets(mesh, stretched, depth=2, cameras=cams, resolution=64)
    write_target_fixture(str(root), images, specs)
    return str(root)
