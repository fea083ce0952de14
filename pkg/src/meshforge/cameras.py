"""Stochastic view sampling and camera construction.

Azimuth is uniform over the full circle; elevation is drawn from a Beta(1, 5)
distribution scaled to [0, 100] degrees so most views sit near the horizon;
field of view, background and look-at offset are independently toggleable
augmentations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ParameterError

BACKGROUND_KINDS = ("solid", "noise", "checkerboard")


@dataclass
class BackgroundSpec:
    kind: str
    seed: int


@dataclass
class ViewSample:
    azimuth: float          # degrees in [0, 360)
    elevation: float        # degrees in [0, 100]
    fov: float              # degrees in [30, 60]
    distance: float
    offset: np.ndarray      # in-plane look-at shift, world units
    background: BackgroundSpec


@dataclass
class CameraPose:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fov: float
    near: float = 0.05
    far: float = 100.0


@dataclass
class ViewConfig:
    distance: float = 5.0
    elevation_beta: tuple = (1.0, 5.0)
    elevation_max: float = 100.0
    fov_range: tuple = (30.0, 60.0)
    fov_fixed: float = 45.0
    offset_fraction: float = 0.1
    fov_jitter: bool = True
    offset_jitter: bool = True
    background_jitter: bool = True
    fixed_background_color: tuple = (0.5, 0.5, 0.5)


def sample_view(rng: np.random.Generator, cfg: ViewConfig | None = None) -> ViewSample:
    """Draw one view. Disabled augmentations collapse to their fixed defaults."""
    cfg = cfg or ViewConfig()
    azimuth = float(rng.uniform(0.0, 360.0))
    a, b = cfg.elevation_beta
    elevation = float(cfg.elevation_max * rng.beta(a, b))
    if cfg.fov_jitter:
        fov = float(rng.uniform(*cfg.fov_range))
    else:
        fov = cfg.fov_fixed
    if cfg.offset_jitter:
        r = cfg.offset_fraction * cfg.distance
        offset = rng.uniform(-r, r, size=2)
    else:
        offset = np.zeros(2)
    if cfg.background_jitter:
        kind = BACKGROUND_KINDS[int(rng.integers(len(BACKGROUND_KINDS)))]
        seed = int(rng.integers(2 ** 63))
    else:
        kind, seed = "fixed", 0
    return ViewSample(
        azimuth=azimuth,
        elevation=elevation,
        fov=fov,
        distance=cfg.distance,
        offset=np.asarray(offset, dtype=np.float64),
        background=BackgroundSpec(kind, seed),
    )


def _orbit_position(azimuth_deg: float, elevation_deg: float, distance: float) -> np.ndarray:
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    return distance * np.array(
        [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
    )


def camera_pose(view: ViewSample) -> CameraPose:
    """Place the camera on the orbit sphere looking at the (offset) origin.

    Up is +y; past 85 degrees of elevation the up reference follows the orbit
    tangent so the frame stays well conditioned over the zenith.
    """
    pos = _orbit_position(view.azimuth, view.elevation, view.distance)
    if view.elevation > 85.0:
        az = math.radians(view.azimuth)
        el = math.radians(view.elevation)
        up = np.array(
            [-math.sin(az) * math.sin(el), math.cos(el), -math.cos(az) * math.sin(el)]
        )
        up = up / np.linalg.norm(up)
    else:
        up = np.array([0.0, 1.0, 0.0])

    fwd = -pos / np.linalg.norm(pos)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    cam_up = np.cross(right, fwd)
    look_at = view.offset[0] * right + view.offset[1] * cam_up
    return CameraPose(position=pos, look_at=look_at, up=up, fov=view.fov)


def make_background(spec: BackgroundSpec, resolution: int, rng=None) -> np.ndarray:
    """Deterministic background image (H, W, 3) in [0, 1] from the stored seed."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.kind == "solid":
        color = rng.uniform(0.0, 1.0, size=3)
        return np.broadcast_to(color, (resolution, resolution, 3)).copy()
    if spec.kind == "noise":
        img = rng.uniform(0.0, 1.0, size=(resolution, resolution, 3))
        sigma = resolution / 16.0
        return gaussian_filter(img, sigma=(sigma, sigma, 0), mode="reflect")
    if spec.kind == "checkerboard":
        c0 = rng.uniform(0.0, 1.0, size=3)
        c1 = rng.uniform(0.0, 1.0, size=3)
        cell = max(1, resolution // 8)
        yy, xx = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
        mask = ((yy // cell + xx // cell) % 2).astype(bool)
        img = np.where(mask[..., None], c1, c0)
        return img
    if spec.kind == "fixed":
        color = np.asarray((0.5, 0.5, 0.5))
        return np.broadcast_to(color, (resolution, resolution, 3)).copy()
    raise ParameterError(f"unknown background kind {spec.kind!r}")
