"""Optimizable texel grids and bilinear sampling.

Texels are stored as unconstrained parameters: color maps decode through a
sigmoid into [0,1]^3, normal maps decode into unit tangent-space vectors with
a strictly positive z component, so optimization never needs projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ParameterError


@dataclass
class TexelMap:
    """Raster grid of optimizable parameters with a fixed decode mode."""

    data: np.ndarray          # (H, W, 3) unconstrained parameters
    mode: str = "color"       # "color" or "normal"
    wrap_u: bool = False

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ParameterError(f"texel data must be (H, W, 3), got {self.data.shape}")
        if self.mode not in ("color", "normal"):
            raise ParameterError(f"unknown decode mode {self.mode!r}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def decode(self) -> np.ndarray:
        if self.mode == "color":
            return expit(self.data)
        s = expit(self.data)
        raw = np.empty_like(s)
        raw[..., 0] = 2.0 * s[..., 0] - 1.0
        raw[..., 1] = 2.0 * s[..., 1] - 1.0
        raw[..., 2] = s[..., 2]
        norm = np.linalg.norm(raw, axis=-1, keepdims=True)
        return raw / norm

    def decode_backward(self, grad_decoded: np.ndarray) -> np.ndarray:
        """Chain a gradient w.r.t. the decoded grid back to the raw parameters."""
        s = expit(self.data)
        ds = s * (1.0 - s)
        if self.mode == "color":
            return grad_decoded * ds
        raw = np.empty_like(s)
        raw[..., 0] = 2.0 * s[..., 0] - 1.0
        raw[..., 1] = 2.0 * s[..., 1] - 1.0
        raw[..., 2] = s[..., 2]
        norm = np.linalg.norm(raw, axis=-1, keepdims=True)
        unit = raw / norm
        inner = np.sum(grad_decoded * unit, axis=-1, keepdims=True)
        grad_raw = (grad_decoded - inner * unit) / norm
        grad_raw[..., 0] *= 2.0 * ds[..., 0]
        grad_raw[..., 1] *= 2.0 * ds[..., 1]
        grad_raw[..., 2] *= ds[..., 2]
        return grad_raw


def _texel_coords(decoded_shape, uv, wrap_u):
    """Texel-center convention: uv (0.5/W, ...) hits texel centers; v runs bottom-up."""
    h, w = decoded_shape[0], decoded_shape[1]
    col_f = uv[:, 0] * w - 0.5
    row_f = (1.0 - uv[:, 1]) * h - 0.5
    c0 = np.floor(col_f)
    r0 = np.floor(row_f)
    fx = col_f - c0
    fy = row_f - r0
    c0 = c0.astype(np.int64)
    r0 = r0.astype(np.int64)
    if wrap_u:
        j0 = np.mod(c0, w)
        j1 = np.mod(c0 + 1, w)
    else:
        j0 = np.clip(c0, 0, w - 1)
        j1 = np.clip(c0 + 1, 0, w - 1)
    i0 = np.clip(r0, 0, h - 1)
    i1 = np.clip(r0 + 1, 0, h - 1)
    return i0, i1, j0, j1, fx, fy


def bilinear_batch(decoded: np.ndarray, uv: np.ndarray, wrap_u: bool = False):
    """Sample a decoded (H, W, C) grid at uv points (N, 2). Returns values and
    the cache needed for the reverse pass."""
    i0, i1, j0, j1, fx, fy = _texel_coords(decoded.shape, uv, wrap_u)
    m00 = decoded[i0, j0]
    m01 = decoded[i0, j1]
    m10 = decoded[i1, j0]
    m11 = decoded[i1, j1]
    fxc = fx[:, None]
    fyc = fy[:, None]
    top = (1.0 - fxc) * m00 + fxc * m01
    bot = (1.0 - fxc) * m10 + fxc * m11
    values = (1.0 - fyc) * top + fyc * bot
    cache = (i0, i1, j0, j1, fx, fy, decoded.shape[0], decoded.shape[1])
    return values, cache


def bilinear_backward(decoded: np.ndarray, cache, grad_values: np.ndarray,
                      grad_map_out: np.ndarray):
    """Scatter value gradients into ``grad_map_out`` and return the gradient
    w.r.t. the uv sample positions, (N, 2)."""
    i0, i1, j0, j1, fx, fy, h, w = cache
    fxc = fx[:, None]
    fyc = fy[:, None]
    w00 = (1.0 - fyc) * (1.0 - fxc)
    w01 = (1.0 - fyc) * fxc
    w10 = fyc * (1.0 - fxc)
    w11 = fyc * fxc
    flat = grad_map_out.reshape(-1, grad_map_out.shape[-1])
    np.add.at(flat, i0 * w + j0, w00 * grad_values)
    np.add.at(flat, i0 * w + j1, w01 * grad_values)
    np.add.at(flat, i1 * w + j0, w10 * grad_values)
    np.add.at(flat, i1 * w + j1, w11 * grad_values)

    m00 = decoded[i0, j0]
    m01 = decoded[i0, j1]
    m10 = decoded[i1, j0]
    m11 = decoded[i1, j1]
    dcol = (1.0 - fyc) * (m01 - m00) + fyc * (m11 - m10)
    drow = (1.0 - fxc) * (m10 - m00) + fxc * (m11 - m01)
    gcol = np.sum(grad_values * dcol, axis=1)
    grow = np.sum(grad_values * drow, axis=1)
    guv = np.empty((len(fx), 2))
    guv[:, 0] = gcol * w       # d col_f / d u = W
    guv[:, 1] = grow * (-h)    # d row_f / d v = -H
    return guv


def sample_bilinear(decoded_map: np.ndarray, uv, wrap_u: bool = False) -> np.ndarray:
    """Bilinear lookup of one uv point on a decoded map."""
    uv = np.asarray(uv, dtype=np.float64).reshape(1, 2)
    if not np.all(np.isfinite(uv)):
        raise ParameterError("uv must be finite")
    values, _ = bilinear_batch(np.asarray(decoded_map, dtype=np.float64), uv, wrap_u)
    return values[0]
