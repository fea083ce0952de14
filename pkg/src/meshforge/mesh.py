"""Closed-manifold triangle meshes: primitives, adjacency queries, OBJ/PNG asset I/O.

Geometry topology is always seam-free; texture coordinates may duplicate
entries along UV seams (per-corner indexing via ``uv_indices``).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .errors import ObjParseError, ParameterError, TopologyError

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

# Canonical icosahedron: 12 vertices on the unit sphere, valence 5 everywhere.
_ICO_VERTS = np.array(
    [
        [-1, _GOLDEN, 0], [1, _GOLDEN, 0], [-1, -_GOLDEN, 0], [1, -_GOLDEN, 0],
        [0, -1, _GOLDEN], [0, 1, _GOLDEN], [0, -1, -_GOLDEN], [0, 1, -_GOLDEN],
        [_GOLDEN, 0, -1], [_GOLDEN, 0, 1], [-_GOLDEN, 0, -1], [-_GOLDEN, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int32,
)

PRIMITIVE_KINDS = ("sphere", "cuboid_horizontal", "cuboid_vertical")


@dataclass
class ManifoldReport:
    is_closed_manifold: bool
    offending_edges: list
    min_valence: int
    max_valence: int


@dataclass(eq=False)
class ControlMesh:
    """Triangle mesh with per-corner UVs.

    vertices: (n, 3) float positions, the optimizable geometry parameter.
    faces: (F, 3) vertex indices, counter-clockwise winding seen from outside.
    uvs: (n_uv, 2) texture coordinates in [0, 1]^2; may exceed n for seams.
    uv_indices: (F, 3) rows into ``uvs``, one per face corner.
    uv_wrap_u: texture wraps along u (equirectangular seam) instead of clamping.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray
    uv_indices: np.ndarray
    uv_wrap_u: bool = False

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64)
        self.uv_indices = np.ascontiguousarray(self.uv_indices, dtype=np.int32)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ParameterError("face index out of range")
            tri = self.faces
            if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])):
                raise ParameterError("degenerate face (repeated vertex index)")
            if self.uv_indices.min() < 0 or self.uv_indices.max() >= len(self.uvs):
                raise ParameterError("uv index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "ControlMesh":
        """Same topology, new positions."""
        if vertices.shape != self.vertices.shape:
            raise ParameterError(
                f"vertex array shape {vertices.shape} does not match {self.vertices.shape}"
            )
        return ControlMesh(vertices, self.faces, self.uvs, self.uv_indices, self.uv_wrap_u)


def unique_edges(faces: np.ndarray) -> np.ndarray:
    """Undirected edge list (E, 2) with each edge stored as (min, max)."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def validate_manifold(mesh: ControlMesh) -> ManifoldReport:
    """Full edge census: every edge must be shared by exactly two faces."""
    faces = mesh.faces
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bad = uniq[counts != 2]
    offending = [tuple(int(v) for v in row) for row in bad]

    neighbors = [set() for _ in range(mesh.n_vertices)]
    for a, b in uniq:
        neighbors[a].add(int(b))
        neighbors[b].add(int(a))
    valences = [len(s) for s in neighbors]
    min_v = min(valences) if valences else 0
    max_v = max(valences) if valences else 0
    return ManifoldReport(
        is_closed_manifold=len(offending) == 0,
        offending_edges=offending,
        min_valence=min_v,
        max_valence=max_v,
    )


def one_ring(mesh: ControlMesh, v: int) -> list:
    """Neighbors of vertex ``v`` in consistent cyclic order.

    The cycle follows the winding of the incident faces, so reversing the
    mesh orientation reverses the cycle.
    """
    if v < 0 or v >= mesh.n_vertices:
        raise ParameterError(f"vertex index {v} out of range")
    succ = {}
    for face in mesh.faces:
        if v not in face:
            continue
        k = int(np.where(face == v)[0][0])
        a, b = int(face[(k + 1) % 3]), int(face[(k + 2) % 3])
        if a in succ:
            raise TopologyError(f"non-manifold fan at vertex {v}")
        succ[a] = b
    if not succ:
        raise TopologyError(f"isolated vertex {v}")
    start = next(iter(succ))
    ring = [start]
    cur = start
    for _ in range(len(succ) - 1):
        cur = succ.get(cur)
        if cur is None or cur in ring:
            raise TopologyError(f"open or non-manifold fan at vertex {v}")
        ring.append(cur)
    if succ[ring[-1]] != start:
        raise TopologyError(f"one-ring of vertex {v} does not close")
    return ring


# ---------------------------------------------------------------------------
# primitive constructors
# ---------------------------------------------------------------------------

def _subdivide_sphere(verts: np.ndarray, faces: np.ndarray):
    verts = list(map(np.asarray, verts))
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key in cache:
            return cache[key]
        p = verts[i] + verts[j]
        p = p / np.linalg.norm(p)
        verts.append(p)
        cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return np.array(verts), np.array(out, dtype=np.int32)


def _equirect_uvs(verts: np.ndarray, faces: np.ndarray):
    """Per-corner equirectangular UVs with seam-crossing faces unwrapped to u=1."""
    x, y, z = verts[:, 0], verts[:, 1], verts[:, 2]
    u = np.mod(np.arctan2(x, z) / (2.0 * math.pi), 1.0)
    v = 0.5 + np.arcsin(np.clip(y, -1.0, 1.0)) / math.pi
    pole = y * y > 1.0 - 1e-12

    uv_rows = []
    uv_lookup = {}
    uv_idx = np.zeros_like(faces)
    for fi, face in enumerate(faces):
        us = u[face].copy()
        vs = v[face]
        if us.max() - us.min() > 0.5:
            us[us < 0.5] += 1.0
        for k in range(3):
            if pole[face[k]]:
                others = [us[j] for j in range(3) if j != k]
                us[k] = 0.5 * (others[0] + others[1])
        us = np.minimum(us, 1.0)
        for k in range(3):
            key = (int(face[k]), round(float(us[k]), 9), round(float(vs[k]), 9))
            if key not in uv_lookup:
                uv_lookup[key] = len(uv_rows)
                uv_rows.append((us[k], vs[k]))
            uv_idx[fi, k] = uv_lookup[key]
    return np.array(uv_rows, dtype=np.float64), uv_idx.astype(np.int32)


def _make_sphere(level: int) -> ControlMesh:
    verts, faces = _ICO_VERTS.copy(), _ICO_FACES.copy()
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(level):
        verts, faces = _subdivide_sphere(verts, faces)
    uvs, uv_idx = _equirect_uvs(verts, faces)
    return ControlMesh(verts, faces, uvs, uv_idx, uv_wrap_u=True)


# Box sides: (fixed axis, sign, grid axis u, grid axis v) with cross(u, v)
# equal to +axis, so CCW grid quads face outward on positive sides; negative
# sides reverse the quad order.
_BOX_SIDES = (
    (0, +1, 1, 2),
    (0, -1, 1, 2),
    (1, +1, 2, 0),
    (1, -1, 2, 0),
    (2, +1, 0, 1),
    (2, -1, 0, 1),
)


def _make_cuboid(extents, level: int) -> ControlMesh:
    half = np.asarray(extents, dtype=np.float64) / 2.0
    n = 2 ** level
    vert_lookup = {}
    verts = []

    def vid(p):
        key = (round(p[0], 12), round(p[1], 12), round(p[2], 12))
        if key not in vert_lookup:
            vert_lookup[key] = len(verts)
            verts.append(np.array(p))
        return vert_lookup[key]

    faces = []
    uv_rows = []
    uv_idx_rows = []
    pad = 1.0 / 64.0
    chart_w, chart_h = 1.0 / 3.0, 1.0 / 2.0

    for side, (axis, sign, ua, va) in enumerate(_BOX_SIDES):
        su = np.linspace(-half[ua], half[ua], n + 1)
        sv = np.linspace(-half[va], half[va], n + 1)
        grid = np.empty((n + 1, n + 1), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n + 1):
                p = [0.0, 0.0, 0.0]
                p[axis] = sign * half[axis]
                p[ua] = su[i]
                p[va] = sv[j]
                grid[i, j] = vid(p)
        col, row = side % 3, side // 3
        u0, v0 = col * chart_w + pad, row * chart_h + pad
        u1, v1 = (col + 1) * chart_w - pad, (row + 1) * chart_h - pad

        def uv_at(i, j):
            # mirror u on negative sides so charts read left-to-right from outside
            fi = i / n if sign > 0 else 1.0 - i / n
            return (u0 + fi * (u1 - u0), v0 + (j / n) * (v1 - v0))

        uv_grid = np.empty((n + 1, n + 1), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n + 1):
                uv_grid[i, j] = len(uv_rows)
                uv_rows.append(uv_at(i, j))

        for i in range(n):
            for j in range(n):
                quad = [grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]]
                quv = [uv_grid[i, j], uv_grid[i + 1, j], uv_grid[i + 1, j + 1], uv_grid[i, j + 1]]
                if sign < 0:
                    quad.reverse()
                    quv.reverse()
                # split along the diagonal through the lowest-index corner
                s = int(np.argmin(quad))
                if s in (0, 2):
                    tris = [(0, 1, 2), (0, 2, 3)]
                else:
                    tris = [(0, 1, 3), (1, 2, 3)]
                for t in tris:
                    faces.append([quad[t[0]], quad[t[1]], quad[t[2]]])
                    uv_idx_rows.append([quv[t[0]], quv[t[1]], quv[t[2]]])

    mesh = ControlMesh(
        np.array(verts),
        np.array(faces, dtype=np.int32),
        np.array(uv_rows, dtype=np.float64),
        np.array(uv_idx_rows, dtype=np.int32),
        uv_wrap_u=False,
    )
    # the winding convention above must give outward normals; enforce by volume
    if _signed_volume(mesh.vertices, mesh.faces) < 0:
        mesh = ControlMesh(
            mesh.vertices,
            mesh.faces[:, [0, 2, 1]],
            mesh.uvs,
            mesh.uv_indices[:, [0, 2, 1]],
            uv_wrap_u=False,
        )
    return mesh


def _signed_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return float(np.einsum("ij,ij->", a, np.cross(b, c)) / 6.0)


def make_primitive(kind: str, level: int = 1) -> ControlMesh:
    """Construct a closed starting shape with UVs.

    sphere: icosphere of radius 1 subdivided ``level`` times, equirectangular UVs.
    cuboid_horizontal / cuboid_vertical: boxes of extents (1.6, 0.8, 0.8) /
    (0.8, 1.6, 0.8), each side a 2^level grid of quads, 6-chart UV atlas.
    """
    if kind not in PRIMITIVE_KINDS:
        raise ParameterError(f"unknown primitive kind {kind!r}")
    if not isinstance(level, int) or level < 0 or level > 5:
        raise ParameterError(f"level must be an integer in [0, 5], got {level!r}")
    if kind == "sphere":
        return _make_sphere(level)
    extents = (1.6, 0.8, 0.8) if kind == "cuboid_horizontal" else (0.8, 1.6, 0.8)
    return _make_cuboid(extents, level)


# ---------------------------------------------------------------------------
# asset I/O
# ---------------------------------------------------------------------------

def _decoded_array(texel_map_or_array) -> np.ndarray:
    if hasattr(texel_map_or_array, "decode"):
        return texel_map_or_array.decode()
    return np.asarray(texel_map_or_array, dtype=np.float64)


def _write_png(path: str, data: np.ndarray) -> None:
    img = np.clip(np.floor(data * 255.0 + 0.5), 0, 255).astype(np.uint8)
    PILImage.fromarray(img, mode="RGB").save(path)


def save_assets(mesh: ControlMesh, limit_vertices: np.ndarray, texture, normal_map,
                out_dir: str) -> None:
    """Write model.obj + model.mtl + texture.png + normal.png into ``out_dir``.

    ``mesh`` supplies the topology (typically the refined topology from the
    subdivision operator); ``limit_vertices`` supplies the positions and must
    match the topology's vertex count. Normals are encoded as (n+1)/2 RGB.
    """
    limit_vertices = np.asarray(limit_vertices, dtype=np.float64)
    if limit_vertices.shape != (mesh.n_vertices, 3):
        raise ParameterError(
            f"limit vertex array {limit_vertices.shape} does not match "
            f"topology with {mesh.n_vertices} vertices"
        )
    os.makedirs(out_dir, exist_ok=True)

    tex = _decoded_array(texture)
    nrm = _decoded_array(normal_map)
    _write_png(os.path.join(out_dir, "texture.png"), tex)
    _write_png(os.path.join(out_dir, "normal.png"), (nrm + 1.0) / 2.0)

    with open(os.path.join(out_dir, "model.mtl"), "w") as f:
        f.write("newmtl asset\n")
        f.write("Kd 1.0 1.0 1.0\n")
        f.write("map_Kd texture.png\n")
        f.write("map_Bump normal.png\n")

    with open(os.path.join(out_dir, "model.obj"), "w") as f:
        f.write("mtllib model.mtl\n")
        f.write("usemtl asset\n")
        for p in limit_vertices:
            f.write(f"v {p[0]:.8f} {p[1]:.8f} {p[2]:.8f}\n")
        for uv in mesh.uvs:
            f.write(f"vt {uv[0]:.8f} {uv[1]:.8f}\n")
        for face, uvi in zip(mesh.faces, mesh.uv_indices):
            f.write(
                "f {}/{} {}/{} {}/{}\n".format(
                    face[0] + 1, uvi[0] + 1, face[1] + 1, uvi[1] + 1, face[2] + 1, uvi[2] + 1
                )
            )


def load_obj(path: str, strict: bool = False) -> ControlMesh:
    """Parse v/vt/f records. Polygons with more than 3 corners are fan-triangulated.

    With ``strict`` the mesh must pass :func:`validate_manifold`.
    """
    verts = []
    uvs = []
    faces = []
    uv_indices = []
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError("vertex record needs 3 coordinates", ln)
                try:
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise ObjParseError("bad vertex coordinate", ln) from None
            elif tag == "vt":
                if len(parts) < 3:
                    raise ObjParseError("vt record needs 2 coordinates", ln)
                try:
                    uvs.append([float(parts[1]), float(parts[2])])
                except ValueError:
                    raise ObjParseError("bad texture coordinate", ln) from None
            elif tag == "f":
                corners = []
                for tok in parts[1:]:
                    sub = tok.split("/")
                    try:
                        vi = int(sub[0])
                        ti = int(sub[1]) if len(sub) > 1 and sub[1] else 0
                    except ValueError:
                        raise ObjParseError(f"bad face corner {tok!r}", ln) from None
                    corners.append((vi, ti))
                if len(corners) < 3:
                    raise ObjParseError("face needs at least 3 corners", ln)
                for k in range(1, len(corners) - 1):
                    fan = [corners[0], corners[k], corners[k + 1]]
                    tri_v, tri_t = [], []
                    for vi, ti in fan:
                        if vi < 0:
                            vi = len(verts) + vi + 1
                        if not (1 <= vi <= len(verts)):
                            raise ObjParseError(f"vertex index {vi} out of range", ln)
                        if ti < 0:
                            ti = len(uvs) + ti + 1
                        if ti and not (1 <= ti <= len(uvs)):
                            raise ObjParseError(f"uv index {ti} out of range", ln)
                        tri_v.append(vi - 1)
                        tri_t.append(ti - 1)
                    faces.append(tri_v)
                    uv_indices.append(tri_t)
            # other records (vn, o, g, s, usemtl, mtllib) are ignored

    if not verts or not faces:
        raise ObjParseError("no geometry found", 1)
    uv_arr = np.array(uvs, dtype=np.float64) if uvs else np.zeros((1, 2))
    uv_idx = np.array(uv_indices, dtype=np.int32)
    uv_idx[uv_idx < 0] = 0
    mesh = ControlMesh(np.array(verts), np.array(faces, dtype=np.int32), uv_arr, uv_idx)
    if strict:
        report = validate_manifold(mesh)
        if not report.is_closed_manifold:
            raise TopologyError(
                f"mesh is not a closed manifold ({len(report.offending_edges)} bad edges)"
            )
    return mesh
