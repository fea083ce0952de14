"""Differentiable limit-subdivision operator as a precomputed sparse linear map.

A fixed number of refinement steps followed by the limit-position stencil is
assembled once per topology into a single sparse matrix, so evaluation is a
matrix product and the exact adjoint is the transpose product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, TopologyError
from .mesh import ControlMesh, validate_manifold


def loop_beta(n: int) -> float:
    """Even-vertex neighbor weight for valence ``n``.

    beta(n) = (1/n) * (5/8 - (3/8 + cos(2*pi/n)/4)^2), positive for n >= 3.
    """
    if n < 3:
        raise ParameterError(f"valence must be >= 3, got {n}")
    c = 3.0 / 8.0 + math.cos(2.0 * math.pi / n) / 4.0
    return (5.0 / 8.0 - c * c) / n


def _adjacency(faces: np.ndarray, n_verts: int):
    neighbors = [set() for _ in range(n_verts)]
    for a, b, c in faces:
        neighbors[a].update((int(b), int(c)))
        neighbors[b].update((int(a), int(c)))
        neighbors[c].update((int(a), int(b)))
    return [sorted(s) for s in neighbors]


def _edge_table(faces: np.ndarray):
    """Unique undirected edges plus, per edge, the two opposite vertices."""
    edge_id = {}
    opposites = []
    for face in faces:
        for k in range(3):
            a, b = int(face[k]), int(face[(k + 1) % 3])
            o = int(face[(k + 2) % 3])
            key = (min(a, b), max(a, b))
            if key not in edge_id:
                edge_id[key] = len(opposites)
                opposites.append([o])
            else:
                opposites[edge_id[key]].append(o)
    for key, eid in edge_id.items():
        if len(opposites[eid]) != 2:
            raise TopologyError(f"edge {key} is adjacent to {len(opposites[eid])} faces")
    edges = np.array(list(edge_id.keys()), dtype=np.int64)
    return edge_id, edges, np.array(opposites, dtype=np.int64)


def _refinement_matrix(faces: np.ndarray, n_verts: int):
    """One Loop step: rows for kept (even) vertices then edge (odd) vertices."""
    edge_id, edges, opposites = _edge_table(faces)
    neighbors = _adjacency(faces, n_verts)
    n_edges = len(edges)

    rows, cols, vals = [], [], []
    for v in range(n_verts):
        nbrs = neighbors[v]
        n = len(nbrs)
        if n < 3:
            raise TopologyError(f"vertex {v} has valence {n}")
        b = loop_beta(n)
        rows.append(v)
        cols.append(v)
        vals.append(1.0 - n * b)
        for u in nbrs:
            rows.append(v)
            cols.append(u)
            vals.append(b)
    for eid, ((a, b), (o1, o2)) in enumerate(zip(edges, opposites)):
        r = n_verts + eid
        rows += [r, r, r, r]
        cols += [int(a), int(b), int(o1), int(o2)]
        vals += [3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0]

    mat = sp.csr_matrix(
        (vals, (rows, cols)), shape=(n_verts + n_edges, n_verts), dtype=np.float64
    )

    new_faces = []
    for a, b, c in faces:
        mab = n_verts + edge_id[(min(a, b), max(a, b))]
        mbc = n_verts + edge_id[(min(b, c), max(b, c))]
        mca = n_verts + edge_id[(min(c, a), max(c, a))]
        new_faces += [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]]
    return mat, np.array(new_faces, dtype=np.int32)


def _limit_matrix(faces: np.ndarray, n_verts: int):
    """Limit-position stencil: v_inf = (w*v + ring_sum) / (w + n), w = 3/(8*beta)."""
    neighbors = _adjacency(faces, n_verts)
    rows, cols, vals = [], [], []
    for v in range(n_verts):
        nbrs = neighbors[v]
        n = len(nbrs)
        w = 3.0 / (8.0 * loop_beta(n))
        denom = w + n
        rows.append(v)
        cols.append(v)
        vals.append(w / denom)
        for u in nbrs:
            rows.append(v)
            cols.append(u)
            vals.append(1.0 / denom)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_verts, n_verts), dtype=np.float64)


def _subdivide_uvs(uvs: np.ndarray, uv_indices: np.ndarray):
    """Midpoint UV subdivision; seam edges (distinct uv corners) stay duplicated."""
    new_uvs = list(map(tuple, uvs))
    cache = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            u = (uvs[i] + uvs[j]) / 2.0
            cache[key] = len(new_uvs)
            new_uvs.append((float(u[0]), float(u[1])))
        return cache[key]

    out = []
    for a, b, c in uv_indices:
        a, b, c = int(a), int(b), int(c)
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        out += [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]]
    return np.array(new_uvs, dtype=np.float64), np.array(out, dtype=np.int32)


@dataclass
class SubdivisionOperator:
    """Sparse linear map from control vertices to limit-surface samples.

    ``matrix`` has one row per refined vertex; rows are convex combinations
    (nonnegative, summing to 1) and depend only on topology.
    """

    matrix: sp.csr_matrix
    refined_faces: np.ndarray
    refined_uvs: np.ndarray
    refined_uv_indices: np.ndarray
    depth: int
    uv_wrap_u: bool = False

    @property
    def n_control(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_refined(self) -> int:
        return self.matrix.shape[0]

    def apply(self, control_vertices: np.ndarray) -> np.ndarray:
        v = np.asarray(control_vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.n_control:
            raise ParameterError(
                f"expected ({self.n_control}, k) control array, got {v.shape}"
            )
        return self.matrix @ v

    def apply_adjoint(self, grad_refined: np.ndarray) -> np.ndarray:
        g = np.asarray(grad_refined, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != self.n_refined:
            raise ParameterError(
                f"expected ({self.n_refined}, k) gradient array, got {g.shape}"
            )
        return self.matrix.T @ g

    def refined_mesh(self, positions: np.ndarray) -> ControlMesh:
        """Package refined topology with given positions for I/O or rendering."""
        return ControlMesh(
            positions,
            self.refined_faces,
            self.refined_uvs,
            self.refined_uv_indices,
            uv_wrap_u=self.uv_wrap_u,
        )


def build_operator(mesh: ControlMesh, depth: int) -> SubdivisionOperator:
    """Compose ``depth`` refinement matrices with the limit stencil."""
    if not isinstance(depth, int) or depth < 0 or depth > 4:
        raise ParameterError(f"depth must be an integer in [0, 4], got {depth!r}")
    report = validate_manifold(mesh)
    if not report.is_closed_manifold:
        raise TopologyError(
            f"subdivision requires a closed manifold ({len(report.offending_edges)} bad edges)"
        )

    matrix = sp.identity(mesh.n_vertices, format="csr", dtype=np.float64)
    faces = mesh.faces.copy()
    uvs, uv_idx = mesh.uvs.copy(), mesh.uv_indices.copy()
    n_verts = mesh.n_vertices
    for _ in range(depth):
        step, faces = _refinement_matrix(faces, n_verts)
        matrix = step @ matrix
        n_verts = step.shape[0]
        uvs, uv_idx = _subdivide_uvs(uvs, uv_idx)

    matrix = _limit_matrix(faces, n_verts) @ matrix
    matrix.sum_duplicates()
    return SubdivisionOperator(
        matrix=matrix.tocsr(),
        refined_faces=faces,
        refined_uvs=uvs,
        refined_uv_indices=uv_idx,
        depth=depth,
        uv_wrap_u=mesh.uv_wrap_u,
    )
