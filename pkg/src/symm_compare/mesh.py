"""Domains, simplicial meshes, piecewise-linear fields and exact superlevel geometry.

Meshes are conforming simplicial meshes of a planar domain (triangles) or of an
interval (segments).  Scalar data are either nodal (affine on each cell) or
cell-constant.  Because every field is affine per cell, the measure of a
superlevel set ``{psi > a}`` and the integral of a field over it are computed
exactly by clipping each cell along the line ``psi = a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import EllipticityError, InvalidSpecError, MeshMismatchError

_KINDS = ("disk", "ellipse", "polygon", "interval")


# ---------------------------------------------------------------------------
# Domain description


@dataclass(frozen=True)
class DomainSpec:
    """Description of a domain plus the target mesh size ``h``.

    ``params`` holds ``(radius,)`` for a disk centred at the origin,
    ``(semi_x, semi_y)`` for an axis-aligned ellipse, a tuple of ``(x, y)``
    vertices for a polygon and ``(lo, hi)`` for an interval.
    """

    kind: str
    params: tuple
    h: float

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise InvalidSpecError(f"unknown domain kind {self.kind!r}")
        if not (isinstance(self.h, (int, float)) and math.isfinite(self.h) and self.h > 0):
            raise InvalidSpecError(f"mesh size must be positive, got {self.h!r}")
        if self.kind == "disk":
            (radius,) = self.params
            if radius <= 0:
                raise InvalidSpecError("disk radius must be positive")
        elif self.kind == "ellipse":
            sx, sy = self.params
            if sx <= 0 or sy <= 0:
                raise InvalidSpecError("ellipse semi-axes must be positive")
        elif self.kind == "interval":
            lo, hi = self.params
            if not hi > lo:
                raise InvalidSpecError("interval needs lo < hi")
        else:
            _validate_polygon(np.asarray(self.params, dtype=float))
        if self.h >= self.diameter:
            raise InvalidSpecError(f"h={self.h} is not smaller than the domain diameter {self.diameter}")

    @classmethod
    def disk(cls, radius: float, h: float) -> "DomainSpec":
        return cls("disk", (float(radius),), float(h))

    @classmethod
    def ellipse(cls, semi_x: float, semi_y: float, h: float) -> "DomainSpec":
        return cls("ellipse", (float(semi_x), float(semi_y)), float(h))

    @classmethod
    def polygon(cls, vertices: Iterable[Sequence[float]], h: float) -> "DomainSpec":
        verts = tuple((float(x), float(y)) for x, y in vertices)
        return cls("polygon", verts, float(h))

    @classmethod
    def interval(cls, lo: float, hi: float, h: float) -> "DomainSpec":
        return cls("interval", (float(lo), float(hi)), float(h))

    def with_h(self, h: float) -> "DomainSpec":
        return DomainSpec(self.kind, self.params, float(h))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2.0 * self.params[0]
        if self.kind == "ellipse":
            return 2.0 * max(self.params)
        if self.kind == "interval":
            return self.params[1] - self.params[0]
        pts = np.asarray(self.params, dtype=float)
        diffs = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diffs**2).sum(-1)).max())

    @property
    def is_ball(self) -> bool:
        """True when the domain is itself a ball (an interval is a 1D ball)."""
        if self.kind in ("disk", "interval"):
            return True
        if self.kind == "ellipse":
            return self.params[0] == self.params[1]
        return False


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return any(
        abs(d) == 0.0 and on_segment(a, b, c)
        for d, a, b, c in ((d1, q1, q2, p1), (d2, q1, q2, p2), (d3, p1, p2, q1), (d4, p1, p2, q2))
    )


def _validate_polygon(pts: np.ndarray) -> None:
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise InvalidSpecError("polygon needs at least three (x, y) vertices")
    if not np.all(np.isfinite(pts)):
        raise InvalidSpecError("polygon vertices must be finite")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise InvalidSpecError("polygon has a repeated vertex")
    area = _signed_area(pts)
    if area == 0.0:
        raise InvalidSpecError("polygon has zero area")
    if area < 0.0:
        raise InvalidSpecError("polygon must be positively (counter-clockwise) oriented")
    m = len(pts)
    for i in range(m):
        for j in range(i + 1, m):
            if j == i + 1 or (i == 0 and j == m - 1):
                continue
            if _segments_cross(pts[i], pts[(i + 1) % m], pts[j], pts[(j + 1) % m]):
                raise InvalidSpecError("polygon is not simple (edges intersect)")


# ---------------------------------------------------------------------------
# Mesh


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming simplicial mesh.

    ``nodes`` has shape ``(N, d)`` and ``triangles`` shape ``(T, d + 1)``; for
    ``d = 1`` the cells are segments.  Instances are immutable and compared by
    identity, which is what "same mesh" means for fields.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    area: float = field(init=False)

    def __post_init__(self) -> None:
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        cells = np.ascontiguousarray(self.triangles, dtype=np.int64)
        bnd = np.unique(np.asarray(self.boundary_nodes, dtype=np.int64))
        dim = nodes.shape[1]
        if dim not in (1, 2) or cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise InvalidSpecError("cells must be segments in 1D or triangles in 2D")
        if cells.size and (cells.min() < 0 or cells.max() >= len(nodes)):
            raise InvalidSpecError("cell references a missing node")
        for arr in (nodes, cells, bnd):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", cells)
        object.__setattr__(self, "boundary_nodes", bnd)
        vols = self._signed_volumes()
        if np.any(vols <= 0):
            raise InvalidSpecError("every cell must have strictly positive signed area")
        vols.setflags(write=False)
        object.__setattr__(self, "_volumes", vols)
        object.__setattr__(self, "area", float(vols.sum()))

    def _signed_volumes(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.triangles)

    @property
    def cell_areas(self) -> np.ndarray:
        """Area (length in 1D) of every cell."""
        return self._volumes

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the barycentric hat functions, shape ``(T, d + 1, d)``."""
        p = self.nodes[self.triangles]
        if self.dim == 1:
            inv = 1.0 / (p[:, 1, 0] - p[:, 0, 0])
            return np.stack([-inv, inv], axis=1)[:, :, None]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edges
        inv = np.linalg.inv(jac)  # rows are gradients of lambda_1, lambda_2
        g0 = -(inv[:, 0] + inv[:, 1])
        return np.stack([g0, inv[:, 0], inv[:, 1]], axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        k = self.triangles.shape[1]
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        return np.stack([np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in pairs], axis=1)

    @cached_property
    def boundary_facets(self) -> tuple[np.ndarray, np.ndarray]:
        """Owning cell of every boundary facet and its outward normal scaled by the facet measure."""
        cells = self.triangles
        k = cells.shape[1]
        if self.dim == 1:
            owners, normals = [], []
            for node in self.boundary_nodes:
                cell = int(np.flatnonzero((cells == node).any(axis=1))[0])
                other = cells[cell][cells[cell] != node][0]
                owners.append(cell)
                normals.append([np.sign(self.nodes[node, 0] - self.nodes[other, 0])])
            return np.array(owners), np.array(normals, dtype=float)
        local = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]  # edge endpoints and opposite vertex
        edges = np.concatenate([np.sort(cells[:, [i, j]], axis=1) for i, j, _ in local])
        owner = np.tile(np.arange(len(cells)), k)
        opposite = np.concatenate([cells[:, m] for _, _, m in local])
        _, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
        single = counts[inverse.reshape(-1)] == 1
        e, own, opp = edges[single], owner[single], opposite[single]
        tangent = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        inward = self.nodes[opp] - self.nodes[e[:, 0]]
        flip = np.einsum("ed,ed->e", normal, inward) > 0
        normal[flip] *= -1.0
        return own, normal

    @cached_property
    def min_angle_deg(self) -> float:
        if self.dim == 1:
            return 180.0
        a, b, c = self.edge_lengths.T  # edges (0,1), (0,2), (1,2)
        cos0 = (a**2 + b**2 - c**2) / (2 * a * b)
        cos1 = (a**2 + c**2 - b**2) / (2 * a * c)
        cos2 = (b**2 + c**2 - a**2) / (2 * b * c)
        ang = np.degrees(np.arccos(np.clip(np.stack([cos0, cos1, cos2]), -1.0, 1.0)))
        return float(ang.min())

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def stats(self) -> dict:
        return {
            "dim": self.dim,
            "nodes": self.n_nodes,
            "cells": self.n_cells,
            "area": self.area,
            "max_edge": float(self.edge_lengths.max()),
            "min_angle_deg": self.min_angle_deg,
        }


# ---------------------------------------------------------------------------
# Fields


@dataclass(frozen=True, eq=False)
class NodalField:
    """Scalar data at mesh nodes, interpolated affinely on each cell."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float).reshape(-1)
        if len(vals) != self.mesh.n_nodes:
            raise ValueError(f"expected {self.mesh.n_nodes} nodal values, got {len(vals)}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def cell_values(self) -> np.ndarray:
        """Vertex values per cell, shape ``(T, d + 1)``."""
        return self.values[self.mesh.triangles]

    def with_values(self, values) -> "NodalField":
        return NodalField(self.mesh, values)


@dataclass(frozen=True, eq=False)
class CellField:
    """Scalar data constant on each cell."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float).reshape(-1)
        if len(vals) != self.mesh.n_cells:
            raise ValueError(f"expected {self.mesh.n_cells} cell values, got {len(vals)}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values) -> "CellField":
        return CellField(self.mesh, values)


ScalarField = Union[NodalField, CellField]


@dataclass(frozen=True, eq=False)
class CellMatrixField:
    """One symmetric ``d x d`` matrix per cell with a uniform ellipticity floor."""

    mesh: TriMesh
    matrices: np.ndarray
    lambda_min: float = 0.0

    def __post_init__(self) -> None:
        d = self.mesh.dim
        mats = np.array(self.matrices, dtype=float)
        if mats.shape == (d, d):
            mats = np.broadcast_to(mats, (self.mesh.n_cells, d, d)).copy()
        if mats.shape != (self.mesh.n_cells, d, d):
            raise ValueError(f"expected matrices of shape {(self.mesh.n_cells, d, d)}, got {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise EllipticityError("diffusion matrix has non-finite entries")
        if not np.allclose(mats, np.swapaxes(mats, 1, 2), rtol=0.0, atol=1e-12):
            raise EllipticityError("diffusion matrix is not symmetric")
        mats = 0.5 * (mats + np.swapaxes(mats, 1, 2))
        floor = float(self.lambda_min)
        eig = smallest_eigenvalues(mats)
        if eig.min() <= 0.0 or eig.min() < floor - 1e-12:
            raise EllipticityError(f"smallest eigenvalue {eig.min():.3e} is below the floor {floor:.3e}")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        if floor <= 0.0:
            object.__setattr__(self, "lambda_min", float(eig.min()))

    @classmethod
    def scalar(cls, mesh: TriMesh, coefficient) -> "CellMatrixField":
        """``coefficient * Id`` with a scalar or per-cell coefficient."""
        coef = np.broadcast_to(np.asarray(coefficient, dtype=float), (mesh.n_cells,))
        eye = np.eye(mesh.dim)
        return cls(mesh, coef[:, None, None] * eye)

    def smallest_eigenvalues(self) -> np.ndarray:
        return smallest_eigenvalues(self.matrices)


def smallest_eigenvalues(mats: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each symmetric 1x1 or 2x2 matrix in closed form."""
    if mats.shape[-1] == 1:
        return mats[..., 0, 0].copy()
    a, b, c = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 1]
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b**2)


def _require_same_mesh(*fields) -> TriMesh:
    mesh = fields[0].mesh
    for f in fields[1:]:
        if f.mesh is not mesh:
            raise MeshMismatchError("fields live on different meshes")
    return mesh


# ---------------------------------------------------------------------------
# Meshing


def build_mesh(spec: DomainSpec) -> TriMesh:
    """Quality Delaunay mesh of ``spec`` (minimum angle 30 degrees, max edge <= 1.5 h)."""
    if spec.kind == "interval":
        lo, hi = spec.params
        m = max(1, int(math.ceil((hi - lo) / spec.h - 1e-9)))
        x = np.linspace(lo, hi, m + 1)
        cells = np.stack([np.arange(m), np.arange(1, m + 1)], axis=1)
        return TriMesh(x[:, None], cells, np.array([0, m]))

    import triangle  # quality-constrained Delaunay mesher

    boundary = _boundary_points(spec)
    m = len(boundary)
    segments = np.stack([np.arange(m), (np.arange(m) + 1) % m], axis=1)
    h = spec.h
    area_factor = 1.0
    for _ in range(6):
        max_area = area_factor * math.sqrt(3.0) / 4.0 * h * h
        out = triangle.triangulate(
            {"vertices": boundary, "segments": segments}, f"pq30a{max_area:.15f}Q"
        )
        nodes = out["vertices"]
        cells = out["triangles"]
        mesh = TriMesh(nodes, _orient(nodes, cells), np.flatnonzero(out["vertex_markers"][:, 0] == 1))
        if mesh.edge_lengths.max() <= 1.5 * h:
            return mesh
        area_factor *= 0.8
    raise InvalidSpecError("could not reach the edge-length bound 1.5 h")


def _orient(nodes: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = nodes[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    cells = cells.copy()
    cells[neg] = cells[neg][:, [0, 2, 1]]
    return cells


def _boundary_points(spec: DomainSpec) -> np.ndarray:
    h = spec.h
    if spec.kind == "disk":
        (radius,) = spec.params
        m = max(8, int(math.ceil(2 * math.pi * radius / h)))
        theta = 2 * math.pi * np.arange(m) / m
        return radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if spec.kind == "ellipse":
        sx, sy = spec.params
        fine = np.linspace(0.0, 2 * math.pi, 20001)
        speed = np.hypot(sx * np.sin(fine), sy * np.cos(fine))
        arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(fine))])
        m = max(8, int(math.ceil(arc[-1] / h)))
        theta = np.interp(arc[-1] * np.arange(m) / m, arc, fine)
        return np.stack([sx * np.cos(theta), sy * np.sin(theta)], axis=1)
    verts = np.asarray(spec.params, dtype=float)
    pts = []
    for i in range(len(verts)):
        p, q = verts[i], verts[(i + 1) % len(verts)]
        k = max(1, int(math.ceil(np.linalg.norm(q - p) / h - 1e-9)))
        t = np.arange(k)[:, None] / k
        pts.append(p + t * (q - p))
    return np.concatenate(pts)


# ---------------------------------------------------------------------------
# Quadrature and gradients


def integrate(g: ScalarField) -> float:
    """Exact integral of a nodal (affine per cell) or cell-constant field."""
    vols = g.mesh.cell_areas
    if isinstance(g, CellField):
        return float(vols @ g.values)
    return float(vols @ g.cell_values().mean(axis=1))


def gradient(g: NodalField) -> np.ndarray:
    """Per-cell gradient of the affine interpolant, shape ``(T, d)``."""
    return np.einsum("tk,tkd->td", g.cell_values(), g.mesh.basis_gradients)


def nodal_average(mesh: TriMesh, cell_data: np.ndarray) -> np.ndarray:
    """Area-weighted average of cell data onto nodes (any trailing shape)."""
    cell_data = np.asarray(cell_data, dtype=float)
    vols = mesh.cell_areas
    weights = np.zeros(mesh.n_nodes)
    acc = np.zeros((mesh.n_nodes,) + cell_data.shape[1:])
    for k in range(mesh.triangles.shape[1]):
        np.add.at(weights, mesh.triangles[:, k], vols)
        np.add.at(acc, mesh.triangles[:, k], vols.reshape((-1,) + (1,) * (cell_data.ndim - 1)) * cell_data)
    return acc / weights.reshape((-1,) + (1,) * (cell_data.ndim - 1))


def nodal_gradient(g: NodalField) -> np.ndarray:
    """Area-weighted nodal average of the per-cell gradients, shape ``(N, d)``."""
    return nodal_average(g.mesh, gradient(g))


def lp_norm_field(g: ScalarField, p: float) -> float:
    """L^p norm of a field; exact for p = 1 and 2 on affine data up to sign changes."""
    if math.isinf(p):
        return float(np.abs(g.values).max())
    if isinstance(g, CellField):
        return float((g.mesh.cell_areas @ np.abs(g.values) ** p) ** (1.0 / p))
    if p == 2:
        v = g.cell_values()
        # exact for affine data: |T| * (sum v_i^2 + sum_{i<j} v_i v_j) / (k(k+1)/2)
        k = v.shape[1]
        quad = (np.sum(v * v, axis=1) + 0.5 * (np.sum(v, axis=1) ** 2 - np.sum(v * v, axis=1)))
        return float(math.sqrt(g.mesh.cell_areas @ quad / (k * (k + 1) / 2)))
    return float(_subdivided_integral(g, lambda v: np.abs(v) ** p) ** (1.0 / p))


def _subdivided_integral(g: NodalField, func, level: int = 4) -> float:
    """Integral of ``func(g)`` using a uniform sub-simplex vertex rule."""
    v = g.cell_values()
    vols = g.mesh.cell_areas
    if g.mesh.dim == 1:
        t = (np.arange(level) + 0.5) / level
        vals = v[:, :1] * (1 - t) + v[:, 1:] * t
        return float(vols @ func(vals).mean(axis=1))
    pts = []
    for i in range(level):
        for j in range(level - i):
            pts.append(((i + 1 / 3) / level, (j + 1 / 3) / level))
            if i + j < level - 1:
                pts.append(((i + 2 / 3) / level, (j + 2 / 3) / level))
    bary = np.array([(1 - s - t, s, t) for s, t in pts])
    vals = v @ bary.T
    return float(vols @ func(vals).mean(axis=1))


# ---------------------------------------------------------------------------
# Superlevel geometry


def _sorted_cells(psi: NodalField, g: ScalarField | None):
    vals = psi.cell_values()
    order = np.argsort(vals, axis=1, kind="stable")
    sv = np.take_along_axis(vals, order, axis=1)
    if g is None:
        return sv, None
    if isinstance(g, CellField):
        return sv, g.values
    return sv, np.take_along_axis(g.cell_values(), order, axis=1)


def _clip(sv: np.ndarray, sg: np.ndarray | None, vols: np.ndarray, a: float, cellwise: bool):
    """Per-cell measure of ``{psi > a}`` and integral of ``g`` over it."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if sv.shape[1] == 2:
            v0, v1 = sv[:, 0], sv[:, 1]
            frac = np.where(a < v0, 1.0, np.where(a >= v1, 0.0, (v1 - a) / (v1 - v0)))
            meas = vols * frac
            if sg is None:
                return meas, None
            if cellwise:
                return meas, sg * meas
            g0, g1 = sg[:, 0], sg[:, 1]
            gcut = g1 + frac * (g0 - g1)
            return meas, meas * 0.5 * (g1 + gcut)

        v0, v1, v2 = sv[:, 0], sv[:, 1], sv[:, 2]
        full = a < v0
        empty = a >= v2
        low = (~full) & (a < v1)  # cut below the middle vertex: clip a corner at vertex 0
        high = (~full) & (~empty) & (~low)  # keep a corner at vertex 2
        t1 = np.where(low, (a - v0) / (v1 - v0), 0.0)
        t2 = np.where(low, (a - v0) / (v2 - v0), 0.0)
        s0 = np.where(high, (v2 - a) / (v2 - v0), 0.0)
        s1 = np.where(high, (v2 - a) / (v2 - v1), 0.0)
        corner_low = t1 * t2
        corner_high = s0 * s1
        frac = np.where(full, 1.0, np.where(low, 1.0 - corner_low, np.where(high, corner_high, 0.0)))
        meas = vols * frac
        if sg is None:
            return meas, None
        if cellwise:
            return meas, sg * meas
        g0, g1, g2 = sg[:, 0], sg[:, 1], sg[:, 2]
        total = vols * (g0 + g1 + g2) / 3.0
        below = vols * corner_low * (3 * g0 + t1 * (g1 - g0) + t2 * (g2 - g0)) / 3.0
        above = vols * corner_high * (3 * g2 + s0 * (g0 - g2) + s1 * (g1 - g2)) / 3.0
        integral = np.where(full, total, np.where(low, total - below, np.where(high, above, 0.0)))
        return meas, integral


def superlevel_area(psi: NodalField, a: float) -> float:
    """Exact measure of ``{psi > a}`` for the affine interpolant of ``psi``."""
    sv, _ = _sorted_cells(psi, None)
    meas, _ = _clip(sv, None, psi.mesh.cell_areas, float(a), False)
    return float(meas.sum())


def superlevel_integral(g: ScalarField, psi: NodalField, a: float) -> float:
    """Exact integral of ``g`` over ``{psi > a}``."""
    _require_same_mesh(g, psi)
    sv, sg = _sorted_cells(psi, g)
    _, integral = _clip(sv, sg, psi.mesh.cell_areas, float(a), isinstance(g, CellField))
    return float(integral.sum())


class SuperlevelCalculator:
    """Repeated superlevel queries against a fixed ``psi``.

    Sorting the vertex values once and restricting each query to the cells
    whose value range meets the requested band keeps ladder-sized workloads
    cheap.
    """

    def __init__(self, psi: NodalField):
        self.psi = psi
        self.mesh = psi.mesh
        self.sorted_values, _ = _sorted_cells(psi, None)
        self.cell_min = self.sorted_values[:, 0]
        self.cell_max = self.sorted_values[:, -1]
        self._order = np.argsort(psi.cell_values(), axis=1, kind="stable")

    def _sorted_g(self, g: ScalarField | None):
        if g is None:
            return None, False
        _require_same_mesh(g, self.psi)
        if isinstance(g, CellField):
            return g.values, True
        return np.take_along_axis(g.cell_values(), self._order, axis=1), False

    def area(self, a: float) -> float:
        meas, _ = _clip(self.sorted_values, None, self.mesh.cell_areas, float(a), False)
        return float(meas.sum())

    def integral(self, g: ScalarField, a: float) -> float:
        sg, cellwise = self._sorted_g(g)
        _, integral = _clip(self.sorted_values, sg, self.mesh.cell_areas, float(a), cellwise)
        return float(integral.sum())

    def band_cells(self, lo: float, hi: float) -> np.ndarray:
        """Indices of cells whose closure meets ``lo <= psi <= hi``."""
        return np.flatnonzero((self.cell_min <= hi) & (self.cell_max >= lo))

    def shell(self, g: ScalarField | None, lo: float, hi: float) -> tuple[float, float]:
        """Measure of ``{lo < psi <= hi}`` and the integral of ``g`` over it."""
        idx = np.flatnonzero((self.cell_min < hi) & (self.cell_max > lo))
        sv = self.sorted_values[idx]
        vols = self.mesh.cell_areas[idx]
        sg, cellwise = self._sorted_g(g)
        if sg is not None:
            sg = sg[idx]
        m_lo, i_lo = _clip(sv, sg, vols, float(lo), cellwise)
        m_hi, i_hi = _clip(sv, sg, vols, float(hi), cellwise)
        measure = float(m_lo.sum() - m_hi.sum())
        if sg is None:
            return measure, measure
        return measure, float(i_lo.sum() - i_hi.sum())


# ---------------------------------------------------------------------------
# Plain-text IO


def write_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Write ``nodes N triangles T`` then node rows ``x y flag`` then cell rows."""
    flags = np.zeros(mesh.n_nodes, dtype=int)
    flags[mesh.boundary_nodes] = 1
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_cells}"]
    xy = mesh.nodes if mesh.dim == 2 else np.hstack([mesh.nodes, np.zeros((mesh.n_nodes, 1))])
    lines += [f"{x!r} {y!r} {b}" for (x, y), b in zip(xy.tolist(), flags.tolist())]
    lines += [" ".join(str(i) for i in cell) for cell in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> TriMesh:
    """Inverse of :func:`write_mesh`; two indices per cell row mean a 1D mesh."""
    rows = Path(path).read_text().split("\n")
    head = rows[0].split()
    if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
        raise ValueError(f"{path}: bad mesh header {rows[0]!r}")
    n, t = int(head[1]), int(head[3])
    node_rows = np.array([r.split() for r in rows[1 : 1 + n]], dtype=float)
    cell_rows = np.array([r.split() for r in rows[1 + n : 1 + n + t]], dtype=np.int64)
    dim = cell_rows.shape[1] - 1
    nodes = node_rows[:, :dim]
    return TriMesh(nodes, cell_rows, np.flatnonzero(node_rows[:, 2] != 0))


def write_field(f: ScalarField, path: str | Path) -> None:
    Path(path).write_text("\n".join(repr(v) for v in f.values.tolist()) + "\n")


def read_field(mesh: TriMesh, path: str | Path) -> NodalField:
    values = np.array(Path(path).read_text().split(), dtype=float)
    return NodalField(mesh, values)
