"""Interval and disk meshes with exact cell quadrature.

1D meshes are graded geometrically toward tagged boundary points so that
minimizing sequences can concentrate there.  2D meshes triangulate the unit
disk (a structured square grid mapped radially onto the disk); the disk is
identified with its polygonal mesh so that divergence/Green identities hold
to machine precision for piecewise-affine data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Gauss-Legendre nodes/weights on [0,1], exact for polynomials up to degree 11.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

# Degree-5 symmetric triangle rule (7 points, barycentric coords and weights).
_S15 = np.sqrt(15.0)
_A1 = (6.0 + _S15) / 21.0
_A2 = (6.0 - _S15) / 21.0
_W1 = (155.0 + _S15) / 1200.0
_W2 = (155.0 - _S15) / 1200.0
_TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [1 - 2 * _A1, _A1, _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [_A1, _A1, 1 - 2 * _A1],
        [1 - 2 * _A2, _A2, _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [_A2, _A2, 1 - 2 * _A2],
    ]
)
_TRI_W = np.array([9.0 / 40.0, _W1, _W1, _W1, _W2, _W2, _W2])


@dataclass(frozen=True)
class IntervalMesh:
    """Partition of [a, b]; cells are the intervals between consecutive nodes."""

    nodes: np.ndarray
    graded_points: tuple[float, ...] = ()

    kind = "interval"
    dim = 1

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("interval mesh needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def ncells(self) -> int:
        return self.nodes.size - 1

    @property
    def cell_volumes(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def cell_centers(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def boundary_points(self) -> list[tuple[float, float]]:
        """(location, outer normal) for the two endpoints."""
        return [(self.a, -1.0), (self.b, 1.0)]

    def outer_normal(self, x: float) -> float:
        if abs(x - self.a) <= abs(x - self.b):
            return -1.0
        return 1.0

    def cell_integrals(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Per-cell integrals of a scalar function, Gauss quadrature per cell."""
        left = self.nodes[:-1][:, None]
        h = self.cell_volumes[:, None]
        pts = left + h * _GL_X[None, :]
        vals = np.asarray(g(pts), dtype=float)
        return (vals * _GL_W[None, :]).sum(axis=1) * self.cell_volumes

    def interior_node_indices(self) -> np.ndarray:
        return np.arange(1, self.nodes.size - 1)

    def refine(self) -> "IntervalMesh":
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        nodes = np.sort(np.concatenate([self.nodes, mid]))
        return IntervalMesh(nodes, self.graded_points)

    def locate(self, x: float) -> int:
        """Index of the cell containing x (clamped to the domain)."""
        i = int(np.searchsorted(self.nodes, x, side="right") - 1)
        return min(max(i, 0), self.ncells - 1)

    def to_record(self) -> dict:
        return {"kind": "interval", "nodes": self.nodes.tolist(), "graded": list(self.graded_points)}


def interval_mesh(
    a: float = 0.0,
    b: float = 1.0,
    n: int = 16,
    grade_to: tuple[float, ...] = (),
    grade_levels: int = 40,
    ratio: float = 0.5,
    extra_nodes: tuple[float, ...] = (),
) -> IntervalMesh:
    """Uniform n-cell mesh, geometrically refined toward the points in grade_to.

    Grading splits the cell adjacent to a tagged endpoint into `grade_levels`
    geometric layers with the given ratio (default 0.5), so the smallest cell
    has width ~ (b-a)/n * ratio**grade_levels.
    """
    if not b > a:
        raise ValueError("need b > a")
    nodes = set(np.linspace(a, b, n + 1).tolist())
    h = (b - a) / n
    for p in grade_to:
        if not (np.isclose(p, a) or np.isclose(p, b)):
            raise ValueError("grading is supported at the endpoints only")
        for j in range(1, grade_levels + 1):
            off = h * ratio**j
            nodes.add(p + off if np.isclose(p, a) else p - off)
    for x in extra_nodes:
        if a < x < b:
            nodes.add(float(x))
    return IntervalMesh(np.array(sorted(nodes)), graded_points=tuple(grade_to))


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangulation; the domain is the polygon covered by the cells."""

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) int
    boundary_nodes: np.ndarray  # int indices into vertices
    kind_label: str = "disk"

    dim = 2
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def kind(self) -> str:
        return self.kind_label

    @property
    def ncells(self) -> int:
        return self.triangles.shape[0]

    def _geometry(self):
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]  # (nt,3,2)
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            areas = 0.5 * np.abs(det)
            # gradients of the three barycentric basis functions, (nt,3,2)
            grads = np.empty((self.ncells, 3, 2))
            grads[:, 1, 0] = d2[:, 1] / det
            grads[:, 1, 1] = -d2[:, 0] / det
            grads[:, 2, 0] = -d1[:, 1] / det
            grads[:, 2, 1] = d1[:, 0] / det
            grads[:, 0] = -grads[:, 1] - grads[:, 2]
            self._cache["areas"] = areas
            self._cache["grads"] = grads
        return self._cache["areas"], self._cache["grads"]

    @property
    def cell_volumes(self) -> np.ndarray:
        return self._geometry()[0]

    @property
    def basis_gradients(self) -> np.ndarray:
        return self._geometry()[1]

    @property
    def cell_centers(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def cell_integrals(self, g) -> np.ndarray:
        p = self.vertices[self.triangles]  # (nt,3,2)
        pts = np.einsum("qi,tid->tqd", _TRI_BARY, p)
        vals = np.asarray(g(pts.reshape(-1, 2))).reshape(self.ncells, _TRI_W.size)
        return (vals * _TRI_W[None, :]).sum(axis=1) * self.cell_volumes

    def gradients_of(self, values: np.ndarray) -> np.ndarray:
        """Per-triangle gradient of a P1 field; values (nv,) or (nv, M) -> (nt, M, 2)."""
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        _, grads = self._geometry()
        return np.einsum("tiM,tid->tMd", v[self.triangles], grads)

    def boundary_edges(self) -> np.ndarray:
        """(ne, 2) vertex index pairs on the boundary, counter-clockwise."""
        if "bedges" not in self._cache:
            edges = {}
            for t in self.triangles:
                for i in range(3):
                    e = (int(t[i]), int(t[(i + 1) % 3]))
                    key = (min(e), max(e))
                    edges.setdefault(key, []).append(e)
            bnd = [orient[0] for orient in edges.values() if len(orient) == 1]
            # orientation from the single adjacent triangle is counter-clockwise
            self._cache["bedges"] = np.array(bnd, dtype=int)
        return self._cache["bedges"]

    def boundary_edge_normals(self) -> np.ndarray:
        e = self.boundary_edges()
        tang = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        nrm = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        return nrm / np.linalg.norm(nrm, axis=1, keepdims=True)

    def boundary_edge_lengths(self) -> np.ndarray:
        e = self.boundary_edges()
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def outer_normal(self, x) -> np.ndarray:
        """Outward normal at a boundary location of the unit disk (x on the circle)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        if r == 0:
            raise ValueError("not a boundary point")
        return x / r

    def refine(self) -> "TriMesh":
        """Midpoint subdivision; no reprojection, so P1 spaces nest across levels."""
        return self.refine_with_parents()[0]

    def refine_with_parents(self) -> tuple["TriMesh", np.ndarray]:
        """Refine and return (mesh, parents): parents[k] are the two coarse
        vertices averaging to fine vertex k (k, k for surviving vertices)."""
        verts = [v for v in self.vertices]
        parents = [(i, i) for i in range(len(verts))]
        midcache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midcache:
                verts.append(0.5 * (self.vertices[i] + self.vertices[j]))
                parents.append(key)
                midcache[key] = len(verts) - 1
            return midcache[key]

        tris = []
        for a, b, c in self.triangles:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            tris += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        mesh = TriMesh(np.array(verts), np.array(tris, dtype=int), np.array([], dtype=int), self.kind_label)
        bset = set()
        for e in mesh.boundary_edges():
            bset.update(int(v) for v in e)
        out = TriMesh(mesh.vertices, mesh.triangles, np.array(sorted(bset), dtype=int), self.kind_label)
        return out, np.array(parents, dtype=int)

    def to_record(self) -> dict:
        return {
            "kind": self.kind_label,
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_nodes": self.boundary_nodes.tolist(),
        }


def _square_to_disk(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    norms = np.linalg.norm(p, axis=-1)
    mask = norms > 0
    chub = np.max(np.abs(p), axis=-1)
    out[mask] = p[mask] * (chub[mask] / norms[mask])[:, None]
    return out


def disk_mesh(level: int = 3, rotation: np.ndarray | None = None) -> TriMesh:
    """Structured triangulation of the unit disk.

    A (2n+1)^2 grid on [-1,1]^2 (n = 2**level) is squeezed radially onto the
    disk; grid lines through the origin stay straight, so any diameter along a
    grid axis is a union of mesh edges.  An optional rotation is applied to
    all vertices.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    n = 2**level
    xs = np.linspace(-1.0, 1.0, 2 * n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    verts = _square_to_disk(pts)
    if rotation is not None:
        verts = verts @ np.asarray(rotation, dtype=float).T

    def vid(i, j):
        return i * (2 * n + 1) + j

    tris = []
    for i in range(2 * n):
        for j in range(2 * n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            # consistent diagonal keeps refinement and halving lines clean
            tris.append([a, b, c])
            tris.append([a, c, d])
    ii, jj = np.meshgrid(np.arange(2 * n + 1), np.arange(2 * n + 1), indexing="ij")
    on_b = (np.abs(gx) == 1.0) | (np.abs(gy) == 1.0)
    bnodes = np.array([vid(i, j) for i, j in zip(ii[on_b], jj[on_b])], dtype=int)
    return TriMesh(verts, np.array(tris, dtype=int), np.sort(bnodes))


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_to(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """2D rotation R with w = R v (unit vectors)."""
    a = np.arctan2(w[1], w[0]) - np.arctan2(v[1], v[0])
    return rotation_2d(a)


def mesh_from_record(rec: dict):
    if rec["kind"] == "interval":
        return IntervalMesh(np.array(rec["nodes"]), tuple(rec.get("graded", ())))
    return TriMesh(
        np.array(rec["vertices"]),
        np.array(rec["triangles"], dtype=int),
        np.array(rec["boundary_nodes"], dtype=int),
        rec["kind"],
    )
