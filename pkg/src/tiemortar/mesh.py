"""Structured triangulations of rectangles, uniform refinement, and interface trace meshes.

Vertices are stored as an ``(nv, 2)`` float array, triangles as an ``(nt, 3)``
counter-clockwise index array. Boundary edges are stored with the orientation
they have in their (unique) owning triangle, together with a :class:`Tag`.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import EmptyInterfaceError, GeometryError

COORD_TOL = 1e-12
SIDES = ("bottom", "right", "top", "left")


class Tag(str, enum.Enum):
    DIRICHLET = "DIRICHLET"
    NEUMANN = "NEUMANN"
    INTERFACE = "INTERFACE"


@dataclass(frozen=True, eq=False)
class Mesh2D:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(ne, 2)`` with the smaller index first."""
        return self._topology[0]

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """``(nt, 3)`` edge indices; column j is the edge (v_j, v_{j+1 mod 3})."""
        return self._topology[1]

    @cached_property
    def _topology(self):
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """``(ne, 2)`` adjacent triangles per edge, -1 where the edge is on the boundary."""
        out = -np.ones((len(self.edges), 2), dtype=np.int64)
        count = np.zeros(len(self.edges), dtype=np.int64)
        for tri, row in enumerate(self.triangle_edges):
            for e in row:
                out[e, count[e]] = tri
                count[e] += 1
        return out

    def edge_index(self, a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        idx = self._edge_lookup.get(key)
        if idx is None:
            raise GeometryError(f"({a}, {b}) is not an edge of the mesh")
        return idx

    @cached_property
    def _edge_lookup(self) -> dict:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}

    def boundary_triangle(self, k: int) -> int:
        """Owning triangle of boundary edge ``k``."""
        a, b = self.boundary_edges[k]
        return int(self.edge_triangles[self.edge_index(a, b), 0])

    def edges_with_tag(self, tag: Tag) -> np.ndarray:
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask]

    def vertices_with_tag(self, tag: Tag) -> np.ndarray:
        return np.unique(self.edges_with_tag(tag))

    @property
    def max_edge_length(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def translated(self, shift) -> Mesh2D:
        return Mesh2D(self.vertices + np.asarray(shift, dtype=float), self.triangles,
                      self.boundary_edges, self.boundary_tags)

    def validate(self) -> None:
        """Check orientation and boundary bookkeeping; raise GeometryError on failure."""
        if np.any(self.areas <= 0.0):
            raise GeometryError("triangles must have positive signed area")
        boundary = np.flatnonzero(self.edge_triangles[:, 1] < 0)
        tagged = {tuple(sorted(map(int, e))) for e in self.boundary_edges}
        if len(tagged) != len(self.boundary_edges):
            raise GeometryError("boundary edge tagged more than once")
        expected = {tuple(map(int, self.edges[e])) for e in boundary}
        if tagged != expected:
            raise GeometryError("tagged edges do not coincide with the mesh boundary")


def build_rect_mesh(lower_left, upper_right, nx: int, ny: int, tags: dict,
                    xs=None, ys=None) -> Mesh2D:
    """Structured triangulation of an axis-aligned rectangle.

    Each cell is split along its lower-left to upper-right diagonal.

    Parameters
    ----------
    lower_left, upper_right : pair of float
        Opposite corners of the rectangle.
    nx, ny : int
        Number of cells in each direction.
    tags : dict
        Maps each of ``"bottom"``, ``"right"``, ``"top"``, ``"left"`` to a :class:`Tag`.
    xs, ys : array_like, optional
        Explicit (graded) grid lines overriding the uniform spacing. Their
        end points must equal the rectangle bounds.
    """
    x0, y0 = map(float, lower_left)
    x1, y1 = map(float, upper_right)
    if nx < 1 or ny < 1:
        raise GeometryError("nx and ny must be at least 1")
    if not (x1 > x0 and y1 > y0):
        raise GeometryError("upper_right must exceed lower_left componentwise")
    missing = set(SIDES) - set(tags)
    if missing:
        raise GeometryError(f"no tag given for sides {sorted(missing)}")
    xs = np.linspace(x0, x1, nx + 1) if xs is None else _grid_lines(xs, x0, x1, nx)
    ys = np.linspace(y0, y1, ny + 1) if ys is None else _grid_lines(ys, y0, y1, ny)

    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    ii, jj = np.arange(nx), np.arange(ny)
    sides = {
        "bottom": np.column_stack([vid(ii, 0), vid(ii + 1, 0)]),
        "right": np.column_stack([vid(nx, jj), vid(nx, jj + 1)]),
        "top": np.column_stack([vid(ii + 1, ny), vid(ii, ny)]),
        "left": np.column_stack([vid(0, jj + 1), vid(0, jj)]),
    }
    edges = np.concatenate([sides[s] for s in SIDES]).astype(np.int64)
    edge_tags = tuple(Tag(tags[s]) for s in SIDES for _ in range(len(sides[s])))
    return Mesh2D(vertices, triangles.astype(np.int64), edges, edge_tags)


def _grid_lines(values, lo, hi, n):
    v = np.asarray(values, dtype=float)
    if len(v) != n + 1 or abs(v[0] - lo) > COORD_TOL or abs(v[-1] - hi) > COORD_TOL:
        raise GeometryError("explicit grid lines must span the rectangle with n+1 entries")
    if np.any(np.diff(v) <= 0):
        raise GeometryError("grid lines must be strictly increasing")
    return v


def refine_uniform(mesh: Mesh2D) -> Mesh2D:
    """Split every triangle into four through its edge midpoints."""
    return _refine(mesh)[0]


def _refine(mesh: Mesh2D):
    """Refine and also return the old-edge-to-midpoint-vertex map."""
    nv = mesh.n_vertices
    edges = mesh.edges
    mid = nv + np.arange(len(edges))
    vertices = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    t = mesh.triangles
    m01, m12, m20 = (mid[mesh.triangle_edges[:, k]] for k in range(3))
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)

    new_edges = []
    new_tags = []
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        m = mid[mesh.edge_index(a, b)]
        new_edges += [(a, m), (m, b)]
        new_tags += [tag, tag]
    refined = Mesh2D(vertices, children, np.asarray(new_edges, dtype=np.int64), tuple(new_tags))
    return refined, mid


# --- interface trace --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TraceMesh:
    """Ordered 1D partition of a straight interface.

    ``breakpoints`` are arc-length coordinates measured from ``origin`` along
    the unit ``tangent``. When extracted from a mesh, ``edge_vertices`` holds
    the (start, end) mesh vertices of each edge in arc-length order,
    ``edge_triangles`` the owning triangle, and ``normal`` the outward unit
    normal of that mesh.
    """

    breakpoints: np.ndarray
    origin: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    edge_vertices: np.ndarray | None = None
    edge_triangles: np.ndarray | None = None

    @classmethod
    def from_breakpoints(cls, breakpoints, origin=(0.0, 0.0), tangent=(0.0, 1.0)) -> TraceMesh:
        b = np.asarray(breakpoints, dtype=float)
        if len(b) < 2 or abs(b[0]) > COORD_TOL or np.any(np.diff(b) <= 0):
            raise GeometryError("breakpoints must start at 0 and increase strictly")
        t = np.asarray(tangent, dtype=float)
        t = t / np.linalg.norm(t)
        return cls(b, np.asarray(origin, dtype=float), t, np.array([t[1], -t[0]]))

    @property
    def n_edges(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def edges(self) -> np.ndarray:
        return np.column_stack([self.breakpoints[:-1], self.breakpoints[1:]])

    @property
    def length(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    @property
    def vertex_chain(self) -> np.ndarray:
        """Mesh vertices at the breakpoints, in arc-length order."""
        if self.edge_vertices is None:
            raise GeometryError("trace mesh is not linked to a 2D mesh")
        return np.append(self.edge_vertices[:, 0], self.edge_vertices[-1, 1])

    def points(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.tangent

    def locate(self, s) -> np.ndarray:
        """Index of the edge containing each arc-length coordinate."""
        idx = np.searchsorted(self.breakpoints, np.asarray(s, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_edges - 1)


def extract_trace_mesh(mesh: Mesh2D, reverse: bool = False) -> TraceMesh:
    """Build the trace partition induced on the INTERFACE-tagged edges.

    Orientation follows increasing y (increasing x for a horizontal
    interface); ``reverse`` flips it.
    """
    iedges = mesh.edges_with_tag(Tag.INTERFACE)
    if len(iedges) == 0:
        raise EmptyInterfaceError("mesh has no INTERFACE-tagged edges")
    pts = mesh.vertices[np.unique(iedges)]
    span = pts - pts[0]
    far = pts[np.argmax(np.einsum("ij,ij->i", span, span))]
    tangent = far - pts[0]
    tangent /= np.linalg.norm(tangent)
    if tangent[1] < -COORD_TOL or (abs(tangent[1]) <= COORD_TOL and tangent[0] < 0):
        tangent = -tangent
    if reverse:
        tangent = -tangent
    normal_line = np.array([-tangent[1], tangent[0]])
    offset = (pts - pts[0]) @ normal_line
    if np.max(np.abs(offset)) > COORD_TOL:
        raise GeometryError("interface edges are not collinear")

    s_all = (pts - pts[0]) @ tangent
    origin = pts[0] + s_all.min() * tangent
    s_of = lambda v: float((mesh.vertices[v] - origin) @ tangent)  # noqa: E731

    starts, ordered = [], []
    for a, b in iedges:
        sa, sb = s_of(a), s_of(b)
        if sa > sb:
            a, b, sa, sb = b, a, sb, sa
        starts.append(sa)
        ordered.append((a, b, sb))
    order = np.argsort(starts, kind="stable")
    breakpoints = [0.0]
    edge_vertices = []
    for k in order:
        a, b, sb = ordered[k]
        if abs(starts[k] - breakpoints[-1]) > COORD_TOL:
            raise GeometryError("interface edges do not form a contiguous segment")
        breakpoints.append(sb)
        edge_vertices.append((a, b))
    breakpoints = np.asarray(breakpoints)
    breakpoints[0] = 0.0
    edge_vertices = np.asarray(edge_vertices, dtype=np.int64)

    owners = np.array([mesh.edge_triangles[mesh.edge_index(a, b), 0] for a, b in edge_vertices])
    tri = mesh.triangles[owners[0]]
    a, b = edge_vertices[0]
    inner = mesh.vertices[[v for v in tri if v not in (a, b)][0]]
    normal = normal_line if (inner - mesh.vertices[a]) @ normal_line < 0 else -normal_line
    return TraceMesh(breakpoints, origin, tangent, normal, edge_vertices, owners)


def refine_trace(trace: TraceMesh) -> TraceMesh:
    """Bisect every edge of a trace partition (geometry only, no mesh linkage)."""
    b = trace.breakpoints
    fine = np.empty(2 * len(b) - 1)
    fine[0::2] = b
    fine[1::2] = 0.5 * (b[:-1] + b[1:])
    return TraceMesh(fine, trace.origin, trace.tangent, trace.normal)


# --- text format --------------------------------------------------------------


def format_mesh(mesh: Mesh2D) -> str:
    lines = ["mesh2d v1", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {tag.value}" for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    return "\n".join(lines) + "\n"


def parse_mesh(text: str) -> Mesh2D:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "mesh2d v1":
        raise GeometryError("missing 'mesh2d v1' header")
    pos = 1

    def section(name):
        nonlocal pos
        head = lines[pos].split()
        if len(head) != 2 or head[0] != name:
            raise GeometryError(f"expected '{name} N' at line {pos + 1}")
        n = int(head[1])
        body = [ln.split() for ln in lines[pos + 1:pos + 1 + n]]
        pos += 1 + n
        return body

    verts = np.array(section("vertices"), dtype=float).reshape(-1, 2)
    tris = np.array(section("triangles"), dtype=np.int64).reshape(-1, 3)
    bnd = section("boundary")
    edges = np.array([[int(r[0]), int(r[1])] for r in bnd], dtype=np.int64).reshape(-1, 2)
    tags = tuple(Tag(r[2]) for r in bnd)
    return Mesh2D(verts, tris, edges, tags)


def write_mesh(mesh: Mesh2D, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(format_mesh(mesh))
    os.replace(tmp, path)


def read_mesh(path) -> Mesh2D:
    with open(path, encoding="utf-8") as fh:
        return parse_mesh(fh.read())
