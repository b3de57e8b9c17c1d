"""Nested tetrahedral meshes of the unit cube.

Level 0 is the 2x2x2 cube grid, each cube split into the six Kuhn
(Freudenthal) tetrahedra that share the cube's main diagonal.  Finer levels
are produced by red refinement (every tetrahedron cut into eight), so
level ``l`` has ``48 * 8**l`` tetrahedra on the grid of spacing
``2**-(l + 1)``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import ClassificationError, ResourceError, StructureError, ValidationError

MAX_LEVEL = 8
BOUNDARY_TOL = 1e-12

# local vertex triples of the four faces of a tetrahedron
_TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
_TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])

# Children of a Kuhn tetrahedron (x0, x1, x2, x3), vertices ordered along the
# monotone path from the low to the high cube corner.  Entries 0..3 refer to
# the parent vertices, 4..9 to the midpoints of the edges in _TET_EDGES order
# (x01, x02, x03, x12, x13, x23).  The interior octahedron is split along
# x02-x13, which keeps every child a Kuhn tetrahedron of the finer grid.
_X01, _X02, _X03, _X12, _X13, _X23 = range(4, 10)
_CHILDREN = np.array([
    [0, _X01, _X02, _X03],
    [_X01, 1, _X12, _X13],
    [_X02, _X12, 2, _X23],
    [_X03, _X13, _X23, 3],
    [_X01, _X02, _X03, _X13],
    [_X01, _X02, _X12, _X13],
    [_X02, _X03, _X13, _X23],
    [_X02, _X12, _X13, _X23],
])


class BoundaryTag(enum.IntEnum):
    Gamma0 = 0  # x1 = 1
    Gamma1 = 1  # x1 = 0
    Gamma2 = 2  # rest of the boundary


def classify_boundary_face(centroid) -> BoundaryTag:
    """Tag of a boundary face from its centroid."""
    tags = classify_boundary_points(np.asarray(centroid, dtype=float)[None, :])
    return BoundaryTag(int(tags[0]))


def classify_boundary_points(points: np.ndarray) -> np.ndarray:
    """Vectorised :func:`classify_boundary_face` for an ``(n, 3)`` array."""
    points = np.asarray(points, dtype=float)
    inside = np.all((points >= -BOUNDARY_TOL) & (points <= 1 + BOUNDARY_TOL), axis=1)
    on_face = np.any((np.abs(points) <= BOUNDARY_TOL) | (np.abs(points - 1) <= BOUNDARY_TOL), axis=1)
    bad = ~(inside & on_face)
    if np.any(bad):
        raise ClassificationError(f"point {points[np.argmax(bad)]} is not on the boundary of the unit cube")
    tags = np.full(len(points), BoundaryTag.Gamma2, dtype=np.int8)
    tags[np.abs(points[:, 0]) <= BOUNDARY_TOL] = BoundaryTag.Gamma1
    tags[np.abs(points[:, 0] - 1) <= BOUNDARY_TOL] = BoundaryTag.Gamma0
    return tags


def _signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    x = vertices[tets]
    return np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Immutable tetrahedral mesh with tagged boundary faces.

    ``midpoint_parents[i]`` holds the two parent-mesh vertices whose edge
    midpoint is vertex ``n_parent_vertices + i``; parent vertices keep their
    indices in the child.
    """

    level: int
    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray
    boundary_tags: np.ndarray
    parent: Optional["TetMesh"] = field(default=None, repr=False)
    midpoint_parents: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @cached_property
    def volumes(self) -> np.ndarray:
        return _readonly(_signed_volumes(self.vertices, self.tets))

    @cached_property
    def centroids(self) -> np.ndarray:
        return _readonly(self.vertices[self.tets].mean(axis=1))

    @cached_property
    def face_areas(self) -> np.ndarray:
        x = self.vertices[self.boundary_faces]
        return _readonly(0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1))

    def ancestor(self, level: int) -> "TetMesh":
        mesh = self
        while mesh.level > level:
            if mesh.parent is None:
                raise StructureError(f"mesh at level {mesh.level} has no parent")
            mesh = mesh.parent
        if mesh.level != level:
            raise StructureError(f"no ancestor at level {level}")
        return mesh

    def area_by_tag(self) -> dict:
        return {tag: float(self.face_areas[self.boundary_tags == tag].sum()) for tag in BoundaryTag}


def _boundary(vertices: np.ndarray, tets: np.ndarray):
    faces = np.sort(tets[:, _TET_FACES].reshape(-1, 3), axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    bfaces = uniq[counts == 1]
    tags = classify_boundary_points(vertices[bfaces].mean(axis=1))
    return bfaces, tags


def _orient(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    neg = _signed_volumes(vertices, tets) < 0
    tets = tets.copy()
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    return tets


def _make(level, vertices, tets, parent=None, midpoint_parents=None) -> TetMesh:
    tets = _orient(vertices, tets)
    bfaces, tags = _boundary(vertices, tets)
    return TetMesh(
        level=level,
        vertices=_readonly(vertices),
        tets=_readonly(tets),
        boundary_faces=_readonly(bfaces),
        boundary_tags=_readonly(tags),
        parent=parent,
        midpoint_parents=None if midpoint_parents is None else _readonly(midpoint_parents),
    )


def kuhn_grid(n: int):
    """Vertices and Kuhn tetrahedra of the ``n**3`` cube grid on [0, 1]^3.

    Tetrahedra are returned with vertices in monotone-path order (not
    orientation-corrected).
    """
    ticks = np.linspace(0.0, 1.0, n + 1)
    vertices = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)

    def index(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    cubes = np.stack(np.meshgrid(*(np.arange(n),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = cubes.copy()
        path = [index(*corner.T)]
        for axis in perm:
            corner[:, axis] += 1
            path.append(index(*corner.T))
        tets.append(np.stack(path, axis=1))
    return vertices, np.concatenate(tets)


def refine(mesh: TetMesh) -> TetMesh:
    """Red refinement: each tetrahedron is replaced by eight children."""
    if mesh.level + 1 > MAX_LEVEL:
        raise ResourceError(f"refinement beyond level {MAX_LEVEL} is not supported")
    v = mesh.vertices
    # Kuhn tetrahedra have strictly increasing coordinate sums along their path
    order = np.argsort(v[mesh.tets].sum(axis=2), axis=1, kind="stable")
    tets = np.take_along_axis(mesh.tets, order, axis=1)

    edges = np.sort(tets[:, _TET_EDGES].reshape(-1, 2), axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(len(tets), 6)
    mids = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    vertices = np.concatenate([v, mids])

    local = np.concatenate([tets, mesh.n_vertices + inverse], axis=1)
    children = local[:, _CHILDREN].reshape(-1, 4)
    return _make(mesh.level + 1, vertices, children, parent=mesh, midpoint_parents=uniq)


_CACHE: dict = {}


def build_cube_mesh(level: int) -> TetMesh:
    """Level-``level`` mesh of the unit cube (48 * 8**level tetrahedra).

    Meshes are built by refining level 0, so every result carries its full
    parent chain.  Results are cached; meshes are immutable.
    """
    if not isinstance(level, (int, np.integer)) or level < 0:
        raise ValidationError(f"invalid mesh level {level!r}")
    if level > MAX_LEVEL:
        raise ResourceError(f"mesh level {level} exceeds the limit {MAX_LEVEL}")
    level = int(level)
    if level in _CACHE:
        return _CACHE[level]
    if level == 0:
        mesh = _make(0, *kuhn_grid(2))
    else:
        mesh = refine(build_cube_mesh(level - 1))
    _CACHE[level] = mesh
    return mesh


def prolong(coarse, fine_mesh: TetMesh):
    """Nodal interpolant of a coarse P1 function on a nested finer mesh.

    ``coarse`` is any object with ``mesh`` and ``values`` attributes
    (normally :class:`aniso_uq.fem.FEFunction`); an object of the same type
    is returned.
    """
    values = prolong_values(coarse.values, coarse.mesh, fine_mesh)
    return type(coarse)(fine_mesh, values)


def prolong_values(values: np.ndarray, coarse_mesh: TetMesh, fine_mesh: TetMesh) -> np.ndarray:
    if fine_mesh.level < coarse_mesh.level:
        raise StructureError("target mesh is coarser than the source mesh")
    chain = []
    mesh = fine_mesh
    while mesh.level > coarse_mesh.level:
        chain.append(mesh)
        if mesh.parent is None:
            raise StructureError("meshes are not nested")
        mesh = mesh.parent
    if mesh is not coarse_mesh and not (
        mesh.n_vertices == coarse_mesh.n_vertices and np.array_equal(mesh.vertices, coarse_mesh.vertices)
    ):
        raise StructureError("meshes are not nested")
    out = np.asarray(values, dtype=float)
    if len(out) != coarse_mesh.n_vertices:
        raise StructureError("value vector does not match the coarse mesh")
    for step in reversed(chain):
        mp = step.midpoint_parents
        out = np.concatenate([out, 0.5 * (out[mp[:, 0]] + out[mp[:, 1]])])
    return out
