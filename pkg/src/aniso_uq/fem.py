"""P1 finite elements for ``-div(A grad u) = f`` with element-wise constant A.

Dirichlet conditions are homogeneous and eliminated symmetrically; pure
Neumann problems are solved in the space of functions with zero mean by
projecting out constants inside CG.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .diffusion import eval_A
from .errors import AssemblyError, ConvergenceError, StructureError, ValidationError
from .kl import KLExpansion
from .mesh import BoundaryTag, TetMesh

# boundary areas of the unit cube per tag
CUBE_AREAS = {BoundaryTag.Gamma0: 1.0, BoundaryTag.Gamma1: 1.0, BoundaryTag.Gamma2: 4.0}
NORM_KINDS = ("L2", "H1", "H1_semi", "W11")


@dataclass(frozen=True, eq=False)
class FEFunction:
    mesh: TetMesh = field(repr=False)
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_vertices,):
            raise StructureError(f"expected {self.mesh.n_vertices} nodal values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def interpolate(cls, mesh: TetMesh, func) -> "FEFunction":
        """Nodal interpolant of ``func``, called with the ``(n, 3)`` vertex array."""
        return cls(mesh, np.broadcast_to(func(mesh.vertices), (mesh.n_vertices,)).astype(float))

    def __add__(self, other):
        return FEFunction(self.mesh, self.values + _values_on(self.mesh, other))

    def __sub__(self, other):
        return FEFunction(self.mesh, self.values - _values_on(self.mesh, other))

    def __mul__(self, scalar):
        return FEFunction(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__


def _values_on(mesh, other):
    if isinstance(other, FEFunction):
        if other.mesh is not mesh:
            raise StructureError("functions live on different meshes")
        return other.values
    return other


@dataclass(frozen=True)
class BVPData:
    """Constant source ``f``, constant Neumann data per tag, Dirichlet tags."""

    f: float = 0.0
    g: dict = field(default_factory=dict)
    dirichlet_tags: frozenset = frozenset()

    def __post_init__(self):
        tags = frozenset(BoundaryTag(t) for t in self.dirichlet_tags)
        g = {BoundaryTag(k): float(v) for k, v in self.g.items()}
        object.__setattr__(self, "dirichlet_tags", tags)
        object.__setattr__(self, "g", g)
        if self.pure_neumann:
            flux = sum(g.get(tag, 0.0) * CUBE_AREAS[tag] for tag in BoundaryTag)
            if abs(self.f * 1.0 + flux) > 1e-10:
                raise ValidationError("pure Neumann data violate the compatibility condition int f = -int g")

    @property
    def pure_neumann(self) -> bool:
        return not self.dirichlet_tags

    def neumann_value(self, tag) -> float:
        tag = BoundaryTag(tag)
        if tag in self.dirichlet_tags:
            return 0.0
        return self.g.get(tag, 0.0)

    def scaled(self, factor: float) -> "BVPData":
        return BVPData(self.f * factor, {k: v * factor for k, v in self.g.items()}, self.dirichlet_tags)


def example_bvp(example: int) -> BVPData:
    """Boundary data of the two benchmark problems on the unit cube."""
    if example == 1:
        return BVPData(f=1.0, dirichlet_tags=frozenset(BoundaryTag))
    if example == 2:
        return BVPData(
            f=0.0,
            g={BoundaryTag.Gamma0: 1.0, BoundaryTag.Gamma1: -1.0},
            dirichlet_tags=frozenset({BoundaryTag.Gamma2}),
        )
    raise ValidationError(f"unknown example {example!r}; expected 1 or 2")


def p1_gradients(points: np.ndarray) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape ``(n, 4, 3)`` for ``(n, 4, 3)`` vertices."""
    edges = points[:, 1:] - points[:, :1]
    inv = np.linalg.inv(edges)  # columns are grad(lambda_1..3)
    g = np.empty(points.shape)
    g[:, 1:] = np.swapaxes(inv, 1, 2)
    g[:, 0] = -g[:, 1:].sum(axis=1)
    return g


def element_stiffness(points, A) -> np.ndarray:
    """Stiffness matrices ``|T| grad(phi_a) . A grad(phi_b)`` for one or many tets."""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 2
    if single:
        points = points[None]
    A = np.broadcast_to(np.asarray(A, dtype=float), (len(points), 3, 3))
    vol = np.abs(np.linalg.det(points[:, 1:] - points[:, :1])) / 6.0
    g = p1_gradients(points)
    K = np.einsum("t,tai,tij,tbj->tab", vol, g, A, g)
    return K[0] if single else K


class _Pattern(NamedTuple):
    free: np.ndarray
    mask: np.ndarray
    inverse: np.ndarray
    indices: np.ndarray
    indptr: np.ndarray


class P1Space:
    """Per-mesh geometric data and cached sparsity patterns."""

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        pts = mesh.vertices[mesh.tets]
        self.volumes = np.asarray(mesh.volumes)
        self.grads = p1_gradients(pts)
        self.nodal_weights = np.bincount(
            mesh.tets.reshape(-1), weights=np.repeat(self.volumes / 4.0, 4), minlength=mesh.n_vertices
        )
        self._patterns = {}

    def dirichlet_vertices(self, tags) -> np.ndarray:
        mesh = self.mesh
        marked = np.isin(mesh.boundary_tags, [int(t) for t in tags])
        out = np.zeros(mesh.n_vertices, dtype=bool)
        out[mesh.boundary_faces[marked].reshape(-1)] = True
        return out

    def pattern(self, tags) -> _Pattern:
        key = frozenset(int(t) for t in tags)
        if key not in self._patterns:
            free = np.flatnonzero(~self.dirichlet_vertices(key))
            renumber = np.full(self.mesh.n_vertices, -1)
            renumber[free] = np.arange(len(free))
            t = renumber[self.mesh.tets]
            rows = np.repeat(t, 4, axis=1).reshape(-1)
            cols = np.tile(t, (1, 4)).reshape(-1)
            mask = (rows >= 0) & (cols >= 0)
            nf = len(free)
            keys = rows[mask].astype(np.int64) * nf + cols[mask]
            uniq, inverse = np.unique(keys, return_inverse=True)
            indptr = np.concatenate([[0], np.cumsum(np.bincount(uniq // nf, minlength=nf))])
            self._patterns[key] = _Pattern(free, mask, inverse, (uniq % nf).astype(np.int32), indptr)
        return self._patterns[key]


_SPACES = weakref.WeakKeyDictionary()


def p1_space(mesh: TetMesh) -> P1Space:
    space = _SPACES.get(mesh)
    if space is None:
        space = _SPACES[mesh] = P1Space(mesh)
    return space


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Reduced system on the free vertices."""

    mesh: TetMesh = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    free: np.ndarray = field(repr=False)
    pure_neumann: bool
    nodal_weights: np.ndarray = field(repr=False)


def _check_spd(A: np.ndarray):
    if not np.allclose(A, np.swapaxes(A, 1, 2), rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise AssemblyError("element diffusion tensor is not symmetric")
    m1 = A[:, 0, 0]
    m2 = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    m3 = np.linalg.det(A)
    if np.any(m1 <= 0) or np.any(m2 <= 0) or np.any(m3 <= 0):
        raise AssemblyError("element diffusion tensor is not positive definite")


def load_vector(mesh: TetMesh, bvp: BVPData) -> np.ndarray:
    space = p1_space(mesh)
    b = bvp.f * space.nodal_weights
    g = np.array([bvp.neumann_value(t) for t in BoundaryTag])[mesh.boundary_tags]
    if np.any(g != 0):
        b = b + np.bincount(
            mesh.boundary_faces.reshape(-1), weights=np.repeat(g * mesh.face_areas / 3.0, 3), minlength=mesh.n_vertices
        )
    return b


def assemble_system(mesh: TetMesh, A_per_tet, bvp: BVPData, check: bool = True) -> LinearSystem:
    """Stiffness matrix and load vector with Dirichlet vertices eliminated."""
    space = p1_space(mesh)
    A = np.broadcast_to(np.asarray(A_per_tet, dtype=float), (mesh.n_tets, 3, 3))
    if check:
        _check_spd(A)
    K = np.einsum("t,tai,tij,tbj->tab", space.volumes, space.grads, A, space.grads)
    pat = space.pattern(bvp.dirichlet_tags)
    data = np.bincount(pat.inverse, weights=K.reshape(-1)[pat.mask], minlength=len(pat.indices))
    n = len(pat.free)
    matrix = sp.csr_matrix((data, pat.indices, pat.indptr), shape=(n, n))
    rhs = load_vector(mesh, bvp)[pat.free]
    return LinearSystem(mesh, matrix, rhs, pat.free, bvp.pure_neumann, space.nodal_weights)


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def conjugate_gradient(A, b, rtol: float = 1e-10, max_iter: Optional[int] = None, weights=None) -> CGResult:
    """Jacobi-preconditioned CG with relative residual ``|b - Ax| / |b| <= rtol``.

    With ``weights`` given, the system is treated as singular with kernel
    spanned by constants: the residual is kept orthogonal to constants and
    the ``weights``-weighted mean of the iterate is removed every step.
    """
    A = sp.csr_matrix(A) if not sp.issparse(A) else A
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = max(1000, 2 * n)
    x = np.zeros(n)
    if weights is not None:
        b = b - b.mean()
        wsum = weights.sum()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(x, 0, 0.0)
    diag = A.diagonal()
    dinv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    r = b.copy()
    it = 0
    while True:
        z = dinv * r
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            it += 1
            Ap = A @ p
            alpha = rz / (p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            if weights is not None:
                r -= r.mean()
                x -= (weights @ x) / wsum
            if np.linalg.norm(r) <= rtol * bnorm:
                break
            z = dinv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - A @ x
        if weights is not None:
            r -= r.mean()
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            return CGResult(x, it, float(res))
        if it >= max_iter:
            raise ConvergenceError(
                f"CG did not reach rtol={rtol:.1e} in {max_iter} iterations (residual {res:.3e})",
                residual=float(res),
                iterations=it,
            )


def solve_cg(system: LinearSystem, rtol: float = 1e-10, max_iter: Optional[int] = None) -> FEFunction:
    weights = system.nodal_weights if system.pure_neumann else None
    result = conjugate_gradient(system.matrix, system.rhs, rtol, max_iter, weights=weights)
    values = np.zeros(system.mesh.n_vertices)
    values[system.free] = result.x
    return FEFunction(system.mesh, values)


def solve_sample(
    mesh: TetMesh, kl: KLExpansion, a: float, y, bvp: BVPData, rtol: float = 1e-10, max_iter: Optional[int] = None
) -> FEFunction:
    """FE solution for one parameter value ``y``."""
    if kl.mesh is not mesh:
        raise StructureError("expansion was built on a different mesh")
    A = eval_A(kl.field(y), a)
    return solve_cg(assemble_system(mesh, A, bvp, check=False), rtol, max_iter)


def fe_norm(u: FEFunction, kind: str = "H1") -> float:
    """L2, H1, H1 seminorm or W^{1,1} norm of a P1 function.

    L2 and the seminorm are exact; the L1 part of W^{1,1} uses the vertex
    quadrature rule on every tet.
    """
    if kind not in NORM_KINDS:
        raise ValidationError(f"unknown norm {kind!r}; expected one of {NORM_KINDS}")
    space = p1_space(u.mesh)
    vol = space.volumes
    ut = u.values[u.mesh.tets]
    grad = np.einsum("ta,tai->ti", ut, space.grads)
    if kind == "W11":
        l1 = np.sum(vol / 4.0 * np.abs(ut).sum(axis=1))
        return float(l1 + np.sum(vol * np.linalg.norm(grad, axis=1)))
    semi2 = float(np.sum(vol * np.sum(grad**2, axis=1)))
    if kind == "H1_semi":
        return float(np.sqrt(semi2))
    l2sq = float(np.sum(vol / 20.0 * (np.sum(ut**2, axis=1) + ut.sum(axis=1) ** 2)))
    if kind == "L2":
        return float(np.sqrt(l2sq))
    return float(np.sqrt(l2sq + semi2))
