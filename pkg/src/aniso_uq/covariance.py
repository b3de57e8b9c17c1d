"""Mean and matrix-valued covariance of the random vector field V.

The covariance is diagonal,

    Cov(x, x') = amplitude * exp(-|x - x'|^2 / L) * diag(m1, m2 s2, m3 s3),

with the boundary damping ``s_j(x, x') = 16 x_j (1 - x_j) x'_j (1 - x'_j)``
applied to the second and third components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResourceError
from .mesh import TetMesh

# largest matrix dimension (3 * number of tets) accepted by the collocation
# assembly; level 5 of the cube mesh
MAX_COLLOCATION_SIZE = 3 * 48 * 8**5


@dataclass(frozen=True)
class CovarianceModel:
    amplitude: float = 0.01
    length_scale_denominator: float = 50.0
    diagonal_multipliers: tuple = (1.0, 9.0, 9.0)
    boundary_damping: bool = True
    mean_vector: tuple = (1.0, 0.0, 0.0)

    def mean_field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.mean_vector, dtype=float), x.shape).copy()

    def damping(self, x, xp) -> np.ndarray:
        """Per-component damping factors, shape ``broadcast(x, xp)``."""
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        s = 16.0 * x * (1.0 - x) * xp * (1.0 - xp)
        if not self.boundary_damping:
            s = np.ones_like(s)
        s = np.array(s, copy=True)
        s[..., 0] = 1.0
        return s

    def kernel_diagonal(self, x, xp) -> np.ndarray:
        """Diagonal entries of ``cov_kernel`` for broadcastable point arrays."""
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        r2 = np.sum((x - xp) ** 2, axis=-1)
        scale = self.amplitude * np.exp(-r2 / self.length_scale_denominator)
        return scale[..., None] * np.asarray(self.diagonal_multipliers, dtype=float) * self.damping(x, xp)

    def cov_kernel(self, x, xp) -> np.ndarray:
        return np.diag(self.kernel_diagonal(x, xp))


DEFAULT_MODEL = CovarianceModel()


def mean_field(x, model: CovarianceModel = DEFAULT_MODEL) -> np.ndarray:
    return model.mean_field(x)


def cov_kernel(x, xp, model: CovarianceModel = DEFAULT_MODEL) -> np.ndarray:
    return model.cov_kernel(x, xp)


class CollocationMatrix:
    """Lazily evaluated volume-weighted collocation matrix of the covariance.

    Index ``3 * i + c`` refers to component ``c`` on tetrahedron ``i``; block
    ``(i, j)`` is ``sqrt(|T_i| |T_j|) * cov_kernel(c_i, c_j)``.  Because the
    kernel is diagonal, row ``3 i + c`` is supported on component ``c`` only.
    """

    def __init__(self, centroids: np.ndarray, volumes: np.ndarray, model: CovarianceModel):
        self.centroids = np.asarray(centroids, dtype=float)
        self.volumes = np.asarray(volumes, dtype=float)
        self.model = model
        self._sqrt_vol = np.sqrt(self.volumes)

    @property
    def shape(self):
        n = 3 * len(self.volumes)
        return (n, n)

    def diagonal(self) -> np.ndarray:
        d = self.model.kernel_diagonal(self.centroids, self.centroids)
        return (self.volumes[:, None] * d).reshape(-1)

    def row(self, p: int) -> np.ndarray:
        i, c = divmod(int(p), 3)
        k = self.model.kernel_diagonal(self.centroids[i], self.centroids)[:, c]
        out = np.zeros(self.shape[0])
        out[c::3] = self._sqrt_vol[i] * self._sqrt_vol * k
        return out

    def entry(self, p: int, q: int) -> float:
        return float(self.row(p)[q])

    def trace(self) -> float:
        return float(self.diagonal().sum())

    def to_dense(self, max_size: int = 6000) -> np.ndarray:
        n = self.shape[0]
        if n > max_size:
            raise ResourceError(f"refusing to materialise a {n}x{n} covariance matrix")
        k = self.model.kernel_diagonal(self.centroids[:, None, :], self.centroids[None, :, :])
        w = self._sqrt_vol[:, None] * self._sqrt_vol[None, :]
        out = np.zeros((n, n))
        for c in range(3):
            out[c::3, c::3] = w * k[:, :, c]
        return out


def assemble_collocation_matrix(
    mesh: TetMesh, model: CovarianceModel = DEFAULT_MODEL, max_size: int = MAX_COLLOCATION_SIZE
) -> CollocationMatrix:
    """Collocation matrix of the covariance operator at tet centroids.

    The volume weights are available as ``.volumes`` on the result.
    """
    if 3 * mesh.n_tets > max_size:
        raise ResourceError(f"collocation matrix of size {3 * mesh.n_tets} exceeds the bound {max_size}")
    return CollocationMatrix(mesh.centroids, mesh.volumes, model)
