"""Truncated Karhunen-Loeve expansion of V via pivoted Cholesky.

The pivoted Cholesky columns of the covariance collocation matrix are used
directly as the scaled modes ``sigma_k psi_k``; no eigendecomposition is
performed.  Parameters ``y_k`` are uniform on [-1, 1], which puts a factor
``sqrt(3)`` into every mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .covariance import DEFAULT_MODEL, CovarianceModel, assemble_collocation_matrix
from .errors import DomainError, NotPSDError, ValidationError
from .mesh import TetMesh

NEGATIVE_DIAGONAL_TOL = 1e-12
Y_TOL = 1e-12


class TruncationWarning(UserWarning):
    """Pivoted Cholesky stopped at ``max_rank`` before reaching ``rel_tol``."""


class EllipticityWarning(UserWarning):
    """The lower bound on |V| could not be certified positive."""


class DenseMatrix:
    """Adapter giving a dense symmetric array the lazy-matrix interface."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise ValidationError("matrix must be square")

    @property
    def shape(self):
        return self.a.shape

    def diagonal(self) -> np.ndarray:
        return np.diag(self.a).copy()

    def row(self, p: int) -> np.ndarray:
        return self.a[p].copy()


@dataclass(frozen=True)
class LowRankFactor:
    """``A ~ columns.T @ columns`` (columns stored as rows of an ``(m, n)`` array)."""

    columns: np.ndarray
    pivot_order: np.ndarray
    initial_trace: float
    residual_trace: float
    trace_history: np.ndarray = field(repr=False)
    converged: bool = True

    @property
    def rank(self) -> int:
        return len(self.columns)

    @property
    def relative_residual(self) -> float:
        if self.initial_trace == 0:
            return 0.0
        return self.residual_trace / self.initial_trace

    def reconstruct(self) -> np.ndarray:
        return self.columns.T @ self.columns


def pivoted_cholesky(matrix, rel_tol: float, max_rank: int) -> LowRankFactor:
    """Greedy low-rank Cholesky factorisation with relative trace stopping.

    ``matrix`` is an array or any object exposing ``diagonal()``, ``row(p)``
    and ``shape``.  Each step pivots on the largest residual diagonal entry
    (smallest index on ties) and stops once
    ``trace(A - L L^T) <= rel_tol * trace(A)``.  If ``max_rank`` is reached
    first a :class:`TruncationWarning` is issued and ``converged`` is False.
    """
    if isinstance(matrix, np.ndarray) or not hasattr(matrix, "row"):
        matrix = DenseMatrix(matrix)
    if not (0 < rel_tol <= 1):
        raise ValidationError(f"rel_tol must lie in (0, 1], got {rel_tol}")
    if max_rank < 1:
        raise ValidationError("max_rank must be at least 1")
    n = matrix.shape[0]
    d = np.array(matrix.diagonal(), dtype=float)
    tr0 = float(d.sum())
    if np.any(d < -NEGATIVE_DIAGONAL_TOL * max(tr0, 0.0)) or tr0 < 0:
        raise NotPSDError("matrix has a negative diagonal entry")
    np.maximum(d, 0.0, out=d)
    tr0 = float(d.sum())

    cap = min(max_rank, n)
    L = np.empty((min(cap, 64), n))
    pivots = []
    history = [tr0]
    err = tr0
    m = 0
    while err > rel_tol * tr0 and m < cap:
        p = int(np.argmax(d))
        dp = d[p]
        if dp <= 0.0:
            break
        if m == len(L):
            L = np.concatenate([L, np.empty((min(len(L), cap - m), n))])
        col = np.asarray(matrix.row(p), dtype=float) - L[:m, p] @ L[:m]
        col /= np.sqrt(dp)
        L[m] = col
        d -= col * col
        d[p] = 0.0
        if d.min() < -NEGATIVE_DIAGONAL_TOL * tr0:
            raise NotPSDError(f"residual diagonal became negative ({d.min():.3e}) at step {m + 1}")
        np.maximum(d, 0.0, out=d)
        pivots.append(p)
        m += 1
        err = float(d.sum())
        history.append(err)

    converged = err <= rel_tol * tr0
    if not converged:
        warnings.warn(
            f"pivoted Cholesky stopped at rank {m} with relative trace error {err / tr0:.3e} > {rel_tol:.3e}",
            TruncationWarning,
            stacklevel=2,
        )
    return LowRankFactor(
        columns=L[:m].copy(),
        pivot_order=np.asarray(pivots, dtype=int),
        initial_trace=tr0,
        residual_trace=err,
        trace_history=np.asarray(history),
        converged=converged,
    )


def decay_exponent(trace_history) -> float:
    """Least-squares slope ``p`` of ``log r_k ~ -p log k`` over the steps."""
    r = np.asarray(trace_history, dtype=float)[1:]
    k = np.arange(1, len(r) + 1)
    keep = r > 0
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(k[keep]), np.log(r[keep]), 1)[0]
    return float(-slope)


def kl_tolerance(level: int) -> float:
    return 1e-4 * 4.0 ** (-level)


@dataclass(frozen=True, eq=False)
class KLExpansion:
    """Piecewise-constant modes of the truncated expansion.

    ``modes[0]`` is the mean field, ``modes[k]`` (k >= 1) the scaled mode
    ``sigma_k psi_k``; both have shape ``(n_tets, 3)`` per mode.
    """

    mesh: TetMesh = field(repr=False)
    modes: np.ndarray = field(repr=False)
    gamma: np.ndarray
    residual_rel_trace: float
    factor: Optional[LowRankFactor] = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return len(self.modes) - 1

    @classmethod
    def from_modes(cls, mesh, mean, modes=(), residual_rel_trace=0.0):
        """Expansion with explicitly given mean and scaled modes.

        ``mean`` and each mode may be a single 3-vector (constant field) or an
        ``(n_tets, 3)`` array.
        """
        shape = (mesh.n_tets, 3)
        fields = [np.broadcast_to(np.asarray(mean, dtype=float), shape)]
        fields += [np.broadcast_to(np.asarray(m, dtype=float), shape) for m in modes]
        stacked = np.array(fields)
        return cls(mesh, stacked, mode_sup_norms(stacked), residual_rel_trace)

    def field(self, y) -> np.ndarray:
        """V(., y) on every tet, shape ``(n_tets, 3)``."""
        y = check_parameter(y, self.M)
        return self.modes[0] + np.tensordot(y, self.modes[1:], axes=(0, 0))

    def with_zero_modes(self) -> "KLExpansion":
        modes = np.zeros_like(self.modes)
        modes[0] = self.modes[0]
        return KLExpansion(self.mesh, modes, mode_sup_norms(modes), self.residual_rel_trace)


def mode_sup_norms(modes: np.ndarray) -> np.ndarray:
    return np.linalg.norm(modes, axis=2).max(axis=1)


def check_parameter(y, M: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) != M:
        raise DomainError(f"parameter has dimension {len(y)}, expected {M}")
    if np.any(np.abs(y) > 1 + Y_TOL):
        raise DomainError("parameter lies outside [-1, 1]^M")
    return y


def build_kl(
    mesh: TetMesh,
    model: CovarianceModel = DEFAULT_MODEL,
    level: Optional[int] = None,
    rel_tol: Optional[float] = None,
    max_rank: int = 1000,
) -> KLExpansion:
    """Truncated expansion on ``mesh`` with tolerance ``1e-4 * 4**-level``."""
    if level is None:
        level = mesh.level
    if level != mesh.level:
        raise ValidationError(f"mesh level {mesh.level} does not match requested level {level}")
    if rel_tol is None:
        rel_tol = kl_tolerance(level)
    matrix = assemble_collocation_matrix(mesh, model)
    factor = pivoted_cholesky(matrix, rel_tol, max_rank)
    scale = np.sqrt(3.0) / np.sqrt(mesh.volumes)
    modes = np.empty((factor.rank + 1, mesh.n_tets, 3))
    modes[0] = model.mean_field(mesh.centroids)
    modes[1:] = factor.columns.reshape(factor.rank, mesh.n_tets, 3) * scale[None, :, None]
    return KLExpansion(mesh, modes, mode_sup_norms(modes), factor.relative_residual, factor)


def evaluate_V(kl: KLExpansion, tet_index: int, y) -> np.ndarray:
    y = check_parameter(y, kl.M)
    return kl.modes[0, tet_index] + y @ kl.modes[1:, tet_index]


class EllipticityReport(NamedTuple):
    b_min_est: float
    b_max_est: float
    envelope_low: float
    envelope_high: float
    norm_bound: float
    projected_bound: float


def ellipticity_bounds(kl: KLExpansion, n_probe: int, seed=0) -> EllipticityReport:
    """Sampled and certified bounds on |V(x, y)|.

    The certified lower bound per tet is the larger of
    ``|m_0| - sum_k |m_k|`` and ``|m_0| - sum_k |<m_k, m_0 / |m_0|>|``
    (``|V| >= <V, u>`` for the unit mean direction ``u``); the upper bound is
    ``sum_k gamma_k``.
    """
    if n_probe < 1:
        raise ValidationError("n_probe must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    for _ in range(n_probe):
        norms = np.linalg.norm(kl.field(rng.uniform(-1.0, 1.0, kl.M)), axis=1)
        lo = min(lo, norms.min())
        hi = max(hi, norms.max())

    m0 = kl.modes[0]
    m0_norm = np.linalg.norm(m0, axis=1)
    rest = kl.modes[1:]
    norm_bound = m0_norm - np.linalg.norm(rest, axis=2).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = m0 / m0_norm[:, None]
    proj = np.abs(np.einsum("ktc,tc->kt", rest, u)).sum(axis=0)
    projected = np.where(m0_norm > 0, m0_norm - proj, -np.inf)
    certified = float(np.maximum(norm_bound, projected).min())
    if certified <= 0:
        warnings.warn(f"|V| lower bound not certifiable (bound {certified:.3e})", EllipticityWarning, stacklevel=2)
    return EllipticityReport(
        b_min_est=float(lo),
        b_max_est=float(hi),
        envelope_low=max(0.0, certified),
        envelope_high=float(kl.gamma.sum()),
        norm_bound=float(norm_bound.min()),
        projected_bound=float(projected.min()),
    )
