"""Anisotropic diffusion tensor built from a vector field value.

``A(v) = a I + (|v| - a) v v^T / |v|^2`` has eigenvalue ``|v|`` along ``v``
and ``a`` on the orthogonal complement.  Also provides the parameter
derivatives of ``B = V V^T`` and ``C = V^T V`` and the constants of the
derivative bound for ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectionError, DomainError, ValidationError
from .kl import KLExpansion, ellipticity_bounds, evaluate_V

MIN_NORM = 1e-14
FD_SLACK = 0.05


@dataclass(frozen=True)
class DiffusionParams:
    a: float = 0.12
    a_min: float = 0.12
    a_max: float = 1.0

    def __post_init__(self):
        if not (0 < self.a_min <= 1 <= self.a_max):
            raise ValidationError(f"need 0 < a_min <= 1 <= a_max, got a_min={self.a_min}, a_max={self.a_max}")
        if not (self.a_min <= self.a <= self.a_max):
            raise ValidationError(f"need a_min <= a <= a_max, got a={self.a}")


@dataclass(frozen=True)
class RegularityBounds:
    mu: np.ndarray
    c_A: float
    rate: float  # 2 a_max^2 / (a_min^2 log 2)

    @classmethod
    def from_params(cls, gamma, params: DiffusionParams) -> "RegularityBounds":
        a_min, a_max = params.a_min, params.a_max
        gamma = np.asarray(gamma, dtype=float)
        mu = 4 * a_max**2 / (a_min**2 * math.log(2)) * gamma
        c_A = 2 * a_max * 6 * a_max**2 / a_min**2
        return cls(mu=mu, c_A=c_A, rate=2 * a_max**2 / (a_min**2 * math.log(2)))


def params_from_kl(kl: KLExpansion, a: float = 0.12, n_probe: int = 20, seed=0) -> DiffusionParams:
    """``a_min``/``a_max`` from the certified envelope of |V|, widened around 1 and ``a``."""
    report = ellipticity_bounds(kl, n_probe, seed)
    low = report.envelope_low if report.envelope_low > 0 else report.b_min_est
    return DiffusionParams(a=a, a_min=min(1.0, a, low), a_max=max(1.0, a, report.envelope_high))


def eval_A(v, a: float) -> np.ndarray:
    """Diffusion tensor for one vector ``v`` (shape (3,)) or many (shape (n, 3))."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm < MIN_NORM):
        raise DegenerateDirectionError("vector field vanishes; the preferred direction is undefined")
    outer = v[..., :, None] * v[..., None, :] / (norm**2)[..., None, None]
    return a * np.eye(3) + (norm - a)[..., None, None] * outer


def eigen_range(v, a: float):
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm < MIN_NORM:
        raise DegenerateDirectionError("vector field vanishes; the preferred direction is undefined")
    return min(a, norm), max(a, norm)


def _check_index(i, modes):
    if not 1 <= i < len(modes):
        raise DomainError(f"mode index {i} outside 1..{len(modes) - 1}")


def _value(modes, y):
    modes = np.asarray(modes, dtype=float)
    y = np.asarray(y, dtype=float)
    return modes[0] + y @ modes[1:]


def dB_first(modes, y, i: int) -> np.ndarray:
    """d/dy_i of ``V V^T``; ``modes`` is ``(M + 1, 3)`` (mean first), ``i`` is 1-based."""
    modes = np.asarray(modes, dtype=float)
    _check_index(i, modes)
    v = _value(modes, y)
    return np.outer(modes[i], v) + np.outer(v, modes[i])


def dB_second(modes, i: int, j: int) -> np.ndarray:
    modes = np.asarray(modes, dtype=float)
    _check_index(i, modes)
    _check_index(j, modes)
    return np.outer(modes[i], modes[j]) + np.outer(modes[j], modes[i])


def dC_first(modes, y, i: int) -> float:
    modes = np.asarray(modes, dtype=float)
    _check_index(i, modes)
    return float(2.0 * modes[i] @ _value(modes, y))


def dC_second(modes, i: int, j: int) -> float:
    modes = np.asarray(modes, dtype=float)
    _check_index(i, modes)
    _check_index(j, modes)
    return float(2.0 * modes[i] @ modes[j])


def derivative_bound(alpha, gamma, params: DiffusionParams) -> float:
    """Upper bound on ``|d^alpha A|_F``; ``gamma`` excludes the mean (gamma_1..gamma_M)."""
    alpha = np.asarray(alpha, dtype=int)
    order = int(alpha.sum())
    if order == 0:
        return math.sqrt(3.0) * params.a_max
    bounds = RegularityBounds.from_params(gamma, params)
    gamma_pow = float(np.prod(np.asarray(gamma, dtype=float) ** alpha))
    return math.factorial(order + 1) * bounds.c_A * bounds.rate**order * gamma_pow


def _multiindex(alpha, M):
    alpha = np.asarray(alpha, dtype=int).reshape(-1)
    if len(alpha) != M or np.any(alpha < 0):
        raise DomainError(f"multi-index must have {M} nonnegative entries")
    if alpha.sum() > 2:
        raise DomainError("finite-difference check supports |alpha| <= 2 only")
    return alpha


def fd_check_A_derivative(kl: KLExpansion, a: float, tet: int, alpha, y, h: float = 1e-4, params=None):
    """Central finite difference of ``d^alpha A(V(tet, y))`` and its bound.

    Returns ``(fd_value_norm, bound)``; the check passes when
    ``fd_value_norm <= bound * (1 + FD_SLACK)``.
    """
    if not 1e-6 <= h <= 1e-2:
        raise DomainError(f"step h={h} outside [1e-6, 1e-2]")
    alpha = _multiindex(alpha, kl.M)
    y = np.asarray(y, dtype=float)
    idx = np.flatnonzero(alpha)
    if np.any(np.abs(y[idx]) + h * alpha[idx] > 1):
        raise DomainError("y too close to the boundary of the parameter cube for this stencil")
    if params is None:
        params = params_from_kl(kl, a)

    def A_at(shift):
        return eval_A(evaluate_V(kl, tet, y + shift), a)

    e = np.eye(kl.M)
    order = int(alpha.sum())
    if order == 0:
        fd = A_at(0.0)
    elif order == 1:
        i = idx[0]
        fd = (A_at(h * e[i]) - A_at(-h * e[i])) / (2 * h)
    elif len(idx) == 1:
        i = idx[0]
        fd = (A_at(h * e[i]) - 2 * A_at(0.0) + A_at(-h * e[i])) / h**2
    else:
        i, j = idx
        fd = (
            A_at(h * (e[i] + e[j])) - A_at(h * (e[i] - e[j])) - A_at(h * (e[j] - e[i])) + A_at(-h * (e[i] + e[j]))
        ) / (4 * h**2)
    return float(np.linalg.norm(fd)), derivative_bound(alpha, kl.gamma[1:], params)
