"""Integration rules on [-1, 1]^M for the uniform probability measure.

Monte Carlo, Halton quasi-Monte Carlo and the anisotropic sparse
Gauss-Legendre combination technique

    A_w(q, M) = sum_{alpha in Y_w(q, M)} c_w(alpha) Q_alpha,
    Y_w(q, M) = {alpha : q - |w|_1 <= <alpha, w> <= q},
    c_w(alpha) = sum_{beta in {0,1}^M, <alpha + beta, w> <= q} (-1)^|beta|,

where ``Q_alpha`` is the tensor Gauss-Legendre rule with
``ceil((alpha_k + 1) / 2)`` points in direction ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from .errors import DomainError, NumericalError, ResourceError, ValidationError

MAX_HALTON_DIM = 200
MAX_INDEX_SET = 200_000
WEIGHT_DROP_TOL = 1e-15


class DegenerateRuleError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    M: int
    nodes: np.ndarray
    weights: np.ndarray
    label: str

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(len(self.weights), self.M)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def N(self) -> int:
        return len(self.weights)

    def integrate(self, func) -> float:
        """Apply the rule to ``func``, evaluated on the ``(N, M)`` node array."""
        return float(self.weights @ np.asarray(func(self.nodes), dtype=float))


def mc_rule(M: int, N: int, seed) -> QuadratureRule:
    if N < 1:
        raise ValidationError("N must be positive")
    rng = np.random.default_rng(seed)
    return QuadratureRule(M, rng.uniform(-1.0, 1.0, (N, M)), np.full(N, 1.0 / N), "MC")


def halton_rule(M: int, N: int) -> QuadratureRule:
    """First ``N`` Halton points (indices 1..N, unscrambled) mapped to [-1, 1]^M."""
    if M > MAX_HALTON_DIM:
        raise ResourceError(f"Halton dimension {M} exceeds the prime table ({MAX_HALTON_DIM})")
    if N < 1:
        raise ValidationError("N must be positive")
    if M == 0:
        return QuadratureRule(0, np.zeros((N, 0)), np.full(N, 1.0 / N), "QMC")
    engine = qmc.Halton(d=M, scramble=False)
    engine.fast_forward(1)
    return QuadratureRule(M, 2.0 * engine.random(N) - 1.0, np.full(N, 1.0 / N), "QMC")


def qmc_sample_count(level: int, delta: float = 0.2) -> int:
    if level < 0 or not 0 < delta < 1:
        raise ValidationError("need level >= 0 and 0 < delta < 1")
    # round first so that exact powers such as 2**5 * 10 are not pushed up by round-off
    return int(math.ceil(round(2.0 ** (level / (1.0 - delta)) * 10.0, 9)))


def mc_sample_count(level: int) -> int:
    return 4**level


def sg_level_schedule(level: int) -> float:
    if level < 0:
        raise ValidationError("level must be nonnegative")
    return 2 * level + 2


def sg_weights(gamma) -> np.ndarray:
    """``w_k = log(1/gamma_k + sqrt(1 + 1/gamma_k^2)) = arcsinh(1/gamma_k)``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise DomainError("sparse-grid weights need strictly positive gamma")
    return np.arcsinh(1.0 / gamma)


@dataclass(frozen=True)
class MultiIndexSet:
    M: int
    indices: tuple  # of tuples

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def sg_index_set(q: float, M: int, w, cap: int = MAX_INDEX_SET) -> MultiIndexSet:
    """All ``alpha`` in N_0^M with ``q - |w|_1 <= <alpha, w> <= q``."""
    w = np.asarray(w, dtype=float)
    if len(w) != M:
        raise ValidationError("weight vector length differs from M")
    if np.any(w <= 0) or q < 0:
        raise DomainError("need q >= 0 and strictly positive weights")
    lower = q - w.sum()
    out = []
    alpha = [0] * M

    def rec(k, used):
        if k == M:
            if used >= lower - 1e-12:
                out.append(tuple(alpha))
                if len(out) > cap:
                    raise ResourceError(f"sparse-grid index set exceeds {cap} entries")
            return
        a = 0
        while used + a * w[k] <= q + 1e-12:
            alpha[k] = a
            rec(k + 1, used + a * w[k])
            a += 1
        alpha[k] = 0

    rec(0, 0.0)
    return MultiIndexSet(M, tuple(out))


def combination_coeffs(q: float, M: int, w, alpha) -> int:
    """Signed count of corners ``beta`` with ``<alpha + beta, w> <= q``.

    Only directions whose weight fits in the remaining budget can carry
    ``beta_k = 1``, so the sum runs over subsets of those.
    """
    w = np.asarray(w, dtype=float)
    slack = q - float(np.dot(alpha, w))
    if slack < -1e-12:
        return 0
    candidates = sorted(w[w <= slack + 1e-12])

    def rec(start, budget, sign):
        total = sign
        for j in range(start, len(candidates)):
            if candidates[j] > budget + 1e-12:
                break  # sorted: no later candidate fits either
            total += rec(j + 1, budget - candidates[j], -sign)
        return total

    return rec(0, slack, 1)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    x, wt = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])  # exact symmetry; the odd-n middle node becomes 0.0
    wt = 0.25 * (wt + wt[::-1])
    x.setflags(write=False)
    wt.setflags(write=False)
    return x, wt


def gauss_legendre_1d(n: int):
    """Gauss-Legendre nodes on [-1, 1] with weights summing to one."""
    if n < 1:
        raise ValidationError("need at least one point")
    x, wt = _gauss_legendre(int(n))
    return x.copy(), wt.copy()


def points_per_index(a: int) -> int:
    return (a + 2) // 2  # ceil((a + 1) / 2)


def sg_rule(q: float, M: int, w) -> QuadratureRule:
    """Combination-technique rule with coinciding nodes merged."""
    index_set = sg_index_set(q, M, w)
    merged: dict = {}
    for alpha in index_set:
        c = combination_coeffs(q, M, w, alpha)
        if c == 0:
            continue
        dims = [k for k, a in enumerate(alpha) if points_per_index(a) > 1]
        rules = [_gauss_legendre(points_per_index(alpha[k])) for k in dims]
        for combo in np.ndindex(*[len(r[0]) for r in rules]):
            weight = float(c)
            key = []
            for k, r, i in zip(dims, rules, combo):
                weight *= r[1][i]
                if r[0][i] != 0.0:
                    key.append((k, float(r[0][i])))
            key = tuple(key)
            merged[key] = merged.get(key, 0.0) + weight
    items = [(k, v) for k, v in merged.items() if abs(v) > WEIGHT_DROP_TOL]
    if not items:
        raise DegenerateRuleError("sparse-grid rule has no nodes with nonzero weight")
    items.sort()
    nodes = np.zeros((len(items), M))
    weights = np.empty(len(items))
    for n, (key, v) in enumerate(items):
        for k, x in key:
            nodes[n, k] = x
        weights[n] = v
    return QuadratureRule(M, nodes, weights, "SG")
