"""Quick invariant suite run by ``aniso-uq check``."""

from __future__ import annotations

from typing import List, NamedTuple

import numpy as np

from .covariance import DEFAULT_MODEL
from .diffusion import FD_SLACK, eval_A, fd_check_A_derivative, params_from_kl
from .fem import BVPData, FEFunction, assemble_system, solve_cg
from .kl import build_kl, kl_tolerance, pivoted_cholesky
from .mesh import BoundaryTag, build_cube_mesh, prolong
from .quadrature import combination_coeffs, halton_rule, qmc_sample_count, sg_rule


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _mesh_counts():
    for level in range(3):
        mesh = build_cube_mesh(level)
        n = 2 ** (level + 1) + 1
        if mesh.n_tets != 48 * 8**level or mesh.n_vertices != n**3:
            return False, f"level {level}: {mesh.n_tets} tets, {mesh.n_vertices} vertices"
        if abs(mesh.volumes.sum() - 1.0) > 1e-12:
            return False, f"level {level}: volume {mesh.volumes.sum()}"
        areas = mesh.area_by_tag()
        expected = {BoundaryTag.Gamma0: 1.0, BoundaryTag.Gamma1: 1.0, BoundaryTag.Gamma2: 4.0}
        if any(abs(areas[t] - expected[t]) > 1e-12 for t in expected):
            return False, f"level {level}: areas {areas}"
    return True, "levels 0-2: counts, volume and boundary areas"


def _prolongation():
    coarse, fine = build_cube_mesh(0), build_cube_mesh(2)
    lin = lambda x: 1.0 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2]
    err = np.abs(prolong(FEFunction.interpolate(coarse, lin), fine).values - lin(fine.vertices)).max()
    return err < 1e-12, f"affine prolongation error {err:.2e}"


def _qmc_schedule():
    counts = [qmc_sample_count(l) for l in range(6)]
    return counts == [10, 24, 57, 135, 320, 762], f"counts {counts}"


def _halton():
    first = (halton_rule(2, 1).nodes[0] + 1) / 2
    return bool(np.allclose(first, [0.5, 1 / 3])), f"first point {first}"


def _cholesky():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((8, 30))
    A = B.T @ B
    f = pivoted_cholesky(A, 1e-10, 30)
    rel = np.linalg.norm(A - f.reconstruct()) / np.linalg.norm(A)
    return f.converged and f.rank <= 8 and rel < 1e-8, f"rank {f.rank}, relative error {rel:.2e}"


def _kl_tolerance():
    kl = build_kl(build_cube_mesh(0), DEFAULT_MODEL)
    return kl.residual_rel_trace <= kl_tolerance(0), f"M={kl.M}, residual {kl.residual_rel_trace:.2e}"


def _combination():
    rng = np.random.default_rng(1)
    for _ in range(20):
        M = int(rng.integers(1, 5))
        w = rng.uniform(0.3, 2.0, M)
        q = float(rng.uniform(0, 4))
        alpha = rng.integers(0, 3, M)
        brute = sum(
            (-1) ** sum(beta)
            for beta in np.ndindex(*(2,) * M)
            if np.dot(alpha + np.array(beta), w) <= q + 1e-12
        )
        if combination_coeffs(q, M, w, alpha) != brute:
            return False, f"mismatch at alpha={alpha}, w={w}, q={q}"
    rule = sg_rule(4, 2, [1.0, 1.0])
    x = rule.nodes
    exact = {(0, 0): 1.0, (2, 0): 1 / 3, (1, 1): 0.0, (0, 2): 1 / 3}
    err = max(abs(rule.integrate(lambda y: y[:, 0] ** i * y[:, 1] ** j) - v) for (i, j), v in exact.items())
    return err < 1e-12, f"{x.shape[0]} nodes, monomial error {err:.1e}"


def _patch():
    for level in range(2):
        mesh = build_cube_mesh(level)
        bvp = BVPData(f=0.0, g={BoundaryTag.Gamma0: 1.0, BoundaryTag.Gamma1: -1.0})
        A = np.broadcast_to(np.eye(3), (mesh.n_tets, 3, 3))
        u = solve_cg(assemble_system(mesh, A, bvp), rtol=1e-13)
        err = np.abs(u.values - (mesh.vertices[:, 0] - 0.5)).max()
        if err > 1e-9:
            return False, f"level {level}: error {err:.2e}"
    return True, "x1 - 1/2 reproduced at levels 0-1"


def _tensor():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        v = rng.standard_normal(3)
        a = rng.uniform(0.05, 2.0)
        eig = np.linalg.eigvalsh(eval_A(v, a))
        worst = max(worst, np.abs(eig - np.sort([a, a, np.linalg.norm(v)])).max())
    return worst < 1e-10, f"max spectrum deviation {worst:.1e}"


def _derivative_bound():
    kl = build_kl(build_cube_mesh(0), DEFAULT_MODEL)
    params = params_from_kl(kl, 0.12)
    rng = np.random.default_rng(3)
    for _ in range(5):
        alpha = np.zeros(kl.M, dtype=int)
        alpha[rng.choice(kl.M, 2)] += 1
        y = rng.uniform(-0.9, 0.9, kl.M)
        fd, bound = fd_check_A_derivative(kl, 0.12, int(rng.integers(kl.mesh.n_tets)), alpha, y, params=params)
        if fd > bound * (1 + FD_SLACK):
            return False, f"{fd:.3e} > {bound:.3e}"
    return True, "five mixed second derivatives within the bound"


CHECKS: List[tuple] = [
    ("mesh counts and areas", _mesh_counts),
    ("nested prolongation", _prolongation),
    ("QMC sample schedule", _qmc_schedule),
    ("Halton first point", _halton),
    ("pivoted Cholesky on low-rank PSD", _cholesky),
    ("KL truncation tolerance", _kl_tolerance),
    ("combination coefficients and sparse rule", _combination),
    ("pure-Neumann patch test", _patch),
    ("diffusion tensor spectrum", _tensor),
    ("derivative bound", _derivative_bound),
]


def run_checks(checks=CHECKS) -> List[CheckResult]:
    out = []
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(passed), detail))
    return out
