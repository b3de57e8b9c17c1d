"""Moment estimation and multi-level convergence studies."""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .covariance import CovarianceModel
from .errors import NumericalError, StructureError, ValidationError
from .fem import BVPData, FEFunction, example_bvp, fe_norm, solve_sample
from .kl import KLExpansion, build_kl
from .mesh import TetMesh, build_cube_mesh, prolong
from .quadrature import (
    QuadratureRule,
    halton_rule,
    mc_rule,
    mc_sample_count,
    qmc_sample_count,
    sg_level_schedule,
    sg_rule,
    sg_weights,
)

log = logging.getLogger(__name__)

THREADS_ENV = "ANISO_UQ_THREADS"
CSV_COLUMNS = ["level", "method", "N", "M", "err_mean_h1", "err_mean_h1semi", "err_var_w11", "wall_time_s"]


class SampleFailure(NumericalError):
    def __init__(self, node: int, cause: Exception):
        super().__init__(f"solver failed at quadrature node {node}: {cause}")
        self.node = node


class PairwiseSum:
    """Streaming pairwise summation with a tree fixed by the insertion order."""

    def __init__(self):
        self._stack = []

    def add(self, x):
        item = (1, np.array(x, dtype=float))
        while self._stack and self._stack[-1][0] == item[0]:
            count, prev = self._stack.pop()
            item = (count + item[0], prev + item[1])
        self._stack.append(item)

    def total(self):
        if not self._stack:
            raise ValueError("empty sum")
        acc = self._stack[-1][1]
        for _, part in reversed(self._stack[:-1]):
            acc = part + acc
        return acc


@dataclass(frozen=True, eq=False)
class MomentFields:
    mesh: TetMesh = field(repr=False)
    mean: FEFunction = field(repr=False)
    second_moment: FEFunction = field(repr=False)
    variance: FEFunction = field(repr=False)
    n_nodes_used: int
    total_weight: float
    min_raw_variance: float = 0.0


class SampleSolver:
    """Maps a parameter point to the FE solution on a fixed mesh and expansion."""

    def __init__(self, kl: KLExpansion, bvp: BVPData, a: float = 0.12, rtol: float = 1e-10, max_iter=None):
        self.kl = kl
        self.mesh = kl.mesh
        self.bvp = bvp
        self.a = a
        self.rtol = rtol
        self.max_iter = max_iter

    @property
    def M(self) -> int:
        return self.kl.M

    def __call__(self, y) -> FEFunction:
        return solve_sample(self.mesh, self.kl, self.a, y, self.bvp, self.rtol, self.max_iter)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer")


def _values(result) -> np.ndarray:
    return result.values if isinstance(result, FEFunction) else np.asarray(result, dtype=float)


def estimate_moments(rule: QuadratureRule, solver: Callable, mesh: Optional[TetMesh] = None, threads=None) -> MomentFields:
    """Weighted mean and nodal second moment of ``solver(y)`` over the rule.

    Partial sums are merged through a pairwise tree in node order, so the
    result does not depend on the number of worker threads.
    """
    solver_M = getattr(solver, "M", None)
    if solver_M is not None and solver_M != rule.M:
        raise StructureError(f"rule dimension {rule.M} does not match solver dimension {solver_M}")
    mesh = mesh if mesh is not None else getattr(solver, "mesh", None)
    if mesh is None:
        raise ValidationError("mesh is required when the solver does not carry one")
    threads = thread_count() if threads is None else threads

    def run(i):
        try:
            return _values(solver(rule.nodes[i]))
        except NumericalError as exc:
            raise SampleFailure(i, exc) from exc

    first, second = PairwiseSum(), PairwiseSum()

    def consume(i, u):
        w = rule.weights[i]
        first.add(w * u)
        second.add(w * u * u)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            for i, u in enumerate(pool.map(run, range(rule.N))):
                consume(i, u)
    else:
        for i in range(rule.N):
            consume(i, run(i))

    mean = first.total()
    m2 = second.total()
    raw = m2 - mean * mean
    return MomentFields(
        mesh=mesh,
        mean=FEFunction(mesh, mean),
        second_moment=FEFunction(mesh, m2),
        variance=FEFunction(mesh, np.maximum(raw, 0.0)),
        n_nodes_used=rule.N,
        total_weight=float(rule.weights.sum()),
        min_raw_variance=float(raw.min()),
    )


class ErrorTriple(NamedTuple):
    mean_h1: float
    mean_h1semi: float
    var_w11: float


def error_vs_reference(coarse: MomentFields, reference: MomentFields) -> ErrorTriple:
    """Errors of prolonged coarse moments against moments on a nested finer mesh."""
    fine = reference.mesh
    dm = prolong(coarse.mean, fine) - reference.mean
    dv = prolong(coarse.variance, fine) - reference.variance
    return ErrorTriple(fe_norm(dm, "H1"), fe_norm(dm, "H1_semi"), fe_norm(dv, "W11"))


def rms_error(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(errors**2)))


def mc_replicated_error(estimates, reference: MomentFields) -> ErrorTriple:
    """Root-mean-square over replicated estimators of each error quantity."""
    errs = np.array([error_vs_reference(e, reference) for e in estimates])
    return ErrorTriple(*(rms_error(errs[:, j]) for j in range(3)))


@dataclass
class ConvergenceRow:
    level: int
    method: str
    N: int
    M: int
    err_mean_h1: float
    err_mean_h1semi: float
    err_var_w11: float
    wall_time: float

    def as_csv(self):
        return [
            self.level,
            self.method,
            self.N,
            self.M,
            f"{self.err_mean_h1:.10e}",
            f"{self.err_mean_h1semi:.10e}",
            f"{self.err_var_w11:.10e}",
            f"{self.wall_time:.3f}",
        ]


@lru_cache(maxsize=16)
def cached_kl(level: int, model: CovarianceModel, max_rank: int = 1000) -> KLExpansion:
    return build_kl(build_cube_mesh(level), model, level, max_rank=max_rank)


def fit_rate(levels, errors) -> float:
    """``p`` in the least-squares fit ``log2(err) ~ c - p * level``."""
    levels = np.asarray(levels, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(levels) < 2 or np.any(errors <= 0):
        return float("nan")
    return float(-np.polyfit(levels, np.log2(errors), 1)[0])


def method_rules(method: str, level: int, kl: KLExpansion, config) -> List[QuadratureRule]:
    if method == "MC":
        return [mc_rule(kl.M, mc_sample_count(level), [seed, level]) for seed in config.seeds]
    if method == "QMC":
        return [halton_rule(kl.M, qmc_sample_count(level, config.delta))]
    if method == "SG":
        return [sg_rule(sg_level_schedule(level), kl.M, sg_weights(kl.gamma[1:]))]
    raise ValidationError(f"unknown method {method!r}")


@dataclass
class StudyResult:
    example: int
    rows: List[ConvergenceRow]
    rates: dict
    reference: MomentFields = field(repr=False)
    csv_path: Optional[Path] = None

    def rate(self, method: str, quantity: str) -> float:
        return self.rates[(method, quantity)]


def csv_header_comments(config) -> List[str]:
    return [
        f"# example {config.example}",
        f"# reference: level {config.reference_level}, QMC (Halton) with N={config.reference_samples}",
        f"# MC errors: root-mean-square over {len(config.seeds)} seeds",
        f"# KL truncation: relative trace error <= 1e-4 * 4^-l; a = {config.a}",
    ]


def convergence_study(config, out_dir=None) -> StudyResult:
    """Errors of MC/QMC/SG moment estimates per level against a fine reference.

    Rows are written to ``<out_dir>/convergence_example<k>.csv`` as they are
    produced, so a failure leaves the partial table on disk.
    """
    model = config.covariance_model()
    bvp = example_bvp(config.example)
    csv_path = None
    handle = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"convergence_example{config.example}.csv"
        handle = open(csv_path, "w", newline="")
        handle.write("\n".join(csv_header_comments(config)) + "\n")
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        handle.flush()
    rows = []
    try:
        t0 = time.perf_counter()
        ref_kl = cached_kl(config.reference_level, model, config.max_rank)
        ref_solver = SampleSolver(ref_kl, bvp, config.a, config.rtol, config.solver_max_iter)
        reference = estimate_moments(halton_rule(ref_kl.M, config.reference_samples), ref_solver)
        log.info("reference (level %d, M=%d, N=%d) in %.1fs", config.reference_level, ref_kl.M,
                 config.reference_samples, time.perf_counter() - t0)

        for level in config.levels:
            kl = cached_kl(level, model, config.max_rank)
            solver = SampleSolver(kl, bvp, config.a, config.rtol, config.solver_max_iter)
            for method in config.methods:
                t0 = time.perf_counter()
                rules = method_rules(method, level, kl, config)
                estimates = [estimate_moments(rule, solver) for rule in rules]
                if method == "MC":
                    err = mc_replicated_error(estimates, reference)
                else:
                    err = error_vs_reference(estimates[0], reference)
                row = ConvergenceRow(level, method, rules[0].N, kl.M, *err, time.perf_counter() - t0)
                rows.append(row)
                log.info("example %d level %d %s: %s", config.example, level, method, row)
                if handle is not None:
                    writer.writerow(row.as_csv())
                    handle.flush()
    finally:
        if handle is not None:
            handle.close()

    fit_levels = config.fit_levels or [l for l in config.levels if l >= 1]
    rates = {}
    for method in config.methods:
        sel = [r for r in rows if r.method == method and r.level in fit_levels]
        for quantity in ("err_mean_h1", "err_mean_h1semi", "err_var_w11"):
            rates[(method, quantity)] = fit_rate([r.level for r in sel], [getattr(r, quantity) for r in sel])
    return StudyResult(config.example, rows, rates, reference, csv_path)
