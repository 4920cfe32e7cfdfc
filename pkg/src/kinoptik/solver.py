"""Nonlinear least squares on manifolds with a Levenberg-Marquardt loop.

A Problem is a set of typed variables (euclidean vectors, SE(3)/SE(2)/SO(3)
elements) plus weighted residual blocks. The solver assembles the stacked
weighted residual and its block-sparse Jacobian in tangent coordinates
(right-multiplicative local updates), then iterates

    (J^T J + lambda * diag(J^T J)) delta = -J^T r

accepting steps only when the total squared cost decreases. Hard constraints
are deliberately absent; limits and collisions enter as penalty residuals.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import CostEvaluationError
from .liegroups import Rotation3, Transform2, Transform3, local_update, tangent_dim

# tangent dimension above which the normal equations go through sparse factorization
DENSE_TANGENT_LIMIT = 200

DAMPING_MAX = 1e10
DAMPING_MIN = 1e-12
DIAG_CLAMP = 1e-8


class VariableSet:
    """Ordered, typed optimization variables with tangent-space bookkeeping."""

    def __init__(self):
        self._ids: list[str] = []
        self._values: list = []
        self._index: dict[str, int] = {}
        self.tangent_offsets: list[int] = [0]

    @staticmethod
    def of(**variables) -> "VariableSet":
        vs = VariableSet()
        for name, value in variables.items():
            vs.add(name, value)
        return vs

    def add(self, var_id: str, value) -> "VariableSet":
        if var_id in self._index:
            raise ValueError(f"duplicate variable id '{var_id}'")
        if isinstance(value, (list, tuple)) or np.isscalar(value):
            value = np.atleast_1d(np.asarray(value, dtype=float))
        if isinstance(value, np.ndarray):
            value = value.astype(float).reshape(-1)
        elif not isinstance(value, (Transform3, Transform2, Rotation3)):
            raise TypeError(f"unsupported variable type {type(value).__name__}")
        self._index[var_id] = len(self._ids)
        self._ids.append(var_id)
        self._values.append(value)
        self.tangent_offsets.append(self.tangent_offsets[-1] + tangent_dim(value))
        return self

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def tangent_dim(self) -> int:
        return self.tangent_offsets[-1]

    def index(self, var_id: str) -> int:
        try:
            return self._index[var_id]
        except KeyError:
            raise ValueError(f"unknown variable '{var_id}'") from None

    def value(self, var_id: str):
        return self._values[self.index(var_id)]

    def values(self, var_ids) -> list:
        return [self._values[self.index(v)] for v in var_ids]

    def tangent_slice(self, var_id: str) -> slice:
        i = self.index(var_id)
        return slice(self.tangent_offsets[i], self.tangent_offsets[i + 1])

    def updated(self, delta: np.ndarray) -> "VariableSet":
        """Apply a stacked tangent step through each variable's retraction."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.tangent_dim,):
            raise ValueError(
                f"tangent step has shape {delta.shape}, expected ({self.tangent_dim},)"
            )
        out = VariableSet()
        for i, (vid, value) in enumerate(zip(self._ids, self._values)):
            lo, hi = self.tangent_offsets[i], self.tangent_offsets[i + 1]
            out.add(vid, local_update(value, delta[lo:hi]))
        return out

    def copy(self) -> "VariableSet":
        out = VariableSet()
        for vid, value in zip(self._ids, self._values):
            out.add(vid, value.copy() if isinstance(value, np.ndarray) else value)
        return out


@dataclass
class CostTerm:
    """Weighted residual block over a subset of variables.

    ``evaluator(*values)`` returns the raw residual (m,); ``jacobian(*values)``
    optionally returns one (m, tangent_dim) block per referenced variable.
    Weights multiply residual rows before squaring, so the effective quadratic
    weight is weight**2. When ``jacobian`` is None the solver falls back to
    central differences in tangent space.
    """

    name: str
    residual_dim: int
    variable_refs: list[str]
    weight: np.ndarray
    evaluator: object
    jacobian: object = None

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        if w.ndim == 0:
            w = np.full(self.residual_dim, float(w))
        if w.shape != (self.residual_dim,):
            raise ValueError(
                f"cost '{self.name}': weight shape {w.shape} does not match "
                f"residual_dim {self.residual_dim}"
            )
        if np.any(w < 0.0):
            raise ValueError(f"cost '{self.name}': weights must be nonnegative")
        self.weight = w

    def raw_residual(self, values) -> np.ndarray:
        r = np.asarray(self.evaluator(*values), dtype=float).reshape(-1)
        if r.shape != (self.residual_dim,):
            raise CostEvaluationError(
                self.name,
                f"evaluator returned shape {r.shape}, declared residual_dim "
                f"{self.residual_dim}",
            )
        if not np.all(np.isfinite(r)):
            raise CostEvaluationError(self.name, "evaluator returned non-finite residual")
        return r


@dataclass
class Problem:
    variables: VariableSet
    costs: list[CostTerm]

    def __post_init__(self):
        for cost in self.costs:
            for ref in cost.variable_refs:
                self.variables.index(ref)  # raises on unresolved refs

    @property
    def sparsity(self) -> list[tuple[int, int]]:
        """Structurally nonzero (cost index, variable index) block coordinates."""
        return [
            (ci, self.variables.index(ref))
            for ci, cost in enumerate(self.costs)
            for ref in cost.variable_refs
        ]

    @property
    def residual_dim(self) -> int:
        return sum(c.residual_dim for c in self.costs)


@dataclass
class SolveOptions:
    max_iterations: int = 100
    initial_damping: float = 1e-4
    damping_increase: float = 10.0
    damping_decrease: float = 1.0 / 3.0
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10
    linear_solver: str | None = None  # dense_cholesky | sparse_cholesky | None = by size
    max_rejections: int = 20

    def __post_init__(self):
        if self.max_iterations <= 0 or self.initial_damping <= 0:
            raise ValueError("max_iterations and initial_damping must be positive")
        if self.damping_increase <= 1.0:
            raise ValueError("damping_increase must exceed 1")
        if not 0.0 < self.damping_decrease < 1.0:
            raise ValueError("damping_decrease must be in (0, 1)")
        if self.linear_solver not in (None, "dense_cholesky", "sparse_cholesky"):
            raise ValueError(f"unknown linear_solver '{self.linear_solver}'")


@dataclass
class SolveReport:
    final_values: VariableSet
    initial_cost: float
    final_cost: float
    iterations_run: int
    termination: str  # max_iterations | gradient_converged | step_converged | numerical_failure
    cost_history: list[float] = field(default_factory=list)
    solve_time_s: float = 0.0
    message: str = ""

    def to_json(self, include_timing: bool = False) -> dict:
        out = {
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations_run": self.iterations_run,
            "termination": self.termination,
            "cost_history": list(self.cost_history),
        }
        if self.message:
            out["message"] = self.message
        if include_timing:
            out["solve_time_s"] = self.solve_time_s
        return out


class BlockJacobian:
    """Weighted Jacobian stored as per-(cost, variable) dense blocks."""

    def __init__(self, problem: Problem, row_offsets: list[int], blocks: dict):
        self.problem = problem
        self.row_offsets = row_offsets
        self.blocks = blocks  # (cost index, variable index) -> (m, td) array
        self.shape = (row_offsets[-1], problem.variables.tangent_dim)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        offsets = self.problem.variables.tangent_offsets
        for (ci, vi), block in self.blocks.items():
            r0 = self.row_offsets[ci]
            out[r0 : r0 + block.shape[0], offsets[vi] : offsets[vi] + block.shape[1]] = block
        return out

    def to_csr(self) -> scipy.sparse.csr_matrix:
        offsets = self.problem.variables.tangent_offsets
        rows, cols, vals = [], [], []
        for (ci, vi), block in self.blocks.items():
            m, td = block.shape
            r0, c0 = self.row_offsets[ci], offsets[vi]
            rr, cc = np.meshgrid(np.arange(m), np.arange(td), indexing="ij")
            rows.append((rr + r0).ravel())
            cols.append((cc + c0).ravel())
            vals.append(block.ravel())
        if not rows:
            return scipy.sparse.csr_matrix(self.shape)
        return scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=self.shape,
        )


def numeric_jacobian(cost: CostTerm, values, step: float = 1e-6) -> list[np.ndarray]:
    """Central-difference Jacobian blocks of the raw residual in tangent space."""
    blocks = []
    for k, value in enumerate(values):
        td = tangent_dim(value)
        block = np.empty((cost.residual_dim, td))
        for j in range(td):
            delta = np.zeros(td)
            delta[j] = step
            plus = list(values)
            plus[k] = local_update(value, delta)
            minus = list(values)
            minus[k] = local_update(value, -delta)
            block[:, j] = (cost.raw_residual(plus) - cost.raw_residual(minus)) / (2 * step)
        if not np.all(np.isfinite(block)):
            raise CostEvaluationError(cost.name, "non-finite numeric Jacobian")
        blocks.append(block)
    return blocks


def _residual_vector(problem: Problem, at: VariableSet) -> np.ndarray:
    parts = []
    for cost in problem.costs:
        parts.append(cost.weight * cost.raw_residual(at.values(cost.variable_refs)))
    return np.concatenate(parts) if parts else np.zeros(0)


def assemble(problem: Problem, at: VariableSet):
    """Stacked weighted residual and block-sparse weighted Jacobian at ``at``."""
    residuals = []
    row_offsets = [0]
    blocks = {}
    for ci, cost in enumerate(problem.costs):
        values = at.values(cost.variable_refs)
        r = cost.raw_residual(values)
        residuals.append(cost.weight * r)
        row_offsets.append(row_offsets[-1] + cost.residual_dim)
        if cost.jacobian is not None:
            raw_blocks = cost.jacobian(*values)
        else:
            raw_blocks = numeric_jacobian(cost, values)
        if len(raw_blocks) != len(cost.variable_refs):
            raise CostEvaluationError(
                cost.name,
                f"jacobian returned {len(raw_blocks)} blocks for "
                f"{len(cost.variable_refs)} variables",
            )
        for ref, block in zip(cost.variable_refs, raw_blocks):
            vi = problem.variables.index(ref)
            block = np.asarray(block, dtype=float)
            expected = (
                cost.residual_dim,
                at.tangent_offsets[vi + 1] - at.tangent_offsets[vi],
            )
            if block.shape != expected:
                raise CostEvaluationError(
                    cost.name, f"jacobian block shape {block.shape}, expected {expected}"
                )
            key = (ci, vi)
            weighted = cost.weight[:, None] * block
            blocks[key] = blocks[key] + weighted if key in blocks else weighted
    r = np.concatenate(residuals) if residuals else np.zeros(0)
    return r, BlockJacobian(problem, row_offsets, blocks)


def _normal_equation_parts(jac: BlockJacobian, r: np.ndarray, linear_solver: str | None):
    """(H0, grad, diag, sparse?) with H0 = J^T J and grad = J^T r."""
    if linear_solver is None:
        sparse = jac.shape[1] > DENSE_TANGENT_LIMIT
    else:
        sparse = linear_solver == "sparse_cholesky"
    if sparse:
        j = jac.to_csr()
        h0 = (j.T @ j).tocsc()
        grad = np.asarray(j.T @ r).reshape(-1)
        diag = h0.diagonal()
    else:
        j = jac.to_dense()
        h0 = j.T @ j
        grad = j.T @ r
        diag = np.diag(h0).copy()
    return h0, grad, np.maximum(diag, DIAG_CLAMP), sparse


def _damped_step(h0, grad, damping, diag, sparse):
    d = grad.shape[0]
    if sparse:
        h = h0 + scipy.sparse.diags(damping * diag).tocsc()
        try:
            delta = scipy.sparse.linalg.splu(h).solve(-grad)
        except RuntimeError:
            return None
        return delta if np.all(np.isfinite(delta)) else None
    h = h0.copy()
    h[np.arange(d), np.arange(d)] += damping * diag
    try:
        c, low = scipy.linalg.cho_factor(h)
        return scipy.linalg.cho_solve((c, low), -grad)
    except scipy.linalg.LinAlgError:
        return None


def solve(problem: Problem, options: SolveOptions | None = None) -> SolveReport:
    """Minimize the sum of squared weighted residuals by Levenberg-Marquardt."""
    options = options or SolveOptions()
    if not problem.costs or problem.residual_dim < 1:
        raise ValueError("problem must declare at least one cost with residual rows")

    start = time.perf_counter()
    values = problem.variables
    r, jac = assemble(problem, values)
    cost = float(r @ r)
    initial_cost = cost
    history = [cost]
    damping = options.initial_damping
    termination = "max_iterations"
    message = ""
    iterations = 0

    for _ in range(options.max_iterations):
        h0, grad, diag, sparse = _normal_equation_parts(jac, r, options.linear_solver)
        if np.max(np.abs(grad), initial=0.0) < options.gradient_tolerance:
            termination = "gradient_converged"
            break

        accepted = False
        step = None
        for _ in range(options.max_rejections):
            delta = _damped_step(h0, grad, damping, diag, sparse)
            if delta is not None:
                candidate = values.updated(delta)
                r_new = _residual_vector(problem, candidate)
                cost_new = float(r_new @ r_new)
                if cost_new < cost:
                    values = candidate
                    cost = cost_new
                    r = r_new
                    damping = max(damping * options.damping_decrease, DAMPING_MIN)
                    accepted = True
                    step = delta
                    break
            damping *= options.damping_increase
            if damping > DAMPING_MAX:
                break
        if not accepted:
            if damping > DAMPING_MAX:
                termination = "numerical_failure"
                message = "no acceptable step below damping 1e10"
            else:
                termination = "step_converged"
                message = "rejection budget exhausted without descent"
            break
        iterations += 1
        history.append(cost)
        if np.max(np.abs(step), initial=0.0) < options.step_tolerance:
            termination = "step_converged"
            break
        _, jac = assemble(problem, values)
    return SolveReport(
        final_values=values,
        initial_cost=initial_cost,
        final_cost=cost,
        iterations_run=iterations,
        termination=termination,
        cost_history=history,
        solve_time_s=time.perf_counter() - start,
        message=message,
    )


def solve_batch(
    problems: list[Problem], options: SolveOptions | None = None, workers: int = 1
) -> list[SolveReport]:
    """Solve independent problems, optionally across threads.

    Results are identical to solving each problem sequentially; per-problem
    errors are isolated into that problem's report.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    options = options or SolveOptions()

    def run(problem: Problem) -> SolveReport:
        try:
            return solve(problem, options)
        except Exception as exc:  # isolate per-problem failures
            return SolveReport(
                final_values=problem.variables,
                initial_cost=float("nan"),
                final_cost=float("nan"),
                iterations_run=0,
                termination="numerical_failure",
                message=str(exc),
            )

    if workers == 1 or len(problems) <= 1:
        return [run(p) for p in problems]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, problems))
