"""Strict LMI feasibility over named matrix variables.

The engine rewrites every constraint in the uniform form M_k(v) <= t I
(constraints required positive definite are negated first) and minimises the
shift t with a log-det barrier interior-point method on the slack matrices
S_k = t I - M_k(v).  A problem is declared strictly feasible when the final
iterate achieves max_k lambda_max(M_k(v)) <= -eps_strict.

Design notes:

* All matrix variables are vectorised into one parameter vector; symmetric
  variables contribute upper-triangle coordinates only.
* Constraints are affine, so their coefficient matrices are materialised
  once by evaluating each expression on the coordinate basis.
* The barrier weight follows a fixed geometric schedule and the Newton
  iteration uses deterministic damped steps, so identical problems produce
  identical iterate sequences.
* Before returning, every constraint margin is recomputed from scratch with
  the dense symmetric eigensolver; the verdict rests on that re-verification
  and never on solver internals.

Problem sizes here are tens of scalar unknowns with constraint blocks of
dimension at most a few tens, so dense linear algebra is used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "MatrixVariable",
    "AffineMatrixExpr",
    "LmiConstraint",
    "LmiProblem",
    "LmiSolution",
    "symmetric_eigenvalues",
    "solve_feasibility",
]


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def symmetric_eigenvalues(m, vectors: bool = False):
    """Eigenvalues (ascending) of a real symmetric matrix.

    With ``vectors=True`` also returns the orthonormal eigenvector matrix Q
    such that M = Q diag(w) Q^T.  Rejects input whose symmetry defect
    exceeds 1e-10 (scaled by the matrix magnitude).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("need a square matrix")
    if _maxabs(m - m.T) > 1e-10 * (1.0 + _maxabs(m)):
        raise ValueError("matrix is not symmetric")
    m = 0.5 * (m + m.T)
    if vectors:
        w, q = np.linalg.eigh(m)
        return w, q
    return np.linalg.eigvalsh(m)


@dataclass(frozen=True)
class MatrixVariable:
    """Declaration of one matrix unknown."""

    name: str
    rows: int
    cols: int
    symmetric: bool = False

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("variable dimensions must be positive")
        if self.symmetric and self.rows != self.cols:
            raise ValueError("symmetric variables must be square")

    @property
    def n_scalars(self) -> int:
        if self.symmetric:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols


@dataclass(frozen=True)
class _Term:
    name: str
    left: np.ndarray
    right: np.ndarray
    transpose: bool


class AffineMatrixExpr:
    """Affine symmetric-matrix expression constant + sum_k L_k V_k R_k.

    Each term multiplies a named variable (optionally transposed) from the
    left and right.  Evaluation returns the symmetric part of the sum; the
    builders in the synthesis and analysis layers add transpose-counterpart
    terms explicitly so that symmetrisation is a no-op on exact data.
    """

    def __init__(self, dim: int, constant=None):
        if dim <= 0:
            raise ValueError("expression dimension must be positive")
        self.dim = dim
        if constant is None:
            constant = np.zeros((dim, dim))
        constant = np.asarray(constant, dtype=float)
        if constant.shape != (dim, dim):
            raise ValueError("constant block has the wrong shape")
        self.constant = 0.5 * (constant + constant.T)
        self.terms: list[_Term] = []

    def add_term(self, name: str, left=None, right=None, transpose: bool = False):
        left = np.eye(self.dim) if left is None else np.asarray(left, dtype=float)
        right = np.eye(self.dim) if right is None else np.asarray(right, dtype=float)
        if left.shape[0] != self.dim or right.shape[1] != self.dim:
            raise ValueError("term coefficients must map into the expression dimension")
        self.terms.append(_Term(name, left, right, transpose))
        return self

    def variable_names(self):
        return {t.name for t in self.terms}

    def evaluate(self, assignment: dict) -> np.ndarray:
        m = self.constant.copy()
        for t in self.terms:
            v = np.asarray(assignment[t.name], dtype=float)
            if t.transpose:
                v = v.T
            m += t.left @ v @ t.right
        return 0.5 * (m + m.T)


@dataclass(frozen=True)
class LmiConstraint:
    expr: AffineMatrixExpr
    sense: str  # "neg" for < 0, "pos" for > 0

    def __post_init__(self):
        if self.sense not in ("neg", "pos"):
            raise ValueError("constraint sense must be 'neg' or 'pos'")


class LmiProblem:
    """Bundle of matrix variables and strict matrix-inequality constraints."""

    def __init__(self, variables=(), constraints=()):
        self.variables: list[MatrixVariable] = list(variables)
        self.constraints: list[LmiConstraint] = list(constraints)

    def add_variable(self, name, rows, cols=None, symmetric=False) -> MatrixVariable:
        v = MatrixVariable(name, rows, rows if cols is None else cols, symmetric)
        if any(existing.name == name for existing in self.variables):
            raise ValueError(f"variable {name!r} declared twice")
        self.variables.append(v)
        return v

    def add_constraint(self, expr: AffineMatrixExpr, sense: str):
        self.constraints.append(LmiConstraint(expr, sense))

    def variable(self, name: str) -> MatrixVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def validate(self):
        declared = {v.name: v for v in self.variables}
        for k, c in enumerate(self.constraints):
            for t in c.expr.terms:
                if t.name not in declared:
                    raise ValueError(f"constraint {k} uses undeclared variable {t.name!r}")
                v = declared[t.name]
                r, cdim = (v.cols, v.rows) if t.transpose else (v.rows, v.cols)
                if t.left.shape[1] != r or t.right.shape[0] != cdim:
                    raise ValueError(
                        f"constraint {k}: term on {t.name!r} has inconsistent shapes"
                    )


@dataclass(frozen=True)
class LmiSolution:
    """Feasibility verdict plus the verified margins of the final iterate."""

    assignment: dict
    margin: float
    iterations: int
    status: str  # feasible | infeasible-at-tolerance | max-iter
    t_achieved: float
    constraint_margins: tuple
    eps_strict: float
    notes: tuple = ()

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


class _Layout:
    """Vectorisation of the declared variables into one parameter vector."""

    def __init__(self, variables):
        self.variables = list(variables)
        self.offsets = {}
        total = 0
        for v in self.variables:
            self.offsets[v.name] = total
            total += v.n_scalars
        self.total = total

    def zero_assignment(self):
        return {v.name: np.zeros((v.rows, v.cols)) for v in self.variables}

    def basis_items(self, names=None):
        """Yield (param_index, var_name, basis_matrix) for selected variables."""
        for v in self.variables:
            if names is not None and v.name not in names:
                continue
            off = self.offsets[v.name]
            k = 0
            if v.symmetric:
                for i in range(v.rows):
                    for j in range(i, v.cols):
                        basis = np.zeros((v.rows, v.cols))
                        basis[i, j] = 1.0
                        basis[j, i] = 1.0
                        if i == j:
                            basis[i, j] = 1.0
                        yield off + k, v.name, basis
                        k += 1
            else:
                for i in range(v.rows):
                    for j in range(v.cols):
                        basis = np.zeros((v.rows, v.cols))
                        basis[i, j] = 1.0
                        yield off + k, v.name, basis
                        k += 1

    def unpack(self, vec):
        out = {}
        for v in self.variables:
            off = self.offsets[v.name]
            if v.symmetric:
                m = np.zeros((v.rows, v.cols))
                k = 0
                for i in range(v.rows):
                    for j in range(i, v.cols):
                        m[i, j] = vec[off + k]
                        m[j, i] = vec[off + k]
                        k += 1
            else:
                m = vec[off : off + v.rows * v.cols].reshape(v.rows, v.cols)
            out[v.name] = m
        return out


@dataclass
class _OrientedConstraint:
    """Constraint data in uniform "M(v) <= t I" orientation."""

    const: np.ndarray      # M_k(0)
    param_idx: np.ndarray  # indices of parameters with nonzero coefficient
    coeffs: np.ndarray     # (len(param_idx), d, d) basis coefficient matrices
    dim: int

    def value(self, vec):
        m = self.const.copy()
        for pos, p in enumerate(self.param_idx):
            m = m + vec[p] * self.coeffs[pos]
        return m


def _materialise(problem: LmiProblem, layout: _Layout):
    zero = layout.zero_assignment()
    oriented = []
    for c in problem.constraints:
        sign = 1.0 if c.sense == "neg" else -1.0
        base = sign * c.expr.evaluate(zero)
        names = c.expr.variable_names()
        idx, mats = [], []
        for p, name, basis in layout.basis_items(names):
            assignment = dict(zero)
            assignment[name] = basis
            g = sign * c.expr.evaluate(assignment) - base
            if _maxabs(g) > 0.0:
                idx.append(p)
                mats.append(g)
        coeffs = np.array(mats) if mats else np.zeros((0, c.expr.dim, c.expr.dim))
        oriented.append(
            _OrientedConstraint(base, np.array(idx, dtype=int), coeffs, c.expr.dim)
        )
    return oriented


def _slacks(oriented, vec, t):
    """Cholesky factors of t I - M_k(v), or None when not positive definite."""
    factors = []
    for oc in oriented:
        s = t * np.eye(oc.dim) - oc.value(vec)
        try:
            factors.append(np.linalg.cholesky(s))
        except np.linalg.LinAlgError:
            return None
    return factors


def _barrier_value(factors, t, mu):
    logdet = sum(2.0 * float(np.sum(np.log(np.diag(f)))) for f in factors)
    return t - mu * logdet


def _newton_system(oriented, factors, mu, n_params):
    grad = np.zeros(n_params + 1)
    hess = np.zeros((n_params + 1, n_params + 1))
    grad[-1] = 1.0
    for oc, chol in zip(oriented, factors):
        s_inv = sla.cho_solve((chol, True), np.eye(oc.dim))
        s_inv = 0.5 * (s_inv + s_inv.T)
        if oc.param_idx.size:
            w = np.einsum("ij,pjk->pik", s_inv, oc.coeffs)
            grad[oc.param_idx] += mu * np.einsum("pij,ij->p", oc.coeffs, s_inv)
            block = mu * np.einsum("pij,qji->pq", w, w)
            hess[np.ix_(oc.param_idx, oc.param_idx)] += block
            cross = -mu * np.einsum("pij,ji->p", w, s_inv)
            hess[oc.param_idx, -1] += cross
            hess[-1, oc.param_idx] += cross
        grad[-1] += -mu * float(np.trace(s_inv))
        hess[-1, -1] += mu * float(np.sum(s_inv * s_inv))
    return grad, hess


def _verified_margins(problem: LmiProblem, assignment: dict):
    """Per-constraint strictness slack, recomputed with the eigensolver."""
    slacks = []
    for c in problem.constraints:
        m = c.expr.evaluate(assignment)
        eigs = symmetric_eigenvalues(m)
        slack = -float(eigs[-1]) if c.sense == "neg" else float(eigs[0])
        slacks.append(slack)
    return tuple(slacks)


def solve_feasibility(
    problem: LmiProblem,
    eps_strict: float = 1e-6,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> LmiSolution:
    """Search a strictly feasible point of an LMI system.

    Minimises the uniform eigenvalue shift t with a barrier path-following
    scheme and reports ``feasible`` when the re-verified margin of the final
    iterate is at least ``eps_strict``.  ``max_iter`` caps the total number
    of Newton steps; exhausting it without a certificate yields status
    ``max-iter`` with the best iterate still attached.
    """
    if eps_strict <= 0:
        raise ValueError("eps_strict must be positive")
    problem.validate()
    layout = _Layout(problem.variables)
    oriented = _materialise(problem, layout)
    if not oriented:
        raise ValueError("problem has no constraints")

    vec = np.zeros(layout.total)
    t = max(float(symmetric_eigenvalues(oc.const)[-1]) for oc in oriented) + 1.0

    mu = 1.0
    mu_factor = 0.2
    mu_min = 1e-11
    t_floor = -1e9
    iterations = 0
    notes = []
    stall_rounds = 0
    t_prev_outer = t
    margin_prev = -np.inf
    settled = False  # progress on t has stopped or the schedule finished

    while mu > mu_min:
        step_collapse = False
        for _ in range(15):
            if iterations >= max_iter or t < t_floor:
                break
            factors = _slacks(oriented, vec, t)
            if factors is None:
                # should not happen from a feasible iterate; bail out
                notes.append("interior iterate lost positive definiteness")
                break
            grad, hess = _newton_system(oriented, factors, mu, layout.total)
            reg = 1e-12 * (1.0 + float(np.trace(hess)) / hess.shape[0])
            hess = hess + reg * np.eye(hess.shape[0])
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
            decrement = float(-grad @ step)
            f0 = _barrier_value(factors, t, mu)
            alpha = 1.0
            accepted = False
            while alpha >= 1e-14:
                cand_vec = vec + alpha * step[:-1]
                cand_t = t + alpha * step[-1]
                cand_factors = _slacks(oriented, cand_vec, cand_t)
                if cand_factors is not None:
                    f1 = _barrier_value(cand_factors, cand_t, mu)
                    if f1 <= f0 - 1e-4 * alpha * decrement or f1 < f0:
                        vec, t = cand_vec, cand_t
                        accepted = True
                        break
                alpha *= 0.5
            iterations += 1
            if not accepted:
                step_collapse = True
                notes.append("step-size collapse; problem may be ill-posed")
                break
            if decrement <= max(tol, 1e-12) * (1.0 + abs(t)):
                break
        if t < t_floor:
            notes.append("shift unbounded below; any interior point certifies feasibility")
            settled = True
            break
        margin_now = min(_verified_margins(problem, layout.unpack(vec)))
        progress_tol = max(tol, 1e-8) * (1.0 + abs(t))
        t_stalled = abs(t - t_prev_outer) <= progress_tol
        margin_stalled = (margin_now - margin_prev) <= progress_tol
        if step_collapse or t_stalled or margin_stalled:
            stall_rounds += 1
            if stall_rounds >= 2:
                settled = True
                break
        else:
            stall_rounds = 0
        t_prev_outer = t
        margin_prev = margin_now
        if iterations >= max_iter:
            break
        mu *= mu_factor
    else:
        settled = True  # barrier schedule ran to completion

    assignment = layout.unpack(vec)
    constraint_margins = _verified_margins(problem, assignment)
    margin = min(constraint_margins)
    if margin >= eps_strict:
        status = "feasible"
    elif settled:
        status = "infeasible-at-tolerance"
    else:
        status = "max-iter"
    return LmiSolution(
        assignment=assignment,
        margin=margin,
        iterations=iterations,
        status=status,
        t_achieved=t,
        constraint_margins=constraint_margins,
        eps_strict=eps_strict,
        notes=tuple(notes),
    )
