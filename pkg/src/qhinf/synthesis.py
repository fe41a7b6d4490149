"""H-infinity controller synthesis for jump plants via coupled LMIs.

For each fault mode i the feasibility system consists of

* an observer-side block inequality in (X_i, L_i) carrying the coupling sum
  over all modes,
* the cross-coupling condition [[Y_i, I], [I, X_i]] > 0, and
* a state-feedback-side block inequality in (Y_i, F_i) whose rate coupling
  enters through a Schur-complement row/column of scaled Y blocks.

A feasible solution is converted into per-mode controller matrices

    C_i = F_i Y_i^{-1}
    B_i = (Y_i^{-1} - X_i)^{-1} L_i
    A_i = (Y_i^{-1} - X_i)^{-1} M_i Y_i^{-1}

with the standard completion term M_i (see ``_reconstruct_mode``).  The
resulting controller has the plant's state dimension, carries no noise
channels yet, and generally needs the realizability augmentation before it
corresponds to a quantum device.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lmi
from .qmodel import (
    Controller,
    ControllerMode,
    JumpPlant,
    make_commutation_matrix,
)

__all__ = [
    "SynthesisError",
    "LmiInfeasibleError",
    "SynthesisResult",
    "build_hinf_lmis",
    "reconstruct_controller",
    "synthesize",
    "min_attenuation",
]

COND_LIMIT = 1e10  # inversion guard for the reconstruction step


class SynthesisError(RuntimeError):
    pass


class LmiInfeasibleError(SynthesisError):
    """The synthesis LMIs have no strictly feasible point at this level."""

    def __init__(self, g, solution):
        super().__init__(
            f"synthesis LMIs not strictly feasible at g={g} "
            f"(status {solution.status}, margin {solution.margin:.3e})"
        )
        self.g = g
        self.solution = solution


class _BlockExpr:
    """Helper to assemble a symmetric block LMI expression.

    Off-diagonal placements automatically add the mirrored transpose term,
    so the assembled expression is exactly symmetric for any assignment.
    """

    def __init__(self, block_dims):
        self.offsets = np.concatenate([[0], np.cumsum(block_dims)]).astype(int)
        self.dims = list(block_dims)
        self.expr = lmi.AffineMatrixExpr(int(self.offsets[-1]))

    def _embed_left(self, r, mat):
        mat = np.asarray(mat, dtype=float)
        out = np.zeros((self.expr.dim, mat.shape[1]))
        out[self.offsets[r] : self.offsets[r] + mat.shape[0], :] = mat
        return out

    def _embed_right(self, c, mat):
        mat = np.asarray(mat, dtype=float)
        out = np.zeros((mat.shape[0], self.expr.dim))
        out[:, self.offsets[c] : self.offsets[c] + mat.shape[1]] = mat
        return out

    def const(self, r, c, mat):
        mat = np.asarray(mat, dtype=float)
        rows = slice(self.offsets[r], self.offsets[r] + mat.shape[0])
        cols = slice(self.offsets[c], self.offsets[c] + mat.shape[1])
        self.expr.constant[rows, cols] += mat
        if r != c:
            self.expr.constant[cols, rows] += mat.T

    def term(self, r, c, name, left, right, transpose=False):
        self.expr.add_term(name, self._embed_left(r, left), self._embed_right(c, right), transpose)
        if r != c:
            self.expr.add_term(
                name,
                self._embed_left(c, np.asarray(right, dtype=float).T),
                self._embed_right(r, np.asarray(left, dtype=float).T),
                not transpose,
            )


def _names(prefix, n_modes):
    return [f"{prefix}{i + 1}" for i in range(n_modes)]


def _build_problem(a_modes, b1, b2, c1, d1, c2, d2, pi, g):
    """Matrix-level construction of the synthesis LMI problem."""
    if g <= 0:
        raise ValueError("attenuation level must be positive")
    a_modes = [np.asarray(a, dtype=float) for a in a_modes]
    b1, b2, c1, d1, c2, d2 = (
        np.asarray(m, dtype=float) for m in (b1, b2, c1, d1, c2, d2)
    )
    pi = np.asarray(pi, dtype=float)
    n_modes = len(a_modes)
    n = a_modes[0].shape[0]
    n_w, n_u, n_z, n_y = b1.shape[1], b2.shape[1], c1.shape[0], c2.shape[0]

    problem = lmi.LmiProblem()
    x_names, y_names = _names("X", n_modes), _names("Y", n_modes)
    l_names, f_names = _names("L", n_modes), _names("F", n_modes)
    for i in range(n_modes):
        problem.add_variable(x_names[i], n, symmetric=True)
        problem.add_variable(y_names[i], n, symmetric=True)
        problem.add_variable(l_names[i], n, n_y)
        problem.add_variable(f_names[i], n_u, n)

    eye_n = np.eye(n)
    for i in range(n_modes):
        a = a_modes[i]

        # observer-side inequality in (X_i, L_i)
        blk = _BlockExpr([n, n_w])
        blk.const(0, 0, c1.T @ c1)
        blk.const(1, 1, -(g * g) * np.eye(n_w))
        blk.term(0, 0, x_names[i], a.T, eye_n)
        blk.term(0, 0, x_names[i], eye_n, a)
        blk.term(0, 0, l_names[i], eye_n, c2)
        blk.term(0, 0, l_names[i], c2.T, eye_n, transpose=True)
        for j in range(n_modes):
            if abs(pi[i, j]) > 1e-15:
                blk.term(0, 0, x_names[j], pi[i, j] * eye_n, eye_n)
        blk.term(0, 1, x_names[i], eye_n, b1)
        blk.term(0, 1, l_names[i], eye_n, d2)
        problem.add_constraint(blk.expr, "neg")

        # cross-coupling positivity [[Y_i, I], [I, X_i]] > 0
        blk = _BlockExpr([n, n])
        blk.const(0, 1, eye_n)
        blk.term(0, 0, y_names[i], eye_n, eye_n)
        blk.term(1, 1, x_names[i], eye_n, eye_n)
        problem.add_constraint(blk.expr, "pos")

        # state-feedback-side inequality in (Y_i, F_i) with rate coupling
        others = [j for j in range(n_modes) if j != i]
        dims = [n, n_z] + [n] * len(others)
        blk = _BlockExpr(dims)
        blk.const(0, 0, b1 @ b1.T / (g * g))
        blk.const(1, 1, -np.eye(n_z))
        blk.term(0, 0, y_names[i], a, eye_n)
        blk.term(0, 0, y_names[i], eye_n, a.T)
        blk.term(0, 0, f_names[i], b2, eye_n)
        blk.term(0, 0, f_names[i], eye_n, b2.T, transpose=True)
        if abs(pi[i, i]) > 1e-15:
            blk.term(0, 0, y_names[i], pi[i, i] * eye_n, eye_n)
        blk.term(1, 0, y_names[i], c1, eye_n)
        blk.term(1, 0, f_names[i], d1, eye_n)
        for k, j in enumerate(others):
            if pi[i, j] > 1e-15:
                blk.term(0, 2 + k, y_names[i], np.sqrt(pi[i, j]) * eye_n, eye_n)
            blk.term(2 + k, 2 + k, y_names[j], -eye_n, eye_n)
        problem.add_constraint(blk.expr, "neg")

    return problem, (x_names, y_names, l_names, f_names)


def build_hinf_lmis(plant: JumpPlant, g: float) -> lmi.LmiProblem:
    """Emit the synthesis feasibility system for the plant at level g."""
    problem, _ = _build_problem(
        plant.a_modes, plant.b1, plant.b2, plant.c1, plant.d1,
        plant.c2, plant.d2, plant.rates.pi, g,
    )
    return problem


def _inv_sym_guarded(m, label):
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    small = np.min(np.abs(w))
    if small == 0.0 or np.max(np.abs(w)) / small > COND_LIMIT:
        raise SynthesisError(
            f"{label} is singular or badly conditioned "
            f"(eigenvalues {w}); the LMI solution violates the coupling condition"
        )
    return q @ np.diag(1.0 / w) @ q.T


def _reconstruct_mode(a, b1, b2, c1, d1, c2, d2, pi_row, y, y_invs, g, x, l, f, i):
    """Controller matrices of mode i from one feasible LMI block.

    M_i = -A^T - X A Y - X B2 F - L C2 Y - C1^T (C1 Y + D1 F)
          - g^{-2} (X B1 + L D2) B1^T - sum_j pi_ij Y_j^{-1} Y
    """
    y_inv = y_invs[i]
    w = y_inv - x  # negative definite when the coupling LMI holds strictly
    w_inv = _inv_sym_guarded(w, f"(Y_{i + 1}^-1 - X_{i + 1})")
    ck = f @ y_inv
    bk = w_inv @ l
    m = (
        -a.T
        - x @ a @ y
        - x @ b2 @ f
        - l @ c2 @ y
        - c1.T @ (c1 @ y + d1 @ f)
        - (x @ b1 + l @ d2) @ b1.T / (g * g)
    )
    for j, rate in enumerate(pi_row):
        if abs(rate) > 1e-15:
            m = m - rate * y_invs[j] @ y
    ak = w_inv @ m @ y_inv
    cond_w = float(np.linalg.cond(w))
    return ak, bk, ck, cond_w


@dataclass(frozen=True)
class SynthModeData:
    x: np.ndarray
    y: np.ndarray
    l: np.ndarray
    f: np.ndarray
    cond_coupling: float


@dataclass(frozen=True)
class SynthesisResult:
    """Feasible attenuation level, LMI blocks, and the derived controller."""

    g: float
    modes: tuple
    controller: Controller
    solution: lmi.LmiSolution


def reconstruct_controller(plant: JumpPlant, g: float, blocks) -> Controller:
    """Controller from per-mode (X_i, Y_i, L_i, F_i) tuples."""
    ctrl, _ = _reconstruct_with_diagnostics(plant, g, blocks)
    return ctrl


def _reconstruct_with_diagnostics(plant: JumpPlant, g: float, blocks):
    y_invs = [
        _inv_sym_guarded(np.asarray(b[1], dtype=float), f"Y_{i + 1}")
        for i, b in enumerate(blocks)
    ]
    modes = []
    diag = []
    for i, (x, y, l, f) in enumerate(blocks):
        ak, bk, ck, cond_w = _reconstruct_mode(
            plant.a_modes[i], plant.b1, plant.b2, plant.c1, plant.d1,
            plant.c2, plant.d2, plant.rates.pi[i], np.asarray(y, dtype=float),
            y_invs, g, np.asarray(x, dtype=float), np.asarray(l, dtype=float),
            np.asarray(f, dtype=float), i,
        )
        n_u = plant.n_u
        modes.append(
            ControllerMode(
                ak, bk, ck,
                np.zeros((n_u, 0)), np.zeros((plant.n, 0)),
            )
        )
        diag.append(
            SynthModeData(np.asarray(x, float), np.asarray(y, float),
                          np.asarray(l, float), np.asarray(f, float), cond_w)
        )
    theta_k = make_commutation_matrix(plant.n)
    return Controller(tuple(modes), theta_k), tuple(diag)


def synthesize(
    plant: JumpPlant,
    g: float,
    eps_strict: float = 1e-6,
    tol: float = 1e-9,
    max_iter: int = 400,
) -> SynthesisResult:
    """Build and solve the LMIs at level g, then reconstruct the controller.

    Raises ``LmiInfeasibleError`` when no strictly feasible point is found.
    The returned controller carries no noise channels; augment it with the
    realizability layer before treating it as a quantum device.
    """
    problem, (x_names, y_names, l_names, f_names) = _build_problem(
        plant.a_modes, plant.b1, plant.b2, plant.c1, plant.d1,
        plant.c2, plant.d2, plant.rates.pi, g,
    )
    solution = lmi.solve_feasibility(problem, eps_strict=eps_strict, tol=tol, max_iter=max_iter)
    if not solution.feasible:
        raise LmiInfeasibleError(g, solution)
    blocks = [
        (
            solution.assignment[x_names[i]],
            solution.assignment[y_names[i]],
            solution.assignment[l_names[i]],
            solution.assignment[f_names[i]],
        )
        for i in range(plant.n_modes)
    ]
    controller, diag = _reconstruct_with_diagnostics(plant, g, blocks)
    return SynthesisResult(float(g), diag, controller, solution)


def min_attenuation(
    plant: JumpPlant,
    g_lo: float,
    g_hi: float,
    tol_g: float = 1e-3,
    eps_strict: float = 1e-6,
    max_iter: int = 400,
):
    """Bisect for the smallest feasible attenuation level.

    Requires an initial bracket with g_lo infeasible and g_hi feasible; the
    bracket is widened automatically (up to four doublings of g_hi and four
    halvings of g_lo) before giving up.  Returns (g_star, result) where the
    result carries the certificate at g_star; under monotone feasibility the
    reported level is within tol_g of the true boundary.
    """
    if not (0 < g_lo < g_hi):
        raise ValueError("need 0 < g_lo < g_hi")

    def attempt(g):
        try:
            return synthesize(plant, g, eps_strict=eps_strict, max_iter=max_iter)
        except (LmiInfeasibleError, SynthesisError):
            return None

    best = attempt(g_hi)
    widenings = 0
    while best is None:
        widenings += 1
        if widenings > 4:
            raise SynthesisError(
                f"synthesis infeasible even at widened level g={g_hi}"
            )
        g_hi *= 2.0
        best = attempt(g_hi)

    shrinks = 0
    while attempt(g_lo) is not None:
        shrinks += 1
        if shrinks > 4:
            raise SynthesisError(
                f"synthesis still feasible at g={g_lo}; lower the bracket start"
            )
        g_lo *= 0.5

    while (g_hi - g_lo) > tol_g:
        mid = 0.5 * (g_lo + g_hi)
        result = attempt(mid)
        if result is None:
            g_lo = mid
        else:
            g_hi = mid
            best = result
    return g_hi, best
