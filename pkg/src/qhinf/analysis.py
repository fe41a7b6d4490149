"""Bounded-real and H-infinity verification machinery.

For a single stable mode the classical equivalences hold between the strict
bounded-real matrix inequality, the existence of a stabilizing solution of
the game-type Riccati equation, and the H-infinity norm bound; jump systems
add a coupled family of per-mode inequalities tied together by the
transition rates.  This module provides:

* ``bounded_real_margin``: largest eigenvalue of the bounded-real matrix at
  a candidate storage matrix (negative means certificate),
* ``solve_riccati`` / ``riccati_ode_backward``: algebraic stabilizing
  solution via the stable invariant subspace of the Hamiltonian matrix, and
  the finite-horizon differential form by backward integration,
* ``hinf_norm``: bisection on Riccati solvability, cross-checkable against
  ``frequency_sweep_norm`` (an independent oracle),
* ``coupled_mode_check``: LMI search for coupled per-mode certificates,
* ``verify_closed_loop``: full closed-loop certification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from . import lmi
from .qmodel import Controller, JumpPlant, TransitionRateMatrix, assemble_closed_loop
from .realizability import check_controller_realizability

__all__ = [
    "RiccatiSolution",
    "RiccatiNoSolutionError",
    "BoundedRealCertificate",
    "CoupledModeResult",
    "ClosedLoopReport",
    "bounded_real_margin",
    "solve_riccati",
    "riccati_ode_backward",
    "hinf_norm",
    "frequency_sweep_norm",
    "coupled_mode_check",
    "verify_closed_loop",
]

AXIS_TOL = 1e-8  # imaginary-axis tolerance for Hamiltonian eigenvalues


class RiccatiNoSolutionError(RuntimeError):
    """No stabilizing solution exists at the requested attenuation level."""


@dataclass(frozen=True)
class RiccatiSolution:
    p: np.ndarray
    closed_loop_abscissa: float
    residual: float
    g: float

    @property
    def stabilizing(self) -> bool:
        return self.closed_loop_abscissa < 0.0


@dataclass(frozen=True)
class BoundedRealCertificate:
    """Storage matrices certifying a strict bounded-real property."""

    g: float
    p_modes: tuple
    eps: float
    noise_offset: float  # trace-term constant of the dissipation bookkeeping
    method: str


@dataclass(frozen=True)
class CoupledModeResult:
    feasible: bool
    certificate: BoundedRealCertificate | None
    solution: lmi.LmiSolution


def _sym(m):
    return 0.5 * (m + m.T)


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _middle_inverse(d, g):
    """Inverse of g^2 I - D^T D, rejecting g <= sigma_max(D)."""
    d = np.asarray(d, dtype=float)
    r_hat = g * g * np.eye(d.shape[1]) - d.T @ d
    eigs = np.linalg.eigvalsh(_sym(r_hat))
    if eigs[0] <= 0.0:
        raise ValueError(
            f"attenuation level g={g} does not exceed the feedthrough gain "
            f"sigma_max(D)={np.linalg.norm(d, 2):.6g}"
        )
    return np.linalg.inv(r_hat)


def bounded_real_margin(a, b, c, d, p, g) -> float:
    """Largest eigenvalue of the bounded-real matrix at storage matrix P.

    Evaluates A^T P + P A + C^T C + (C^T D + P B)(g^2 I - D^T D)^{-1}
    (D^T C + B^T P); a negative value certifies the attenuation level g at
    this P for the constant-storage case.
    """
    a, b, c, d, p = (np.asarray(m, dtype=float) for m in (a, b, c, d, p))
    eigs_p = lmi.symmetric_eigenvalues(p)
    if eigs_p[0] <= 0.0:
        raise ValueError("storage matrix P must be positive definite")
    r_inv = _middle_inverse(d, g)
    cross = c.T @ d + p @ b
    m = a.T @ p + p @ a + c.T @ c + cross @ r_inv @ (d.T @ c + b.T @ p)
    return float(lmi.symmetric_eigenvalues(_sym(m))[-1])


def _riccati_data(a, b, c, d, g):
    a, b, c, d = (np.asarray(m, dtype=float) for m in (a, b, c, d))
    r_inv = _middle_inverse(d, g)
    a_hat = a + b @ r_inv @ d.T @ c
    q_hat = _sym(c.T @ c + c.T @ d @ r_inv @ d.T @ c)
    g_mat = _sym(b @ r_inv @ b.T)
    return a, b, c, d, r_inv, a_hat, q_hat, g_mat


def _riccati_residual(a, b, c, d, r_inv, p):
    cross = c.T @ d + p @ b
    return a.T @ p + p @ a + c.T @ c + cross @ r_inv @ (d.T @ c + b.T @ p)


def solve_riccati(a, b, c, d, g) -> RiccatiSolution:
    """Stabilizing PSD solution of the game-type algebraic Riccati equation.

        A^T P + P A + C^T C
        + (C^T D + P B)(g^2 I - D^T D)^{-1}(D^T C + B^T P) = 0

    computed from the stable invariant subspace of the associated
    Hamiltonian matrix (ordered real Schur form).  Raises
    ``RiccatiNoSolutionError`` when the Hamiltonian has eigenvalues within
    1e-8 of the imaginary axis, which signals g at or below the H-infinity
    norm.
    """
    a, b, c, d, r_inv, a_hat, q_hat, g_mat = _riccati_data(a, b, c, d, g)
    n = a.shape[0]
    ham = np.block([[a_hat, g_mat], [-q_hat, -a_hat.T]])
    eigs = np.linalg.eigvals(ham)
    axis_tol = AXIS_TOL * (1.0 + _maxabs(ham))
    if np.min(np.abs(eigs.real)) < axis_tol:
        raise RiccatiNoSolutionError(
            f"Hamiltonian eigenvalue within {axis_tol:.1e} of the imaginary axis; "
            f"no stabilizing solution at g={g}"
        )
    t_schur, z_schur, sdim = sla.schur(ham, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiNoSolutionError(
            f"stable subspace has dimension {sdim}, expected {n}"
        )
    v1 = z_schur[:n, :n]
    v2 = z_schur[n:, :n]
    try:
        p = np.linalg.solve(v1.T, v2.T).T
    except np.linalg.LinAlgError as exc:
        raise RiccatiNoSolutionError("stable subspace is not a graph subspace") from exc
    p = _sym(p)
    p_eigs = np.linalg.eigvalsh(p)
    scale = 1.0 + _maxabs(p)
    if p_eigs[0] < -1e-9 * scale:
        raise RiccatiNoSolutionError("stable-subspace solution is not positive semidefinite")
    closed = a + b @ r_inv @ (d.T @ c + b.T @ p)
    abscissa = float(np.max(np.linalg.eigvals(closed).real))
    if abscissa >= 0.0:
        raise RiccatiNoSolutionError("candidate solution is not stabilizing")
    residual = _maxabs(_riccati_residual(a, b, c, d, r_inv, p))
    if residual > 1e-8 * scale:
        raise RiccatiNoSolutionError(
            f"Riccati residual {residual:.3e} above tolerance; solve is unreliable"
        )
    return RiccatiSolution(p, abscissa, residual, float(g))


@dataclass(frozen=True)
class RiccatiTrajectory:
    """Finite-horizon Riccati solution P(s) indexed by time-to-go s."""

    times: np.ndarray
    p_values: np.ndarray  # (len(times), n, n)

    @property
    def final(self) -> np.ndarray:
        return self.p_values[-1]


def riccati_ode_backward(a, b, c, d, g, horizon, n_store=201, rtol=1e-8, atol=1e-10):
    """Backward integration of the matrix Riccati differential equation.

    Starting from the zero terminal condition, integrates the equation in
    the time-to-go variable s with adaptive step control; P(s) increases
    towards the algebraic stabilizing solution as the horizon grows, for
    any g above the H-infinity norm.
    """
    a, b, c, d, r_inv, *_ = _riccati_data(a, b, c, d, g)
    n = a.shape[0]

    def rhs(_s, y):
        p = y.reshape(n, n)
        dp = _riccati_residual(a, b, c, d, r_inv, p)
        return _sym(dp).ravel()

    grid = np.linspace(0.0, float(horizon), int(n_store))
    sol = solve_ivp(
        rhs,
        (0.0, float(horizon)),
        np.zeros(n * n),
        t_eval=grid,
        rtol=rtol,
        atol=atol,
        method="RK45",
    )
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    p_values = np.array([_sym(y.reshape(n, n)) for y in sol.y.T])
    return RiccatiTrajectory(sol.t, p_values)


def hinf_norm(a, b, c, d, tol: float = 1e-9) -> float:
    """H-infinity norm of a stable system by bisection on Riccati solvability."""
    a = np.asarray(a, dtype=float)
    if np.max(np.linalg.eigvals(a).real) >= 0.0:
        raise ValueError("drift matrix must be Hurwitz")
    d = np.asarray(d, dtype=float)
    sigma_d = float(np.linalg.norm(d, 2)) if d.size else 0.0

    def solvable(g):
        try:
            solve_riccati(a, b, c, d, g)
            return True
        except (RiccatiNoSolutionError, ValueError):
            return False

    lo = sigma_d
    hi = max(1.0, 2.0 * sigma_d)
    doublings = 0
    while not solvable(hi):
        hi *= 2.0
        doublings += 1
        if doublings > 60:
            raise RuntimeError("no finite attenuation level found; system may be unstable")
    while (hi - lo) > tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        if mid <= sigma_d:
            lo = mid
            continue
        if solvable(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _sigma_max_response(a, b, c, d, omega):
    n = a.shape[0]
    tf = c @ np.linalg.solve(1j * omega * np.eye(n) - a, b) + d
    return float(np.linalg.svd(tf, compute_uv=False)[0])


def frequency_sweep_norm(a, b, c, d, n_points: int = 1000, refine: bool = True) -> float:
    """H-infinity norm estimate from a dense frequency sweep.

    Evaluates sigma_max(C (i w I - A)^{-1} B + D) on a log-spaced grid that
    always includes w = 0, then sharpens the best point with a golden-section
    search on the bracketing interval.  Used as an oracle independent of the
    Riccati machinery.
    """
    a, b, c, d = (np.asarray(m, dtype=float) for m in (a, b, c, d))
    radius = max(1.0, float(np.max(np.abs(np.linalg.eigvals(a)))))
    grid = np.concatenate(
        [[0.0], np.logspace(np.log10(radius * 1e-4), np.log10(radius * 1e4), n_points)]
    )
    values = np.array([_sigma_max_response(a, b, c, d, w) for w in grid])
    k = int(np.argmax(values))
    best = float(values[k])
    if not refine:
        return best
    lo = grid[k - 1] if k > 0 else 0.0
    hi = grid[k + 1] if k + 1 < len(grid) else grid[k] * 2.0
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1 = _sigma_max_response(a, b, c, d, x1)
    f2 = _sigma_max_response(a, b, c, d, x2)
    for _ in range(200):
        if hi - lo < 1e-12 * (1.0 + hi):
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = _sigma_max_response(a, b, c, d, x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = _sigma_max_response(a, b, c, d, x1)
        best = max(best, f1, f2)
    return best


def _as_rate_matrix(rates) -> TransitionRateMatrix:
    if isinstance(rates, TransitionRateMatrix):
        return rates
    return TransitionRateMatrix(np.asarray(rates, dtype=float))


def coupled_mode_check(
    a_modes,
    rates,
    b1,
    c1,
    g,
    eps_strict: float = 1e-6,
    pi_literal: bool = False,
    extra_noise=None,
    max_iter: int = 400,
) -> CoupledModeResult:
    """Search coupled storage matrices P_1..P_N > 0 with, for every mode i,

        A_i^T P_i + P_i A_i + sum_j pi_ij P_j
        + g^{-2} P_i B_1 B_1^T P_i + C_1^T C_1 < 0,

    posed as an LMI via the Schur complement and solved with the barrier
    engine.  ``b1`` and ``c1`` may be shared or per-mode.  ``pi_literal``
    switches the coupling weights to the constant-diagonal reading
    sum_j pi_ii P_j kept for comparison purposes.
    """
    if g <= 0:
        raise ValueError("attenuation level must be positive")
    rates = _as_rate_matrix(rates)
    a_list = [np.asarray(m, dtype=float) for m in a_modes]
    n_modes = len(a_list)
    if n_modes != rates.n_modes:
        raise ValueError("mode count disagrees with the rate matrix")
    n = a_list[0].shape[0]

    def listify(item):
        if isinstance(item, np.ndarray) or np.ndim(item) == 2:
            return [np.asarray(item, dtype=float)] * n_modes
        return [np.asarray(m, dtype=float) for m in item]

    b_list = listify(b1)
    c_list = listify(c1)

    problem = lmi.LmiProblem()
    names = [f"P{i + 1}" for i in range(n_modes)]
    for name in names:
        problem.add_variable(name, n, symmetric=True)

    for i in range(n_modes):
        pos = lmi.AffineMatrixExpr(n)
        pos.add_term(names[i])
        problem.add_constraint(pos, "pos")

        n_w = b_list[i].shape[1]
        dim = n + n_w
        expr = lmi.AffineMatrixExpr(dim)
        expr.constant[:n, :n] += c_list[i].T @ c_list[i]
        expr.constant[n:, n:] += -(g * g) * np.eye(n_w)
        left_top = np.vstack([np.eye(n), np.zeros((n_w, n))])
        right_top = left_top.T
        expr.add_term(names[i], left_top @ a_list[i].T, right_top)
        expr.add_term(names[i], left_top, a_list[i] @ right_top)
        for j in range(n_modes):
            weight = rates.pi[i, i] if pi_literal else rates.pi[i, j]
            if abs(weight) > 1e-15:
                expr.add_term(names[j], weight * left_top, right_top)
        # off-diagonal block P_i B1 and its transpose
        right_b = np.hstack([np.zeros((n, n)), b_list[i]])
        expr.add_term(names[i], left_top, right_b)
        expr.add_term(names[i], right_b.T, right_top, transpose=True)
        problem.add_constraint(expr, "neg")

    solution = lmi.solve_feasibility(problem, eps_strict=eps_strict, max_iter=max_iter)
    if not solution.feasible:
        return CoupledModeResult(False, None, solution)
    p_modes = tuple(solution.assignment[name] for name in names)
    noise_offset = 0.0
    for i, p in enumerate(p_modes):
        offset = float(np.trace(b_list[i].T @ p @ b_list[i]))
        if extra_noise is not None:
            extra = listify(extra_noise)[i]
            if extra.size:
                offset += float(np.trace(extra.T @ p @ extra))
        noise_offset = max(noise_offset, offset)
    certificate = BoundedRealCertificate(
        g=float(g),
        p_modes=p_modes,
        eps=solution.margin,
        noise_offset=noise_offset,
        method="lmi",
    )
    return CoupledModeResult(True, certificate, solution)


@dataclass(frozen=True)
class ClosedLoopReport:
    """Outcome of certifying a plant-controller loop at attenuation g."""

    g: float
    hurwitz: tuple           # per-mode bool
    abscissas: tuple         # per-mode spectral abscissa
    coupled: CoupledModeResult
    realizability_residual: float

    @property
    def attenuation_ok(self) -> bool:
        return all(self.hurwitz) and self.coupled.feasible

    @property
    def passed(self) -> bool:
        return self.attenuation_ok


def verify_closed_loop(plant: JumpPlant, ctrl: Controller, g: float) -> ClosedLoopReport:
    """Assemble the loop, check per-mode stability and the coupled LMI."""
    loop = assemble_closed_loop(plant, ctrl)
    abscissas = tuple(
        float(np.max(np.linalg.eigvals(m.a).real)) for m in loop.modes
    )
    hurwitz = tuple(x < 0.0 for x in abscissas)
    if all(hurwitz):
        coupled = coupled_mode_check(
            [m.a for m in loop.modes],
            loop.rates,
            [m.b1 for m in loop.modes],
            [m.c for m in loop.modes],
            g,
            extra_noise=[m.b2 for m in loop.modes],
        )
    else:
        empty = lmi.LmiProblem()
        empty.add_variable("P1", loop.n, symmetric=True)
        expr = lmi.AffineMatrixExpr(loop.n)
        expr.add_term("P1")
        empty.add_constraint(expr, "pos")
        coupled = CoupledModeResult(
            False, None, lmi.solve_feasibility(empty, max_iter=1)
        )
    pr = check_controller_realizability(ctrl)
    return ClosedLoopReport(
        g=float(g),
        hurwitz=hurwitz,
        abscissas=abscissas,
        coupled=coupled,
        realizability_residual=pr.worst(),
    )
