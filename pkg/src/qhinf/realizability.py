"""Physical realizability checks and noise augmentation for jump systems.

A set of real quadrature matrices corresponds to an open quantum system iff
it preserves the canonical commutation relations and routes the declared
output through matching input channels.  Both conditions are algebraic:

* commutation preservation:  A Theta + Theta A^T + B T B^T = 0, where T is
  the skew part of the input Ito matrix (checked per mode for jump systems,
  since only the drift switches),
* output compatibility:  the input columns carrying the output feedthrough
  must equal Theta C^T diag(J, ..., J).

Controllers produced by the synthesis layer generally violate both; the
augmentation below adds fresh vacuum-noise channels that repair them
exactly, using a deterministic canonical factorisation of the skew residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qmodel import (
    CommutationMatrix,
    Controller,
    ControllerMode,
    block_j,
)

__all__ = [
    "RealizabilityReport",
    "cr_residual",
    "output_condition_residual",
    "is_physically_realizable",
    "check_controller_realizability",
    "factor_skew_canonical",
    "AugmentedNoise",
    "augment_controller",
    "augment_jump_controller",
]

DEFAULT_TOL = 1e-9


def _theta_mat(theta) -> np.ndarray:
    if isinstance(theta, CommutationMatrix):
        return theta.theta
    return np.asarray(theta, dtype=float)


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def cr_residual(a, b, theta, t_im) -> np.ndarray:
    """Commutation-preservation defect A Theta + Theta A^T + B T_im B^T.

    The result is skew-symmetric by construction and vanishes exactly when
    the system preserves the commutation relations.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    th = _theta_mat(theta)
    t_im = np.asarray(t_im, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or th.shape != (n, n):
        raise ValueError("drift and commutation matrix must be square of equal size")
    if b.shape[0] != n or t_im.shape != (b.shape[1], b.shape[1]):
        raise ValueError("input matrix and noise skew part have inconsistent shapes")
    return a @ th + th @ a.T + b @ t_im @ b.T


def output_condition_residual(b, c, theta) -> np.ndarray:
    """Output-channel defect B [I; 0] - Theta C^T diag(J, ..., J).

    The first n_y input columns of ``b`` are taken to carry the output
    feedthrough; ``c`` is the corresponding output matrix.
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    th = _theta_mat(theta)
    n_y = c.shape[0]
    if n_y % 2:
        raise ValueError("output dimension must be even")
    if b.shape[1] < n_y:
        raise ValueError("input matrix has fewer columns than the output dimension")
    if b.shape[0] != th.shape[0] or c.shape[1] != th.shape[0]:
        raise ValueError("state dimensions disagree")
    return b[:, :n_y] - th @ c.T @ block_j(n_y)


@dataclass(frozen=True)
class RealizabilityReport:
    """Per-mode residual magnitudes and the verdict at a stated tolerance."""

    cr_residuals: tuple
    output_residuals: tuple
    tol: float

    @property
    def realizable(self) -> bool:
        return all(r <= self.tol for r in self.cr_residuals) and all(
            r <= self.tol for r in self.output_residuals
        )

    def worst(self) -> float:
        return max(self.cr_residuals + self.output_residuals)


def _per_mode(item, n_modes):
    """Broadcast a single matrix to all modes, or pass a per-mode sequence."""
    if isinstance(item, np.ndarray) or np.ndim(item) == 2:
        return [np.asarray(item, dtype=float)] * n_modes
    items = [np.asarray(m, dtype=float) for m in item]
    if len(items) != n_modes:
        raise ValueError("per-mode sequence length disagrees with the mode count")
    return items


def is_physically_realizable(a_modes, b, c, theta, t_im, tol: float = DEFAULT_TOL):
    """Check realizability mode by mode.

    ``b`` and ``c`` may be single matrices (shared across modes) or per-mode
    sequences.  A jump system is realizable iff every mode passes, because
    the drift is piecewise constant along fault paths.
    """
    a_list = [np.asarray(a, dtype=float) for a in a_modes]
    n_modes = len(a_list)
    b_list = _per_mode(b, n_modes)
    c_list = _per_mode(c, n_modes)
    cr = tuple(
        _maxabs(cr_residual(a, bm, theta, t_im))
        for a, bm in zip(a_list, b_list)
    )
    out = tuple(
        _maxabs(output_condition_residual(bm, cm, theta))
        for bm, cm in zip(b_list, c_list)
    )
    return RealizabilityReport(cr, out, tol)


def check_controller_realizability(ctrl: Controller, tol: float = DEFAULT_TOL):
    """Realizability report for a mode-switched controller.

    The combined input matrix of mode i is [B_i, E_i] over (measurement,
    noise) channels with the canonical vacuum Ito matrix on every channel.
    The output condition is evaluated on the noise columns selected by the
    feedthrough D_i, which by construction come first within E_i.
    """
    n_in = ctrl.n_y + ctrl.n_nu
    t_im = block_j(n_in)
    cr, out = [], []
    for mode in ctrl.modes:
        b_full = np.hstack([mode.b, mode.e])
        cr.append(_maxabs(cr_residual(mode.a, b_full, ctrl.theta_k, t_im)))
        n_u = ctrl.n_u
        if ctrl.n_nu >= n_u:
            out.append(
                _maxabs(output_condition_residual(mode.e[:, :n_u], mode.c, ctrl.theta_k))
            )
        else:
            out.append(float("inf"))  # no noise channel can carry the output
    return RealizabilityReport(tuple(cr), tuple(out), tol)


def factor_skew_canonical(w, drop_tol: float = 1e-12) -> np.ndarray:
    """Factor a real skew-symmetric W as E J_blk E^T = -W.

    Uses the canonical form of skew-symmetric matrices: W decomposes into
    orthogonal planes on which it acts as c J with c > 0 in the ordered
    basis (v, W^T v / c).  Each plane contributes the two columns
    (sqrt(c) v, -sqrt(c) w) to E.  Planes with |c| <= drop_tol are dropped,
    so the factor has the minimal number of columns.

    The pairing starts from the coordinate basis whenever -W^2 is diagonal,
    which keeps block-diagonal residuals (the common case for decoupled
    quadratures) in aligned form: W = c J yields exactly sqrt(|c|) I for
    c < 0 and sqrt(c) diag(1, -1) for c > 0.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ValueError("need a square matrix")
    scale = 1.0 + _maxabs(w)
    if _maxabs(w + w.T) > 1e-10 * scale:
        raise ValueError("matrix is not skew-symmetric")
    w = 0.5 * (w - w.T)

    k = -w @ w  # symmetric PSD; eigenvalues are the squared plane gains
    offdiag = k - np.diag(np.diag(k))
    if _maxabs(offdiag) <= 1e-12 * (1.0 + _maxabs(k)):
        candidates = [np.eye(n)[:, i] for i in range(n)]
    else:
        _, vecs = np.linalg.eigh(0.5 * (k + k.T))
        candidates = [vecs[:, i] for i in range(n)]

    used = np.zeros((n, 0))
    cols = []
    for cand in candidates:
        v = cand - used @ (used.T @ cand)
        norm = np.linalg.norm(v)
        if norm < 0.5:
            continue  # already covered by an earlier plane
        v = v / norm
        c = float(np.linalg.norm(w @ v))
        if c <= drop_tol:
            continue
        w_vec = w.T @ v / c
        cols.append(np.sqrt(c) * v)
        cols.append(-np.sqrt(c) * w_vec)
        used = np.column_stack([used, v, w_vec])

    e = np.column_stack(cols) if cols else np.zeros((n, 0))
    residual = e @ block_j(e.shape[1]) @ e.T + w
    if _maxabs(residual) > 1e-10 * scale:
        raise AssertionError("skew factorisation failed to reproduce the residual")
    return e


@dataclass(frozen=True)
class AugmentedNoise:
    """Noise channels that make a controller mode physically realizable."""

    e_out: np.ndarray    # columns carrying the output feedthrough
    e_extra: np.ndarray  # columns repairing the commutation defect
    d: np.ndarray        # output feedthrough selecting the first noise block

    @property
    def e(self) -> np.ndarray:
        return np.hstack([self.e_out, self.e_extra])

    @property
    def n_noise(self) -> int:
        return self.e_out.shape[1] + self.e_extra.shape[1]


def augment_controller(a, b, c, theta_k) -> AugmentedNoise:
    """Construct noise input blocks that repair realizability.

    Given controller drift ``a`` (n_k x n_k), measurement input ``b``
    (n_k x n_y) and output matrix ``c`` (n_u x n_k) with canonical
    ``theta_k``:

    1. the first noise block is forced by the output condition,
       E_out = Theta_K C^T diag(J), and the feedthrough is D = [I, 0];
    2. the remaining commutation defect
       W = A Theta + Theta A^T + B J B^T + E_out J E_out^T
       is repaired by E_extra with E_extra J E_extra^T = -W.

    The result passes the realizability check to 1e-9 by construction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if isinstance(theta_k, CommutationMatrix) and not theta_k.is_canonical:
        raise ValueError("augmentation requires a canonical controller commutation matrix")
    th = _theta_mat(theta_k)
    n_u = c.shape[0]
    if n_u % 2:
        raise ValueError("controller output dimension must be even")
    e_out = th @ c.T @ block_j(n_u)
    n_y = b.shape[1]
    t_im = block_j(n_y + n_u)
    w = cr_residual(a, np.hstack([b, e_out]), th, t_im)
    e_extra = factor_skew_canonical(w)
    d = np.hstack([np.eye(n_u), np.zeros((n_u, e_extra.shape[1]))])
    result = AugmentedNoise(e_out, e_extra, d)
    full_b = np.hstack([b, result.e])
    final = cr_residual(a, full_b, th, block_j(n_y + result.n_noise))
    if _maxabs(final) > DEFAULT_TOL:
        raise AssertionError("augmentation left a commutation defect above tolerance")
    return result


def augment_jump_controller(ctrl: Controller) -> Controller:
    """Augment every mode of a controller with realizability noise.

    Modes may need a different number of repair channels; the noise blocks
    are zero-padded on the right so all modes share one noise dimension.
    """
    augmented = [
        augment_controller(m.a, m.b, m.c, ctrl.theta_k) for m in ctrl.modes
    ]
    n_noise = max(a.n_noise for a in augmented)
    if n_noise % 2:
        n_noise += 1
    modes = []
    for mode, aug in zip(ctrl.modes, augmented):
        pad = n_noise - aug.n_noise
        e = np.hstack([aug.e, np.zeros((ctrl.n_k, pad))])
        d = np.hstack([aug.d, np.zeros((ctrl.n_u, pad))])
        modes.append(ControllerMode(mode.a, mode.b, mode.c, d, e))
    return Controller(tuple(modes), ctrl.theta_k)
