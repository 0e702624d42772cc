"""Krylov matrices, Gramians, rank tests and the duality report.

For the pair of systems ``(C, A; F)`` and ``(A^T, C^T; F)`` the observability
Gramian of the first equals the controllability Gramian of the second.  With
``W = U1 diag(Lambda1) U1^T`` and ``Ker(W) = Im(U2)``:

* the output controllable set of the dual system is ``Im(F U1)``;
* the functionally observable set of the primal is
  ``Im(F U1)`` intersected with the orthogonal complement of ``Im(F U2)``.

The difference of their dimensions is the (integer) duality gap.  It is zero
exactly when ``F Im(W)`` is orthogonal to ``F Ker(W)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InputError, NotHurwitzError, NumericalError
from .numkernel import DEFAULT_TOL, ToleranceConfig, as_matrix, expm, orth_basis, rank_tol
from .system import check_target_matrix

__all__ = [
    "ctrb_matrix",
    "obsv_matrix",
    "is_output_controllable",
    "is_functionally_observable",
    "finite_horizon_gramians",
    "gramian",
    "infinite_horizon_gramian",
    "is_hurwitz",
    "GramianSplit",
    "gramian_split",
    "DualityReport",
    "duality_report",
    "INFINITE",
]

INFINITE = "infinite"

Horizon = Union[float, str]


def _check_pair(A, B, what="B"):
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    B = as_matrix(B, what)
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"{what} has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    return A, B


def ctrb_matrix(A, B) -> np.ndarray:
    """``[B, AB, ..., A^{n-1} B]`` with exactly ``n`` blocks."""
    A, B = _check_pair(A, B)
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def obsv_matrix(C, A) -> np.ndarray:
    """``[C; CA; ...; CA^{n-1}]``, computed as ``ctrb_matrix(A^T, C^T)^T``."""
    C = as_matrix(C, "C")
    return ctrb_matrix(np.asarray(A, dtype=float).T, C.T).T


def _scaled_krylov(A, B):
    # rank-preserving rescaling: A -> A/||A|| and B -> B/||B|| keep the powers
    # of A from swamping the low-order blocks
    a = np.linalg.norm(A, 2)
    b = np.linalg.norm(B, 2)
    As = A / a if a > 0 else A
    Bs = B / b if b > 0 else B
    return ctrb_matrix(As, Bs)


def is_output_controllable(A, B, F, cfg: ToleranceConfig = DEFAULT_TOL) -> bool:
    """Output controllability of ``(A, B; F)``: ``rank(F Ctrb) == rank(F) == r``."""
    A, B = _check_pair(A, B)
    F = check_target_matrix(F, A.shape[0], cfg)
    K = _scaled_krylov(A, B)
    Fs = F / np.linalg.norm(F, 2)
    return rank_tol(Fs @ K, cfg) == F.shape[0]


def is_functionally_observable(C, A, F, cfg: ToleranceConfig = DEFAULT_TOL) -> bool:
    """Functional observability of ``(C, A; F)``: ``rank([O; F]) == rank(O)``."""
    C = as_matrix(C, "C")
    A, Ct = _check_pair(np.asarray(A, dtype=float), C.T, "C^T")
    F = check_target_matrix(F, A.shape[0], cfg)
    O = _scaled_krylov(A.T, Ct).T
    Fs = F / np.linalg.norm(F, 2)
    return rank_tol(np.vstack([O, Fs]), cfg) == rank_tol(O, cfg)


# ---------------------------------------------------------------------------
# Gramians
# ---------------------------------------------------------------------------


def _sym(W):
    return (W + W.T) / 2


def _vanloan_doubling(A, Q, t1, steps):
    """``int_0^t1 e^{A s} Q e^{A^T s} ds``.

    Van Loan's block exponential on a short interval ``h = t1 / 2^k``, then
    ``k`` doublings ``W(2h) = W(h) + e^{Ah} W(h) e^{A^T h}``.  Keeping ``h``
    short avoids the overflow of ``e^{-A t1}`` inside the block exponential
    for long horizons.
    """
    n = A.shape[0]
    norm_a = np.linalg.norm(A, 1)
    k = max(0, math.ceil(math.log2(max(steps, 1))))
    if norm_a * t1 / 2**k > 0.5:
        k = max(k, math.ceil(math.log2(2 * norm_a * t1)))
    h = t1 / 2**k
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = Q
    M[n:, n:] = A.T
    E = expm(M, h)
    Phi = E[n:, n:].T  # e^{A h}
    W = _sym(E[n:, n:].T @ E[:n, n:])
    for _ in range(k):
        W = _sym(W + Phi @ W @ Phi.T)
        Phi = Phi @ Phi
    return W


def gramian(A, Q, t1: float, steps: int = 64) -> np.ndarray:
    """Finite-horizon Gramian ``int_0^t1 e^{A s} Q e^{A^T s} ds`` for symmetric PSD ``Q``."""
    A = as_matrix(A, "A")
    Q = as_matrix(Q, "Q")
    if A.shape[0] != A.shape[1] or Q.shape != A.shape:
        raise DimensionError("A and Q must be square of the same size")
    if not (t1 > 0 and math.isfinite(t1)):
        raise InputError(f"horizon t1 must be positive and finite, got {t1!r}")
    if steps < 16:
        raise InputError(f"steps must be >= 16, got {steps}")
    W = _vanloan_doubling(A, _sym(Q), float(t1), steps)
    if not np.all(np.isfinite(W)):
        raise NumericalError(f"Gramian overflowed over horizon t1 = {t1}")
    return W


def finite_horizon_gramians(A, B=None, C=None, t1: float = 10.0, steps: int = 64):
    """Controllability and observability Gramians over ``[0, t1]``.

    Returns ``(W_c, W_o)``; either is ``None`` when ``B`` or ``C`` is omitted.

        W_c = int_0^t1 e^{A s} B B^T e^{A^T s} ds
        W_o = int_0^t1 e^{A^T s} C^T C e^{A s} ds
    """
    A = as_matrix(A, "A")
    Wc = Wo = None
    if B is not None:
        A, B = _check_pair(A, B)
        Wc = gramian(A, B @ B.T, t1, steps)
    if C is not None:
        A, Ct = _check_pair(A, as_matrix(C, "C").T, "C^T")
        Wo = gramian(A.T, Ct @ Ct.T, t1, steps)
    return Wc, Wo


def is_hurwitz(A) -> bool:
    A = as_matrix(A, "A")
    return bool(np.max(np.linalg.eigvals(A).real) < 0)


def infinite_horizon_gramian(A, M) -> np.ndarray:
    """Solve ``A W + W A^T + M = 0`` for Hurwitz ``A``.

    Pass ``(A, B B^T)`` for the controllability Gramian and
    ``(A^T, C^T C)`` for the observability Gramian.
    """
    A = as_matrix(A, "A")
    M = as_matrix(M, "M")
    if A.shape[0] != A.shape[1] or M.shape != A.shape:
        raise DimensionError("A and M must be square of the same size")
    if np.linalg.norm(M - M.T, 1) > 1e-8 * max(1.0, np.linalg.norm(M, 1)):
        raise InputError("M must be symmetric")
    if not is_hurwitz(A):
        raise NotHurwitzError("infinite-horizon Gramian undefined: A is not Hurwitz")
    W = _sym(sla.solve_continuous_lyapunov(A, -_sym(M)))
    res = np.linalg.norm(A @ W + W @ A.T + M, 2)
    scale = max(np.linalg.norm(M, 2), np.finfo(float).tiny)
    # Bartels-Stewart leaves O(eps ||A|| ||W||); admit that floor as well
    floor = 1e3 * np.finfo(float).eps * np.linalg.norm(A, 2) * np.linalg.norm(W, 2)
    if res > max(1e-8 * scale, floor):
        raise NumericalError(f"Lyapunov residual {res:.3g} exceeds tolerance")
    return W


def _observability_gramian(C, A, horizon: Horizon, steps: int = 64):
    if horizon == INFINITE:
        C = as_matrix(C, "C")
        return infinite_horizon_gramian(as_matrix(A, "A").T, C.T @ C)
    return finite_horizon_gramians(A, None, C, float(horizon), steps)[1]


# ---------------------------------------------------------------------------
# Eigenpartition and the duality report
# ---------------------------------------------------------------------------


@dataclass
class GramianSplit:
    """``W = U1 diag(Lambda1) U1^T``; ``U2`` spans ``Ker(W)``."""

    W: np.ndarray
    U1: np.ndarray
    Lambda1: np.ndarray
    U2: np.ndarray
    horizon_t1: Horizon = INFINITE

    @property
    def rank(self) -> int:
        return self.U1.shape[1]


def gramian_split(W, cfg: ToleranceConfig = DEFAULT_TOL, horizon_t1: Horizon = INFINITE) -> GramianSplit:
    """Eigenpartition of a symmetric PSD matrix.

    Eigenvalues at or below ``cfg.rank_rel_tol * lambda_max`` go to the kernel.
    """
    W = as_matrix(W, "W")
    if W.shape[0] != W.shape[1]:
        raise DimensionError(f"W must be square, got {W.shape}")
    if np.linalg.norm(W - W.T, 2) > 1e-8 * max(1.0, np.linalg.norm(W, 2)):
        raise InputError("W must be symmetric")
    lam, U = np.linalg.eigh(_sym(W))
    lam, U = lam[::-1], U[:, ::-1]
    top = lam[0] if lam.size else 0.0
    keep = lam > cfg.rank_rel_tol * top if top > 0 else np.zeros(lam.size, dtype=bool)
    return GramianSplit(W=W, U1=U[:, keep], Lambda1=lam[keep], U2=U[:, ~keep], horizon_t1=horizon_t1)


@dataclass
class DualityReport:
    dim_CF: int
    dim_OF: int
    gap: int
    strong: bool
    output_controllable_dual: bool
    functionally_observable: bool
    ortho_defect: float
    horizon: Horizon = INFINITE

    def to_dict(self) -> dict:
        return asdict(self)


def subspace_duality(split: GramianSplit, F, cfg: ToleranceConfig = DEFAULT_TOL):
    """``(dim_CF, dim_OF, ortho_defect)`` from a Gramian split.

    ``ortho_defect`` is the largest cosine of the principal angles between
    ``Im(F U1)`` and ``Im(F U2)``; ``dim_OF`` is ``dim_CF`` minus the number
    of cosines above ``cfg.ortho_tol``.
    """
    F = as_matrix(F, "F")
    # F U1 and F U2 are bounded by ||F||; their images are cut against that
    # scale so that rounding noise in U2 does not create spurious directions
    atol = cfg.ortho_tol * np.linalg.norm(F, 2)
    S = orth_basis(F @ split.U1, cfg, atol=atol) if split.U1.shape[1] else np.zeros((F.shape[0], 0))
    T = orth_basis(F @ split.U2, cfg, atol=atol) if split.U2.shape[1] else np.zeros((F.shape[0], 0))
    dim_cf = S.shape[1]
    if S.shape[1] == 0 or T.shape[1] == 0:
        return dim_cf, dim_cf, 0.0
    cosines = np.linalg.svd(T.T @ S, compute_uv=False)
    overlap = int(np.sum(cosines > cfg.ortho_tol))
    return dim_cf, dim_cf - overlap, float(cosines.max())


def duality_report(
    C, A, F, horizon: Horizon = 10.0, cfg: ToleranceConfig = DEFAULT_TOL, steps: int = 64
) -> DualityReport:
    """Weak/strong duality between ``(C, A; F)`` and ``(A^T, C^T; F)``.

    ``horizon`` is a finite ``t1`` or ``"infinite"`` (Hurwitz ``A`` only).
    """
    C = as_matrix(C, "C")
    A = as_matrix(A, "A")
    F = check_target_matrix(F, A.shape[0], cfg)
    if horizon != INFINITE:
        horizon = float(horizon)
    W = _observability_gramian(C, A, horizon, steps)
    split = gramian_split(W, cfg, horizon)
    dim_cf, dim_of, defect = subspace_duality(split, F, cfg)
    return DualityReport(
        dim_CF=dim_cf,
        dim_OF=dim_of,
        gap=dim_cf - dim_of,
        strong=defect <= cfg.ortho_tol,
        output_controllable_dual=is_output_controllable(A.T, C.T, F, cfg),
        functionally_observable=is_functionally_observable(C, A, F, cfg),
        ortho_defect=defect,
        horizon=horizon,
    )
