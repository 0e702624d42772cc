"""Target control and observation energies.

Worst-case minimum energy to steer ``z = F x`` to a unit-norm target::

    E_tc = 1 / lambda_min(F W_c F^T)

Worst-case output energy carried by a unit-norm initial target::

    E_to = min_{|F x| = 1} x^T W_o x = 1 / lambda_max(F W_o^+ F^T)

The second expression needs a reconstruction gain ``G = F W_o^+`` with
``G W_o = F``, which exists exactly when ``(C, A; F)`` is functionally
observable.  ``W_o^+`` is the symmetric (Moore-Penrose) pseudoinverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .duality import INFINITE, finite_horizon_gramians, infinite_horizon_gramian
from .errors import DimensionError, InfeasibleError, InputError, NumericalError, UndefinedEnergyError
from .numkernel import DEFAULT_TOL, ToleranceConfig, as_matrix, expm, null_basis, rank_tol
from .system import SystemBundle, check_target_matrix

__all__ = [
    "EnergyReport",
    "target_control_energy",
    "target_observation_energy",
    "pencil_observation_energy",
    "Estimability",
    "estimability_condition",
    "sampled_observability_matrix",
    "energy_report",
]

UNDEFINED = "undefined"


def _gram_check(W, F):
    W = as_matrix(W, "W")
    if W.shape[0] != W.shape[1]:
        raise DimensionError(f"Gramian must be square, got {W.shape}")
    F = as_matrix(F, "F")
    if F.shape[1] != W.shape[0]:
        raise DimensionError(f"F has {F.shape[1]} columns, Gramian is {W.shape[0]}x{W.shape[0]}")
    return (W + W.T) / 2, F


def _psd_pinv(W, rel_tol):
    lam, U = np.linalg.eigh(W)
    top = lam.max() if lam.size else 0.0
    keep = lam > rel_tol * top if top > 0 else np.zeros(lam.size, dtype=bool)
    return (U[:, keep] / lam[keep]) @ U[:, keep].T


def target_control_energy(W_c, F, cfg: ToleranceConfig = DEFAULT_TOL) -> float:
    """``1 / lambda_min(F W_c F^T)``.

    Raises :class:`UndefinedEnergyError` when ``F W_c F^T`` is numerically
    singular, i.e. its smallest eigenvalue is at most
    ``cfg.pinv_rel_tol * ||F||^2 * lambda_max(W_c)``.
    """
    W, F = _gram_check(W_c, F)
    M = F @ W @ F.T
    lam = np.linalg.eigvalsh((M + M.T) / 2)
    scale = np.linalg.norm(F, 2) ** 2 * max(np.linalg.eigvalsh(W).max(), 0.0)
    if scale == 0.0 or lam[0] <= cfg.pinv_rel_tol * scale:
        raise UndefinedEnergyError("undefined: not output controllable (F W_c F^T is singular)")
    return float(1.0 / lam[0])


def pencil_observation_energy(W_o, F, cfg: ToleranceConfig = DEFAULT_TOL) -> float:
    """Smallest eigenvalue of the pencil ``(W_o, F^T F)`` on the feasible set.

    ``F^T F`` is singular for ``r < n``, so the pencil is reduced: write
    ``x = R z + N y`` with ``R = F^T (F F^T)^{-1}`` and ``N`` a basis of
    ``Ker(F)``, minimise over ``y`` (a Schur complement) and take the
    smallest eigenvalue of the remaining ``r x r`` form.
    """
    W, F = _gram_check(W_o, F)
    R = F.T @ np.linalg.inv(F @ F.T)
    N = null_basis(F, cfg)
    Wzz = R.T @ W @ R
    if N.shape[1]:
        Wzy = R.T @ W @ N
        Wyy = N.T @ W @ N
        S = Wzz - Wzy @ _psd_pinv((Wyy + Wyy.T) / 2, cfg.pinv_rel_tol) @ Wzy.T
    else:
        S = Wzz
    return float(np.linalg.eigvalsh((S + S.T) / 2)[0])


def target_observation_energy(W_o, F, cfg: ToleranceConfig = DEFAULT_TOL, cross_check: bool = True):
    """Return ``(E_to, G)`` with ``G = F W_o^+`` and ``E_to = 1/lambda_max(G F^T)``.

    Raises :class:`UndefinedEnergyError` when ``G W_o = F`` fails (relative
    residual above ``1e-6``).  With ``cross_check`` the value is compared with
    :func:`pencil_observation_energy` and a disagreement above ``1e-6``
    relative raises :class:`NumericalError`.
    """
    W, F = _gram_check(W_o, F)
    G = F @ _psd_pinv(W, cfg.pinv_rel_tol)
    res = np.linalg.norm(G @ W - F) / np.linalg.norm(F)
    if not res <= 1e-6:
        raise UndefinedEnergyError("undefined: no G with G W_o = F exists (not functionally observable)")
    M = G @ F.T
    e_to = float(1.0 / np.linalg.eigvalsh((M + M.T) / 2)[-1])
    if cross_check:
        e_pencil = pencil_observation_energy(W, F, cfg)
        if abs(e_pencil - e_to) > 1e-6 * abs(e_to):
            raise NumericalError(
                f"observation energy cross-check failed: {e_to:.6g} vs pencil {e_pencil:.6g}"
            )
    return e_to, G


# ---------------------------------------------------------------------------
# Sampled estimability
# ---------------------------------------------------------------------------


class Estimability(NamedTuple):
    kappa: float
    diagnostic: float


def sampled_observability_matrix(C, A, dt: float, T: float) -> np.ndarray:
    """``Psi = [C; C e^{A dt}; ...; C e^{A T}]`` for samples ``0, dt, ..., T``."""
    C = as_matrix(C, "C")
    A = as_matrix(A, "A")
    if not (dt > 0 and T >= dt):
        raise InputError(f"need dt > 0 and T >= dt, got dt={dt!r}, T={T!r}")
    k = int(round(T / dt))
    step = expm(A, dt)
    rows = [C]
    for _ in range(k):
        rows.append(rows[-1] @ step)
    return np.vstack(rows)


def estimability_condition(C, A, F, dt: float, T: float, cfg: ToleranceConfig = DEFAULT_TOL) -> Estimability:
    """Condition number of ``Phi = F Psi^+`` for sampled outputs.

    ``diagnostic`` is the relative distance between ``Phi Phi^T / dt`` and
    ``F W_o(T)^+ F^T``; since ``Psi^T Psi * dt`` is a Riemann sum for
    ``W_o``, it goes to zero with ``dt``.
    """
    A = as_matrix(A, "A")
    F = check_target_matrix(F, A.shape[0], cfg)
    Psi = sampled_observability_matrix(C, A, dt, T)
    if rank_tol(np.vstack([Psi / np.linalg.norm(Psi, 2), F / np.linalg.norm(F, 2)]), cfg) != rank_tol(Psi, cfg):
        raise InfeasibleError("sampled outputs cannot determine F x(0): rank([Psi; F]) > rank(Psi)")
    Phi = F @ np.linalg.pinv(Psi, rcond=cfg.pinv_rel_tol)
    s = np.linalg.svd(Phi, compute_uv=False)
    kappa = float(s[0] / s[-1])
    PP = Phi @ Phi.T / dt
    _, Wo = finite_horizon_gramians(A, None, C, T)
    ref = F @ _psd_pinv((Wo + Wo.T) / 2, cfg.pinv_rel_tol) @ F.T
    diag = float(np.linalg.norm(PP - ref, 2) / np.linalg.norm(PP, 2))
    return Estimability(kappa, diag)


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    e_tc: Optional[float]
    e_to: Optional[float]
    g_matrix: Optional[np.ndarray] = None
    kappa: Optional[float] = None
    kappa_diagnostic: Optional[float] = None

    @property
    def tc_defined(self) -> bool:
        return self.e_tc is not None

    @property
    def to_defined(self) -> bool:
        return self.e_to is not None

    def to_dict(self) -> dict:
        def val(x):
            return UNDEFINED if x is None else x

        return {
            "e_tc": val(self.e_tc),
            "e_to": val(self.e_to),
            "kappa": val(self.kappa),
            "kappa_diagnostic": val(self.kappa_diagnostic),
            "defined": {
                "e_tc": self.tc_defined,
                "e_to": self.to_defined,
                "kappa": self.kappa is not None,
            },
        }


def energy_report(
    system: SystemBundle,
    horizon=INFINITE,
    cfg: ToleranceConfig = DEFAULT_TOL,
    dt: Optional[float] = None,
    T: Optional[float] = None,
) -> EnergyReport:
    """Both energies (where the system has ``B`` / ``C``) and optionally ``kappa``.

    Quantities that do not exist are left as ``None``; they are never zero.
    """
    A, F = system.A, system.F
    e_tc = e_to = G = kappa = diag = None
    if system.B is not None:
        Wc = (
            infinite_horizon_gramian(A, system.B @ system.B.T)
            if horizon == INFINITE
            else finite_horizon_gramians(A, system.B, None, float(horizon))[0]
        )
        try:
            e_tc = target_control_energy(Wc, F, cfg)
        except UndefinedEnergyError:
            pass
    if system.C is not None:
        Wo = (
            infinite_horizon_gramian(A.T, system.C.T @ system.C)
            if horizon == INFINITE
            else finite_horizon_gramians(A, None, system.C, float(horizon))[1]
        )
        try:
            e_to, G = target_observation_energy(Wo, F, cfg)
        except UndefinedEnergyError:
            pass
        if dt is not None and T is not None:
            try:
                kappa, diag = estimability_condition(system.C, A, F, dt, T, cfg)
            except InfeasibleError:
                pass
    return EnergyReport(e_tc=e_tc, e_to=e_to, g_matrix=G, kappa=kappa, kappa_diagnostic=diag)
