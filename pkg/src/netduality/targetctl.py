"""Target control: open-loop minimum-energy steering, reconstruction of the
initial target from input/output records, and static feedback that places
only the closed-loop poles the target actually sees.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment
from scipy.signal import place_poles

from .duality import finite_horizon_gramians, is_functionally_observable, is_output_controllable
from .errors import DimensionError, InfeasibleError, InputError, NumericalError
from .numkernel import (
    DEFAULT_TOL,
    ToleranceConfig,
    Trajectory,
    as_matrix,
    as_vector,
    contains_spectrum,
    expm,
    integrate_lti,
    null_basis,
    rank_tol,
    seeded_rng,
)
from .system import check_target_matrix

__all__ = [
    "MinEnergyControl",
    "min_energy_control",
    "MeasurementRecord",
    "reconstruct_target",
    "StaircaseDecomposition",
    "staircase_decompose",
    "SigmaEntry",
    "SigmaSet",
    "sigma_set",
    "right_modal_eigenvalues",
    "FeedbackDesign",
    "place_target_poles",
    "place_poles_full",
    "setpoint_feedforward",
    "parse_poles",
]


# ---------------------------------------------------------------------------
# Minimum-energy open-loop control
# ---------------------------------------------------------------------------


@dataclass
class MinEnergyControl:
    """``u(t) = B^T e^{A^T (t1 - t)} F^T (F W_c F^T)^{-1} z*`` on ``[0, t1]``.

    Instances are callables ``u(t)``.  ``energy`` is the closed form
    ``z*^T (F W_c F^T)^{-1} z*``.
    """

    A: np.ndarray
    B: np.ndarray
    t1: float
    costate: np.ndarray  # F^T (F W_c F^T)^{-1} z*
    energy: float
    W_c: np.ndarray

    def __post_init__(self):
        At, Bt, w, t1 = self.A.T, self.B.T, self.costate, self.t1

        @lru_cache(maxsize=8)
        def _eval(t):
            return Bt @ (expm(At, t1 - t) @ w)

        self._eval = _eval

    def __call__(self, t: float) -> np.ndarray:
        return self._eval(float(t))


def min_energy_control(A, B, F, z_star, t1: float, cfg: ToleranceConfig = DEFAULT_TOL) -> MinEnergyControl:
    """Input of least energy steering ``z = F x`` from 0 to ``z_star`` at ``t1``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    F = check_target_matrix(F, A.shape[0], cfg)
    z = as_vector(z_star, F.shape[0], "z_star")
    Wc, _ = finite_horizon_gramians(A, B, None, t1)
    M = F @ Wc @ F.T
    M = (M + M.T) / 2
    lam = np.linalg.eigvalsh(M)
    if lam[0] <= cfg.pinv_rel_tol * max(lam[-1], np.finfo(float).tiny):
        raise InfeasibleError("not output controllable: F W_c(t1) F^T is singular")
    nu = np.linalg.solve(M, z)
    return MinEnergyControl(A=A, B=B, t1=float(t1), costate=F.T @ nu, energy=float(z @ nu), W_c=Wc)


# ---------------------------------------------------------------------------
# Reconstruction of z(0)
# ---------------------------------------------------------------------------


@dataclass
class MeasurementRecord:
    """Outputs sampled on a uniform grid ``times`` plus the (known) input ``u(t)``."""

    times: np.ndarray
    y: np.ndarray
    u: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.times.ndim != 1 or self.times.size < 3 or self.y.shape[0] != self.times.size:
            raise DimensionError("need at least three samples and one output vector per time")
        if self.times[0] != 0.0:
            raise InputError("records start at t = 0")
        steps = np.diff(self.times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * self.times[-1]:
            raise InputError("record times must be uniformly spaced")

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_trajectory(cls, traj: Trajectory, C, u=None) -> "MeasurementRecord":
        C = as_matrix(C, "C")
        return cls(times=traj.times, y=traj.states @ C.T, u=u)


def _simpson(values, h):
    """Composite Simpson (trapezoid on a leftover last interval) along axis 0."""
    k = values.shape[0] - 1
    if k % 2 == 0:
        return h / 3 * (values[0] + values[-1] + 4 * values[1:-1:2].sum(0) + 2 * values[2:-1:2].sum(0))
    return _simpson(values[:-1], h) + h / 2 * (values[-2] + values[-1])


def reconstruct_target(C, A, F, record: MeasurementRecord, cfg: ToleranceConfig = DEFAULT_TOL, B=None) -> np.ndarray:
    """Recover ``z(0) = F x(0)`` from a finite input/output record.

    The free response ``h(t) = y(t) - C x_forced(t)`` is formed by
    simulating the known input from rest; then
    ``z(0) = G int_0^t1 e^{A^T t} C^T h(t) dt`` with ``G W_o(t1) = F``.
    """
    C = as_matrix(C, "C")
    A = as_matrix(A, "A")
    F = check_target_matrix(F, A.shape[0], cfg)
    if record.y.shape[1] != C.shape[0]:
        raise DimensionError(f"record has {record.y.shape[1]} outputs, C has {C.shape[0]} rows")
    if not is_functionally_observable(C, A, F, cfg):
        raise InfeasibleError("not functionally observable: rank([O; F]) > rank(O)")

    times, h = record.times, record.dt
    y = record.y
    if record.u is not None:
        if B is None:
            raise DimensionError("a record with an input needs the input matrix B")
        forced = integrate_lti(A, B, record.u, None, record.t1, h)
        if forced.times.size != times.size:
            raise InputError("record grid does not match its step")
        y = y - forced.states @ C.T

    step = expm(A.T, h)
    Phi = np.eye(A.shape[0])
    integrand = np.empty((times.size, A.shape[0]))
    for k in range(times.size):
        integrand[k] = Phi @ (C.T @ y[k])
        Phi = Phi @ step
    acc = _simpson(integrand, h)
    trap = h * (integrand.sum(0) - (integrand[0] + integrand[-1]) / 2)
    if np.linalg.norm(acc - trap) > 1e-4 * max(np.linalg.norm(acc), 1e-300):
        warnings.warn("measurement record looks too coarse for the quadrature", RuntimeWarning, stacklevel=2)

    _, Wo = finite_horizon_gramians(A, None, C, record.t1)
    lam, U = np.linalg.eigh(Wo)
    keep = lam > cfg.pinv_rel_tol * lam.max()
    G = F @ (U[:, keep] / lam[keep]) @ U[:, keep].T
    if np.linalg.norm(G @ Wo - F) > 1e-6 * np.linalg.norm(F):
        raise NumericalError("could not solve G W_o(t1) = F to tolerance")
    return G @ acc


# ---------------------------------------------------------------------------
# Controllability staircase
# ---------------------------------------------------------------------------


@dataclass
class StaircaseDecomposition:
    """Orthogonal ``P`` with ``P A P^T = [[A_c, A_12], [0, A_u]]``, ``P B = [B_c; 0]``."""

    P: np.ndarray
    m: int
    A_c: np.ndarray
    A_12: np.ndarray
    A_u: np.ndarray
    B_c: np.ndarray
    F_c: Optional[np.ndarray] = None
    F_u: Optional[np.ndarray] = None
    discarded: float = 0.0  # norm of the lower-left block that was set to zero

    @property
    def n(self) -> int:
        return self.P.shape[0]


def staircase_decompose(A, B, cfg: ToleranceConfig = DEFAULT_TOL, F=None) -> StaircaseDecomposition:
    """Split the state into controllable and uncontrollable coordinates.

    Successive SVD compressions of ``B`` and then of each newly reached
    sub-diagonal block (the orthogonal controllability staircase).
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionError("A must be n x n and B must have n rows")
    tol = cfg.rank_rel_tol * max(np.linalg.norm(A, 2), np.linalg.norm(B, 2), np.finfo(float).tiny)
    Ab, Bb, Z = A.copy(), B.copy(), np.eye(n)
    off, prev = 0, 0
    while off < n:
        block = Bb[off:, :] if off == 0 else Ab[off:, prev:off]
        U, s, _ = np.linalg.svd(block, full_matrices=True)
        rho = int(np.sum(s > tol))
        if rho == 0:
            break
        T = np.eye(n)
        T[off:, off:] = U
        Ab = T.T @ Ab @ T
        Bb = T.T @ Bb
        Z = Z @ T
        prev, off = off, off + rho
    m = off
    discarded = float(np.linalg.norm(Ab[m:, :m])) if 0 < m < n else 0.0
    Ab[m:, :m] = 0.0
    Bb[m:, :] = 0.0
    P = Z.T
    Fc = Fu = None
    if F is not None:
        F = as_matrix(F, "F")
        Fb = F @ Z
        Fc, Fu = Fb[:, :m], Fb[:, m:]
    return StaircaseDecomposition(
        P=P, m=m, A_c=Ab[:m, :m], A_12=Ab[:m, m:], A_u=Ab[m:, m:], B_c=Bb[:m], F_c=Fc, F_u=Fu, discarded=discarded
    )


# ---------------------------------------------------------------------------
# Sigma set
# ---------------------------------------------------------------------------


@dataclass
class SigmaEntry:
    eigenvalue: complex
    vector: np.ndarray  # left eigenvector of A (eigenvector of A^T)
    cluster: int  # index into SigmaSet.clusters


@dataclass
class SigmaCluster:
    eigenvalue: complex
    algebraic: int
    geometric: int
    selected: int  # |J_i| = rank(Q V_i)


@dataclass
class SigmaSet:
    entries: List[SigmaEntry]
    clusters: List[SigmaCluster]
    excluded: List[complex] = field(default_factory=list)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.eigenvalue for e in self.entries], dtype=complex)

    def __len__(self):
        return len(self.entries)


def _cluster_eigenvalues(lam, tol):
    order = np.argsort(lam.real + 1e-3 * lam.imag)
    groups: List[List[int]] = []
    for idx in order:
        for g in groups:
            if np.min(np.abs(lam[g] - lam[idx])) <= tol:
                g.append(idx)
                break
        else:
            groups.append([idx])
    return groups


def _eigenspace(At, mu, alg, tol):
    n = At.shape[0]
    _, s, Vh = np.linalg.svd(At - mu * np.eye(n))
    k = int(np.sum(s <= tol))
    k = min(max(k, 1), alg)
    return Vh[n - k :].conj().T


def sigma_set(A, F, cfg: ToleranceConfig = DEFAULT_TOL) -> SigmaSet:
    """Eigenpairs of ``A`` (left eigenvectors) seen by the projection onto ``row(F)``.

    For each distinct eigenvalue with orthonormal eigenspace basis ``V_i``,
    ``rank(Q V_i)`` members are chosen by column-pivoted QR of ``Q V_i``
    (ties go to the largest ``|Q v|``).  Conjugate eigenvalues are handled
    as pairs with conjugate vectors.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    F = check_target_matrix(F, n, cfg)
    Q = F.T @ np.linalg.solve(F @ F.T, F)
    At = A.T
    lam = np.linalg.eigvals(At)
    scale = max(1.0, np.linalg.norm(A, 2))
    ctol = 1e-5 * scale
    groups = _cluster_eigenvalues(lam, ctol)
    entries: List[SigmaEntry] = []
    clusters: List[SigmaCluster] = []
    excluded: List[complex] = []
    done = set()
    for g in groups:
        mu = complex(np.mean(lam[g]))
        key = tuple(sorted(g))
        if key in done:
            continue
        real = abs(mu.imag) <= ctol
        if not real and mu.imag < 0:
            continue  # picked up with its conjugate partner
        if real:
            mu = complex(mu.real, 0.0)
        V = _eigenspace(At, mu.real if real else mu, len(g), 1e-7 * scale)
        if real:
            V = np.real_if_close(V, tol=1e6).real if np.allclose(V.imag, 0, atol=1e-10) else V
        QV = Q @ V
        sel = int(np.sum(np.linalg.svd(QV, compute_uv=False) > cfg.ortho_tol))
        partners = [(mu, V)]
        if not real:
            partners.append((mu.conjugate(), V.conj()))
            # mark the conjugate group as processed
            for h in groups:
                if np.min(np.abs(lam[h] - mu.conjugate())) <= ctol:
                    done.add(tuple(sorted(h)))
        if sel:
            _, _, piv = sla.qr(QV, pivoting=True, mode="economic")
            chosen = piv[:sel]
        else:
            chosen = []
        for ev, basis in partners:
            clusters.append(SigmaCluster(eigenvalue=ev, algebraic=len(g), geometric=basis.shape[1], selected=sel))
            ci = len(clusters) - 1
            for j in chosen:
                v = basis[:, j]
                entries.append(SigmaEntry(eigenvalue=ev, vector=v, cluster=ci))
            excluded.extend([ev] * (len(g) - sel))
    return SigmaSet(entries=entries, clusters=clusters, excluded=excluded)


def right_modal_eigenvalues(A, F, cfg: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Eigenvalues whose right eigenvector has ``F v != 0`` (diagonalizable ``A``).

    These are the modes visible in ``z(t)``.  For normal ``A`` left and right
    eigenvectors agree and this matches :func:`sigma_set`; otherwise a mode
    can reach ``z`` through coupling while its left eigenvector stays
    orthogonal to row(F), and then only this selection contains it.
    """
    A = as_matrix(A, "A")
    F = as_matrix(F, "F")
    lam, V = np.linalg.eig(A)
    V = V / np.linalg.norm(V, axis=0)
    seen = np.linalg.norm(F @ V, axis=0) > cfg.ortho_tol * np.linalg.norm(F, 2)
    return lam[seen]


# ---------------------------------------------------------------------------
# Pole placement
# ---------------------------------------------------------------------------


def parse_poles(text: str) -> np.ndarray:
    """Parse ``"-4,-5,-0.5+0.866i,-0.5-0.866i"`` into complex poles."""
    out = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        try:
            out.append(complex(tok.replace("i", "j")))
        except ValueError:
            raise InputError(f"cannot parse pole {tok!r}") from None
    if not out:
        raise InputError("empty pole list")
    return np.array(out, dtype=complex)


def _check_conjugate_closed(poles, tol=1e-9):
    poles = np.asarray(poles, dtype=complex)
    cplx = poles[np.abs(poles.imag) > tol]
    if cplx.size:
        rows, cols = linear_sum_assignment(np.abs(cplx[:, None] - cplx.conj()[None, :]))
        if np.abs(cplx[rows] - cplx.conj()[cols]).max() > tol * max(1.0, np.abs(cplx).max()):
            raise InputError("desired poles must be closed under complex conjugation")
    return np.where(np.abs(poles.imag) > tol, poles, poles.real + 0j)


def _placement_tol(poles, scale):
    # a pole of multiplicity k moves by about eps^(1/k) under rounding
    _, counts = np.unique(np.round(np.asarray(poles, dtype=complex), 8), return_counts=True)
    k = int(counts.max()) if counts.size else 1
    return max(1e-6, 1e2 * np.finfo(float).eps ** (1.0 / k)) * scale


def _acker(A, b, poles):
    m = A.shape[0]
    coeffs = np.real(np.poly(poles))
    phi = np.zeros_like(A)
    for c in coeffs:
        phi = phi @ A + c * np.eye(m)
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ b for k in range(m)])
    e = np.zeros(m)
    e[-1] = 1.0
    return np.linalg.solve(ctrb.T, e) @ phi


def place_poles_full(A, B, poles, cfg: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Gain ``K`` with ``eig(A - B K) = poles`` for a controllable pair.

    Uses :func:`scipy.signal.place_poles` (robust Tits-Yang) on a
    full-column-rank compression of ``B``; repeated poles beyond ``rank(B)``
    fall back to rank-one assignment ``K = g k^T`` through a generic input
    direction ``g`` and Ackermann's formula.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    m, p = B.shape
    poles = _check_conjugate_closed(poles)
    if poles.size != m:
        raise InputError(f"need {m} poles, got {poles.size}")
    if m == 0:
        return np.zeros((p, 0))
    U, s, Vh = np.linalg.svd(B, full_matrices=False)
    rb = int(np.sum(s > cfg.rank_rel_tol * s[0])) if s.size and s[0] > 0 else 0
    if rb == 0:
        raise InfeasibleError("B is zero; nothing can be placed")
    Vr = Vh[:rb].T
    Br = B @ Vr
    _, counts = np.unique(np.round(poles, 8), return_counts=True)
    if counts.max() <= rb and m > 1:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                Kr = place_poles(A, Br, poles, method="YT").gain_matrix
            K = Vr @ Kr
            if contains_spectrum(np.linalg.eigvals(A - B @ K), poles, _placement_tol(poles, max(1.0, np.abs(poles).max()))):
                return K
        except (ValueError, np.linalg.LinAlgError):
            pass
    rng = seeded_rng(0)
    for attempt in range(20):
        g = np.ones(rb) if attempt == 0 else rng.standard_normal(rb)
        g /= np.linalg.norm(g)
        b = Br @ g
        if rank_tol(np.hstack([np.linalg.matrix_power(A / max(np.linalg.norm(A, 2), 1e-300), k) @ b[:, None] for k in range(m)]), cfg) < m:
            continue
        k = _acker(A, b[:, None], poles)
        K = Vr @ np.outer(g, k)
        if contains_spectrum(np.linalg.eigvals(A - B @ K), poles, _placement_tol(poles, max(1.0, np.abs(poles).max()))):
            return K
    raise NumericalError("pole placement failed to reach the requested spectrum")


@dataclass
class FeedbackDesign:
    K: np.ndarray
    placed: np.ndarray
    achieved_spectrum: np.ndarray
    sigma: SigmaSet
    defaults: np.ndarray  # poles assigned to the non-Sigma controllable modes
    feedforward_r: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        def cl(z):
            return [[float(np.real(v)), float(np.imag(v))] for v in z]

        return {
            "K": self.K.tolist(),
            "sigma": cl(self.sigma.eigenvalues),
            "excluded": cl(self.sigma.excluded),
            "placed": cl(self.placed),
            "defaults": cl(self.defaults),
            "achieved_spectrum": cl(self.achieved_spectrum),
            "feedforward_r": None if self.feedforward_r is None else self.feedforward_r.tolist(),
        }


def _non_sigma_defaults(remaining, taken):
    out = []
    used = list(np.asarray(taken, dtype=complex))
    for lam in remaining:
        if lam.real < 0:
            out.append(lam)
            used.append(lam)
    for i, lam in enumerate(sorted(remaining, key=lambda z: (z.real, z.imag))):
        if lam.real >= 0:
            cand = complex(-1.0 - i, 0.0)
            while any(abs(cand - u) < 1e-6 for u in used):
                cand -= 1.0
            out.append(cand)
            used.append(cand)
    return np.array(out, dtype=complex)


def place_target_poles(
    A, B, F, desired: Sequence[complex], cfg: ToleranceConfig = DEFAULT_TOL, other_poles: Optional[Sequence[complex]] = None
) -> FeedbackDesign:
    """Static feedback ``u = -K x`` placing the Sigma poles at ``desired``.

    All controllable poles are assigned: ``desired`` for the Sigma set and,
    for the other controllable modes, their open-loop value when stable or
    ``-1 - index`` otherwise (moved further left on collisions), unless
    ``other_poles`` lists them explicitly.  ``K`` is zero on the
    uncontrollable coordinates.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    F = check_target_matrix(F, n, cfg)
    if not is_functionally_observable(B.T, A.T, F, cfg):
        raise InfeasibleError(
            "target poles not assignable: (B^T, A^T; F) fails rank([O; F]) = rank(O)"
        )
    desired = _check_conjugate_closed(np.atleast_1d(np.asarray(desired, dtype=complex)))
    sig = sigma_set(A, F, cfg)
    if desired.size != len(sig):
        raise InputError(f"Sigma has {len(sig)} poles but {desired.size} were requested")
    st = staircase_decompose(A, B, cfg, F)
    eig_c = np.linalg.eigvals(st.A_c) if st.m else np.zeros(0, dtype=complex)
    sig_ev = sig.eigenvalues
    if sig_ev.size > eig_c.size:
        raise NumericalError("Sigma poles are not all controllable")
    cost = np.abs(sig_ev[:, None] - eig_c[None, :])
    rows, cols = linear_sum_assignment(cost)
    if sig_ev.size and cost[rows, cols].max() > 1e-5 * max(1.0, np.abs(eig_c).max()):
        raise NumericalError("could not match Sigma poles with the controllable spectrum")
    rest = np.delete(eig_c, cols)
    if other_poles is None:
        defaults = _non_sigma_defaults(rest, desired)
    else:
        defaults = _check_conjugate_closed(np.atleast_1d(np.asarray(other_poles, dtype=complex)))
        if defaults.size != rest.size:
            raise InputError(f"{rest.size} controllable poles lie outside Sigma, {defaults.size} given")
    Kc = place_poles_full(st.A_c, st.B_c, np.concatenate([desired, defaults]), cfg)
    Kbar = np.zeros((B.shape[1], n))
    Kbar[:, : st.m] = Kc
    K = Kbar @ st.P
    achieved = np.linalg.eigvals(A - B @ K)
    if not contains_spectrum(achieved, desired, _placement_tol(desired, max(1.0, np.abs(desired).max()))):
        raise NumericalError("closed-loop spectrum misses the requested poles")
    return FeedbackDesign(K=K, placed=desired, achieved_spectrum=achieved, sigma=sig, defaults=defaults)


def setpoint_feedforward(A, B, K, F, z_star) -> np.ndarray:
    """Reference ``r`` so that ``u = r - K x`` settles ``F x`` at ``z_star``.

    Solves ``F (B K - A)^{-1} B r = z_star``; least squares (minimum norm)
    when there are more inputs than targets.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    K = as_matrix(K, "K")
    F = as_matrix(F, "F")
    z = as_vector(z_star, F.shape[0], "z_star")
    if B.shape[1] < F.shape[0]:
        raise DimensionError(f"{B.shape[1]} inputs cannot set {F.shape[0]} targets")
    Acl = B @ K - A
    if np.linalg.cond(Acl) > 1e12:
        raise NumericalError("A - B K is singular; no steady state")
    M = F @ np.linalg.solve(Acl, B)
    r, *_ = np.linalg.lstsq(M, z, rcond=None)
    if np.linalg.norm(M @ r - z) > 1e-9 * (1.0 + np.linalg.norm(z)):
        raise NumericalError("singular steady-state map F (B K - A)^{-1} B")
    return r
