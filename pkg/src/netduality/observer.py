"""Functional observers for a state-feedback law and the resulting closed loop.

An observer ``w' = N w + J y + H u`` with output ``D w + E y`` estimates
``-K x`` when

    N T + J C - T A = 0,    D T + E C = -K,    H = T B,    N Hurwitz,

since then ``e = w - T x`` obeys ``e' = N e``.  The controller applies
``u = r + D w + E y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import DimensionError, InfeasibleError, InputError, NumericalError
from .numkernel import (
    DEFAULT_TOL,
    ToleranceConfig,
    Trajectory,
    as_matrix,
    as_vector,
    integrate_lti,
    parse_sections,
    rank_tol,
    render_sections,
    spectrum_distance,
)
from .duality import obsv_matrix

__all__ = [
    "FunctionalObserver",
    "synthesize_functional_observer",
    "ClosedLoop",
    "assemble_closed_loop",
    "simulate_closed_loop",
]

RESIDUAL_TOL = 1e-8
SEPARATION_TOL = 1e-6


def _scale(*mats) -> float:
    return max([1.0] + [float(np.linalg.norm(M, 2)) for M in mats if M is not None and M.size])


@dataclass
class FunctionalObserver:
    N: np.ndarray
    J: np.ndarray
    D: np.ndarray
    E: np.ndarray
    T: np.ndarray
    H: Optional[np.ndarray] = None
    requested_poles: Optional[np.ndarray] = None

    def __post_init__(self):
        self.N = as_matrix(self.N, "N")
        self.J = as_matrix(self.J, "J")
        self.D = as_matrix(self.D, "D")
        self.E = as_matrix(self.E, "E")
        self.T = as_matrix(self.T, "T")
        n0 = self.N.shape[0]
        if n0 == 0:
            raise DimensionError("observer order must be at least 1")
        if self.N.shape != (n0, n0) or self.J.shape[0] != n0 or self.T.shape[0] != n0 or self.D.shape[1] != n0:
            raise DimensionError("inconsistent observer dimensions")
        if self.E.shape != (self.D.shape[0], self.J.shape[1]):
            raise DimensionError(f"E must be {self.D.shape[0]}x{self.J.shape[1]}, got {self.E.shape}")
        if self.H is None:
            self.H = np.zeros((n0, 0))
        else:
            self.H = as_matrix(self.H, "H", allow_empty=True)

    @property
    def n0(self) -> int:
        return self.N.shape[0]

    @property
    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.N)

    def injection(self, p: int) -> np.ndarray:
        """Input injection ``H`` as an ``n0 x p`` matrix (zeros when absent)."""
        if self.H.size == 0:
            return np.zeros((self.n0, p))
        if self.H.shape != (self.n0, p):
            raise DimensionError(f"H must be {self.n0}x{p}, got {self.H.shape}")
        return self.H

    def residuals(self, A, C, K, B=None) -> dict:
        """Absolute residuals of the observer conditions and the largest real pole."""
        A, C, K = as_matrix(A, "A"), as_matrix(C, "C"), as_matrix(K, "K")
        if self.T.shape[1] != A.shape[0] or self.J.shape[1] != C.shape[0] or self.D.shape[0] != K.shape[0]:
            raise DimensionError("observer does not match the system dimensions")
        out = {
            "sylvester": float(np.linalg.norm(self.N @ self.T + self.J @ C - self.T @ A)),
            "gain": float(np.linalg.norm(-self.D @ self.T - self.E @ C - K)),
            "max_real_pole": float(np.max(self.poles.real)),
            "scale": _scale(A, C, K),
        }
        if B is not None:
            B = as_matrix(B, "B")
            out["input"] = float(np.linalg.norm(self.injection(B.shape[1]) - self.T @ B))
        return out

    def is_valid(self, A, C, K, B=None) -> bool:
        res = self.residuals(A, C, K, B)
        tol = RESIDUAL_TOL * res["scale"]
        ok = res["sylvester"] <= tol and res["gain"] <= tol and res["max_real_pole"] < 0
        return ok and res.get("input", 0.0) <= tol

    def sections(self) -> dict:
        out = {"N": self.N, "J": self.J, "D": self.D, "E": self.E, "T": self.T}
        if self.H.size and np.any(self.H):
            out["H"] = self.H
        return out

    def to_text(self, comment: Optional[str] = None) -> str:
        return render_sections(self.sections(), comment)

    @classmethod
    def from_sections(cls, s: dict) -> "FunctionalObserver":
        missing = [k for k in "NJDET" if k not in s]
        if missing:
            raise InputError(f"observer file lacks section(s) {', '.join(m + ':' for m in missing)}")
        return cls(N=s["N"], J=s["J"], D=s["D"], E=s["E"], T=s["T"], H=s.get("H"))


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def _units(poles, tol=1e-9):
    """Group a conjugate-closed pole list into real singles and conjugate pairs."""
    poles = list(np.asarray(poles, dtype=complex))
    units = []
    while poles:
        z = poles.pop(0)
        if abs(z.imag) <= tol:
            units.append([complex(z.real, 0.0)])
            continue
        j = int(np.argmin([abs(w - np.conj(z)) for w in poles])) if poles else -1
        if j < 0 or abs(poles[j] - np.conj(z)) > 1e-6 * max(1.0, abs(z)):
            raise InputError("observer poles must be closed under complex conjugation")
        poles.pop(j)
        units.append([complex(z.real, abs(z.imag)), complex(z.real, -abs(z.imag))])
    return units


def _poles_for_order(poles, n0):
    """Take whole units from ``poles`` up to ``n0``; pad with real poles."""
    chosen = []
    for u in _units(poles):
        if len(chosen) + len(u) <= n0:
            chosen.extend(u)
    base = min([z.real for z in poles] + [-1.0])
    k = 1
    while len(chosen) < n0:
        cand = complex(base - k, 0.0)
        k += 1
        if all(abs(cand - z) > 1e-9 for z in chosen):
            chosen.append(cand)
    return np.array(chosen, dtype=complex)


def _companion(poles):
    # observable canonical form: first column holds -a_1..-a_k, ones above the
    # diagonal; paired with d = e_1^T it is always observable
    k = len(poles)
    a = np.real(np.poly(poles))[1:]
    N = np.zeros((k, k))
    N[:, 0] = -a
    N[: k - 1, 1:] += np.eye(k - 1)
    return N


def _real_block(poles):
    blocks = []
    for u in _units(poles):
        if len(u) == 1:
            blocks.append(np.array([[u[0].real]]))
        else:
            a, b = u[0].real, u[0].imag
            blocks.append(np.array([[a, b], [-b, a]]))
    return blocks


def _block_diag(blocks):
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i : i + k, i : i + k] = b
        i += k
    return out


def _observer_structure(poles, p):
    """Fixed ``(N, D)`` pair of order ``len(poles)`` with ``D`` of ``p`` rows."""
    n0 = len(poles)
    if n0 == p:
        return _block_diag(_real_block(poles)), np.eye(p)
    units = _units(poles)
    if len(units) < p:
        # not enough units to give every output its own block
        N = _block_diag(_real_block(poles))
        D = np.zeros((p, n0))
        D[:, :p] = np.eye(p)
        return N, D
    groups: List[list] = [[] for _ in range(p)]
    for u in sorted(units, key=len, reverse=True):
        smallest = min(range(p), key=lambda i: len(groups[i]))
        groups[smallest].extend(u)
    blocks = [_companion(g) for g in groups]
    D = np.zeros((p, n0))
    i = 0
    for row, b in enumerate(blocks):
        D[row, i] = 1.0
        i += b.shape[0]
    return _block_diag(blocks), D


def _solve_conditions(A, C, K, N, D, B=None):
    """Least-squares solve for ``T, J, E`` (and ``T B = 0`` when ``B`` is given)."""
    n, q, p, n0 = A.shape[0], C.shape[0], K.shape[0], N.shape[0]
    In, Iq = np.eye(n), np.eye(q)
    nT, nJ, nE = n0 * n, n0 * q, p * q
    # column-major vec: vec(X Y Z) = (Z^T kron X) vec(Y)
    rows = [
        np.hstack([np.kron(In, N) - np.kron(A.T, np.eye(n0)), np.kron(C.T, np.eye(n0)), np.zeros((nT, nE))]),
        np.hstack([np.kron(In, D), np.zeros((p * n, nJ)), np.kron(C.T, np.eye(p))]),
    ]
    rhs = [np.zeros(nT), -K.reshape(-1, order="F")]
    if B is not None:
        m = B.shape[1]
        rows.append(np.hstack([np.kron(B.T, np.eye(n0)), np.zeros((n0 * m, nJ + nE))]))
        rhs.append(np.zeros(n0 * m))
    M = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(M, b, rcond=None)
    T = sol[:nT].reshape((n0, n), order="F")
    J = sol[nT : nT + nJ].reshape((n0, q), order="F")
    E = sol[nT + nJ :].reshape((p, q), order="F")
    return T, J, E


def _functionally_observable_gain(C, A, K, cfg):
    O = obsv_matrix(C / max(np.linalg.norm(C, 2), 1e-300), A / max(np.linalg.norm(A, 2), 1e-300))
    Ks = K / max(np.linalg.norm(K, 2), 1e-300)
    return rank_tol(np.vstack([O, Ks]), cfg) == rank_tol(O, cfg)


def synthesize_functional_observer(
    C, A, K, observer_poles: Sequence[complex], cfg: ToleranceConfig = DEFAULT_TOL, B=None
) -> FunctionalObserver:
    """Observer of the least order (from ``p`` up to ``n``) estimating ``-K x``.

    ``N`` is fixed per order: real block-diagonal with ``D = I`` at order
    ``p``, otherwise observable companion blocks, one per row of ``K``.
    ``T, J, E`` then follow from a linear least-squares problem.  At full
    order the classical observer ``T = I``, ``N = A - L C`` is the fallback.  When ``B``
    is supplied, solutions with ``T B = 0`` are preferred; otherwise the
    input injection ``H = T B`` is kept.  The requested poles are used as far
    as the order permits and padded with real ones beyond that.
    """
    A, C, K = as_matrix(A, "A"), as_matrix(C, "C"), as_matrix(K, "K")
    n = A.shape[0]
    if A.shape != (n, n) or C.shape[1] != n or K.shape[1] != n:
        raise DimensionError("need A n x n, C q x n and K p x n")
    if B is not None:
        B = as_matrix(B, "B")
        if B.shape != (n, K.shape[0]):
            raise DimensionError(f"B must be {n}x{K.shape[0]}")
    poles = np.atleast_1d(np.asarray(observer_poles, dtype=complex))
    if poles.size == 0 or np.any(poles.real >= 0):
        raise InputError("observer poles must lie in the open left half-plane")
    _units(poles)
    if not _functionally_observable_gain(C, A, K, cfg):
        raise InfeasibleError("K x cannot be estimated from y: rank([O; K]) > rank(O)")
    p = K.shape[0]
    tol = RESIDUAL_TOL * _scale(A, C, K)
    for n0 in range(p, n + 1):
        N, D = _observer_structure(_poles_for_order(poles, n0), p)
        for Bc in ([B, None] if B is not None else [None]):
            T, J, E = _solve_conditions(A, C, K, N, D, Bc)
            obs = FunctionalObserver(N=N, J=J, D=D, E=E, T=T, requested_poles=poles)
            res = obs.residuals(A, C, K)
            if res["sylvester"] <= tol and res["gain"] <= tol:
                if np.linalg.norm(T) <= 1e-12 * _scale(A, C, K):
                    # K x is a static function of y; the observer state is unused
                    obs.T = np.zeros_like(T)
                    obs.J = np.zeros_like(J)
                    obs.D = np.zeros_like(D)
                if B is not None:
                    H = obs.T @ B
                    obs.H = H if np.linalg.norm(H) > tol else np.zeros_like(H)
                return obs
    full = _full_order_observer(C, A, K, _poles_for_order(poles, n), cfg, B)
    if full is not None:
        return full
    raise InfeasibleError(f"no functional observer up to order {n}; use a full-order state observer")


def _full_order_observer(C, A, K, poles, cfg, B=None):
    # T = I, N = A - L C: always available when the poles of A - L C are assignable
    from .targetctl import place_poles_full

    try:
        L = place_poles_full(A.T, C.T, poles, cfg).T
    except (InfeasibleError, NumericalError, InputError):
        return None
    n = A.shape[0]
    obs = FunctionalObserver(
        N=A - L @ C, J=L, D=-K, E=np.zeros((K.shape[0], C.shape[0])), T=np.eye(n), requested_poles=poles
    )
    if B is not None:
        obs.H = B.copy()
    return obs if obs.is_valid(A, C, K, B) else None


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------


@dataclass
class ClosedLoop:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    observer: FunctionalObserver
    K: np.ndarray
    matrix: np.ndarray  # (n + n0) x (n + n0)
    injection: np.ndarray  # (n + n0) x p, channel of the reference r
    reference: np.ndarray
    expected_spectrum: np.ndarray
    spectrum: np.ndarray
    F: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    w0: Optional[np.ndarray] = None
    coupling: float = 0.0  # relative size of the x -> e block in (x, w - T x) coordinates

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def separation_error(self) -> float:
        return spectrum_distance(self.spectrum, self.expected_spectrum)

    def sections(self) -> dict:
        s = {"A": self.A, "B": self.B, "C": self.C, "F": self.F}
        s.update(self.observer.sections())
        s["R"] = self.reference[None, :]
        if self.x0 is not None:
            s["X0"] = self.x0[None, :]
        if self.w0 is not None:
            s["W0"] = self.w0[None, :]
        return s

    def to_text(self, comment: Optional[str] = None) -> str:
        return render_sections(self.sections(), comment)

    @classmethod
    def from_text(cls, text: str) -> "ClosedLoop":
        s = parse_sections(text)
        for key in ("A", "B", "C"):
            if key not in s:
                raise InputError(f"loop file lacks section {key}:")
        obs = FunctionalObserver.from_sections(s)
        ref = s["R"].reshape(-1) if "R" in s else None
        x0 = s["X0"].reshape(-1) if "X0" in s else None
        w0 = s["W0"].reshape(-1) if "W0" in s else None
        cl = assemble_closed_loop(s["A"], s["B"], s["C"], obs, ref, F=s.get("F"))
        cl.x0, cl.w0 = x0, w0
        return cl

    @classmethod
    def load(cls, path) -> "ClosedLoop":
        return cls.from_text(Path(path).read_text())


def assemble_closed_loop(A, B, C, obs: FunctionalObserver, reference=None, F=None) -> ClosedLoop:
    """Block system for ``(x, w)`` under ``u = r + D w + E y``.

    ``[[A + B E C, B D], [J C + H E C, N + H D]]`` with reference channel
    ``[B; H]``; ``H = 0`` gives the usual ``[[A + BEC, BD], [JC, N]]``.  The
    implied gain is ``K = -(D T + E C)`` and the spectrum must split into
    ``eig(A - B K)`` and ``eig(N)``.  The split is checked structurally: in
    coordinates ``(x, e = w - T x)`` the block driving ``e`` from ``x`` has
    to vanish.  Comparing computed eigenvalues instead would flag sound
    designs whose spectra are merely ill-conditioned.
    """
    A, B, C = as_matrix(A, "A"), as_matrix(B, "B"), as_matrix(C, "C")
    n, p, q = A.shape[0], B.shape[1], C.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
        raise DimensionError("need A n x n, B n x p and C q x n")
    if obs.T.shape[1] != n or obs.J.shape[1] != q or obs.D.shape[0] != p:
        raise DimensionError(
            f"observer is for n={obs.T.shape[1]}, q={obs.J.shape[1]}, p={obs.D.shape[0]}; system has n={n}, q={q}, p={p}"
        )
    H = obs.injection(p)
    N, J, D, E = obs.N, obs.J, obs.D, obs.E
    M = np.block([[A + B @ E @ C, B @ D], [J @ C + H @ E @ C, N + H @ D]])
    G = np.vstack([B, H])
    r = np.zeros(p) if reference is None else as_vector(reference, p, "reference")
    K = -(D @ obs.T + E @ C)
    expected = np.concatenate([np.linalg.eigvals(A - B @ K), obs.poles])
    spec = np.linalg.eigvals(M)
    if F is not None:
        F = as_matrix(F, "F")
        if F.shape[1] != n:
            raise DimensionError(f"F has {F.shape[1]} columns, expected {n}")
    n0 = N.shape[0]
    S = np.block([[np.eye(n), np.zeros((n, n0))], [-obs.T, np.eye(n0)]])
    S_inv = np.block([[np.eye(n), np.zeros((n, n0))], [obs.T, np.eye(n0)]])
    coupling = float(np.linalg.norm((S @ M @ S_inv)[n:, :n])) / (_scale(M) * _scale(S) ** 2)
    cl = ClosedLoop(
        A=A, B=B, C=C, observer=obs, K=K, matrix=M, injection=G, reference=r,
        expected_spectrum=expected, spectrum=spec, F=F, coupling=coupling,
    )
    if coupling > SEPARATION_TOL:
        raise NumericalError(
            f"closed loop does not separate (estimation error driven by the state, {coupling:.3g}); check H = T B"
        )
    return cl


def simulate_closed_loop(cl: ClosedLoop, x0=None, w0=None, t1: float = 10.0, dt: float = 1e-3) -> Trajectory:
    """Integrate the loop; signals ``z`` (if ``F`` is known), ``u`` and ``e = w - T x``."""
    n, n0 = cl.n, cl.observer.n0
    x0 = (cl.x0 if cl.x0 is not None else np.zeros(n)) if x0 is None else x0
    w0 = (cl.w0 if cl.w0 is not None else np.zeros(n0)) if w0 is None else w0
    s0 = np.concatenate([as_vector(x0, n, "x0"), as_vector(w0, n0, "w0")])
    if np.any(cl.reference):
        r = cl.reference
        traj = integrate_lti(cl.matrix, cl.injection, lambda t: r, s0, t1, dt)
    else:
        traj = integrate_lti(cl.matrix, None, None, s0, t1, dt)
    x, w = traj.states[:, :n], traj.states[:, n:]
    obs = cl.observer
    y = x @ cl.C.T
    signals = {
        "x": x,
        "w": w,
        "e": w - x @ obs.T.T,
        "u": cl.reference[None, :] + w @ obs.D.T + y @ obs.E.T,
    }
    if cl.F is not None:
        signals["z"] = x @ cl.F.T
    traj.signals = signals
    return traj
