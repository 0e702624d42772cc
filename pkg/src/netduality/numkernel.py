"""Dense numerical kernel shared by every other module.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.  The
helpers here validate shapes and finiteness, make rank decisions from
singular values with a *relative* threshold, integrate linear ODEs with a
fixed-step RK4 scheme and read/write the plain-text matrix format used by
the command line tools.

Matrix text format::

    # optional comment lines
    ROWS COLS
    a11 a12 ...
    ...

Multi-section files (systems, observers, closed loops) prefix each matrix
with a header line such as ``A:``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError, InputError, MatrixFormatError, NumericalError

__all__ = [
    "ToleranceConfig",
    "DEFAULT_TOL",
    "Trajectory",
    "as_matrix",
    "as_vector",
    "expm",
    "integrate_lti",
    "rk4",
    "rank_tol",
    "orth_basis",
    "null_basis",
    "spectrum_distance",
    "parse_matrix",
    "render_matrix",
    "parse_sections",
    "render_sections",
    "seeded_rng",
]


@dataclass(frozen=True)
class ToleranceConfig:
    """Thresholds for numerical rank and subspace decisions.

    rank_rel_tol
        Singular values at or below ``rank_rel_tol * sigma_max`` count as zero.
    ortho_tol
        Cosine threshold for orthogonality between subspaces, and the
        absolute cut (relative to ``||F||``) for images of orthonormal bases.
    pinv_rel_tol
        Relative truncation used for pseudoinverses and for deciding that a
        symmetric Gram matrix is numerically invertible.
    """

    rank_rel_tol: float = 1e-9
    ortho_tol: float = 1e-8
    pinv_rel_tol: float = 1e-10

    def __post_init__(self):
        for name in ("rank_rel_tol", "ortho_tol", "pinv_rel_tol"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise InputError(f"{name} must lie in (0, 1), got {value!r}")


DEFAULT_TOL = ToleranceConfig()


def as_matrix(M, name: str = "matrix", allow_empty: bool = False) -> np.ndarray:
    """Return ``M`` as a finite float64 2-D array or raise."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def as_vector(v, n: Optional[int] = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def _square(A, name="A") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got {A.shape}")
    return A


def expm(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{A t}``.

    Backed by :func:`scipy.linalg.expm` (scaling and squaring with a Pade
    approximant); this wrapper adds the shape and finiteness checks.
    """
    A = _square(A)
    if not math.isfinite(t):
        raise InputError(f"time must be finite, got {t!r}")
    return sla.expm(A * float(t))


# ---------------------------------------------------------------------------
# ODE integration
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled solution of an ODE.

    ``states[k]`` is the state at ``times[k]``; ``times[0] == 0``.
    """

    times: np.ndarray
    states: np.ndarray
    signals: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise DimensionError("one state vector per time point required")
        if self.times.size and self.times[0] != 0.0:
            raise InputError("trajectories start at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise InputError("times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.times.shape[0]


def _grid(t1: float, dt: float) -> np.ndarray:
    if not (dt > 0 and t1 > 0 and math.isfinite(t1) and math.isfinite(dt)):
        raise InputError(f"need 0 < dt <= t1, got dt={dt!r}, t1={t1!r}")
    if dt > t1 * (1 + 1e-12):
        raise InputError(f"need dt <= t1, got dt={dt!r}, t1={t1!r}")
    # round so that the last grid point is exactly t1
    steps = max(1, int(math.ceil(t1 / dt - 1e-9)))
    return np.linspace(0.0, t1, steps + 1)


def rk4(f: Callable[[float, np.ndarray], np.ndarray], x0, t1: float, dt: float) -> Trajectory:
    """Classical fixed-step RK4 for ``x' = f(t, x)`` on ``[0, t1]``.

    The step is ``t1 / ceil(t1 / dt)``, i.e. ``dt`` shrunk just enough to land
    on ``t1``.  Non-finite states raise :class:`NumericalError` carrying the
    time of blow-up.
    """
    times = _grid(t1, dt)
    x = np.array(x0, dtype=float).reshape(-1)
    out = np.empty((times.size, x.size))
    out[0] = x
    for k in range(times.size - 1):
        t, h = times[k], times[k + 1] - times[k]
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"integration diverged at t = {times[k + 1]:.6g}", time=times[k + 1])
        out[k + 1] = x
    return Trajectory(times, out)


def integrate_lti(A, B=None, u=None, x0=None, t1: float = 1.0, dt: float = 1e-3) -> Trajectory:
    """Integrate ``x' = A x + B u(t)`` with RK4.

    Parameters
    ----------
    A : (n, n) array_like
    B : (n, p) array_like, optional
        May be omitted together with ``u`` for autonomous systems.
    u : callable, optional
        ``u(t)`` returns a length-``p`` vector.  ``None`` means ``u = 0``.
    x0 : (n,) array_like
    t1, dt : float
        Horizon and nominal step.
    """
    A = _square(A)
    n = A.shape[0]
    x0 = np.zeros(n) if x0 is None else as_vector(x0, n, "x0")
    if u is None:
        return rk4(lambda t, x: A @ x, x0, t1, dt)
    if B is None:
        raise DimensionError("an input signal needs an input matrix B")
    B = as_matrix(B, "B")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {n}x{n}")
    p = B.shape[1]

    def rhs(t, x):
        ut = np.asarray(u(t), dtype=float).reshape(-1)
        if ut.shape[0] != p:
            raise DimensionError(f"u(t) has length {ut.shape[0]}, B has {p} columns")
        return A @ x + B @ ut

    return rk4(rhs, x0, t1, dt)


# ---------------------------------------------------------------------------
# Rank and subspaces
# ---------------------------------------------------------------------------


def _svd(M):
    try:
        return np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError:
        return sla.svd(M, full_matrices=True, lapack_driver="gesvd")


def rank_tol(M, cfg: ToleranceConfig = DEFAULT_TOL) -> int:
    """Number of singular values above ``cfg.rank_rel_tol * sigma_max``."""
    M = as_matrix(M, allow_empty=True)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > cfg.rank_rel_tol * s[0]))


def orth_basis(M, cfg: ToleranceConfig = DEFAULT_TOL, atol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of ``Im(M)``; ``(rows, 0)`` when the image is trivial.

    ``atol`` replaces the relative threshold by an absolute one, which is
    what callers want when ``M`` is a product with an orthonormal basis and
    its overall scale carries meaning.
    """
    M = as_matrix(M, allow_empty=True)
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = _svd(M)
    cut = atol if atol is not None else cfg.rank_rel_tol * s[0]
    k = int(np.sum(s > cut)) if s[0] > 0 else 0
    return U[:, :k].copy()


def null_basis(M, cfg: ToleranceConfig = DEFAULT_TOL, atol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of ``Ker(M)``; ``(cols, 0)`` when the kernel is trivial."""
    M = as_matrix(M, allow_empty=True)
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    if M.shape[1] == 0:
        return np.zeros((0, 0))
    _, s, Vh = _svd(M)
    cut = atol if atol is not None else cfg.rank_rel_tol * s[0]
    k = int(np.sum(s > cut)) if s[0] > 0 else 0
    return Vh[k:].T.conj().copy()


def spectrum_distance(a: Sequence[complex], b: Sequence[complex]) -> float:
    """Largest pairwise gap under the optimal one-to-one matching of two multisets.

    Returns ``inf`` when the sizes differ.
    """
    a = np.asarray(a, dtype=complex).reshape(-1)
    b = np.asarray(b, dtype=complex).reshape(-1)
    if a.size != b.size:
        return math.inf
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def contains_spectrum(spectrum, subset, tol: float) -> bool:
    """True if every element of ``subset`` matches a distinct element of ``spectrum``."""
    spectrum = np.asarray(spectrum, dtype=complex).reshape(-1)
    subset = np.asarray(subset, dtype=complex).reshape(-1)
    if subset.size > spectrum.size:
        return False
    if subset.size == 0:
        return True
    cost = np.abs(subset[:, None] - spectrum[None, :])
    rows, cols = linear_sum_assignment(cost)
    return bool(cost[rows, cols].max() <= tol)


# ---------------------------------------------------------------------------
# Deterministic random numbers
# ---------------------------------------------------------------------------


def seeded_rng(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and an optional spawn key.

    The key (for instance ``(n, realization)``) is mixed into numpy's
    ``SeedSequence`` so that sub-streams are independent of the order in
    which they are created.
    """
    if not 0 <= int(seed) < 2**64:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Text I/O
# ---------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)\s*:\s*$")


def _parse_matrix_lines(lines, start_line=1):
    """Parse ``(lineno, text)`` pairs holding exactly one matrix."""
    data = [(no, ln.strip()) for no, ln in lines]
    data = [(no, ln) for no, ln in data if ln and not ln.startswith("#")]
    if not data:
        raise MatrixFormatError("missing 'ROWS COLS' header", start_line)
    no, header = data[0]
    parts = header.split()
    if len(parts) != 2:
        raise MatrixFormatError(f"header must be 'ROWS COLS', got {header!r}", no)
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise MatrixFormatError(f"header must hold two integers, got {header!r}", no) from None
    if rows <= 0 or cols <= 0:
        raise MatrixFormatError(f"dimensions must be positive, got {rows}x{cols}", no)
    body = data[1:]
    if len(body) != rows:
        where = body[rows][0] if len(body) > rows else (body[-1][0] if body else no)
        raise MatrixFormatError(f"expected {rows} data rows, found {len(body)}", where)
    out = np.empty((rows, cols))
    for i, (no, ln) in enumerate(body):
        tokens = ln.split()
        if len(tokens) != cols:
            raise MatrixFormatError(f"expected {cols} entries, found {len(tokens)}", no)
        for j, tok in enumerate(tokens):
            try:
                val = float(tok)
            except ValueError:
                raise MatrixFormatError(f"non-numeric token {tok!r}", no) from None
            if not math.isfinite(val):
                raise MatrixFormatError(f"non-finite entry {tok!r}", no)
            out[i, j] = val
    return out


def parse_matrix(text: str) -> np.ndarray:
    """Parse one matrix in the dense text format."""
    return _parse_matrix_lines(enumerate(text.splitlines(), start=1))


def _fmt(x: float) -> str:
    s = format(float(x), ".17g")
    return "0" if s == "-0" else s


def render_matrix(M) -> str:
    """Render a matrix; values keep 17 significant digits so parsing round-trips."""
    M = as_matrix(M)
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(_fmt(x) for x in row) for row in M]
    return "\n".join(lines) + "\n"


def parse_sections(text: str) -> dict:
    """Parse a multi-section file into ``{name: matrix}`` (order preserved)."""
    sections: dict = {}
    current = None
    buf: list = []
    for no, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw.strip())
        if m:
            if current is not None:
                sections[current[0]] = _parse_matrix_lines(buf, current[1])
            name = m.group(1)
            if name in sections or (current is not None and current[0] == name):
                raise MatrixFormatError(f"duplicate section {name!r}", no)
            current, buf = (name, no), []
            continue
        if current is None:
            stripped = raw.strip()
            if stripped and not stripped.startswith("#"):
                raise MatrixFormatError("data before the first section header", no)
            continue
        buf.append((no, raw))
    if current is not None:
        sections[current[0]] = _parse_matrix_lines(buf, current[1])
    if not sections:
        raise MatrixFormatError("no sections found", 1)
    return sections


def render_sections(sections: dict, comment: Optional[str] = None) -> str:
    parts = []
    if comment:
        parts += [f"# {ln}" for ln in comment.splitlines()]
    for name, M in sections.items():
        if M is None:
            continue
        parts.append(f"{name}:")
        parts.append(render_matrix(M).rstrip("\n"))
    return "\n".join(parts) + "\n"
