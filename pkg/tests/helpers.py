"""Random system generators shared by the test modules."""

import numpy as np
from scipy.stats import ortho_group

from netduality.duality import ctrb_matrix, obsv_matrix


def five_state(a22, a33=0.0, a44=0.0):
    return np.array(
        [
            [-1, 0, 0, 0, -1],
            [-1, a22, 0, 0, 0],
            [0, 0, a33, 0, 0],
            [0, 0, 0, a44, 0],
            [0, -1, -1, -1, -1],
        ],
        dtype=float,
    )


def stable_matrix(rng, n, margin=0.3):
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    return A - (np.linalg.eigvals(A).real.max() + margin) * np.eye(n)


def orthonormal_rows(rng, r, n):
    return np.linalg.qr(rng.standard_normal((n, r)))[0].T


def rotation(rng, n):
    return ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)


def scaled_smin(M):
    s = np.linalg.svd(M, compute_uv=False)
    return s[-1] / s[0]


def unobservable_triple(rng, n, k, q, r, f_mode="generic", threshold=1e-3):
    """``(C, A, F)`` whose unobservable subspace has dimension ``n - k``.

    Built block-triangular in hidden coordinates and rotated by a random
    orthogonal matrix.  ``f_mode``: ``generic`` (random F), ``observable``
    (F annihilates the unobservable subspace, so functional observability
    holds) or ``kernel`` (F only sees the unobservable subspace).

    The observable block is redrawn until its scaled observability matrix is
    at least ``threshold`` away from rank deficiency, so that Krylov and
    Gramian rank decisions agree at double precision.
    """
    while True:
        A11 = rng.standard_normal((k, k)) / np.sqrt(n)
        C1 = rng.standard_normal((q, k))
        if scaled_smin(obsv_matrix(C1, A11 / max(np.linalg.norm(A11, 2), 1e-12))) >= threshold:
            break
    A = np.zeros((n, n))
    A[:k, :k] = A11
    A[k:, :k] = rng.standard_normal((n - k, k)) / np.sqrt(n)
    A[k:, k:] = rng.standard_normal((n - k, n - k)) / np.sqrt(n)
    A -= (np.linalg.eigvals(A).real.max() + 0.3) * np.eye(n)
    C = np.zeros((q, n))
    C[:, :k] = C1
    F = rng.standard_normal((r, n))
    if f_mode == "observable":
        F[:, k:] = 0.0
    elif f_mode == "kernel":
        F[:, :k] = 0.0
    Q = rotation(rng, n)
    return C @ Q.T, Q @ A @ Q.T, F @ Q.T


def well_conditioned_plant(rng, n, p, q, threshold=1e-2):
    """Random ``(A, B, C)`` with scaled controllability/observability matrices
    at least ``threshold`` away from rank deficiency; redraws otherwise."""
    while True:
        A = rng.standard_normal((n, n)) / np.sqrt(n)
        B = rng.standard_normal((n, p))
        C = rng.standard_normal((q, n))
        a = np.linalg.norm(A, 2)
        if scaled_smin(ctrb_matrix(A / a, B)) >= threshold and scaled_smin(obsv_matrix(C, A / a)) >= threshold:
            return A, B, C


def mirrored_poles(A, shift):
    lam = np.linalg.eigvals(A)
    return -np.abs(lam.real) - shift + 1j * lam.imag


def random_triple(seed):
    """Random ``(C, A, F)`` mixing the three target modes of ``unobservable_triple``."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    k = int(rng.integers(1, n + 1))
    q = int(rng.integers(1, 3))
    r = int(rng.integers(1, n + 1))
    mode = ["generic", "observable", "kernel"][int(rng.integers(3))]
    if mode == "kernel" and k == n:
        mode = "generic"
    if mode == "observable":
        r = min(r, k)
    if mode == "kernel":
        r = min(r, n - k)
    return unobservable_triple(rng, n, k, q, r, mode)


def modal_instance(rng):
    """Diagonalizable ``(A, B, F)`` with some uncontrollable modes and some
    modes hidden from the target (row(F) orthogonal to their left
    eigenvectors).  Returns ``A, B, F, eigenvalues, uncontrollable, hidden``."""
    n = int(rng.integers(3, 7))
    while True:
        lam = -rng.uniform(0.2, 4.0, n)
        if np.min(np.diff(np.sort(lam))) > 0.3:
            break
    S = rotation(rng, n) + 0.3 * rng.standard_normal((n, n))
    while np.linalg.cond(S) > 50:
        S = rotation(rng, n) + 0.3 * rng.standard_normal((n, n))
    Sinv = np.linalg.inv(S)
    A = S @ np.diag(lam) @ Sinv
    uncontrollable = rng.random(n) < 0.3
    hidden = rng.random(n) < 0.4
    if hidden.all():
        hidden[0] = False
    p = int(rng.integers(1, 3))
    # modal input weights bounded away from zero keep the placement well posed
    Bt = rng.uniform(0.5, 1.5, (n, p)) * rng.choice([-1.0, 1.0], (n, p))
    Bt[uncontrollable] = 0.0
    B = S @ Bt
    W = Sinv[hidden].T  # left eigenvectors of the hidden modes
    Pperp = np.eye(n) - (W @ np.linalg.pinv(W) if W.size else 0)
    r = int(rng.integers(1, n - hidden.sum() + 1))
    F = rng.standard_normal((r, n)) @ Pperp
    return A, B, F, lam, uncontrollable, hidden
