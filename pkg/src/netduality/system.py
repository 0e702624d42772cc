"""The ``SystemBundle``: matrices ``(A, B, C, F)`` of a linear system with a target.

    x' = A x + B u,   y = C x,   z = F x

``B`` or ``C`` may be missing for one-sided analyses.  ``F`` must have
independent rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionError, InputError
from .numkernel import DEFAULT_TOL, ToleranceConfig, as_matrix, parse_sections, rank_tol, render_sections

__all__ = ["SystemBundle", "check_target_matrix"]


def check_target_matrix(F, n: int, cfg: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Validate an ``r x n`` functional matrix with linearly independent rows."""
    F = as_matrix(F, "F")
    if F.shape[1] != n:
        raise DimensionError(f"F has {F.shape[1]} columns, expected {n}")
    if F.shape[0] > n:
        raise DimensionError(f"F has more rows ({F.shape[0]}) than states ({n})")
    if rank_tol(F, cfg) != F.shape[0]:
        raise InputError("F must have linearly independent rows (rank(F) = r)")
    return F


@dataclass(frozen=True)
class SystemBundle:
    A: np.ndarray
    F: np.ndarray
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "F", check_target_matrix(self.F, n))
        if self.B is not None:
            B = as_matrix(self.B, "B")
            if B.shape[0] != n:
                raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
            object.__setattr__(self, "B", B)
        if self.C is not None:
            C = as_matrix(self.C, "C")
            if C.shape[1] != n:
                raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
            object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return 0 if self.B is None else self.B.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.C is None else self.C.shape[0]

    @property
    def r(self) -> int:
        return self.F.shape[0]

    def require(self, *names: str) -> None:
        missing = [nm for nm in names if getattr(self, nm) is None]
        if missing:
            raise InputError(f"system file lacks section(s) {', '.join(m + ':' for m in missing)}")

    def dual(self) -> "SystemBundle":
        """``(A^T, C^T; F)`` with ``B^T`` as output: the transposed system."""
        return SystemBundle(
            A=self.A.T.copy(),
            F=self.F,
            B=None if self.C is None else self.C.T.copy(),
            C=None if self.B is None else self.B.T.copy(),
        )

    # -- text I/O ---------------------------------------------------------

    @classmethod
    def from_sections(cls, sections: dict) -> "SystemBundle":
        if "A" not in sections or "F" not in sections:
            raise InputError("a system needs at least the A: and F: sections")
        return cls(A=sections["A"], F=sections["F"], B=sections.get("B"), C=sections.get("C"))

    @classmethod
    def from_text(cls, text: str) -> "SystemBundle":
        return cls.from_sections(parse_sections(text))

    @classmethod
    def load(cls, path) -> "SystemBundle":
        return cls.from_text(Path(path).read_text())

    def to_text(self, comment: Optional[str] = None) -> str:
        return render_sections({"A": self.A, "B": self.B, "C": self.C, "F": self.F}, comment)

    def save(self, path, comment: Optional[str] = None) -> None:
        Path(path).write_text(self.to_text(comment))
