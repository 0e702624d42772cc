"""Random weighted networks as linear systems, and size sweeps of the energies.

A network with weighted adjacency ``G`` and Laplacian ``L`` becomes
``A = -(L + alpha I)``, which is symmetric and Hurwitz for ``alpha > 0``.
Actuators, sensors and targets sit on distinct randomly chosen nodes.

Randomness
----------
Realization ``k`` at size ``n`` under master seed ``s`` uses the 64-bit seed
``SeedSequence([s, n, k]).generate_state(1, uint64)[0]``, which feeds a
PCG64 generator.  That generator draws, in order: an integer seed for the
graph generator, one ``U[0, 1]`` weight per undirected edge (edges in sorted
order), then the actuator, sensor and target nodes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .duality import gramian_split, infinite_horizon_gramian, subspace_duality
from .energy import target_control_energy, target_observation_energy
from .errors import InputError, NetDualityError
from .numkernel import DEFAULT_TOL, seeded_rng

__all__ = [
    "MODELS",
    "AdjacencySpec",
    "generate_adjacency",
    "Placement",
    "NetworkSystem",
    "build_network_system",
    "realization_seed",
    "SweepConfig",
    "SweepRow",
    "SweepResult",
    "run_sweep",
]

MODELS = ("barabasi_albert", "newman_watts", "chain")
_DEFAULT_PARAMS = {
    "barabasi_albert": {"m0": 3},
    "newman_watts": {"k": 2, "p": 0.2},
    "chain": {},
}


@dataclass(frozen=True)
class AdjacencySpec:
    """Topology model, size, parameters and seed of one random network.

    ``barabasi_albert`` takes ``m0`` (edges per new node; the initial core is
    the complete graph on ``m0 + 1`` nodes).  ``newman_watts`` takes the
    ring degree ``k`` (even) and the shortcut probability ``p``.
    """

    model: str
    n: int
    params: Dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise InputError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 4:
            raise InputError(f"need n >= 4 nodes, got {self.n!r}")
        merged = dict(_DEFAULT_PARAMS[self.model])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise InputError(f"unknown parameter(s) for {self.model}: {', '.join(sorted(unknown))}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.model == "barabasi_albert":
            m0 = merged["m0"]
            if int(m0) != m0 or not 1 <= m0 < self.n - 1:
                raise InputError(f"m0 must be an integer in [1, n - 2], got {m0!r}")
        elif self.model == "newman_watts":
            k, p = merged["k"], merged["p"]
            if int(k) != k or k < 2 or k % 2 or k >= self.n:
                raise InputError(f"ring degree k must be even with 2 <= k < n, got {k!r}")
            if not 0.0 <= p <= 1.0:
                raise InputError(f"shortcut probability must lie in [0, 1], got {p!r}")


def _topology(spec: AdjacencySpec, rng: np.random.Generator) -> nx.Graph:
    n = int(spec.n)
    if spec.model == "chain":
        return nx.path_graph(n)
    gseed = int(rng.integers(2**32))
    if spec.model == "barabasi_albert":
        m0 = int(spec.params["m0"])
        return nx.barabasi_albert_graph(n, m0, seed=gseed, initial_graph=nx.complete_graph(m0 + 1))
    return nx.newman_watts_strogatz_graph(n, int(spec.params["k"]), float(spec.params["p"]), seed=gseed)


def _weighted(graph: nx.Graph, n: int, rng: np.random.Generator) -> np.ndarray:
    G = np.zeros((n, n))
    for i, j in sorted(tuple(sorted(e)) for e in graph.edges()):
        G[i, j] = G[j, i] = rng.uniform()
    return G


def generate_adjacency(spec: AdjacencySpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Symmetric weighted adjacency with ``U[0, 1]`` weights on the edges of the model graph."""
    rng = seeded_rng(spec.seed) if rng is None else rng
    return _weighted(_topology(spec, rng), int(spec.n), rng)


# ---------------------------------------------------------------------------
# Systems on networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Placement:
    """Either counts (drawn at random) or explicit node indices for B, C and F."""

    actuators: object = 1
    sensors: object = 1
    targets: object = 1

    @classmethod
    def fractions(cls, n: int, io_fraction: float = 0.1, target_ratio: float = 0.3) -> "Placement":
        # rounded up so that small networks keep at least one node of each kind
        return cls(math.ceil(io_fraction * n - 1e-9), math.ceil(io_fraction * n - 1e-9), math.ceil(target_ratio * n - 1e-9))


@dataclass
class NetworkSystem:
    G: np.ndarray
    L: np.ndarray
    A: np.ndarray
    alpha: float
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    nodes: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _pick(n, what, spec, rng):
    if isinstance(spec, (int, np.integer)):
        if not 1 <= spec <= n:
            raise InputError(f"cannot place {spec} {what} on {n} nodes")
        return np.sort(rng.choice(n, size=int(spec), replace=False))
    idx = np.asarray(spec, dtype=int).reshape(-1)
    if idx.size == 0 or idx.size > n or np.any(idx < 0) or np.any(idx >= n) or np.unique(idx).size != idx.size:
        raise InputError(f"{what} indices must be distinct nodes in [0, {n})")
    return idx


def build_network_system(
    G, alpha: float = 0.1, placement: Optional[Placement] = None, rng: Optional[np.random.Generator] = None,
    chain_preset: bool = False,
) -> NetworkSystem:
    """``A = -(L + alpha I)`` with one-hot actuator, sensor and target lines.

    ``chain_preset`` uses ``B = e_1``, ``C = e_1^T`` and ``F = [1 ... 1]``.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    if G.ndim != 2 or G.shape != (n, n) or n < 1:
        raise InputError("adjacency must be square")
    if not np.allclose(G, G.T, atol=0.0) or np.any(np.diag(G) != 0) or np.any(G < 0):
        raise InputError("adjacency must be symmetric, nonnegative, with zero diagonal")
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha!r}")
    L = np.diag(G.sum(axis=1)) - G
    A = -(L + alpha * np.eye(n))
    eye = np.eye(n)
    if chain_preset:
        nodes = {"actuators": np.array([0]), "sensors": np.array([0]), "targets": np.arange(n)}
        return NetworkSystem(G, L, A, alpha, eye[:, [0]], eye[[0]], np.ones((1, n)), nodes)
    placement = placement or Placement()
    rng = seeded_rng(0) if rng is None else rng
    b = _pick(n, "actuators", placement.actuators, rng)
    c = _pick(n, "sensors", placement.sensors, rng)
    f = _pick(n, "targets", placement.targets, rng)
    return NetworkSystem(G, L, A, alpha, eye[:, b], eye[c], eye[f], {"actuators": b, "sensors": c, "targets": f})


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def realization_seed(master: int, n: int, k: int) -> int:
    return int(np.random.SeedSequence([int(master), int(n), int(k)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepConfig:
    model: str
    sizes: Tuple[int, ...]
    realizations: int = 20
    ratios: Tuple[float, ...] = (0.3,)
    seed: int = 0
    alpha: float = 0.1
    io_fraction: float = 0.1
    params: Dict[str, float] = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise InputError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if not self.sizes or any(int(s) != s or s < 4 for s in self.sizes):
            raise InputError("sizes must be integers >= 4")
        if self.realizations < 1:
            raise InputError("need at least one realization")
        if not self.ratios or any(not 0 < r <= 1 for r in self.ratios):
            raise InputError("target ratios must lie in (0, 1]")
        if not 0 < self.io_fraction <= 1:
            raise InputError("actuator/sensor fraction must lie in (0, 1]")
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        AdjacencySpec(self.model, max(self.sizes), dict(self.params))  # parameter check


@dataclass(frozen=True)
class SweepRow:
    model: str
    n: int
    ratio: float
    realization: int
    seed: int
    e_tc: Optional[float]
    e_to: Optional[float]
    dim_cf: Optional[int] = None
    dim_of: Optional[int] = None
    status: str = "ok"

    @property
    def tc_defined(self) -> bool:
        return self.e_tc is not None

    @property
    def to_defined(self) -> bool:
        return self.e_to is not None


CSV_FIELDS = ("model", "n", "ratio", "realization", "seed", "e_tc", "e_to", "tc_defined", "to_defined", "dim_cf", "dim_of", "status")


def _fmt(x):
    if x is None:
        return "undefined"
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


@dataclass
class SweepResult:
    config: SweepConfig
    rows: List[SweepRow]

    def means(self) -> List[dict]:
        """Mean energies per ``(ratio, n)``; undefined values are left out and counted."""
        out = []
        for ratio in self.config.ratios:
            for n in self.config.sizes:
                sel = [r for r in self.rows if r.n == n and r.ratio == ratio]
                tc = [r.e_tc for r in sel if r.e_tc is not None]
                to = [r.e_to for r in sel if r.e_to is not None]
                out.append({
                    "n": n,
                    "ratio": ratio,
                    "mean_e_tc": float(np.mean(tc)) if tc else None,
                    "mean_e_to": float(np.mean(to)) if to else None,
                    "defined_tc": len(tc),
                    "defined_to": len(to),
                    "count": len(sel),
                })
        return out

    def series(self, key: str, ratio: Optional[float] = None) -> np.ndarray:
        ratio = self.config.ratios[0] if ratio is None else ratio
        vals = [m[key] for m in self.means() if m["ratio"] == ratio]
        return np.array([np.nan if v is None else v for v in vals])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _one_realization(args) -> List[SweepRow]:
    config, n, k = args
    seed = realization_seed(config.seed, n, k)
    rows = []
    for ratio in config.ratios:
        # every ratio reuses the same network and sensors: only the targets change
        rng = seeded_rng(seed)
        try:
            G = generate_adjacency(AdjacencySpec(config.model, n, dict(config.params), seed), rng)
            if config.model == "chain":
                net = build_network_system(G, config.alpha, chain_preset=True)
            else:
                placement = Placement.fractions(n, config.io_fraction, ratio)
                net = build_network_system(G, config.alpha, placement, rng)
            rows.append(_energies(config.model, n, ratio, k, seed, net))
        except (NetDualityError, np.linalg.LinAlgError) as exc:
            rows.append(SweepRow(config.model, n, ratio, k, seed, None, None, status=f"error: {exc}"))
    return rows


def _energies(model, n, ratio, k, seed, net: NetworkSystem) -> SweepRow:
    cfg = DEFAULT_TOL
    Wc = infinite_horizon_gramian(net.A, net.B @ net.B.T)
    Wo = infinite_horizon_gramian(net.A.T, net.C.T @ net.C)
    try:
        e_tc = target_control_energy(Wc, net.F, cfg)
    except NetDualityError:
        e_tc = None
    status = "ok"
    try:
        e_to, _ = target_observation_energy(Wo, net.F, cfg)
    except NetDualityError as exc:
        e_to = None
        status = "e_to undefined" if "undefined" in str(exc) else f"e_to error: {exc}"
    dim_cf, dim_of, _ = subspace_duality(gramian_split(Wo, cfg), net.F, cfg)
    if dim_of > dim_cf:
        status = "weak duality violated"
    return SweepRow(model, n, ratio, k, seed, e_tc, e_to, dim_cf, dim_of, status)


def run_sweep(config: SweepConfig) -> SweepResult:
    """All realizations of a size sweep; rows ordered by ``(n, realization, ratio)``.

    Realizations are independent (own seeds), so ``workers > 1`` runs them
    in a process pool without changing the result.
    """
    jobs = [(config, n, k) for n in config.sizes for k in range(config.realizations)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_one_realization, jobs))
    else:
        chunks = [_one_realization(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (config.sizes.index(r.n), r.realization, config.ratios.index(r.ratio)))
    return SweepResult(config, rows)
