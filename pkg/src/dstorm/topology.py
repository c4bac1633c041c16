"""Communication graphs, graph schedules, and gossip mixing matrices.

Builds Metropolis-weight mixing matrices for undirected graphs, validates
their algebraic properties (double stochasticity, sparsity, symmetry), and
certifies contraction parameters for static and time-varying schedules.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "Graph",
    "GraphSchedule",
    "MixingMatrix",
    "ContractionCertificate",
    "ValidationReport",
    "TopologyError",
    "RadiusTooSmallError",
    "NonContractingScheduleError",
    "metropolis_weights",
    "validate_mixing",
    "second_eigenvalue",
    "contraction_certificate",
    "random_geometric_graph",
    "tau_connected_schedule",
    "static_schedule",
    "graph_to_edge_list",
    "graph_from_edge_list",
    "save_graph",
    "load_graph",
]


class TopologyError(ValueError):
    """Malformed graph, schedule, or mixing-matrix input."""


class RadiusTooSmallError(TopologyError):
    """Random geometric sampling never produced a connected graph."""


class NonContractingScheduleError(TopologyError):
    """No positive contraction factor found over the inspected horizon."""


def _normalize_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices 0..n-1.

    Edges are stored as a frozenset of (i, j) pairs with i < j; no
    self-loops are allowed.
    """

    n: int
    edges: frozenset[tuple[int, int]]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        if n < 1:
            raise TopologyError(f"vertex count must be >= 1, got {n}")
        normalized = set()
        for i, j in edges:
            if i == j:
                raise TopologyError(f"self-loop ({i},{j}) not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise TopologyError(f"edge ({i},{j}) out of range for n={n}")
            normalized.add(_normalize_edge(int(i), int(j)))
        return cls(n=n, edges=frozenset(normalized))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def star(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(0, i) for i in range(1, n)])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def union(self, other: "Graph") -> "Graph":
        if self.n != other.n:
            raise TopologyError("cannot union graphs with different vertex counts")
        return Graph(n=self.n, edges=self.edges | other.edges)

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = [False] * self.n
        seen[0] = True
        queue = deque([0])
        count = 1
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    count += 1
                    queue.append(w)
        return count == self.n


@dataclass(frozen=True)
class MixingMatrix:
    """Doubly stochastic matrix respecting a graph's sparsity pattern."""

    W: np.ndarray
    graph: Graph

    @property
    def n(self) -> int:
        return self.graph.n


@dataclass
class GraphSchedule:
    """Deterministic map from communication slot k >= 0 to a graph.

    ``kind`` is one of "static", "sequence-of-connected", "tau-connected".
    For periodic schedules ``period`` enables caching of per-slot mixing
    matrices.
    """

    n: int
    kind: str
    generator: Callable[[int], Graph]
    tau: int = 1
    period: int | None = None
    _mixing_cache: dict[int, MixingMatrix] = field(default_factory=dict, repr=False)

    def graph_at(self, k: int) -> Graph:
        if k < 0:
            raise TopologyError(f"slot index must be >= 0, got {k}")
        g = self.generator(k)
        if g.n != self.n:
            raise TopologyError(
                f"schedule generator returned graph with n={g.n}, expected {self.n}"
            )
        return g

    def mixing_at(self, k: int) -> MixingMatrix:
        key = k if self.period is None else k % self.period
        cached = self._mixing_cache.get(key)
        if cached is not None:
            return cached
        mm = metropolis_weights(self.graph_at(key if self.period is not None else k))
        if self.period is not None or self.kind == "static":
            self._mixing_cache[key] = mm
        return mm


def static_schedule(graph: Graph) -> GraphSchedule:
    """Schedule that repeats one fixed graph at every slot."""
    return GraphSchedule(
        n=graph.n, kind="static", generator=lambda k: graph, tau=1, period=1
    )


@dataclass(frozen=True)
class ContractionCertificate:
    """Contraction parameters of a mixing-matrix schedule.

    ``lam`` is the per-window contraction margin: products of tau
    consecutive mixing matrices shrink distance to consensus by at least
    the factor (1 - lam).  ``rho`` and ``chi`` = 1/(1-rho) are filled for
    static schedules only.  For time-varying schedules ``lam`` is a
    finite-horizon estimate, not a certified supremum.
    """

    tau: int
    lam: float
    rho: float | None = None
    chi: float | None = None
    horizon: int | None = None

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise TopologyError(f"tau must be >= 1, got {self.tau}")
        if not (0.0 < self.lam < 1.0 + 1e-12):
            raise TopologyError(f"lambda must lie in (0, 1], got {self.lam}")

    @property
    def is_static(self) -> bool:
        return self.rho is not None


def metropolis_weights(graph: Graph) -> MixingMatrix:
    """Metropolis-weight mixing matrix of a graph.

    Off-diagonal entries are 1/(1 + max(d_i, d_j)) on edges and zero
    elsewhere; the diagonal absorbs the remainder so every row sums to 1.
    The result is symmetric and doubly stochastic for any simple graph.
    """
    n = graph.n
    W = np.zeros((n, n))
    deg = graph.degrees()
    for i, j in graph.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix(W=W, graph=graph)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_mixing; empty ``violations`` means valid."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_mixing(mm: MixingMatrix, tol: float = 1e-12) -> ValidationReport:
    """Check double stochasticity, nonnegativity, sparsity, and symmetry."""
    W = mm.W
    n = mm.graph.n
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise TopologyError(f"mixing matrix must be square, got shape {W.shape}")
    if W.shape[0] != n:
        raise TopologyError(
            f"mixing matrix size {W.shape[0]} does not match graph n={n}"
        )
    violations: list[str] = []
    row = W.sum(axis=1)
    col = W.sum(axis=0)
    bad_rows = np.where(np.abs(row - 1.0) > tol)[0]
    for i in bad_rows:
        violations.append(f"row {i} sums to {row[i]!r}, expected 1")
    bad_cols = np.where(np.abs(col - 1.0) > tol)[0]
    for j in bad_cols:
        violations.append(f"column {j} sums to {col[j]!r}, expected 1")
    neg = np.argwhere(W < -tol)
    for i, j in neg:
        violations.append(f"negative entry W[{i}][{j}] = {W[i, j]!r}")
    off_graph = np.abs(W) > tol
    np.fill_diagonal(off_graph, False)
    for i, j in mm.graph.edges:
        off_graph[i, j] = False
        off_graph[j, i] = False
    for i, j in np.argwhere(off_graph):
        violations.append(f"nonzero entry W[{i}][{j}] off the edge set")
    asym = np.abs(W - W.T).max() if n > 0 else 0.0
    if asym > tol:
        violations.append(f"asymmetry |W - W^T| = {asym!r}")
    return ValidationReport(violations=tuple(violations))


def second_eigenvalue(mm: MixingMatrix) -> float:
    """Second-largest eigenvalue modulus of a symmetric mixing matrix.

    Computed on the subspace orthogonal to the all-ones vector by
    deflating the consensus projector: rho = max |eig(W - (1/n) 11^T)|.
    """
    W = mm.W
    n = W.shape[0]
    asym = np.abs(W - W.T).max()
    if asym > 1e-10:
        raise TopologyError(f"second_eigenvalue requires symmetric W, asymmetry={asym}")
    deflated = W - np.full((n, n), 1.0 / n)
    evals = np.linalg.eigvalsh(deflated)
    return float(np.abs(evals).max())


def contraction_certificate(
    schedule: GraphSchedule, tau: int, horizon: int | None = None
) -> ContractionCertificate:
    """Certify the contraction factor of a schedule over a finite horizon.

    For every window of tau consecutive slots ending at k in
    [tau-1, horizon], measures the spectral norm of
    W^k ... W^{k-tau+1} - (1/n) 11^T and sets lam = 1 - max over windows.
    The spectral norm (largest singular value) is used rather than the
    eigenvalue modulus so the certified factor bounds ||P x|| for every x
    even when window products are nonsymmetric.

    For static schedules the second eigenvalue rho and chi = 1/(1-rho)
    are additionally reported.
    """
    if tau < 1:
        raise TopologyError(f"tau must be >= 1, got {tau}")
    if horizon is None:
        horizon = 10 * tau
    if horizon < tau:
        raise TopologyError(f"horizon {horizon} must be >= tau {tau}")
    n = schedule.n
    J = np.full((n, n), 1.0 / n)
    if schedule.kind == "static" and tau == 1:
        # one window suffices; all slots share the same matrix
        windows = [schedule.mixing_at(0).W]
    else:
        mats = [schedule.mixing_at(k).W for k in range(horizon + 1)]
        windows = []
        for k in range(tau - 1, horizon + 1):
            P = mats[k]
            for t in range(k - 1, k - tau, -1):
                P = P @ mats[t]
            windows.append(P)
    worst = 0.0
    for P in windows:
        s = np.linalg.svd(P - J, compute_uv=False)[0]
        worst = max(worst, float(s))
    lam = 1.0 - worst
    if lam <= 0.0:
        raise NonContractingScheduleError(
            f"schedule does not contract over horizon {horizon}: "
            f"max window norm {worst}"
        )
    rho = chi = None
    if schedule.kind == "static":
        rho = second_eigenvalue(schedule.mixing_at(0))
        chi = 1.0 / (1.0 - rho)
    return ContractionCertificate(tau=tau, lam=lam, rho=rho, chi=chi, horizon=horizon)


def random_geometric_graph(
    n: int, radius: float, seed: int, max_attempts: int = 100
) -> Graph:
    """Connected random geometric graph in the unit square.

    Samples n points uniformly and joins pairs within Euclidean distance
    ``radius``.  On disconnection the points are resampled with an
    incremented sub-seed, up to ``max_attempts`` times.
    """
    if n < 1:
        raise TopologyError(f"n must be >= 1, got {n}")
    if not (0.0 < radius <= math.sqrt(2.0) + 1e-12):
        raise TopologyError(f"radius must lie in (0, sqrt(2)], got {radius}")
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        pts = rng.uniform(size=(n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        ii, jj = np.where(np.triu(dist <= radius, k=1))
        g = Graph.from_edges(n, zip(ii.tolist(), jj.tolist()))
        if g.is_connected():
            return g
    raise RadiusTooSmallError(
        f"no connected geometric graph after {max_attempts} attempts "
        f"(n={n}, radius={radius}, seed={seed})"
    )


def tau_connected_schedule(base: Graph, tau: int, seed: int) -> GraphSchedule:
    """Split a connected graph into a periodic tau-connected schedule.

    Edges are shuffled with the given seed and dealt round-robin into tau
    slot groups; slot k carries group k mod tau.  The union over any tau
    consecutive slots is the full base graph, so the schedule is
    tau-connected by construction.
    """
    if tau < 1:
        raise TopologyError(f"tau must be >= 1, got {tau}")
    if not base.is_connected():
        raise TopologyError("base graph must be connected")
    edges = sorted(base.edges)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(edges))
    shuffled = [edges[i] for i in order]
    groups: list[list[tuple[int, int]]] = [[] for _ in range(tau)]
    for idx, e in enumerate(shuffled):
        groups[idx % tau].append(e)
    slot_graphs = [Graph.from_edges(base.n, g) for g in groups]
    return GraphSchedule(
        n=base.n,
        kind="tau-connected" if tau > 1 else "static",
        generator=lambda k: slot_graphs[k % tau],
        tau=tau,
        period=tau,
    )


def graph_to_edge_list(graph: Graph) -> str:
    """Serialize a graph as edge-list text: first line n, then one 'i j' per line."""
    lines = [str(graph.n)]
    lines.extend(f"{i} {j}" for i, j in sorted(graph.edges))
    return "\n".join(lines) + "\n"


def graph_from_edge_list(text: str) -> Graph:
    """Parse edge-list text produced by :func:`graph_to_edge_list`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise TopologyError("empty edge-list text")
    try:
        n = int(lines[0])
    except ValueError as e:
        raise TopologyError(f"first line must be the vertex count, got {lines[0]!r}") from e
    edges = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise TopologyError(f"line {lineno}: expected 'i j', got {ln!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise TopologyError(f"line {lineno}: non-integer vertex in {ln!r}") from e
        edges.append((i, j))
    return Graph.from_edges(n, edges)


def save_graph(graph: Graph, path: str | Path) -> None:
    Path(path).write_text(graph_to_edge_list(graph), encoding="utf-8")


def load_graph(path: str | Path) -> Graph:
    return graph_from_edge_list(Path(path).read_text(encoding="utf-8"))
