"""Per-node stochastic first-order oracles and the inexact-consensus oracle.

A node oracle exposes the exact local objective and gradient (diagnostics
only) plus an unbiased stochastic gradient with bounded variance.  Batching
r draws shrinks the variance by 1/r.  When the stacked iterate is close to
the consensus set, the node-averaged batched gradient acts as a stochastic
inexact oracle for the global objective; ``inexact_oracle_eval`` exposes
that construction for tests and diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ProblemConstants",
    "NodeOracle",
    "RngStream",
    "node_streams",
    "OracleError",
    "batched_gradient",
    "stacked_batched_gradient",
    "delta_from_delta_prime",
    "inexact_oracle_eval",
]


class OracleError(RuntimeError):
    """Oracle evaluation failure, annotated with the offending node."""


@dataclass(frozen=True)
class ProblemConstants:
    """Per-node strong-convexity, smoothness, and noise bounds.

    Aggregates (mu_g, L_g, mu_l, L_l, sigma_g_sq, condition numbers) are
    recomputed from the per-node arrays on every access so they can never
    go stale.  ``L_xi`` is the worst-case per-sample smoothness constant
    (defaults to L_l) and ``M_xi`` the largest per-sample gradient norm at
    the optimum; both enter only the run planner's D constant.
    """

    mu_i: np.ndarray
    L_i: np.ndarray
    sigma_i: np.ndarray
    L_xi: float | None = None
    M_xi: float = 0.0

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu_i, dtype=float))
        L = np.atleast_1d(np.asarray(self.L_i, dtype=float))
        sig = np.atleast_1d(np.asarray(self.sigma_i, dtype=float))
        if not (mu.shape == L.shape == sig.shape) or mu.ndim != 1:
            raise ValueError("mu_i, L_i, sigma_i must be 1-d arrays of equal length")
        if mu.size == 0:
            raise ValueError("constants require at least one node")
        if np.any(mu <= 0.0):
            raise ValueError("all mu_i must be positive")
        if np.any(L < mu):
            raise ValueError("L_i >= mu_i must hold for every node")
        if np.any(sig < 0.0):
            raise ValueError("sigma_i must be nonnegative")
        object.__setattr__(self, "mu_i", mu)
        object.__setattr__(self, "L_i", L)
        object.__setattr__(self, "sigma_i", sig)
        if self.L_xi is None:
            object.__setattr__(self, "L_xi", float(L.max()))
        elif self.L_xi < float(L.max()) - 1e-12:
            raise ValueError(f"L_xi must be >= L_l = {L.max()}, got {self.L_xi}")
        if self.M_xi < 0.0:
            raise ValueError("M_xi must be nonnegative")

    @property
    def n(self) -> int:
        return int(self.mu_i.size)

    @property
    def mu_g(self) -> float:
        return float(self.mu_i.mean())

    @property
    def L_g(self) -> float:
        return float(self.L_i.mean())

    @property
    def mu_l(self) -> float:
        return float(self.mu_i.min())

    @property
    def L_l(self) -> float:
        return float(self.L_i.max())

    @property
    def sigma_g_sq(self) -> float:
        return float((self.sigma_i**2).mean())

    @property
    def kappa_g(self) -> float:
        return self.L_g / self.mu_g

    @property
    def kappa_l(self) -> float:
        return self.L_l / self.mu_l


class NodeOracle:
    """Interface for a node's local objective f_i.

    ``value`` and ``grad`` are exact and intended for diagnostics and
    reference solves.  ``batched_grad`` returns the average of r unbiased
    stochastic gradient draws, consuming the supplied generator; it must
    be deterministic given the generator state.  ``sample_grad`` is the
    single-draw special case.
    """

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_grad(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.batched_grad(x, 1, rng)

    def batched_grad(
        self, x: np.ndarray, r: int, rng: np.random.Generator
    ) -> np.ndarray:
        # subclasses override with a vectorized draw; this fallback serves
        # oracles that only define sample_grad
        acc = self.sample_grad(x, rng).astype(float, copy=True)
        for _ in range(r - 1):
            acc += self.sample_grad(x, rng)
        return acc / r


class RngStream:
    """Counter-based deterministic random stream for one node.

    Each (master_seed, node_id) pair owns an independent Philox key;
    ``at(counter)`` returns a fresh generator whose counter block is set
    from the outer-iteration index, so draws are reproducible and
    node-parallel execution is bitwise equal to sequential execution.
    """

    def __init__(self, master_seed: int, node_id: int):
        self.master_seed = int(master_seed)
        self.node_id = int(node_id)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.node_id,))
        self._key = ss.generate_state(2, dtype=np.uint64)

    def at(self, counter: int) -> np.random.Generator:
        if counter < 0:
            raise ValueError(f"counter must be >= 0, got {counter}")
        ctr = np.zeros(4, dtype=np.uint64)
        ctr[3] = np.uint64(counter)
        return np.random.Generator(np.random.Philox(key=self._key, counter=ctr))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, node_id={self.node_id})"


def node_streams(master_seed: int, n: int) -> list[RngStream]:
    """One independent stream per node id 0..n-1."""
    return [RngStream(master_seed, i) for i in range(n)]


def batched_gradient(
    oracle: NodeOracle, x: np.ndarray, r: int, rng: np.random.Generator
) -> np.ndarray:
    """Average of r stochastic gradient draws at x."""
    if r < 1:
        raise ValueError(f"batch size must be >= 1, got {r}")
    return oracle.batched_grad(np.asarray(x, dtype=float), int(r), rng)


def stacked_batched_gradient(
    oracles: Sequence[NodeOracle],
    X: np.ndarray,
    r: int,
    rngs: Sequence[np.random.Generator],
) -> np.ndarray:
    """Row i holds node i's batched gradient at X's row i.

    Node generators advance independently; failures are re-raised with the
    node index attached.
    """
    X = np.asarray(X, dtype=float)
    n = len(oracles)
    if X.shape[0] != n or len(rngs) != n:
        raise ValueError(
            f"stack rows ({X.shape[0]}), oracles ({n}) and rngs ({len(rngs)}) disagree"
        )
    G = np.empty_like(X)
    for i in range(n):
        try:
            G[i] = batched_gradient(oracles[i], X[i], r, rngs[i])
        except Exception as e:  # noqa: BLE001 - annotate and re-raise
            raise OracleError(f"node {i}: {e}") from e
    return G


def delta_from_delta_prime(delta_prime: float, c: ProblemConstants) -> float:
    """Inexact-oracle error induced by consensus accuracy delta_prime.

    delta = (1/2n) (L_l^2/L_g + 2 L_l^2/mu_g + L_l - mu_l) delta'.
    """
    if delta_prime < 0.0:
        raise ValueError(f"delta_prime must be >= 0, got {delta_prime}")
    coeff = (
        c.L_l**2 / c.L_g + 2.0 * c.L_l**2 / c.mu_g + c.L_l - c.mu_l
    ) / (2.0 * c.n)
    return coeff * delta_prime


def inexact_oracle_eval(
    X: np.ndarray,
    c: ProblemConstants,
    oracles: Sequence[NodeOracle],
    r: int,
    rngs: Sequence[np.random.Generator],
) -> tuple[float, np.ndarray, np.ndarray]:
    """Stochastic inexact oracle of the global objective at the row mean.

    With x_bar the row mean of X, returns

      f_delta = (1/n) [F(X) + <grad F(X), Xbar - X>]
                + (mu_l/(2n) - L_l^2/(n mu_g)) ||Xbar - X||_F^2,
      g       = (1/n) sum_i grad f_i(x_i),
      g_tilde = (1/n) sum_i batched gradient of f_i at x_i,

    where F(X) = sum_i f_i(x_i).  The pair (f_delta, g) satisfies the
    two-sided quadratic envelope of the global objective with error delta
    from :func:`delta_from_delta_prime` whenever ||X - Xbar||_F^2 <= delta';
    g_tilde is unbiased for g with E||g_tilde - g||^2 <= sigma_g^2/(n r).
    f_delta is exposed for tests and diagnostics only.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("stacked iterate contains non-finite entries")
    n = len(oracles)
    x_bar = X.mean(axis=0)
    dev = x_bar - X  # row i: x_bar - x_i
    F = 0.0
    inner = 0.0
    g = np.zeros_like(x_bar)
    for i in range(n):
        gi = oracles[i].grad(X[i])
        F += oracles[i].value(X[i])
        inner += float(gi @ dev[i])
        g += gi
    g /= n
    dev_sq = float((dev**2).sum())
    f_delta = (F + inner) / n + (c.mu_l / (2.0 * n) - c.L_l**2 / (n * c.mu_g)) * dev_sq
    g_tilde = stacked_batched_gradient(oracles, X, r, rngs).mean(axis=0)
    return f_delta, g, g_tilde
