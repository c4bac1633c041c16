"""Accelerated gradient descent driven by a stochastic inexact oracle.

Implements the similar-triangles iteration on Q = R^d with the coefficient
recurrence

    alpha^0 = A^0 = 0,
    (A^k + alpha^{k+1}) (1 + A^k mu) = L (alpha^{k+1})^2,
    A^{k+1} = A^k + alpha^{k+1},

the proximal step solved in closed form, and the associated convergence
bound calculators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CoefficientSchedule",
    "AgdState",
    "NonFiniteGradientError",
    "next_alpha",
    "agd_step",
    "run_agd",
    "theoretical_bound",
    "a_lower_bound",
    "triangle_update",
    "prox_update",
]


class NonFiniteGradientError(RuntimeError):
    """A gradient evaluation produced NaN or infinity; carries the state."""

    def __init__(self, message: str, state: "AgdState | None" = None):
        super().__init__(message)
        self.state = state


def next_alpha(A_k: float, L: float, mu: float) -> float:
    """Greater root of L a^2 - (1 + A^k mu) a - (1 + A^k mu) A^k = 0.

    Closed form: a = [(1 + A^k mu) + sqrt((1 + A^k mu)^2
    + 4 L A^k (1 + A^k mu))] / (2L).  All terms are positive, so the
    expression is cancellation-free.
    """
    if L <= 0.0:
        raise ValueError(f"L must be positive, got {L}")
    if mu < 0.0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if A_k < 0.0:
        raise ValueError(f"A_k must be nonnegative, got {A_k}")
    t = 1.0 + A_k * mu
    return (t + math.sqrt(t * t + 4.0 * L * A_k * t)) / (2.0 * L)


class CoefficientSchedule:
    """Lazily extended extrapolation coefficients alpha^k, A^k.

    ``L`` and ``mu`` are the inexact-oracle constants (the decentralized
    method instantiates L = 2 L_g, mu = mu_g / 2).
    """

    def __init__(self, L: float, mu: float):
        if L <= 0.0:
            raise ValueError(f"L must be positive, got {L}")
        if mu < 0.0:
            raise ValueError(f"mu must be nonnegative, got {mu}")
        self.L = float(L)
        self.mu = float(mu)
        self._alphas: list[float] = [0.0]  # alpha^0 = 0
        self._As: list[float] = [0.0]  # A^0 = 0

    def extend_to(self, k: int) -> None:
        while len(self._As) <= k:
            a = next_alpha(self._As[-1], self.L, self.mu)
            self._alphas.append(a)
            self._As.append(self._As[-1] + a)

    def alpha(self, k: int) -> float:
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        self.extend_to(k)
        return self._alphas[k]

    def A(self, k: int) -> float:
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        self.extend_to(k)
        return self._As[k]


@dataclass(frozen=True)
class AgdState:
    """Iterate triple of the similar-triangles method."""

    k: int
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray

    @classmethod
    def initial(cls, x0: np.ndarray) -> "AgdState":
        x0 = np.asarray(x0, dtype=float)
        return cls(k=0, x=x0.copy(), y=x0.copy(), u=x0.copy())


def triangle_update(
    a: np.ndarray, b: np.ndarray, alpha: float, A_k: float, A_k1: float
) -> np.ndarray:
    """(alpha a + A^k b) / A^{k+1}; collapses to a when A^k = 0."""
    if A_k == 0.0:
        return np.array(a, dtype=float, copy=True)
    return (alpha * a + A_k * b) / A_k1


def prox_update(
    u: np.ndarray,
    y: np.ndarray,
    g: np.ndarray,
    alpha: float,
    grad_coeff: float,
    A_k: float,
    A_k1: float,
    mu: float,
) -> np.ndarray:
    """Closed-form minimizer of the per-step proximal model.

    Returns ((1 + A^k mu) u + alpha mu y - grad_coeff g) / (1 + A^{k+1} mu).
    The generic method uses grad_coeff = alpha / 2 (minimizer of
    alpha <g, x - y> + (1 + A^k mu) ||x - u||^2 + alpha mu ||x - y||^2);
    the decentralized update uses grad_coeff = alpha.
    """
    return ((1.0 + A_k * mu) * u + (alpha * mu) * y - grad_coeff * g) / (
        1.0 + A_k1 * mu
    )


def agd_step(
    state: AgdState,
    coeffs: CoefficientSchedule,
    g_tilde_fn: Callable[[np.ndarray, int, np.random.Generator], np.ndarray],
    r_k: int,
    rng: np.random.Generator,
) -> AgdState:
    """One iteration of AGD with a stochastic inexact oracle.

    ``g_tilde_fn(y, r, rng)`` must return the batched stochastic gradient
    at y; the proximal subproblem is solved in closed form (Q = R^d).
    """
    k = state.k
    alpha = coeffs.alpha(k + 1)
    A_k = coeffs.A(k)
    A_k1 = coeffs.A(k + 1)
    mu = coeffs.mu
    y = triangle_update(state.u, state.x, alpha, A_k, A_k1)
    g = np.asarray(g_tilde_fn(y, r_k, rng), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(
            f"non-finite stochastic gradient at iteration {k + 1}", state=state
        )
    u = prox_update(state.u, y, g, alpha, 0.5 * alpha, A_k, A_k1, mu)
    x = triangle_update(u, state.x, alpha, A_k, A_k1)
    return AgdState(k=k + 1, x=x, y=y, u=u)


def run_agd(
    x0: np.ndarray,
    coeffs: CoefficientSchedule,
    g_tilde_fn: Callable[[np.ndarray, int, np.random.Generator], np.ndarray],
    N: int,
    r: int = 1,
    rng_at: Callable[[int], np.random.Generator] | None = None,
) -> list[AgdState]:
    """Run N iterations from x0 and return the state history (length N+1).

    ``rng_at(k)`` supplies the generator used at outer iteration k; the
    default is a fixed seeded stream, adequate for deterministic oracles.
    """
    if rng_at is None:
        base = np.random.default_rng(0)
        rng_at = lambda k: base  # noqa: E731 - deterministic oracles ignore it
    states = [AgdState.initial(x0)]
    for k in range(N):
        states.append(agd_step(states[-1], coeffs, g_tilde_fn, r, rng_at(k)))
    return states


def theoretical_bound(
    N: int,
    R_sq: float,
    sigma_sq: float,
    L: float,
    mu: float,
    r_list: Sequence[int] | int,
    delta_list: Sequence[float] | float = 0.0,
) -> float:
    """Expected-suboptimality bound after N iterations.

    (1/A^N) (R^2 + sum_{i=1}^N A^i (sigma^2 / (2 L r_i) + delta_i)),
    evaluated with the exactly computed A^i sequence.  Scalar ``r_list``
    or ``delta_list`` are broadcast to every iteration.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rs = [int(r_list)] * N if np.isscalar(r_list) else [int(v) for v in r_list]
    ds = [float(delta_list)] * N if np.isscalar(delta_list) else [float(v) for v in delta_list]
    if len(rs) != N or len(ds) != N:
        raise ValueError("r_list and delta_list must have length N")
    if any(r < 1 for r in rs):
        raise ValueError("all batch sizes must be >= 1")
    if any(d < 0 for d in ds):
        raise ValueError("all delta_i must be >= 0")
    coeffs = CoefficientSchedule(L, mu)
    coeffs.extend_to(N)
    acc = float(R_sq)
    for i in range(1, N + 1):
        acc += coeffs.A(i) * (sigma_sq / (2.0 * L * rs[i - 1]) + ds[i - 1])
    return acc / coeffs.A(N)


def a_lower_bound(N: int, L: float, mu: float) -> float:
    """Growth guarantee A^N >= (1/L) (1 + (1/2) sqrt(mu/L))^{2(N-1)}."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not (0.0 < mu <= L):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    return (1.0 / L) * (1.0 + 0.5 * math.sqrt(mu / L)) ** (2 * (N - 1))
