"""Decentralized stochastic AGD, its run planner, and the DSGD baseline.

The outer iteration keeps a stacked iterate per node, takes a batched
stochastic gradient step in the extrapolated point, and replaces exact
averaging with T rounds of gossip consensus.  The planner turns a target
accuracy into the consensus accuracy, batch size, consensus rounds, and
outer iteration count that guarantee it for a certified schedule.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .agd import CoefficientSchedule, NonFiniteGradientError, prox_update, triangle_update
from .consensus import ConsensusReport, consensus_error_sq, run_consensus
from .oracle import (
    NodeOracle,
    ProblemConstants,
    RngStream,
    node_streams,
    delta_from_delta_prime,
    stacked_batched_gradient,
)
from .topology import ContractionCertificate, GraphSchedule, MixingMatrix

__all__ = [
    "RunPlan",
    "PlanError",
    "DecState",
    "MetricRow",
    "RunRecord",
    "plan_run",
    "dec_step",
    "run",
    "run_dsagd",
    "dsgd_step",
    "run_dsgd",
    "dsgd_step_size",
]


class PlanError(ValueError):
    """Planner inputs admit no valid schedule of parameters."""


@dataclass(frozen=True)
class RunPlan:
    """Parameter schedule for one planned decentralized run.

    ``delta_prime`` is the enforced consensus accuracy, ``delta`` the
    induced inexact-oracle error, ``r`` the per-node batch size, ``T`` the
    consensus rounds per outer iteration, ``N`` the outer iteration count,
    and ``D`` the bound on the pre-consensus deviation used to size T.
    """

    epsilon: float
    delta_prime: float
    delta: float
    r: int
    T: int
    N: int
    D: float
    R_est: float

    def __post_init__(self) -> None:
        if self.epsilon <= 0.0:
            raise PlanError(f"epsilon must be positive, got {self.epsilon}")
        if self.delta_prime <= 0.0:
            raise PlanError(f"delta_prime must be positive, got {self.delta_prime}")
        if self.r < 1 or self.T < 1 or self.N < 1:
            raise PlanError("r, T, N must all be >= 1")
        if self.D <= self.delta_prime:
            raise PlanError(
                "D <= delta_prime: consensus-rounds formula degenerates; "
                "increase R_est or epsilon"
            )

    @property
    def N_orcl(self) -> int:
        """Stochastic oracle calls per node over the whole run."""
        return self.N * self.r

    @property
    def N_comm(self) -> int:
        """Total communication rounds over the whole run."""
        return self.N * self.T


def plan_run(
    epsilon: float,
    c: ProblemConstants,
    cert: ContractionCertificate,
    R_est: float,
) -> RunPlan:
    """Assemble the accuracy-epsilon parameter schedule.

    delta' = (n eps / 32) mu_g^{3/2} / (L_g^{1/2} L_l^2),
    r      = max(1, ceil(2 sigma_g^2 / (eps sqrt(L_g mu_g)))),
    sqrt(D)= (2 L_l / sqrt(L_g mu_g) + 1) sqrt(delta')
             + 2 n M_xi / sqrt(L_g mu_g)
             + (2 L_l / mu_g) sqrt(n) (R_est^2
               + (2/sqrt(L_g mu_g)) (sigma_g^2/(4 n L_g r^2) + delta))^{1/2},
    T      = ceil(sqrt(chi) ln(D/delta'))            for static schedules,
             ceil((tau / (2 lambda)) ln(D/delta'))   otherwise,
    N      = ceil(3 sqrt(L_g/mu_g) ln(4 L_g R_est^2 / eps)).

    ``R_est`` must upper-bound the distance from the initial consensus
    point to the optimum.
    """
    if epsilon <= 0.0:
        raise PlanError(f"epsilon must be positive, got {epsilon}")
    if R_est <= 0.0:
        raise PlanError(f"R_est must be positive, got {R_est}")
    n = c.n
    sqrt_LgMug = math.sqrt(c.L_g * c.mu_g)
    delta_prime = (n * epsilon / 32.0) * c.mu_g**1.5 / (math.sqrt(c.L_g) * c.L_l**2)
    r = max(1, math.ceil(2.0 * c.sigma_g_sq / (epsilon * sqrt_LgMug)))
    delta = delta_from_delta_prime(delta_prime, c)
    sqrt_D = (
        (2.0 * c.L_l / sqrt_LgMug + 1.0) * math.sqrt(delta_prime)
        + 2.0 * n * c.M_xi / sqrt_LgMug
        + (2.0 * c.L_l / c.mu_g)
        * math.sqrt(n)
        * math.sqrt(
            R_est**2
            + (2.0 / sqrt_LgMug) * (c.sigma_g_sq / (4.0 * n * c.L_g * r**2) + delta)
        )
    )
    D = sqrt_D**2
    if D <= delta_prime:
        raise PlanError(
            "D <= delta_prime: consensus-rounds formula degenerates; "
            "increase R_est or epsilon"
        )
    log_ratio = math.log(D / delta_prime)
    if cert.is_static:
        T = math.ceil(math.sqrt(cert.chi) * log_ratio)
    else:
        T = math.ceil(cert.tau / (2.0 * cert.lam) * log_ratio)
    N = math.ceil(3.0 * math.sqrt(c.L_g / c.mu_g) * math.log(4.0 * c.L_g * R_est**2 / epsilon))
    return RunPlan(
        epsilon=epsilon,
        delta_prime=delta_prime,
        delta=delta,
        r=r,
        T=max(1, T),
        N=max(1, N),
        D=D,
        R_est=R_est,
    )


@dataclass(frozen=True)
class DecState:
    """Stacked iterates of the decentralized method plus slot counter."""

    k: int
    X: np.ndarray
    U: np.ndarray
    slot: int

    @classmethod
    def initial(cls, x0: np.ndarray, n: int) -> "DecState":
        x0 = np.asarray(x0, dtype=float)
        X0 = np.tile(x0, (n, 1))
        return cls(k=0, X=X0, U=X0.copy(), slot=0)


@dataclass(frozen=True)
class MetricRow:
    """One per-outer-iteration record; f_gap is None when f* is unknown."""

    round: int
    comm_total: int
    oracle_calls_per_node: int
    f_gap: float | None
    consensus_sq: float
    wallclock_ms: float


@dataclass
class RunRecord:
    """Full trace of a run: metric rows plus baseline metadata.

    ``u_consensus_sq`` tracks ||U^k - Ubar^k||_F^2 after each consensus
    call (diagnostics; not part of the CSV schema).
    """

    meta: dict = field(default_factory=dict)
    rows: list[MetricRow] = field(default_factory=list)
    u_consensus_sq: list[float] = field(default_factory=list)


def dec_step(
    state: DecState,
    coeffs: CoefficientSchedule,
    schedule: GraphSchedule,
    T: int,
    r: int,
    oracles: Sequence[NodeOracle],
    streams: Sequence[RngStream],
) -> tuple[DecState, ConsensusReport]:
    """One outer iteration of decentralized stochastic AGD.

    Y^{k+1} = (a^{k+1} U^k + A^k X^k) / A^{k+1}
    V^{k+1} = ((a^{k+1} mu) Y^{k+1} + (1 + A^k mu) U^k
               - a^{k+1} G(Y^{k+1})) / (1 + A^{k+1} mu)
    U^{k+1} = Consensus(V^{k+1}, T)      (consumes T slots)
    X^{k+1} = (a^{k+1} U^{k+1} + A^k X^k) / A^{k+1}

    with mu = mu_g/2 baked into ``coeffs`` and G the stacked batched
    gradient with per-node batch size r.
    """
    k = state.k
    alpha = coeffs.alpha(k + 1)
    A_k = coeffs.A(k)
    A_k1 = coeffs.A(k + 1)
    mu = coeffs.mu
    Y = triangle_update(state.U, state.X, alpha, A_k, A_k1)
    rngs = [s.at(k) for s in streams]
    G = stacked_batched_gradient(oracles, Y, r, rngs)
    if not np.all(np.isfinite(G)):
        raise NonFiniteGradientError(
            f"non-finite stacked gradient at outer iteration {k + 1}", state=None
        )
    V = prox_update(state.U, Y, G, alpha, alpha, A_k, A_k1, mu)
    rep = run_consensus(V, schedule, state.slot, T)
    U = rep.X_out
    X = triangle_update(U, state.X, alpha, A_k, A_k1)
    return DecState(k=k + 1, X=X, U=U, slot=state.slot + T), rep


def _record_row(
    record: RunRecord,
    problem,
    k: int,
    comm: int,
    calls: int,
    X: np.ndarray,
    t0: float,
) -> None:
    f_star = getattr(problem, "f_star", None)
    gap = None
    if f_star is not None:
        gap = float(problem.f(X.mean(axis=0)) - f_star)
    record.rows.append(
        MetricRow(
            round=k,
            comm_total=comm,
            oracle_calls_per_node=calls,
            f_gap=gap,
            consensus_sq=consensus_error_sq(X),
            wallclock_ms=(time.perf_counter() - t0) * 1e3,
        )
    )


def run_dsagd(
    problem,
    schedule: GraphSchedule,
    seed: int,
    *,
    T: int,
    r: int,
    N: int,
    x0: np.ndarray | None = None,
) -> RunRecord:
    """Drive decentralized stochastic AGD for N outer iterations.

    Deterministic for a fixed seed: node randomness comes from
    counter-based per-node streams keyed by (seed, node, iteration).
    """
    c: ProblemConstants = problem.constants()
    n = c.n
    if schedule.n != n:
        raise ValueError(f"schedule has n={schedule.n} but problem has n={n}")
    coeffs = CoefficientSchedule(L=2.0 * c.L_g, mu=c.mu_g / 2.0)
    oracles = problem.oracles()
    streams = node_streams(seed, n)
    if x0 is None:
        x0 = np.zeros(problem.dim)
    state = DecState.initial(x0, n)
    record = RunRecord(
        meta={
            "algorithm": "dsagd",
            "seed": seed,
            "T": T,
            "r": r,
            "N": N,
            "n": n,
            "L": 2.0 * c.L_g,
            "mu": c.mu_g / 2.0,
        }
    )
    t0 = time.perf_counter()
    _record_row(record, problem, 0, 0, 0, state.X, t0)
    record.u_consensus_sq.append(consensus_error_sq(state.U))
    for k in range(N):
        state, rep = dec_step(state, coeffs, schedule, T, r, oracles, streams)
        record.u_consensus_sq.append(rep.post_err)
        _record_row(record, problem, k + 1, state.slot, (k + 1) * r, state.X, t0)
    record.meta["final_slot"] = state.slot
    return record


def run(plan: RunPlan, problem, schedule: GraphSchedule, seed: int,
        x0: np.ndarray | None = None) -> RunRecord:
    """Execute a planned run end to end."""
    record = run_dsagd(
        problem, schedule, seed, T=plan.T, r=plan.r, N=plan.N, x0=x0
    )
    record.meta["epsilon"] = plan.epsilon
    record.meta["delta_prime"] = plan.delta_prime
    return record


def dsgd_step_size(k: int, c: ProblemConstants) -> float:
    """Decaying DSGD step: min(1/L_l, 2/(mu_g (k + k0))), k0 = 2 L_l/mu_g."""
    k0 = 2.0 * c.L_l / c.mu_g
    return min(1.0 / c.L_l, 2.0 / (c.mu_g * (k + k0)))


def dsgd_step(
    X: np.ndarray,
    mm: MixingMatrix,
    eta: float,
    oracles: Sequence[NodeOracle],
    r: int,
    rngs: Sequence[np.random.Generator],
) -> np.ndarray:
    """One DSGD iteration X' = W (X - eta G(X)).

    Mixing happens after the local stochastic gradient step; G is the
    stacked batched gradient with per-node batch size r.
    """
    if eta <= 0.0:
        raise ValueError(f"step size must be positive, got {eta}")
    G = stacked_batched_gradient(oracles, X, r, rngs)
    if not np.all(np.isfinite(G)):
        raise NonFiniteGradientError("non-finite stacked gradient in DSGD step")
    return mm.W @ (X - eta * G)


def run_dsgd(
    problem,
    schedule: GraphSchedule,
    seed: int,
    *,
    r: int,
    N: int,
    x0: np.ndarray | None = None,
    eta_fn: Callable[[int], float] | None = None,
) -> RunRecord:
    """Drive the DSGD baseline: one gossip round per iteration."""
    c: ProblemConstants = problem.constants()
    n = c.n
    if schedule.n != n:
        raise ValueError(f"schedule has n={schedule.n} but problem has n={n}")
    oracles = problem.oracles()
    streams = node_streams(seed, n)
    if x0 is None:
        x0 = np.zeros(problem.dim)
    if eta_fn is None:
        eta_fn = lambda k: dsgd_step_size(k, c)  # noqa: E731
    X = np.tile(np.asarray(x0, dtype=float), (n, 1))
    record = RunRecord(
        meta={
            "algorithm": "dsgd",
            "seed": seed,
            "r": r,
            "N": N,
            "n": n,
            "step_schedule": "min(1/L_l, 2/(mu_g (k + 2 L_l/mu_g)))",
        }
    )
    t0 = time.perf_counter()
    _record_row(record, problem, 0, 0, 0, X, t0)
    for k in range(N):
        rngs = [s.at(k) for s in streams]
        X = dsgd_step(X, schedule.mixing_at(k), eta_fn(k), oracles, r, rngs)
        _record_row(record, problem, k + 1, k + 1, (k + 1) * r, X, t0)
    return record
