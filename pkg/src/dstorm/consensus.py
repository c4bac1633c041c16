"""Consensus subroutines: repeated gossip mixing and Chebyshev acceleration.

All operations act on stacked iterates, n x d arrays whose row i holds node
i's local vector.  Every operation preserves the row mean, so the distance
to the consensus stack (the row-mean repeated n times) can only shrink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import GraphSchedule, MixingMatrix, second_eigenvalue

__all__ = [
    "ConsensusReport",
    "consensus_error_sq",
    "mean_stack",
    "mix_round",
    "run_consensus",
    "chebyshev_consensus",
]


def mean_stack(X: np.ndarray) -> np.ndarray:
    """Stack with every row replaced by the row mean of X."""
    return np.broadcast_to(X.mean(axis=0), X.shape)


def consensus_error_sq(X: np.ndarray) -> float:
    """Squared Frobenius distance of X to its consensus stack."""
    return float(((X - X.mean(axis=0)) ** 2).sum())


@dataclass(frozen=True)
class ConsensusReport:
    """Result of a consensus run.

    ``pre_err`` / ``post_err`` are squared Frobenius distances to the
    respective consensus stacks.  ``substituted`` flags that the lazy
    transform W <- (W+I)/2 was applied inside Chebyshev acceleration.
    """

    X_out: np.ndarray
    rounds_used: int
    pre_err: float
    post_err: float
    substituted: bool = False


def mix_round(X: np.ndarray, mm: MixingMatrix) -> np.ndarray:
    """One synchronized gossip round: X <- W X."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"stacked iterate must be 2-d, got shape {X.shape}")
    if X.shape[0] != mm.n:
        raise ValueError(
            f"stack has {X.shape[0]} rows but mixing matrix is {mm.n}x{mm.n}"
        )
    return mm.W @ X


def run_consensus(
    X: np.ndarray, schedule: GraphSchedule, start_slot: int, T: int
) -> ConsensusReport:
    """Apply T gossip rounds with the slot-indexed mixing matrices.

    Rounds consume slots start_slot .. start_slot+T-1 in order, matching
    the time-varying semantics in which communication slots keep advancing
    across outer iterations.
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if start_slot < 0:
        raise ValueError(f"start_slot must be >= 0, got {start_slot}")
    X = np.asarray(X, dtype=float)
    pre = consensus_error_sq(X)
    out = X
    for t in range(start_slot, start_slot + T):
        out = mix_round(out, schedule.mixing_at(t))
    return ConsensusReport(
        X_out=out, rounds_used=T, pre_err=pre, post_err=consensus_error_sq(out)
    )


def chebyshev_consensus(
    X: np.ndarray, mm: MixingMatrix, rho: float, T: int
) -> ConsensusReport:
    """Chebyshev-accelerated consensus for a static mixing matrix.

    Evaluates P_T(W) X where P_T(x) = C_T(x/rho) / C_T(1/rho) and C_T is
    the degree-T Chebyshev polynomial of the first kind, normalized so
    P_T(1) = 1 (which keeps P_T(W) doubly stochastic).  The evaluation
    uses the three-term recurrence on matrix-stack products; P_T(W) is
    never formed.  To keep the recurrence stable the iterates are carried
    in normalized form Y_j = P_j(W) X together with the scalar ratios
    C_{j+1}(1/rho) / C_j(1/rho).

    The polynomial construction assumes the deflated spectrum of W lies in
    [-rho, rho].  If the smallest eigenvalue of W is below -rho, the lazy
    substitution W <- (W+I)/2 is applied (still doubly stochastic, with
    spectrum in [0, 1]) and rho is recomputed; the report flags this.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    X = np.asarray(X, dtype=float)
    if X.shape[0] != mm.n:
        raise ValueError(
            f"stack has {X.shape[0]} rows but mixing matrix is {mm.n}x{mm.n}"
        )
    pre = consensus_error_sq(X)
    if T == 0:
        return ConsensusReport(X_out=X, rounds_used=0, pre_err=pre, post_err=pre)

    W = mm.W
    substituted = False
    min_eig = float(np.linalg.eigvalsh(W)[0])
    if min_eig < -rho - 1e-12:
        W = 0.5 * (W + np.eye(mm.n))
        substituted = True
        lazy = MixingMatrix(W=W, graph=mm.graph)
        rho = second_eigenvalue(lazy)

    if rho == 0.0:
        # deflated spectrum is {0}: a single round averages exactly
        out = W @ X
        return ConsensusReport(
            X_out=out,
            rounds_used=T,
            pre_err=pre,
            post_err=consensus_error_sq(out),
            substituted=substituted,
        )

    Y_prev = X
    Y = W @ X  # P_1(x) = x under the chosen normalization
    ratio_prev = 1.0 / rho  # C_1(1/rho) / C_0(1/rho)
    for _ in range(1, T):
        ratio = 2.0 / rho - 1.0 / ratio_prev  # C_{j+1}/C_j at 1/rho
        Y_next = (2.0 / (rho * ratio)) * (W @ Y) - (1.0 / (ratio * ratio_prev)) * Y_prev
        Y_prev, Y = Y, Y_next
        ratio_prev = ratio
    return ConsensusReport(
        X_out=Y,
        rounds_used=T,
        pre_err=pre,
        post_err=consensus_error_sq(Y),
        substituted=substituted,
    )
