"""Built-in problem instances.

Synthetic strongly convex quadratics with a known optimum, and
L2-regularized logistic regression over LIBSVM-format data partitioned
across nodes.  Both expose the problem protocol consumed by the
decentralized drivers: ``constants()``, ``oracles()``, ``f(x)``,
``grad_f(x)``, ``x_star``, ``f_star``, ``dim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .agd import CoefficientSchedule, agd_step, AgdState
from .oracle import NodeOracle, ProblemConstants

__all__ = [
    "QuadraticInstance",
    "QuadraticOracle",
    "LogisticInstance",
    "LogisticOracle",
    "Dataset",
    "ProblemError",
    "gen_quadratic",
    "quadratic_oracle",
    "parse_libsvm",
    "partition",
    "logistic_oracle",
    "synthetic_classification",
    "make_logistic_instance",
]


class ProblemError(ValueError):
    """Malformed problem data or parameters."""


# ---------------------------------------------------------------------------
# quadratics


class QuadraticOracle(NodeOracle):
    """f_i(x) = (1/2) ||B_i x - c_i||^2 with additive Gaussian gradient noise.

    Noise has per-coordinate std sigma/sqrt(d) so E||noise||^2 = sigma^2.
    """

    def __init__(self, B: np.ndarray, c: np.ndarray, sigma: float):
        self.B = np.asarray(B, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.sigma = float(sigma)
        self.d = self.B.shape[1]

    def value(self, x: np.ndarray) -> float:
        resid = self.B @ x - self.c
        return 0.5 * float(resid @ resid)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.B.T @ (self.B @ x - self.c)

    def batched_grad(self, x, r, rng):
        g = self.grad(x)
        if self.sigma == 0.0:
            return g
        noise = rng.standard_normal((r, self.d)).mean(axis=0)
        return g + (self.sigma / math.sqrt(self.d)) * noise


@dataclass
class QuadraticInstance:
    """Per-node least-squares blocks B_i, c_i with known global optimum."""

    Bs: list[np.ndarray]
    cs: list[np.ndarray]
    sigma: np.ndarray

    mu_i: np.ndarray = field(init=False)
    L_i: np.ndarray = field(init=False)
    x_star: np.ndarray = field(init=False)
    f_star: float = field(init=False)

    def __post_init__(self) -> None:
        if len(self.Bs) != len(self.cs) or not self.Bs:
            raise ProblemError("need matching nonempty lists of B_i and c_i")
        self.Bs = [np.asarray(B, dtype=float) for B in self.Bs]
        self.cs = [np.asarray(c, dtype=float) for c in self.cs]
        self.sigma = np.broadcast_to(
            np.asarray(self.sigma, dtype=float), (len(self.Bs),)
        ).copy()
        d = self.Bs[0].shape[1]
        mu, L = [], []
        H = np.zeros((d, d))
        rhs = np.zeros(d)
        for B, c in zip(self.Bs, self.cs):
            if B.shape[1] != d:
                raise ProblemError("all B_i must share the column dimension")
            if B.shape[0] != c.shape[0]:
                raise ProblemError("B_i rows must match c_i length")
            evals = np.linalg.eigvalsh(B.T @ B)
            if evals[0] <= 0.0:
                raise ProblemError("B_i must have full column rank (mu_i > 0)")
            mu.append(float(evals[0]))
            L.append(float(evals[-1]))
            H += B.T @ B
            rhs += B.T @ c
        self.mu_i = np.array(mu)
        self.L_i = np.array(L)
        self.x_star = np.linalg.solve(H, rhs)
        self.f_star = self.f(self.x_star)

    @property
    def n(self) -> int:
        return len(self.Bs)

    @property
    def dim(self) -> int:
        return self.Bs[0].shape[1]

    def node_value(self, i: int, x: np.ndarray) -> float:
        resid = self.Bs[i] @ x - self.cs[i]
        return 0.5 * float(resid @ resid)

    def node_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.Bs[i].T @ (self.Bs[i] @ x - self.cs[i])

    def f(self, x: np.ndarray) -> float:
        return sum(self.node_value(i, x) for i in range(self.n)) / self.n

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for i in range(self.n):
            g += self.node_grad(i, x)
        return g / self.n

    def constants(self) -> ProblemConstants:
        # Gaussian noise is unbounded, so the strict max-over-samples
        # gradient norm at the optimum does not exist; a 3-sigma proxy is
        # used for the planner's log-scale constant.
        m_xi = max(
            float(np.linalg.norm(self.node_grad(i, self.x_star))) + 3.0 * self.sigma[i]
            for i in range(self.n)
        )
        return ProblemConstants(
            mu_i=self.mu_i,
            L_i=self.L_i,
            sigma_i=self.sigma,
            L_xi=float(self.L_i.max()),
            M_xi=m_xi,
        )

    def oracle(self, i: int) -> QuadraticOracle:
        if not (0 <= i < self.n):
            raise ProblemError(f"node index {i} out of range")
        return QuadraticOracle(self.Bs[i], self.cs[i], self.sigma[i])

    def oracles(self) -> list[QuadraticOracle]:
        return [self.oracle(i) for i in range(self.n)]


def gen_quadratic(
    n: int,
    d: int,
    kappa_target: float,
    seed: int,
    sigma: float | np.ndarray = 0.0,
    spread: float = 1.0,
) -> QuadraticInstance:
    """Seeded random quadratic with global condition number kappa_target.

    Every node's spectrum spans [kappa_target^-1, 1] up to a per-node scale
    factor, which makes L_g / mu_g equal kappa_target exactly while local
    constants stay heterogeneous.  ``spread`` controls how far apart the
    per-node minimizers sit.
    """
    if n < 1 or d < 1:
        raise ProblemError(f"need n, d >= 1, got n={n}, d={d}")
    if kappa_target < 1.0:
        raise ProblemError(f"kappa_target must be >= 1, got {kappa_target}")
    if d == 1 and kappa_target > 1.0:
        raise ProblemError("a 1-d quadratic always has condition number 1")
    rng = np.random.default_rng(seed)
    mu_star = 1.0 / kappa_target
    svals = np.sqrt(np.geomspace(mu_star, 1.0, d))
    x_base = rng.standard_normal(d)
    Bs, cs = [], []
    for _ in range(n):
        scale = rng.uniform(0.8, 1.2)
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        P, _ = np.linalg.qr(rng.standard_normal((d, d)))
        B = scale * (Q * svals) @ P.T
        x_target = x_base + spread * rng.standard_normal(d)
        Bs.append(B)
        cs.append(B @ x_target)
    return QuadraticInstance(Bs=Bs, cs=cs, sigma=np.asarray(sigma, dtype=float))


def quadratic_oracle(instance: QuadraticInstance, i: int) -> QuadraticOracle:
    return instance.oracle(i)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Labeled rows with sparse features; labels are -1/+1 floats."""

    labels: np.ndarray
    features: sp.csr_matrix
    d: int

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=float)
        if self.labels.ndim != 1:
            raise ProblemError("labels must be a 1-d array")
        if self.features.shape[0] != self.labels.size:
            raise ProblemError("label count must match feature rows")
        if not set(np.unique(self.labels)) <= {-1.0, 1.0}:
            raise ProblemError("labels must be -1 or +1")

    @property
    def n_rows(self) -> int:
        return int(self.labels.size)

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            labels=self.labels[indices],
            features=self.features[indices],
            d=self.d,
        )


def parse_libsvm(path: str | Path) -> Dataset:
    """Parse LIBSVM text: one `label idx:val idx:val ...` row per line.

    Indices are 1-based in the file and converted to 0-based columns; the
    dimension is the largest index seen.  Files with {0, 1} labels are
    mapped to {-1, +1}.
    """
    path = Path(path)
    labels: list[float] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    max_idx = 0
    with path.open("r", encoding="utf-8") as fh:
        row = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError as e:
                raise ProblemError(f"{path}:{lineno}: bad label {parts[0]!r}") from e
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as e:
                    raise ProblemError(
                        f"{path}:{lineno}: bad feature token {tok!r}"
                    ) from e
                if idx < 1:
                    raise ProblemError(f"{path}:{lineno}: index {idx} must be >= 1")
                rows.append(row)
                cols.append(idx - 1)
                vals.append(val)
                max_idx = max(max_idx, idx)
            row += 1
    if row == 0:
        raise ProblemError(f"{path}: empty dataset")
    y = np.asarray(labels)
    uniq = set(np.unique(y))
    if uniq <= {0.0, 1.0}:
        y = np.where(y == 0.0, -1.0, 1.0)
    elif not uniq <= {-1.0, 1.0}:
        raise ProblemError(f"{path}: labels must be in {{0,1}} or {{-1,+1}}, got {sorted(uniq)}")
    X = sp.csr_matrix(
        (vals, (rows, cols)), shape=(row, max_idx), dtype=float
    )
    return Dataset(labels=y, features=X, d=max_idx)


def partition(dataset: Dataset, n: int, seed: int) -> list[Dataset]:
    """Seeded shuffle, then contiguous split into n shards (sizes differ <= 1)."""
    if n < 1:
        raise ProblemError(f"n must be >= 1, got {n}")
    if n > dataset.n_rows:
        raise ProblemError(
            f"cannot split {dataset.n_rows} rows across {n} nodes"
        )
    perm = np.random.default_rng(seed).permutation(dataset.n_rows)
    return [dataset.subset(chunk) for chunk in np.array_split(perm, n)]


def synthetic_classification(
    n_rows: int, d: int, seed: int, *, scale: float = 1.0, separation: float = 1.0
) -> Dataset:
    """Synthetic two-class dataset (overlapping Gaussian clouds).

    Stands in for LIBSVM data in tests and demos; produced in the same
    sparse row format.
    """
    if n_rows < 2 or d < 1:
        raise ProblemError("need n_rows >= 2 and d >= 1")
    rng = np.random.default_rng(seed)
    y = np.where(rng.uniform(size=n_rows) < 0.5, -1.0, 1.0)
    center = rng.standard_normal(d) / math.sqrt(d)
    X = scale * (rng.standard_normal((n_rows, d)) + separation * np.outer(y, center))
    return Dataset(labels=y, features=sp.csr_matrix(X), d=d)


# ---------------------------------------------------------------------------
# logistic regression


class LogisticOracle(NodeOracle):
    """Shard-average logistic loss with ridge term (theta/2)||x||^2.

    ``sample_grad`` evaluates the gradient on one uniformly drawn shard
    row (plus the ridge term), which is unbiased for the shard average.
    """

    def __init__(self, A: sp.csr_matrix, b: np.ndarray, theta: float):
        self.A = A
        self.b = np.asarray(b, dtype=float)
        self.theta = float(theta)
        self.m = self.b.size

    def value(self, x: np.ndarray) -> float:
        z = self.b * (self.A @ x)
        return float(np.logaddexp(0.0, -z).mean()) + 0.5 * self.theta * float(x @ x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        z = self.A @ x
        coef = -self.b * expit(-self.b * z)
        return np.asarray(self.A.T @ coef) / self.m + self.theta * x

    def batched_grad(self, x, r, rng):
        idx = rng.integers(0, self.m, size=r)
        A_sub = self.A[idx]
        z = A_sub @ x
        bsub = self.b[idx]
        coef = -bsub * expit(-bsub * z)
        return np.asarray(A_sub.T @ coef) / r + self.theta * x


def _per_sample_grad_stats(
    A: sp.csr_matrix, b: np.ndarray, theta: float, x: np.ndarray
) -> tuple[float, float]:
    """(population variance, max norm) of per-sample gradients at x.

    Per-sample gradient: g_j = coef_j a_j + theta x with
    coef_j = -b_j sigmoid(-b_j <a_j, x>).  Norms are expanded in closed
    form, so the m x d gradient matrix is never materialized.
    """
    z = A @ x
    coef = -b * expit(-b * z)
    row_sq = np.asarray(A.multiply(A).sum(axis=1)).ravel()
    xx = float(x @ x)
    norms_sq = coef**2 * row_sq + 2.0 * theta * coef * z + theta**2 * xx
    mean_g = np.asarray(A.T @ coef).ravel() / b.size + theta * x
    var = float(norms_sq.mean() - mean_g @ mean_g)
    return max(var, 0.0), float(np.sqrt(max(norms_sq.max(), 0.0)))


@dataclass
class LogisticInstance:
    """Node shards of a classification dataset plus ridge coefficient."""

    shards: list[Dataset]
    theta: float
    sigma_probe: np.ndarray | None = None
    sigma_override: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.theta <= 0.0:
            raise ProblemError(f"theta must be positive, got {self.theta}")
        if not self.shards:
            raise ProblemError("need at least one shard")
        if any(s.n_rows == 0 for s in self.shards):
            raise ProblemError("every node needs a nonempty shard")
        self._d = self.shards[0].d
        if any(s.d != self._d for s in self.shards):
            raise ProblemError("all shards must share the feature dimension")
        self._x_star: np.ndarray | None = None
        self._f_star: float | None = None
        L = []
        for s in self.shards:
            row_sq = np.asarray(s.features.multiply(s.features).sum(axis=1)).ravel()
            L.append(float(row_sq.max()) / 4.0 + self.theta)
        self.L_i = np.array(L)
        self.mu_i = np.full(len(self.shards), self.theta)
        probe = (
            np.zeros(self._d) if self.sigma_probe is None else np.asarray(self.sigma_probe)
        )
        if self.sigma_override is not None:
            self.sigma_i = np.broadcast_to(
                np.asarray(self.sigma_override, dtype=float), (len(self.shards),)
            ).copy()
        else:
            # exact finite-population std of per-sample gradients at the
            # probe point; documented as an estimate of the uniform bound
            self.sigma_i = np.array(
                [
                    math.sqrt(
                        _per_sample_grad_stats(
                            s.features, s.labels, self.theta, probe
                        )[0]
                    )
                    for s in self.shards
                ]
            )

    @property
    def n(self) -> int:
        return len(self.shards)

    @property
    def dim(self) -> int:
        return self._d

    def node_value(self, i: int, x: np.ndarray) -> float:
        return self.oracle(i).value(x)

    def node_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.oracle(i).grad(x)

    def f(self, x: np.ndarray) -> float:
        return sum(self.oracle(i).value(x) for i in range(self.n)) / self.n

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for i in range(self.n):
            g += self.oracle(i).grad(x)
        return g / self.n

    def oracle(self, i: int) -> LogisticOracle:
        if not (0 <= i < self.n):
            raise ProblemError(f"node index {i} out of range")
        s = self.shards[i]
        return LogisticOracle(s.features, s.labels, self.theta)

    def oracles(self) -> list[LogisticOracle]:
        return [self.oracle(i) for i in range(self.n)]

    def reference_solution(
        self, tol: float = 1e-10, max_iter: int = 100000
    ) -> tuple[np.ndarray, float]:
        """Deterministic full-gradient solve of the global problem.

        Runs the exact-oracle accelerated iteration until the gradient norm
        drops below ``tol``; the result is cached.
        """
        if self._x_star is None:
            L_g = float(self.L_i.mean())
            coeffs = CoefficientSchedule(L=L_g, mu=self.theta)
            rng = np.random.default_rng(0)
            state = AgdState.initial(np.zeros(self.dim))
            exact = lambda y, r, g: self.grad_f(y)  # noqa: E731
            for _ in range(max_iter):
                if np.linalg.norm(self.grad_f(state.x)) <= tol:
                    break
                state = agd_step(state, coeffs, exact, 1, rng)
            self._x_star = state.x
            self._f_star = self.f(state.x)
        return self._x_star, self._f_star

    @property
    def x_star(self) -> np.ndarray:
        return self.reference_solution()[0]

    @property
    def f_star(self) -> float:
        return self.reference_solution()[1]

    def constants(self) -> ProblemConstants:
        x_star, _ = self.reference_solution()
        m_xi = max(
            _per_sample_grad_stats(s.features, s.labels, self.theta, x_star)[1]
            for s in self.shards
        )
        l_xi = max(
            float(
                np.asarray(s.features.multiply(s.features).sum(axis=1)).max()
            )
            / 4.0
            + self.theta
            for s in self.shards
        )
        return ProblemConstants(
            mu_i=self.mu_i,
            L_i=self.L_i,
            sigma_i=self.sigma_i,
            L_xi=l_xi,
            M_xi=m_xi,
        )


def make_logistic_instance(
    dataset: Dataset,
    n_nodes: int,
    theta: float,
    partition_seed: int,
    sigma: np.ndarray | None = None,
) -> LogisticInstance:
    """Partition a dataset across nodes and wrap it as a logistic instance."""
    shards = partition(dataset, n_nodes, partition_seed)
    return LogisticInstance(shards=shards, theta=theta, sigma_override=sigma)


def logistic_oracle(instance: LogisticInstance, i: int) -> LogisticOracle:
    return instance.oracle(i)
