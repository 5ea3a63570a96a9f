"""Per-group scatter statistics and unbiased variance functionals.

Given the compressed residuals of each group, these functions produce the
scatter matrix S_i and fourth-order statistic Q_i, the tau coefficients of
the entrywise-squared residual maker, unbiased estimates of tr(Psi_i^2) and
tr(Psi_i Psi_j) for the compressed covariances Psi_i, and finally the
variance estimate sigma0_hat^2 of the trace statistic under the null.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignSpec, ProjectionSet, build_projections, numerical_rank, projector
from .errors import ConfigError, DegenerateGroupError, DesignError, EstimatorUndefinedError


@dataclass(frozen=True, eq=False)
class GroupedSample:
    """An N x p observation matrix with rows grouped contiguously."""

    X: np.ndarray
    group_sizes: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.size == 0:
            raise ConfigError(f"X must be a nonempty 2-D matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ConfigError("X contains non-finite entries")
        object.__setattr__(self, "X", X)
        sizes = tuple(int(n) for n in self.group_sizes)
        if len(sizes) == 0 or any(n < 1 for n in sizes):
            raise ConfigError(f"group sizes must be positive, got {sizes}")
        if sum(sizes) != X.shape[0]:
            raise ConfigError(
                f"group sizes sum to {sum(sizes)} but X has {X.shape[0]} rows")
        object.__setattr__(self, "group_sizes", sizes)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != len(sizes):
                raise ConfigError(
                    f"{len(labels)} labels for {len(sizes)} groups")
            object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def g(self) -> int:
        return len(self.group_sizes)

    @property
    def group_offsets(self) -> tuple[int, ...]:
        offs = np.concatenate(([0], np.cumsum(self.group_sizes[:-1])))
        return tuple(int(o) for o in offs)

    def block(self, i: int) -> np.ndarray:
        off = self.group_offsets[i]
        return self.X[off:off + self.group_sizes[i]]


@dataclass(frozen=True, eq=False)
class VarianceEstimate:
    """Everything the null-variance estimate is made of: per-group S_i, Q_i,
    tau coefficients, design-block ranks, the unbiased a2/b estimates, the
    block-expanded matrix v_hat, and sigma0_sq_hat itself (which may be
    non-positive for general designs; the sign is preserved, never clamped).
    """

    s: tuple[np.ndarray, ...]
    q: np.ndarray
    tau: np.ndarray
    k: np.ndarray
    a2: np.ndarray
    b: np.ndarray
    v: np.ndarray
    sigma0_sq: float


def group_projector(A_i) -> np.ndarray:
    """Projector onto the column space of a per-group design block; an
    all-zero block (the group contributes nothing to the mean) maps to the
    zero projector."""
    A_i = np.asarray(A_i, dtype=float)
    if not np.any(A_i):
        return np.zeros((A_i.shape[0], A_i.shape[0]))
    return projector(A_i)


def group_residual_scatter(X_i, A_i, compressor, *, group: int = 0):
    """Compressed residual scatter of one group.

    Returns (S_i, Q_i, k_i) where S_i is the r x r scatter of the compressed
    residuals divided by N_i - k_i, Q_i the matching fourth-order statistic,
    and k_i the numerical rank of the group design block.
    """
    X_i = np.asarray(X_i, dtype=float)
    A_i = np.asarray(A_i, dtype=float)
    n_i = X_i.shape[0]
    if A_i.shape[0] != n_i:
        raise DesignError(
            f"group {group}: A block has {A_i.shape[0]} rows but data has {n_i}")
    k_i = numerical_rank(A_i)
    m = n_i - k_i
    if m < 1:
        raise DegenerateGroupError(
            group, f"needs N_i > k_i (N_i={n_i}, k_i={k_i})")
    resid = X_i - group_projector(A_i) @ X_i
    Y = resid @ compressor.T
    S = (Y.T @ Y) / m
    S = (S + S.T) / 2.0
    Q = float(np.sum(np.sum(Y * Y, axis=1) ** 2)) / m
    return S, Q, k_i


def tau_coefficients(pi_a_i, n_i: int, k_i: int, *, group: int = 0):
    """Trace coefficients of the entrywise-squared residual maker.

    tau1 and tau2 are the traces of the first and second powers of
    (I - pi_a_i) o (I - pi_a_i); tau3 is the derived denominator of the
    unbiased a2 estimator and must not vanish.
    """
    pi_a_i = np.asarray(pi_a_i, dtype=float)
    C = np.eye(n_i) - pi_a_i
    Csq = C * C
    t1 = float(np.trace(Csq))
    t2 = float(np.sum(Csq * Csq))
    m = n_i - k_i
    if m < 2:
        raise DegenerateGroupError(
            group, f"needs N_i - k_i >= 2 (N_i={n_i}, k_i={k_i})")
    t3 = (m - 1.0) / (m * m) * (m * (m + 2.0) * t2 - 3.0 * t1 * t1)
    if abs(t3) <= 1e-9 * m * m:
        raise EstimatorUndefinedError(
            group, f"tau3 vanishes for N_i={n_i}, k_i={k_i}; "
                   "the a2 estimator is undefined")
    return t1, t2, t3


def a2_hat(S_i, Q_i: float, tau_i, n_i: int, k_i: int) -> float:
    """Unbiased estimate of tr(Psi_i^2) from the group scatter statistics.

    May be negative for general designs; callers decide how to handle the
    sign (the test's decision rule uses an indicator).
    """
    m = n_i - k_i
    if m < 2:
        raise DegenerateGroupError(0, f"needs N_i - k_i >= 2 (N_i={n_i}, k_i={k_i})")
    t1, t2, t3 = tau_i
    tr_s = float(np.trace(S_i))
    tr_s2 = float(np.sum(S_i * S_i))
    num = ((m * m * t2 - t1 * t1) * tr_s2
           - (m * t2 - t1 * t1) * tr_s * tr_s
           - (m - 1.0) * t1 * Q_i)
    return num / (m * t3)


def b_hat(S_i, S_j) -> float:
    """Unbiased estimate tr(S_i S_j) of tr(Psi_i Psi_j) for distinct groups."""
    S_i = np.asarray(S_i, dtype=float)
    S_j = np.asarray(S_j, dtype=float)
    if S_i.shape != S_j.shape or S_i.ndim != 2 or S_i.shape[0] != S_i.shape[1]:
        raise ValueError(f"incompatible scatter shapes {S_i.shape} and {S_j.shape}")
    return float(np.sum(S_i * S_j.T))


def v_hat(a2_hats, b_hats, group_sizes) -> np.ndarray:
    """Block-constant N x N matrix with a2 estimates on diagonal blocks and
    b estimates on off-diagonal blocks."""
    a2 = np.asarray(a2_hats, dtype=float).ravel()
    b = np.asarray(b_hats, dtype=float)
    g = a2.shape[0]
    if b.shape != (g, g):
        raise ValueError(f"b_hats must be {g}x{g}, got {b.shape}")
    coef = b.copy()
    np.fill_diagonal(coef, a2)
    idx = np.repeat(np.arange(g), np.asarray(group_sizes, dtype=int))
    return coef[np.ix_(idx, idx)]


def sigma0_hat(omega, v) -> float:
    """Null-variance estimate 2 tr((omega o omega) v).

    The value may be non-positive for general designs; it is reported as-is.
    """
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)
    return 2.0 * float(np.sum(omega * omega * v))


def estimate_variance(sample: GroupedSample, design: DesignSpec,
                      projections: ProjectionSet | None = None) -> VarianceEstimate:
    """Full variance-estimation pipeline over all groups of a sample."""
    if tuple(sample.group_sizes) != tuple(design.group_sizes):
        raise ConfigError(
            f"sample group sizes {sample.group_sizes} do not match design "
            f"group sizes {design.group_sizes}")
    if sample.p != design.p:
        raise ConfigError(
            f"data has p={sample.p} response columns but design B has "
            f"p={design.p} rows")
    proj = projections if projections is not None else build_projections(design)
    g = design.g
    s_list: list[np.ndarray] = []
    q = np.empty(g)
    k = np.empty(g, dtype=int)
    tau = np.empty((g, 3))
    a2 = np.empty(g)
    for i in range(g):
        X_i = sample.block(i)
        A_i = design.A_block(i)
        S_i, Q_i, k_i = group_residual_scatter(X_i, A_i, proj.compressor, group=i)
        n_i = design.group_sizes[i]
        if n_i - k_i < 2:
            raise DegenerateGroupError(
                i, f"needs N_i - k_i >= 2 (N_i={n_i}, k_i={k_i})")
        tau_i = tau_coefficients(group_projector(A_i), n_i, k_i, group=i)
        s_list.append(S_i)
        q[i] = Q_i
        k[i] = k_i
        tau[i] = tau_i
        a2[i] = a2_hat(S_i, Q_i, tau_i, n_i, k_i)
    b = np.zeros((g, g))
    for i in range(g):
        for j in range(i + 1, g):
            b[i, j] = b[j, i] = b_hat(s_list[i], s_list[j])
    v = v_hat(a2, b, design.group_sizes)
    sigma0 = sigma0_hat(proj.omega, v)
    return VarianceEstimate(s=tuple(s_list), q=q, tau=tau, k=k, a2=a2, b=b,
                            v=v, sigma0_sq=sigma0)
