"""Error generation and Monte Carlo size/power experiments.

Error distributions all have mean zero and identity covariance per
component and satisfy the vanishing-odd-mixed-fourth-moment requirement,
either through ellipticity or through independent standardized components.
Replication j of a run draws from an independent counter-based substream
keyed by (seed, j), so serial and thread-parallel executions produce
bitwise-identical summaries.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from math import sqrt

import numpy as np
from scipy.stats import kstest

from .design import DesignSpec
from .errors import ConfigError
from .scenarios import Scenario
from .trace_test import (
    MeanModel,
    TraceTestEngine,
    _decide,
    asymptotic_power,
    sigma_full,
    true_q,
)

_MASK64 = (1 << 64) - 1

DISTRIBUTION_KINDS = ("gaussian", "elliptical_t", "standardized_gamma", "rademacher")
COVARIANCE_KINDS = ("identity", "compound_symmetry", "ar1", "diagonal_ramp")


def _substream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for one replication, keyed by (seed, index)."""
    key = (int(seed) & _MASK64) + (int(index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ErrorDistribution:
    """A p-variate error generator with mean 0 and identity covariance."""

    kind: str
    df: float | None = None
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}; "
                              f"choose from {DISTRIBUTION_KINDS}")
        if self.kind == "elliptical_t":
            if self.df is None or not self.df > 4:
                raise ConfigError(
                    f"elliptical_t needs df > 4 for finite fourth moments, got {self.df}")
        elif self.kind == "standardized_gamma":
            if self.shape is None or not self.shape > 0:
                raise ConfigError(f"standardized_gamma needs shape > 0, got {self.shape}")

    @classmethod
    def gaussian(cls) -> "ErrorDistribution":
        return cls(kind="gaussian")

    @classmethod
    def elliptical_t(cls, df: float) -> "ErrorDistribution":
        return cls(kind="elliptical_t", df=float(df))

    @classmethod
    def standardized_gamma(cls, shape: float) -> "ErrorDistribution":
        return cls(kind="standardized_gamma", shape=float(shape))

    @classmethod
    def rademacher(cls) -> "ErrorDistribution":
        return cls(kind="rademacher")

    @property
    def fourth_moment_bound(self) -> float:
        """max_i E[z_i^4] for a single standardized component."""
        if self.kind == "gaussian":
            return 3.0
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "standardized_gamma":
            return 3.0 + 6.0 / self.shape
        return 3.0 * (self.df - 2.0) / (self.df - 4.0)

    def sample(self, rng: np.random.Generator, n: int, p: int) -> np.ndarray:
        """n i.i.d. rows of the standardized p-variate distribution."""
        if self.kind == "gaussian":
            return rng.standard_normal((n, p))
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=(n, p)).astype(float) * 2.0 - 1.0
        if self.kind == "standardized_gamma":
            g = rng.standard_gamma(self.shape, size=(n, p))
            return (g - self.shape) / sqrt(self.shape)
        y = rng.standard_normal((n, p))
        u = rng.chisquare(self.df, size=n)
        return y * np.sqrt((self.df - 2.0) / u)[:, None]


def sample_errors(dist: ErrorDistribution, n: int, p: int, seed: int) -> np.ndarray:
    """Draw an n x p matrix of standardized error rows from a fresh stream."""
    return dist.sample(_substream(seed, 0), int(n), int(p))


@dataclass(frozen=True)
class CovarianceSpec:
    """Parametric covariance structure with a cached symmetric square root."""

    kind: str
    rho: float | None = None
    lo: float | None = None
    hi: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ConfigError(f"unknown covariance kind {self.kind!r}; "
                              f"choose from {COVARIANCE_KINDS}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if self.kind in ("compound_symmetry", "ar1"):
            if self.rho is None or not -1.0 < self.rho < 1.0:
                raise ConfigError(f"{self.kind} needs rho in (-1, 1), got {self.rho}")
        if self.kind == "diagonal_ramp":
            if self.lo is None or self.hi is None or not 0 < self.lo <= self.hi:
                raise ConfigError(
                    f"diagonal_ramp needs 0 < lo <= hi, got lo={self.lo}, hi={self.hi}")

    def matrix(self, p: int) -> np.ndarray:
        p = int(p)
        if self.kind == "identity":
            S = np.eye(p)
        elif self.kind == "compound_symmetry":
            S = (1.0 - self.rho) * np.eye(p) + self.rho * np.ones((p, p))
        elif self.kind == "ar1":
            idx = np.arange(p)
            S = self.rho ** np.abs(idx[:, None] - idx[None, :])
        else:
            S = np.diag(np.linspace(self.lo, self.hi, p))
        return self.scale * S

    def sqrt(self, p: int) -> np.ndarray:
        return _covariance_sqrt(self, int(p))


@lru_cache(maxsize=64)
def _covariance_sqrt(spec: CovarianceSpec, p: int) -> np.ndarray:
    S = spec.matrix(p)
    w, V = np.linalg.eigh(S)
    if w[0] <= 0.0:
        raise ConfigError(
            f"{spec.kind} covariance is not positive definite at p={p} "
            f"(min eigenvalue {w[0]:.3e})")
    root = (V * np.sqrt(w)) @ V.T
    return (root + root.T) / 2.0


@dataclass(frozen=True)
class SimulationSummary:
    """Aggregates of one Monte Carlo run."""

    replications: int
    rejection_rate: float
    mc_standard_error: float
    z_mean: float
    z_variance: float
    ks_distance: float
    predicted_power: float
    degenerate_count: int
    seed: int


def _sigma_factor(S: np.ndarray):
    """(mode, payload) factorization of a covariance for cheap sampling."""
    d = np.diag(S).copy()
    if np.array_equal(S, np.diag(d)):
        if d.size and np.all(d == d[0]):
            return ("scalar", sqrt(float(d[0])))
        return ("diag", np.sqrt(d))
    w, V = np.linalg.eigh((S + S.T) / 2.0)
    if w[0] <= 0.0:
        raise ValueError(f"covariance is not positive definite (min eigenvalue {w[0]:.3e})")
    root = (V * np.sqrt(w)) @ V.T
    return ("full", (root + root.T) / 2.0)


def _apply_factor(Z: np.ndarray, factor) -> np.ndarray:
    mode, payload = factor
    if mode == "scalar":
        return Z if payload == 1.0 else Z * payload
    if mode == "diag":
        return Z * payload[None, :]
    return Z @ payload


def resolve_threads(threads: int | None) -> int:
    """Thread count from the argument, else GMANOVA_THREADS, else auto."""
    if threads is None:
        env = os.environ.get("GMANOVA_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"GMANOVA_THREADS must be an integer, got {env!r}") from exc
        else:
            threads = 0
    threads = int(threads)
    if threads < 0:
        raise ConfigError(f"thread count must be non-negative, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def monte_carlo(design, model: MeanModel, distributions, alpha: float = 0.05,
                reps: int = 1000, seed: int = 0,
                threads: int | None = None) -> SimulationSummary:
    """Size/power experiment: draw groupwise errors, form the data matrix,
    run the prepared test, and aggregate.

    distributions is one ErrorDistribution per group (a single one is
    broadcast).  Identical (arguments, seed) produce identical summaries
    regardless of the thread count.
    """
    if isinstance(design, Scenario):
        design = design.design
    if not isinstance(design, DesignSpec):
        raise ConfigError(f"expected a DesignSpec or Scenario, got {type(design)!r}")
    reps = int(reps)
    if reps < 100:
        raise ConfigError(f"need at least 100 replications, got {reps}")
    if isinstance(distributions, ErrorDistribution):
        distributions = [distributions]
    dists = list(distributions)
    if len(dists) == 1:
        dists = dists * design.g
    if len(dists) != design.g:
        raise ConfigError(f"{len(dists)} distributions for {design.g} groups")

    engine = TraceTestEngine(design, alpha)
    q = true_q(model.theta, design)
    sigma2, sigma0_sq = sigma_full(model, design, engine.projections)
    predicted = asymptotic_power(q, sigma2, sigma0_sq, alpha)

    mean_matrix = design.A @ model.theta @ design.B.T
    has_mean = bool(np.any(mean_matrix))
    factors = [_sigma_factor(S) for S in model.sigmas]
    slices = [design.group_slice(i) for i in range(design.g)]
    N, p = design.N, design.p

    z_vals = np.empty(reps)
    rejects = np.zeros(reps, dtype=bool)
    degenerate = np.zeros(reps, dtype=bool)

    def run_one(j: int) -> None:
        rng = _substream(seed, j)
        X = np.empty((N, p))
        for i, sl in enumerate(slices):
            Z = dists[i].sample(rng, design.group_sizes[i], p)
            X[sl] = _apply_factor(Z, factors[i])
        if has_mean:
            X += mean_matrix
        t, _, _, s0 = engine.statistics(X)
        z, _, rej, degen = _decide(t, s0, engine.alpha)
        z_vals[j] = z
        rejects[j] = rej
        degenerate[j] = degen

    n_threads = resolve_threads(threads)
    if n_threads <= 1:
        for j in range(reps):
            run_one(j)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(run_one, range(reps), chunksize=max(1, reps // (8 * n_threads))))

    rate = float(np.mean(rejects))
    return SimulationSummary(
        replications=reps,
        rejection_rate=rate,
        mc_standard_error=sqrt(rate * (1.0 - rate) / reps),
        z_mean=float(np.mean(z_vals)),
        z_variance=float(np.var(z_vals)),
        ks_distance=float(kstest(z_vals, "norm").statistic),
        predicted_power=predicted,
        degenerate_count=int(np.sum(degenerate)),
        seed=int(seed),
    )


def canonical_direction(design: DesignSpec) -> np.ndarray:
    """A unit-scale mean direction guaranteed to violate the null: the outer
    product of the first rows of L and R."""
    u = design.L[0]
    v = design.R[0]
    return np.outer(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))


def calibrate_signal_ray(design: DesignSpec, direction, sigmas,
                         snr: float) -> np.ndarray:
    """Scale a mean direction so q / sqrt(sigma^2) equals snr exactly.

    Both the signal and the mean-term variance scale quadratically along the
    ray, so the calibration reduces to one quadratic equation.
    """
    snr = float(snr)
    if snr < 0:
        raise ConfigError(f"signal-to-noise target must be non-negative, got {snr}")
    direction = np.asarray(direction, dtype=float)
    if snr == 0.0:
        return np.zeros_like(direction)
    q0 = true_q(direction, design)
    if not q0 > 0.0:
        raise ConfigError("signal direction is annihilated by (L, R); "
                          "it cannot generate power")
    sigma2_0, sigma0_sq = sigma_full(MeanModel(direction, tuple(sigmas)), design)
    v0 = max(sigma2_0 - sigma0_sq, 0.0)
    c2 = (snr ** 2 * v0 + sqrt(snr ** 4 * v0 ** 2
                               + 4.0 * q0 ** 2 * snr ** 2 * sigma0_sq)) / (2.0 * q0 ** 2)
    return sqrt(c2) * direction
