"""Covariance matrices, Wald intervals, and bootstrap probability bands.

Wald intervals use the exact standard-normal quantile.  Bootstrap bands
resample subjects with replacement within each dose arm (arm sizes are part
of the trial design and stay fixed), refit the chosen estimator per
replicate, and take percentile bands of the fitted response probability at
the requested doses.  Replicate streams are keyed by ``(seed, r)``, so the
bands are deterministic regardless of execution order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .estimators import (
    EstimatorKind,
    FitStatus,
    SingularInformation,
    SolverConfig,
    fit,
)
from .model import EmaxParams, ObservationSet, hessian, predict_prob
from .estimators import _penalized_curvature, _solve_psd

__all__ = [
    "WaldInterval",
    "BootstrapBand",
    "InvalidLevel",
    "TooManyFailures",
    "covariance",
    "wald_ci",
    "bootstrap_bands",
]


class InvalidLevel(ValueError):
    """Raised when a confidence level is outside the open interval (0, 1)."""


class TooManyFailures(RuntimeError):
    """Raised when over half of the bootstrap refits fail to estimate."""

    def __init__(self, n_failed: int, n_boot: int):
        self.n_failed = n_failed
        self.n_boot = n_boot
        super().__init__(
            f"{n_failed} of {n_boot} bootstrap refits failed to estimate; "
            "bands withheld"
        )


@dataclass(frozen=True)
class WaldInterval:
    """Symmetric normal-approximation interval for one parameter."""

    estimate: float
    std_err: float
    lower: float
    upper: float
    level: float = 0.95

    def __post_init__(self) -> None:
        if self.std_err <= 0:
            raise ValueError("std_err must be positive")
        if not self.lower < self.upper:
            raise ValueError("interval must have positive width")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class BootstrapBand:
    """Percentile band for the response probability at one dose."""

    dose: float
    point: float
    lower: float
    upper: float
    n_boot: int
    seed: int

    def __post_init__(self) -> None:
        if self.dose < 0:
            raise ValueError("dose must be nonnegative")
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError("band bounds must satisfy 0 <= lower <= upper <= 1")


def covariance(kind: EstimatorKind, params: EmaxParams, data: ObservationSet) -> np.ndarray:
    """Estimator-appropriate 3x3 covariance at the supplied parameter point.

    MLE, Cox-Snell, and Firth use the inverse negative log-likelihood
    Hessian.  The MPLE uses the inverse of the observed information of the
    penalized log-likelihood (the negative Jacobian of the penalized score).

    Raises
    ------
    SingularInformation
        If the relevant information matrix is not invertible.
    """
    if kind is EstimatorKind.MPLE:
        obs = -_penalized_curvature(params.as_array(), data)
        return _solve_psd(obs)
    return _solve_psd(-hessian(params, data))


def wald_ci(estimate: float, se: float, level: float = 0.95) -> WaldInterval:
    """Normal-approximation interval ``estimate ± z_{alpha/2} * se``."""
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"level must be in (0, 1), got {level}")
    if se <= 0:
        raise ValueError("se must be positive")
    z = norm.ppf(0.5 + level / 2.0)
    return WaldInterval(
        estimate=float(estimate),
        std_err=float(se),
        lower=float(estimate - z * se),
        upper=float(estimate + z * se),
        level=float(level),
    )


def _resample(data: ObservationSet, rng: np.random.Generator) -> ObservationSet:
    """Arm-stratified resample: per arm, redraw events as Binomial(n, p̂_arm).

    Resampling ``n`` subjects with replacement within an arm of observed
    event proportion ``p̂`` makes the resampled event count exactly
    Binomial(n, p̂), so the arm totals are drawn directly.
    """
    events = rng.binomial(data.n.astype(int), data.proportions)
    return ObservationSet(data.doses, data.n, events.astype(float))


def _boot_one(args) -> np.ndarray | None:
    data, kind, doses, seed, r, config = args
    rng = np.random.default_rng([seed, r])
    sample = _resample(data, rng)
    res = fit(kind, sample, config)
    if res.status is FitStatus.FailedToEstimate or res.params is None:
        return None
    return np.asarray(predict_prob(res.params, np.asarray(doses, dtype=float)))


def bootstrap_bands(
    data: ObservationSet,
    kind: EstimatorKind,
    doses,
    n_boot: int = 5000,
    seed: int = 0,
    config: SolverConfig = SolverConfig(),
    level: float = 0.95,
) -> list[BootstrapBand]:
    """Percentile bootstrap bands of the fitted probability at each dose.

    Failed refits are dropped and counted; if more than half fail the bands
    are withheld via :class:`TooManyFailures`.  Replicate ``r`` draws from
    the stream keyed by ``(seed, r)``; results are collected into a fixed
    order before the percentiles, so any execution schedule yields
    identical bands.
    """
    if n_boot < 100 and n_boot != 1:
        raise ValueError("n_boot must be at least 100 (or exactly 1 for smoke use)")
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"level must be in (0, 1), got {level}")
    doses = np.asarray(list(doses), dtype=float)
    point_fit = fit(kind, data, config)
    if point_fit.params is None:
        raise TooManyFailures(n_boot, n_boot)
    point = np.asarray(predict_prob(point_fit.params, doses))

    jobs = [(data, kind, doses, seed, r, config) for r in range(n_boot)]
    n_workers = int(os.environ.get("EMAXBR_THREADS", "1"))
    if n_workers > 1 and n_boot >= 200:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_boot_one, jobs, chunksize=64))
    else:
        results = [_boot_one(j) for j in jobs]

    kept = [r for r in results if r is not None]
    n_failed = n_boot - len(kept)
    if n_failed > 0.5 * n_boot:
        raise TooManyFailures(n_failed, n_boot)
    draws = np.vstack(kept)
    alpha = (1.0 - level) / 2.0
    lo = np.percentile(draws, 100.0 * alpha, axis=0)
    hi = np.percentile(draws, 100.0 * (1.0 - alpha), axis=0)
    return [
        BootstrapBand(
            dose=float(d),
            point=float(p),
            lower=float(min(l, p)),
            upper=float(max(u, p)),
            n_boot=n_boot,
            seed=seed,
        )
        for d, p, l, u in zip(doses, point, lo, hi)
    ]
