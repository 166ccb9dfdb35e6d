"""The four fitting procedures for the binary Emax model.

* ``fit_mle``       — damped Newton ascent on the log-likelihood.
* ``fit_cox_snell`` — analytic first-order bias subtraction after the MLE.
* ``fit_firth``     — root-finding on the modified score equations (which
  are not the gradient of any objective, so the solve is a globalized
  quasi-Newton root-finder rather than an ascent).
* ``fit_mple``      — ascent on the penalized log-likelihood whose penalty
  is half the log-determinant of the expected information.

All four share deterministic starting values, iteration control via
:class:`SolverConfig`, and a common convergence / instability taxonomy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, log_expit

from .cumulants import cumulant_bundle
from .model import (
    EmaxParams,
    ObservationSet,
    deriv_tensors,
    expected_information,
    hessian,
    log_likelihood,
    score,
)

__all__ = [
    "EstimatorKind",
    "SolverConfig",
    "FitStatus",
    "StatusReason",
    "FitResult",
    "starting_values",
    "fit_mle",
    "cox_snell_bias",
    "fit_cox_snell",
    "firth_modified_score",
    "fit_firth",
    "penalized_loglik",
    "penalized_score",
    "fit_mple",
    "fit",
    "SingularInformation",
]

# Logit-scale magnitude beyond which iterates are treated as numerically
# divergent: fitted arm probabilities are within ~2e-9 of 0/1 there, so the
# likelihood surface carries no usable information.
_DIVERGENCE_BOUND = 20.0

# Reciprocal-condition cutoff for declaring a matrix singular.
_SINGULAR_RCOND = 1e-12


class SingularInformation(np.linalg.LinAlgError):
    """Raised when an information matrix is not invertible at tolerance."""


class EstimatorKind(enum.Enum):
    MLE = "mle"
    CoxSnell = "coxsnell"
    Firth = "firth"
    MPLE = "mple"


class FitStatus(enum.Enum):
    Converged = "Converged"
    Unstable = "Unstable"
    FailedToEstimate = "FailedToEstimate"


class StatusReason(enum.Enum):
    NONE = "ok"
    NON_CONVERGENCE = "non-convergence"
    NON_FINITE = "non-finite drift"
    SINGULAR_INFORMATION = "singular information"
    BOUND_HIT = "ED50 bound hit"
    UNDEFINED_SE = "undefined standard error"
    RELATIVE_SE_EXCEEDED = "relative standard error exceeded"


@dataclass(frozen=True)
class SolverConfig:
    """Iteration control and instability thresholds.

    Attributes
    ----------
    grad_tol : float
        Stationarity tolerance on the max-abs estimating equation.
    rel_change_tol : float
        Relative parameter-change tolerance for declaring convergence.
    max_iter : int
        Iteration cap for every solver.
    ed50_upper_mult, ed50_lower_mult : float
        Instability bounds: an estimate is unstable when
        ``ed50 > upper_mult * D_max`` or ``ed50 < lower_mult * D_min_pos``.
    rel_se_threshold : float
        Instability bound on ``se / |estimate|`` per parameter.
    seed : int
        Seed reserved for stochastic restart heuristics (none are currently
        used; fits are fully deterministic).
    """

    grad_tol: float = 1e-6
    rel_change_tol: float = 1e-8
    max_iter: int = 2000
    ed50_upper_mult: float = 10.0
    ed50_lower_mult: float = 0.02
    rel_se_threshold: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grad_tol <= 0 or self.rel_change_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.ed50_upper_mult <= 0 or self.ed50_lower_mult <= 0:
            raise ValueError("ED50 bound multipliers must be positive")
        if self.rel_se_threshold <= 0:
            raise ValueError("rel_se_threshold must be positive")


@dataclass(frozen=True)
class FitResult:
    """Outcome of one estimator on one dataset.

    ``status`` is ``Converged`` only when the estimate is finite, satisfies
    its estimating equation, and has a positive-definite covariance that
    passes the stability thresholds; ``Unstable`` keeps the estimate but
    flags it; ``FailedToEstimate`` carries no usable estimate.
    """

    kind: EstimatorKind
    status: FitStatus
    status_reason: StatusReason
    iterations: int
    params: EmaxParams | None = None
    covariance: np.ndarray | None = field(default=None, repr=False)
    std_errors: np.ndarray | None = None
    base_mle: EmaxParams | None = None

    def __post_init__(self) -> None:
        if self.status is FitStatus.Converged:
            if self.params is None or self.covariance is None:
                raise ValueError("Converged results must carry params and covariance")
        if self.status is FitStatus.Unstable and self.params is None:
            raise ValueError("Unstable results must carry params")


def _solve_psd(a: np.ndarray, rcond: float = _SINGULAR_RCOND) -> np.ndarray:
    """Invert a symmetric matrix, raising SingularInformation when degenerate."""
    if not np.all(np.isfinite(a)):
        raise SingularInformation("non-finite matrix")
    if np.linalg.cond(a) > 1.0 / rcond:
        raise SingularInformation("reciprocal condition below tolerance")
    return np.linalg.inv(a)


def _phi_bounds(data: ObservationSet, config: SolverConfig) -> tuple[float, float]:
    hi = np.log(config.ed50_upper_mult * data.dmax())
    lo = np.log(config.ed50_lower_mult * data.dmin_positive())
    return lo, hi


def _classify(
    kind: EstimatorKind,
    theta: np.ndarray,
    cov: np.ndarray | None,
    iterations: int,
    data: ObservationSet,
    config: SolverConfig,
    base_mle: EmaxParams | None = None,
) -> FitResult:
    """Apply the shared instability taxonomy to a finite estimate."""
    params = EmaxParams.from_array(theta)
    lo, hi = _phi_bounds(data, config)
    if params.phi > hi or params.phi < lo:
        return FitResult(
            kind=kind,
            status=FitStatus.Unstable,
            status_reason=StatusReason.BOUND_HIT,
            iterations=iterations,
            params=params,
            covariance=cov,
            std_errors=None if cov is None else _safe_se(cov),
            base_mle=base_mle,
        )
    se = None if cov is None else _safe_se(cov)
    if se is None:
        return FitResult(
            kind=kind,
            status=FitStatus.Unstable,
            status_reason=StatusReason.UNDEFINED_SE,
            iterations=iterations,
            params=params,
            covariance=None,
            base_mle=base_mle,
        )
    if np.any(se / np.abs(theta) > config.rel_se_threshold):
        return FitResult(
            kind=kind,
            status=FitStatus.Unstable,
            status_reason=StatusReason.RELATIVE_SE_EXCEEDED,
            iterations=iterations,
            params=params,
            covariance=cov,
            std_errors=se,
            base_mle=base_mle,
        )
    return FitResult(
        kind=kind,
        status=FitStatus.Converged,
        status_reason=StatusReason.NONE,
        iterations=iterations,
        params=params,
        covariance=cov,
        std_errors=se,
        base_mle=base_mle,
    )


def _safe_se(cov: np.ndarray) -> np.ndarray | None:
    d = np.diag(cov)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        return None
    return np.sqrt(d)


def _neg_hessian_cov(theta: np.ndarray, data: ObservationSet) -> np.ndarray | None:
    params = EmaxParams.from_array(theta)
    neg_h = -hessian(params, data)
    try:
        return np.linalg.inv(neg_h)
    except np.linalg.LinAlgError:
        return None


# ---------------------------------------------------------------------------
# starting values
# ---------------------------------------------------------------------------

def starting_values(data: ObservationSet) -> EmaxParams:
    """Deterministic starting triple from a profiled grid over log ED50.

    ``e0`` starts at the continuity-corrected empirical logit of the lowest
    arm.  For each of 21 candidate ``phi`` values spanning
    ``log(0.1 * D_2)`` to ``log(5 * D_max)``, a damped two-parameter
    logistic solve on the covariate ``dose / (exp(phi) + dose)`` refits
    ``(e0, emax)``, and the best profiled log-likelihood wins.  Intercept
    and slope are clipped to the divergence bound so degenerate grid points
    cannot poison downstream solvers.
    """
    d = data.doses
    d2 = data.dmin_positive()
    dmax = data.dmax()
    e0_0 = float(np.log((data.events[0] + 0.5) / (data.n[0] - data.events[0] + 0.5)))
    best_ll, best = -np.inf, None
    for phi in np.linspace(np.log(0.1 * d2), np.log(5.0 * dmax), 21):
        u = d / (np.exp(phi) + d)
        x = np.column_stack([np.ones_like(u), u])
        ab = np.array([e0_0, 0.0])

        def ll2(coefs: np.ndarray) -> float:
            lin = x @ coefs
            return float(
                np.sum(data.events * log_expit(lin) + (data.n - data.events) * log_expit(-lin))
            )

        f2 = ll2(ab)
        for _ in range(25):
            lin = x @ ab
            pi = expit(lin)
            wt = data.n * pi * (1.0 - pi)
            grad2 = x.T @ (data.events - data.n * pi)
            hess2 = x.T @ (wt[:, None] * x)
            try:
                step = np.linalg.solve(hess2, grad2)
            except np.linalg.LinAlgError:
                break
            lam = 1.0
            for _ in range(20):
                cand = ab + lam * step
                fc = ll2(cand)
                if np.isfinite(fc) and fc >= f2:
                    ab, f2 = cand, fc
                    break
                lam /= 2.0
            else:
                break
            if np.max(np.abs(lam * step)) < 1e-8:
                break
        a, b = np.clip(ab, -_DIVERGENCE_BOUND, _DIVERGENCE_BOUND)
        ll = log_likelihood(EmaxParams(a, b, phi), data)
        if ll > best_ll:
            best_ll, best = ll, (a, b, phi)
    return EmaxParams(*best)


# ---------------------------------------------------------------------------
# MLE
# ---------------------------------------------------------------------------

def fit_mle(data: ObservationSet, config: SolverConfig = SolverConfig()) -> FitResult:
    """Maximum likelihood by damped Newton ascent with step-halving.

    Non-ascent Newton directions fall back to scaled steepest ascent.
    Iterates drifting past the divergence bound on ``|e0|`` or ``|emax|``
    (logit magnitudes at which arm probabilities are numerically 0/1) are
    declared failures, as is a singular final curvature.
    """
    theta = starting_values(data).as_array()
    f = log_likelihood(EmaxParams.from_array(theta), data)
    g = score(EmaxParams.from_array(theta), data)
    it = 0
    while it < config.max_iter:
        it += 1
        if np.max(np.abs(g)) <= config.grad_tol:
            break
        if (
            not np.all(np.isfinite(theta))
            or abs(theta[0]) > _DIVERGENCE_BOUND
            or abs(theta[1]) > _DIVERGENCE_BOUND
        ):
            return FitResult(
                kind=EstimatorKind.MLE,
                status=FitStatus.FailedToEstimate,
                status_reason=StatusReason.NON_FINITE,
                iterations=it,
            )
        h = hessian(EmaxParams.from_array(theta), data)
        try:
            step = np.linalg.solve(h, -g)
            if step @ g <= 0.0:
                step = g / max(1.0, float(np.linalg.norm(g)))
        except np.linalg.LinAlgError:
            step = g / max(1.0, float(np.linalg.norm(g)))
        lam, accepted = 1.0, False
        for _ in range(30):
            cand = theta + lam * step
            fc = log_likelihood(EmaxParams.from_array(cand), data)
            if np.isfinite(fc) and fc > f:
                accepted = True
                break
            lam /= 2.0
        if not accepted:
            if np.max(np.abs(g)) <= 1e-4:
                break
            return FitResult(
                kind=EstimatorKind.MLE,
                status=FitStatus.FailedToEstimate,
                status_reason=StatusReason.NON_CONVERGENCE,
                iterations=it,
            )
        rel_change = np.max(np.abs(cand - theta) / np.maximum(1.0, np.abs(theta)))
        theta, f = cand, fc
        g = score(EmaxParams.from_array(theta), data)
        if rel_change <= config.rel_change_tol:
            break
    else:
        return FitResult(
            kind=EstimatorKind.MLE,
            status=FitStatus.FailedToEstimate,
            status_reason=StatusReason.NON_CONVERGENCE,
            iterations=config.max_iter,
        )
    neg_h = -hessian(EmaxParams.from_array(theta), data)
    if not np.all(np.isfinite(neg_h)) or np.linalg.cond(neg_h) > 1.0 / _SINGULAR_RCOND:
        return FitResult(
            kind=EstimatorKind.MLE,
            status=FitStatus.FailedToEstimate,
            status_reason=StatusReason.SINGULAR_INFORMATION,
            iterations=it,
        )
    cov = np.linalg.inv(neg_h)
    return _classify(EstimatorKind.MLE, theta, cov, it, data, config)


# ---------------------------------------------------------------------------
# Cox-Snell correction
# ---------------------------------------------------------------------------

def cox_snell_bias(params: EmaxParams, data: ObservationSet) -> np.ndarray:
    """First-order bias ``B_s = sum I^{-1}[s,r] I^{-1}[j,l] (k3/2 + k2_1)[r,j,l]``.

    ``I^{-1}`` here is the inverse of the expected information (the inverse
    negative-information entries carry the cumulant signs already).  Scales
    as O(1/n) in the total sample size.
    """
    info = expected_information(params, data)
    inv = _solve_psd(info)
    bundle = cumulant_bundle(params, data)
    return np.einsum("sr,jl,rjl->s", inv, inv, 0.5 * bundle.k3 + bundle.k2_1)


def fit_cox_snell(data: ObservationSet, config: SolverConfig = SolverConfig()) -> FitResult:
    """Bias-corrected MLE: fit, subtract the analytic bias, reclassify.

    MLE failures propagate verbatim.  The covariance is inherited from the
    maximum-likelihood fit: the corrected point is not a stationary point of
    the likelihood, so the local Hessian there is not a valid curvature
    estimate (and is frequently indefinite when the correction is large).
    """
    base = fit_mle(data, config)
    if base.status is FitStatus.FailedToEstimate:
        return replace(base, kind=EstimatorKind.CoxSnell)
    theta_hat = base.params.as_array()
    info = expected_information(base.params, data)
    bundle = cumulant_bundle(base.params, data)
    try:
        inv = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return FitResult(
            kind=EstimatorKind.CoxSnell,
            status=FitStatus.FailedToEstimate,
            status_reason=StatusReason.SINGULAR_INFORMATION,
            iterations=base.iterations,
        )
    bias = np.einsum("sr,jl,rjl->s", inv, inv, 0.5 * bundle.k3 + bundle.k2_1)
    corrected = theta_hat - bias
    if not np.all(np.isfinite(corrected)):
        return FitResult(
            kind=EstimatorKind.CoxSnell,
            status=FitStatus.FailedToEstimate,
            status_reason=StatusReason.NON_FINITE,
            iterations=base.iterations,
        )
    return _classify(
        EstimatorKind.CoxSnell,
        corrected,
        base.covariance,
        base.iterations,
        data,
        config,
        base_mle=base.params,
    )


# ---------------------------------------------------------------------------
# Firth modified score
# ---------------------------------------------------------------------------

def firth_modified_score(params: EmaxParams, data: ObservationSet) -> np.ndarray:
    """Modified score ``U_s + 0.5 * tr(I^{-1} (P_s + kappa_{..,s}))``."""
    info = expected_information(params, data)
    inv = _solve_psd(info)
    bundle = cumulant_bundle(params, data)
    adj = 0.5 * np.einsum("rj,rjl->l", inv, bundle.p + bundle.k2_1)
    return score(params, data) + adj


def _firth_score_guarded(theta: np.ndarray, data: ObservationSet) -> np.ndarray:
    """Modified score that tolerates the degenerate far field.

    Far from the data-supported region the expected information loses rank;
    a pseudo-inverse keeps the equations defined there so that the
    root-finder can traverse (and terminate in) boundary plateaus.
    Numerical breakdown surfaces as NaN entries, which the root-finder
    rejects like any other non-finite evaluation.
    """
    if not np.all(np.isfinite(theta)):
        return np.full(3, np.nan)
    params = EmaxParams.from_array(theta)
    try:
        info = expected_information(params, data)
        inv = np.linalg.pinv(info)
        bundle = cumulant_bundle(params, data)
        return score(params, data) + 0.5 * np.einsum(
            "rj,rjl->l", inv, bundle.p + bundle.k2_1
        )
    except np.linalg.LinAlgError:
        return np.full(3, np.nan)


def _fd_jacobian(func, theta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    jac = np.zeros((3, 3))
    for s in range(3):
        h = step * max(1.0, abs(theta[s]))
        up, dn = theta.copy(), theta.copy()
        up[s] += h
        dn[s] -= h
        jac[:, s] = (func(up) - func(dn)) / (2.0 * h)
    return jac


def _lm_root(func, theta0: np.ndarray, max_iter: int, grad_tol: float):
    """Damped least-squares root-finder on a 3-vector estimating equation.

    Each iteration solves ``(J^T J + mu I) step = -J^T F`` with a fresh
    finite-difference Jacobian, clips the step componentwise to [-2, 2],
    and accepts only norm-reducing moves (the equations admit no objective,
    so the residual norm is the only merit function).  Returns
    ``(theta, iterations, converged)``.
    """
    theta = theta0.copy()
    fx = func(theta)
    if not np.all(np.isfinite(fx)):
        return theta, 0, False
    norm = float(np.linalg.norm(fx))
    mu = 0.0
    it = 0
    while it < max_iter:
        it += 1
        if np.max(np.abs(fx)) <= grad_tol:
            return theta, it, True
        jac = _fd_jacobian(func, theta)
        accepted = False
        mu_try = mu
        for _ in range(40):
            try:
                step = np.linalg.solve(jac.T @ jac + mu_try * np.eye(3), -jac.T @ fx)
            except np.linalg.LinAlgError:
                mu_try = max(mu_try * 10.0, 1e-8)
                continue
            step = np.clip(step, -2.0, 2.0)
            cand = theta + step
            fc = func(cand)
            if np.all(np.isfinite(fc)) and np.linalg.norm(fc) < norm:
                accepted = True
                break
            mu_try = max(mu_try * 10.0, 1e-8)
        if not accepted:
            return theta, it, False
        mu = mu_try / 3.0
        theta, fx, norm = cand, fc, float(np.linalg.norm(fc))
    return theta, max_iter, False


def _adjusted_logit(k: float, n: float) -> float:
    return float(np.log((k + 0.5) / (n - k + 0.5)))


def _firth_starts(data: ObservationSet, mple_start: np.ndarray) -> list[np.ndarray]:
    """Start sequence for the modified-score solve.

    The penalized-likelihood maximizer leads (it is typically within a few
    steps of the modified-score root); then the profiled grid start; then
    two closed-form boundary limits — the pooled intercept-only fit (the
    exact root limit as ED50 grows without bound) and the control-versus-
    pooled-treated two-group fit (the limit as ED50 shrinks to zero) — and
    finally a short ladder of ED50 displacements of the leading start.
    """
    d2 = data.dmin_positive()
    dmax = data.dmax()
    pos = data.doses > 0
    e0_pool = _adjusted_logit(data.events.sum(), data.n.sum())
    e0_ctl = _adjusted_logit(data.events[~pos].sum(), data.n[~pos].sum())
    e_trt = _adjusted_logit(data.events[pos].sum(), data.n[pos].sum())
    starts = [
        mple_start,
        starting_values(data).as_array(),
        np.array([e0_pool, 0.0, np.log(dmax) + 20.0]),
        np.array([e0_ctl, e_trt - e0_ctl, np.log(d2) - 20.0]),
    ]
    for phi in np.linspace(np.log(0.1 * d2), np.log(5.0 * dmax), 5):
        alt = mple_start.copy()
        alt[2] = phi
        starts.append(alt)
    return starts


def fit_firth(data: ObservationSet, config: SolverConfig = SolverConfig()) -> FitResult:
    """Solve the modified score equations and classify the root.

    Multi-start damped quasi-Newton root-finding with a finite-difference
    Jacobian and trust clamping; covariance from the inverse negative
    Hessian at the root.  Roots in the degenerate far field (huge or tiny
    ED50) are genuine solutions of the estimating equations and surface as
    ``Unstable`` bound hits rather than failures.
    """
    mple = fit_mple(data, config)
    if mple.params is not None:
        lead = mple.params.as_array()
    else:
        lead = starting_values(data).as_array()
    func = lambda t: _firth_score_guarded(t, data)
    total_it = 0
    theta = lead
    for theta0 in _firth_starts(data, lead):
        budget = max(50, config.max_iter - total_it)
        theta, it, ok = _lm_root(func, theta0, budget, config.grad_tol)
        total_it += it
        if ok:
            break
    else:
        return FitResult(
            kind=EstimatorKind.Firth,
            status=FitStatus.FailedToEstimate,
            status_reason=StatusReason.NON_CONVERGENCE,
            iterations=total_it,
        )
    cov = _neg_hessian_cov(theta, data)
    return _classify(EstimatorKind.Firth, theta, cov, total_it, data, config)


# ---------------------------------------------------------------------------
# Jeffreys-prior MPLE
# ---------------------------------------------------------------------------

def penalized_loglik(params: EmaxParams, data: ObservationSet) -> float:
    """Log-likelihood plus half the log-determinant of the information.

    Returns ``-inf`` as a sentinel wherever the information determinant is
    not positive (e.g. rank-deficient designs), which the ascent treats as
    out of bounds.
    """
    info = expected_information(params, data)
    sign, logdet = np.linalg.slogdet(info)
    if sign <= 0:
        return -np.inf
    return log_likelihood(params, data) + 0.5 * logdet


def penalized_score(params: EmaxParams, data: ObservationSet) -> np.ndarray:
    """Exact gradient of the penalized log-likelihood.

    ``U_s + 0.5 * tr(I^{-1} dI/dtheta_s)`` — the half matches the square
    root in the penalty and is enforced by the finite-difference oracle in
    the test suite.
    """
    info = expected_information(params, data)
    inv = _solve_psd(info)
    bundle = cumulant_bundle(params, data)
    return score(params, data) + 0.5 * np.einsum("rj,rjl->l", inv, bundle.dI)


def _penalized_score_guarded(theta: np.ndarray, data: ObservationSet) -> np.ndarray:
    params = EmaxParams.from_array(theta)
    info = expected_information(params, data)
    inv = np.linalg.pinv(info)
    bundle = cumulant_bundle(params, data)
    return score(params, data) + 0.5 * np.einsum("rj,rjl->l", inv, bundle.dI)


def _penalized_curvature(theta: np.ndarray, data: ObservationSet) -> np.ndarray:
    """Symmetrized finite-difference Jacobian of the penalized score."""
    jac = np.zeros((3, 3))
    for s in range(3):
        h = 1e-5 * max(1.0, abs(theta[s]))
        up, dn = theta.copy(), theta.copy()
        up[s] += h
        dn[s] -= h
        jac[:, s] = (
            _penalized_score_guarded(up, data) - _penalized_score_guarded(dn, data)
        ) / (2.0 * h)
    return 0.5 * (jac + jac.T)


def fit_mple(data: ObservationSet, config: SolverConfig = SolverConfig()) -> FitResult:
    """Maximize the Jeffreys-penalized likelihood.

    Modified-Newton ascent: the finite-difference curvature has its
    eigenvalues floored away from zero on the negative side so the search
    direction is always a proper ascent direction, which keeps progress
    brisk along the curved ridges that one-sided event patterns create.
    Covariance is the inverse of the negative penalized-score Jacobian at
    the maximizer.
    """
    theta = starting_values(data).as_array()
    f = penalized_loglik(EmaxParams.from_array(theta), data)
    g = _penalized_score_guarded(theta, data)
    it = 0
    while it < config.max_iter:
        it += 1
        if np.max(np.abs(g)) <= config.grad_tol:
            break
        curv = _penalized_curvature(theta, data)
        eigval, eigvec = np.linalg.eigh(curv)
        floor = -1e-8 * max(1.0, float(np.max(np.abs(eigval))))
        eigval = np.minimum(eigval, floor)
        step = -eigvec @ ((eigvec.T @ g) / eigval)
        norm = float(np.linalg.norm(step))
        if norm > 5.0:
            step *= 5.0 / norm
        lam, accepted = 1.0, False
        for _ in range(40):
            cand = theta + lam * step
            fc = penalized_loglik(EmaxParams.from_array(cand), data)
            if np.isfinite(fc) and fc > f + 1e-4 * lam * float(step @ g):
                accepted = True
                break
            lam /= 2.0
        if not accepted:
            if np.max(np.abs(g)) <= 1e-4:
                break
            return FitResult(
                kind=EstimatorKind.MPLE,
                status=FitStatus.FailedToEstimate,
                status_reason=StatusReason.NON_CONVERGENCE,
                iterations=it,
            )
        theta, f = cand, fc
        g = _penalized_score_guarded(theta, data)
    else:
        return FitResult(
            kind=EstimatorKind.MPLE,
            status=FitStatus.FailedToEstimate,
            status_reason=StatusReason.NON_CONVERGENCE,
            iterations=config.max_iter,
        )
    obs = -_penalized_curvature(theta, data)
    try:
        cov = np.linalg.inv(obs)
    except np.linalg.LinAlgError:
        cov = None
    return _classify(EstimatorKind.MPLE, theta, cov, it, data, config)


_FITTERS = {
    EstimatorKind.MLE: fit_mle,
    EstimatorKind.CoxSnell: fit_cox_snell,
    EstimatorKind.Firth: fit_firth,
    EstimatorKind.MPLE: fit_mple,
}


def fit(
    kind: EstimatorKind,
    data: ObservationSet,
    config: SolverConfig = SolverConfig(),
) -> FitResult:
    """Dispatch to the fitter for ``kind``."""
    return _FITTERS[kind](data, config)
