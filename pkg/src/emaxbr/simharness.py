"""Seeded Monte Carlo harness: data generation, replication, aggregation.

A :class:`SimStudy` pins a dose design, truth, replicate count, estimator
set, and seed.  Replicate ``r`` draws its data from the stream keyed by
``(seed, r)``, so every dataset — and hence every downstream fit and
metric — is fully determined by the study definition, independent of how
many workers execute the replicates.

Metrics follow the NA-exclusion convention: replicates where an estimator
fails contribute nothing to that estimator's cells, and unstable fits are
likewise excluded from the parameter summaries (they are tallied in the
instability percentage instead), so each cell reports its own ``n_used``.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .diagnostics import Shape, classify_shape
from .estimators import (
    EstimatorKind,
    FitResult,
    FitStatus,
    SolverConfig,
    StatusReason,
    fit,
)
from .model import EmaxParams, ObservationSet, predict_prob

__all__ = [
    "SimStudy",
    "CellMetrics",
    "SimMetrics",
    "AuditRow",
    "ShapeUnreachable",
    "QuadraticLogitFit",
    "generate_dataset",
    "run_study",
    "run_shape_conditioned_study",
    "fit_quadratic_logit",
    "emit_table",
    "load_study",
]

_PARAMS = ("e0", "emax", "log_ed50")
_Z95 = 1.959963984540054

AUDIT_COLUMNS = (
    "rep",
    "estimator",
    "status",
    "e0",
    "emax",
    "log_ed50",
    "se_e0",
    "se_emax",
    "se_log_ed50",
    "iterations",
)


class ShapeUnreachable(RuntimeError):
    """Raised when the target shape is (practically) never generated."""


@dataclass(frozen=True)
class SimStudy:
    """One simulation cell: design, truth, size, estimators, seed."""

    doses: tuple[float, ...]
    n_total: int
    truth: EmaxParams
    n_reps: int
    estimators: tuple[EstimatorKind, ...]
    seed: int
    solver: SolverConfig = SolverConfig()

    def __post_init__(self) -> None:
        doses = tuple(float(d) for d in self.doses)
        if len(doses) < 2:
            raise ValueError("doses: need at least two arms")
        if self.n_total < len(doses):
            raise ValueError("n_total: must be at least the number of arms")
        if self.n_reps < 1:
            raise ValueError("n_reps: must be at least 1")
        if not self.estimators:
            raise ValueError("estimators: at least one required")
        object.__setattr__(self, "doses", doses)
        object.__setattr__(self, "estimators", tuple(self.estimators))

    def arm_sizes(self) -> np.ndarray:
        """Even allocation; any remainder goes to the lowest doses first."""
        m = len(self.doses)
        base, rem = divmod(self.n_total, m)
        sizes = np.full(m, base, dtype=int)
        sizes[:rem] += 1
        return sizes


@dataclass(frozen=True)
class CellMetrics:
    """Summary of one (estimator, parameter) cell over used replicates."""

    mean_estimate: float
    mbe: float
    mse: float
    mean_se: float
    coverage: float
    mean_ci_length: float
    n_used: int


@dataclass(frozen=True)
class AuditRow:
    rep: int
    estimator: str
    status: str
    e0: float | None
    emax: float | None
    log_ed50: float | None
    se_e0: float | None
    se_emax: float | None
    se_log_ed50: float | None
    iterations: int


@dataclass(frozen=True)
class SimMetrics:
    """Aggregated study output.

    ``cells`` maps ``(estimator_name, parameter_name)`` to
    :class:`CellMetrics`; ``fail_pct`` / ``unstable_pct`` map estimator
    names to percentages over all replicates.  ``audit`` holds one row per
    (replicate, estimator) for external scrutiny.
    """

    cells: dict[tuple[str, str], CellMetrics]
    fail_pct: dict[str, float]
    unstable_pct: dict[str, float]
    n_reps: int
    audit: tuple[AuditRow, ...] = field(repr=False, default=())
    acceptance_rate: float | None = None


def generate_dataset(study: SimStudy, rep_index: int) -> ObservationSet:
    """Draw one replicate dataset from the stream keyed by (seed, rep).

    Arm event totals are drawn binomially at the truth-implied success
    probabilities — the sufficient-statistic equivalent of per-subject
    Bernoulli draws.
    """
    doses = np.asarray(study.doses, dtype=float)
    t = study.truth
    pi = expit(t.e0 + t.emax * doses / (np.exp(t.phi) + doses))
    rng = np.random.default_rng([study.seed, rep_index])
    events = rng.binomial(study.arm_sizes(), pi).astype(float)
    return ObservationSet(doses, study.arm_sizes().astype(float), events)


def _fit_rep(args) -> tuple[int, list[AuditRow]]:
    study, rep = args
    data = generate_dataset(study, rep)
    return rep, _fit_dataset(study, rep, data)


def _fit_dataset(study: SimStudy, rep: int, data: ObservationSet) -> list[AuditRow]:
    rows = []
    for kind in study.estimators:
        res = fit(kind, data, study.solver)
        est = res.params.as_array() if res.params is not None else (None,) * 3
        se = res.std_errors if res.std_errors is not None else (None,) * 3
        rows.append(
            AuditRow(
                rep=rep,
                estimator=kind.value,
                status=(
                    res.status.value
                    if res.status_reason is StatusReason.NONE
                    else f"{res.status.value}:{res.status_reason.value}"
                ),
                e0=_opt(est[0]),
                emax=_opt(est[1]),
                log_ed50=_opt(est[2]),
                se_e0=_opt(se[0]),
                se_emax=_opt(se[1]),
                se_log_ed50=_opt(se[2]),
                iterations=res.iterations,
            )
        )
    return rows


def _opt(v) -> float | None:
    return None if v is None else float(v)


def _aggregate(
    study: SimStudy,
    audit: list[AuditRow],
    acceptance_rate: float | None = None,
    n_reps: int | None = None,
) -> SimMetrics:
    n_reps = n_reps if n_reps is not None else study.n_reps
    truth = study.truth.as_array()
    cells: dict[tuple[str, str], CellMetrics] = {}
    fail_pct: dict[str, float] = {}
    unstable_pct: dict[str, float] = {}
    for kind in study.estimators:
        name = kind.value
        rows = [r for r in audit if r.estimator == name]
        n_fail = sum(r.status.startswith(FitStatus.FailedToEstimate.value) for r in rows)
        n_unst = sum(r.status.startswith(FitStatus.Unstable.value) for r in rows)
        fail_pct[name] = 100.0 * n_fail / n_reps
        unstable_pct[name] = 100.0 * n_unst / n_reps
        used = [r for r in rows if r.status == FitStatus.Converged.value]
        est = np.array([[r.e0, r.emax, r.log_ed50] for r in used], dtype=float)
        se = np.array([[r.se_e0, r.se_emax, r.se_log_ed50] for r in used], dtype=float)
        for j, pname in enumerate(_PARAMS):
            if len(used) == 0:
                cells[(name, pname)] = CellMetrics(
                    np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, 0
                )
                continue
            e, s = est[:, j], se[:, j]
            covered = np.abs(e - truth[j]) <= _Z95 * s
            cells[(name, pname)] = CellMetrics(
                mean_estimate=float(e.mean()),
                mbe=float((e - truth[j]).mean()),
                mse=float(((e - truth[j]) ** 2).mean()),
                mean_se=float(s.mean()),
                coverage=float(covered.mean()),
                mean_ci_length=float((2.0 * _Z95 * s).mean()),
                n_used=len(used),
            )
    return SimMetrics(
        cells=cells,
        fail_pct=fail_pct,
        unstable_pct=unstable_pct,
        n_reps=n_reps,
        audit=tuple(audit),
        acceptance_rate=acceptance_rate,
    )


def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get("EMAXBR_THREADS", "1")))
    except ValueError:
        return 1


def run_study(study: SimStudy) -> SimMetrics:
    """Fit every estimator on every replicate and aggregate.

    Replicates may fan out over ``EMAXBR_THREADS`` processes; results are
    reassembled in replicate order before aggregation, so the output is
    byte-identical for any worker count.
    """
    jobs = [(study, r) for r in range(study.n_reps)]
    workers = _n_workers()
    if workers > 1 and study.n_reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_rep, jobs, chunksize=8))
    else:
        results = [_fit_rep(j) for j in jobs]
    results.sort(key=lambda t: t[0])
    audit = [row for _, rows in results for row in rows]
    return _aggregate(study, audit)


def run_shape_conditioned_study(
    study: SimStudy, target_shape: Shape, n_keep: int
) -> SimMetrics:
    """Rejection-sample datasets matching ``target_shape``, then aggregate.

    Draw index ``r`` advances through the study's replicate streams until
    ``n_keep`` datasets classify as the target shape; those are fitted and
    aggregated exactly as in :func:`run_study`, with the acceptance rate
    recorded.  If fewer than one in 10^4 of the first 10^5 draws match, the
    shape is declared unreachable.
    """
    if len(study.doses) != 3:
        raise ValueError("shape-conditioned studies require a 3-arm design")
    kept: list[tuple[int, ObservationSet]] = []
    r = 0
    while len(kept) < n_keep:
        if r >= 100_000 and len(kept) / r < 1e-4:
            raise ShapeUnreachable(
                f"acceptance rate {len(kept)}/{r} below 1e-4 for {target_shape}"
            )
        data = generate_dataset(study, r)
        if classify_shape(data) is target_shape:
            kept.append((r, data))
        r += 1
    rate = len(kept) / r

    jobs = [(study, rep, data) for rep, data in kept]
    workers = _n_workers()
    if workers > 1 and n_keep > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_kept, jobs, chunksize=8))
    else:
        results = [_fit_kept(j) for j in jobs]
    audit = [row for rows in results for row in rows]
    return _aggregate(study, audit, acceptance_rate=rate, n_reps=n_keep)


def _fit_kept(args) -> list[AuditRow]:
    study, rep, data = args
    return _fit_dataset(study, rep, data)


@dataclass(frozen=True)
class QuadraticLogitFit:
    """Logistic fit with linear predictor ``b0 + b1 d + b2 d^2``.

    ``peak_dose`` is the vertex ``-b1 / (2 b2)``, reported only when the
    fitted curvature is negative (a genuine interior maximum).
    """

    status: FitStatus
    status_reason: StatusReason
    coefs: np.ndarray | None
    covariance: np.ndarray | None
    peak_dose: float | None
    iterations: int


def fit_quadratic_logit(
    data: ObservationSet, config: SolverConfig = SolverConfig()
) -> QuadraticLogitFit:
    """Maximum-likelihood quadratic-logit fit on ``(1, d, d^2)``.

    A sensitivity model for non-monotone samples; shares the failure
    taxonomy of the main estimators (separation drives the coefficients to
    divergence, reported as FailedToEstimate).
    """
    if len(data.doses) < 3:
        raise ValueError("need at least 3 distinct doses")
    d = data.doses
    scale = max(1.0, d.max())
    x = np.column_stack([np.ones_like(d), d / scale, (d / scale) ** 2])
    beta = np.zeros(3)

    def ll(b: np.ndarray) -> float:
        from scipy.special import log_expit

        lin = x @ b
        return float(
            np.sum(data.events * log_expit(lin) + (data.n - data.events) * log_expit(-lin))
        )

    f = ll(beta)
    it = 0
    while it < config.max_iter:
        it += 1
        lin = x @ beta
        pi = expit(lin)
        g = x.T @ (data.events - data.n * pi)
        if np.max(np.abs(g)) <= config.grad_tol:
            break
        if np.max(np.abs(lin)) > 30.0:
            return QuadraticLogitFit(
                FitStatus.FailedToEstimate, StatusReason.NON_FINITE, None, None, None, it
            )
        w = data.n * pi * (1.0 - pi)
        h = x.T @ (w[:, None] * x)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            return QuadraticLogitFit(
                FitStatus.FailedToEstimate,
                StatusReason.SINGULAR_INFORMATION,
                None,
                None,
                None,
                it,
            )
        lam, accepted = 1.0, False
        for _ in range(30):
            cand = beta + lam * step
            fc = ll(cand)
            if np.isfinite(fc) and fc > f:
                accepted = True
                break
            lam /= 2.0
        if not accepted:
            break
        beta, f = cand, fc
    else:
        return QuadraticLogitFit(
            FitStatus.FailedToEstimate, StatusReason.NON_CONVERGENCE, None, None, None, it
        )
    lin = x @ beta
    pi = expit(lin)
    w = data.n * pi * (1.0 - pi)
    try:
        cov_scaled = np.linalg.inv(x.T @ (w[:, None] * x))
    except np.linalg.LinAlgError:
        return QuadraticLogitFit(
            FitStatus.FailedToEstimate,
            StatusReason.SINGULAR_INFORMATION,
            None,
            None,
            None,
            it,
        )
    # Undo the dose rescaling used for conditioning.
    s = np.diag([1.0, 1.0 / scale, 1.0 / scale**2])
    coefs = s @ beta
    cov = s @ cov_scaled @ s
    peak = float(-coefs[1] / (2.0 * coefs[2])) if coefs[2] < 0 else None
    return QuadraticLogitFit(
        FitStatus.Converged, StatusReason.NONE, coefs, cov, peak, it
    )


_TABLE_COLUMNS = (
    "estimator",
    "parameter",
    "Estimate",
    "MBE",
    "MSE",
    "Est.SE",
    "CP",
    "Est.Length",
    "n_used",
    "fail_pct",
    "unstable_pct",
)


def emit_table(metrics: SimMetrics, format: str = "csv") -> str:
    """Render metrics as CSV or aligned text with the standard column order.

    CSV floats use ``repr`` so a re-parse reproduces the in-memory values
    exactly.
    """
    rows = []
    for (est, pname), cell in metrics.cells.items():
        rows.append(
            [
                est,
                pname,
                cell.mean_estimate,
                cell.mbe,
                cell.mse,
                cell.mean_se,
                cell.coverage,
                cell.mean_ci_length,
                cell.n_used,
                metrics.fail_pct[est],
                metrics.unstable_pct[est],
            ]
        )
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_TABLE_COLUMNS)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else repr(v) for v in row])
        return buf.getvalue()
    if format == "text":
        widths = [max(len(str(c)), 12) for c in _TABLE_COLUMNS]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(_TABLE_COLUMNS, widths))]
        for row in rows:
            cells = [
                v if isinstance(v, str) else (f"{v:.4f}" if isinstance(v, float) else str(v))
                for v in row
            ]
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format: {format!r}")


def parse_table(text: str) -> dict[tuple[str, str], CellMetrics]:
    """Inverse of the CSV rendering of :func:`emit_table` (cells only)."""
    reader = csv.DictReader(io.StringIO(text))
    cells = {}
    for row in reader:
        cells[(row["estimator"], row["parameter"])] = CellMetrics(
            mean_estimate=float(row["Estimate"]),
            mbe=float(row["MBE"]),
            mse=float(row["MSE"]),
            mean_se=float(row["Est.SE"]),
            coverage=float(row["CP"]),
            mean_ci_length=float(row["Est.Length"]),
            n_used=int(row["n_used"]),
        )
    return cells


def audit_csv(metrics: SimMetrics) -> str:
    """Render the per-replicate audit log as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AUDIT_COLUMNS)
    for r in metrics.audit:
        writer.writerow(
            [
                r.rep,
                r.estimator,
                r.status,
                *("" if v is None else repr(v) for v in (
                    r.e0,
                    r.emax,
                    r.log_ed50,
                    r.se_e0,
                    r.se_emax,
                    r.se_log_ed50,
                )),
                r.iterations,
            ]
        )
    return buf.getvalue()


_KIND_NAMES = {k.value: k for k in EstimatorKind}


def load_study(source) -> tuple[SimStudy, dict]:
    """Load a study definition from JSON (path, file object, or dict).

    Returns the study plus the raw option dict (which may carry harness
    extensions such as ``shape_condition``).  Validation errors name the
    offending key.
    """
    if isinstance(source, dict):
        raw = source
    elif hasattr(source, "read"):
        raw = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    required = ("doses", "n_total", "truth", "n_reps", "estimators", "seed")
    for key in required:
        if key not in raw:
            raise ValueError(f"study definition missing required key: {key}")
    truth_raw = raw["truth"]
    for key in ("e0", "emax", "log_ed50"):
        if key not in truth_raw:
            raise ValueError(f"truth missing required key: {key}")
    truth = EmaxParams(
        float(truth_raw["e0"]), float(truth_raw["emax"]), float(truth_raw["log_ed50"])
    )
    names = raw["estimators"]
    if isinstance(names, str):
        names = [names]
    kinds = []
    for name in names:
        if name not in _KIND_NAMES:
            raise ValueError(f"estimators: unknown estimator {name!r}")
        kinds.append(_KIND_NAMES[name])
    solver_raw = dict(raw.get("solver", {}))
    allowed = set(SolverConfig.__dataclass_fields__)
    for key in solver_raw:
        if key not in allowed:
            raise ValueError(f"solver: unknown option {key!r}")
    solver = SolverConfig(**solver_raw)
    try:
        study = SimStudy(
            doses=tuple(float(d) for d in raw["doses"]),
            n_total=int(raw["n_total"]),
            truth=truth,
            n_reps=int(raw["n_reps"]),
            estimators=tuple(kinds),
            seed=int(raw["seed"]),
            solver=solver,
        )
    except ValueError as exc:
        raise ValueError(f"study definition invalid: {exc}") from exc
    return study, raw
