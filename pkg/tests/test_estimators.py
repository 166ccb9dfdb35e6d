from __future__ import annotations

import numpy as np
import pytest

from emaxbr import (
    EmaxParams,
    EstimatorKind,
    FitStatus,
    ObservationSet,
    SolverConfig,
    StatusReason,
    cox_snell_bias,
    firth_modified_score,
    fit,
    fit_cox_snell,
    fit_firth,
    fit_mle,
    fit_mple,
    log_likelihood,
    penalized_loglik,
    penalized_score,
    predict_prob,
    score,
    starting_values,
)

from conftest import random_dataset, random_params


def _simulate(truth: EmaxParams, doses, n_per_arm: int, seed: int) -> ObservationSet:
    doses = np.asarray(doses, dtype=float)
    pi = predict_prob(truth, doses)
    rng = np.random.default_rng(seed)
    events = rng.binomial(n_per_arm, pi).astype(float)
    return ObservationSet(doses, np.full(len(doses), float(n_per_arm)), events)


TRUTH = EmaxParams(-2.197, 3.583, np.log(7.5))
DOSES5 = (0.0, 7.5, 22.5, 75.0, 225.0)


class TestSolverConfig:
    def test_defaults(self):
        c = SolverConfig()
        assert c.grad_tol == 1e-6
        assert c.max_iter == 2000
        assert c.ed50_upper_mult == 10.0
        assert c.ed50_lower_mult == 0.02
        assert c.rel_se_threshold == 5.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"grad_tol": 0.0},
            {"rel_change_tol": -1.0},
            {"max_iter": 0},
            {"ed50_upper_mult": -1.0},
            {"rel_se_threshold": 0.0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestStartingValues:
    def test_intercept_start_is_adjusted_logit_of_lowest_arm(self):
        d = ObservationSet(
            np.array([0.0, 10.0, 40.0]), np.array([10.0] * 3), np.array([0.0, 3.0, 8.0])
        )
        start = starting_values(d)
        # The grid search may move e0 during the two-parameter refit, but
        # for all-zero lowest arm the profile keeps a strongly negative e0.
        assert start.e0 < 0
        assert np.isfinite(start.as_array()).all()

    def test_start_likelihood_beats_naive_center(self, rng):
        for _ in range(10):
            d = random_dataset(rng)
            start = starting_values(d)
            naive = EmaxParams(0.0, 0.0, np.log(d.dmax()))
            assert log_likelihood(start, d) >= log_likelihood(naive, d) - 1e-9

    def test_deterministic(self, rng):
        d = random_dataset(rng)
        a = starting_values(d).as_array()
        b = starting_values(d).as_array()
        np.testing.assert_array_equal(a, b)


class TestFitMLE:
    def test_recovers_truth_on_large_sample(self):
        d = _simulate(TRUTH, DOSES5, 4000, seed=11)
        res = fit_mle(d)
        assert res.status is FitStatus.Converged
        np.testing.assert_allclose(res.params.as_array(), TRUTH.as_array(), atol=0.2)

    def test_score_vanishes_at_optimum(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        res = fit_mle(d)
        assert res.status is FitStatus.Converged
        assert np.max(np.abs(score(res.params, d))) < 1e-4

    def test_loglik_not_improvable_locally(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        res = fit_mle(d)
        base = log_likelihood(res.params, d)
        rng = np.random.default_rng(0)
        for _ in range(40):
            pert = res.params.as_array() + rng.normal(scale=1e-3, size=3)
            assert log_likelihood(EmaxParams.from_array(pert), d) <= base + 1e-9

    def test_fails_on_complete_separation(self):
        d = ObservationSet(
            np.array([0.0, 1.0, 2.0, 4.0, 8.0]),
            np.full(5, 4.0),
            np.array([0.0, 0.0, 4.0, 4.0, 4.0]),
        )
        res = fit_mle(d)
        assert res.status is FitStatus.FailedToEstimate
        assert res.params is None

    def test_covariance_positive_definite_when_converged(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        res = fit_mle(d)
        assert np.all(np.linalg.eigvalsh(res.covariance) > 0)
        np.testing.assert_allclose(
            res.std_errors, np.sqrt(np.diag(res.covariance)), rtol=1e-12
        )


class TestCoxSnell:
    def test_bias_shrinks_with_replication(self, rng):
        # First-order bias is O(1/n): quadrupling every arm divides it by 4.
        for _ in range(10):
            p = random_params(rng)
            d = random_dataset(rng)
            d4 = ObservationSet(d.doses, 4.0 * d.n, 4.0 * d.events)
            np.testing.assert_allclose(
                cox_snell_bias(p, d4), cox_snell_bias(p, d) / 4.0, rtol=1e-10
            )

    def test_bias_matches_explicit_contraction(self, rng):
        from emaxbr import cumulant_bundle, expected_information

        p = random_params(rng)
        d = random_dataset(rng)
        inv = np.linalg.inv(expected_information(p, d))
        b = cumulant_bundle(p, d)
        target = np.zeros(3)
        for s in range(3):
            for r in range(3):
                for j in range(3):
                    for l in range(3):
                        target[s] += (
                            inv[s, r] * inv[j, l] * (0.5 * b.k3[r, j, l] + b.k2_1[r, j, l])
                        )
        np.testing.assert_allclose(cox_snell_bias(p, d), target, rtol=1e-12)

    def test_corrected_estimate_is_mle_minus_bias(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        mle = fit_mle(d)
        cs = fit_cox_snell(d)
        assert cs.base_mle == mle.params
        np.testing.assert_allclose(
            cs.params.as_array(),
            mle.params.as_array() - cox_snell_bias(mle.params, d),
            rtol=1e-10,
        )

    def test_inherits_mle_covariance(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        np.testing.assert_array_equal(fit_cox_snell(d).covariance, fit_mle(d).covariance)

    def test_propagates_mle_failure(self):
        d = ObservationSet(
            np.array([0.0, 1.0, 2.0, 4.0, 8.0]),
            np.full(5, 4.0),
            np.array([0.0, 0.0, 4.0, 4.0, 4.0]),
        )
        res = fit_cox_snell(d)
        assert res.status is FitStatus.FailedToEstimate
        assert res.kind is EstimatorKind.CoxSnell


class TestFirth:
    def test_modified_score_vanishes_at_root(self):
        d = _simulate(TRUTH, DOSES5, 40, seed=3)
        res = fit_firth(d)
        assert res.status is FitStatus.Converged
        assert np.max(np.abs(firth_modified_score(res.params, d))) < 1e-5

    def test_finite_on_separated_data(self):
        d = ObservationSet(
            np.array([0.0, 1.0, 2.0, 4.0, 8.0]),
            np.full(5, 4.0),
            np.array([0.0, 0.0, 4.0, 4.0, 4.0]),
        )
        res = fit_firth(d)
        assert res.params is not None
        assert np.isfinite(res.params.as_array()).all()

    def test_large_ed50_plateau_root_is_pooled_intercept_fit(self):
        # When the root escapes to huge ED50, the model degenerates to an
        # intercept-only fit whose bias-reduced solution is the pooled
        # half-corrected empirical logit with zero slope.
        d = ObservationSet(
            np.array([0.0, 1.27, 2.54, 5.08, 10.15]),
            np.array([9.0, 6.0, 7.0, 8.0, 5.0]),
            np.array([0.0, 0.0, 7.0, 8.0, 5.0]),
        )
        res = fit_firth(d)
        assert res.status is FitStatus.Unstable
        assert res.status_reason is StatusReason.BOUND_HIT
        pooled = np.log((d.events.sum() + 0.5) / (d.n.sum() - d.events.sum() + 0.5))
        assert res.params.e0 == pytest.approx(pooled, abs=1e-4)
        assert res.params.emax == pytest.approx(0.0, abs=1e-4)

    def test_deterministic(self):
        d = _simulate(TRUTH, DOSES5, 10, seed=17)
        a = fit_firth(d)
        b = fit_firth(d)
        assert a.status == b.status
        np.testing.assert_array_equal(a.params.as_array(), b.params.as_array())


class TestMPLE:
    def test_penalized_score_is_gradient_of_penalized_loglik(self, rng):
        for _ in range(20):
            p = random_params(rng)
            d = random_dataset(rng)
            g = penalized_score(p, d)
            theta = p.as_array()
            fd = np.zeros(3)
            for i in range(3):
                h = 1e-6 * max(1.0, abs(theta[i]))
                up, dn = theta.copy(), theta.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (
                    penalized_loglik(EmaxParams.from_array(up), d)
                    - penalized_loglik(EmaxParams.from_array(dn), d)
                ) / (2.0 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-5)

    def test_penalty_equals_half_logdet_information(self, rng):
        from emaxbr import expected_information

        p = random_params(rng)
        d = random_dataset(rng)
        _, logdet = np.linalg.slogdet(expected_information(p, d))
        assert penalized_loglik(p, d) == pytest.approx(
            log_likelihood(p, d) + 0.5 * logdet, rel=1e-12
        )

    def test_gradient_vanishes_at_optimum(self):
        d = _simulate(TRUTH, DOSES5, 40, seed=3)
        res = fit_mple(d)
        assert res.status is FitStatus.Converged
        assert np.max(np.abs(penalized_score(res.params, d))) < 1e-4

    def test_optimum_is_local_max(self):
        d = _simulate(TRUTH, DOSES5, 40, seed=3)
        res = fit_mple(d)
        base = penalized_loglik(res.params, d)
        rng = np.random.default_rng(1)
        for _ in range(40):
            pert = res.params.as_array() + rng.normal(scale=1e-3, size=3)
            assert penalized_loglik(EmaxParams.from_array(pert), d) <= base + 1e-9

    def test_converges_on_separated_data(self):
        d = ObservationSet(
            np.array([0.0, 1.0, 2.0, 4.0, 8.0]),
            np.full(5, 4.0),
            np.array([0.0, 0.0, 4.0, 4.0, 4.0]),
        )
        res = fit_mple(d)
        assert res.status is FitStatus.Converged
        probs = predict_prob(res.params, d.doses)
        assert np.all((probs > 0) & (probs < 1))

    def test_handles_zero_event_control_arm(self):
        # A one-sided event pattern creates a curved ridge in the penalized
        # surface; the ascent must still terminate quickly.
        d = ObservationSet(
            np.array(DOSES5),
            np.full(5, 40.0),
            np.array([0.0, 9.0, 25.0, 26.0, 31.0]),
        )
        res = fit_mple(d)
        assert res.status is FitStatus.Converged
        assert res.iterations <= 40


class TestClassification:
    def test_bound_hit_reported_as_unstable(self):
        d = ObservationSet(
            np.array([0.0, 1.27, 2.54, 5.08, 10.15]),
            np.array([9.0, 6.0, 7.0, 8.0, 5.0]),
            np.array([0.0, 0.0, 7.0, 8.0, 5.0]),
        )
        res = fit_firth(d)
        assert res.status is FitStatus.Unstable
        assert res.status_reason is StatusReason.BOUND_HIT
        ed50 = res.params.ed50()
        assert ed50 > 10.0 * d.dmax() or ed50 < 0.02 * d.dmin_positive()

    def test_relative_se_threshold_drives_instability(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        strict = SolverConfig(rel_se_threshold=1e-3)
        res = fit_mle(d, strict)
        assert res.status is FitStatus.Unstable
        assert res.status_reason is StatusReason.RELATIVE_SE_EXCEEDED

    def test_converged_results_carry_everything(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        for kind in EstimatorKind:
            res = fit(kind, d)
            assert res.status is FitStatus.Converged
            assert res.params is not None
            assert res.covariance is not None
            assert res.std_errors is not None
            assert res.status_reason is StatusReason.NONE

    def test_dispatch_matches_direct_calls(self):
        d = _simulate(TRUTH, DOSES5, 200, seed=5)
        direct = {
            EstimatorKind.MLE: fit_mle,
            EstimatorKind.CoxSnell: fit_cox_snell,
            EstimatorKind.Firth: fit_firth,
            EstimatorKind.MPLE: fit_mple,
        }
        for kind, fn in direct.items():
            np.testing.assert_array_equal(
                fit(kind, d).params.as_array(), fn(d).params.as_array()
            )
