import math
import warnings

import numpy as np
import pytest

from gemgaps import exact
from gemgaps.errors import ValidationError
from gemgaps.exact import (
    DiscretePmf,
    GeometricLaw,
    PrecisionLossWarning,
    beta_log_series_params,
    beta_stopped_geom_params,
    binom_moment_x1,
    complete_sample_prob,
    convolve_geometric_laws,
    dt_pmf,
    enumerate_compositions,
    enumerate_partitions,
    ewens_pmf,
    gap_law,
    indicator_prob,
    k0inf_levy_atoms,
    k0inf_pgf,
    k0inf_pmf,
    linf_mean,
    linf_second_binom,
    linf_tail,
    min_law,
    mn_cdf_tail_moments,
    mn_pmf_product,
    multiplicities_of,
    pmf_to_csv,
    tail_prob_x1,
)
from gemgaps.specfun import digamma, pochhammer


def harmonic(n, power=1):
    return sum(1.0 / i ** power for i in range(1, n + 1))


def total_variation(p1, p2):
    k = max(p1.probs.size, p2.probs.size)
    a = np.zeros(k)
    b = np.zeros(k)
    a[:p1.probs.size] = p1.probs
    b[:p2.probs.size] = p2.probs
    assert p1.support_offset == p2.support_offset
    return 0.5 * (np.abs(a - b).sum() + p1.tail_bound + p2.tail_bound)


class TestDiscretePmf:
    def test_rejects_negative_probs(self):
        with pytest.raises(ValidationError):
            DiscretePmf(np.array([0.5, -0.1, 0.6]), 0.0)

    def test_rejects_bad_total(self):
        with pytest.raises(ValidationError):
            DiscretePmf(np.array([0.5]), 0.0)
        with pytest.raises(ValidationError):
            DiscretePmf(np.array([0.9]), 0.2)

    def test_accessors(self):
        pmf = DiscretePmf(np.array([0.25, 0.5, 0.25]), 0.0, support_offset=1)
        assert pmf.prob(1) == 0.25
        assert pmf.prob(0) == 0.0
        assert pmf.prob(4) == 0.0
        assert abs(pmf.cdf(2) - 0.75) < 1e-15
        assert pmf.cdf(0) == 0.0
        assert pmf.cdf(99) == 1.0
        assert abs(pmf.mean() - 2.0) < 1e-15


class TestGeometricLaw:
    def test_validation(self):
        GeometricLaw(1.0)
        for bad in (0.0, -0.5, 1.2):
            with pytest.raises(ValidationError):
                GeometricLaw(bad)

    def test_pmf_and_moments(self):
        g = GeometricLaw(0.25)
        assert abs(g.pmf(0) - 0.25) < 1e-15
        assert abs(g.pmf(2) - 0.25 * 0.75 ** 2) < 1e-15
        assert g.pmf(-1) == 0.0
        assert abs(g.mean() - 3.0) < 1e-12
        assert abs(g.var() - 12.0) < 1e-12

    def test_truncation_certificate(self):
        g = GeometricLaw(0.4)
        pmf = g.truncated(tol=1e-9)
        assert pmf.tail_bound <= 1e-9
        assert abs(math.fsum(pmf.probs.tolist()) + pmf.tail_bound - 1.0) < 1e-14
        for k in (0, 1, 7):
            assert abs(pmf.prob(k) - g.pmf(k)) < 1e-16

    def test_degenerate(self):
        pmf = GeometricLaw(1.0).truncated()
        assert pmf.probs.tolist() == [1.0]
        assert pmf.tail_bound == 0.0


class TestGapLaw:
    def test_theta_one_n_two(self):
        ps = [g.p for g in gap_law(1.0, 2)]
        assert ps == [0.5, 2.0 / 3.0]

    def test_single_gap(self):
        (g,) = gap_law(1.0, 1)
        assert g.p == 0.5
        assert g.pmf(0) == 0.5

    def test_mean_is_theta_over_i(self):
        g = gap_law(2.0, 3)[2]
        assert abs(g.p - 0.6) < 1e-15
        assert abs(g.mean() - 2.0 / 3.0) < 1e-15

    def test_validation(self):
        with pytest.raises(ValidationError):
            gap_law(0.0, 3)
        with pytest.raises(ValidationError):
            gap_law(1.0, 0)

    def test_beta_stopped_reduces_to_gap_law(self):
        a = [g.p for g in gap_law(1.7, 9)]
        b = [g.p for g in beta_stopped_geom_params(1.7, 1.0, 9)]
        assert a == b

    def test_beta_stopped_examples(self):
        (t1,) = beta_stopped_geom_params(1.0, 2.0, 1)
        assert abs(t1.p - 2.0 / 3.0) < 1e-15
        t = [g.p for g in beta_stopped_geom_params(1.0, 0.5, 2)]
        assert abs(t[0] - 1.0 / 3.0) < 1e-15
        assert abs(t[1] - 0.6) < 1e-15


class TestConvolution:
    def test_single_law_round_trip(self):
        law = GeometricLaw(0.3)
        pmf = convolve_geometric_laws([law], tol=1e-12)
        for k in range(20):
            assert abs(pmf.probs[k] - law.pmf(k)) < 1e-15

    def test_matches_dense_convolution(self):
        laws = gap_law(1.5, 4)
        got = convolve_geometric_laws(laws, tol=1e-12)
        length = got.probs.size
        acc = np.zeros(length)
        acc[0] = 1.0
        ks = np.arange(length)
        for law in laws:
            acc = np.convolve(acc, law.p * (1.0 - law.p) ** ks)[:length]
        assert np.max(np.abs(got.probs - acc)) < 1e-13

    def test_tail_certified(self):
        pmf = convolve_geometric_laws(gap_law(3.0, 50), tol=1e-8)
        assert 0.0 <= pmf.tail_bound <= 1e-8
        assert abs(math.fsum(pmf.probs.tolist()) + pmf.tail_bound - 1.0) < 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError):
            convolve_geometric_laws([])
        with pytest.raises(ValidationError):
            convolve_geometric_laws(gap_law(1.0, 2), tol=0.0)


class TestMnPmfProduct:
    def test_starts_at_one(self):
        pmf = mn_pmf_product(1.0, 3)
        assert pmf.support_offset == 1
        assert pmf.prob(0) == 0.0

    def test_m2_at_one_third(self):
        pmf = mn_pmf_product(1.0, 2)
        assert abs(pmf.prob(1) - 1.0 / 3.0) < 1e-14

    def test_m1_is_geometric_on_positives(self):
        pmf = mn_pmf_product(1.0, 1)
        for k in range(1, 21):
            assert abs(pmf.prob(k) - 0.5 ** k) < 1e-15

    def test_mean_is_one_plus_theta_harmonic(self):
        for theta, n in ((0.5, 10), (2.0, 50), (1.0, 200)):
            pmf = mn_pmf_product(theta, n, tol=1e-12)
            assert abs(pmf.mean() - (1.0 + theta * harmonic(n))) < 1e-8

    def test_large_n_runs_fast_enough(self):
        pmf = mn_pmf_product(1.0, 10_000, tol=1e-10)
        assert pmf.tail_bound <= 1e-10
        assert abs(pmf.mean() - (1.0 + harmonic(10_000))) < 1e-6


class TestMnCdfTailMoments:
    def test_single_draw(self):
        assert abs(mn_cdf_tail_moments(0.0, 1.0, 1, 1) - 0.5) < 1e-12

    def test_k_zero_vanishes(self):
        for alpha, theta, n in ((0.0, 1.0, 5), (0.4, 0.7, 12), (0.9, 2.0, 30)):
            assert abs(mn_cdf_tail_moments(alpha, theta, n, 0)) < 1e-12

    def test_two_draws(self):
        assert abs(mn_cdf_tail_moments(0.0, 1.0, 2, 1) - 1.0 / 3.0) < 1e-12

    def test_agrees_with_convolution_route(self):
        for n in (1, 2, 5, 12):
            for theta in (0.5, 1.0, 3.0):
                pmf = mn_pmf_product(theta, n, tol=1e-13)
                for k in (1, 3, 10, 25, 60):
                    got = mn_cdf_tail_moments(0.0, theta, n, k)
                    assert abs(got - pmf.cdf(k)) < 1e-8

    def test_single_draw_any_alpha(self):
        for k in (1, 5):
            got = mn_cdf_tail_moments(0.3, 0.7, 1, k)
            assert abs(got - (1.0 - tail_prob_x1(0.3, 0.7, k))) < 1e-12

    def test_n_cap(self):
        with pytest.raises(ValidationError):
            mn_cdf_tail_moments(0.0, 1.0, 31, 5)

    def test_cancellation_warning(self):
        with pytest.warns(PrecisionLossWarning):
            mn_cdf_tail_moments(0.0, 10.0, 30, 1)

    def test_no_warning_when_stable(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            mn_cdf_tail_moments(0.0, 1.0, 5, 3)


class TestTailProbX1:
    def test_alpha_zero_closed_form(self):
        for theta in (0.5, 2.0):
            for k in (0, 1, 4):
                want = (theta / (1.0 + theta)) ** k
                assert abs(tail_prob_x1(0.0, theta, k) - want) < 1e-15

    def test_empty_product(self):
        assert tail_prob_x1(0.7, 0.1, 0) == 1.0

    def test_half_alpha_zero_theta(self):
        assert abs(tail_prob_x1(0.5, 0.0, 1) - 0.5) < 1e-15

    def test_validation(self):
        with pytest.raises(ValidationError):
            tail_prob_x1(1.0, 1.0, 2)
        with pytest.raises(ValidationError):
            tail_prob_x1(0.5, -0.5, 2)
        with pytest.raises(ValidationError):
            tail_prob_x1(0.0, 1.0, -1)


class TestBinomMomentX1:
    def test_alpha_zero_powers(self):
        for theta in (0.5, 3.0):
            for k in (0, 1, 2, 5):
                assert abs(binom_moment_x1(0.0, theta, k) - theta ** k) < 1e-12

    def test_first_moment_formula(self):
        for alpha in (0.1, 0.3):
            theta = 0.8
            want = (theta + alpha) / (1.0 - 2.0 * alpha)
            assert abs(binom_moment_x1(alpha, theta, 1) - want) < 1e-14

    def test_infinite_cases(self):
        assert binom_moment_x1(0.5, 1.0, 1) == math.inf
        assert binom_moment_x1(0.25, 1.0, 3) == math.inf
        assert binom_moment_x1(0.2, 1.0, 3) < math.inf

    def test_mean_equals_sum_of_tails(self):
        # E(X_1 - 1) = sum_{k>=1} P(X_1 > k), accumulated as a running product
        cases = ((0.0, 1.0, 200), (0.2, 0.5, 2_000), (0.3, 0.2, 300_000))
        for alpha, theta, kmax in cases:
            running = 1.0
            total = 0.0
            for i in range(1, kmax + 1):
                running *= (theta + i * alpha) / (1.0 + theta + (i - 1.0) * alpha)
                total += running
            # spot-check the running product against the public op
            assert abs(running - tail_prob_x1(alpha, theta, kmax)) < 1e-12
            assert abs(total - binom_moment_x1(alpha, theta, 1)) < 1e-6


class TestPartitionFormulas:
    def test_ewens_hand_values(self):
        assert abs(ewens_pmf(1.0, {3: 1}) - 1.0 / 3.0) < 1e-14
        assert abs(ewens_pmf(1.0, {2: 1, 1: 1}) - 0.5) < 1e-14
        assert abs(ewens_pmf(1.0, {1: 3}) - 1.0 / 6.0) < 1e-14

    def test_dt_hand_values(self):
        assert abs(dt_pmf(1.0, (2,)) - 0.5) < 1e-14
        assert abs(dt_pmf(1.0, (1, 1)) - 0.5) < 1e-14
        assert abs(dt_pmf(1.0, (3,)) - 1.0 / 3.0) < 1e-14

    def test_single_block_agreement(self):
        for n in range(2, 7):
            assert abs(dt_pmf(0.9, (n,)) - ewens_pmf(0.9, {n: 1})) < 1e-14

    def test_ewens_normalizes(self):
        for theta in (0.5, 1.0, 2.0, 5.0):
            for n in (3, 7, 12):
                total = math.fsum(
                    ewens_pmf(theta, part) for part in enumerate_partitions(n))
                assert abs(total - 1.0) < 1e-12

    def test_dt_normalizes(self):
        for theta in (0.7, 1.3):
            for n in (2, 6, 10):
                total = math.fsum(
                    dt_pmf(theta, comp) for comp in enumerate_compositions(n))
                assert abs(total - 1.0) < 1e-12

    def test_dt_aggregates_to_ewens(self):
        theta = 0.8
        for n in (3, 5, 8):
            grouped = {}
            for comp in enumerate_compositions(n):
                key = tuple(sorted(comp, reverse=True))
                grouped[key] = grouped.get(key, 0.0) + dt_pmf(theta, comp)
            for part in enumerate_partitions(n):
                key = tuple(sorted(
                    (j for j, m in part.items() for _ in range(m)), reverse=True))
                assert abs(grouped[key] - ewens_pmf(theta, part)) < 1e-12

    def test_ewens_validation(self):
        with pytest.raises(ValidationError):
            ewens_pmf(0.0, {2: 1})
        with pytest.raises(ValidationError):
            ewens_pmf(1.0, {})
        with pytest.raises(ValidationError):
            ewens_pmf(1.0, {0: 2})
        with pytest.raises(ValidationError):
            ewens_pmf(1.0, {2: -1})

    def test_dt_validation(self):
        with pytest.raises(ValidationError):
            dt_pmf(1.0, ())
        with pytest.raises(ValidationError):
            dt_pmf(1.0, (2, 0))
        with pytest.raises(ValidationError):
            dt_pmf(-1.0, (2,))


class TestEnumeration:
    def test_counts(self):
        assert len(list(enumerate_partitions(1))) == 1
        assert len(list(enumerate_partitions(3))) == 3
        assert len(list(enumerate_partitions(5))) == 7
        assert len(list(enumerate_compositions(1))) == 1
        assert len(list(enumerate_compositions(3))) == 4
        assert len(list(enumerate_compositions(5))) == 16

    def test_no_duplicates(self):
        parts = [frozenset(p.items()) for p in enumerate_partitions(8)]
        assert len(parts) == len(set(parts)) == 22
        comps = list(enumerate_compositions(8))
        assert len(comps) == len(set(comps)) == 128
        assert all(sum(c) == 8 for c in comps)

    def test_partition_order(self):
        stream = list(enumerate_partitions(4))
        assert stream[0] == {4: 1}
        assert stream[-1] == {1: 4}

    def test_bounds(self):
        with pytest.raises(ValidationError):
            list(enumerate_partitions(26))
        with pytest.raises(ValidationError):
            list(enumerate_compositions(15))

    def test_multiplicities_of(self):
        assert multiplicities_of((3, 1, 3)) == {3: 2, 1: 1}


class TestIndicatorAndMin:
    def test_indicator_values(self):
        assert abs(indicator_prob(1.0, 1) - 0.5) < 1e-15
        assert abs(indicator_prob(2.0, 3) - 0.4) < 1e-15

    def test_indicator_decreasing(self):
        vals = [indicator_prob(1.5, i) for i in range(1, 40)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_min_law_examples(self):
        law = min_law(1.0, 2)
        assert abs(law.p - 2.0 / 3.0) < 1e-15
        assert abs(law.pmf(0) - 2.0 / 3.0) < 1e-15  # P(X_min = 1)
        assert abs(min_law(3.0, 3).p - 0.5) < 1e-15

    def test_min_law_n1_matches_tail_prob(self):
        theta = 2.7
        law = min_law(theta, 1)
        for k in (1, 2, 6):
            # P(X_1 > k) = P(geometric part >= k)
            tail = (1.0 - law.p) ** k
            assert abs(tail - tail_prob_x1(0.0, theta, k)) < 1e-14


class TestMissingValuesLimit:
    def test_pgf_values(self):
        assert abs(complete_sample_prob(1.0) - 0.5) < 1e-14
        assert abs(complete_sample_prob(2.0) - 1.0 / 6.0) < 1e-14
        for theta in (0.3, 1.0, 4.5):
            assert abs(k0inf_pgf(theta, 1.0) - 1.0) < 1e-13

    def test_pgf_validation(self):
        with pytest.raises(ValidationError):
            k0inf_pgf(0.0, 0.5)
        with pytest.raises(ValidationError):
            k0inf_pgf(1.0, 1.5)

    def test_levy_atoms_theta_one(self):
        atoms = k0inf_levy_atoms(1.0, 12)
        for k, lam in enumerate(atoms, start=1):
            assert abs(lam - 1.0 / (k * 2.0 ** k)) < 1e-12

    def test_levy_atoms_nonnegative(self):
        for theta in (0.3, 1.0, 2.7, 8.0):
            assert all(lam >= 0.0 for lam in k0inf_levy_atoms(theta, 40))

    def test_atoms_reconstruct_pgf(self):
        z = 0.5
        for theta in (0.5, 1.0, 2.7):
            atoms = k0inf_levy_atoms(theta, 80)
            log_ratio = math.fsum(
                lam * z ** k for k, lam in enumerate(atoms, start=1))
            got = math.exp(log_ratio) * k0inf_pgf(theta, 0.0)
            assert abs(got - k0inf_pgf(theta, z)) < 1e-8

    def test_pmf_theta_one_is_geometric_half(self):
        pmf = k0inf_pmf(1.0, tol=1e-12)
        for k in range(11):
            assert abs(pmf.prob(k) - 0.5 ** (k + 1)) < 1e-10

    def test_pmf_integer_theta_matches_gap_convolution(self):
        for m in (1, 2, 3):
            direct = k0inf_pmf(float(m), tol=1e-10)
            conv = convolve_geometric_laws(gap_law(float(m), m), tol=1e-10)
            assert total_variation(direct, conv) < 1e-8

    def test_pmf_mean_matches_pgf_derivative(self):
        for theta in (0.37, 2.2):
            pmf = k0inf_pmf(theta, tol=1e-12)
            want = theta * (digamma(1.0 + theta) - digamma(1.0))
            assert abs(pmf.mean() - want) < 1e-7

    def test_pmf_tail_certified(self):
        pmf = k0inf_pmf(3.1, tol=1e-9)
        assert pmf.tail_bound <= 1e-9
        assert abs(math.fsum(pmf.probs.tolist()) + pmf.tail_bound - 1.0) < 1e-12


class TestTiesAtMaximum:
    def test_tail_at_zero(self):
        for theta in (0.4, 1.0, 6.0):
            assert linf_tail(theta, 0) == 1.0

    def test_tail_matches_pochhammer_ratio(self):
        theta = 0.6
        for k in range(1, 11):
            want = pochhammer(1.0, k) / pochhammer(1.0 + theta, k)
            assert abs(linf_tail(theta, k) - want) < 1e-12

    def test_mean_values(self):
        assert abs(linf_mean(3.0) - 1.5) < 1e-14
        assert linf_mean(1.0) == math.inf
        assert linf_mean(0.5) == math.inf

    def test_mean_equals_tail_sum(self):
        total = math.fsum(linf_tail(3.0, k) for k in range(400))
        assert abs(total - 1.5) < 1e-4

    def test_second_binom(self):
        assert abs(linf_second_binom(3.0) - 1.5) < 1e-14
        assert linf_second_binom(2.0) == math.inf
        assert linf_second_binom(0.9) == math.inf


class TestBetaLogSeries:
    def test_known_params(self):
        params, _ = beta_log_series_params(1.0, 1.0, 3)
        assert [(round(p, 12), r) for p, r in params] == [
            (0.5, 1.0), (round(1.0 / 3.0, 12), 2.0), (0.25, 3.0), (0.2, 4.0)]

    def test_first_term_mean(self):
        a, b = 1.7, 0.4
        params, _ = beta_log_series_params(a, b, 0)
        p0, rate0 = params[0]
        assert abs(p0 / rate0 - b / ((a + b) * a)) < 1e-14

    def test_mean_telescopes_exactly(self):
        for a, b, jmax in ((1.0, 1.0, 0), (1.0, 1.0, 25), (2.5, 0.7, 37)):
            params, tail = beta_log_series_params(a, b, jmax)
            partial = math.fsum(p / r for p, r in params)
            want = digamma(a + b) - digamma(a)
            assert abs(partial + tail - want) < 1e-10

    def test_uniform_total_mean_is_one(self):
        params, tail = beta_log_series_params(1.0, 1.0, 40)
        partial = math.fsum(p / r for p, r in params)
        assert abs(partial + tail - 1.0) < 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError):
            beta_log_series_params(0.0, 1.0, 4)
        with pytest.raises(ValidationError):
            beta_log_series_params(1.0, 1.0, -1)


class TestCsvExport:
    def test_layout(self):
        pmf = DiscretePmf(np.array([0.5, 0.5]), 0.0, support_offset=1)
        text = pmf_to_csv(pmf)
        lines = text.strip().split("\n")
        assert lines[0] == "value,probability"
        assert lines[1].split(",") == ["1", "0.5"]
        assert lines[-1].startswith("tail_bound,")

    def test_round_trip_precision(self):
        pmf = mn_pmf_product(1.3, 4, tol=1e-10)
        lines = pmf_to_csv(pmf).strip().split("\n")[1:-1]
        for line, p in zip(lines, pmf.probs):
            assert float(line.split(",")[1]) == p
