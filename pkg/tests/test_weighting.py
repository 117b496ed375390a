"""Temporal sample weighting and entropy pixel weighting tests."""

import math

import numpy as np
import pytest

from curriseg.grid import Grid2D, SeededRng
from curriseg.weighting import (
    DifficultyBuffer,
    PixelWeightConfig,
    beta_coefficient,
    entropy_values,
    pixel_entropy,
    pixel_weight_matrix,
    pixel_weight_values,
    sample_weights,
    temporal_stats,
)


class TestDifficultyBuffer:
    def test_capacity_evicts_oldest(self):
        buf = DifficultyBuffer(3)
        for d in (0.1, 0.2, 0.3, 0.4):
            buf.push(d)
        assert buf.count == 3
        assert temporal_stats(buf)[0] == pytest.approx((0.2 + 0.3 + 0.4) / 3)

    def test_push_validates_range(self):
        buf = DifficultyBuffer(3)
        with pytest.raises(ValueError):
            buf.push(1.5)
        with pytest.raises(ValueError):
            buf.push(-0.1)

    def test_empty_stats_rejected(self):
        with pytest.raises(ValueError):
            temporal_stats(DifficultyBuffer(3))

    def test_population_statistics(self):
        # entries 0 and 1: mean 0.5, population variance 0.25
        buf = DifficultyBuffer(5)
        buf.push(0.0)
        buf.push(1.0)
        mu, var = temporal_stats(buf)
        assert mu == 0.5
        assert var == 0.25

    def test_matches_numpy_population_moments(self):
        gen = SeededRng(50, 0).generator()
        for _ in range(20):
            vals = gen.uniform(size=int(gen.integers(1, 10)))
            buf = DifficultyBuffer(10)
            for v in vals:
                buf.push(float(v))
            mu, var = temporal_stats(buf)
            assert mu == pytest.approx(vals.mean(), abs=1e-12)
            assert var == pytest.approx(vals.var(ddof=0), abs=1e-12)


class TestSampleWeights:
    def test_worked_value(self):
        # middle sample normalizes to mu_norm 0.5, var_norm 0.7:
        # 0.1 + 0.9 * 0.5 * exp(-0.04/0.08) * (1 - 0.5*0.3) = 0.3320
        cohort = {0: (0.0, 0.0), 1: (0.5, 0.7), 2: (1.0, 1.0)}
        stats = sample_weights(cohort)
        st = stats[1]
        assert st.mu_norm == pytest.approx(0.5)
        assert st.var_norm == pytest.approx(0.7)
        expected = 0.1 + 0.9 * 0.5 * math.exp(-0.5) * 0.85
        assert st.w == pytest.approx(expected, abs=1e-12)
        assert st.w == pytest.approx(0.3320, abs=5e-4)

    def test_matches_formula_on_random_cohorts(self):
        gen = SeededRng(51, 0).generator()
        for _ in range(30):
            n = int(gen.integers(2, 25))
            cohort = {i: (float(gen.uniform()), float(gen.uniform(0, 0.25)))
                      for i in range(n)}
            sigma_star = float(gen.uniform(0.2, 0.8))
            gamma = float(gen.uniform(0.1, 0.5))
            w_min_s = float(gen.uniform(0.05, 0.3))
            stats = sample_weights(cohort, sigma_star, gamma, w_min_s)
            mus = np.array([cohort[i][0] for i in sorted(cohort)])
            vrs = np.array([cohort[i][1] for i in sorted(cohort)])
            span_m = mus.max() - mus.min()
            span_v = vrs.max() - vrs.min()
            for idx, sid in enumerate(sorted(cohort)):
                mn = (mus[idx] - mus.min()) / span_m if span_m else 0.0
                vn = (vrs[idx] - vrs.min()) / span_v if span_v else sigma_star
                w_mu = 1 - mn
                w_sig = math.exp(-((vn - sigma_star) ** 2) / (2 * gamma**2))
                w_out = 1 - mn * (1 - vn)
                expected = w_min_s + (1 - w_min_s) * w_mu * w_sig * w_out
                assert stats[sid].w == pytest.approx(expected, abs=1e-12)

    def test_floor_holds(self):
        gen = SeededRng(52, 0).generator()
        for _ in range(30):
            n = int(gen.integers(2, 20))
            cohort = {i: (float(gen.uniform()), float(gen.uniform()))
                      for i in range(n)}
            stats = sample_weights(cohort)
            for st in stats.values():
                assert 0.1 <= st.w <= 1.0

    def test_degenerate_cohort_is_neutral(self):
        # identical statistics: nobody is penalized beyond the formula at
        # (mu_norm 0, var_norm sigma_star)
        cohort = {i: (0.4, 0.05) for i in range(5)}
        stats = sample_weights(cohort)
        for st in stats.values():
            assert st.mu_norm == 0.0
            assert st.var_norm == 0.5
            assert st.w == pytest.approx(1.0)

    def test_outlier_pattern_downweighted(self):
        # consistently hard (high mean, tiny variance) vs fluctuating medium
        cohort = {0: (0.95, 0.02), 1: (0.5, 0.5), 2: (0.2, 0.45),
                  3: (0.55, 0.6), 4: (0.05, 1.0)}
        stats = sample_weights(cohort)
        assert stats[0].w == min(st.w for st in stats.values())
        assert stats[0].w < 0.5 * stats[1].w
        assert stats[0].w < 0.5 * stats[2].w
        assert stats[0].w == pytest.approx(0.1, abs=1e-6)  # floor binds

    def test_sigma_variants_agree_at_target(self):
        cohort = {0: (0.0, 0.0), 1: (0.5, 0.5), 2: (1.0, 1.0)}
        for variant in ("gaussian", "triangular", "quadratic"):
            stats = sample_weights(cohort, sigma_variant=variant)
            assert stats[1].w_sigma == pytest.approx(1.0)

    def test_triangular_and_quadratic_supports(self):
        # var_norm 1.0 sits gamma*2.5 away from sigma_star: outside both
        # compact supports, so the factor hits zero there
        cohort = {0: (0.0, 0.0), 1: (1.0, 1.0)}
        tri = sample_weights(cohort, sigma_variant="triangular")
        quad = sample_weights(cohort, sigma_variant="quadratic")
        assert tri[1].w_sigma == 0.0
        assert quad[1].w_sigma == 0.0
        gauss = sample_weights(cohort, sigma_variant="gaussian")
        assert gauss[1].w_sigma > 0.0

    def test_ablation_flags(self):
        cohort = {0: (0.1, 0.02), 1: (0.8, 0.01), 2: (0.4, 0.2)}
        full = sample_weights(cohort)
        no_mu = sample_weights(cohort, ablate=frozenset({"drop_mu"}))
        no_sig = sample_weights(cohort, ablate=frozenset({"drop_sigma"}))
        no_out = sample_weights(cohort, ablate=frozenset({"drop_out"}))
        for sid in cohort:
            assert no_mu[sid].w_mu == 1.0
            assert no_sig[sid].w_sigma == 1.0
            assert no_out[sid].w_out == 1.0
            assert no_mu[sid].w_sigma == full[sid].w_sigma
        everything = sample_weights(
            cohort, ablate=frozenset({"drop_mu", "drop_sigma", "drop_out"}))
        for st in everything.values():
            assert st.w == 1.0

    def test_unknown_ablation_rejected(self):
        with pytest.raises(ValueError):
            sample_weights({0: (0.1, 0.1)}, ablate=frozenset({"drop_everything"}))

    def test_empty_cohort_rejected(self):
        with pytest.raises(ValueError):
            sample_weights({})


class TestEntropy:
    def test_worked_value(self):
        assert pixel_entropy(0.25) == pytest.approx(0.8113, abs=5e-5)

    def test_endpoints_and_peak(self):
        assert pixel_entropy(0.0) == 0.0
        assert pixel_entropy(1.0) == 0.0
        assert pixel_entropy(0.5) == 1.0

    def test_symmetry(self):
        gen = SeededRng(53, 0).generator()
        for _ in range(20):
            p = float(gen.uniform())
            assert pixel_entropy(p) == pytest.approx(pixel_entropy(1 - p),
                                                     abs=1e-12)

    def test_matches_definition(self):
        gen = SeededRng(54, 0).generator()
        for _ in range(30):
            p = float(gen.uniform(1e-6, 1 - 1e-6))
            expected = -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
            assert pixel_entropy(p) == pytest.approx(expected, abs=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            pixel_entropy(1.2)

    def test_vectorized_matches_scalar(self):
        probs = np.linspace(0, 1, 11)
        vec = entropy_values(probs)
        for p, e in zip(probs, vec):
            assert e == pixel_entropy(float(p))


class TestBetaCoefficient:
    def test_linear_decay(self):
        cfg = PixelWeightConfig(0.1, 50, "linear")
        assert beta_coefficient(0, cfg) == 1.0
        assert beta_coefficient(25, cfg) == 0.5
        assert beta_coefficient(50, cfg) == 0.0

    def test_exponential_decay(self):
        cfg = PixelWeightConfig(0.1, 50, "exponential")
        assert beta_coefficient(0, cfg) == 1.0
        assert beta_coefficient(50, cfg) == pytest.approx(math.exp(-1))

    def test_monotone_decreasing(self):
        for variant in ("linear", "exponential"):
            cfg = PixelWeightConfig(0.1, 40, variant)
            vals = [beta_coefficient(t, cfg) for t in range(41)]
            assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_out_of_window_rejected(self):
        cfg = PixelWeightConfig(0.1, 50, "linear")
        with pytest.raises(ValueError):
            beta_coefficient(-1, cfg)
        with pytest.raises(ValueError):
            beta_coefficient(51, cfg)


class TestPixelWeights:
    def test_worked_value_midway(self):
        # t = t_c/2, H = 1 (p = 0.5), linear beta: 0.1 + 0.9*(1 - 0.5) = 0.55
        cfg = PixelWeightConfig(0.1, 50, "linear")
        w = pixel_weight_values(np.array([0.5]), 25, cfg)
        assert w[0] == pytest.approx(0.55, abs=1e-12)

    def test_confident_pixels_keep_full_weight(self):
        cfg = PixelWeightConfig(0.1, 50, "linear")
        w = pixel_weight_values(np.array([0.0, 1.0]), 10, cfg)
        assert np.all(w == 1.0)

    def test_floor_and_ceiling(self):
        gen = SeededRng(55, 0).generator()
        cfg = PixelWeightConfig(0.1, 50, "linear")
        for t in (0, 13, 50):
            probs = gen.uniform(size=(6, 6))
            w = pixel_weight_values(probs, t, cfg)
            assert np.all(w >= 0.1) and np.all(w <= 1.0)

    def test_weights_rise_as_beta_decays(self):
        cfg = PixelWeightConfig(0.1, 50, "linear")
        probs = np.full((4, 4), 0.5)
        w_early = pixel_weight_values(probs, 1, cfg)
        w_late = pixel_weight_values(probs, 49, cfg)
        assert np.all(w_late > w_early)

    def test_matrix_wrapper_validates_probabilities(self):
        cfg = PixelWeightConfig(0.1, 50, "linear")
        with pytest.raises(ValueError):
            pixel_weight_matrix(Grid2D(np.array([[1.5]])), 1, cfg)

    def test_matrix_wrapper_matches_values(self):
        gen = SeededRng(56, 0).generator()
        cfg = PixelWeightConfig(0.1, 50, "exponential")
        probs = gen.uniform(size=(5, 5))
        a = pixel_weight_matrix(Grid2D(probs), 7, cfg).values
        b = pixel_weight_values(probs, 7, cfg)
        assert np.array_equal(a, b)
