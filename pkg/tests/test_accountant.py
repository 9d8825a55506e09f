import math

import numpy as np
import pytest

from amplify_acct.accountant import (
    Bis,
    CalibrationBracketError,
    CompositionPlan,
    DEFAULT_ORDERS,
    DpGuarantee,
    DropoutSplit,
    Gaussian,
    MixtureSplit,
    ModelSplit,
    PartialSplit,
    PoissonGaussian,
    RdpCurve,
    bis_epoch_composition,
    calibrate_sigma,
    compare_bis_poisson,
    compose,
    mechanism_label,
    rdp_curve,
    scale_curve,
    to_delta,
    to_dp,
)

E = math.e


class TestRdpCurve:
    def test_gaussian_curve_values(self):
        curve = rdp_curve(Gaussian(c=1, sigma=1), orders=(2, 3, 4))
        assert np.allclose(curve.epsilons, [1.0, 1.5, 2.0])
        assert curve.provenance == ("exact", "exact", "exact")

    def test_poisson_full_rate_collapses_to_gaussian(self):
        poisson = rdp_curve(PoissonGaussian(c=1, sigma=1, gamma=1.0))
        gaussian = rdp_curve(Gaussian(c=1, sigma=1))
        assert np.max(np.abs(poisson.epsilons - gaussian.epsilons)) <= 1e-12

    def test_poisson_half_rate_order2(self):
        curve = rdp_curve(PoissonGaussian(c=1, sigma=1, gamma=0.5), orders=(2,))
        assert curve.epsilons[0] == pytest.approx(math.log(0.75 + 0.25 * E), rel=1e-12)

    def test_poisson_zero_scale_is_free(self):
        curve = rdp_curve(PoissonGaussian(c=0, sigma=1, gamma=0.3), orders=(2, 10, 100))
        assert np.allclose(curve.epsilons, 0.0, atol=1e-12)

    def test_poisson_no_overflow_extreme(self):
        curve = rdp_curve(PoissonGaussian(c=10, sigma=1, gamma=0.2), orders=(100,))
        assert math.isfinite(curve.epsilons[0])

    def test_model_split_d1_equals_gaussian(self):
        split = rdp_curve(ModelSplit(d=1, c=1, sigma=1))
        gaussian = rdp_curve(Gaussian(c=1, sigma=1))
        assert np.max(np.abs(split.epsilons - gaussian.epsilons)) <= 1e-9

    def test_mixture_and_dropout_reuse_model_split(self):
        base = rdp_curve(ModelSplit(d=2, c=1, sigma=2), orders=(2, 5, 9))
        assert np.allclose(rdp_curve(MixtureSplit(d=2, c=1, sigma=2), orders=(2, 5, 9)).epsilons, base.epsilons)
        assert np.allclose(rdp_curve(DropoutSplit(c=1, sigma=2), orders=(2, 5, 9)).epsilons, base.epsilons)

    def test_partial_split_adds_nonsplit_gaussian(self):
        combined = rdp_curve(PartialSplit(c_split=1, c_nonsplit=0.5, d=3, sigma=1), orders=(2, 4))
        split_only = rdp_curve(ModelSplit(d=3, c=1, sigma=1), orders=(2, 4))
        extra = np.array([2, 4]) * 0.25 / 2.0
        assert np.allclose(combined.epsilons, split_only.epsilons + extra)

    def test_bis_full_participation_is_composition(self):
        bis = rdp_curve(Bis(T=10, k=10, c=1, sigma=1))
        gaussian = rdp_curve(Gaussian(c=1, sigma=1))
        assert np.max(np.abs(bis.epsilons - 10 * gaussian.epsilons)) <= 1e-9

    def test_bis_tight_provenance_records_cost_guard(self):
        curve = rdp_curve(Bis(T=10, k=4, c=1, sigma=2))
        # C(10,4)=210: enumeration fits the budget only for orders 2 and 3.
        assert curve.provenance[:2] == ("tight", "tight")
        assert set(curve.provenance[2:]) == {"loose"}

    def test_loose_mode_provenance(self):
        curve = rdp_curve(Bis(T=10, k=4, c=1, sigma=2), mode="loose")
        assert set(curve.provenance) == {"loose"}

    def test_k1_tight_uses_series_everywhere(self):
        curve = rdp_curve(ModelSplit(d=1000, c=1, sigma=1))
        assert set(curve.provenance) == {"tight"}
        assert np.all(np.diff(curve.epsilons) >= -1e-12)

    def test_invalid_mode(self):
        with pytest.raises(ValueError):
            rdp_curve(Gaussian(c=1, sigma=1), mode="middling")

    @pytest.mark.parametrize("bad", [
        lambda: Gaussian(c=-1, sigma=1),
        lambda: Gaussian(c=1, sigma=0),
        lambda: PoissonGaussian(c=1, sigma=1, gamma=0),
        lambda: PoissonGaussian(c=1, sigma=1, gamma=1.2),
        lambda: ModelSplit(d=0, c=1, sigma=1),
        lambda: Bis(T=5, k=6, c=1, sigma=1),
        lambda: Bis(T=0, k=0, c=1, sigma=1),
        lambda: PartialSplit(c_split=1, c_nonsplit=-2, d=2, sigma=1),
    ])
    def test_spec_validation(self, bad):
        with pytest.raises(ValueError):
            bad()


class TestCompose:
    def test_triple_gaussian(self):
        plan = CompositionPlan(((Gaussian(c=1, sigma=1), 3),))
        assert compose(plan, orders=(2,)).epsilons[0] == pytest.approx(3.0, abs=1e-12)

    def test_mixed_plan(self):
        plan = CompositionPlan(((Gaussian(c=1, sigma=1), 1), (Gaussian(c=1, sigma=2), 1)))
        assert compose(plan, orders=(4,)).epsilons[0] == pytest.approx(2.0 + 0.5, abs=1e-12)

    def test_bis_full_vs_repeated_gaussian(self):
        left = compose(CompositionPlan(((Bis(T=10, k=10, c=1, sigma=1), 1),)))
        right = compose(CompositionPlan(((Gaussian(c=1, sigma=1), 10),)))
        assert np.max(np.abs(left.epsilons - right.epsilons)) <= 1e-9

    def test_linear_in_counts(self):
        single = compose(CompositionPlan(((PoissonGaussian(c=1, sigma=2, gamma=0.3), 1),)), orders=(2, 7))
        many = compose(CompositionPlan(((PoissonGaussian(c=1, sigma=2, gamma=0.3), 41),)), orders=(2, 7))
        assert np.allclose(many.epsilons, 41 * single.epsilons)

    def test_provenance_takes_weakest_tag(self):
        plan = CompositionPlan(((Gaussian(c=1, sigma=1), 1), (Bis(T=10, k=4, c=1, sigma=2), 1)))
        curve = compose(plan, orders=(2, 50))
        assert curve.provenance == ("tight", "loose")

    def test_empty_plan_rejected(self):
        with pytest.raises(ValueError):
            CompositionPlan(())


class TestConversions:
    def test_single_order_curve(self):
        curve = RdpCurve((2,), np.array([1.0]), ("exact",))
        guarantee = to_dp(curve, math.exp(-1))
        assert guarantee.epsilon == pytest.approx(2.0, abs=1e-12)
        assert guarantee.achieving_order == 2

    def test_gaussian_grid_minimization(self):
        curve = rdp_curve(Gaussian(c=1, sigma=1))
        guarantee = to_dp(curve, 1e-5)
        assert guarantee.epsilon == pytest.approx(5.302585092994046, rel=1e-12)
        assert guarantee.achieving_order == 6

    def test_epsilon_nonincreasing_in_delta(self):
        curve = rdp_curve(Gaussian(c=1, sigma=2))
        assert to_dp(curve, 1e-7).epsilon >= to_dp(curve, 1e-5).epsilon >= to_dp(curve, 1e-3).epsilon

    def test_delta_out_of_range(self):
        curve = rdp_curve(Gaussian(c=1, sigma=1))
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                to_dp(curve, bad)

    def test_to_delta_inverts_single_order(self):
        curve = RdpCurve((2,), np.array([1.0]), ("exact",))
        assert to_delta(curve, 2.0) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_to_delta_clamps_to_one(self):
        curve = rdp_curve(Gaussian(c=1, sigma=1))
        assert to_delta(curve, 0.0) == 1.0

    def test_round_trip_consistency(self):
        curve = scale_curve(rdp_curve(PoissonGaussian(c=1, sigma=2, gamma=0.25)), 50)
        for delta in (1e-7, 1e-5, 1e-2):
            eps = to_dp(curve, delta).epsilon
            assert to_delta(curve, eps) <= delta * (1 + 1e-9)

    def test_bis_beats_poisson_delta_small_T(self):
        bis = rdp_curve(Bis(T=60, k=24, c=1, sigma=2))
        poisson = scale_curve(rdp_curve(PoissonGaussian(c=1, sigma=2, gamma=0.4)), 60)
        assert to_delta(bis, 10.0) <= to_delta(poisson, 10.0)

    def test_guarantee_validation(self):
        with pytest.raises(ValueError):
            DpGuarantee(epsilon=1.0, delta=0.0, achieving_order=2)


class TestCalibration:
    def test_gaussian_round_trip(self):
        target = to_dp(scale_curve(rdp_curve(Gaussian(c=1, sigma=3.7)), 5), 1e-5).epsilon
        result = calibrate_sigma(Gaussian(c=1, sigma=1), 5, target, 1e-5)
        assert result.sigma == pytest.approx(3.7, rel=1e-3)
        assert result.achieved_epsilon <= target

    def test_poisson_calibration_matches_direct_accounting(self):
        result = calibrate_sigma(PoissonGaussian(c=1, sigma=1, gamma=0.1), 1000, 8.0, 1e-5)
        achieved = to_dp(
            scale_curve(rdp_curve(PoissonGaussian(c=1, sigma=result.sigma, gamma=0.1)), 1000), 1e-5
        ).epsilon
        assert achieved == pytest.approx(result.achieved_epsilon, rel=1e-12)
        assert achieved <= 8.0
        assert 8.0 - achieved <= 1e-4 * 8.0

    def test_monotone_in_count_and_target(self):
        sigmas_by_count = [
            calibrate_sigma(Gaussian(c=1, sigma=1), count, 2.0, 1e-5).sigma for count in (1, 4, 16)
        ]
        assert sigmas_by_count == sorted(sigmas_by_count)
        sigmas_by_target = [
            calibrate_sigma(Gaussian(c=1, sigma=1), 4, eps, 1e-5).sigma for eps in (1.0, 2.0, 8.0)
        ]
        assert sigmas_by_target == sorted(sigmas_by_target, reverse=True)

    def test_unachievable_target_names_endpoints(self):
        with pytest.raises(CalibrationBracketError, match="not bracketed"):
            calibrate_sigma(Gaussian(c=1, sigma=1), 10**6, 1e-9, 1e-12)

    def test_zero_clip_rejected(self):
        with pytest.raises(ValueError):
            calibrate_sigma(Gaussian(c=0, sigma=1), 1, 1.0, 1e-5)


class TestBisEpochComposition:
    def test_single_epoch_is_plain_bis(self):
        composed = bis_epoch_composition(10, 4, 1, 1.0, 2.0)
        plain = rdp_curve(Bis(T=10, k=4, c=1, sigma=2))
        assert np.allclose(composed.epsilons, plain.epsilons)

    def test_epochs_cost_at_least_joint(self):
        # Like-for-like comparison: at T=60 the joint curve degrades to the
        # loose bound anyway, and the exact composed value may sit below a
        # loose joint bound, so the ordering is asserted between matching
        # bound flavors.
        composed = bis_epoch_composition(10, 4, 6, 1.0, 2.0, mode="loose")
        joint = rdp_curve(Bis(T=60, k=24, c=1, sigma=2), mode="loose")
        assert np.all(composed.epsilons >= joint.epsilons - 1e-12)

    def test_unit_epochs_are_gaussian_composition(self):
        composed = bis_epoch_composition(1, 1, 5, 1.0, 1.0)
        gaussian = rdp_curve(Gaussian(c=1, sigma=1))
        assert np.max(np.abs(composed.epsilons - 5 * gaussian.epsilons)) <= 1e-9


class TestCompareBisPoisson:
    def test_full_participation_reduction(self):
        cmp = compare_bis_poisson(6, 6, 1.0, 1.0, orders=tuple(range(2, 30)))
        assert np.max(np.abs(cmp.eps_bis_tight - cmp.eps_poisson)) <= 1e-9

    def test_small_T_tight_dominates(self):
        cmp = compare_bis_poisson(10, 4, 1.0, 2.0)
        assert cmp.tight_below_poisson
        assert cmp.poisson_over_tight_ratio(100) > cmp.poisson_over_tight_ratio(10)

    def test_loose_dominates_above_threshold(self):
        cmp = compare_bis_poisson(8, 4, 1.0, 2.0)  # k/T = 0.5 >= 0.25
        assert cmp.loose_below_poisson

    def test_randomized_dominance_sweep(self):
        # Tight-mode dominance holds wherever the exact forward path is
        # live (provenance "tight"); degraded orders at k/T < 0.2 may not
        # dominate, matching the efficient bound's own threshold.  Loose
        # dominance is asserted for k/T >= 0.25.
        rng = np.random.default_rng(7)
        for _ in range(8):
            T = int(rng.integers(2, 13))
            k = int(rng.integers(1, T + 1))
            sigma = float(rng.choice([0.5, 1.0, 2.0, 4.0]))
            cmp = compare_bis_poisson(T, k, 1.0, sigma)
            exact = np.array([p == "tight" for p in cmp.provenance_tight])
            assert np.all(cmp.eps_bis_tight[exact] <= cmp.eps_poisson[exact] + 1e-9), (T, k, sigma)
            if k / T >= 0.25:
                assert cmp.loose_below_poisson, (T, k, sigma)


class TestLabels:
    def test_labels_are_stable(self):
        assert mechanism_label(Gaussian(c=1, sigma=2)) == "gaussian(c=1,sigma=2)"
        assert mechanism_label(Bis(T=10, k=4, c=1, sigma=2)) == "bis(T=10,k=4,c=1,sigma=2)"
        assert mechanism_label(PartialSplit(c_split=1, c_nonsplit=0.5, d=3, sigma=2)) == (
            "partial-split(d=3,c_split=1,c_nonsplit=0.5,sigma=2)"
        )
