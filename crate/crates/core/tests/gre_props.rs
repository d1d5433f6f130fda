use adq_core::gre::{
    admissible_alpha_range, gamma_of_leaks, gre_decode, gre_encode, gre_truncation_bound,
    GreConfig, GreInit,
};
use adq_core::quantizers::FlakyMode;
use adq_core::rng::Rng;
use proptest::prelude::*;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

proptest! {
    /// The ideal multiplierless encoder hits the golden-ratio truncation
    /// bound for every quantizer slope in the stated range, so the exact
    /// slope does not need to be trimmed.
    #[test]
    fn ideal_accuracy_is_uniform_over_the_slope_range(
        alpha in 1.25..2.0f64,
        x in -1.0..1.0f64,
    ) {
        let run = gre_encode(&GreConfig::ideal(alpha, 40), x, &mut Rng::seeded(0)).unwrap();
        let decoded = gre_decode(&run.bits, INV_PHI, 40).unwrap() / INV_PHI;
        let bound = INV_PHI.powi(39);
        prop_assert!(
            (x - decoded).abs() <= bound * (1.0 + 1e-9),
            "error {} above {} at alpha={}", (x - decoded).abs(), bound, alpha
        );
    }

    /// The decode base is the positive root of the leak polynomial
    /// 1 - l1 g - l1 l2 g^2.
    #[test]
    fn decode_base_solves_the_leak_polynomial(
        lambda1 in 0.05..1.0f64,
        lambda2 in 0.05..1.0f64,
    ) {
        let g = gamma_of_leaks(lambda1, lambda2).unwrap();
        prop_assert!(g > 0.0);
        let residual = 1.0 - lambda1 * g - lambda1 * lambda2 * g * g;
        prop_assert!(residual.abs() < 1e-12, "residual {} at ({}, {})", residual, lambda1, lambda2);
    }

    /// With a zero-width hesitation band every fallback behaves like the
    /// ideal comparator.
    #[test]
    fn band_modes_coincide_at_zero_width(
        alpha in 1.25..2.0f64,
        x in -1.0..1.0f64,
        p in 0.0..1.0f64,
    ) {
        let mut cfg = GreConfig::ideal(alpha, 50);
        let reference = gre_encode(&cfg, x, &mut Rng::seeded(4)).unwrap();
        for mode in [FlakyMode::AlwaysPlus, FlakyMode::AlwaysMinus, FlakyMode::Coin(p)] {
            cfg.mode = mode;
            let run = gre_encode(&cfg, x, &mut Rng::seeded(4)).unwrap();
            prop_assert_eq!(run.bits.bits(), reference.bits.bits());
        }
    }
}

#[test]
fn leaky_flaky_configs_stay_bounded_and_decode() {
    // Sweeps the robustness box: any leak pair in [.9, 1]^2, any
    // comparator band up to .3 wide with adversarial fallbacks, and any
    // slope in the band-dependent admissible window. States must stay
    // small over a long run and the first 41 digits must reconstruct the
    // input through the leak-adjusted base.
    let (lo, hi) = admissible_alpha_range(0.3).unwrap();
    let mut rng = Rng::seeded(11);
    for trial in 0..100 {
        let mode = match trial % 4 {
            0 => FlakyMode::Ideal,
            1 => FlakyMode::AlwaysPlus,
            2 => FlakyMode::AlwaysMinus,
            _ => FlakyMode::Coin(0.5),
        };
        let cfg = GreConfig {
            alpha: rng.range(lo, hi),
            nu: rng.range(0.0, 0.3),
            mode,
            lambda1: rng.range(0.9, 1.0),
            lambda2: rng.range(0.9, 1.0),
            n: 2_000,
            init: GreInit::ZeroX,
        };
        let x = rng.range(-1.0, 1.0);
        let run = gre_encode(&cfg, x, &mut rng).unwrap();
        let peak = run.states.iter().fold(0.0f64, |m, &u| m.max(u.abs()));
        assert!(peak <= 10.0, "state peak {peak} in trial {trial}");
        let gamma = gamma_of_leaks(cfg.lambda1, cfg.lambda2).unwrap();
        let err = (x - gre_decode(&run.bits, gamma, 40).unwrap()).abs();
        let bound = (gamma / (1.0 - gamma)) * gamma.powi(40);
        assert!(err <= bound, "error {err} above {bound} in trial {trial}");
    }
}

#[test]
fn truncation_bound_tracks_the_initial_convention() {
    // The power-zero convention pays one factor of gamma less than the
    // power-one convention at every length.
    for n in [5usize, 20, 60] {
        let a = gre_truncation_bound(INV_PHI, n, GreInit::XZero);
        let b = gre_truncation_bound(INV_PHI, n, GreInit::ZeroX);
        assert!((b / a - INV_PHI).abs() < 1e-12);
        assert!(a > 0.0 && b < a);
    }
}
