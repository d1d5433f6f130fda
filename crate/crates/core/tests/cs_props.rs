use adq_core::cs::{cv_select, draw_ensemble, error_interval, omp, CvConfig, EnsembleSpec};
use adq_core::rng::Rng;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// With the holdout sized by the conservative constant, the ratio of
/// true error to holdout residual stays inside [1/(1+eps), 1/(1-eps)]
/// for every estimate, in all but at most a xi fraction of trials.
#[test]
fn holdout_ratios_stay_in_the_certified_bracket() {
    let eps = 0.5;
    let xi = 0.02;
    let p = 10;
    let cfg = CvConfig::from_accuracy(eps, p, xi, 8.0).unwrap();
    assert!(cfg.certified());
    let dim = 60;
    let trials = 100;
    let mut bad_trials = 0;
    for trial in 0..trials {
        // decoder side and holdout side draw from disjoint seed streams
        let mut signal_rng = Rng::derive(500, trial);
        let psi = draw_ensemble(&EnsembleSpec::gaussian(
            cfg.rows,
            dim,
            Rng::derive(501, trial).next_u64(),
        ))
        .unwrap();
        let x: Vec<f64> = (0..dim).map(|_| signal_rng.normal()).collect();
        let mut estimates = Vec::with_capacity(p);
        for j in 0..p {
            let scale = 10.0f64.powf(-2.0 + 3.0 * j as f64 / p as f64);
            let est: Vec<f64> = x
                .iter()
                .map(|v| v + scale * signal_rng.normal())
                .collect();
            estimates.push(est);
        }
        let y_psi = psi.matvec(&x);
        let mut violated = false;
        for est in &estimates {
            let diff = sub(&x, est);
            let true_err = norm(&diff);
            let eta = norm(&sub(&y_psi, &psi.matvec(est)));
            let ratio = true_err / eta;
            if !(1.0 / (1.0 + eps)..=1.0 / (1.0 - eps)).contains(&ratio) {
                violated = true;
            }
        }
        if violated {
            bad_trials += 1;
        }

        if trial == 0 {
            let report = cv_select(&psi, &y_psi, &estimates, &cfg).unwrap();
            assert!(report.certified);
            let best = estimates
                .iter()
                .map(|e| norm(&sub(&x, e)))
                .fold(f64::INFINITY, f64::min);
            let (lo, hi) = report.oracle_interval;
            assert!(lo <= best && best <= hi, "best error {best} outside [{lo}, {hi}]");
        }
    }
    let budget = (xi * trials as f64).ceil() as usize;
    assert!(
        bad_trials <= budget,
        "{bad_trials} of {trials} trials broke the bracket, budget {budget}"
    );
}

/// Scoring estimates through rows drawn from the decoder's own matrix
/// reports residuals far below the truth, so the implied intervals miss
/// the real error. A fresh holdout on the same data stays honest.
#[test]
fn reused_decoder_rows_bias_the_residual_low() {
    let eps = 0.6;
    let (n, dim, r) = (60usize, 300usize, 20usize);
    let mut biased = 0;
    let mut honest = 0;
    let seeds = 10u64;
    for s in 0..seeds {
        let phi = draw_ensemble(&EnsembleSpec::gaussian(n, dim, Rng::derive(700, s).next_u64()))
            .unwrap();
        let fresh = draw_ensemble(&EnsembleSpec::gaussian(r, dim, Rng::derive(701, s).next_u64()))
            .unwrap();
        let mut rng = Rng::derive(702, s);
        let x: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let y = phi.matvec(&x);
        // heavy overfit: fit 55 of the 60 measurement dimensions
        let run = omp(&phi, &y, 55).unwrap();
        let est = run.last_estimate();
        let diff = sub(&x, est);
        let true_err = norm(&diff);

        let eta_good = norm(&sub(&fresh.matvec(&x), &fresh.matvec(est)));
        // reuse the first r decoder rows, rescaled to holdout variance
        let reused = phi.top_rows(r).scaled((n as f64 / r as f64).sqrt());
        let eta_bad = norm(&sub(&reused.matvec(&x), &reused.matvec(est)));

        if eta_bad < 0.5 * eta_good && true_err > error_interval(eta_bad, eps).1 {
            biased += 1;
        }
        let (lo, hi) = error_interval(eta_good, eps);
        if lo <= true_err && true_err <= hi {
            honest += 1;
        }
    }
    assert!(biased >= 8, "reuse bias visible in only {biased} of {seeds} seeds");
    assert!(honest >= 8, "fresh holdout honest in only {honest} of {seeds} seeds");
}

proptest! {
    /// If every score approximates its true error within a factor of
    /// 1 +- eps, the smallest score approximates the smallest error the
    /// same way; picking by score is sound.
    #[test]
    fn smallest_score_tracks_smallest_error(
        pairs in prop::collection::vec((0.01..10.0f64, 0.0..1.0f64), 1..20),
        eps in 0.01..0.9f64,
    ) {
        let errors: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let scores: Vec<f64> = pairs
            .iter()
            .map(|p| p.0 * (1.0 - eps + 2.0 * eps * p.1))
            .collect();
        let min_err = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_score = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((1.0 - eps) * min_err <= min_score * (1.0 + 1e-12));
        prop_assert!(min_score <= (1.0 + eps) * min_err * (1.0 + 1e-12));
    }

    /// Structural pursuit invariants on random well-posed systems:
    /// distinct support, nonincreasing residuals, sparsity matching the
    /// iteration count.
    #[test]
    fn pursuit_invariants_on_random_systems(
        rows in 10..30usize,
        extra_cols in 10..40usize,
        seed in 0..u64::MAX,
        k_frac in 0.1..0.5f64,
    ) {
        let cols = rows + extra_cols;
        let k = ((rows as f64 * k_frac) as usize).max(1);
        let phi = draw_ensemble(&EnsembleSpec::gaussian(rows, cols, seed)).unwrap();
        let mut rng = Rng::seeded(seed ^ 0x9e3779b97f4a7c15);
        let x: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
        let y = phi.matvec(&x);
        let run = omp(&phi, &y, k).unwrap();
        prop_assert_eq!(run.estimates.len(), run.support.len());
        prop_assert_eq!(run.residual_norms.len(), run.support.len() + 1);
        let mut sorted = run.support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), run.support.len());
        for w in run.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let live = run.last_estimate().iter().filter(|v| **v != 0.0).count();
        prop_assert!(live <= k);
    }
}
