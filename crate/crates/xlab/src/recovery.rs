//! Experiments around recovering the decode base from bitstreams: the
//! error-versus-length sweep and the truncated difference polynomials
//! the recovery evaluates.

use std::path::PathBuf;

use adq_core::gamma::{
    certified_threshold_n, equal_leaks_for_gamma, newton_first_root, pair_difference_stream,
    recover_gamma, RecoveryConfig, RootOutcome, SignedTernaryPolynomial, TABULATED_DELTA,
    TRANSVERSALITY_LIMIT,
};
use adq_core::gre::{gre_encode, GreConfig, GreInit};
use adq_core::quantizers::FlakyMode;
use adq_core::Rng;
use serde_json::{json, Map};

use crate::output::{Outputs, Table};
use crate::params::Params;
use crate::{ExperimentSpec, Result, RunError};

/// Largest base the equal-leak construction can realize.
const PHI_INV: f64 = 0.618_033_988_749_894_9;

fn usage(e: impl std::fmt::Display) -> RunError {
    RunError::Usage(e.to_string())
}

/// Least-squares slope of ln(y) against x; None when fewer than two
/// usable points survive.
fn ln_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1.is_finite() && p.1 > 0.0).copied().collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in usable {
        let ly = y.ln();
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

const GAMMA_RECOVERY_DEFAULTS: &[(&str, &str)] = &[
    ("trials", "100"),
    ("lengths", "8,16,24,32,40,48"),
    ("gamma_low", "0.618"),
    ("gamma_high", "0.63"),
    ("nu", "0.3"),
    ("alpha_low", "1.7"),
    ("alpha_high", "2.0"),
];

/// Worst and mean recovery error of the ten-step Newton estimator as a
/// function of stream length. Each trial encodes zero with a leaky
/// two-delay encoder whose equal leaks realize a base drawn from the
/// prior window, then recovers the base from the bits alone.
pub fn gamma_recovery(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(GAMMA_RECOVERY_DEFAULTS, &spec.overrides)?;
    let trials = params.get_usize("trials")?;
    let lengths = params.get_usize_list("lengths")?;
    let gamma_low = params.get_f64("gamma_low")?;
    let gamma_high = params.get_f64("gamma_high")?;
    let nu = params.get_f64("nu")?;
    let alpha_low = params.get_f64("alpha_low")?;
    let alpha_high = params.get_f64("alpha_high")?;
    if trials == 0 {
        return Err(RunError::Usage("trials must be at least 1".into()));
    }
    if !(alpha_low <= alpha_high) {
        return Err(RunError::Usage(format!(
            "need alpha_low <= alpha_high, got [{alpha_low}, {alpha_high}]"
        )));
    }
    let recovery_cfg = RecoveryConfig::new(gamma_low, gamma_high)?;
    // Equal leaks only reach bases from 1/phi up, so the draw window is
    // clipped there while the estimator keeps the stated prior.
    let draw_low = gamma_low.max(PHI_INV);
    if !(draw_low <= gamma_high) {
        return Err(RunError::Usage(format!(
            "gamma_high {gamma_high} is below the smallest reachable base {PHI_INV}"
        )));
    }

    let out = Outputs::create(spec, &params)?;
    let mut table =
        Table::new(&["n", "worst_error", "mean_error", "certified_count", "failed_count"]);
    let mut worst_by_n: Vec<(f64, f64)> = Vec::new();
    let mut certificate_violations = 0usize;
    let mut certified_total = 0usize;
    let mut failed_total = 0usize;

    for (li, &n) in lengths.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut sum = 0.0f64;
        let mut ok = 0usize;
        let mut certified = 0usize;
        let mut failed = 0usize;
        for t in 0..trials {
            let mut rng = Rng::derive(spec.seed, (li * trials + t) as u64);
            let gamma = rng.range(draw_low, gamma_high);
            let alpha = rng.range(alpha_low, alpha_high);
            let run = equal_leaks_for_gamma(gamma).and_then(|lambda| {
                let cfg = GreConfig {
                    alpha,
                    nu,
                    mode: FlakyMode::Coin(0.5),
                    lambda1: lambda,
                    lambda2: lambda,
                    n,
                    init: GreInit::ZeroX,
                };
                gre_encode(&cfg, 0.0, &mut rng)
            });
            let recovery = match run.and_then(|r| recover_gamma(&r.bits, None, &recovery_cfg, n)) {
                Ok(r) => r,
                Err(_) => {
                    failed += 1;
                    continue;
                }
            };
            let err = (recovery.estimate.gamma - gamma).abs();
            if let Some(bound) = recovery.certified_bound {
                certified += 1;
                if err > bound {
                    certificate_violations += 1;
                }
            }
            worst = worst.max(err);
            sum += err;
            ok += 1;
        }
        let mean = if ok > 0 { sum / ok as f64 } else { f64::NAN };
        let worst_cell = if ok > 0 { worst } else { f64::NAN };
        table.push(vec![
            format!("{n}"),
            format!("{worst_cell}"),
            format!("{mean}"),
            format!("{certified}"),
            format!("{failed}"),
        ]);
        worst_by_n.push((n as f64, worst_cell));
        certified_total += certified;
        failed_total += failed;
    }
    out.write_table("errors.csv", &table)?;

    let monotone = worst_by_n
        .windows(2)
        .all(|w| w[0].1.is_finite() && w[1].1.is_finite() && w[1].1 < w[0].1);
    let mut metrics = Map::new();
    metrics.insert("trials".into(), json!(trials));
    metrics.insert("monotone_worst".into(), json!(monotone));
    if let Some(slope) = ln_slope(&worst_by_n) {
        metrics.insert("log_slope".into(), json!(slope));
    }
    if let Some(&(_, last)) = worst_by_n.last() {
        if last.is_finite() {
            metrics.insert("worst_error_final".into(), json!(last));
        }
    }
    metrics.insert("certified_total".into(), json!(certified_total));
    metrics.insert("certificate_violations".into(), json!(certificate_violations));
    metrics.insert("failed".into(), json!(failed_total));
    if gamma_high < TRANSVERSALITY_LIMIT {
        if let Ok(threshold) =
            certified_threshold_n(gamma_high, TRANSVERSALITY_LIMIT - gamma_high, TABULATED_DELTA)
        {
            metrics.insert("certified_threshold_n".into(), json!(threshold));
        }
    }
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

const GAMMA_POLYS_DEFAULTS: &[(&str, &str)] = &[
    ("pairs", "6"),
    ("lengths", "8,16,32"),
    ("gamma", "0.64575"),
    ("alpha", "2.0"),
    ("nu", "0.3"),
    ("grid", "161"),
    ("t_max", "0.8"),
];

/// Graphs of the truncated difference polynomials for several encoded
/// pairs (x, -x) sharing one base, plus the first root and its
/// derivative for each truncation. Pairs whose streams cancel are
/// counted and skipped rather than aborting the sweep.
pub fn gamma_polys(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(GAMMA_POLYS_DEFAULTS, &spec.overrides)?;
    let pairs = params.get_usize("pairs")?;
    let lengths = params.get_usize_list("lengths")?;
    let gamma = params.get_f64("gamma")?;
    let alpha = params.get_f64("alpha")?;
    let nu = params.get_f64("nu")?;
    let grid = params.get_usize("grid")?;
    let t_max = params.get_f64("t_max")?;
    if pairs == 0 {
        return Err(RunError::Usage("pairs must be at least 1".into()));
    }
    if grid < 2 {
        return Err(RunError::Usage(format!("grid needs at least 2 points, got {grid}")));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(RunError::Usage(format!("t_max must be positive, got {t_max}")));
    }
    let lambda = equal_leaks_for_gamma(gamma).map_err(usage)?;
    let max_len = *lengths.iter().max().expect("nonempty list");
    // Margin over the largest truncation absorbs the leading zeros the
    // difference stream may shed.
    let encode_n = max_len + 16;
    let root_cfg = RecoveryConfig::new(0.618, TRANSVERSALITY_LIMIT)?;

    let out = Outputs::create(spec, &params)?;
    let mut degenerate = 0usize;
    let mut encode_failures = 0usize;
    let mut diffs = Vec::with_capacity(pairs);
    for pair in 0..pairs {
        let mut rng = Rng::derive(spec.seed, pair as u64);
        let x = rng.range(-1.0, 1.0);
        let cfg = GreConfig {
            alpha,
            nu,
            mode: FlakyMode::Coin(0.5),
            lambda1: lambda,
            lambda2: lambda,
            n: encode_n,
            init: GreInit::ZeroX,
        };
        let encoded = gre_encode(&cfg, x, &mut rng)
            .and_then(|b| gre_encode(&cfg, -x, &mut rng).map(|c| (b, c)));
        let (b, c) = match encoded {
            Ok(pair) => pair,
            Err(_) => {
                encode_failures += 1;
                continue;
            }
        };
        match pair_difference_stream(&b.bits, &c.bits) {
            Ok((diff, offset)) => diffs.push((pair, diff, offset)),
            Err(adq_core::Error::DegeneratePair) => degenerate += 1,
            Err(e) => return Err(e.into()),
        }
    }

    let mut polys = Table::new(&["n", "pair", "t", "value"]);
    let mut roots = Table::new(&[
        "n",
        "pair",
        "offset",
        "root",
        "residual",
        "derivative",
        "in_range",
        "error",
    ]);
    let mut truncated_short = 0usize;
    let mut root_failures = 0usize;
    let mut worst_final = f64::NAN;
    for (li, &n) in lengths.iter().enumerate() {
        for &(pair, ref diff, offset) in &diffs {
            let poly = match SignedTernaryPolynomial::from_bits(diff, n) {
                Ok(p) => p,
                Err(_) => {
                    truncated_short += 1;
                    continue;
                }
            };
            for j in 0..grid {
                let t = t_max * j as f64 / (grid - 1) as f64;
                let value = poly.eval(t);
                polys.push(vec![
                    format!("{n}"),
                    format!("{pair}"),
                    format!("{t}"),
                    format!("{value}"),
                ]);
            }
            let (root, residual, derivative, in_range, err) =
                match newton_first_root(&poly, &root_cfg) {
                    Ok(outcome) => {
                        let est = outcome.estimate();
                        let in_range = matches!(outcome, RootOutcome::Root(_));
                        let derivative = poly.eval_with_derivative(est.gamma).1;
                        (est.gamma, est.residual, derivative, in_range, (est.gamma - gamma).abs())
                    }
                    Err(_) => {
                        root_failures += 1;
                        (f64::NAN, f64::NAN, f64::NAN, false, f64::NAN)
                    }
                };
            roots.push(vec![
                format!("{n}"),
                format!("{pair}"),
                format!("{offset}"),
                format!("{root}"),
                format!("{residual}"),
                format!("{derivative}"),
                format!("{}", u8::from(in_range)),
                format!("{err}"),
            ]);
            if li + 1 == lengths.len() && in_range {
                worst_final = if worst_final.is_nan() { err } else { worst_final.max(err) };
            }
        }
    }
    out.write_table("polys.csv", &polys)?;
    out.write_table("roots.csv", &roots)?;

    let mut metrics = Map::new();
    metrics.insert("gamma".into(), json!(gamma));
    metrics.insert("lambda".into(), json!(lambda));
    metrics.insert("pairs".into(), json!(pairs));
    metrics.insert("degenerate_pairs".into(), json!(degenerate));
    metrics.insert("encode_failures".into(), json!(encode_failures));
    metrics.insert("truncated_short".into(), json!(truncated_short));
    metrics.insert("root_failures".into(), json!(root_failures));
    if worst_final.is_finite() {
        metrics.insert("worst_error_final".into(), json!(worst_final));
    }
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;
    use std::fs;

    fn spec(name: &str, seed: u64, dir: &std::path::Path, pairs: &[(&str, &str)]) -> ExperimentSpec {
        ExperimentSpec {
            name: name.into(),
            overrides: pairs.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect(),
            seed,
            out_dir: dir.to_path_buf(),
        }
    }

    fn summary_metrics(dir: &std::path::Path) -> Map<String, Value> {
        let text = fs::read_to_string(dir.join("summary.json")).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        value["metrics"].as_object().unwrap().clone()
    }

    #[test]
    fn recovery_sweep_writes_one_row_per_length() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = spec(
            "gamma-recovery",
            5,
            tmp.path(),
            &[("trials", "4"), ("lengths", "8,16")],
        );
        let dir = gamma_recovery(&spec).unwrap();
        let csv = fs::read_to_string(dir.join("errors.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,worst_error,mean_error,certified_count,failed_count");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("8,"));
        assert!(lines[2].starts_with("16,"));
        let metrics = summary_metrics(&dir);
        assert_eq!(metrics["failed"], json!(0));
        assert_eq!(metrics["certificate_violations"], json!(0));
        assert_eq!(metrics["certified_threshold_n"], json!(16));
        assert!(metrics["worst_error_final"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn recovery_sweep_is_deterministic_in_the_seed() {
        let tmp = tempfile::tempdir().unwrap();
        let a = gamma_recovery(&spec(
            "gamma-recovery",
            9,
            &tmp.path().join("a"),
            &[("trials", "3"), ("lengths", "8,12")],
        ))
        .unwrap();
        let b = gamma_recovery(&spec(
            "gamma-recovery",
            9,
            &tmp.path().join("b"),
            &[("trials", "3"), ("lengths", "8,12")],
        ))
        .unwrap();
        assert_eq!(
            fs::read(a.join("errors.csv")).unwrap(),
            fs::read(b.join("errors.csv")).unwrap()
        );
    }

    #[test]
    fn polynomial_graphs_cover_every_pair_and_length() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = spec(
            "gamma-polys",
            3,
            tmp.path(),
            &[("pairs", "2"), ("lengths", "4,8"), ("grid", "11")],
        );
        let dir = gamma_polys(&spec).unwrap();
        let metrics = summary_metrics(&dir);
        let degenerate = metrics["degenerate_pairs"].as_u64().unwrap() as usize;
        let usable = 2 - degenerate;
        let polys = fs::read_to_string(dir.join("polys.csv")).unwrap();
        assert_eq!(polys.lines().count(), 1 + 2 * usable * 11);
        let roots = fs::read_to_string(dir.join("roots.csv")).unwrap();
        assert_eq!(roots.lines().count(), 1 + 2 * usable);
        assert!((metrics["lambda"].as_f64().unwrap() - PHI_INV / 0.64575).abs() < 1e-12);
    }

    #[test]
    fn bases_past_the_transversality_limit_still_run() {
        // The first root then falls outside the certified search range,
        // which the rows report rather than the run failing.
        let tmp = tempfile::tempdir().unwrap();
        let spec = spec(
            "gamma-polys",
            4,
            tmp.path(),
            &[("pairs", "2"), ("lengths", "8"), ("grid", "5"), ("gamma", "0.75")],
        );
        let dir = gamma_polys(&spec).unwrap();
        assert!(dir.join("roots.csv").exists());
    }

    #[test]
    fn unreachable_bases_are_usage_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = spec("gamma-polys", 0, tmp.path(), &[("gamma", "0.5")]);
        assert!(matches!(gamma_polys(&spec), Err(RunError::Usage(_))));
    }
}
