//! Greedy-decoder experiments: holdout selection along the pursuit
//! path, norm-preservation failure rates of random ensembles, and the
//! adaptive row ladder.

use std::path::PathBuf;

use adq_core::cs::{
    adaptive_decode, cv_select, draw_ensemble, epsilon_of_r, jl_violations, omp, r_of_epsilon,
    wilson_upper, AdaptiveConfig, CvConfig, EnsembleSpec,
};
use adq_core::Rng;
use rayon::prelude::*;
use serde_json::{json, Map};

use crate::output::{Outputs, Table};
use crate::params::Params;
use crate::{ExperimentSpec, Result, RunError};

fn l2(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const OMP_CV_DEFAULTS: &[(&str, &str)] = &[
    ("dim", "3600"),
    ("m", "800"),
    ("k", "200"),
    ("d", "100"),
    ("sigma", "0.05"),
    ("trials", "100"),
    ("r_list", "10,15,20,25,30,40,50"),
    ("xi", "0.01"),
    ("jl_constant", "1.0"),
];

struct HoldoutBlock {
    r: usize,
    mean_eta_cv: f64,
    std_eta_cv: f64,
    eta_or: f64,
    eta_omp: f64,
    eps_theory: f64,
    coverage: f64,
    below: f64,
}

/// Splits a measurement budget between the pursuit and a holdout of r
/// rows, then checks how well the smallest holdout residual tracks the
/// best error along the pursuit path.
pub fn omp_cv(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(OMP_CV_DEFAULTS, &spec.overrides)?;
    let dim = params.get_usize("dim")?;
    let m = params.get_usize("m")?;
    let k = params.get_usize("k")?;
    let d = params.get_usize("d")?;
    let sigma = params.get_f64("sigma")?;
    let trials = params.get_usize("trials")?;
    let r_list = params.get_usize_list("r_list")?;
    let xi = params.get_f64("xi")?;
    let jl_constant = params.get_f64("jl_constant")?;
    if trials == 0 {
        return Err(RunError::Usage("trials must be at least 1".into()));
    }
    if d > dim {
        return Err(RunError::Usage(format!("head size {d} exceeds dimension {dim}")));
    }
    for &r in &r_list {
        if r >= m {
            return Err(RunError::Usage(format!("holdout {r} must leave pursuit rows out of {m}")));
        }
        if m - r < k {
            return Err(RunError::Usage(format!(
                "holdout {r} leaves {} pursuit rows, fewer than sparsity {k}",
                m - r
            )));
        }
    }

    // The signal is a unit-height head of d coordinates under white
    // noise, normalized to the unit sphere.
    let mut xrng = Rng::derive(spec.seed, 0);
    let mut x: Vec<f64> = (0..dim)
        .map(|i| if i < d { 1.0 } else { 0.0 } + sigma * xrng.normal())
        .collect();
    let nx = l2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut squares: Vec<f64> = x.iter().map(|v| v * v).collect();
    squares.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_d = squares[d..].iter().sum::<f64>().sqrt();

    let mut phi_rng = Rng::derive(spec.seed, 1);
    let phi_seeds: Vec<u64> = r_list.iter().map(|_| phi_rng.next_u64()).collect();
    let mut psi_rng = Rng::derive(spec.seed, 2);
    let psi_seeds: Vec<Vec<u64>> = r_list
        .iter()
        .map(|_| (0..trials).map(|_| psi_rng.next_u64()).collect())
        .collect();

    let blocks: Vec<Result<HoldoutBlock>> = r_list
        .par_iter()
        .enumerate()
        .map(|(ri, &r)| {
            let n = m - r;
            let phi = draw_ensemble(&EnsembleSpec::gaussian(n, dim, phi_seeds[ri]))?;
            let y = phi.matvec(&x);
            let run = omp(&phi, &y, k)?;
            let errors: Vec<f64> = run.estimates.iter().map(|e| sub_norm(&x, e)).collect();
            let eta_or = errors.iter().copied().fold(f64::INFINITY, f64::min);
            let eta_omp = *errors.last().expect("pursuit accepts at least one column");
            let cfg = CvConfig::from_rows(r, k, xi, jl_constant)?;
            let eps = cfg.epsilon;
            let mut eta_cvs = Vec::with_capacity(trials);
            let mut covered = 0usize;
            let mut below = 0usize;
            for &seed in &psi_seeds[ri] {
                let psi = draw_ensemble(&EnsembleSpec::gaussian(r, dim, seed))?;
                let y_psi = psi.matvec(&x);
                let report = cv_select(&psi, &y_psi, &run.estimates, &cfg)?;
                let eta_cv = report.eta_cv;
                if (1.0 - eps) * eta_or <= eta_cv && eta_cv <= (1.0 + eps) * eta_or {
                    covered += 1;
                }
                if eta_cv <= eta_omp {
                    below += 1;
                }
                eta_cvs.push(eta_cv);
            }
            let mean = eta_cvs.iter().sum::<f64>() / trials as f64;
            let std = if trials > 1 {
                (eta_cvs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (trials - 1) as f64)
                    .sqrt()
            } else {
                f64::NAN
            };
            Ok(HoldoutBlock {
                r,
                mean_eta_cv: mean,
                std_eta_cv: std,
                eta_or,
                eta_omp,
                eps_theory: epsilon_of_r(r, k, xi, jl_constant)?,
                coverage: covered as f64 / trials as f64,
                below: below as f64 / trials as f64,
            })
        })
        .collect();

    let out = Outputs::create(spec, &params)?;
    let mut table =
        Table::new(&["r", "mean_eta_cv", "std_eta_cv", "eta_or", "eta_omp", "sigma_d", "eps_theory"]);
    let mut metrics = Map::new();
    metrics.insert("sigma_d".into(), json!(sigma_d));
    metrics.insert("trials".into(), json!(trials));
    for block in blocks {
        let b = block?;
        table.push(vec![
            format!("{}", b.r),
            format!("{}", b.mean_eta_cv),
            format!("{}", b.std_eta_cv),
            format!("{}", b.eta_or),
            format!("{}", b.eta_omp),
            format!("{}", sigma_d),
            format!("{}", b.eps_theory),
        ]);
        metrics.insert(format!("coverage_r{}", b.r), json!(b.coverage));
        metrics.insert(format!("below_omp_r{}", b.r), json!(b.below));
    }
    out.write_table("results.csv", &table)?;
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

const JL_CHECK_DEFAULTS: &[(&str, &str)] = &[
    ("points", "200"),
    ("dim", "64"),
    ("xi", "0.01"),
    ("jl_constant", "8.0"),
    ("eps", "0.5"),
    ("draws", "200"),
    ("kind", "gaussian"),
];

fn ensemble_spec(kind: &str, rows: usize, cols: usize, seed: u64) -> Result<EnsembleSpec> {
    match kind {
        "gaussian" => Ok(EnsembleSpec::gaussian(rows, cols, seed)),
        "bernoulli" => Ok(EnsembleSpec::bernoulli(rows, cols, seed)),
        other => {
            Err(RunError::Usage(format!("unknown kind {other:?}; expected gaussian or bernoulli")))
        }
    }
}

/// Draws many random ensembles sized for a target norm-preservation
/// accuracy over a fixed point set and counts how often any point
/// escapes the band. The Wilson bounds put error bars on that event
/// rate.
pub fn jl_check(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(JL_CHECK_DEFAULTS, &spec.overrides)?;
    let points = params.get_usize("points")?;
    let dim = params.get_usize("dim")?;
    let xi = params.get_f64("xi")?;
    let jl_constant = params.get_f64("jl_constant")?;
    let eps = params.get_f64("eps")?;
    let draws = params.get_usize("draws")?;
    let kind = params.get_str("kind")?.to_string();
    if points == 0 || dim == 0 || draws == 0 {
        return Err(RunError::Usage("points, dim and draws must be at least 1".into()));
    }
    ensemble_spec(&kind, 1, 1, 0)?;
    let rows = r_of_epsilon(eps, points, xi, jl_constant)?;

    let mut prng = Rng::derive(spec.seed, 0);
    let cloud: Vec<Vec<f64>> =
        (0..points).map(|_| (0..dim).map(|_| prng.normal()).collect()).collect();
    let mut seed_rng = Rng::derive(spec.seed, 1);
    let seeds: Vec<u64> = (0..draws).map(|_| seed_rng.next_u64()).collect();

    let counts: Vec<Result<usize>> = seeds
        .par_iter()
        .map(|&seed| {
            let m = draw_ensemble(&ensemble_spec(&kind, rows, dim, seed)?)?;
            Ok(jl_violations(&m, &cloud, eps)?)
        })
        .collect();

    let out = Outputs::create(spec, &params)?;
    let mut table = Table::new(&["draw", "point_violations"]);
    let mut events = 0usize;
    let mut total = 0usize;
    for (i, count) in counts.into_iter().enumerate() {
        let c = count?;
        table.push(vec![format!("{i}"), format!("{c}")]);
        events += usize::from(c > 0);
        total += c;
    }
    out.write_table("draws.csv", &table)?;

    let mut metrics = Map::new();
    metrics.insert("rows".into(), json!(rows));
    metrics.insert("eps".into(), json!(eps));
    metrics.insert("draws".into(), json!(draws));
    metrics.insert("points".into(), json!(points));
    metrics.insert("event_count".into(), json!(events));
    metrics.insert("event_rate".into(), json!(events as f64 / draws as f64));
    metrics
        .insert("point_violation_rate".into(), json!(total as f64 / (draws * points) as f64));
    metrics.insert("event_rate_wilson_upper".into(), json!(wilson_upper(events, draws, 1.96)?));
    metrics.insert(
        "event_rate_wilson_lower".into(),
        json!(1.0 - wilson_upper(draws - events, draws, 1.96)?),
    );
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

const ADAPTIVE_DEMO_DEFAULTS: &[(&str, &str)] = &[
    ("dim", "900"),
    ("m", "600"),
    ("ladder", "150,300,450"),
    ("sparsity", "15"),
    ("tau", "0.3"),
    ("xi", "0.01"),
    ("jl_constant", "1.0"),
];

/// Runs the row ladder on one genuinely sparse signal and one dense
/// one, recording where the stopping rule fires (or that it never
/// does).
pub fn adaptive_demo(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(ADAPTIVE_DEMO_DEFAULTS, &spec.overrides)?;
    let dim = params.get_usize("dim")?;
    let m = params.get_usize("m")?;
    let ladder = params.get_usize_list("ladder")?;
    let sparsity = params.get_usize("sparsity")?;
    let tau = params.get_f64("tau")?;
    let xi = params.get_f64("xi")?;
    let jl_constant = params.get_f64("jl_constant")?;
    if sparsity == 0 || sparsity > dim {
        return Err(RunError::Usage(format!("sparsity must lie in 1..={dim}, got {sparsity}")));
    }
    let cfg = AdaptiveConfig { ladder, sparsity, tau, xi, jl_constant };

    let mut srng = Rng::derive(spec.seed, 0);
    let mut sparse = vec![0.0; dim];
    let mut placed = 0;
    while placed < sparsity {
        let i = srng.index(dim);
        if sparse[i] == 0.0 {
            sparse[i] = srng.sign();
            placed += 1;
        }
    }
    let mut drng = Rng::derive(spec.seed, 2);
    let scale = 1.0 / (dim as f64).sqrt();
    let dense: Vec<f64> = (0..dim).map(|_| scale * drng.normal()).collect();

    let out = Outputs::create(spec, &params)?;
    let mut table = Table::new(&[
        "case",
        "stage",
        "rows_used",
        "holdout_rows",
        "statistic",
        "epsilon",
        "stopped",
    ]);
    let mut metrics = Map::new();
    let cases =
        [("sparse", &sparse, Rng::derive(spec.seed, 1)), ("dense", &dense, Rng::derive(spec.seed, 3))];
    for (name, x, mut arng) in cases {
        let a = draw_ensemble(&EnsembleSpec::gaussian(m, dim, arng.next_u64()))?;
        let y = a.matvec(x);
        let outcome = adaptive_decode(&a, &y, &cfg)?;
        for (stage, s) in outcome.stages.iter().enumerate() {
            table.push(vec![
                name.to_string(),
                format!("{stage}"),
                format!("{}", s.rows_used),
                format!("{}", s.holdout_rows),
                format!("{}", s.statistic),
                format!("{}", s.epsilon),
                format!("{}", u8::from(outcome.stop_index == Some(stage))),
            ]);
        }
        metrics.insert(format!("{name}_stop_index"), json!(outcome.stop_index));
        metrics.insert(format!("{name}_too_dense"), json!(outcome.too_dense));
        metrics.insert(format!("{name}_error"), json!(sub_norm(x, &outcome.estimate)));
    }
    out.write_table("stages.csv", &table)?;
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

    fn metrics(dir: &std::path::Path) -> Map<String, Value> {
        let text = fs::read_to_string(dir.join("summary.json")).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        value["metrics"].as_object().unwrap().clone()
    }

    const SMALL_OMP: &[(&str, &str)] = &[
        ("dim", "120"),
        ("m", "60"),
        ("k", "15"),
        ("d", "5"),
        ("r_list", "10"),
        ("trials", "3"),
    ];

    #[test]
    fn holdout_results_cover_each_r() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = omp_cv(&spec("omp-cv", 7, tmp.path(), SMALL_OMP)).unwrap();
        let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "r,mean_eta_cv,std_eta_cv,eta_or,eta_omp,sigma_d,eps_theory");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("10,"));
        let m = metrics(&dir);
        let sigma_d = m["sigma_d"].as_f64().unwrap();
        assert!(sigma_d > 0.0 && sigma_d < 1.0);
        assert!(m.contains_key("coverage_r10"));
        assert!(m.contains_key("below_omp_r10"));
    }

    #[test]
    fn oversized_holdouts_are_usage_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let mut pairs = SMALL_OMP.to_vec();
        pairs[4] = ("r_list", "70");
        assert!(matches!(omp_cv(&spec("omp-cv", 0, tmp.path(), &pairs)), Err(RunError::Usage(_))));
        pairs[4] = ("r_list", "50");
        assert!(matches!(omp_cv(&spec("omp-cv", 0, tmp.path(), &pairs)), Err(RunError::Usage(_))));
    }

    #[test]
    fn violation_rates_come_with_wilson_bounds() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = jl_check(&spec(
            "jl-check",
            9,
            tmp.path(),
            &[("points", "10"), ("dim", "8"), ("draws", "5"), ("eps", "0.9"), ("jl_constant", "1.0")],
        ))
        .unwrap();
        let csv = fs::read_to_string(dir.join("draws.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "draw,point_violations");
        assert_eq!(csv.lines().count(), 6);
        let m = metrics(&dir);
        let rate = m["event_rate"].as_f64().unwrap();
        let lower = m["event_rate_wilson_lower"].as_f64().unwrap();
        let upper = m["event_rate_wilson_upper"].as_f64().unwrap();
        assert!(lower <= rate && rate <= upper);
        assert_eq!(m["rows"], json!(8));
    }

    #[test]
    fn jl_draws_are_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let pairs = [("points", "8"), ("dim", "6"), ("draws", "4")];
        let a = jl_check(&spec("jl-check", 3, &tmp.path().join("a"), &pairs)).unwrap();
        let b = jl_check(&spec("jl-check", 3, &tmp.path().join("b"), &pairs)).unwrap();
        assert_eq!(
            fs::read(a.join("draws.csv")).unwrap(),
            fs::read(b.join("draws.csv")).unwrap()
        );
    }

    #[test]
    fn the_ladder_reports_both_cases() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = adaptive_demo(&spec(
            "adaptive-demo",
            11,
            tmp.path(),
            &[("dim", "150"), ("m", "90"), ("ladder", "30,60"), ("sparsity", "6")],
        ))
        .unwrap();
        let csv = fs::read_to_string(dir.join("stages.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "case,stage,rows_used,holdout_rows,statistic,epsilon,stopped");
        assert!(lines[1..].iter().any(|l| l.starts_with("sparse,")));
        assert!(lines[1..].iter().any(|l| l.starts_with("dense,")));
        let m = metrics(&dir);
        assert!(m["sparse_error"].as_f64().unwrap().is_finite());
        assert!(m.contains_key("dense_too_dense"));
        assert!(m.contains_key("sparse_stop_index"));
    }
}
