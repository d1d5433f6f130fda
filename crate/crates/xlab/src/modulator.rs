//! Feedback-loop experiments: the convergence map of the one-sided
//! damped loop, single-orbit traces, the chaotic-versus-hybrid
//! comparison, and rate-distortion curves through the reconstruction
//! filter.

use std::f64::consts::PI;
use std::path::PathBuf;

use adq_core::sampling::{
    distortion_point, log2_slope, DistortionConfig, DistortionPoint, Pipeline,
    ReconstructionFilter, TestSignal,
};
use adq_core::sigma_delta::{
    idle_tone_detect, quietness_test, sd_run, OrbitTrace, Quietness, SdConfig, SdScheme, SdState,
    ToneReport,
};
use adq_core::{Error, Rng};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::output::{Outputs, Table};
use crate::params::Params;
use crate::{ExperimentSpec, Result, RunError};

fn grid_value(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

const QUIET_MAP_DEFAULTS: &[(&str, &str)] = &[
    ("gamma", "0.2"),
    ("rho_min", "0.96"),
    ("rho_max", "1.0"),
    ("rho_steps", "21"),
    ("u0_min", "-2.0"),
    ("u0_max", "0.0"),
    ("u0_steps", "21"),
    ("v0", "0.0"),
    ("steps", "5000"),
];

struct QuietCell {
    rho: f64,
    u0: f64,
    converged: bool,
    settle: f64,
    failed: bool,
}

/// Zero-input convergence map of the one-sided damped loop over a
/// (damping, initial u) grid: a cell converges when the output goes
/// constant within the step budget, either at the quiet pair (0, 1) or
/// as silence after the state lands exactly on the origin.
pub fn quiet_map(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(QUIET_MAP_DEFAULTS, &spec.overrides)?;
    let gamma = params.get_f64("gamma")?;
    let rho_min = params.get_f64("rho_min")?;
    let rho_max = params.get_f64("rho_max")?;
    let rho_steps = params.get_usize("rho_steps")?;
    let u0_min = params.get_f64("u0_min")?;
    let u0_max = params.get_f64("u0_max")?;
    let u0_steps = params.get_usize("u0_steps")?;
    let v0 = params.get_f64("v0")?;
    let steps = params.get_usize("steps")?;
    if rho_steps == 0 || u0_steps == 0 {
        return Err(RunError::Usage("grid step counts must be at least 1".into()));
    }
    if steps == 0 {
        return Err(RunError::Usage("steps must be at least 1".into()));
    }

    let out = Outputs::create(spec, &params)?;
    let cells: Vec<QuietCell> = (0..rho_steps * u0_steps)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / u0_steps, idx % u0_steps);
            let rho = grid_value(rho_min, rho_max, i, rho_steps);
            let u0 = grid_value(u0_min, u0_max, j, u0_steps);
            let cfg = SdConfig::asymmetric(gamma, rho);
            let mut rng = Rng::derive(spec.seed, idx as u64);
            match sd_run(&cfg, &[], SdState::new(u0, v0), steps, &mut rng) {
                Ok(trace) => {
                    let (converged, settle) = match quietness_test(&trace, 0) {
                        Quietness::Quiet { settle, .. } => (true, settle as f64),
                        // The origin is absorbing under zero input, so a
                        // trace that lands there exactly is silent from
                        // that step on even when the usable window ends
                        // too early for the quietness test.
                        _ => match trace.states.iter().position(|s| *s == SdState::ORIGIN) {
                            Some(hit) => (true, (hit + 1) as f64),
                            None => (false, f64::NAN),
                        },
                    };
                    QuietCell { rho, u0, converged, settle, failed: false }
                }
                Err(_) => QuietCell { rho, u0, converged: false, settle: f64::NAN, failed: true },
            }
        })
        .collect();

    let mut table = Table::new(&["rho", "u0", "converged", "settle", "failed"]);
    let mut converged = 0usize;
    let mut failed = 0usize;
    for c in &cells {
        table.push(vec![
            format!("{}", c.rho),
            format!("{}", c.u0),
            format!("{}", u8::from(c.converged)),
            format!("{}", c.settle),
            format!("{}", u8::from(c.failed)),
        ]);
        converged += usize::from(c.converged);
        failed += usize::from(c.failed);
    }
    out.write_table("map.csv", &table)?;

    let mut metrics = Map::new();
    metrics.insert("cells".into(), json!(cells.len()));
    metrics.insert("converged_fraction".into(), json!(converged as f64 / cells.len() as f64));
    metrics.insert("failed".into(), json!(failed));
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

const ORBIT_DEFAULTS: &[(&str, &str)] = &[
    ("scheme", "asymmetric"),
    ("order", "2"),
    ("gamma", "0.2"),
    ("rho", "0.98"),
    ("eps", "0.05"),
    ("u0", "0.3"),
    ("v0", "0.5"),
    ("input", "0.0"),
    ("steps", "2000"),
    ("thin", "1"),
];

fn build_sd_config(
    scheme: &str,
    order: usize,
    gamma: f64,
    rho: f64,
    eps: f64,
) -> Result<SdConfig> {
    let second_order_only = |cfg: SdConfig| {
        if order != 2 {
            Err(RunError::Usage(format!("scheme {scheme:?} is second-order only")))
        } else {
            Ok(cfg)
        }
    };
    match scheme {
        "plain" => match order {
            1 => Ok(SdConfig::order1(SdScheme::Plain)),
            2 => Ok(SdConfig::order2(SdScheme::Plain, gamma)),
            _ => Err(RunError::Usage(format!("order must be 1 or 2, got {order}"))),
        },
        "finite-memory" => match order {
            1 => Ok(SdConfig::order1(SdScheme::FiniteMemory { rho })),
            2 => Ok(SdConfig::order2(SdScheme::FiniteMemory { rho }, gamma)),
            _ => Err(RunError::Usage(format!("order must be 1 or 2, got {order}"))),
        },
        "chaotic" => second_order_only(SdConfig::order2(SdScheme::Chaotic { eps }, gamma)),
        "asymmetric" => second_order_only(SdConfig::asymmetric(gamma, rho)),
        "hybrid" => second_order_only(SdConfig::hybrid(gamma, eps)),
        other => Err(RunError::Usage(format!(
            "unknown scheme {other:?}; expected plain, finite-memory, chaotic, asymmetric or hybrid"
        ))),
    }
}

fn tone_metrics(metrics: &mut Map<String, Value>, prefix: &str, tone: ToneReport) {
    let (label, period) = match tone {
        ToneReport::Periodic { period } => ("periodic", Some(period)),
        ToneReport::Aperiodic => ("aperiodic", None),
        ToneReport::Indeterminate => ("indeterminate", None),
    };
    metrics.insert(format!("{prefix}tone"), json!(label));
    metrics.insert(format!("{prefix}tone_period"), json!(period));
}

fn push_orbit_rows(table: &mut Table, scheme: Option<&str>, trace: &OrbitTrace, thin: usize) {
    for (step, (state, bits)) in trace.states.iter().zip(&trace.bits).enumerate() {
        if step % thin != 0 {
            continue;
        }
        let mut row = Vec::with_capacity(6);
        if let Some(name) = scheme {
            row.push(name.to_string());
        }
        row.push(format!("{step}"));
        row.push(format!("{}", state.u));
        row.push(format!("{}", state.v));
        row.push(format!("{}", bits.0));
        row.push(format!("{}", bits.1));
        table.push(row);
    }
}

fn orbit_extremes(trace: &OrbitTrace) -> (f64, f64) {
    trace
        .states
        .iter()
        .fold((0.0f64, 0.0f64), |(mu, mv), s| (mu.max(s.u.abs()), mv.max(s.v.abs())))
}

/// One orbit of a chosen loop under constant input, written step by
/// step. A divergent run still produces its manifest and a summary
/// recording where the state blew up.
pub fn orbit(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(ORBIT_DEFAULTS, &spec.overrides)?;
    let scheme = params.get_str("scheme")?.to_string();
    let order = params.get_usize("order")?;
    let gamma = params.get_f64("gamma")?;
    let rho = params.get_f64("rho")?;
    let eps = params.get_f64("eps")?;
    let u0 = params.get_f64("u0")?;
    let v0 = params.get_f64("v0")?;
    let input = params.get_f64("input")?;
    let steps = params.get_usize("steps")?;
    let thin = params.get_usize("thin")?;
    if steps == 0 || thin == 0 {
        return Err(RunError::Usage("steps and thin must be at least 1".into()));
    }
    let cfg = build_sd_config(&scheme, order, gamma, rho, eps)?;

    let out = Outputs::create(spec, &params)?;
    let mut table = Table::new(&["step", "u", "v", "b", "q"]);
    let mut metrics = Map::new();
    metrics.insert("scheme".into(), json!(scheme));
    let inputs = vec![input; steps];
    let mut rng = Rng::derive(spec.seed, 0);
    match sd_run(&cfg, &inputs, SdState::new(u0, v0), steps, &mut rng) {
        Ok(trace) => {
            push_orbit_rows(&mut table, None, &trace, thin);
            let (max_u, max_v) = orbit_extremes(&trace);
            let last = trace.states.last().copied().unwrap_or(trace.initial);
            metrics.insert("diverged".into(), json!(false));
            metrics.insert("max_abs_u".into(), json!(max_u));
            metrics.insert("max_abs_v".into(), json!(max_v));
            metrics.insert("final_u".into(), json!(last.u));
            metrics.insert("final_v".into(), json!(last.v));
            tone_metrics(&mut metrics, "", idle_tone_detect(&trace.bits, 64));
        }
        Err(Error::Divergence { step, u, v }) => {
            metrics.insert("diverged".into(), json!(true));
            metrics.insert("divergence_step".into(), json!(step));
            metrics.insert("final_u".into(), json!(u));
            metrics.insert("final_v".into(), json!(v));
        }
        Err(e) => return Err(e.into()),
    }
    out.write_table("orbit.csv", &table)?;
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

const CHAOS_COMPARE_DEFAULTS: &[(&str, &str)] = &[
    ("steps", "1000000"),
    ("gamma", "0.2"),
    ("eps", "0.01"),
    ("input", "-0.001"),
    ("thin", "1000"),
    ("max_period", "64"),
];

/// Long-run comparison of the purely expanding loop against the hybrid
/// one that switches between expansion and contraction. Divergence is
/// recorded per scheme; the other scheme still completes.
pub fn chaos_compare(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(CHAOS_COMPARE_DEFAULTS, &spec.overrides)?;
    let steps = params.get_usize("steps")?;
    let gamma = params.get_f64("gamma")?;
    let eps = params.get_f64("eps")?;
    let input = params.get_f64("input")?;
    let thin = params.get_usize("thin")?;
    let max_period = params.get_usize("max_period")?;
    if steps == 0 || thin == 0 {
        return Err(RunError::Usage("steps and thin must be at least 1".into()));
    }

    let out = Outputs::create(spec, &params)?;
    let mut table = Table::new(&["scheme", "step", "u", "v", "b", "q"]);
    let mut metrics = Map::new();
    let inputs = vec![input; steps];
    let runs = [
        ("chaotic", SdConfig::order2(SdScheme::Chaotic { eps }, gamma)),
        ("hybrid", SdConfig::hybrid(gamma, eps)),
    ];
    for (stream, (name, cfg)) in runs.into_iter().enumerate() {
        let mut rng = Rng::derive(spec.seed, stream as u64);
        match sd_run(&cfg, &inputs, SdState::ORIGIN, steps, &mut rng) {
            Ok(trace) => {
                push_orbit_rows(&mut table, Some(name), &trace, thin);
                let (max_u, max_v) = orbit_extremes(&trace);
                metrics.insert(format!("{name}_diverged"), json!(false));
                metrics.insert(format!("{name}_max_abs_u"), json!(max_u));
                metrics.insert(format!("{name}_max_abs_v"), json!(max_v));
                tone_metrics(
                    &mut metrics,
                    &format!("{name}_"),
                    idle_tone_detect(&trace.bits, max_period),
                );
            }
            Err(Error::Divergence { step, u, v }) => {
                metrics.insert(format!("{name}_diverged"), json!(true));
                metrics.insert(format!("{name}_divergence_step"), json!(step));
                metrics.insert(format!("{name}_final_u"), json!(u));
                metrics.insert(format!("{name}_final_v"), json!(v));
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.write_table("orbits.csv", &table)?;
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

const SD_ACCURACY_DEFAULTS: &[(&str, &str)] = &[
    ("pipelines", "pcm,beta,first-order,second-order-tri,second-order-asym"),
    ("lambdas", "8,16,32,64"),
    ("bits", "4,6,8"),
    ("gamma", "0.3"),
    ("beta", "1.8"),
    ("rolloff", "3.0"),
    ("tol", "1e-6"),
    ("window", "50"),
    ("grid", "1000"),
    ("lambda_for_bits", "4"),
];

fn parse_pipeline(name: &str, gamma: f64, beta: f64) -> Result<Pipeline> {
    // Bit depths of the two sample-by-sample pipelines come from the
    // budget axis; the fields here are placeholders.
    match name {
        "pcm" => Ok(Pipeline::Pcm { bits: 8 }),
        "beta" => Ok(Pipeline::Beta { bits: 8, beta }),
        "first-order" => Ok(Pipeline::FirstOrder),
        "second-order-tri" => Ok(Pipeline::SecondOrderTri { gamma }),
        "second-order-asym" => Ok(Pipeline::SecondOrderAsymmetric { gamma }),
        other => Err(RunError::Usage(format!(
            "unknown pipeline {other:?}; expected pcm, beta, first-order, second-order-tri or second-order-asym"
        ))),
    }
}

/// Sup reconstruction error of each pipeline across its budget axis:
/// bit depth for the sample-by-sample coders, oversampling rate for the
/// feedback loops. The summary carries a fitted log2 slope per
/// pipeline.
pub fn sd_accuracy(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(SD_ACCURACY_DEFAULTS, &spec.overrides)?;
    let names: Vec<String> =
        params.get_str("pipelines")?.split(',').map(|s| s.trim().to_string()).collect();
    let lambdas = params.get_f64_list("lambdas")?;
    let bits = params.get_f64_list("bits")?;
    let gamma = params.get_f64("gamma")?;
    let beta = params.get_f64("beta")?;
    let rolloff = params.get_f64("rolloff")?;
    let tol = params.get_f64("tol")?;
    let window = params.get_f64("window")?;
    let grid = params.get_usize("grid")?;
    let lambda_for_bits = params.get_f64("lambda_for_bits")?;

    let filter = ReconstructionFilter::new(rolloff * PI, tol)?;
    let cfg = DistortionConfig { filter, window, grid, lambda_for_bits };
    let pipelines: Vec<(String, Pipeline)> = names
        .iter()
        .map(|n| parse_pipeline(n, gamma, beta).map(|p| (n.clone(), p)))
        .collect::<Result<_>>()?;

    // The signal draw gets a stream far above the per-cell streams.
    let signal =
        TestSignal::random_trig(4, 0.37, 0.8, &mut Rng::derive(spec.seed, 1 << 32))?;

    let mut cells = Vec::new();
    for (pi, (_, pipeline)) in pipelines.iter().enumerate() {
        let budgets = if pipeline.budget_is_bits() { &bits } else { &lambdas };
        for (bi, &budget) in budgets.iter().enumerate() {
            cells.push((pi, bi, *pipeline, budget));
        }
    }
    let results: Vec<std::result::Result<DistortionPoint, Error>> = cells
        .par_iter()
        .map(|&(pi, bi, pipeline, budget)| {
            let mut rng = Rng::derive(spec.seed, ((pi as u64) << 16) | bi as u64);
            distortion_point(pipeline, &signal, budget, &cfg, &mut rng)
        })
        .collect();

    let out = Outputs::create(spec, &params)?;
    let mut table = Table::new(&["pipeline", "budget", "sup_error", "failed"]);
    let mut by_pipeline: Vec<Vec<DistortionPoint>> = vec![Vec::new(); pipelines.len()];
    let mut failed = 0usize;
    for (&(pi, _, _, budget), result) in cells.iter().zip(&results) {
        let name = &pipelines[pi].0;
        match result {
            Ok(point) => {
                table.push(vec![
                    name.clone(),
                    format!("{}", point.budget),
                    format!("{}", point.sup_error),
                    "0".to_string(),
                ]);
                by_pipeline[pi].push(*point);
            }
            Err(Error::Config(msg)) => return Err(RunError::Usage(msg.clone())),
            Err(_) => {
                table.push(vec![
                    name.clone(),
                    format!("{budget}"),
                    format!("{}", f64::NAN),
                    "1".to_string(),
                ]);
                failed += 1;
            }
        }
    }
    out.write_table("distortion.csv", &table)?;

    let mut metrics = Map::new();
    metrics.insert("failed".into(), json!(failed));
    for (pi, (name, _)) in pipelines.iter().enumerate() {
        let points = &by_pipeline[pi];
        if points.len() >= 2 && points.iter().all(|p| p.sup_error > 0.0) {
            if let Ok(slope) = log2_slope(points) {
                let key = format!("{}_log2_slope", name.replace('-', "_"));
                metrics.insert(key, json!(slope));
            }
        }
    }
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn quiet_map_covers_the_grid_in_row_major_order() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = quiet_map(&spec(
            "quiet-map",
            1,
            tmp.path(),
            &[("rho_steps", "3"), ("u0_steps", "4"), ("steps", "3000")],
        ))
        .unwrap();
        let csv = fs::read_to_string(dir.join("map.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "rho,u0,converged,settle,failed");
        assert_eq!(lines.len(), 13);
        assert!(lines[1].starts_with("0.96,-2,"));
        assert!(lines[12].starts_with("1,0,"));
        let m = metrics(&dir);
        assert_eq!(m["cells"], json!(12));
        assert_eq!(m["failed"], json!(0));
        assert!(m["converged_fraction"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn orbit_traces_settle_and_report_a_tone() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = orbit(&spec("orbit", 2, tmp.path(), &[("steps", "400")])).unwrap();
        let csv = fs::read_to_string(dir.join("orbit.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "step,u,v,b,q");
        assert_eq!(csv.lines().count(), 401);
        let m = metrics(&dir);
        assert_eq!(m["diverged"], json!(false));
        assert!(m["max_abs_u"].as_f64().unwrap().is_finite());
        assert!(m.contains_key("tone"));
    }

    #[test]
    fn divergent_orbits_are_recorded_not_raised() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = orbit(&spec(
            "orbit",
            3,
            tmp.path(),
            &[("scheme", "chaotic"), ("eps", "5.0"), ("u0", "100.0"), ("steps", "2000")],
        ))
        .unwrap();
        let m = metrics(&dir);
        assert_eq!(m["diverged"], json!(true));
        assert!(m["divergence_step"].as_u64().is_some());
        let csv = fs::read_to_string(dir.join("orbit.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn first_order_orbits_reject_second_order_schemes() {
        let tmp = tempfile::tempdir().unwrap();
        let r = orbit(&spec("orbit", 0, tmp.path(), &[("scheme", "hybrid"), ("order", "1")]));
        assert!(matches!(r, Err(RunError::Usage(_))));
        let r = orbit(&spec("orbit", 0, tmp.path(), &[("scheme", "warble")]));
        assert!(matches!(r, Err(RunError::Usage(_))));
    }

    #[test]
    fn chaos_comparison_reports_both_schemes() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = chaos_compare(&spec(
            "chaos-compare",
            4,
            tmp.path(),
            &[("steps", "4000"), ("thin", "500"), ("eps", "0.02")],
        ))
        .unwrap();
        let m = metrics(&dir);
        assert!(m.contains_key("chaotic_diverged"));
        assert!(m.contains_key("hybrid_diverged"));
        let csv = fs::read_to_string(dir.join("orbits.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "scheme,step,u,v,b,q");
    }

    #[test]
    fn accuracy_slopes_fall_with_the_rate() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = sd_accuracy(&spec(
            "sd-accuracy",
            5,
            tmp.path(),
            &[
                ("pipelines", "first-order"),
                ("lambdas", "4,8"),
                ("window", "10"),
                ("grid", "50"),
                ("tol", "1e-3"),
            ],
        ))
        .unwrap();
        let csv = fs::read_to_string(dir.join("distortion.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let m = metrics(&dir);
        assert!(m["first_order_log2_slope"].as_f64().unwrap() < 0.0);
        assert_eq!(m["failed"], json!(0));
    }

    #[test]
    fn unknown_pipelines_are_usage_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let r = sd_accuracy(&spec("sd-accuracy", 0, tmp.path(), &[("pipelines", "warble")]));
        assert!(matches!(r, Err(RunError::Usage(_))));
    }
}
