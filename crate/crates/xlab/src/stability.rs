//! Stability sweep for the leaky two-delay encoder: random leak pairs,
//! comparator bands and quantizer slopes from the admissible window,
//! checked for bounded states and decode error within the tail bound.

use std::path::PathBuf;

use adq_core::gre::{admissible_alpha_range, gamma_of_leaks, gre_decode, gre_encode, GreConfig, GreInit};
use adq_core::quantizers::FlakyMode;
use adq_core::Rng;
use rayon::prelude::*;
use serde_json::{json, Map};

use crate::output::{Outputs, Table};
use crate::params::Params;
use crate::{ExperimentSpec, Result, RunError};

const DEFAULTS: &[(&str, &str)] = &[
    ("configs", "200"),
    ("steps", "10000"),
    ("lambda_low", "0.9"),
    ("lambda_high", "1.0"),
    ("nu_max", "0.3"),
    ("eps", "0.3"),
    ("decode_n", "40"),
];

struct Row {
    lambda1: f64,
    lambda2: f64,
    alpha: f64,
    nu: f64,
    x: f64,
    gamma: f64,
    max_state: f64,
    decode_error: f64,
    error_bound: f64,
    failed: bool,
}

/// One random configuration: encode for the full step count, track the
/// largest state magnitude, then decode the first `decode_n + 1` digits
/// and compare against the geometric tail bound for the effective base.
fn run_config(seed: u64, stream: u64, p: &SweepParams) -> Row {
    let mut rng = Rng::derive(seed, stream);
    let lambda1 = rng.range(p.lambda_low, p.lambda_high);
    let lambda2 = rng.range(p.lambda_low, p.lambda_high);
    let nu = rng.range(0.0, p.nu_max);
    let alpha = rng.range(p.alpha_low, p.alpha_high);
    let x = rng.range(-1.0, 1.0);
    let gamma = gamma_of_leaks(lambda1, lambda2).unwrap_or(f64::NAN);
    let mut row = Row {
        lambda1,
        lambda2,
        alpha,
        nu,
        x,
        gamma,
        max_state: f64::NAN,
        decode_error: f64::NAN,
        error_bound: f64::NAN,
        failed: true,
    };
    let cfg = GreConfig {
        alpha,
        nu,
        mode: FlakyMode::Coin(0.5),
        lambda1,
        lambda2,
        n: p.steps,
        init: GreInit::ZeroX,
    };
    let run = match gre_encode(&cfg, x, &mut rng) {
        Ok(run) => run,
        Err(_) => return row,
    };
    row.max_state = run.states.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let decoded = match gre_decode(&run.bits, gamma, p.decode_n) {
        Ok(v) => v,
        Err(_) => return row,
    };
    row.decode_error = (x - decoded).abs();
    row.error_bound = gamma / (1.0 - gamma) * gamma.powi(p.decode_n as i32);
    row.failed = false;
    row
}

struct SweepParams {
    steps: usize,
    lambda_low: f64,
    lambda_high: f64,
    nu_max: f64,
    alpha_low: f64,
    alpha_high: f64,
    decode_n: usize,
}

pub fn gre_stability_sweep(spec: &ExperimentSpec) -> Result<PathBuf> {
    let params = Params::resolve(DEFAULTS, &spec.overrides)?;
    let configs = params.get_usize("configs")?;
    let steps = params.get_usize("steps")?;
    let lambda_low = params.get_f64("lambda_low")?;
    let lambda_high = params.get_f64("lambda_high")?;
    let nu_max = params.get_f64("nu_max")?;
    let eps = params.get_f64("eps")?;
    let decode_n = params.get_usize("decode_n")?;
    if configs == 0 {
        return Err(RunError::Usage("configs must be at least 1".into()));
    }
    if decode_n > steps {
        return Err(RunError::Usage(format!(
            "decode_n {decode_n} exceeds the encoded digit count {steps}"
        )));
    }
    let (alpha_low, alpha_high) =
        admissible_alpha_range(eps).map_err(|e| RunError::Usage(e.to_string()))?;
    let sweep = SweepParams {
        steps,
        lambda_low,
        lambda_high,
        nu_max,
        alpha_low,
        alpha_high,
        decode_n,
    };

    let out = Outputs::create(spec, &params)?;
    let rows: Vec<Row> =
        (0..configs).into_par_iter().map(|i| run_config(spec.seed, i as u64, &sweep)).collect();

    let mut table = Table::new(&[
        "config",
        "lambda1",
        "lambda2",
        "alpha",
        "nu",
        "x",
        "gamma",
        "max_state",
        "decode_error",
        "error_bound",
        "failed",
    ]);
    let mut max_state_overall = 0.0f64;
    let mut bound_violations = 0usize;
    let mut failed = 0usize;
    for (i, r) in rows.iter().enumerate() {
        table.push(vec![
            format!("{i}"),
            format!("{}", r.lambda1),
            format!("{}", r.lambda2),
            format!("{}", r.alpha),
            format!("{}", r.nu),
            format!("{}", r.x),
            format!("{}", r.gamma),
            format!("{}", r.max_state),
            format!("{}", r.decode_error),
            format!("{}", r.error_bound),
            format!("{}", u8::from(r.failed)),
        ]);
        if r.failed {
            failed += 1;
            continue;
        }
        max_state_overall = max_state_overall.max(r.max_state);
        if r.decode_error > r.error_bound {
            bound_violations += 1;
        }
    }
    out.write_table("sweep.csv", &table)?;

    let mut metrics = Map::new();
    metrics.insert("configs".into(), json!(configs));
    metrics.insert("max_state".into(), json!(max_state_overall));
    metrics.insert("bound_violations".into(), json!(bound_violations));
    metrics.insert("failed".into(), json!(failed));
    out.write_summary(metrics)?;
    Ok(out.dir().to_path_buf())
}
