//! Golden-ratio encoder: a two-term recurrence that produces a radix
//! expansion in base phi (ideal) or in an effective base determined by two
//! leak factors.
//!
//! One step reads the pair (u_n, u_{n+1}), quantizes it with the
//! two-dimensional sign quantizer, and appends
//!
//! ```text
//! u_{n+2} = l1*l2*u_n + l1*u_{n+1} - b_n
//! ```
//!
//! The digit b_n is produced from the physical values (l1*l2*u_n,
//! l1*u_{n+1}); equivalently, the quantizer acts on (u_n, u_{n+1}) with
//! effective slope alpha/l2 and band nu/(l1*l2). Truncating the digit
//! series recovers the input at an exponential rate in the number of
//! digits, and the scheme tolerates a flaky comparator band as long as
//! alpha stays inside an explicit interval.

use crate::bitstream::{Alphabet, Bitstream};
use crate::error::{Error, Result};
use crate::quantizers::{quantize_plane, FlakyMode, PlaneQuantizerSpec};
use crate::rng::Rng;

/// Initial state convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GreInit {
    /// (u_0, u_1) = (x, 0); the digit series for x starts at power zero.
    XZero,
    /// (u_0, u_1) = (0, x); the series starts at power one. This is the
    /// convention under which the leaky error bound is stated, so it is
    /// the default.
    #[default]
    ZeroX,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreConfig {
    /// Quantizer slope applied to the second coordinate.
    pub alpha: f64,
    /// Half-width of the comparator hesitation band.
    pub nu: f64,
    pub mode: FlakyMode,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Highest digit index; the run emits digits b_0 .. b_n.
    pub n: usize,
    pub init: GreInit,
}

impl GreConfig {
    pub fn ideal(alpha: f64, n: usize) -> Self {
        GreConfig {
            alpha,
            nu: 0.0,
            mode: FlakyMode::Ideal,
            lambda1: 1.0,
            lambda2: 1.0,
            n,
            init: GreInit::XZero,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l > 0.0 && l <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {l}")));
            }
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::Config(format!("nu must be nonnegative, got {}", self.nu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GreRun {
    /// Digits b_0 .. b_n.
    pub bits: Bitstream,
    /// States u_0 .. u_{n+2}.
    pub states: Vec<f64>,
}

/// Runs the encoder on a sample with |x| <= 1, emitting cfg.n + 1 digits.
pub fn gre_encode(cfg: &GreConfig, x: f64, rng: &mut Rng) -> Result<GreRun> {
    cfg.validate()?;
    if !x.is_finite() || x.abs() > 1.0 {
        return Err(Error::Domain(format!("input must be finite with |x| <= 1, got {x}")));
    }
    let ll = cfg.lambda1 * cfg.lambda2;
    let quantizer = PlaneQuantizerSpec {
        alpha: cfg.alpha / cfg.lambda2,
        flaky: cfg.mode,
        nu: cfg.nu / ll,
    };
    let digits = cfg.n + 1;
    let mut states = Vec::with_capacity(digits + 2);
    match cfg.init {
        GreInit::XZero => states.extend_from_slice(&[x, 0.0]),
        GreInit::ZeroX => states.extend_from_slice(&[0.0, x]),
    }
    let mut bits = Vec::with_capacity(digits);
    for k in 0..digits {
        let (u, v) = (states[k], states[k + 1]);
        let b = quantize_plane(&quantizer, u, v, rng)?;
        bits.push(b);
        states.push(ll * u + cfg.lambda1 * v - f64::from(b));
    }
    Ok(GreRun { bits: Bitstream::new(bits, Alphabet::PlusMinus)?, states })
}

/// Effective decode base for leak factors (l1, l2): the positive root of
/// 1 - l1*g - l1*l2*g^2 = 0. Equals 1/phi when both leaks are 1.
pub fn gamma_of_leaks(lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
        return Err(Error::Domain(format!(
            "leak factors must be positive, got ({lambda1}, {lambda2})"
        )));
    }
    let root = (lambda1 * lambda1 + 4.0 * lambda1 * lambda2).sqrt();
    Ok((-lambda1 + root) / (2.0 * lambda1 * lambda2))
}

/// Evaluates the truncated series sum_{k=0}^{n} b_k gamma^(k+1) by
/// Horner's rule. Under the (0, x) initial state this approximates x; the
/// (x, 0) convention recovers x as the same sum divided by gamma.
pub fn gre_decode(bits: &Bitstream, gamma: f64, n: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("decode base gamma must lie in (0, 1), got {gamma}")));
    }
    if n + 1 > bits.len() {
        return Err(Error::Range(format!(
            "requested digits 0..={n} but the stream holds {}",
            bits.len()
        )));
    }
    let mut acc = 0.0;
    for &b in bits.bits()[..=n].iter().rev() {
        acc = gamma * (f64::from(b) + acc);
    }
    Ok(acc)
}

/// Tail-sum truncation bound for a run of digits b_0 .. b_n: the series
/// remainder is at most gamma^(n+2) / (1 - gamma) in the (0, x)
/// convention and gamma^(n+1) / (1 - gamma) in the (x, 0) convention.
pub fn gre_truncation_bound(gamma: f64, n: usize, init: GreInit) -> f64 {
    let tail = gamma.powi(n as i32 + 1) / (1.0 - gamma);
    match init {
        GreInit::XZero => tail,
        GreInit::ZeroX => tail * gamma,
    }
}

/// Interval of quantizer slopes alpha for which the state sequence stays
/// bounded for every pair of leak factors in [.9, 1]^2 and every
/// comparator band of half-width at most `eps`. Empty past eps = .337.
pub fn admissible_alpha_range(eps: f64) -> Result<(f64, f64)> {
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("band tolerance must be nonnegative, got {eps}")));
    }
    let lo = 1.198 + 1.479 * eps;
    let hi = 2.053 - 1.058 * eps;
    if lo > hi {
        return Err(Error::Domain(format!(
            "no slope is admissible at band tolerance {eps} (interval [{lo}, {hi}] is empty)"
        )));
    }
    Ok((lo, hi))
}

/// Geometry of the invariant rectangle that certifies bounded states for
/// the leaky recurrence under perturbations of radius mu.
#[derive(Debug, Clone, PartialEq)]
pub struct RectangleGeometry {
    /// Expanding eigenvalue of the one-step matrix.
    pub eps1: f64,
    /// Magnitude of the contracting eigenvalue.
    pub eps2: f64,
    /// Eigenvector normalizers sqrt(1 + eps_i^2).
    pub s1: f64,
    pub s2: f64,
    /// Side lengths of the construction.
    pub h: f64,
    pub d: f64,
    pub l: f64,
    pub r: f64,
    pub mu: f64,
}

impl RectangleGeometry {
    /// Largest perturbation radius for which the two translated images
    /// still overlap (the strict inequality d > 0).
    pub fn mu_limit(&self) -> f64 {
        self.s1 * (2.0 - self.eps1) / (self.eps1 * (self.eps1 + self.eps2))
    }

    /// Intercept of the upper boundary line of the rectangle with the
    /// v axis. At least 1 exactly when every start (0, x), |x| <= 1,
    /// lies inside the rectangle.
    pub fn y_intercept(&self) -> f64 {
        (self.eps1 + self.eps2) * (self.h - self.d) / self.s1
    }

    pub fn covers_unit_inputs(&self) -> bool {
        self.y_intercept() >= 1.0
    }
}

/// Builds the invariant-rectangle geometry for the given leak factors and
/// perturbation radius. Fails when mu is too large for the two translated
/// rectangle images to overlap, since the construction then breaks down.
pub fn stability_rectangle(lambda1: f64, lambda2: f64, mu: f64) -> Result<RectangleGeometry> {
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
        return Err(Error::Domain(format!(
            "leak factors must be positive, got ({lambda1}, {lambda2})"
        )));
    }
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("perturbation radius must be nonnegative, got {mu}")));
    }
    let root = (lambda1 * lambda1 + 4.0 * lambda1 * lambda2).sqrt();
    let eps1 = (lambda1 + root) / 2.0;
    let eps2 = (-lambda1 + root) / 2.0;
    let s1 = (1.0 + eps1 * eps1).sqrt();
    let s2 = (1.0 + eps2 * eps2).sqrt();
    let sum = eps1 + eps2;
    let h = 2.0 * mu / (1.0 - eps1) + 2.0 * s1 / (eps1 * (eps1 - 1.0) * sum);
    let d = mu / (1.0 - eps1) + s1 * (2.0 - eps1) / (eps1 * (eps1 - 1.0) * sum);
    let l = mu / (1.0 - eps2) + s2 * (2.0 - eps2) / (eps2 * (1.0 - eps2) * sum);
    let r = mu / (1.0 - eps2) + s2 / ((1.0 - eps2) * sum);
    let geometry = RectangleGeometry { eps1, eps2, s1, s2, h, d, l, r, mu };
    if d <= 0.0 {
        return Err(Error::Domain(format!(
            "perturbation radius {mu} is inadmissible (limit {})",
            geometry.mu_limit()
        )));
    }
    Ok(geometry)
}

fn lower_numerator(x: f64, y: f64, delta: f64) -> f64 {
    x * (x - 1.0) - (2.0 - x) * (1.0 - y) + delta * x * (x - 1.0) * (x + y) * (1.0 - y)
}

fn lower_denominator(x: f64, y: f64) -> f64 {
    x * ((2.0 - x) * (1.0 - y) + y * (x - 1.0))
}

fn upper_bound(x: f64, y: f64, delta: f64) -> f64 {
    (2.0 + x * y - 2.0 * y - delta * x * y * (x - 1.0) * (1.0 - y + x)) / (x * (y - 2.0))
}

/// Endpoints of the admissible effective-slope interval for one pair of
/// eigenvalues and a comparator band tolerance delta: the lower bound is
/// evaluated at (eps1, eps2) and the upper at (eps1, eps1 + eps2).
pub fn alpha_bounds(eps1: f64, eps2: f64, delta: f64) -> (f64, f64) {
    let lower = lower_numerator(eps1, eps2, delta) / lower_denominator(eps1, eps2);
    let upper = upper_bound(eps1, eps1 + eps2, delta);
    (lower, upper)
}
