//! Recovery of the decoder base gamma from encoded bitstreams.
//!
//! A bitstream that encodes zero (or the elementwise sum of the streams of
//! a pair (x, -x), once the leading zeros are stripped) yields a
//! polynomial with coefficients in {-1, 0, 1} whose constant term is +-1
//! and whose first positive root is the unknown base. On [0, .6491] such
//! polynomials cross zero transversally at most once, so a few Newton
//! steps from .618 locate the root, and a small residual certifies the
//! estimate to exponential accuracy in the stream length.

use crate::bitstream::{Alphabet, Bitstream};
use crate::error::{Error, Result};

/// Upper end of the interval on which the transversality property of
/// signed-ternary power series is known to hold.
pub const TRANSVERSALITY_LIMIT: f64 = 0.6491;

/// Largest gamma_high with a published transversality constant.
pub const TABULATED_GAMMA_HIGH: f64 = 0.63;

/// Transversality constant valid on [0, .63].
pub const TABULATED_DELTA: f64 = 0.07;

const PHI_INV: f64 = 0.618_033_988_749_894_9;

/// Polynomial with coefficients in {-1, 0, 1} and constant term +-1,
/// stored constant-term first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTernaryPolynomial {
    coeffs: Vec<i8>,
}

impl SignedTernaryPolynomial {
    pub fn new(coeffs: Vec<i8>) -> Result<Self> {
        match coeffs.first() {
            None => return Err(Error::Domain("polynomial needs at least one coefficient".into())),
            Some(&c) if c != 1 && c != -1 => {
                return Err(Error::Domain(format!("constant term must be +-1, got {c}")));
            }
            _ => {}
        }
        if let Some(&c) = coeffs.iter().find(|c| c.abs() > 1) {
            return Err(Error::Domain(format!("coefficients must lie in {{-1,0,1}}, got {c}")));
        }
        Ok(SignedTernaryPolynomial { coeffs })
    }

    /// Builds the degree-n polynomial from the first n + 1 stream digits.
    pub fn from_bits(bits: &Bitstream, n: usize) -> Result<Self> {
        if n + 1 > bits.len() {
            return Err(Error::Range(format!(
                "degree {n} needs {} digits but the stream holds {}",
                n + 1,
                bits.len()
            )));
        }
        SignedTernaryPolynomial::new(bits.bits()[..=n].to_vec())
    }

    pub fn coeffs(&self) -> &[i8] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + f64::from(c))
    }

    /// Evaluates the polynomial and its derivative in one Horner pass.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * t + p;
            p = p * t + f64::from(c);
        }
        (p, dp)
    }
}

/// Sums a pair of +-1 streams elementwise and strips leading zeros.
/// Returns the halved tail digits (a signed-ternary stream starting with
/// +-1) together with the offset of the first disagreement.
///
/// An ideal comparator answers the pair (x, -x) with exactly mirrored
/// streams, which sum to zero everywhere; only a quantizer that hesitates
/// near zero can produce a usable difference stream.
pub fn pair_difference_stream(b: &Bitstream, c: &Bitstream) -> Result<(Bitstream, usize)> {
    if b.alphabet() != Alphabet::PlusMinus || c.alphabet() != Alphabet::PlusMinus {
        return Err(Error::Domain("pair streams must use the +-1 alphabet".into()));
    }
    if b.len() != c.len() {
        return Err(Error::Range(format!(
            "pair streams differ in length: {} vs {}",
            b.len(),
            c.len()
        )));
    }
    let d: Vec<i8> = b.bits().iter().zip(c.bits()).map(|(&x, &y)| x + y).collect();
    let k = match d.iter().position(|&v| v != 0) {
        Some(k) => k,
        None => return Err(Error::DegeneratePair),
    };
    let halved: Vec<i8> = d[k..].iter().map(|&v| v / 2).collect();
    Ok((Bitstream::new(halved, Alphabet::PlusMinusZero)?, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    /// The true base is known a priori to lie in [gamma_low, gamma_high].
    pub gamma_low: f64,
    pub gamma_high: f64,
    /// Transversality constant assumed on [0, gamma_high].
    pub delta: f64,
    pub newton_steps: usize,
    /// Newton starting point.
    pub x0: f64,
}

impl RecoveryConfig {
    pub fn new(gamma_low: f64, gamma_high: f64) -> Result<Self> {
        let cfg = RecoveryConfig {
            gamma_low,
            gamma_high,
            delta: TABULATED_DELTA,
            newton_steps: 10,
            x0: 0.618,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma_low > 0.5 && self.gamma_low <= self.gamma_high) {
            return Err(Error::Config(format!(
                "need .5 < gamma_low <= gamma_high, got [{}, {}]",
                self.gamma_low, self.gamma_high
            )));
        }
        if self.gamma_high > TRANSVERSALITY_LIMIT {
            return Err(Error::Config(format!(
                "gamma_high {} exceeds the transversality limit {TRANSVERSALITY_LIMIT}",
                self.gamma_high
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.newton_steps == 0 {
            return Err(Error::Config("newton_steps must be positive".into()));
        }
        if !(self.x0 >= 0.0 && self.x0 < 1.0) {
            return Err(Error::Config(format!("x0 must lie in [0, 1), got {}", self.x0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootEstimate {
    pub gamma: f64,
    /// |P(gamma)| at the estimate.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootOutcome {
    /// Estimate inside [0, .6491] with residual at or below
    /// gamma_low^degree.
    Root(RootEstimate),
    /// The search did not certify a root there; carries the best iterate
    /// for diagnostics.
    NoRootInRange(RootEstimate),
}

impl RootOutcome {
    pub fn estimate(&self) -> RootEstimate {
        match *self {
            RootOutcome::Root(e) | RootOutcome::NoRootInRange(e) => e,
        }
    }
}

/// Searches for the first positive root via Newton iteration from
/// cfg.x0, with a bisection fallback when the iteration leaves
/// [0, .6491] even though a sign change brackets a root there.
pub fn newton_first_root(
    p: &SignedTernaryPolynomial,
    cfg: &RecoveryConfig,
) -> Result<RootOutcome> {
    cfg.validate()?;
    if p.degree() == 0 {
        return Err(Error::Domain("constant polynomial has no roots".into()));
    }
    let tolerance = cfg.gamma_low.powi(p.degree() as i32);
    let mut x = cfg.x0;
    for iteration in 0..cfg.newton_steps {
        let (value, slope) = p.eval_with_derivative(x);
        if slope == 0.0 {
            return Err(Error::SingularNewtonStep { iteration, at: x });
        }
        x -= value / slope;
        if !x.is_finite() {
            break;
        }
    }
    let candidate = RootEstimate { gamma: x, residual: p.eval(x).abs() };
    if x.is_finite() && (0.0..=TRANSVERSALITY_LIMIT).contains(&x) && candidate.residual <= tolerance
    {
        return Ok(RootOutcome::Root(candidate));
    }
    match bisect_first_root(p) {
        Some(est) if est.residual <= tolerance => Ok(RootOutcome::Root(est)),
        Some(est) if !candidate.gamma.is_finite() || est.residual < candidate.residual => {
            Ok(RootOutcome::NoRootInRange(est))
        }
        _ if candidate.gamma.is_finite() => Ok(RootOutcome::NoRootInRange(candidate)),
        _ => Ok(RootOutcome::NoRootInRange(RootEstimate { gamma: 0.0, residual: p.eval(0.0).abs() })),
    }
}

fn bisect_first_root(p: &SignedTernaryPolynomial) -> Option<RootEstimate> {
    const GRID: usize = 1024;
    let step = TRANSVERSALITY_LIMIT / GRID as f64;
    let mut prev_t = 0.0;
    let mut prev_v = p.eval(0.0);
    for i in 1..=GRID {
        let t = step * i as f64;
        let v = p.eval(t);
        if v == 0.0 {
            return Some(RootEstimate { gamma: t, residual: 0.0 });
        }
        if prev_v * v < 0.0 {
            let (mut lo, mut hi) = (prev_t, t);
            let mut lo_v = prev_v;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let mid_v = p.eval(mid);
                if lo_v * mid_v <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    lo_v = mid_v;
                }
            }
            let gamma = 0.5 * (lo + hi);
            return Some(RootEstimate { gamma, residual: p.eval(gamma).abs() });
        }
        prev_t = t;
        prev_v = v;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaRecovery {
    pub estimate: RootEstimate,
    /// Degree of the polynomial the root was taken from.
    pub degree: usize,
    /// Offset of leading zeros stripped from a pair difference stream.
    pub offset: usize,
    /// When present, |gamma_true - estimate.gamma| is at most this value.
    pub certified_bound: Option<f64>,
}

/// Estimates the base from a zero-encoding stream `b`, or from the pair
/// streams of (x, -x) when `c` is given. The polynomial degree is `n`.
///
/// A certificate is issued only when the estimate lies in
/// [gamma_low, gamma_high], the residual is at most gamma_low^n, and
/// gamma_high is within the tabulated transversality regime (.63).
pub fn recover_gamma(
    b: &Bitstream,
    c: Option<&Bitstream>,
    cfg: &RecoveryConfig,
    n: usize,
) -> Result<GammaRecovery> {
    let (poly, offset) = match c {
        Some(c) => {
            let (diff, k) = pair_difference_stream(b, c)?;
            (SignedTernaryPolynomial::from_bits(&diff, n)?, k)
        }
        None => (SignedTernaryPolynomial::from_bits(b, n)?, 0),
    };
    let estimate = newton_first_root(&poly, cfg)?.estimate();
    let in_prior = estimate.gamma >= cfg.gamma_low && estimate.gamma <= cfg.gamma_high;
    let small_residual = estimate.residual <= cfg.gamma_low.powi(n as i32);
    let tabulated = cfg.gamma_high <= TABULATED_GAMMA_HIGH + 1e-12;
    let certified_bound = (in_prior && small_residual && tabulated).then(|| {
        cfg.gamma_high.powi(n as i32) / (cfg.delta * (1.0 - cfg.gamma_high))
    });
    Ok(GammaRecovery { estimate, degree: n, offset, certified_bound })
}

/// Smallest stream length N with gamma_high^(N+1) <= (1 - gamma_high) *
/// eps * delta; from that length on, the truncated polynomials are
/// guaranteed to have a unique root near the base.
pub fn certified_threshold_n(gamma_high: f64, eps: f64, delta: f64) -> Result<u32> {
    if !(gamma_high > 0.0 && gamma_high < 1.0) {
        return Err(Error::Domain(format!("gamma_high must lie in (0, 1), got {gamma_high}")));
    }
    if !(eps > 0.0) || !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "eps and delta must be positive, got ({eps}, {delta})"
        )));
    }
    let rhs = (1.0 - gamma_high) * eps * delta;
    let guess = (rhs.ln() / gamma_high.ln() - 1.0).ceil().max(0.0);
    let mut n = guess as u32;
    while gamma_high.powi(n as i32 + 1) > rhs {
        n += 1;
    }
    while n > 0 && gamma_high.powi(n as i32) <= rhs {
        n -= 1;
    }
    Ok(n)
}

/// Structure report for a zero-encoding stream in base phi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiStructure {
    /// Digits come in triples (s, -s, -s).
    pub triples_ok: bool,
    /// Minimum over a grid of [0, 1/phi) of |R(t)| - (1 - t^3/(1 - t^3)),
    /// where R collects the triple lead signs. Nonnegative when the
    /// factored part stays away from zero below the root.
    pub margin: f64,
    /// |P'(1/phi)|; at least 1.545 for structured streams.
    pub derivative_at_root: f64,
}

impl PhiStructure {
    pub fn passed(&self) -> bool {
        self.triples_ok && self.margin >= 0.0 && self.derivative_at_root >= 1.545
    }
}

/// Checks the triple pattern of a base-phi zero encoding and the two
/// quantitative consequences of its factorization P(t) =
/// (1 - t - t^2) R(t): the cofactor R stays away from zero on [0, 1/phi)
/// and the derivative of P at the root is bounded away from zero.
pub fn phi_structure_check(bits: &Bitstream) -> PhiStructure {
    let digits = bits.bits();
    let triples = digits.len() / 3;
    let mut triples_ok = triples > 0;
    for j in 0..triples {
        let s = digits[3 * j];
        if s.abs() != 1 || digits[3 * j + 1] != -s || digits[3 * j + 2] != -s {
            triples_ok = false;
            break;
        }
    }
    let leads: Vec<i8> = (0..triples).map(|j| digits[3 * j]).collect();
    let r_eval = |t: f64| -> f64 {
        let t3 = t * t * t;
        leads.iter().rev().fold(0.0, |acc, &s| acc * t3 + f64::from(s))
    };
    const GRID: usize = 1000;
    let mut margin = f64::INFINITY;
    for i in 0..GRID {
        let t = PHI_INV * i as f64 / GRID as f64;
        let t3 = t * t * t;
        let floor = 1.0 - t3 / (1.0 - t3);
        margin = margin.min(r_eval(t).abs() - floor);
    }
    // P'(t) = (-1 - 2t) R(t) at the root of 1 - t - t^2.
    let derivative_at_root = (1.0 + 2.0 * PHI_INV) * r_eval(PHI_INV).abs();
    PhiStructure { triples_ok, margin, derivative_at_root }
}

/// Equal leak factors that give the recurrence the effective base
/// `gamma`; usable for gamma in [1/phi, 1).
pub fn equal_leaks_for_gamma(gamma: f64) -> Result<f64> {
    if !(gamma >= PHI_INV && gamma < 1.0) {
        return Err(Error::Domain(format!(
            "reachable bases with equal leaks in (0, 1] start at 1/phi, got {gamma}"
        )));
    }
    Ok(PHI_INV / gamma)
}
