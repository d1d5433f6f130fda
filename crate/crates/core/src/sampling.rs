//! Bandlimited test signals, oversampled A/D pipelines, and the
//! reconstruction filter tying them together.
//!
//! A signal with spectrum inside [-pi, pi] is sampled on the lattice
//! n/lambda, the samples are pushed through a quantization pipeline, and
//! the quantized stream is turned back into a function via
//!
//! ```text
//!     f~(t) = (1/lambda) sum_n c_n g(t - n/lambda)
//! ```
//!
//! where the kernel g has a frequency response equal to one across the
//! signal band and zero beyond lambda*pi. `distortion_curve` measures the
//! sup-norm gap between f and f~ as the bit budget grows, which is where
//! the familiar decay laws (2^-N for per-sample rounding, beta^-N for
//! beta expansions, lambda^-1 and lambda^-2 for the one-bit loops) show
//! up as straight lines on a log-log plot.

use std::f64::consts::PI;

use crate::beta::{beta_decode, beta_encode, BetaEncoderConfig};
use crate::error::{Error, Result};
use crate::quantizers::{ScalarKind, ScalarQuantizerSpec};
use crate::rng::Rng;
use crate::sigma_delta::{sd_run, SdConfig, SdScheme, SdState};

/// Bandlimited test input. Both kinds keep their spectrum inside
/// [-pi, pi], so they are exactly recoverable from lattice samples once
/// the sampling rate clears the filter's roll-off band.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSignal {
    /// Finite Fourier series `sum_j a_j cos(j w t) + b_j sin(j w t)` with
    /// fundamental frequency `omega0` and degree `max(len(a), len(b))`.
    Trig { cosine: Vec<f64>, sine: Vec<f64>, omega0: f64 },
    /// Superposition of shifted cardinal sines
    /// `sum_i a_i sin(pi(t - s_i)) / (pi(t - s_i))`.
    SincSum { amplitudes: Vec<f64>, shifts: Vec<f64> },
}

impl TestSignal {
    pub fn trig(cosine: Vec<f64>, sine: Vec<f64>, omega0: f64) -> Result<Self> {
        if cosine.is_empty() && sine.is_empty() {
            return Err(Error::Config("a trig signal needs at least one coefficient".into()));
        }
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::Config(format!(
                "fundamental frequency must be positive and finite, got {omega0}"
            )));
        }
        let degree = cosine.len().max(sine.len());
        let top = degree as f64 * omega0;
        if top > PI + 1e-12 {
            return Err(Error::Config(format!(
                "top frequency {top:.6} exceeds the band edge pi"
            )));
        }
        if cosine.iter().chain(&sine).any(|c| !c.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        Ok(TestSignal::Trig { cosine, sine, omega0 })
    }

    pub fn sinc_sum(amplitudes: Vec<f64>, shifts: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() || amplitudes.len() != shifts.len() {
            return Err(Error::Config(format!(
                "amplitude and shift lists must match and be nonempty, got {} and {}",
                amplitudes.len(),
                shifts.len()
            )));
        }
        if amplitudes.iter().chain(&shifts).any(|c| !c.is_finite()) {
            return Err(Error::Config("amplitudes and shifts must be finite".into()));
        }
        Ok(TestSignal::SincSum { amplitudes, shifts })
    }

    /// Random Fourier series of the given degree, scaled so the sup norm
    /// equals `amplitude`.
    pub fn random_trig(degree: usize, omega0: f64, amplitude: f64, rng: &mut Rng) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Config("degree must be at least one".into()));
        }
        let cosine: Vec<f64> = (0..degree).map(|_| rng.range(-1.0, 1.0)).collect();
        let sine: Vec<f64> = (0..degree).map(|_| rng.range(-1.0, 1.0)).collect();
        TestSignal::trig(cosine, sine, omega0)?.normalized(amplitude)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TestSignal::Trig { cosine, sine, omega0 } => {
                let mut acc = 0.0;
                for (j, a) in cosine.iter().enumerate() {
                    acc += a * ((j + 1) as f64 * omega0 * t).cos();
                }
                for (j, b) in sine.iter().enumerate() {
                    acc += b * ((j + 1) as f64 * omega0 * t).sin();
                }
                acc
            }
            TestSignal::SincSum { amplitudes, shifts } => {
                let mut acc = 0.0;
                for (a, s) in amplitudes.iter().zip(shifts) {
                    let x = PI * (t - s);
                    acc += a * if x.abs() < 1e-9 { 1.0 } else { x.sin() / x };
                }
                acc
            }
        }
    }

    /// Sup norm, located by a dense scan plus one parabolic refinement of
    /// the squared signal around the best grid point.
    pub fn peak(&self) -> f64 {
        let (lo, hi) = match self {
            TestSignal::Trig { omega0, .. } => (0.0, 2.0 * PI / omega0),
            TestSignal::SincSum { shifts, .. } => {
                let min = shifts.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = shifts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (min - 30.0, max + 30.0)
            }
        };
        let n = 1 << 15;
        let h = (hi - lo) / n as f64;
        let mut best = 0.0f64;
        let mut best_i = 0usize;
        for i in 0..=n {
            let v = self.eval(lo + i as f64 * h).abs();
            if v > best {
                best = v;
                best_i = i;
            }
        }
        if best_i == 0 || best_i == n {
            return best;
        }
        // vertex of the parabola through the squared values at the three
        // neighboring grid points
        let t0 = lo + best_i as f64 * h;
        let (ym, y0, yp) = (
            self.eval(t0 - h).powi(2),
            self.eval(t0).powi(2),
            self.eval(t0 + h).powi(2),
        );
        let denom = ym - 2.0 * y0 + yp;
        if denom < 0.0 {
            let shift = 0.5 * h * (ym - yp) / denom;
            if shift.abs() <= h {
                best = best.max(self.eval(t0 + shift).abs());
            }
        }
        best
    }

    /// Rescales the coefficients so the sup norm equals `amplitude`, which
    /// must sit strictly inside the unit interval to leave quantizer
    /// headroom.
    pub fn normalized(self, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude < 1.0) {
            return Err(Error::Config(format!(
                "target amplitude must lie in (0, 1), got {amplitude}"
            )));
        }
        let peak = self.peak();
        if peak == 0.0 {
            return Err(Error::Domain("cannot normalize the zero signal".into()));
        }
        let s = amplitude / peak;
        Ok(match self {
            TestSignal::Trig { cosine, sine, omega0 } => TestSignal::Trig {
                cosine: cosine.into_iter().map(|c| c * s).collect(),
                sine: sine.into_iter().map(|c| c * s).collect(),
                omega0,
            },
            TestSignal::SincSum { amplitudes, shifts } => TestSignal::SincSum {
                amplitudes: amplitudes.into_iter().map(|c| c * s).collect(),
                shifts,
            },
        })
    }
}

/// Evaluates `f` at the lattice points n/lambda for
/// n = start .. start + count.
pub fn sample(f: &TestSignal, lambda: f64, start: i64, count: usize) -> Result<Vec<f64>> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("sampling rate must be >= 1, got {lambda}")));
    }
    Ok((0..count).map(|i| f.eval((start + i as i64) as f64 / lambda)).collect())
}

/// Low-pass kernel with a raised-cosine roll-off: the frequency response
/// is one on [-pi, pi], falls as a half-cosine across the transition
/// band, and vanishes beyond `rolloff_end`. The time-domain kernel has a
/// closed form decaying like |t|^-3, and every evaluation is truncated to
/// the stored radius, chosen so the discarded tail stays below
/// `truncation_tol` per unit coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionFilter {
    rolloff_end: f64,
    truncation_tol: f64,
    radius: f64,
}

impl Default for ReconstructionFilter {
    fn default() -> Self {
        ReconstructionFilter::new(3.0 * PI, 1e-8).expect("default filter parameters are valid")
    }
}

impl ReconstructionFilter {
    pub fn new(rolloff_end: f64, truncation_tol: f64) -> Result<Self> {
        if !(rolloff_end > PI + 1e-9) || !rolloff_end.is_finite() {
            return Err(Error::Config(format!(
                "roll-off must end strictly beyond pi, got {rolloff_end}"
            )));
        }
        if !(truncation_tol > 0.0 && truncation_tol <= 1e-2) {
            return Err(Error::Config(format!(
                "truncation tolerance must lie in (0, 1e-2], got {truncation_tol}"
            )));
        }
        let delta = rolloff_end - PI;
        // |g(t)| <= 2 pi / (delta^2 t^3) once t clears sqrt(2) pi / delta,
        // so a radius of sqrt(2 pi / (delta^2 tol)) caps the summed tail
        // near tol; the floor keeps the radius inside the envelope's
        // range of validity even for loose tolerances
        let radius = (2.0 * PI / (delta * delta * truncation_tol)).sqrt().max(4.0 * PI / delta);
        Ok(ReconstructionFilter { rolloff_end, truncation_tol, radius })
    }

    pub fn rolloff_end(&self) -> f64 {
        self.rolloff_end
    }

    pub fn truncation_tol(&self) -> f64 {
        self.truncation_tol
    }

    /// Width of the transition band.
    pub fn transition_width(&self) -> f64 {
        self.rolloff_end - PI
    }

    /// Kernel evaluations are treated as zero beyond this distance.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// True when the roll-off fits under the replica-free band of rate
    /// `lambda`, which is what the reconstruction identity needs.
    pub fn admits(&self, lambda: f64) -> bool {
        lambda > 0.0 && self.rolloff_end <= lambda * PI + 1e-9
    }

    /// Frequency response.
    pub fn response(&self, omega: f64) -> f64 {
        let a = omega.abs();
        if a <= PI {
            1.0
        } else if a >= self.rolloff_end {
            0.0
        } else {
            0.5 * (1.0 + (PI * (a - PI) / self.transition_width()).cos())
        }
    }

    /// Time-domain kernel
    /// `g(t) = sin(ct) cos(delta t / 2) / (pi t (1 - (t delta / pi)^2))`
    /// with `c` the midpoint of passband edge and roll-off end; the
    /// removable singularities at t = 0 and |t| = pi/delta are evaluated
    /// by their limits.
    pub fn kernel(&self, t: f64) -> f64 {
        let c = 0.5 * (PI + self.rolloff_end);
        let x = c * t;
        let sinc = if x.abs() < 1e-8 { 1.0 } else { x.sin() / x };
        (c / PI) * sinc * edge_ratio(t * self.transition_width() / PI)
    }

    /// Upper bound on `(1/lambda) sum |g(t - n/lambda)|` over the lattice
    /// points outside the truncation radius, per unit coefficient.
    pub fn tail_bound(&self, lambda: f64) -> f64 {
        let delta = self.transition_width();
        let inner = (self.radius - 1.0 / lambda.max(1.0)).max(2.0 * PI / delta);
        2.0 * PI / (delta * delta * inner * inner)
    }

    /// Numerical L1 mass of the kernel over the truncation window.
    pub fn kernel_l1(&self) -> f64 {
        let h = 1e-3;
        let n = (self.radius / h).ceil() as usize;
        let mut acc = 0.5 * self.kernel(0.0).abs();
        for i in 1..=n {
            acc += self.kernel(i as f64 * h).abs();
        }
        2.0 * acc * h
    }

    /// Numerical total variation of the kernel (the L1 mass of its
    /// derivative) over the truncation window.
    pub fn kernel_variation(&self) -> f64 {
        let h = 1e-3;
        let n = (self.radius / h).ceil() as usize;
        let mut acc = 0.0;
        let mut prev = self.kernel(-(n as f64) * h);
        for i in -(n as i64 - 1)..=(n as i64) {
            let cur = self.kernel(i as f64 * h);
            acc += (cur - prev).abs();
            prev = cur;
        }
        acc
    }
}

/// `cos(pi s / 2) / (1 - s^2)` with the removable zeros at |s| = 1
/// rewritten through the distance a = 1 - |s| to the band edge.
fn edge_ratio(s: f64) -> f64 {
    let a = 1.0 - s.abs();
    let x = 0.5 * PI * a;
    let sinc = if x.abs() < 1e-8 { 1.0 } else { x.sin() / x };
    0.5 * PI * sinc / (1.0 + s.abs())
}

/// One reconstruction evaluation together with the bound on what the
/// kernel truncation may have discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub value: f64,
    pub truncation_bound: f64,
}

/// Evaluates `(1/lambda) sum c_n g(t - n/lambda)` over the lattice points
/// within the filter radius of `t`. `start` is the lattice index of
/// `coeffs[0]`. The window must cover the full radius on both sides.
pub fn reconstruct(
    coeffs: &[f64],
    start: i64,
    lambda: f64,
    filter: &ReconstructionFilter,
    t: f64,
) -> Result<Reconstruction> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("rate must be positive and finite, got {lambda}")));
    }
    if !filter.admits(lambda) {
        return Err(Error::Config(format!(
            "filter roll-off ends at {:.4}, beyond the replica-free band {:.4} of rate {}",
            filter.rolloff_end(),
            lambda * PI,
            lambda
        )));
    }
    if !t.is_finite() {
        return Err(Error::Domain(format!("evaluation point must be finite, got {t}")));
    }
    let r = filter.radius();
    let lo = ((t - r) * lambda).ceil() as i64;
    let hi = ((t + r) * lambda).floor() as i64;
    let end = start + coeffs.len() as i64;
    if lo < start || hi >= end {
        return Err(Error::Window(format!(
            "evaluation at t = {t} needs lattice indices {lo}..={hi}, window covers {start}..{}",
            end - 1
        )));
    }
    let mut acc = 0.0;
    for n in lo..=hi {
        acc += coeffs[(n - start) as usize] * filter.kernel(t - n as f64 / lambda);
    }
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    Ok(Reconstruction { value: acc / lambda, truncation_bound: filter.tail_bound(lambda) * scale })
}

/// End-to-end quantization route measured by `distortion_curve`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    /// Rounds every sample independently to a sign and `bits - 1` binary
    /// magnitude digits.
    Pcm { bits: u32 },
    /// Encodes every sample independently with `bits` digits of a beta
    /// expansion and decodes them back before reconstruction.
    Beta { bits: u32, beta: f64 },
    /// One-bit first-order feedback loop, damping 1 - 1/lambda.
    FirstOrder,
    /// Damped second-order loop with the tri-level quantizer (threshold
    /// 1/2), damping 1 - 1/lambda, decision weight `gamma`.
    SecondOrderTri { gamma: f64 },
    /// One-sided damped second-order loop with the four-level quantizer,
    /// damping 1 - 1/lambda.
    SecondOrderAsymmetric { gamma: f64 },
}

impl Pipeline {
    /// Whether the budget axis means bit depth (as opposed to the
    /// oversampling rate).
    pub fn budget_is_bits(&self) -> bool {
        matches!(self, Pipeline::Pcm { .. } | Pipeline::Beta { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Pipeline::Pcm { bits } | Pipeline::Beta { bits, .. } if !(2..=52).contains(&bits) => {
                Err(Error::Config(format!("bit depth must lie in 2..=52, got {bits}")))
            }
            Pipeline::Beta { beta, .. } if !(beta > 1.0 && beta < 2.0) => {
                Err(Error::Config(format!("expansion base must lie in (1, 2), got {beta}")))
            }
            Pipeline::SecondOrderTri { gamma } | Pipeline::SecondOrderAsymmetric { gamma }
                if !(gamma > 0.0 && gamma.is_finite()) =>
            {
                Err(Error::Config(format!("decision weight must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

/// Shared settings of a distortion measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionConfig {
    pub filter: ReconstructionFilter,
    /// Half-width of the central region the sup error is measured on;
    /// samples extend one filter radius beyond it on each side.
    pub window: f64,
    /// Number of evaluation points across the region.
    pub grid: usize,
    /// Oversampling rate used when the budget axis is bit depth.
    pub lambda_for_bits: f64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        DistortionConfig {
            filter: ReconstructionFilter::default(),
            window: 50.0,
            grid: 1000,
            lambda_for_bits: 4.0,
        }
    }
}

impl DistortionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) || !self.window.is_finite() {
            return Err(Error::Config(format!("window must be positive, got {}", self.window)));
        }
        if self.grid < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {}", self.grid)));
        }
        if !(self.lambda_for_bits >= 1.0) || !self.lambda_for_bits.is_finite() {
            return Err(Error::Config(format!(
                "bit-depth pipelines need a rate >= 1, got {}",
                self.lambda_for_bits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionPoint {
    pub budget: f64,
    pub sup_error: f64,
}

/// Runs one pipeline at one budget and measures the sup reconstruction
/// error on a lattice-aligned grid across the central window.
pub fn distortion_point(
    pipeline: Pipeline,
    f: &TestSignal,
    budget: f64,
    cfg: &DistortionConfig,
    rng: &mut Rng,
) -> Result<DistortionPoint> {
    pipeline.validate()?;
    cfg.validate()?;
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::Config(format!("budget must be positive, got {budget}")));
    }
    let (lambda, pipeline) = if pipeline.budget_is_bits() {
        if budget.fract() != 0.0 || !(2.0..=52.0).contains(&budget) {
            return Err(Error::Config(format!(
                "bit budgets must be integers in 2..=52, got {budget}"
            )));
        }
        let bits = budget as u32;
        let p = match pipeline {
            Pipeline::Pcm { .. } => Pipeline::Pcm { bits },
            Pipeline::Beta { beta, .. } => Pipeline::Beta { bits, beta },
            other => other,
        };
        (cfg.lambda_for_bits, p)
    } else {
        if !(budget >= 2.0) {
            return Err(Error::Config(format!(
                "oversampling budgets must be at least 2, got {budget}"
            )));
        }
        (budget, pipeline)
    };
    if !cfg.filter.admits(lambda) {
        return Err(Error::Config(format!(
            "rate {lambda} is below the filter's minimum {:.4}",
            cfg.filter.rolloff_end() / PI
        )));
    }

    let m_half = (cfg.window * lambda).round() as i64;
    let j_rad = (cfg.filter.radius() * lambda).ceil() as i64;
    let n_lo = -m_half - j_rad - 1;
    let count = (2 * (m_half + j_rad + 1) + 1) as usize;
    let samples = sample(f, lambda, n_lo, count)?;
    let coeffs = encode_stream(pipeline, &samples, lambda, rng)?;

    let table: Vec<f64> = (0..=j_rad).map(|j| cfg.filter.kernel(j as f64 / lambda)).collect();
    let stride = ((2 * m_half) as usize / (cfg.grid - 1)).max(1) as i64;
    let mut sup = 0.0f64;
    let mut m = -m_half;
    while m <= m_half {
        let base = (m - n_lo) as usize;
        let mut acc = coeffs[base] * table[0];
        for j in 1..=j_rad as usize {
            acc += (coeffs[base - j] + coeffs[base + j]) * table[j];
        }
        let err = (f.eval(m as f64 / lambda) - acc / lambda).abs();
        sup = sup.max(err);
        m += stride;
    }
    Ok(DistortionPoint { budget, sup_error: sup })
}

/// Measures one pipeline across a strictly increasing budget list. Each
/// point derives its own random stream from `seed`, so curves are
/// reproducible point by point.
pub fn distortion_curve(
    pipeline: Pipeline,
    f: &TestSignal,
    budgets: &[f64],
    cfg: &DistortionConfig,
    seed: u64,
) -> Result<Vec<DistortionPoint>> {
    if budgets.is_empty() {
        return Err(Error::Config("at least one budget is required".into()));
    }
    if budgets.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("budgets must be strictly increasing".into()));
    }
    budgets
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let mut rng = Rng::derive(seed, i as u64);
            distortion_point(pipeline, f, b, cfg, &mut rng)
        })
        .collect()
}

fn pcm_round(s: f64, bits: u32) -> Result<f64> {
    if !(s.abs() <= 1.0) {
        return Err(Error::Domain(format!("sample magnitude above full scale: {s}")));
    }
    let scale = (1u64 << (bits - 1)) as f64;
    Ok(s.signum() * ((s.abs() * scale).floor()).min(scale - 1.0) / scale)
}

fn encode_stream(pipeline: Pipeline, samples: &[f64], lambda: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    match pipeline {
        Pipeline::Pcm { bits } => samples.iter().map(|&s| pcm_round(s, bits)).collect(),
        Pipeline::Beta { bits, beta } => {
            let cfg = BetaEncoderConfig::ideal(beta);
            let n = bits as usize;
            samples
                .iter()
                .map(|&s| {
                    let run = beta_encode(&cfg, s, n, rng)?;
                    beta_decode(&run.bits, 1.0 / beta, n)
                })
                .collect()
        }
        Pipeline::FirstOrder => {
            let rho = 1.0 - 1.0 / lambda;
            let cfg = SdConfig::order1(SdScheme::FiniteMemory { rho });
            let trace = sd_run(&cfg, samples, SdState::ORIGIN, samples.len(), rng)?;
            Ok(trace.bits.iter().map(|&(b, _)| b as f64).collect())
        }
        Pipeline::SecondOrderTri { gamma } => {
            let rho = 1.0 - 1.0 / lambda;
            let mut cfg = SdConfig::order2(SdScheme::FiniteMemory { rho }, gamma);
            cfg.quantizer = ScalarQuantizerSpec::ideal(ScalarKind::TriLevel { tau: 0.5 });
            let trace = sd_run(&cfg, samples, SdState::ORIGIN, samples.len(), rng)?;
            Ok(trace.bits.iter().map(|&(b, _)| b as f64).collect())
        }
        Pipeline::SecondOrderAsymmetric { gamma } => {
            let rho = 1.0 - 1.0 / lambda;
            let cfg = SdConfig::asymmetric(gamma, rho);
            let trace = sd_run(&cfg, samples, SdState::ORIGIN, samples.len(), rng)?;
            Ok(trace.bits.iter().map(|&(b, _)| b as f64).collect())
        }
    }
}

/// Least-squares slope of log2(sup_error) against log2(budget).
pub fn log2_slope(points: &[DistortionPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Config(format!(
            "slope fitting needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.budget > 0.0) || !(p.sup_error > 0.0)) {
        return Err(Error::Domain("slope fitting needs positive budgets and errors".into()));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.budget.log2();
        let y = p.sup_error.log2();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Numerical("degenerate budget spread in slope fit".into()));
    }
    Ok((n * sxy - sx * sy) / denom)
}
