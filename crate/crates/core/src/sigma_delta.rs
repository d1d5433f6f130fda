//! Sigma-delta feedback loops of orders one and two.
//!
//! The plain and damped (finite-memory) loops are the classical
//! oversampled modulators. The asymmetric variant damps the state only on
//! the positive side of its decision line, which turns the origin into a
//! global attractor of the zero-input dynamics: once the input vanishes
//! the output pair settles to a constant, so the reconstruction filter
//! hears silence instead of an idle tone. The chaotic and hybrid variants
//! expand instead of damping to break up periodic output under constant
//! input.
//!
//! Next to the run functions this module carries the planar geometry used
//! to reason about the zero-input map: the invariant pair of
//! parallelograms T, the triangle pair R that confines every point where
//! the shift map can raise the descent function h(u,v) = u^2 + |2v - u|,
//! the parabolic band S that keeps the damped loop bounded, and detectors
//! for settled output and periodic tails.

use crate::error::{Error, Result};
use crate::quantizers::{quantize_scalar, ScalarKind, ScalarOutput, ScalarQuantizerSpec};
use crate::rng::Rng;

/// Any orbit coordinate beyond this magnitude aborts a run; theorem-valid
/// configurations stay orders of magnitude below it.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Update rule of the loop. `rho` is a damping factor applied to the
/// delayed state, `eps` the expansion rate of the chaotic variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdScheme {
    /// Undamped integrators.
    Plain,
    /// Every delayed state is multiplied by `rho` before use.
    FiniteMemory { rho: f64 },
    /// Damping by `rho` fires only when the auxiliary bit of the
    /// four-level quantizer reports the positive side of the decision
    /// line.
    Asymmetric { rho: f64 },
    /// Both integrators expanded by `1 + eps` every step.
    Chaotic { eps: f64 },
    /// Expansion or contraction by `1 +/- eps`, switched by the auxiliary
    /// bit remapped to {-1, +1}.
    Hybrid { eps: f64 },
}

/// Full description of one modulator.
///
/// The decision argument is `u + gamma v` for the one-bit and tri-level
/// quantizers and `u/gamma + v` for the four-level ones, matching the
/// thresholds each family is calibrated against. Delay leakage
/// (`lambda1`, `lambda2`) is modeled for the asymmetric scheme only; all
/// other schemes require the default `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdConfig {
    /// 1 or 2 integrators.
    pub order: u8,
    pub scheme: SdScheme,
    /// Weight of the second state in the decision rule.
    pub gamma: f64,
    pub quantizer: ScalarQuantizerSpec,
    /// Leak factor of the first delay element.
    pub lambda1: f64,
    /// Leak factor of the second delay element.
    pub lambda2: f64,
}

impl SdConfig {
    /// First-order loop with the one-bit quantizer.
    pub fn order1(scheme: SdScheme) -> Self {
        SdConfig {
            order: 1,
            scheme,
            gamma: 1.0,
            quantizer: ScalarQuantizerSpec::ideal(ScalarKind::Sign),
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    /// Second-order loop deciding on `u + gamma v` with the one-bit
    /// quantizer.
    pub fn order2(scheme: SdScheme, gamma: f64) -> Self {
        SdConfig {
            order: 2,
            scheme,
            gamma,
            quantizer: ScalarQuantizerSpec::ideal(ScalarKind::Sign),
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    /// One-sided damped second-order loop with the matched four-level
    /// quantizer (upper threshold `1/(2 rho)`), the configuration the
    /// settling guarantee is stated for.
    pub fn asymmetric(gamma: f64, rho: f64) -> Self {
        SdConfig {
            order: 2,
            scheme: SdScheme::Asymmetric { rho },
            gamma,
            quantizer: ScalarQuantizerSpec::ideal(ScalarKind::FourLevel { tau: rho }),
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    /// Second-order loop that expands or contracts by `1 +/- eps` as
    /// decided by the symmetric four-level quantizer.
    pub fn hybrid(gamma: f64, eps: f64) -> Self {
        SdConfig {
            order: 2,
            scheme: SdScheme::Hybrid { eps },
            gamma,
            quantizer: ScalarQuantizerSpec::ideal(ScalarKind::FourLevelSym),
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != 1 && self.order != 2 {
            return Err(Error::Config(format!("loop order must be 1 or 2, got {}", self.order)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "decision weight gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        match self.scheme {
            SdScheme::FiniteMemory { rho } | SdScheme::Asymmetric { rho } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::Config(format!("damping factor must be in (0,1], got {rho}")));
                }
            }
            SdScheme::Chaotic { eps } | SdScheme::Hybrid { eps } => {
                if !(eps >= 0.0) || !eps.is_finite() {
                    return Err(Error::Config(format!(
                        "expansion rate must be finite and >= 0, got {eps}"
                    )));
                }
            }
            SdScheme::Plain => {}
        }
        if self.order == 1
            && !matches!(self.scheme, SdScheme::Plain | SdScheme::FiniteMemory { .. })
        {
            return Err(Error::Config(
                "first-order loops support only the plain and finite-memory schemes".into(),
            ));
        }
        let four = matches!(self.quantizer.kind, ScalarKind::FourLevel { .. } | ScalarKind::FourLevelSym);
        match self.scheme {
            SdScheme::Asymmetric { .. } | SdScheme::Hybrid { .. } if !four => {
                return Err(Error::Config(
                    "the asymmetric and hybrid schemes need a four-level quantizer".into(),
                ));
            }
            SdScheme::Plain | SdScheme::FiniteMemory { .. } if four => {
                return Err(Error::Config(
                    "the plain and finite-memory schemes use a sign or tri-level quantizer".into(),
                ));
            }
            _ => {}
        }
        for lambda in [self.lambda1, self.lambda2] {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::Config(format!("leak factors must be in (0,1], got {lambda}")));
            }
        }
        if (self.lambda1 != 1.0 || self.lambda2 != 1.0)
            && !matches!(self.scheme, SdScheme::Asymmetric { .. })
        {
            return Err(Error::Config(
                "delay leakage is modeled for the asymmetric scheme only".into(),
            ));
        }
        self.quantizer.validate()
    }
}

/// Modulator state; `v` is carried but unused by first-order loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdState {
    pub u: f64,
    pub v: f64,
}

impl SdState {
    pub const ORIGIN: SdState = SdState { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        SdState { u, v }
    }

    fn check_finite(&self) -> Result<()> {
        if self.u.is_finite() && self.v.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("state must be finite, got ({}, {})", self.u, self.v)))
        }
    }
}

/// One simulated run. `states[n]` is the state after step `n`, `bits[n]`
/// the output pair emitted during it and `inputs[n]` the sample consumed;
/// the three vectors always have equal length. Schemes driven by a scalar
/// quantizer report the pair `(b, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTrace {
    pub initial: SdState,
    pub states: Vec<SdState>,
    pub bits: Vec<(i8, i8)>,
    pub inputs: Vec<f64>,
}

impl OrbitTrace {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// State the quantizer saw at the start of step `n`.
    pub fn state_before(&self, n: usize) -> SdState {
        if n == 0 {
            self.initial
        } else {
            self.states[n - 1]
        }
    }
}

fn scalar_level(cfg: &SdConfig, w: f64, rng: &mut Rng) -> Result<i8> {
    match quantize_scalar(&cfg.quantizer, w, rng)? {
        ScalarOutput::Level(b) => Ok(b),
        ScalarOutput::Four(p) => Ok(p.b),
    }
}

fn step(cfg: &SdConfig, s: SdState, f: f64, rng: &mut Rng) -> Result<(SdState, (i8, i8))> {
    let SdState { u, v } = s;
    if cfg.order == 1 {
        let ru = match cfg.scheme {
            SdScheme::FiniteMemory { rho } => rho * u,
            _ => u,
        };
        let w = ru + f;
        let b = scalar_level(cfg, w, rng)?;
        return Ok((SdState { u: w - b as f64, v }, (b, 0)));
    }
    match cfg.scheme {
        SdScheme::Plain => {
            let w = u + cfg.gamma * v;
            let b = scalar_level(cfg, w, rng)?;
            let un = u + f - b as f64;
            Ok((SdState { u: un, v: v + un }, (b, 0)))
        }
        SdScheme::FiniteMemory { rho } => {
            let (ru, rv) = (rho * u, rho * v);
            let w = ru + cfg.gamma * rv;
            let b = scalar_level(cfg, w, rng)?;
            let un = ru + f - b as f64;
            Ok((SdState { u: un, v: rv + un }, (b, 0)))
        }
        SdScheme::Chaotic { eps } => {
            // The expansion feeds back the b component whichever quantizer
            // family drives the loop.
            let (b, q) = match cfg.quantizer.kind {
                ScalarKind::Sign | ScalarKind::TriLevel { .. } => {
                    (scalar_level(cfg, u + cfg.gamma * v, rng)?, 0)
                }
                _ => {
                    let p = quantize_scalar(&cfg.quantizer, u / cfg.gamma + v, rng)?
                        .pair()
                        .expect("four-level quantizer emits a pair");
                    (p.b, p.q)
                }
            };
            let un = (1.0 + eps) * u + f - b as f64;
            Ok((SdState { u: un, v: (1.0 + eps) * v + un }, (b, q)))
        }
        SdScheme::Asymmetric { rho } => {
            let w = cfg.lambda1 * u / cfg.gamma + cfg.lambda2 * v;
            let p = quantize_scalar(&cfg.quantizer, w, rng)?
                .pair()
                .expect("four-level quantizer emits a pair");
            let damp = if p.q == 1 { rho } else { 1.0 };
            let un = cfg.lambda1 * (damp * u) - p.b as f64 + f;
            let vn = cfg.lambda2 * (damp * v) + un;
            Ok((SdState { u: un, v: vn }, (p.b, p.q)))
        }
        SdScheme::Hybrid { eps } => {
            let w = u / cfg.gamma + v;
            let p = quantize_scalar(&cfg.quantizer, w, rng)?
                .pair()
                .expect("four-level quantizer emits a pair");
            let q: i8 = if p.q == 0 { -1 } else { 1 };
            let grow = if q == 1 { 1.0 + eps } else { 1.0 - eps };
            let un = grow * u - p.b as f64 + f;
            Ok((SdState { u: un, v: grow * v + un }, (p.b, q)))
        }
    }
}

/// Runs a modulator for `steps` iterations from `initial`. Samples beyond
/// the end of `inputs` are taken to be zero, so a run that goes quiet
/// after an active prefix only needs the prefix spelled out.
pub fn sd_run(
    cfg: &SdConfig,
    inputs: &[f64],
    initial: SdState,
    steps: usize,
    rng: &mut Rng,
) -> Result<OrbitTrace> {
    cfg.validate()?;
    initial.check_finite()?;
    if let Some(bad) = inputs.iter().find(|f| !f.is_finite()) {
        return Err(Error::Domain(format!("input samples must be finite, got {bad}")));
    }
    let mut states = Vec::with_capacity(steps);
    let mut bits = Vec::with_capacity(steps);
    let mut used = Vec::with_capacity(steps);
    let mut cur = initial;
    for k in 0..steps {
        let f = inputs.get(k).copied().unwrap_or(0.0);
        let (next, bq) = step(cfg, cur, f, rng)?;
        if !next.u.is_finite()
            || !next.v.is_finite()
            || next.u.abs() > DIVERGENCE_LIMIT
            || next.v.abs() > DIVERGENCE_LIMIT
        {
            return Err(Error::Divergence { step: k, u: next.u, v: next.v });
        }
        states.push(next);
        bits.push(bq);
        used.push(f);
        cur = next;
    }
    Ok(OrbitTrace { initial, states, bits, inputs: used })
}

/// Which affine branch of the zero-input shift map fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftBranch {
    /// Decision value above 1/2: integrate, then shift down by (1, 1).
    Down,
    /// Decision value in [-1/2, 1/2]: pure integration.
    Hold,
    /// Decision value below -1/2: integrate, then shift up by (1, 1).
    Up,
}

impl ShiftBranch {
    /// Output bit the branch corresponds to.
    pub fn bit(self) -> i8 {
        match self {
            ShiftBranch::Down => 1,
            ShiftBranch::Hold => 0,
            ShiftBranch::Up => -1,
        }
    }
}

/// One step of the zero-input asymmetric map with its branch tags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroInputStep {
    pub state: SdState,
    /// Whether the one-sided damping fired (strictly positive side of the
    /// decision line).
    pub damped: bool,
    pub shift: ShiftBranch,
}

/// Applies the zero-input map of the asymmetric scheme once: damp by
/// `rho` iff `u/gamma + v > 0`, then apply the integrate-and-shift map at
/// the damped point. Expects `gamma > 0` and `rho` in (0, 1].
pub fn zero_input_step(gamma: f64, rho: f64, s: SdState) -> ZeroInputStep {
    let damped = s.u / gamma + s.v > 0.0;
    let (du, dv) = if damped { (rho * s.u, rho * s.v) } else { (s.u, s.v) };
    let w = du / gamma + dv;
    let (shift, un) = if w > 0.5 {
        (ShiftBranch::Down, du - 1.0)
    } else if w < -0.5 {
        (ShiftBranch::Up, du + 1.0)
    } else {
        (ShiftBranch::Hold, du)
    };
    ZeroInputStep { state: SdState { u: un, v: dv + un }, damped, shift }
}

/// Planar regions used by the zero-input and boundedness analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// Pair of parallelograms, positively invariant under the zero-input
    /// map; union of `TPlus` and `TMinus`.
    T { gamma: f64 },
    /// The half with u in (0, 1).
    TPlus { gamma: f64 },
    /// The half with u in (-1, 0]; contains the origin.
    TMinus { gamma: f64 },
    /// Pair of triangles containing every point where the undamped shift
    /// map can raise the descent function h.
    R { gamma: f64 },
    /// Band between two parabolas, invariant for the damped tri-level
    /// loop with inputs bounded by `alpha`.
    S { alpha: f64, c: f64 },
    /// Sublevel set {h <= eps}.
    HSublevel { eps: f64 },
    /// Half-plane u + gamma v >= 0 on which the damping acts.
    PositiveHalfPlane { gamma: f64 },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::T { gamma }
            | Region::TPlus { gamma }
            | Region::TMinus { gamma }
            | Region::R { gamma }
            | Region::PositiveHalfPlane { gamma } => {
                if !(gamma > 0.0) || !gamma.is_finite() {
                    return Err(Error::Config(format!(
                        "region weight gamma must be positive and finite, got {gamma}"
                    )));
                }
            }
            Region::S { alpha, c } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Config(format!(
                        "input bound alpha must be in (0,1), got {alpha}"
                    )));
                }
                let floor = stability_offset_bound(alpha);
                if !(c >= floor) {
                    return Err(Error::Config(format!(
                        "band offset {c} is below the invariance floor {floor}"
                    )));
                }
            }
            Region::HSublevel { eps } => {
                if !(eps >= 0.0) {
                    return Err(Error::Config(format!("sublevel height must be >= 0, got {eps}")));
                }
            }
        }
        Ok(())
    }
}

/// Membership test for all region kinds. Region parameters are trusted;
/// call [`Region::validate`] first when they come from outside.
pub fn region_contains(region: Region, s: SdState) -> bool {
    let SdState { u, v } = s;
    match region {
        Region::TPlus { gamma } => {
            let w = u / gamma + v;
            0.0 < u && u < 1.0 && -0.5 <= w && w <= 0.5 + 1.0 / gamma
        }
        Region::TMinus { gamma } => {
            let w = u / gamma + v;
            -1.0 < u && u <= 0.0 && -(0.5 + 1.0 / gamma) <= w && w <= 0.5
        }
        Region::T { gamma } => {
            region_contains(Region::TPlus { gamma }, s) || region_contains(Region::TMinus { gamma }, s)
        }
        Region::R { gamma } => {
            let in_r1 = u + gamma * v >= 0.0 && 2.0 * v + u <= 1.0 && u <= 0.5;
            let in_r2 = u + gamma * v < 0.0 && 2.0 * v + u >= -1.0 && u >= -0.5;
            in_r1 || in_r2
        }
        Region::S { alpha, c } => {
            stability_lower(u, alpha, c) <= v && v <= stability_upper(u, alpha, c)
        }
        Region::HSublevel { eps } => lyapunov_h(s) <= eps,
        Region::PositiveHalfPlane { gamma } => u + gamma * v >= 0.0,
    }
}

/// Upper boundary of the invariant band: a downward parabola through
/// (0, c), flatter on the negative side.
pub fn stability_upper(u: f64, alpha: f64, c: f64) -> f64 {
    if u >= 0.0 {
        -u * u / (2.0 * (1.0 - alpha)) + u / 2.0 + c
    } else {
        -u * u / (2.0 * (1.0 + alpha)) + u / 2.0 + c
    }
}

/// Lower boundary of the invariant band; the band is symmetric through
/// the origin.
pub fn stability_lower(u: f64, alpha: f64, c: f64) -> f64 {
    if u >= 0.0 {
        u * u / (2.0 * (1.0 + alpha)) + u / 2.0 - c
    } else {
        u * u / (2.0 * (1.0 - alpha)) + u / 2.0 - c
    }
}

/// Smallest band offset c for which the invariance statement applies at
/// input bound `alpha`.
pub fn stability_offset_bound(alpha: f64) -> f64 {
    1.0 / (2.0 - 2.0 * alpha * alpha) + (12.0 + 9.0 * (1.0 + alpha)) / (8.0 * (1.0 - alpha))
}

/// Largest |u| reached inside the band: where the two parabolas meet.
pub fn stability_u_extent(alpha: f64, c: f64) -> f64 {
    (2.0 * c * (1.0 - alpha * alpha)).sqrt()
}

/// Stated admissible range for the decision weight gamma at a given
/// (alpha, c). Treat the pair as advisory: at (.9, 40) it comes out
/// empty (lo > hi), while simulation shows an invariant window of
/// roughly [.03, .065] lying between the two values in the opposite
/// order, so the endpoints appear to have swapped roles somewhere.
pub fn stability_gamma_range(alpha: f64, c: f64) -> (f64, f64) {
    let s = (2.0 * c * (1.0 - alpha * alpha)).sqrt();
    let lo = (2.0 * s - (1.0 + alpha)) / (s + 2.0 * alpha * c);
    let hi = 4.0 * (1.0 + alpha) * ((1.0 + alpha) + 2.0)
        / (8.0 * c * (1.0 + alpha) - (1.0 + alpha) - 4.0);
    (lo, hi)
}

/// Descent function u^2 + |2v - u| used for the trapping argument;
/// maximum of the two sheets below.
pub fn lyapunov_h(s: SdState) -> f64 {
    h_plus(s).max(h_minus(s))
}

/// Sheet u^2 + 2v - u, exactly preserved by the down-shift branch.
pub fn h_plus(s: SdState) -> f64 {
    s.u * s.u + 2.0 * s.v - s.u
}

/// Sheet u^2 - 2v + u, exactly preserved by the up-shift branch.
pub fn h_minus(s: SdState) -> f64 {
    s.u * s.u - 2.0 * s.v + s.u
}

/// Outcome of scanning a trace for settled output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quietness {
    /// Output constant from `settle` through the end of the usable
    /// window, with a tail long enough to trust.
    Quiet { settle: usize, value: (i8, i8) },
    /// Output still changing too close to the end of the window.
    NotQuiet,
    /// Usable window too short to decide either way.
    Indeterminate,
}

/// Decides whether the output settled to a constant pair from `onset`
/// onward. The constant tail must cover at least max(10, window/10)
/// steps to count, where window is the usable post-onset length.
///
/// A state that collapses to exactly (0, 0) mid-run stops carrying
/// information: the ideal iterates stay strictly positive and the
/// all-zero state only appears once the floating-point magnitudes
/// underflow, flipping the output pair one last time. The scan therefore
/// stops at the first bit computed from an exactly-zero state, unless the
/// window began there.
pub fn quietness_test(trace: &OrbitTrace, onset: usize) -> Quietness {
    let bits = &trace.bits;
    if onset >= bits.len() {
        return Quietness::Indeterminate;
    }
    let mut end = bits.len();
    if trace.state_before(onset) != SdState::ORIGIN {
        for n in onset..bits.len() {
            if trace.state_before(n) == SdState::ORIGIN {
                end = n;
                break;
            }
        }
    }
    let window = end - onset;
    if window < 10 {
        return Quietness::Indeterminate;
    }
    let mut settle = end - 1;
    while settle > onset && bits[settle - 1] == bits[end - 1] {
        settle -= 1;
    }
    let tail = end - settle;
    if tail >= 10.max(window / 10) {
        Quietness::Quiet { settle, value: bits[end - 1] }
    } else {
        Quietness::NotQuiet
    }
}

/// What one zero-input orbit did relative to the invariant pair of
/// parallelograms.
#[derive(Debug, Clone, PartialEq)]
pub struct TrappingReport {
    /// First orbit index whose state lies in T (0 is the initial state).
    pub entry: Option<usize>,
    /// States found outside T after the first entry.
    pub post_entry_exits: usize,
    /// Consecutive equal nonzero bits seen while inside T, where the bit
    /// rule demands alternation.
    pub alternation_violations: usize,
    /// Descent-function values sampled while outside T with the damping
    /// active and the image still outside T.
    pub outside_h: Vec<f64>,
    /// Adjacent pairs in `outside_h` that failed to decrease strictly.
    pub descent_violations: usize,
}

/// Iterates the zero-input map and audits the trapping claims: the orbit
/// enters T, never leaves it again, alternates its nonzero bits inside,
/// and strictly shrinks h while still outside on the damped side.
pub fn trapping_diagnostics(
    gamma: f64,
    rho: f64,
    initial: SdState,
    max_steps: usize,
) -> Result<TrappingReport> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!(
            "decision weight gamma must be positive and finite, got {gamma}"
        )));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("damping factor must be in (0,1], got {rho}")));
    }
    initial.check_finite()?;
    let t = Region::T { gamma };
    let mut report = TrappingReport {
        entry: None,
        post_entry_exits: 0,
        alternation_violations: 0,
        outside_h: Vec::new(),
        descent_violations: 0,
    };
    let mut cur = initial;
    let mut cur_in_t = region_contains(t, cur);
    if cur_in_t {
        report.entry = Some(0);
    }
    let mut last_bit_in_t: Option<i8> = None;
    let mut last_outside_h: Option<f64> = None;
    for n in 0..max_steps {
        let step = zero_input_step(gamma, rho, cur);
        let next = step.state;
        if !next.u.is_finite()
            || !next.v.is_finite()
            || next.u.abs() > DIVERGENCE_LIMIT
            || next.v.abs() > DIVERGENCE_LIMIT
        {
            return Err(Error::Divergence { step: n, u: next.u, v: next.v });
        }
        let next_in_t = region_contains(t, next);
        if report.entry.is_none() && next_in_t {
            report.entry = Some(n + 1);
        } else if report.entry.is_some() && !next_in_t {
            report.post_entry_exits += 1;
        }
        let bit = step.shift.bit();
        if cur_in_t && next_in_t {
            if let Some(prev) = last_bit_in_t {
                if prev != 0 && prev == bit {
                    report.alternation_violations += 1;
                }
            }
            last_bit_in_t = Some(bit);
        } else {
            last_bit_in_t = None;
        }
        if !cur_in_t && step.damped && !next_in_t {
            let h = lyapunov_h(cur);
            if let Some(prev) = last_outside_h {
                if h >= prev {
                    report.descent_violations += 1;
                }
            }
            report.outside_h.push(h);
            last_outside_h = Some(h);
        } else {
            last_outside_h = None;
        }
        cur = next;
        cur_in_t = next_in_t;
    }
    Ok(report)
}

/// Outcome of the tail-periodicity scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToneReport {
    /// Smallest period of the scanned tail; constant tails report 1.
    Periodic { period: usize },
    /// No period up to the allowed maximum fits the tail.
    Aperiodic,
    /// Sequence shorter than the scan window.
    Indeterminate,
}

/// Looks for a short period in the last `10 * max_period` symbols.
pub fn idle_tone_detect<T: PartialEq>(bits: &[T], max_period: usize) -> ToneReport {
    if max_period == 0 {
        return ToneReport::Indeterminate;
    }
    let window = 10 * max_period;
    if bits.len() < window {
        return ToneReport::Indeterminate;
    }
    let tail = &bits[bits.len() - window..];
    for p in 1..=max_period {
        if tail.iter().zip(tail.iter().skip(p)).all(|(a, b)| a == b) {
            return ToneReport::Periodic { period: p };
        }
    }
    ToneReport::Aperiodic
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizers::FlakyMode;

    fn rng() -> Rng {
        Rng::seeded(0)
    }

    fn tri_level(tau: f64) -> ScalarQuantizerSpec {
        ScalarQuantizerSpec::ideal(ScalarKind::TriLevel { tau })
    }

    #[test]
    fn order1_zero_input_alternates() {
        let cfg = SdConfig::order1(SdScheme::Plain);
        let trace = sd_run(&cfg, &[], SdState::new(0.3, 0.0), 6, &mut rng()).unwrap();
        let b: Vec<i8> = trace.bits.iter().map(|&(b, _)| b).collect();
        assert_eq!(b, vec![1, -1, 1, -1, 1, -1]);
        for (k, s) in trace.states.iter().enumerate() {
            let expect = if k % 2 == 0 { -0.7 } else { 0.3 };
            assert!((s.u - expect).abs() < 1e-12, "step {k}: u = {}", s.u);
        }
    }

    #[test]
    fn order1_damping_shrinks_the_state() {
        let cfg = SdConfig::order1(SdScheme::FiniteMemory { rho: 0.9 });
        let trace = sd_run(&cfg, &[], SdState::new(0.3, 0.0), 200, &mut rng()).unwrap();
        assert!(trace.states.iter().all(|s| s.u.abs() <= 1.0));
        // The damped loop still chatters: the sign output cannot sit still
        // on zero input.
        assert!(trace.bits.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn origin_is_fixed_under_dead_zone_quantizers() {
        let mut cfg = SdConfig::order2(SdScheme::FiniteMemory { rho: 1.0 }, 0.2);
        cfg.quantizer = tri_level(0.5);
        let trace = sd_run(&cfg, &[], SdState::ORIGIN, 100, &mut rng()).unwrap();
        assert!(trace.states.iter().all(|s| *s == SdState::ORIGIN));
        assert!(trace.bits.iter().all(|&bq| bq == (0, 0)));
    }

    #[test]
    fn zero_input_map_hand_values() {
        let step = zero_input_step(0.2, 0.98, SdState::ORIGIN);
        assert_eq!(step.state, SdState::ORIGIN);
        assert!(!step.damped);
        assert_eq!(step.shift, ShiftBranch::Hold);

        let step = zero_input_step(0.2, 0.98, SdState::new(0.1, 0.1));
        assert!(step.damped);
        assert_eq!(step.shift, ShiftBranch::Down);
        assert!((step.state.u + 0.902).abs() < 1e-12);
        assert!((step.state.v + 0.804).abs() < 1e-12);

        let step = zero_input_step(0.2, 0.98, SdState::new(-0.1, -0.1));
        assert!(!step.damped);
        assert_eq!(step.shift, ShiftBranch::Up);
        assert!((step.state.u - 0.9).abs() < 1e-12);
        assert!((step.state.v - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_input_map_matches_the_asymmetric_loop() {
        let (gamma, rho) = (0.2, 0.98);
        let cfg = SdConfig::asymmetric(gamma, rho);
        let mut r = rng();
        let mut checked = 0;
        for _ in 0..300 {
            let s = SdState::new(r.range(-5.0, 5.0), r.range(-5.0, 5.0));
            let w = s.u / gamma + s.v;
            // Skip decision ties, where the loop (which quantizes before
            // damping, with rescaled thresholds) and the map (which damps
            // first) can legitimately round apart.
            if [0.0, 0.5, -0.5, 0.5 / rho].iter().any(|t| (w - t).abs() < 1e-9) {
                continue;
            }
            let map = zero_input_step(gamma, rho, s);
            let run = sd_run(&cfg, &[], s, 1, &mut rng()).unwrap();
            assert_eq!(run.states[0], map.state);
            assert_eq!(run.bits[0].0, map.shift.bit());
            assert_eq!(run.bits[0].1 == 1, map.damped);
            checked += 1;
        }
        assert!(checked > 250);
    }

    #[test]
    fn region_membership_examples() {
        let t = Region::T { gamma: 0.2 };
        assert!(region_contains(Region::TPlus { gamma: 0.2 }, SdState::new(0.5, 0.0)));
        assert!(region_contains(t, SdState::new(0.5, 0.0)));
        assert!(!region_contains(t, SdState::new(2.0, 0.0)));
        // The origin sits in the closed half of the pair.
        assert!(region_contains(Region::TMinus { gamma: 0.2 }, SdState::ORIGIN));
        assert!(region_contains(t, SdState::ORIGIN));

        assert!(region_contains(Region::R { gamma: 0.2 }, SdState::ORIGIN));
        // In T but outside R: the triangles stop at u = 1/2.
        let p = SdState::new(0.6, 0.1);
        assert!(region_contains(t, p));
        assert!(!region_contains(Region::R { gamma: 0.2 }, p));

        assert!(region_contains(Region::HSublevel { eps: 0.5 }, SdState::new(0.1, 0.05)));
        assert!(!region_contains(Region::HSublevel { eps: 0.5 }, SdState::new(1.0, 1.0)));
        assert!(region_contains(Region::PositiveHalfPlane { gamma: 0.2 }, SdState::new(0.1, -0.5)));
        assert!(!region_contains(Region::PositiveHalfPlane { gamma: 0.2 }, SdState::new(-0.2, 0.5)));
    }

    #[test]
    fn stability_band_formulas() {
        let floor = stability_offset_bound(0.9);
        assert!((floor - 39.0066).abs() < 1e-3);
        assert!(Region::S { alpha: 0.9, c: 40.0 }.validate().is_ok());
        assert!(Region::S { alpha: 0.9, c: 39.0 }.validate().is_err());

        assert!((stability_u_extent(0.9, 40.0) - 3.8987).abs() < 1e-3);
        assert!(region_contains(Region::S { alpha: 0.9, c: 40.0 }, SdState::new(0.0, 39.9)));
        assert!(!region_contains(Region::S { alpha: 0.9, c: 40.0 }, SdState::new(0.0, 40.1)));
        assert!(!region_contains(Region::S { alpha: 0.9, c: 40.0 }, SdState::new(4.0, 0.0)));

        // The advisory weight range comes out empty at these values even
        // though the band is invariant in simulation; keep it exposed but
        // never gate on it.
        let (lo, hi) = stability_gamma_range(0.9, 40.0);
        assert!(lo > hi);
        assert!((lo - 0.0777).abs() < 1e-3);
        assert!((hi - 0.0492).abs() < 1e-3);
    }

    #[test]
    fn stability_band_is_invariant_for_the_damped_loop() {
        // The advisory weight range is unreliable at these parameters (see
        // stability_gamma_range); simulation puts the invariant window near
        // [.03, .065], and gamma = .1 has genuine escapes through the dead
        // zone, so the check pins a weight comfortably inside the window.
        let (alpha, c, gamma) = (0.9, 40.0, 0.05);
        let band = Region::S { alpha, c };
        let umax = stability_u_extent(alpha, c);
        let mut r = rng();
        for rho in [1.0, 0.995] {
            let mut cfg = SdConfig::order2(SdScheme::FiniteMemory { rho }, gamma);
            cfg.quantizer = tri_level(0.5);
            for _ in 0..200 {
                let u = r.range(-umax, umax);
                let v = r.range(stability_lower(u, alpha, c), stability_upper(u, alpha, c));
                let s = SdState::new(u, v);
                if !region_contains(band, s) {
                    continue;
                }
                let f = r.range(-alpha, alpha);
                let trace = sd_run(&cfg, &[f], s, 1, &mut rng()).unwrap();
                assert!(
                    region_contains(band, trace.states[0]),
                    "left the band from ({u}, {v}) with input {f}"
                );
            }
        }
    }

    #[test]
    fn lyapunov_sheets_and_shift_identities() {
        assert_eq!(lyapunov_h(SdState::ORIGIN), 0.0);
        assert_eq!(lyapunov_h(SdState::new(1.0, 1.0)), 2.0);
        let mut r = rng();
        for _ in 0..1000 {
            let s = SdState::new(r.range(-10.0, 10.0), r.range(-10.0, 10.0));
            let down = SdState::new(s.u - 1.0, s.u + s.v - 1.0);
            let up = SdState::new(s.u + 1.0, s.u + s.v + 1.0);
            let scale = 1.0 + lyapunov_h(s).abs();
            assert!((h_plus(down) - h_plus(s)).abs() < 1e-12 * scale);
            assert!((h_minus(up) - h_minus(s)).abs() < 1e-12 * scale);
            assert!((lyapunov_h(s) - (s.u * s.u + (2.0 * s.v - s.u).abs())).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn asymmetric_loop_settles_to_zero_one() {
        let cfg = SdConfig::asymmetric(0.2, 0.98);
        let trace = sd_run(&cfg, &[], SdState::new(-3.4, 12.7), 100_000, &mut rng()).unwrap();
        match quietness_test(&trace, 0) {
            Quietness::Quiet { settle, value } => {
                assert_eq!(value, (0, 1));
                assert!(settle < 2_000, "settled late, at {settle}");
            }
            other => panic!("expected a quiet run, got {other:?}"),
        }
        // The state never reaches an exact zero: once the magnitudes are
        // deep in the denormal range, multiplying by .98 rounds straight
        // back to the same value, so the orbit parks on a tiny positive
        // fixed point instead of underflowing all the way.
        let last = *trace.states.last().unwrap();
        assert!(last.u > 0.0 && last.u < 1e-300, "u parked at {:e}", last.u);
        assert!(last.v > 0.0 && last.v < 1e-300, "v parked at {:e}", last.v);
    }

    #[test]
    fn leaky_asymmetric_loop_still_settles() {
        let mut cfg = SdConfig::asymmetric(0.2, 0.98);
        cfg.lambda1 = 0.97;
        cfg.lambda2 = 0.97;
        let trace = sd_run(&cfg, &[], SdState::new(-3.4, 12.7), 50_000, &mut rng()).unwrap();
        match quietness_test(&trace, 0) {
            Quietness::Quiet { .. } => {}
            other => panic!("expected a quiet run, got {other:?}"),
        }
    }

    #[test]
    fn plain_second_order_keeps_chattering() {
        let mut cfg = SdConfig::order2(SdScheme::Plain, 0.1);
        cfg.quantizer = tri_level(0.5);
        let trace = sd_run(&cfg, &[], SdState::new(0.3, 0.0), 1_000_000, &mut rng()).unwrap();
        assert_eq!(quietness_test(&trace, 0), Quietness::NotQuiet);
    }

    #[test]
    fn trapping_diagnostics_examples() {
        let report = trapping_diagnostics(0.2, 0.98, SdState::ORIGIN, 100).unwrap();
        assert_eq!(report.entry, Some(0));
        assert_eq!(report.post_entry_exits, 0);
        assert_eq!(report.alternation_violations, 0);
        assert_eq!(report.descent_violations, 0);

        let report = trapping_diagnostics(0.2, 0.98, SdState::new(-3.4, 12.7), 5_000).unwrap();
        assert!(matches!(report.entry, Some(n) if n > 0));
        assert_eq!(report.post_entry_exits, 0);
        assert_eq!(report.alternation_violations, 0);
        assert_eq!(report.descent_violations, 0);
        assert!(!report.outside_h.is_empty());
    }

    #[test]
    fn random_starts_get_trapped() {
        let mut r = rng();
        for _ in 0..100 {
            let s = SdState::new(r.range(-20.0, 20.0), r.range(-20.0, 20.0));
            let report = trapping_diagnostics(0.2, 0.98, s, 20_000).unwrap();
            assert!(report.entry.is_some(), "never entered from ({}, {})", s.u, s.v);
            assert_eq!(report.post_entry_exits, 0);
            assert_eq!(report.alternation_violations, 0);
            assert_eq!(report.descent_violations, 0);
        }
    }

    #[test]
    fn chaotic_tail_has_no_short_period() {
        let cfg = SdConfig::order2(SdScheme::Chaotic { eps: 0.01 }, 0.2);
        let inputs = vec![-0.001; 1_000_000];
        let trace = sd_run(&cfg, &inputs, SdState::ORIGIN, 1_000_000, &mut rng()).unwrap();
        assert_eq!(idle_tone_detect(&trace.bits, 100), ToneReport::Aperiodic);
    }

    #[test]
    fn idle_tone_examples() {
        let alternating: Vec<i8> = (0..40).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        assert_eq!(idle_tone_detect(&alternating, 2), ToneReport::Periodic { period: 2 });
        let constant = vec![0i8; 40];
        assert_eq!(idle_tone_detect(&constant, 4), ToneReport::Periodic { period: 1 });
        assert_eq!(idle_tone_detect(&constant[..30], 4), ToneReport::Indeterminate);
        let mut r = rng();
        let noise: Vec<i8> = (0..200).map(|_| r.sign() as i8).collect();
        assert_eq!(idle_tone_detect(&noise, 5), ToneReport::Aperiodic);
    }

    #[test]
    fn quietness_edge_cases() {
        let cfg = SdConfig::order1(SdScheme::Plain);
        let trace = sd_run(&cfg, &[], SdState::new(0.3, 0.0), 40, &mut rng()).unwrap();
        assert_eq!(quietness_test(&trace, 40), Quietness::Indeterminate);
        assert_eq!(quietness_test(&trace, 35), Quietness::Indeterminate);
        assert_eq!(quietness_test(&trace, 0), Quietness::NotQuiet);

        // Hand-built trace that collapses to the exact origin at step 119:
        // bits[120] is the first one computed from the zero state, so the
        // scan must clip there and report the settled pair from before.
        let mut states = Vec::new();
        let mut bits = Vec::new();
        for n in 0..200 {
            if n < 119 {
                let u = 0.5f64.powi(n as i32 + 1);
                states.push(SdState::new(u, u));
            } else {
                states.push(SdState::ORIGIN);
            }
            bits.push(if n < 120 { (0, 1) } else { (0, 0) });
        }
        let trace = OrbitTrace {
            initial: SdState::new(1.0, 1.0),
            states,
            bits,
            inputs: vec![0.0; 200],
        };
        match quietness_test(&trace, 0) {
            Quietness::Quiet { settle, value } => {
                assert_eq!(settle, 0);
                assert_eq!(value, (0, 1));
            }
            other => panic!("expected quiet, got {other:?}"),
        }
    }

    #[test]
    fn inputs_beyond_the_slice_are_zero() {
        let cfg = SdConfig::order1(SdScheme::Plain);
        let trace = sd_run(&cfg, &[0.5], SdState::ORIGIN, 3, &mut rng()).unwrap();
        assert_eq!(trace.inputs, vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(SdConfig::order1(SdScheme::Plain).validate().is_ok());
        assert!(SdConfig::asymmetric(0.2, 0.98).validate().is_ok());
        assert!(SdConfig::hybrid(0.2, 0.01).validate().is_ok());

        let mut bad = SdConfig::order1(SdScheme::Plain);
        bad.order = 3;
        assert!(bad.validate().is_err());
        assert!(SdConfig::order2(SdScheme::Plain, 0.0).validate().is_err());
        assert!(SdConfig::order2(SdScheme::FiniteMemory { rho: 1.1 }, 0.2).validate().is_err());
        assert!(SdConfig::order2(SdScheme::Chaotic { eps: -0.1 }, 0.2).validate().is_err());
        assert!(SdConfig::order1(SdScheme::Asymmetric { rho: 0.98 }).validate().is_err());

        // Scheme and quantizer family must match.
        let mut mismatched = SdConfig::asymmetric(0.2, 0.98);
        mismatched.quantizer = ScalarQuantizerSpec::ideal(ScalarKind::Sign);
        assert!(mismatched.validate().is_err());
        let mut mismatched = SdConfig::order2(SdScheme::Plain, 0.2);
        mismatched.quantizer = ScalarQuantizerSpec::ideal(ScalarKind::FourLevelSym);
        assert!(mismatched.validate().is_err());

        let mut leaky_plain = SdConfig::order2(SdScheme::Plain, 0.2);
        leaky_plain.lambda1 = 0.99;
        assert!(leaky_plain.validate().is_err());
        let mut bad_coin = SdConfig::order1(SdScheme::Plain);
        bad_coin.quantizer.flaky = FlakyMode::Coin(1.5);
        assert!(bad_coin.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        // The chaotic loop with a huge expansion rate blows up quickly.
        let cfg = SdConfig::order2(SdScheme::Chaotic { eps: 10.0 }, 0.2);
        let err = sd_run(&cfg, &[], SdState::new(5.0, 5.0), 100, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }
}
