//! Scalar and plane quantizers shared by all encoder loops.
//!
//! Tie rules are part of the contract and are fixed once for the whole
//! workspace: the scalar sign quantizer returns -1 at exactly zero, while
//! the plane quantizer returns +1 on its boundary line. Imperfect
//! ("flaky") comparators are modeled by a hesitation band of half-width
//! `nu` around the decision boundary inside which a configurable mode
//! picks the sign.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// What a flaky comparator does inside its hesitation band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlakyMode {
    /// Fall back to the exact tie rule; with `nu = 0` this is the ideal
    /// quantizer.
    Ideal,
    /// Always answer +1 inside the band.
    AlwaysPlus,
    /// Always answer -1 inside the band.
    AlwaysMinus,
    /// Answer +1 with probability `p`, drawing one uniform variate from the
    /// run generator each time the band is hit.
    Coin(f64),
}

/// Scalar quantizer families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarKind {
    /// One-bit: -1 iff u <= 0.
    Sign,
    /// Three-level: 0 iff |u| <= tau, otherwise the sign.
    TriLevel { tau: f64 },
    /// Four-level with an asymmetric positive branch: output pairs (b, q)
    /// are (-1,0) for u <= -1/2, (0,0) for -1/2 < u <= 0, (0,1) for
    /// 0 < u <= 1/(2 tau) and (1,1) above.
    FourLevel { tau: f64 },
    /// Four-level with the symmetric threshold 1/2 on both sides
    /// (the same table with tau = 1).
    FourLevelSym,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarQuantizerSpec {
    pub kind: ScalarKind,
    pub flaky: FlakyMode,
    /// Hesitation half-width; only meaningful for `Sign`.
    pub nu: f64,
}

impl ScalarQuantizerSpec {
    pub fn ideal(kind: ScalarKind) -> Self {
        ScalarQuantizerSpec { kind, flaky: FlakyMode::Ideal, nu: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScalarKind::TriLevel { tau } | ScalarKind::FourLevel { tau } => {
                if !(tau > 0.0) {
                    return Err(Error::Config(format!("threshold tau must be positive, got {tau}")));
                }
            }
            ScalarKind::Sign | ScalarKind::FourLevelSym => {}
        }
        if !(self.nu >= 0.0) {
            return Err(Error::Config(format!("hesitation width nu must be >= 0, got {}", self.nu)));
        }
        if self.nu > 0.0 && !matches!(self.kind, ScalarKind::Sign) {
            return Err(Error::Config(
                "hesitation band is only defined for the one-bit sign quantizer".into(),
            ));
        }
        if let FlakyMode::Coin(p) = self.flaky {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("coin probability must be in [0,1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Output of the four-level quantizers: the fed-back bit `b` and the
/// auxiliary switch `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourLevelOutput {
    pub b: i8,
    pub q: i8,
}

/// Output of [`quantize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarOutput {
    /// Sign and tri-level kinds produce a single level in {-1, 0, 1}.
    Level(i8),
    /// Four-level kinds produce a (b, q) pair.
    Four(FourLevelOutput),
}

impl ScalarOutput {
    pub fn level(self) -> Option<i8> {
        match self {
            ScalarOutput::Level(v) => Some(v),
            ScalarOutput::Four(_) => None,
        }
    }

    pub fn pair(self) -> Option<FourLevelOutput> {
        match self {
            ScalarOutput::Four(p) => Some(p),
            ScalarOutput::Level(_) => None,
        }
    }
}

/// Resolves a flaky band hit. `tie` is the value the exact rule would give.
fn band_decision(mode: FlakyMode, tie: i8, rng: &mut Rng) -> i8 {
    match mode {
        FlakyMode::Ideal => tie,
        FlakyMode::AlwaysPlus => 1,
        FlakyMode::AlwaysMinus => -1,
        FlakyMode::Coin(p) => {
            if rng.uniform() < p {
                1
            } else {
                -1
            }
        }
    }
}

/// One-bit decision with hesitation band: +1 above `nu`, -1 below `-nu`,
/// mode-decided inside. The exact tie rule (-1 iff u <= 0) applies when the
/// mode defers to it.
fn sign_with_band(u: f64, nu: f64, mode: FlakyMode, rng: &mut Rng) -> i8 {
    if u > nu {
        1
    } else if u < -nu {
        -1
    } else {
        band_decision(mode, if u <= 0.0 { -1 } else { 1 }, rng)
    }
}

/// Applies a scalar quantizer. The generator is consulted only when a
/// `Coin` mode fires inside its band, so ideal configurations are pure.
pub fn quantize_scalar(spec: &ScalarQuantizerSpec, u: f64, rng: &mut Rng) -> Result<ScalarOutput> {
    spec.validate()?;
    if !u.is_finite() {
        return Err(Error::Domain(format!("quantizer input must be finite, got {u}")));
    }
    let out = match spec.kind {
        ScalarKind::Sign => ScalarOutput::Level(sign_with_band(u, spec.nu, spec.flaky, rng)),
        ScalarKind::TriLevel { tau } => ScalarOutput::Level(if u > tau {
            1
        } else if u < -tau {
            -1
        } else {
            0
        }),
        ScalarKind::FourLevel { tau } => ScalarOutput::Four(four_level(u, 0.5 / tau)),
        ScalarKind::FourLevelSym => ScalarOutput::Four(four_level(u, 0.5)),
    };
    Ok(out)
}

fn four_level(u: f64, upper: f64) -> FourLevelOutput {
    if u <= -0.5 {
        FourLevelOutput { b: -1, q: 0 }
    } else if u <= 0.0 {
        FourLevelOutput { b: 0, q: 0 }
    } else if u <= upper {
        FourLevelOutput { b: 0, q: 1 }
    } else {
        FourLevelOutput { b: 1, q: 1 }
    }
}

/// One-bit quantizer on the plane, deciding on the line u + alpha v = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneQuantizerSpec {
    /// Amplifier weight on the second coordinate.
    pub alpha: f64,
    pub flaky: FlakyMode,
    /// Hesitation half-width measured on u + alpha v.
    pub nu: f64,
}

impl PlaneQuantizerSpec {
    pub fn ideal(alpha: f64) -> Self {
        PlaneQuantizerSpec { alpha, flaky: FlakyMode::Ideal, nu: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite, got {}", self.alpha)));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::Config(format!("hesitation width nu must be >= 0, got {}", self.nu)));
        }
        if let FlakyMode::Coin(p) = self.flaky {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("coin probability must be in [0,1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Applies the plane quantizer to (u, v): +1 when u + alpha v >= 0, -1
/// otherwise, with the hesitation band straddling the boundary line.
pub fn quantize_plane(spec: &PlaneQuantizerSpec, u: f64, v: f64, rng: &mut Rng) -> Result<i8> {
    spec.validate()?;
    let w = u + spec.alpha * v;
    if !w.is_finite() {
        return Err(Error::Domain(format!("plane quantizer input must be finite, got ({u}, {v})")));
    }
    Ok(if w > spec.nu {
        1
    } else if w < -spec.nu {
        -1
    } else {
        band_decision(spec.flaky, if w >= 0.0 { 1 } else { -1 }, rng)
    })
}
