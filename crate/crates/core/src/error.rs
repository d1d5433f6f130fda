use std::fmt;

/// Error type shared by every module in this crate.
///
/// The encoders and experiment drivers are deliberately strict: out-of-domain
/// inputs and inconsistent configurations fail loudly instead of producing
/// plausible-looking garbage.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input value lies outside the mathematical domain of an operation
    /// (non-finite sample, amplitude above full scale, and so on).
    Domain(String),
    /// A configuration is internally inconsistent (leak product not above
    /// one, tri-level threshold not positive, mismatched quantizer kind...).
    Config(String),
    /// A requested index or length exceeds what the data provides.
    Range(String),
    /// Both streams of a pair cancel exactly, so their difference carries no
    /// information about the expansion base.
    DegeneratePair,
    /// Newton hit a point where the polynomial derivative vanishes to
    /// working precision.
    SingularNewtonStep { iteration: usize, at: f64 },
    /// A state variable left the divergence guard during a modulator run.
    Divergence { step: usize, u: f64, v: f64 },
    /// A linear-algebra step degenerated (dependent column, empty system).
    Numerical(String),
    /// A reconstruction was requested at a point not covered by the
    /// available sample window.
    Window(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Range(msg) => write!(f, "range error: {msg}"),
            Error::DegeneratePair => {
                write!(f, "pair streams cancel exactly; no difference stream exists")
            }
            Error::SingularNewtonStep { iteration, at } => write!(
                f,
                "derivative vanished at Newton iteration {iteration} (x = {at})"
            ),
            Error::Divergence { step, u, v } => {
                write!(f, "state diverged at step {step} (u = {u}, v = {v})")
            }
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::Window(msg) => write!(f, "window error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
