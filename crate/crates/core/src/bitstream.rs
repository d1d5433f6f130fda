//! Bit sequences produced by the encoders.

use crate::error::{Error, Result};

/// Alphabet of a [`Bitstream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alphabet {
    /// One-bit streams over {-1, +1}.
    PlusMinus,
    /// Ternary streams over {-1, 0, +1}.
    PlusMinusZero,
}

/// A validated digit sequence together with its alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    bits: Vec<i8>,
    alphabet: Alphabet,
}

impl Bitstream {
    pub fn new(bits: Vec<i8>, alphabet: Alphabet) -> Result<Self> {
        for (i, &b) in bits.iter().enumerate() {
            let ok = match alphabet {
                Alphabet::PlusMinus => b == 1 || b == -1,
                Alphabet::PlusMinusZero => (-1..=1).contains(&b),
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "digit {b} at position {i} is outside the {alphabet:?} alphabet"
                )));
            }
        }
        Ok(Bitstream { bits, alphabet })
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Maps a {-1, +1} stream to {0, 1} via b -> (b + 1) / 2.
    pub fn to_zero_one(&self) -> Result<Vec<u8>> {
        if self.alphabet != Alphabet::PlusMinus {
            return Err(Error::Domain(
                "zero-one transform is only defined for {-1,+1} streams".into(),
            ));
        }
        Ok(self.bits.iter().map(|&b| ((b + 1) / 2) as u8).collect())
    }
}
