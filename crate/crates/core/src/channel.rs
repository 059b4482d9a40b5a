//! Binary erasure and binary-input AWGN channels.
//!
//! LLRs use the natural log with the convention `L = ln P(x=+1)/P(x=-1)`,
//! so positive values favor bit 0 (symbol +1). `±LLR_MAX` stands in for a
//! perfectly known bit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::exit::j_function;
use crate::{Error, Result};

pub const LLR_MAX: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Bec,
    #[serde(alias = "biawgn")]
    Awgn,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Bec => "bec",
            ChannelKind::Awgn => "awgn",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bec" => Ok(ChannelKind::Bec),
            "awgn" | "biawgn" => Ok(ChannelKind::Awgn),
            other => Err(Error::InvalidArgument(format!("unknown channel '{other}'"))),
        }
    }
}

/// A channel operating point. `param` is the erasure probability for the
/// BEC and Eb/N0 in dB for the AWGN channel; `rate` maps Eb/N0 to the noise
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub param: f64,
    pub rate: f64,
}

impl ChannelSpec {
    pub fn bec(erasure: f64) -> Self {
        ChannelSpec {
            kind: ChannelKind::Bec,
            param: erasure,
            rate: 0.5,
        }
    }

    pub fn awgn(ebn0_db: f64, rate: f64) -> Self {
        ChannelSpec {
            kind: ChannelKind::Awgn,
            param: ebn0_db,
            rate,
        }
    }

    pub fn with_param(self, param: f64) -> Self {
        ChannelSpec { param, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rate {} outside (0, 1)",
                self.rate
            )));
        }
        match self.kind {
            ChannelKind::Bec if !(0.0..=1.0).contains(&self.param) => Err(Error::InvalidArgument(
                format!("erasure probability {} outside [0, 1]", self.param),
            )),
            ChannelKind::Awgn if !self.param.is_finite() => {
                Err(Error::InvalidArgument("Eb/N0 must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// AWGN noise variance `1 / (2 R Eb/N0)`.
    pub fn noise_variance(&self) -> f64 {
        1.0 / (2.0 * self.rate * db_to_linear(self.param))
    }

    /// Standard deviation of the consistent Gaussian channel LLR,
    /// `sqrt(8 R Eb/N0)`.
    pub fn llr_sigma(&self) -> f64 {
        (8.0 * self.rate * db_to_linear(self.param)).sqrt()
    }

    /// Parses `bec:0.25` or `awgn:2.0`; the rate defaults to `rate`.
    pub fn parse(text: &str, rate: f64) -> Result<Self> {
        let (kind, param) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("expected kind:param, got '{text}'")))?;
        let kind: ChannelKind = kind.parse()?;
        let param: f64 = param
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad channel parameter '{param}'")))?;
        let spec = ChannelSpec { kind, param, rate };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.param)
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Sends `symbols` (±1) over the channel and returns the channel LLRs.
pub fn transmit<R: Rng + ?Sized>(symbols: &[f64], spec: &ChannelSpec, rng: &mut R) -> Vec<f64> {
    match spec.kind {
        ChannelKind::Bec => symbols
            .iter()
            .map(|&x| {
                if rng.random::<f64>() < spec.param {
                    0.0
                } else {
                    x * LLR_MAX
                }
            })
            .collect(),
        ChannelKind::Awgn => {
            let var = spec.noise_variance();
            let noise = Normal::new(0.0, var.sqrt()).expect("finite variance");
            symbols
                .iter()
                .map(|&x| {
                    let y = x + noise.sample(rng);
                    (2.0 * y / var).clamp(-LLR_MAX, LLR_MAX)
                })
                .collect()
        }
    }
}

/// Mutual information between channel input and LLR output.
pub fn channel_mi(spec: &ChannelSpec) -> f64 {
    match spec.kind {
        ChannelKind::Bec => 1.0 - spec.param,
        ChannelKind::Awgn => j_function(spec.llr_sigma()),
    }
}
