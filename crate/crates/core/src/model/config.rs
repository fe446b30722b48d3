use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of the refusal for the gate-on-LSTM decoder.
pub const UNSTABLE_LSTM_AOA: &str = "\"LSTM + AoA\" stacks a second gate on top of the LSTM context head; \
     this combination is known for an unstable training process and is refused unless the experimental flag is set";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Projection only.
    Base,
    /// Self-attention followed by a feed-forward sublayer.
    RefineNoAoa,
    /// Self-attention gated by AoA.
    RefineAoa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextScheme {
    /// `c_t` from a linear map of `[h_t; â_t]`.
    Base,
    /// `c_t` from a second LSTM over `[h_t; â_t]`.
    Lstm,
    /// `c_t` from AoA over the attended features.
    Aoa,
    /// AoA on top of the second LSTM. Experimental.
    LstmAoa,
}

macro_rules! kebab_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

kebab_enum!(EncoderKind {
    EncoderKind::Base => "base",
    EncoderKind::RefineNoAoa => "refine-no-aoa",
    EncoderKind::RefineAoa => "refine-aoa",
});

kebab_enum!(ContextScheme {
    ContextScheme::Base => "dec-base",
    ContextScheme::Lstm => "dec-lstm",
    ContextScheme::Aoa => "dec-aoa",
    ContextScheme::LstmAoa => "dec-lstm-aoa",
});

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the raw feature rows.
    pub feat_dim: usize,
    /// Model width `D`.
    pub dim: usize,
    /// Word embedding width `E`.
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub encoder: EncoderKind,
    /// Number of stacked refiner layers `N`; ignored by the base encoder.
    pub layers: usize,
    pub enc_heads: usize,
    pub decoder: ContextScheme,
    pub dec_heads: usize,
    /// Hidden width of the feed-forward sublayer in `refine-no-aoa`.
    pub ff_dim: usize,
    /// Only `1` is supported; stacked gates are refused.
    pub aoa_gate_layers: usize,
    /// Only `0.0` is supported.
    pub dropout: f64,
    pub experimental: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feat_dim: 32,
            dim: 64,
            embed_dim: 64,
            vocab_size: 0,
            encoder: EncoderKind::RefineAoa,
            layers: 2,
            enc_heads: 2,
            decoder: ContextScheme::Aoa,
            dec_heads: 2,
            ff_dim: 128,
            aoa_gate_layers: 1,
            dropout: 0.0,
            experimental: false,
            init_seed: 1,
        }
    }
}

impl ModelConfig {
    /// Refiner layers actually built.
    pub fn refine_layers(&self) -> usize {
        match self.encoder {
            EncoderKind::Base => 0,
            _ => self.layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_layout()?;
        if self.vocab_size < 4 {
            return Err(Error::Config(format!(
                "vocabulary of {} cannot hold the reserved tokens",
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// Every check except the vocabulary size, which is only known once a
    /// vocabulary has been built.
    pub fn validate_layout(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.dim == 0 || self.embed_dim == 0 || self.feat_dim == 0 {
            return err("dimensions must be positive".into());
        }
        for (what, h) in [("encoder", self.enc_heads), ("decoder", self.dec_heads)] {
            if h == 0 || !self.dim.is_multiple_of(h) {
                return err(format!(
                    "{what} heads {h} must divide the model width {}",
                    self.dim
                ));
            }
        }
        if self.aoa_gate_layers != 1 {
            return err(format!(
                "aoa_gate_layers = {}: stacking more gates is not supported",
                self.aoa_gate_layers
            ));
        }
        if self.dropout != 0.0 {
            return err("dropout is not supported; set dropout = 0".into());
        }
        if self.decoder == ContextScheme::LstmAoa && !self.experimental {
            return err(UNSTABLE_LSTM_AOA.into());
        }
        if self.encoder == EncoderKind::RefineNoAoa && self.ff_dim == 0 {
            return err("ff_dim must be positive for refine-no-aoa".into());
        }
        Ok(())
    }
}
