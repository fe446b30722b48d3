//! The captioning network: refining encoder, LSTM decoder with a selectable
//! context head, and decoding strategies.

pub mod config;
pub mod decode;
pub mod decoder;
pub mod encoder;
pub mod lstm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tape;
use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;

pub use config::{ContextScheme, EncoderKind, ModelConfig};
pub use decoder::{decoder_step, DecoderParams, DecoderState, ImageContext, StateSnapshot, StepOutput};
pub use encoder::{encode, project_features, refine_layer, EncoderParams};

#[derive(Clone, Debug, PartialEq)]
pub struct CaptionModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl CaptionModel {
    /// Builds and initialises a model from `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamStore::new();
        let encoder = EncoderParams::init(&mut params, &config, &mut rng);
        let decoder = DecoderParams::init(&mut params, &config, &mut rng);
        Ok(CaptionModel {
            config,
            params,
            encoder,
            decoder,
        })
    }

    /// Builds the parameter layout for `config` and fills it from `params`.
    pub fn with_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut model = CaptionModel::new(config)?;
        model.params.load_from(params)?;
        Ok(model)
    }

    /// Encodes raw features on `tape` and prepares the decoder's per-image
    /// context.
    pub fn image_context<'t>(
        &self,
        tape: &'t Tape,
        bound: &Bound<'t>,
        feats: &Tensor,
    ) -> Result<ImageContext<'t>> {
        let raw = tape.constant(feats.clone());
        let a = encode(bound, &self.encoder, raw)?;
        decoder::prepare(bound, &self.decoder, a)
    }
}
