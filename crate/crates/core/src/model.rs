//! The full classifier: features, token Bi-LSTM, part pooling and softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabelSchema, RelationInstance};
use crate::encoder::{uniform_matrix, Encoder, LstmParams, ProjectionParams};
use crate::error::{Error, Result};
use crate::features::{Channels, FeatureDims, FeatureSpec, FeatureVocabs, Features, PretrainedEmbeddings};
use crate::head::{self, ContextParts};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{self, Vector};

/// Architecture settings. Defaults are the published ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: FeatureDims,
    pub channels: Channels,
    pub char_case_sensitive: bool,
    /// Hidden width of each token-level LSTM direction.
    pub lstm: usize,
    /// Width of the projected token representation `h_t`.
    pub hidden: usize,
    pub contexts: ContextParts,
    /// Tuned tensors start uniform in `(-init_range, init_range)`.
    pub init_range: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dims: FeatureDims::default(),
            channels: Channels::default(),
            char_case_sensitive: true,
            lstm: 200,
            hidden: 200,
            contexts: ContextParts::default(),
            init_range: 0.01,
        }
    }
}

impl ModelConfig {
    /// Every width set to `d`; handy for small test models.
    pub fn toy(d: usize) -> Self {
        ModelConfig {
            dims: FeatureDims {
                pre: d,
                ran: d,
                chars: d,
                char_embed: d,
                pos: d,
                wnh: d,
            },
            lstm: d,
            hidden: d,
            ..ModelConfig::default()
        }
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            dims: self.dims,
            channels: self.channels,
            char_case_sensitive: self.char_case_sensitive,
        }
    }

    pub fn penultimate_dim(&self) -> usize {
        self.contexts.penultimate_dim(self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstm == 0 || self.hidden == 0 {
            return Err(Error::Config("lstm and hidden widths must be positive".into()));
        }
        if !self.channels.any() {
            return Err(Error::Config("at least one feature channel must be enabled".into()));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(Error::Config(format!("init_range must be finite and >= 0, got {}", self.init_range)));
        }
        Ok(())
    }
}

/// A prediction with its full probability vector (schema order).
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    pub probabilities: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub labels: LabelSchema,
    pub features: Features,
    pub encoder: Encoder,
    pub w2: ParamId,
    pub store: ParamStore,
}

impl Model {
    /// Builds vocabularies from `instances` and initializes every tuned
    /// tensor from `rng`. Registration order (and so the draw order) is
    /// fixed: feature tables, forward LSTM, backward LSTM, projection, `W_2`.
    pub fn build<R: Rng>(
        config: ModelConfig,
        labels: LabelSchema,
        instances: &[RelationInstance],
        pretrained: Option<PretrainedEmbeddings>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if labels.len() < 2 {
            return Err(Error::Config("at least two output classes are required".into()));
        }
        let mut store = ParamStore::new();
        let r = config.init_range;
        let tokens = instances.iter().flat_map(|i| i.tokens.iter());
        let features = Features::build(tokens, pretrained, &config.feature_spec(), &mut store, rng, r)?;
        let input = features.input_dim();
        let forward = LstmParams::register(&mut store, "fwd", input, config.lstm, rng, r)?;
        let backward = LstmParams::register(&mut store, "bwd", input, config.lstm, rng, r)?;
        let projection = ProjectionParams::register(&mut store, "proj", config.lstm, config.hidden, rng, r)?;
        let w2 = store.add("W_2", uniform_matrix(rng, labels.len(), config.penultimate_dim(), r), false)?;
        Ok(Model {
            config,
            labels,
            features,
            encoder: Encoder {
                forward,
                backward,
                projection,
            },
            w2,
            store,
        })
    }

    /// Reassembles a model around tensors loaded from disk.
    pub fn from_parts(
        config: ModelConfig,
        labels: LabelSchema,
        vocabs: &FeatureVocabs,
        store: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let features = Features::rebind(&config.feature_spec(), vocabs, &store)?;
        let encoder = Encoder {
            forward: LstmParams::lookup(&store, "fwd")?,
            backward: LstmParams::lookup(&store, "bwd")?,
            projection: ProjectionParams::lookup(&store, "proj")?,
        };
        if encoder.forward.input_dim != features.input_dim() {
            return Err(Error::Checkpoint(format!(
                "encoder expects {}-dim input but features give {}",
                encoder.forward.input_dim,
                features.input_dim()
            )));
        }
        let w2 = store
            .id("W_2")
            .ok_or_else(|| Error::Checkpoint("missing parameter W_2".into()))?;
        let shape = store.value(w2).shape();
        if shape.0 != labels.len() || shape.1 != config.penultimate_dim() {
            return Err(Error::Checkpoint(format!(
                "W_2 is {shape} but labels and contexts need {}x{}",
                labels.len(),
                config.penultimate_dim()
            )));
        }
        Ok(Model {
            config,
            labels,
            features,
            encoder,
            w2,
            store,
        })
    }

    /// `x_penul` for one instance.
    pub fn penultimate(&self, tape: &mut Tape<'_>, inst: &RelationInstance) -> Result<Var> {
        let xs = inst
            .tokens
            .iter()
            .map(|t| self.features.embed_token(tape, t))
            .collect::<Result<Vec<_>>>()?;
        let reps = self.encoder.encode(tape, &xs)?;
        let x = head::penultimate(tape, &reps, &inst.spans, &self.config.contexts, self.config.hidden)?;
        check_finite(tape, x, "penultimate", &inst.id)?;
        Ok(x)
    }

    /// Unnormalized class scores `W_2 · x_penul`.
    pub fn forward(&self, tape: &mut Tape<'_>, inst: &RelationInstance) -> Result<Var> {
        let x = self.penultimate(tape, inst)?;
        let z = head::logits(tape, self.w2, x)?;
        check_finite(tape, z, "logits", &inst.id)?;
        Ok(z)
    }

    pub fn probabilities(&self, inst: &RelationInstance) -> Result<Vector> {
        let mut tape = Tape::new(&self.store);
        let z = self.forward(&mut tape, inst)?;
        Ok(tensor::softmax(tape.value(z)?))
    }

    pub fn predict(&self, inst: &RelationInstance) -> Result<Prediction> {
        let probabilities = self.probabilities(inst)?;
        let index = tensor::argmax(&probabilities);
        Ok(Prediction {
            index,
            label: self.labels.labels[index].clone(),
            probabilities,
        })
    }

    pub fn predict_all(&self, instances: &[RelationInstance]) -> Result<Vec<Prediction>> {
        instances.iter().map(|i| self.predict(i)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.store.iter().map(|(_, p)| p.value.as_slice().len()).sum()
    }
}

fn check_finite(tape: &Tape<'_>, v: Var, stage: &str, id: &str) -> Result<()> {
    if tape.value(v)?.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(stage, format!("non-finite value for instance {id}")))
    }
}
