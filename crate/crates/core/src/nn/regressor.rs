//! Autoencoder with a shared encoder feeding one small head per prediction target.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dense::{layers_from_sizes, mse_with_grad, Activation, DenseNet, Example};
use super::train::Trainable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub hidden: usize,
    pub latent: usize,
    pub head_hidden: usize,
    pub activation: Activation,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            latent: 8,
            head_hidden: 16,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
}

impl Autoencoder {
    /// Encoder `[in -> hidden -> latent]`, decoder mirrored, linear reconstruction.
    pub fn new(input: usize, arch: &ArchitectureConfig, seed: u64) -> Result<Self> {
        let encoder = DenseNet::from_sizes(
            &[input, arch.hidden, arch.latent],
            arch.activation,
            arch.activation,
            seed,
        )?;
        let decoder = DenseNet::from_sizes(
            &[arch.latent, arch.hidden, input],
            arch.activation,
            Activation::Linear,
            seed.wrapping_add(1),
        )?;
        Self::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: DenseNet, decoder: DenseNet) -> Result<Self> {
        if encoder.output_width() != decoder.input_width() {
            return Err(Error::shape(format!(
                "encoder emits {} latent values, decoder expects {}",
                encoder.output_width(),
                decoder.input_width()
            )));
        }
        if decoder.output_width() != encoder.input_width() {
            return Err(Error::shape(format!(
                "decoder reconstructs {} values, encoder consumes {}",
                decoder.output_width(),
                encoder.input_width()
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(x)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(&self.encoder.forward(x)?)
    }
}

/// Hidden sizes and init of a new prediction head; the output is always one linear unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadSpec {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for HeadSpec {
    fn default() -> Self {
        Self {
            input_width: 8,
            hidden: vec![16],
            activation: Activation::Tanh,
        }
    }
}

impl HeadSpec {
    pub fn from_architecture(arch: &ArchitectureConfig) -> Self {
        Self {
            input_width: arch.latent,
            hidden: vec![arch.head_hidden],
            activation: arch.activation,
        }
    }

    fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadInit {
    ZeroOutputLayer { seed: u64 },
    SeededRandom { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadRegressor {
    pub shared: Autoencoder,
    heads: BTreeMap<String, DenseNet>,
}

impl MultiHeadRegressor {
    pub fn new(shared: Autoencoder) -> Self {
        Self {
            shared,
            heads: BTreeMap::new(),
        }
    }

    /// Builds the shared autoencoder and one seeded head per target.
    pub fn with_targets(
        input: usize,
        targets: &[String],
        arch: &ArchitectureConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut reg = Self::new(Autoencoder::new(input, arch, seed)?);
        let spec = HeadSpec::from_architecture(arch);
        for (k, target) in targets.iter().enumerate() {
            let head_seed = seed.wrapping_add(1000 + 17 * k as u64);
            reg.add_head(target, &spec, HeadInit::SeededRandom { seed: head_seed })?;
        }
        Ok(reg)
    }

    pub fn latent_dim(&self) -> usize {
        self.shared.latent_dim()
    }

    pub fn input_width(&self) -> usize {
        self.shared.input_width()
    }

    pub fn heads(&self) -> &BTreeMap<String, DenseNet> {
        &self.heads
    }

    pub fn head(&self, target: &str) -> Result<&DenseNet> {
        self.heads
            .get(target)
            .ok_or_else(|| Error::NotFound(format!("head `{target}`")))
    }

    pub fn head_mut(&mut self, target: &str) -> Result<&mut DenseNet> {
        self.heads
            .get_mut(target)
            .ok_or_else(|| Error::NotFound(format!("head `{target}`")))
    }

    pub fn add_head(&mut self, target: &str, spec: &HeadSpec, init: HeadInit) -> Result<()> {
        if self.heads.contains_key(target) {
            return Err(Error::Conflict(format!("head `{target}` already exists")));
        }
        if spec.input_width != self.latent_dim() {
            return Err(Error::shape(format!(
                "head input width {} does not match latent dimension {}",
                spec.input_width,
                self.latent_dim()
            )));
        }
        let layers = layers_from_sizes(&spec.sizes(), spec.activation, Activation::Linear)?;
        let head = match init {
            HeadInit::SeededRandom { seed } => DenseNet::new(layers, seed)?,
            HeadInit::ZeroOutputLayer { seed } => {
                let mut net = DenseNet::new(layers, seed)?;
                net.zero_output_layer();
                net
            }
        };
        self.heads.insert(target.to_string(), head);
        Ok(())
    }

    pub(crate) fn insert_head(&mut self, target: &str, head: DenseNet) {
        self.heads.insert(target.to_string(), head);
    }

    pub fn predict(&self, target: &str, x: &[f64]) -> Result<f64> {
        let latent = self.shared.encode(x)?;
        Ok(self.head(target)?.forward(&latent)?[0])
    }

    pub fn predict_all(&self, x: &[f64]) -> Result<BTreeMap<String, f64>> {
        let latent = self.shared.encode(x)?;
        self.heads
            .iter()
            .map(|(name, head)| Ok((name.clone(), head.forward(&latent)?[0])))
            .collect()
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.shared.reconstruct(x)
    }

    pub fn param_count(&self) -> usize {
        self.shared.encoder.param_count()
            + self.shared.decoder.param_count()
            + self.heads.values().map(DenseNet::param_count).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.shared.encoder.is_finite()
            && self.shared.decoder.is_finite()
            && self.heads.values().all(DenseNet::is_finite)
    }
}

/// Trains encoder and decoder on reconstruction; example targets are ignored.
pub struct ReconstructionView<'a> {
    pub ae: &'a mut Autoencoder,
}

impl Trainable for ReconstructionView<'_> {
    fn trainable_params(&self) -> Vec<f64> {
        let mut p = self.ae.encoder.params().to_vec();
        p.extend_from_slice(self.ae.decoder.params());
        p
    }

    fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        let split = self.ae.encoder.param_count();
        if params.len() != split + self.ae.decoder.param_count() {
            return Err(Error::shape("reconstruction parameter vector has wrong length"));
        }
        self.ae.encoder.set_params(&params[..split])?;
        self.ae.decoder.set_params(&params[split..])
    }

    fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::argument("gradient of an empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let enc = &self.ae.encoder;
        let dec = &self.ae.decoder;
        let mut g_enc = vec![0.0; enc.param_count()];
        let mut g_dec = vec![0.0; dec.param_count()];
        let mut loss = 0.0;
        for example in batch {
            let t_enc = enc.forward_trace(&example.input)?;
            let t_dec = dec.forward_trace(t_enc.output())?;
            let (l, d_out) = mse_with_grad(t_dec.output(), &example.input)?;
            loss += l * scale;
            let d_out: Vec<f64> = d_out.into_iter().map(|d| d * scale).collect();
            let d_latent = dec.backward(&t_dec, &d_out, &mut g_dec);
            enc.backward(&t_enc, &d_latent, &mut g_enc);
        }
        g_enc.extend(g_dec);
        Ok((loss, g_enc))
    }

    fn loss(&self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::argument("loss of an empty batch"));
        }
        let mut total = 0.0;
        for example in batch {
            let rec = self.ae.reconstruct(&example.input)?;
            total += super::dense::mse(&rec, &example.input)?;
        }
        Ok(total / batch.len() as f64)
    }
}

/// Trains one head, optionally together with the shared encoder.
///
/// Parameter order: encoder (when trained) followed by the head.
pub struct HeadView<'a> {
    pub regressor: &'a mut MultiHeadRegressor,
    pub target: String,
    pub train_shared: bool,
}

impl<'a> HeadView<'a> {
    pub fn new(regressor: &'a mut MultiHeadRegressor, target: &str, train_shared: bool) -> Result<Self> {
        regressor.head(target)?;
        Ok(Self {
            regressor,
            target: target.to_string(),
            train_shared,
        })
    }

    fn head(&self) -> &DenseNet {
        &self.regressor.heads[&self.target]
    }
}

impl Trainable for HeadView<'_> {
    fn trainable_params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        if self.train_shared {
            p.extend_from_slice(self.regressor.shared.encoder.params());
        }
        p.extend_from_slice(self.head().params());
        p
    }

    fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        let split = if self.train_shared {
            self.regressor.shared.encoder.param_count()
        } else {
            0
        };
        let head_len = self.head().param_count();
        if params.len() != split + head_len {
            return Err(Error::shape("head parameter vector has wrong length"));
        }
        if self.train_shared {
            self.regressor.shared.encoder.set_params(&params[..split])?;
        }
        self.regressor
            .heads
            .get_mut(&self.target)
            .expect("checked at construction")
            .set_params(&params[split..])
    }

    fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::argument("gradient of an empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let enc = &self.regressor.shared.encoder;
        let head = self.head();
        let mut g_enc = vec![0.0; if self.train_shared { enc.param_count() } else { 0 }];
        let mut g_head = vec![0.0; head.param_count()];
        let mut loss = 0.0;
        for example in batch {
            let t_enc = enc.forward_trace(&example.input)?;
            let t_head = head.forward_trace(t_enc.output())?;
            let (l, d_out) = mse_with_grad(t_head.output(), &example.target)?;
            loss += l * scale;
            let d_out: Vec<f64> = d_out.into_iter().map(|d| d * scale).collect();
            let d_latent = head.backward(&t_head, &d_out, &mut g_head);
            if self.train_shared {
                enc.backward(&t_enc, &d_latent, &mut g_enc);
            }
        }
        g_enc.extend(g_head);
        Ok((loss, g_enc))
    }

    fn loss(&self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::argument("loss of an empty batch"));
        }
        let mut total = 0.0;
        for example in batch {
            let latent = self.regressor.shared.encode(&example.input)?;
            total += super::dense::mse(&self.head().forward(&latent)?, &example.target)?;
        }
        Ok(total / batch.len() as f64)
    }
}
