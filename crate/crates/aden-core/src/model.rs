//! Residual encoder-decoder and latent discriminator.
//!
//! The encoder is a stem convolution that lifts the input to
//! `feature_channels`, followed by one dilated convolution per entry of
//! `encoder_dilations` (ReLU after each). The decoder mirrors it with
//! dilated deconvolutions at the reversed dilations; when residual
//! shortcuts are enabled, the encoder activation of the symmetric stage
//! is added after each deconvolution and the sum passes through a
//! weighting convolution. A final convolution drops back to the input
//! channel count with linear activation, so the output length always
//! equals the input length.
//!
//! The discriminator reduces the latent channels to one, then applies a
//! small fully connected stack ending in a sigmoid. Its input length is
//! fixed at build time from `window_len`; denoising itself never calls
//! the discriminator and stays adaptive-length.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::optim::glorot_uniform;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub reduce_kernel: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { reduce_kernel: 1, hidden_units: 150, hidden_layers: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub feature_channels: usize,
    pub kernel_size: usize,
    pub encoder_dilations: Vec<usize>,
    pub decoder_dilations: Vec<usize>,
    pub use_dilation: bool,
    pub use_residual: bool,
    pub use_adversarial: bool,
    pub window_len: usize,
    pub discriminator: DiscriminatorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 1,
            feature_channels: 128,
            kernel_size: 3,
            encoder_dilations: vec![3, 3, 6],
            decoder_dilations: vec![6, 3, 3],
            use_dilation: true,
            use_residual: true,
            use_adversarial: true,
            window_len: 10,
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.input_channels < 1 || self.feature_channels < 1 {
            return fail(format!(
                "channel counts must be >= 1 (input_channels={}, feature_channels={})",
                self.input_channels, self.feature_channels
            ));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size < 1 {
            return fail(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.encoder_dilations.is_empty() {
            return fail("encoder_dilations must not be empty".into());
        }
        if self.encoder_dilations.iter().any(|d| *d < 1) {
            return fail(format!("dilations must be >= 1, got {:?}", self.encoder_dilations));
        }
        let reversed: Vec<usize> = self.encoder_dilations.iter().rev().copied().collect();
        if self.decoder_dilations != reversed {
            return fail(format!(
                "decoder_dilations {:?} must be the reverse of encoder_dilations {:?}",
                self.decoder_dilations, self.encoder_dilations
            ));
        }
        if self.window_len < 1 {
            return fail("window_len must be >= 1".into());
        }
        if self.discriminator.reduce_kernel % 2 == 0 || self.discriminator.reduce_kernel < 1 {
            return fail(format!(
                "reduce_kernel must be odd, got {}",
                self.discriminator.reduce_kernel
            ));
        }
        if self.discriminator.hidden_units < 1 || self.discriminator.hidden_layers < 1 {
            return fail("discriminator hidden_units and hidden_layers must be >= 1".into());
        }
        Ok(())
    }

    /// Encoder dilations with the `use_dilation` ablation applied.
    pub fn effective_encoder_dilations(&self) -> Vec<usize> {
        if self.use_dilation {
            self.encoder_dilations.clone()
        } else {
            vec![1; self.encoder_dilations.len()]
        }
    }

    pub fn effective_decoder_dilations(&self) -> Vec<usize> {
        let mut d = self.effective_encoder_dilations();
        d.reverse();
        d
    }

    pub fn stages(&self) -> usize {
        self.encoder_dilations.len()
    }

    fn same_pad(&self, dilation: usize) -> usize {
        dilation * (self.kernel_size - 1) / 2
    }
}

/// All learnable tensors, addressable by stable layer names
/// (`enc.conv0`, `enc.dil1`.., `dec.dil1`.., `dec.shortcut1`..,
/// `dec.conv_out`, `disc.reduce`, `disc.fc1`.. with `.w`/`.b` suffixes).
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn empty(config: ModelConfig) -> Self {
        ModelParams { config, tensors: BTreeMap::new() }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub(crate) fn insert(&mut self, name: String, tensor: Tensor) {
        self.tensors.insert(name, tensor);
    }

    /// Replace an existing tensor; the name must exist and the shape
    /// must match the built architecture.
    pub fn set_tensor(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        match self.tensors.get_mut(name) {
            None => Err(Error::Config(format!("unknown parameter '{name}'"))),
            Some(t) if t.shape() != tensor.shape() => Err(Error::Shape(format!(
                "parameter '{name}' has shape {}, got {}",
                t.shape(),
                tensor.shape()
            ))),
            Some(t) => {
                *t = tensor;
                Ok(())
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.shape().numel()).sum()
    }

    /// Parameter count of the encoder-decoder part alone.
    pub fn param_count_encoder_decoder(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(name, _)| !is_discriminator_param(name))
            .map(|(_, t)| t.shape().numel())
            .sum()
    }

    /// Register every tensor as a graph leaf.
    pub fn bind(&self, g: &mut Graph) -> ModelBinding {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| (name.clone(), g.leaf(t.clone())))
            .collect();
        ModelBinding { vars }
    }
}

pub fn is_discriminator_param(name: &str) -> bool {
    name.starts_with("disc.")
}

/// Graph handles for one forward/backward pass over [`ModelParams`].
pub struct ModelBinding {
    vars: BTreeMap<String, Var>,
}

/// Binding over externally registered leaves, keyed by parameter name.
pub fn binding_from_vars(vars: BTreeMap<String, Var>) -> ModelBinding {
    ModelBinding { vars }
}

impl ModelBinding {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter '{name}' is not part of this model")))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

struct Builder<'a> {
    config: &'a ModelConfig,
    rng: rand_chacha::ChaCha8Rng,
    tensors: BTreeMap<String, Tensor>,
}

impl Builder<'_> {
    fn layer_seed(&mut self) -> u64 {
        use rand::Rng;
        self.rng.random()
    }

    fn conv(&mut self, name: &str, out_ch: usize, in_ch: usize, kernel: usize) -> Result<()> {
        let fan_in = in_ch * kernel;
        let fan_out = out_ch * kernel;
        let seed = self.layer_seed();
        let w = glorot_uniform(fan_in, fan_out, out_ch * in_ch * kernel, seed)?;
        self.tensors.insert(
            format!("{name}.w"),
            Tensor::from_vec(Shape::new(out_ch, in_ch, kernel), w)?,
        );
        self.tensors
            .insert(format!("{name}.b"), Tensor::zeros(Shape::new(1, out_ch, 1)));
        Ok(())
    }

    fn dense(&mut self, name: &str, out_dim: usize, in_dim: usize) -> Result<()> {
        let seed = self.layer_seed();
        let w = glorot_uniform(in_dim, out_dim, out_dim * in_dim, seed)?;
        self.tensors.insert(
            format!("{name}.w"),
            Tensor::from_vec(Shape::new(1, out_dim, in_dim), w)?,
        );
        self.tensors
            .insert(format!("{name}.b"), Tensor::zeros(Shape::new(1, out_dim, 1)));
        Ok(())
    }

    fn build(mut self) -> Result<BTreeMap<String, Tensor>> {
        let cfg = self.config;
        let f = cfg.feature_channels;
        let k = cfg.kernel_size;

        self.conv("enc.conv0", f, cfg.input_channels, k)?;
        for i in 1..=cfg.stages() {
            self.conv(&format!("enc.dil{i}"), f, f, k)?;
        }
        for i in 1..=cfg.stages() {
            self.conv(&format!("dec.dil{i}"), f, f, k)?;
            if cfg.use_residual {
                self.conv(&format!("dec.shortcut{i}"), f, f, k)?;
            }
        }
        self.conv("dec.conv_out", cfg.input_channels, f, k)?;

        if cfg.use_adversarial {
            let dc = &cfg.discriminator;
            self.conv("disc.reduce", 1, f, dc.reduce_kernel)?;
            let mut in_dim = cfg.window_len;
            for i in 1..=dc.hidden_layers {
                self.dense(&format!("disc.fc{i}"), dc.hidden_units, in_dim)?;
                in_dim = dc.hidden_units;
            }
            self.dense(&format!("disc.fc{}", dc.hidden_layers + 1), 1, in_dim)?;
        }
        Ok(self.tensors)
    }
}

/// Build all layers for `config`: weights Glorot-uniform from `seed`,
/// biases zero.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    use rand::SeedableRng;
    config.validate()?;
    let builder = Builder {
        config,
        rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        tensors: BTreeMap::new(),
    };
    let tensors = builder.build()?;
    Ok(ModelParams { config: config.clone(), tensors })
}

/// Encoder output: the latent plus each dilated stage's activation for
/// the decoder shortcuts.
pub struct Encoding {
    pub latent: Var,
    pub stage_acts: Vec<Var>,
}

fn conv_layer(
    g: &mut Graph,
    bind: &ModelBinding,
    name: &str,
    x: Var,
    dilation: usize,
    pad: usize,
) -> Result<Var> {
    let w = bind.var(&format!("{name}.w"))?;
    let b = bind.var(&format!("{name}.b"))?;
    g.conv1d_dilated(x, w, b, dilation, pad)
}

fn deconv_layer(g: &mut Graph, bind: &ModelBinding, name: &str, x: Var, dilation: usize) -> Result<Var> {
    let w = bind.var(&format!("{name}.w"))?;
    let b = bind.var(&format!("{name}.b"))?;
    g.deconv1d_dilated(x, w, b, dilation)
}

/// Run the encoder on `x` of shape `(batch, input_channels, L)` for any
/// `L >= 1`. The latent has shape `(batch, feature_channels, L)`.
pub fn encode(g: &mut Graph, config: &ModelConfig, bind: &ModelBinding, x: Var) -> Result<Encoding> {
    let xs = g.value(x).shape();
    if xs.channels != config.input_channels {
        return Err(Error::Shape(format!(
            "encoder expects {} input channels, got {}",
            config.input_channels, xs.channels
        )));
    }
    let stem_pad = config.same_pad(1);
    let mut h = conv_layer(g, bind, "enc.conv0", x, 1, stem_pad)?;
    h = g.relu(h);
    let mut stage_acts = Vec::with_capacity(config.stages());
    for (i, d) in config.effective_encoder_dilations().iter().enumerate() {
        h = conv_layer(g, bind, &format!("enc.dil{}", i + 1), h, *d, config.same_pad(*d))?;
        h = g.relu(h);
        stage_acts.push(h);
    }
    Ok(Encoding { latent: h, stage_acts })
}

/// Run the decoder on a latent. `stage_acts` are the encoder stage
/// activations; stage `i` of the decoder consumes the activation of
/// encoder stage `n + 1 - i`. They are ignored when `use_residual` is
/// off.
pub fn decode(
    g: &mut Graph,
    config: &ModelConfig,
    bind: &ModelBinding,
    latent: Var,
    stage_acts: &[Var],
) -> Result<Var> {
    let n = config.stages();
    if config.use_residual && stage_acts.len() != n {
        return Err(Error::Shape(format!(
            "expected {n} encoder stage activations, got {}",
            stage_acts.len()
        )));
    }
    let mut h = latent;
    for (i, d) in config.effective_decoder_dilations().iter().enumerate() {
        let stage = i + 1;
        h = deconv_layer(g, bind, &format!("dec.dil{stage}"), h, *d)?;
        h = g.relu(h);
        if config.use_residual {
            let paired = stage_acts[n - stage];
            let hs = g.value(h).shape();
            let ps = g.value(paired).shape();
            if hs != ps {
                return Err(Error::Shape(format!(
                    "shortcut shape mismatch at decoder stage {stage}: {hs} vs {ps}"
                )));
            }
            h = g.add(h, paired)?;
            h = conv_layer(g, bind, &format!("dec.shortcut{stage}"), h, 1, config.same_pad(1))?;
            h = g.relu(h);
        }
    }
    // Last convolution is linear.
    conv_layer(g, bind, "dec.conv_out", h, 1, config.same_pad(1))
}

/// Full denoising forward pass `decode(encode(x))`.
pub fn forward(g: &mut Graph, config: &ModelConfig, bind: &ModelBinding, x: Var) -> Result<Var> {
    let enc = encode(g, config, bind, x)?;
    decode(g, config, bind, enc.latent, &enc.stage_acts)
}

/// Classify a latent of shape `(batch, feature_channels, window_len)`
/// into clean/noisy; returns per-batch probabilities `(batch, 1, 1)`.
pub fn discriminate(g: &mut Graph, config: &ModelConfig, bind: &ModelBinding, latent: Var) -> Result<Var> {
    let ls = g.value(latent).shape();
    if ls.len != config.window_len {
        return Err(Error::Shape(format!(
            "discriminator input length is fixed to window_len {} at build time, got {}",
            config.window_len, ls.len
        )));
    }
    let dc = &config.discriminator;
    let reduce_pad = (dc.reduce_kernel - 1) / 2;
    let mut h = conv_layer(g, bind, "disc.reduce", latent, 1, reduce_pad)?;
    // h is (batch, 1, window_len): already flat for the dense stack.
    for i in 1..=dc.hidden_layers {
        let w = bind.var(&format!("disc.fc{i}.w"))?;
        let b = bind.var(&format!("disc.fc{i}.b"))?;
        h = g.dense(h, w, b)?;
        h = g.relu(h);
    }
    let last = dc.hidden_layers + 1;
    let w = bind.var(&format!("disc.fc{last}.w"))?;
    let b = bind.var(&format!("disc.fc{last}.b"))?;
    h = g.dense(h, w, b)?;
    Ok(g.sigmoid(h))
}

/// Denoise one signal of any length with frozen parameters.
pub fn denoise_signal(params: &ModelParams, noisy: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bind = params.bind(&mut g);
    let x = g.leaf(Tensor::from_signal(noisy)?);
    let y = forward(&mut g, params.config(), &bind, x)?;
    Ok(g.value(y).data().to_vec())
}
