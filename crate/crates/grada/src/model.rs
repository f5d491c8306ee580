//! The three-part classifier: a convolutional feature extractor `F` with
//! multi-tap dense-and-concat latent, a label predictor `CLF`, and a
//! domain classifier `DMN` reached through the gradient-reversal
//! operator.
//!
//! Each conv block is conv 3×3 / leaky ReLU / maxpool 2×2. After every
//! pool, a tap projects the flattened map to `tap_width` neurons; one more
//! tap follows the trunk's first linear layer. The concatenated taps form
//! the latent vector, so a config with C blocks yields a latent of
//! `(C+1)·tap_width` — a full-size instance (5 pools, 100-wide taps)
//! gives a 600-component latent, while the desk-scale default (3 blocks,
//! 16-wide taps) gives 64.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{Gradients, NodeId, Tape};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Topology of the classifier.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Pixels per side of the (square, grayscale) input.
    pub input_size: usize,
    /// Output channels of each conv block; the length sets the block count.
    pub conv_channels: Vec<usize>,
    /// Width of each tap projection.
    pub tap_width: usize,
    /// Hidden width of the trunk linear and of both heads.
    pub hidden_width: usize,
    pub num_classes: usize,
    pub num_domains: usize,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 32,
            conv_channels: vec![8, 16, 32],
            tap_width: 16,
            hidden_width: 32,
            num_classes: 7,
            num_domains: 4,
            leaky_slope: 0.01,
        }
    }
}

impl ModelConfig {
    /// Desk-scale defaults sized to the data: up to three conv blocks,
    /// truncated to the depth the input's spatial extent supports.
    pub fn default_for(input_size: usize, num_classes: usize, num_domains: usize) -> Result<Self> {
        let mut conv_channels = Vec::new();
        for (i, &ch) in [8usize, 16, 32].iter().enumerate() {
            let spatial = input_size >> i;
            if spatial >= 3 && spatial.is_multiple_of(2) {
                conv_channels.push(ch);
            } else {
                break;
            }
        }
        if conv_channels.is_empty() {
            return Err(Error::Config(format!(
                "input size {input_size} cannot support even one conv block"
            )));
        }
        let config = ModelConfig {
            input_size,
            conv_channels,
            num_classes,
            num_domains,
            ..ModelConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn num_blocks(&self) -> usize {
        self.conv_channels.len()
    }

    /// Width of the concatenated tap latent: (C+1)·tap_width.
    pub fn latent_width(&self) -> usize {
        (self.num_blocks() + 1) * self.tap_width
    }

    /// Spatial extent after `i` pools.
    fn spatial(&self, i: usize) -> usize {
        self.input_size >> i
    }

    /// Flattened width of the map tapped after pool `i` (0-based block).
    fn tap_input_width(&self, i: usize) -> usize {
        let s = self.spatial(i + 1);
        self.conv_channels[i] * s * s
    }

    fn trunk_input_width(&self) -> usize {
        let c = self.num_blocks();
        let s = self.spatial(c);
        self.conv_channels[c - 1] * s * s
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_blocks();
        if c == 0 {
            return Err(Error::Config("conv_channels must name at least one block".into()));
        }
        if !self.input_size.is_multiple_of(1 << c) {
            return Err(Error::Config(format!(
                "input_size {} not divisible by 2^{c}",
                self.input_size
            )));
        }
        for i in 0..c {
            if self.spatial(i) < 3 {
                return Err(Error::Config(format!(
                    "block {i} sees spatial extent {} below the 3×3 kernel",
                    self.spatial(i)
                )));
            }
        }
        if self.tap_width == 0 || self.hidden_width == 0 {
            return Err(Error::Config("tap_width and hidden_width must be positive".into()));
        }
        if self.num_classes < 2 || self.num_domains < 2 {
            return Err(Error::Config(format!(
                "need ≥ 2 classes and ≥ 2 domains, got {} / {}",
                self.num_classes, self.num_domains
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky_slope must lie in (0,1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Parameter names with shapes, in a stable order.
    fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let mut specs = Vec::new();
        let mut in_ch = 1;
        for (i, &out_ch) in self.conv_channels.iter().enumerate() {
            specs.push((
                format!("f.conv{i}.kernel"),
                vec![out_ch, in_ch, 3, 3],
                Init::Glorot { fan_in: in_ch * 9, fan_out: out_ch * 9 },
            ));
            specs.push((format!("f.conv{i}.bias"), vec![out_ch], Init::Zero));
            in_ch = out_ch;
        }
        for i in 0..self.num_blocks() {
            let w = self.tap_input_width(i);
            specs.push((
                format!("f.tap{i}.weight"),
                vec![w, self.tap_width],
                Init::Glorot { fan_in: w, fan_out: self.tap_width },
            ));
            specs.push((format!("f.tap{i}.bias"), vec![self.tap_width], Init::Zero));
        }
        let trunk_in = self.trunk_input_width();
        specs.push((
            "f.trunk.weight".into(),
            vec![trunk_in, self.hidden_width],
            Init::Glorot { fan_in: trunk_in, fan_out: self.hidden_width },
        ));
        specs.push(("f.trunk.bias".into(), vec![self.hidden_width], Init::Zero));
        let c = self.num_blocks();
        specs.push((
            format!("f.tap{c}.weight"),
            vec![self.hidden_width, self.tap_width],
            Init::Glorot { fan_in: self.hidden_width, fan_out: self.tap_width },
        ));
        specs.push((format!("f.tap{c}.bias"), vec![self.tap_width], Init::Zero));

        for (head, out) in [("clf", self.num_classes), ("dmn", self.num_domains)] {
            let latent = self.latent_width();
            specs.push((
                format!("{head}.hidden.weight"),
                vec![latent, self.hidden_width],
                Init::Glorot { fan_in: latent, fan_out: self.hidden_width },
            ));
            specs.push((format!("{head}.hidden.bias"), vec![self.hidden_width], Init::Zero));
            specs.push((
                format!("{head}.out.weight"),
                vec![self.hidden_width, out],
                Init::Glorot { fan_in: self.hidden_width, fan_out: out },
            ));
            specs.push((format!("{head}.out.bias"), vec![out], Init::Zero));
        }
        specs
    }
}

enum Init {
    Zero,
    Glorot { fan_in: usize, fan_out: usize },
}

/// Named parameter collection for the whole model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        ModelParams { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    /// Checks that the parameter set matches the config's shapes exactly,
    /// reporting every difference.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let mut diffs = Vec::new();
        let specs = config.param_specs();
        for (name, shape, _) in &specs {
            match self.get(name) {
                None => diffs.push(format!("missing {name} (want {shape:?})")),
                Some(t) if t.shape() != shape.as_slice() => {
                    diffs.push(format!("{name}: have {:?}, want {shape:?}", t.shape()))
                }
                _ => {}
            }
        }
        let expected: std::collections::BTreeSet<&String> =
            specs.iter().map(|(n, _, _)| n).collect();
        for name in self.tensors.keys() {
            if !expected.contains(name) {
                diffs.push(format!("unexpected parameter {name}"));
            }
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("parameter/config shape mismatch: {}", diffs.join("; "))))
        }
    }
}

/// Glorot-uniform weights (±√(6/(fan_in+fan_out))), zero biases,
/// deterministic per seed.
pub fn init_params(config: &ModelConfig, init_seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = seed::rng(init_seed);
    let mut tensors = BTreeMap::new();
    for (name, shape, init) in config.param_specs() {
        let numel: usize = shape.iter().product();
        let data = match init {
            Init::Zero => vec![0.0; numel],
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..numel).map(|_| rng.gen_range(-limit..limit)).collect()
            }
        };
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    Ok(ModelParams { tensors })
}

/// How the domain head attaches to the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainPath {
    /// Through the gradient-reversal operator (the training wiring).
    Adversarial,
    /// Computed for monitoring, but cut off from `F`: no gradient reaches
    /// the extractor or below.
    Detached,
    /// Plain identity wiring; exists so tests can compare the reversed
    /// gradients against their unreversed counterparts.
    Direct,
}

/// A recorded forward pass: the tape plus handles to the nodes later
/// stages hang losses on.
pub struct ForwardPass {
    pub tape: Tape,
    pub latent: NodeId,
    pub clf_logprobs: NodeId,
    pub dmn_logprobs: NodeId,
}

/// Forward tensors extracted from a pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub latent: Tensor,
    pub clf_logprobs: Tensor,
    pub dmn_logprobs: Tensor,
}

impl ForwardPass {
    pub fn output(&self) -> ForwardOutput {
        ForwardOutput {
            latent: self.tape.value(self.latent).clone(),
            clf_logprobs: self.tape.value(self.clf_logprobs).clone(),
            dmn_logprobs: self.tape.value(self.dmn_logprobs).clone(),
        }
    }
}

/// Runs the model on a `b×1×s×s` batch. `lambda_active` selects the
/// adversarial wiring; when false the domain head is still computed (for
/// monitoring) but detached from the extractor.
pub fn forward(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &Tensor,
    lambda_active: bool,
) -> Result<ForwardPass> {
    let path = if lambda_active { DomainPath::Adversarial } else { DomainPath::Detached };
    forward_with_path(config, params, batch, path)
}

/// [`forward`] with the domain-head wiring spelled out.
pub fn forward_with_path(
    config: &ModelConfig,
    params: &ModelParams,
    batch: &Tensor,
    path: DomainPath,
) -> Result<ForwardPass> {
    let s = config.input_size;
    let bs = batch.shape();
    if bs.len() != 4 || bs[1] != 1 || bs[2] != s || bs[3] != s {
        return Err(Error::dim(
            "forward",
            format!("batch shape {bs:?}, model expects [b, 1, {s}, {s}]"),
        ));
    }
    let b = bs[0];
    let slope = config.leaky_slope;

    let mut tape = Tape::new();
    let mut x = tape.input(batch.clone());
    let mut taps = Vec::with_capacity(config.num_blocks() + 1);

    for i in 0..config.num_blocks() {
        let kernel = tape.param(format!("f.conv{i}.kernel"), params.require(&format!("f.conv{i}.kernel"))?.clone());
        let bias = tape.param(format!("f.conv{i}.bias"), params.require(&format!("f.conv{i}.bias"))?.clone());
        let conv = tape.conv2d(x, kernel, bias)?;
        let act = tape.leaky_relu(conv, slope);
        let pooled = tape.maxpool2d(act)?;
        let flat = tape.reshape(pooled, &[b, config.tap_input_width(i)])?;
        taps.push(linear_tap(&mut tape, params, &format!("f.tap{i}"), flat, slope)?);
        x = pooled;
    }

    let flat = tape.reshape(x, &[b, config.trunk_input_width()])?;
    let trunk_w = tape.param("f.trunk.weight", params.require("f.trunk.weight")?.clone());
    let trunk_b = tape.param("f.trunk.bias", params.require("f.trunk.bias")?.clone());
    let trunk = tape.matmul(flat, trunk_w)?;
    let trunk = tape.add_bias(trunk, trunk_b)?;
    let trunk = tape.leaky_relu(trunk, slope);
    let c = config.num_blocks();
    taps.push(linear_tap(&mut tape, params, &format!("f.tap{c}"), trunk, slope)?);

    let latent = tape.concat(&taps)?;

    let clf_logprobs = head(&mut tape, params, "clf", latent, slope)?;

    let dmn_input = match path {
        DomainPath::Adversarial => tape.grad_reverse(latent),
        DomainPath::Detached => tape.detach(latent),
        DomainPath::Direct => latent,
    };
    let dmn_logprobs = head(&mut tape, params, "dmn", dmn_input, slope)?;

    Ok(ForwardPass { tape, latent, clf_logprobs, dmn_logprobs })
}

fn linear_tap(
    tape: &mut Tape,
    params: &ModelParams,
    name: &str,
    input: NodeId,
    slope: f64,
) -> Result<NodeId> {
    let w = tape.param(format!("{name}.weight"), params.require(&format!("{name}.weight"))?.clone());
    let b = tape.param(format!("{name}.bias"), params.require(&format!("{name}.bias"))?.clone());
    let y = tape.matmul(input, w)?;
    let y = tape.add_bias(y, b)?;
    Ok(tape.leaky_relu(y, slope))
}

fn head(
    tape: &mut Tape,
    params: &ModelParams,
    name: &str,
    input: NodeId,
    slope: f64,
) -> Result<NodeId> {
    let hidden = linear_tap(tape, params, &format!("{name}.hidden"), input, slope)?;
    let w = tape.param(format!("{name}.out.weight"), params.require(&format!("{name}.out.weight"))?.clone());
    let b = tape.param(format!("{name}.out.bias"), params.require(&format!("{name}.out.bias"))?.clone());
    let logits = tape.matmul(hidden, w)?;
    let logits = tape.add_bias(logits, b)?;
    tape.log_softmax(logits)
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn predict(logprobs: &Tensor) -> Vec<usize> {
    let s = logprobs.shape();
    let (b, k) = (s[0], s[1]);
    let d = logprobs.data();
    (0..b)
        .map(|r| {
            let row = &d[r * k..(r + 1) * k];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// One SGD step: `w ← w − lr·g` for every parameter, producing a new
/// params version.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, lr: f64) -> Result<ModelParams> {
    let mut tensors = BTreeMap::new();
    for (name, value) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient for parameter {name}")))?;
        if g.shape() != value.shape() {
            return Err(Error::dim(
                "sgd_step",
                format!("{name}: gradient {:?} vs parameter {:?}", g.shape(), value.shape()),
            ));
        }
        let data = value
            .data()
            .iter()
            .zip(g.data())
            .map(|(w, gi)| w - lr * gi)
            .collect();
        tensors.insert(name.clone(), Tensor::new(value.shape().to_vec(), data)?);
    }
    Ok(ModelParams { tensors })
}
