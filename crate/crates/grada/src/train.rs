//! The three experiment protocols (baseline/joint, fine-tune,
//! unsupervised domain adaptation), the optimizer step, evaluation, and
//! the metrics ledger.
//!
//! A DA step forwards the whole aggregated batch, takes the
//! classification loss over source-domain samples only, clamps each
//! per-sample domain loss at `clamp·λ(n)`, combines the two means as
//! `L = L_CLF + λ·L_DMN`, and runs a single backward pass followed by an
//! SGD update. Baseline and fine-tune steps train the classification loss
//! over every sample in the batch and keep the domain head detached: it
//! is monitored but never trains through the extractor.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{fingerprint, Checkpoint};
use crate::data::{make_epoch, AggregatedBatch, DomainDataset, Split};
use crate::error::{Error, Result};
use crate::model::{
    forward, init_params, predict, sgd_step, ModelConfig, ModelParams,
};
use crate::schedule::{factor, ScheduleState};
use crate::seed;
use crate::tensor::Tensor;

/// Which experiment a run reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Label-supervised training over the active domains.
    Baseline,
    /// Resume from a checkpoint, then label-supervised training on the
    /// active (target) domains.
    Finetune,
    /// Unsupervised domain adaptation: target labels withheld, domain
    /// discriminator active through the gradient-reversal path.
    Da,
}

impl Protocol {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "baseline" => Ok(Protocol::Baseline),
            "finetune" => Ok(Protocol::Finetune),
            "da" => Ok(Protocol::Da),
            other => Err(Error::Config(format!(
                "unknown protocol {other:?} (expected baseline, finetune or da)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Baseline => "baseline",
            Protocol::Finetune => "finetune",
            Protocol::Da => "da",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Protocol::Baseline => 0,
            Protocol::Finetune => 1,
            Protocol::Da => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Protocol::Baseline),
            1 => Ok(Protocol::Finetune),
            2 => Ok(Protocol::Da),
            other => Err(Error::Format(format!("unknown protocol code {other}"))),
        }
    }
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub protocol: Protocol,
    pub epochs: u64,
    /// Per-domain mini-batch size m; an aggregated batch holds D·m samples.
    pub batch_per_domain: usize,
    pub learning_rate: f64,
    /// The labeled domain. In DA runs only its class labels are used.
    pub source_domain: usize,
    /// Domains that contribute training batches.
    pub active_domains: Vec<usize>,
    pub alpha: f64,
    pub clamp: f64,
    pub seed: u64,
    /// Evaluate every this many epochs (the final epoch is always
    /// evaluated).
    pub eval_every: u64,
}

impl TrainConfig {
    pub fn validate(&self, num_domains: usize) -> Result<()> {
        if self.batch_per_domain == 0 {
            return Err(Error::Config("batch_per_domain must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be ≥ 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.alpha) || !positive(self.clamp) {
            return Err(Error::Config(format!(
                "alpha and clamp must be positive, got {} / {}",
                self.alpha, self.clamp
            )));
        }
        if self.source_domain >= num_domains {
            return Err(Error::Config(format!(
                "source_domain {} out of range for {num_domains} domains",
                self.source_domain
            )));
        }
        if self.active_domains.is_empty() {
            return Err(Error::Config("active_domains must not be empty".into()));
        }
        let mut seen = vec![false; num_domains];
        for &d in &self.active_domains {
            if d >= num_domains {
                return Err(Error::Config(format!(
                    "active domain {d} out of range for {num_domains} domains"
                )));
            }
            if seen[d] {
                return Err(Error::Config(format!("active domain {d} listed twice")));
            }
            seen[d] = true;
        }
        if self.protocol == Protocol::Da {
            if self.active_domains.len() < 2 {
                return Err(Error::Config(
                    "da protocol needs ≥ 2 active domains".into(),
                ));
            }
            if !self.active_domains.contains(&self.source_domain) {
                return Err(Error::Config(format!(
                    "da protocol needs the source domain {} among the active domains",
                    self.source_domain
                )));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        fingerprint(json.as_bytes())
    }
}

/// Loss ledger entry for one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Global step index n (0-based, the value λ was computed from).
    pub step: u64,
    pub lambda: f64,
    pub clf_loss: f64,
    pub dmn_loss: f64,
    pub total_loss: f64,
}

/// One evaluation row: the cells of the per-domain result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub domain: usize,
    pub split: &'static str,
    pub accuracy: f64,
    pub clf_loss: f64,
    pub dmn_loss: f64,
    pub lambda: f64,
}

/// Everything a protocol run produces.
#[derive(Debug)]
pub struct RunResult {
    pub metrics: Vec<MetricsRecord>,
    pub steps: Vec<StepRecord>,
    pub checkpoint: Checkpoint,
}

/// One optimizer step on an aggregated batch. Returns the new parameter
/// version and the loss ledger entry; advances the schedule by one step.
pub fn train_step(
    model_config: &ModelConfig,
    params: &ModelParams,
    batch: &AggregatedBatch,
    config: &TrainConfig,
    state: &mut ScheduleState,
) -> Result<(ModelParams, StepRecord)> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let adversarial = config.protocol == Protocol::Da;
    if adversarial && config.active_domains.len() < 2 {
        return Err(Error::Config("da protocol needs ≥ 2 active domains".into()));
    }

    let clf_mask: Vec<bool> = if adversarial {
        batch.source_mask.clone()
    } else {
        vec![true; b]
    };
    let clf_count = clf_mask.iter().filter(|&&m| m).count();
    if clf_count == 0 {
        return Err(Error::Data("batch has no samples contributing to the class loss".into()));
    }

    let mut pass = forward(model_config, params, &batch.images, adversarial)?;
    let tape = &mut pass.tape;

    let clf_nll = tape.nll_loss(pass.clf_logprobs, &batch.class_labels, &clf_mask)?;
    let clf_sum = tape.sum(clf_nll);
    let l_clf = tape.scale(clf_sum, 1.0 / clf_count as f64);

    let dmn_mask = vec![true; b];
    let dmn_nll = tape.nll_loss(pass.dmn_logprobs, &batch.domain_labels, &dmn_mask)?;

    let (lambda, l_dmn, total) = if adversarial {
        let lambda = factor(state)?;
        let ceiling = state.ceiling()?;
        let clamped = tape.clamp_max(dmn_nll, ceiling);
        let dmn_sum = tape.sum(clamped);
        let l_dmn = tape.scale(dmn_sum, 1.0 / b as f64);
        let weighted = tape.scale(l_dmn, lambda);
        let total = tape.add(l_clf, weighted)?;
        (lambda, l_dmn, total)
    } else {
        // Monitoring only: the domain head value is recorded but the total
        // is the class loss alone.
        let dmn_sum = tape.sum(dmn_nll);
        let l_dmn = tape.scale(dmn_sum, 1.0 / b as f64);
        (0.0, l_dmn, l_clf)
    };

    let record = StepRecord {
        step: state.step,
        lambda,
        clf_loss: tape.value(l_clf).item()?,
        dmn_loss: tape.value(l_dmn).item()?,
        total_loss: tape.value(total).item()?,
    };

    let grads = tape.backward(total)?;
    let new_params = sgd_step(params, &grads, config.learning_rate)?;
    state.advance();
    Ok((new_params, record))
}

const EVAL_CHUNK: usize = 64;

/// Validation/train-split metrics for one domain: accuracy plus mean
/// unclamped losses (clamping is a training-only device).
pub fn evaluate(
    model_config: &ModelConfig,
    params: &ModelParams,
    dataset: &DomainDataset,
    split: Split,
    epoch: u64,
    lambda: f64,
) -> Result<MetricsRecord> {
    let indices = dataset.indices(split);
    if indices.is_empty() {
        return Err(Error::Data(format!(
            "domain {} has an empty {} split",
            dataset.domain_label,
            split.name()
        )));
    }
    let mut correct = 0usize;
    let mut clf_sum = 0.0;
    let mut dmn_sum = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = gather_images(dataset, chunk)?;
        let classes: Vec<usize> = chunk.iter().map(|&i| dataset.samples[i].class_label).collect();
        let domains: Vec<usize> = chunk.iter().map(|&i| dataset.samples[i].domain_label).collect();
        let mask = vec![true; chunk.len()];

        let mut pass = forward(model_config, params, &batch, false)?;
        let predicted = predict(pass.tape.value(pass.clf_logprobs));
        correct += predicted.iter().zip(&classes).filter(|(p, t)| p == t).count();

        let clf_nll = pass.tape.nll_loss(pass.clf_logprobs, &classes, &mask)?;
        clf_sum += pass.tape.value(clf_nll).data().iter().sum::<f64>();
        let dmn_nll = pass.tape.nll_loss(pass.dmn_logprobs, &domains, &mask)?;
        dmn_sum += pass.tape.value(dmn_nll).data().iter().sum::<f64>();
    }
    let n = indices.len() as f64;
    Ok(MetricsRecord {
        epoch,
        domain: dataset.domain_label,
        split: split.name(),
        accuracy: correct as f64 / n,
        clf_loss: clf_sum / n,
        dmn_loss: dmn_sum / n,
        lambda,
    })
}

/// Pooled domain-classification accuracy over all datasets' chosen split:
/// how well the domain head reads domain identity out of the features.
pub fn evaluate_domain_accuracy(
    model_config: &ModelConfig,
    params: &ModelParams,
    datasets: &[DomainDataset],
    split: Split,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for dataset in datasets {
        for chunk in dataset.indices(split).chunks(EVAL_CHUNK) {
            let batch = gather_images(dataset, chunk)?;
            let pass = forward(model_config, params, &batch, false)?;
            let predicted = predict(pass.tape.value(pass.dmn_logprobs));
            correct += predicted.iter().filter(|&&p| p == dataset.domain_label).count();
            total += chunk.len();
        }
    }
    if total == 0 {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// How domain-identifiable the extractor's features are: trains a fresh
/// two-layer domain classifier on the frozen latents of every domain's
/// train split (full-batch gradient descent), then reports its accuracy
/// on the validation latents. The extractor itself never moves.
pub fn domain_probe_accuracy(
    model_config: &ModelConfig,
    params: &ModelParams,
    datasets: &[DomainDataset],
    iterations: u64,
    lr: f64,
    probe_seed: u64,
) -> Result<f64> {
    let latent_width = model_config.latent_width();
    let gather_latents = |split: Split| -> Result<(Vec<f64>, Vec<usize>)> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for dataset in datasets {
            for chunk in dataset.indices(split).chunks(EVAL_CHUNK) {
                let batch = gather_images(dataset, chunk)?;
                let pass = forward(model_config, params, &batch, false)?;
                rows.extend_from_slice(pass.tape.value(pass.latent).data());
                labels.extend(std::iter::repeat_n(dataset.domain_label, chunk.len()));
            }
        }
        Ok((rows, labels))
    };
    let (train_rows, train_labels) = gather_latents(Split::Train)?;
    let (val_rows, val_labels) = gather_latents(Split::Val)?;
    if train_labels.is_empty() || val_labels.is_empty() {
        return Err(Error::Data("probe needs nonempty train and val splits".into()));
    }

    let hidden = model_config.hidden_width;
    let domains = model_config.num_domains;
    use rand::Rng;
    let mut rng = seed::rng(probe_seed);
    let mut glorot = |fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect::<Vec<_>>()
    };
    let mut w1 = Tensor::new(vec![latent_width, hidden], glorot(latent_width, hidden))?;
    let mut b1 = Tensor::zeros(&[hidden]);
    let mut w2 = Tensor::new(vec![hidden, domains], glorot(hidden, domains))?;
    let mut b2 = Tensor::zeros(&[domains]);

    let n_train = train_labels.len();
    let slope = model_config.leaky_slope;
    let probe_forward = |tape: &mut Tape,
                         rows: &[f64],
                         n: usize,
                         w1: &Tensor,
                         b1: &Tensor,
                         w2: &Tensor,
                         b2: &Tensor|
     -> Result<crate::autodiff::NodeId> {
        let x = tape.input(Tensor::new(vec![n, latent_width], rows.to_vec())?);
        let w1 = tape.param("w1", w1.clone());
        let b1 = tape.param("b1", b1.clone());
        let w2 = tape.param("w2", w2.clone());
        let b2 = tape.param("b2", b2.clone());
        let h = tape.matmul(x, w1)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.leaky_relu(h, slope);
        let logits = tape.matmul(h, w2)?;
        let logits = tape.add_bias(logits, b2)?;
        tape.log_softmax(logits)
    };

    use crate::autodiff::Tape;
    for _ in 0..iterations {
        let mut tape = Tape::new();
        let logprobs = probe_forward(&mut tape, &train_rows, n_train, &w1, &b1, &w2, &b2)?;
        let mask = vec![true; n_train];
        let nll = tape.nll_loss(logprobs, &train_labels, &mask)?;
        let total = tape.sum(nll);
        let mean = tape.scale(total, 1.0 / n_train as f64);
        let grads = tape.backward(mean)?;
        let apply = |w: &Tensor, name: &str| -> Result<Tensor> {
            let g = grads.get(name).unwrap();
            Tensor::new(
                w.shape().to_vec(),
                w.data().iter().zip(g.data()).map(|(v, gi)| v - lr * gi).collect(),
            )
        };
        w1 = apply(&w1, "w1")?;
        b1 = apply(&b1, "b1")?;
        w2 = apply(&w2, "w2")?;
        b2 = apply(&b2, "b2")?;
    }

    let mut tape = Tape::new();
    let logprobs = probe_forward(&mut tape, &val_rows, val_labels.len(), &w1, &b1, &w2, &b2)?;
    let predicted = predict(tape.value(logprobs));
    let correct = predicted.iter().zip(&val_labels).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / val_labels.len() as f64)
}

fn gather_images(dataset: &DomainDataset, indices: &[usize]) -> Result<Tensor> {
    let shape = dataset.samples[indices[0]].image.shape().to_vec();
    let image_len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(indices.len() * image_len);
    for &i in indices {
        data.extend_from_slice(dataset.samples[i].image.data());
    }
    let mut full = vec![indices.len()];
    full.extend_from_slice(&shape);
    Tensor::new(full, data)
}

/// Runs a full protocol: initial evaluation, epoch loop with balanced
/// aggregated batches, periodic per-domain validation, final checkpoint.
/// Deterministic per config+seed.
pub fn run_protocol(
    model_config: &ModelConfig,
    config: &TrainConfig,
    datasets: &[DomainDataset],
    init: Option<Checkpoint>,
) -> Result<RunResult> {
    model_config.validate()?;
    config.validate(datasets.len())?;
    if datasets.len() != model_config.num_domains {
        return Err(Error::Config(format!(
            "model expects {} domains, data has {}",
            model_config.num_domains,
            datasets.len()
        )));
    }
    for ds in datasets {
        for s in &ds.samples {
            if s.class_label >= model_config.num_classes {
                return Err(Error::Data(format!(
                    "domain {}: class label {} out of range",
                    ds.domain_label, s.class_label
                )));
            }
        }
    }
    if config.protocol == Protocol::Finetune && init.is_none() {
        return Err(Error::Config("finetune requires an initial checkpoint".into()));
    }

    let params = match init {
        Some(ckpt) => {
            if ckpt.model_config != *model_config {
                return Err(Error::Config(format!(
                    "checkpoint topology {:?} differs from the requested model {:?}",
                    ckpt.model_config, model_config
                )));
            }
            ckpt.params
        }
        None => init_params(model_config, seed::split(config.seed, "init"))?,
    };

    let active: Vec<&DomainDataset> = config
        .active_domains
        .iter()
        .map(|&d| &datasets[d])
        .collect();
    for ds in &active {
        if ds.train_indices.is_empty() {
            return Err(Error::Data(format!(
                "active domain {} has an empty train split",
                ds.domain_label
            )));
        }
    }
    let longest = active.iter().map(|d| d.train_indices.len()).max().unwrap();
    let steps_per_epoch = longest.div_ceil(config.batch_per_domain) as u64;
    let total_steps = (config.epochs * steps_per_epoch).max(1);
    let mut state = ScheduleState::new(total_steps, config.alpha, config.clamp)?;

    let row_lambda = |state: &ScheduleState| -> Result<f64> {
        if config.protocol == Protocol::Da {
            factor(state)
        } else {
            Ok(0.0)
        }
    };

    let mut params = params;
    let mut metrics = Vec::new();
    let mut steps = Vec::new();

    let lambda0 = row_lambda(&state)?;
    for ds in datasets {
        metrics.push(evaluate(model_config, &params, ds, Split::Val, 0, lambda0)?);
    }

    let shuffle_seed = seed::split(config.seed, "shuffle");
    for epoch in 1..=config.epochs {
        let epoch_seed = seed::split(shuffle_seed, &format!("epoch{epoch}"));
        let batches = make_epoch(&active, config.batch_per_domain, config.source_domain, epoch_seed)?;
        for batch in &batches {
            let (new_params, record) = train_step(model_config, &params, batch, config, &mut state)?;
            params = new_params;
            steps.push(record);
        }
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let lambda = row_lambda(&state)?;
            for ds in datasets {
                metrics.push(evaluate(model_config, &params, ds, Split::Val, epoch, lambda)?);
            }
        }
    }

    let checkpoint = Checkpoint {
        model_config: model_config.clone(),
        params,
        optimizer: BTreeMap::new(),
        schedule: state,
        epochs_completed: config.epochs,
        protocol_code: config.protocol.code(),
        config_fingerprint: config.fingerprint(),
    };
    Ok(RunResult { metrics, steps, checkpoint })
}

/// Metrics CSV: `epoch,domain,split,accuracy,clf_loss,dmn_loss,lambda`,
/// UTF-8, LF line endings, shortest-round-trip float formatting.
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut text = String::from("epoch,domain,split,accuracy,clf_loss,dmn_loss,lambda\n");
    for r in records {
        text.push_str(&format_metrics_row(r));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn format_metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.epoch, r.domain, r.split, r.accuracy, r.clf_loss, r.dmn_loss, r.lambda
    )
}
