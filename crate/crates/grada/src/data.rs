//! Synthetic multi-domain data, the preprocessing chain, deterministic
//! stratified splits, and the balanced aggregated-batch sampler.
//!
//! Each class k is a procedural glyph: an oriented soft bar at angle
//! k·π/num_classes plus per-sample jitter and noise. Each domain applies
//! its own fixed appearance shift (contrast/brightness affine, a small
//! rotation, a background level), so domains share the task structure but
//! follow different distributions. The class signal is geometric, the
//! domain shift (mostly) photometric, which keeps the two factors
//! separable when testing.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::seed;
use crate::tensor::Tensor;

/// One labeled image: pixels in [−1, 1], shape `1×s×s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub class_label: usize,
    pub domain_label: usize,
}

/// Which side of the 80/20 split to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// All samples of one domain plus its deterministic stratified split.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain_label: usize,
    pub samples: Vec<Sample>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl DomainDataset {
    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_indices,
            Split::Val => &self.val_indices,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Fixed appearance shift of one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub contrast: f64,
    pub brightness: f64,
    pub rotation_deg: f64,
    pub background: f64,
}

impl ShiftSpec {
    pub fn identity() -> Self {
        ShiftSpec { contrast: 1.0, brightness: 0.0, rotation_deg: 0.0, background: 40.0 }
    }
}

/// Named shift presets accepted by the CLI and recorded in dataset
/// metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftPreset {
    /// Distinct per-domain appearance shifts (the DA premise).
    Default,
    /// Every domain identical; a domain classifier cannot beat chance.
    Identity,
}

impl ShiftPreset {
    pub fn shifts(&self, num_domains: usize) -> Vec<ShiftSpec> {
        match self {
            ShiftPreset::Identity => vec![ShiftSpec::identity(); num_domains],
            ShiftPreset::Default => {
                let table = [
                    ShiftSpec { contrast: 1.0, brightness: 0.0, rotation_deg: 0.0, background: 40.0 },
                    ShiftSpec { contrast: 0.55, brightness: 55.0, rotation_deg: 4.0, background: 95.0 },
                    ShiftSpec { contrast: 1.45, brightness: -25.0, rotation_deg: -4.0, background: 18.0 },
                    ShiftSpec { contrast: 0.75, brightness: 25.0, rotation_deg: 2.5, background: 65.0 },
                ];
                (0..num_domains)
                    .map(|d| {
                        let base = table[d % table.len()];
                        // Past the table, nudge so extra domains stay distinct.
                        let extra = (d / table.len()) as f64;
                        ShiftSpec {
                            contrast: base.contrast + 0.08 * extra,
                            brightness: base.brightness - 9.0 * extra,
                            rotation_deg: base.rotation_deg + 1.5 * extra,
                            background: base.background + 6.0 * extra,
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(ShiftPreset::Default),
            "identity" => Ok(ShiftPreset::Identity),
            other => Err(Error::Config(format!(
                "unknown shift preset {other:?} (expected default or identity)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShiftPreset::Default => "default",
            ShiftPreset::Identity => "identity",
        }
    }
}

// ── Synthetic generation ────────────────────────────────────────────

/// Renders one glyph as raw 0..255 grayscale, already shifted for its
/// domain. Draw order from `rng` is part of the format: angle, center,
/// width, amplitude, then per-pixel noise.
fn render_raw(
    rng: &mut impl Rng,
    class: usize,
    num_classes: usize,
    size: usize,
    shift: &ShiftSpec,
) -> Vec<f64> {
    let theta = class as f64 * PI / num_classes as f64
        + rng.gen_range(-0.055..0.055)
        + shift.rotation_deg.to_radians();
    let cx = rng.gen_range(-0.10..0.10);
    let cy = rng.gen_range(-0.10..0.10);
    let width = 0.13 * rng.gen_range(0.85..1.2);
    let amp = 150.0 * rng.gen_range(0.85..1.15);
    let (dir_x, dir_y) = (theta.cos(), theta.sin());

    let mut pixels = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let u = (j as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let v = (i as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let (du, dv) = (u - cx, v - cy);
            let d_perp = -dir_y * du + dir_x * dv;
            let d_par = dir_x * du + dir_y * dv;
            let glyph = amp
                * (-(d_perp / width).powi(2)).exp()
                * (-(d_par / 0.62).powi(4)).exp();
            let noise = rng.gen_range(-12.0..12.0);
            let value = shift.background
                + shift.brightness
                + shift.contrast * (glyph + noise);
            pixels.push(value.clamp(0.0, 255.0));
        }
    }
    pixels
}

/// Generates one synthetic dataset per domain. Domains may have different
/// per-class counts (to exercise the sampler); every dataset is split
/// 80/20 stratified per class. Deterministic per seed.
pub fn generate_synthetic(
    num_domains: usize,
    num_classes: usize,
    per_class: &[usize],
    image_size: usize,
    shifts: &[ShiftSpec],
    master_seed: u64,
) -> Result<Vec<DomainDataset>> {
    if num_domains < 2 {
        return Err(Error::Config(format!("need ≥ 2 domains, got {num_domains}")));
    }
    if num_classes < 2 {
        return Err(Error::Config(format!("need ≥ 2 classes, got {num_classes}")));
    }
    if per_class.len() != num_domains {
        return Err(Error::Config(format!(
            "per_class has {} entries for {num_domains} domains",
            per_class.len()
        )));
    }
    if let Some(&low) = per_class.iter().find(|&&n| n < 4) {
        return Err(Error::Config(format!("per_class must be ≥ 4, got {low}")));
    }
    if shifts.len() != num_domains {
        return Err(Error::Config(format!(
            "shifts has {} entries for {num_domains} domains",
            shifts.len()
        )));
    }
    if image_size < 8 {
        return Err(Error::Config(format!("image_size must be ≥ 8, got {image_size}")));
    }

    let mut datasets = Vec::with_capacity(num_domains);
    for domain in 0..num_domains {
        let mut rng = seed::rng(seed::split(master_seed, &format!("data/domain{domain}")));
        let mut samples = Vec::with_capacity(num_classes * per_class[domain]);
        for class in 0..num_classes {
            for _ in 0..per_class[domain] {
                let raw = render_raw(&mut rng, class, num_classes, image_size, &shifts[domain]);
                let image = preprocess(
                    &RawImage { width: image_size, height: image_size, channels: 1, data: raw },
                    image_size,
                )?;
                samples.push(Sample { image, class_label: class, domain_label: domain });
            }
        }
        let (train_indices, val_indices) = stratified_split(
            &samples,
            num_classes,
            seed::split(master_seed, &format!("split/domain{domain}")),
        );
        datasets.push(DomainDataset { domain_label: domain, samples, train_indices, val_indices });
    }
    Ok(datasets)
}

/// 80/20 split, stratified per class: each class contributes
/// round(0.2·count) validation samples. Deterministic per seed.
fn stratified_split(
    samples: &[Sample],
    num_classes: usize,
    split_seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(split_seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..num_classes {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class_label == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let val_count = (0.2 * idx.len() as f64).round() as usize;
        val.extend(idx.drain(..val_count));
        train.extend(idx);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

// ── Preprocessing ───────────────────────────────────────────────────

/// Raw image with 0..255 values, planar channel-major layout.
#[derive(Debug, Clone)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// The preprocessing chain: channel-average grayscale, deterministic
/// center square crop (the face-detection stub), bilinear rescale to
/// `target_size`, then the affine map from [0,255] to [−1,1].
pub fn preprocess(raw: &RawImage, target_size: usize) -> Result<Tensor> {
    if raw.channels == 0 || raw.width == 0 || raw.height == 0 {
        return Err(Error::Input("empty raw image".into()));
    }
    if raw.data.len() != raw.channels * raw.width * raw.height {
        return Err(Error::Input(format!(
            "raw image claims {}×{}×{} but holds {} values",
            raw.channels,
            raw.height,
            raw.width,
            raw.data.len()
        )));
    }
    let side = raw.width.min(raw.height);
    if side < target_size {
        return Err(Error::Input(format!(
            "image {}×{} smaller than the {target_size}×{target_size} crop",
            raw.height, raw.width
        )));
    }
    let plane = raw.width * raw.height;

    // Grayscale by channel average, then center crop to side×side.
    let top = (raw.height - side) / 2;
    let left = (raw.width - side) / 2;
    let mut gray = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            let src = (top + i) * raw.width + (left + j);
            let mut acc = 0.0;
            for ch in 0..raw.channels {
                acc += raw.data[ch * plane + src];
            }
            gray[i * side + j] = acc / raw.channels as f64;
        }
    }

    // Bilinear rescale (half-pixel centers) to target_size.
    let scale = side as f64 / target_size as f64;
    let mut out = vec![0.0; target_size * target_size];
    for i in 0..target_size {
        let y = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(side - 1);
        let fy = y - y0 as f64;
        for j in 0..target_size {
            let x = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(side - 1);
            let fx = x - x0 as f64;
            out[i * target_size + j] = gray[y0 * side + x0] * (1.0 - fy) * (1.0 - fx)
                + gray[y0 * side + x1] * (1.0 - fy) * fx
                + gray[y1 * side + x0] * fy * (1.0 - fx)
                + gray[y1 * side + x1] * fy * fx;
        }
    }

    // [0,255] → [−1,1].
    for v in &mut out {
        *v = 2.0 * *v / 255.0 - 1.0;
    }
    Tensor::new(vec![1, target_size, target_size], out)
}

// ── Aggregated batches ──────────────────────────────────────────────

/// One training step's data: equal-size per-domain mini-batches
/// concatenated in domain order.
#[derive(Debug, Clone)]
pub struct AggregatedBatch {
    /// `(D·m)×1×s×s` images.
    pub images: Tensor,
    pub class_labels: Vec<usize>,
    pub domain_labels: Vec<usize>,
    /// True where the sample comes from the source domain.
    pub source_mask: Vec<bool>,
}

impl AggregatedBatch {
    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    pub fn num_source(&self) -> usize {
        self.source_mask.iter().filter(|&&m| m).count()
    }
}

/// Builds one epoch of aggregated batches.
///
/// Steps per epoch = ⌈max_d |train_d| / m⌉. Every domain is shuffled
/// per-epoch and cycled (reshuffled on each wrap) until it fills every
/// step, so shorter domains are exploited several times to keep the
/// inter-domain balance. Deterministic per `epoch_seed`.
pub fn make_epoch<D: std::borrow::Borrow<DomainDataset>>(
    datasets: &[D],
    per_domain: usize,
    source_domain: usize,
    epoch_seed: u64,
) -> Result<Vec<AggregatedBatch>> {
    let datasets: Vec<&DomainDataset> = datasets.iter().map(|d| d.borrow()).collect();
    if per_domain == 0 {
        return Err(Error::Config("per-domain batch size must be ≥ 1".into()));
    }
    if datasets.is_empty() {
        return Err(Error::Data("no datasets".into()));
    }
    for ds in &datasets {
        if ds.train_indices.is_empty() {
            return Err(Error::Data(format!("domain {} has an empty train split", ds.domain_label)));
        }
    }
    let longest = datasets.iter().map(|d| d.train_indices.len()).max().unwrap();
    let steps = longest.div_ceil(per_domain);
    let need = steps * per_domain;

    // Per-domain index streams, cycled with a fresh permutation per wrap.
    let streams: Vec<Vec<usize>> = datasets
        .iter()
        .map(|ds| {
            let mut stream = Vec::with_capacity(need);
            let mut cycle = 0u32;
            while stream.len() < need {
                let mut idx = ds.train_indices.clone();
                let mut rng = seed::rng(seed::split(
                    epoch_seed,
                    &format!("domain{}/cycle{cycle}", ds.domain_label),
                ));
                idx.shuffle(&mut rng);
                stream.extend(idx);
                cycle += 1;
            }
            stream.truncate(need);
            stream
        })
        .collect();

    let shape = datasets[0].samples[0].image.shape().to_vec();
    let image_len: usize = shape.iter().product();
    let rows = datasets.len() * per_domain;

    let mut batches = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut images = Vec::with_capacity(rows * image_len);
        let mut class_labels = Vec::with_capacity(rows);
        let mut domain_labels = Vec::with_capacity(rows);
        let mut source_mask = Vec::with_capacity(rows);
        for (&ds, stream) in datasets.iter().zip(&streams) {
            for &idx in &stream[step * per_domain..(step + 1) * per_domain] {
                let sample = &ds.samples[idx];
                if sample.image.shape() != shape.as_slice() {
                    return Err(Error::dim(
                        "make_epoch",
                        format!("sample shape {:?} vs {:?}", sample.image.shape(), shape),
                    ));
                }
                images.extend_from_slice(sample.image.data());
                class_labels.push(sample.class_label);
                domain_labels.push(ds.domain_label);
                source_mask.push(ds.domain_label == source_domain);
            }
        }
        let mut full_shape = vec![rows];
        full_shape.extend_from_slice(&shape);
        batches.push(AggregatedBatch {
            images: Tensor::new(full_shape, images)?,
            class_labels,
            domain_labels,
            source_mask,
        });
    }
    Ok(batches)
}

// ── On-disk layout ──────────────────────────────────────────────────

/// Top-level `meta.json` of a dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub num_domains: usize,
    pub num_classes: usize,
    pub image_size: usize,
    pub seed: u64,
    pub shift_preset: String,
    pub per_class: Vec<usize>,
}

/// Per-domain `meta.json`: counts, labels, split, seed, and shift spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainMeta {
    pub domain_label: usize,
    pub image_size: usize,
    pub num_samples: usize,
    pub class_labels: Vec<usize>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub shift: ShiftSpec,
    pub seed: u64,
}

/// Writes `meta.json` plus one `domain<d>/` directory per domain, each
/// holding its own `meta.json` and an `images` tensor in the binary
/// container format.
pub fn save_datasets(
    dir: &Path,
    datasets: &[DomainDataset],
    meta: &DatasetMeta,
    shifts: &[ShiftSpec],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("meta.json"), meta)?;
    for ds in datasets {
        let ddir = dir.join(format!("domain{}", ds.domain_label));
        std::fs::create_dir_all(&ddir)?;
        let s = meta.image_size;
        let n = ds.samples.len();
        let mut images = Vec::with_capacity(n * s * s);
        for sample in &ds.samples {
            images.extend_from_slice(sample.image.data());
        }
        let mut tensors = BTreeMap::new();
        tensors.insert("images".to_string(), Tensor::new(vec![n, 1, s, s], images)?);
        format::write_tensors(&ddir.join("samples.grda"), &tensors)?;
        let dmeta = DomainMeta {
            domain_label: ds.domain_label,
            image_size: s,
            num_samples: n,
            class_labels: ds.samples.iter().map(|x| x.class_label).collect(),
            train_indices: ds.train_indices.clone(),
            val_indices: ds.val_indices.clone(),
            shift: shifts[ds.domain_label],
            seed: meta.seed,
        };
        write_json(&ddir.join("meta.json"), &dmeta)?;
    }
    Ok(())
}

pub fn load_datasets(dir: &Path) -> Result<(DatasetMeta, Vec<DomainDataset>)> {
    let meta: DatasetMeta = read_json(&dir.join("meta.json"))?;
    let mut datasets = Vec::with_capacity(meta.num_domains);
    for domain in 0..meta.num_domains {
        let ddir = dir.join(format!("domain{domain}"));
        let dmeta: DomainMeta = read_json(&ddir.join("meta.json"))?;
        let tensors = format::read_tensors(&ddir.join("samples.grda"))?;
        let images = tensors
            .get("images")
            .ok_or_else(|| Error::Format(format!("domain{domain}: no images tensor")))?;
        let s = meta.image_size;
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != s || shape[3] != s {
            return Err(Error::Format(format!(
                "domain{domain}: images shape {shape:?}, expected [n, 1, {s}, {s}]"
            )));
        }
        let n = shape[0];
        if dmeta.class_labels.len() != n || dmeta.num_samples != n {
            return Err(Error::Format(format!(
                "domain{domain}: {n} images vs {} labels",
                dmeta.class_labels.len()
            )));
        }
        let plane = s * s;
        let samples = (0..n)
            .map(|i| {
                let data = images.data()[i * plane..(i + 1) * plane].to_vec();
                Ok(Sample {
                    image: Tensor::new(vec![1, s, s], data)?,
                    class_label: dmeta.class_labels[i],
                    domain_label: domain,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for &idx in dmeta.train_indices.iter().chain(&dmeta.val_indices) {
            if idx >= n {
                return Err(Error::Format(format!("domain{domain}: split index {idx} ≥ {n}")));
            }
        }
        datasets.push(DomainDataset {
            domain_label: domain,
            samples,
            train_indices: dmeta.train_indices,
            val_indices: dmeta.val_indices,
        });
    }
    Ok((meta, datasets))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
