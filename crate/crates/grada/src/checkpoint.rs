//! Model checkpoints: topology, parameters, schedule progress, and a
//! fingerprint of the run config, all carried in the named-tensor
//! container so a round trip is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format;
use crate::model::{ModelConfig, ModelParams};
use crate::schedule::ScheduleState;
use crate::tensor::Tensor;

/// Everything needed to resume or evaluate a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub params: ModelParams,
    /// Optimizer slots. Plain SGD carries none; the section exists so a
    /// stateful optimizer can ride along without a format change.
    pub optimizer: BTreeMap<String, Tensor>,
    pub schedule: ScheduleState,
    pub epochs_completed: u64,
    /// Protocol code of the producing run (0 baseline, 1 finetune, 2 da);
    /// evaluation uses it to report the λ the run was logging.
    pub protocol_code: u8,
    /// FNV-1a of the resolved train-config JSON.
    pub config_fingerprint: u64,
}

const KEY_CONFIG: &str = "meta/config";
const KEY_CHANNELS: &str = "meta/conv_channels";
const KEY_SCHEDULE: &str = "meta/schedule";
const KEY_EPOCH: &str = "meta/epoch";
const KEY_PROTOCOL: &str = "meta/protocol";
const KEY_FINGERPRINT: &str = "meta/fingerprint";

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let mut tensors = BTreeMap::new();
    let c = &checkpoint.model_config;
    tensors.insert(
        KEY_CONFIG.to_string(),
        Tensor::new(
            vec![6],
            vec![
                c.input_size as f64,
                c.tap_width as f64,
                c.hidden_width as f64,
                c.num_classes as f64,
                c.num_domains as f64,
                c.leaky_slope,
            ],
        )?,
    );
    tensors.insert(
        KEY_CHANNELS.to_string(),
        Tensor::new(
            vec![c.conv_channels.len()],
            c.conv_channels.iter().map(|&x| x as f64).collect(),
        )?,
    );
    let s = &checkpoint.schedule;
    tensors.insert(
        KEY_SCHEDULE.to_string(),
        Tensor::new(
            vec![4],
            vec![s.step as f64, s.total_steps as f64, s.alpha, s.clamp],
        )?,
    );
    tensors.insert(
        KEY_EPOCH.to_string(),
        Tensor::new(vec![1], vec![checkpoint.epochs_completed as f64])?,
    );
    tensors.insert(
        KEY_PROTOCOL.to_string(),
        Tensor::new(vec![1], vec![checkpoint.protocol_code as f64])?,
    );
    let fp = checkpoint.config_fingerprint;
    tensors.insert(
        KEY_FINGERPRINT.to_string(),
        Tensor::new(vec![2], vec![(fp >> 32) as f64, (fp & 0xffff_ffff) as f64])?,
    );
    for (name, tensor) in checkpoint.params.iter() {
        tensors.insert(format!("param/{name}"), tensor.clone());
    }
    for (name, tensor) in &checkpoint.optimizer {
        tensors.insert(format!("opt/{name}"), tensor.clone());
    }
    format::write_tensors(path, &tensors)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let tensors = format::read_tensors(path)?;
    let get = |key: &str| {
        tensors
            .get(key)
            .ok_or_else(|| Error::Format(format!("checkpoint missing {key}")))
    };

    let config_vec = get(KEY_CONFIG)?;
    if config_vec.numel() != 6 {
        return Err(Error::Format(format!(
            "{KEY_CONFIG} has {} entries, expected 6",
            config_vec.numel()
        )));
    }
    let cd = config_vec.data();
    let channels = get(KEY_CHANNELS)?;
    let model_config = ModelConfig {
        input_size: as_count(cd[0], "input_size")?,
        conv_channels: channels
            .data()
            .iter()
            .map(|&v| as_count(v, "conv channel"))
            .collect::<Result<Vec<_>>>()?,
        tap_width: as_count(cd[1], "tap_width")?,
        hidden_width: as_count(cd[2], "hidden_width")?,
        num_classes: as_count(cd[3], "num_classes")?,
        num_domains: as_count(cd[4], "num_domains")?,
        leaky_slope: cd[5],
    };
    model_config.validate()?;

    let sched_vec = get(KEY_SCHEDULE)?;
    if sched_vec.numel() != 4 {
        return Err(Error::Format(format!(
            "{KEY_SCHEDULE} has {} entries, expected 4",
            sched_vec.numel()
        )));
    }
    let sd = sched_vec.data();
    let schedule = ScheduleState {
        step: as_count(sd[0], "schedule step")? as u64,
        total_steps: as_count(sd[1], "schedule total_steps")? as u64,
        alpha: sd[2],
        clamp: sd[3],
    };
    schedule.validate()?;

    let epochs_completed = as_count(get(KEY_EPOCH)?.data()[0], "epoch")? as u64;
    let protocol_code = as_count(get(KEY_PROTOCOL)?.data()[0], "protocol code")?;
    if protocol_code > 2 {
        return Err(Error::Format(format!("unknown protocol code {protocol_code}")));
    }
    let protocol_code = protocol_code as u8;

    let fp_vec = get(KEY_FINGERPRINT)?;
    if fp_vec.numel() != 2 {
        return Err(Error::Format("malformed fingerprint".into()));
    }
    let config_fingerprint =
        ((fp_vec.data()[0] as u64) << 32) | (fp_vec.data()[1] as u64 & 0xffff_ffff);

    let mut params = BTreeMap::new();
    let mut optimizer = BTreeMap::new();
    for (name, tensor) in &tensors {
        if let Some(p) = name.strip_prefix("param/") {
            params.insert(p.to_string(), tensor.clone());
        } else if let Some(o) = name.strip_prefix("opt/") {
            optimizer.insert(o.to_string(), tensor.clone());
        } else if !name.starts_with("meta/") {
            return Err(Error::Format(format!("unexpected checkpoint tensor {name}")));
        }
    }
    let params = ModelParams::from_map(params);
    params.check_shapes(&model_config)?;

    Ok(Checkpoint {
        model_config,
        params,
        optimizer,
        schedule,
        epochs_completed,
        protocol_code,
        config_fingerprint,
    })
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 0.0 || v > 2f64.powi(52) {
        return Err(Error::Format(format!("{what} is not a valid count: {v}")));
    }
    Ok(v as usize)
}

/// FNV-1a over arbitrary bytes, for config fingerprints.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
