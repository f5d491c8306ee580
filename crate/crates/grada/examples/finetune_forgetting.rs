//! Fine-tunes a source-trained model on one target domain and shows
//! catastrophic forgetting: the target soars, the source sinks.
//!
//! ```bash
//! cargo run --example finetune_forgetting
//! ```

use grada::data::{generate_synthetic, ShiftPreset};
use grada::model::ModelConfig;
use grada::train::{run_protocol, Protocol, TrainConfig};

fn main() {
    let datasets =
        generate_synthetic(4, 7, &[12; 4], 16, &ShiftPreset::Default.shifts(4), 103).unwrap();
    let model = ModelConfig::default_for(16, 7, 4).unwrap();

    let base_cfg = TrainConfig {
        protocol: Protocol::Baseline,
        epochs: 40,
        batch_per_domain: 4,
        learning_rate: 0.03,
        source_domain: 0,
        active_domains: vec![0],
        alpha: 10.0,
        clamp: 5.0,
        seed: 1,
        eval_every: 40,
    };
    let base = run_protocol(&model, &base_cfg, &datasets, None).unwrap();
    let last = |metrics: &[grada::train::MetricsRecord], d: usize| {
        metrics.iter().rev().find(|m| m.domain == d).unwrap().accuracy
    };
    let (pre_src, pre_tgt) = (last(&base.metrics, 0), last(&base.metrics, 1));
    println!("after source training:   source {pre_src:.3}, target {pre_tgt:.3}");

    let ft_cfg = TrainConfig {
        protocol: Protocol::Finetune,
        epochs: 50,
        batch_per_domain: 4,
        learning_rate: 0.06,
        source_domain: 0,
        active_domains: vec![1],
        alpha: 10.0,
        clamp: 5.0,
        seed: 2,
        eval_every: 50,
    };
    let ft = run_protocol(&model, &ft_cfg, &datasets, Some(base.checkpoint)).unwrap();
    let (post_src, post_tgt) = (last(&ft.metrics, 0), last(&ft.metrics, 1));
    println!("after target fine-tune:  source {post_src:.3}, target {post_tgt:.3}");
    println!(
        "\ntarget gained {:+.3}; source lost {:+.3} — the retrained classifier",
        post_tgt - pre_tgt,
        post_src - pre_src
    );
    println!("trades its original domain for the new one.");
}
