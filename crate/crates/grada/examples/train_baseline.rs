//! Trains the baseline classifier on the source domain only and reports
//! per-domain validation accuracy — the transfer gap the other protocols
//! try to close.
//!
//! ```bash
//! cargo run --example train_baseline
//! ```

use grada::data::{generate_synthetic, ShiftPreset};
use grada::model::ModelConfig;
use grada::train::{run_protocol, Protocol, TrainConfig};

fn main() {
    let datasets =
        generate_synthetic(4, 7, &[12; 4], 16, &ShiftPreset::Default.shifts(4), 101).unwrap();
    let model = ModelConfig::default_for(16, 7, 4).unwrap();
    let config = TrainConfig {
        protocol: Protocol::Baseline,
        epochs: 40,
        batch_per_domain: 4,
        learning_rate: 0.03,
        source_domain: 0,
        active_domains: vec![0], // source only; joint training would list more
        alpha: 10.0,
        clamp: 5.0,
        seed: 1,
        eval_every: 10,
    };
    let result = run_protocol(&model, &config, &datasets, None).unwrap();

    println!("validation accuracy per epoch:");
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "epoch", "domain0", "domain1", "domain2", "domain3");
    let epochs: Vec<u64> = {
        let mut e: Vec<u64> = result.metrics.iter().map(|m| m.epoch).collect();
        e.dedup();
        e
    };
    for epoch in epochs {
        let acc = |d: usize| {
            result
                .metrics
                .iter()
                .find(|m| m.epoch == epoch && m.domain == d)
                .unwrap()
                .accuracy
        };
        println!(
            "{epoch:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            acc(0),
            acc(1),
            acc(2),
            acc(3)
        );
    }
    println!("\nsource-only training leaves shifted domains behind: that gap is the");
    println!("domain-adaptation problem (see train_da and finetune_forgetting).");
}
