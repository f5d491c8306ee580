//! Projects latent vectors to 2-D for cluster inspection and writes the
//! x,y,class,domain CSV any plotter can consume.
//!
//! ```bash
//! cargo run --example project_latent
//! ```

use grada::data::{generate_synthetic, Sample, ShiftPreset};
use grada::model::ModelConfig;
use grada::projection::{project_latent, write_projection_csv};
use grada::train::{run_protocol, Protocol, TrainConfig};

fn main() {
    let datasets =
        generate_synthetic(4, 7, &[10; 4], 16, &ShiftPreset::Default.shifts(4), 107).unwrap();
    let model = ModelConfig::default_for(16, 7, 4).unwrap();
    let config = TrainConfig {
        protocol: Protocol::Baseline,
        epochs: 30,
        batch_per_domain: 4,
        learning_rate: 0.03,
        source_domain: 0,
        active_domains: vec![0],
        alpha: 10.0,
        clamp: 5.0,
        seed: 1,
        eval_every: 30,
    };
    let result = run_protocol(&model, &config, &datasets, None).unwrap();

    let samples: Vec<Sample> = datasets.iter().flat_map(|d| d.samples.iter().cloned()).collect();
    let projection =
        project_latent(&model, &result.checkpoint.params, &samples).unwrap();

    let path = std::env::temp_dir().join("grada-latent.csv");
    write_projection_csv(&path, &projection).unwrap();
    println!("{} samples projected to {}", projection.points.len(), path.display());

    // Quick look: per-class centroids of the trained latent space.
    println!("\nper-class centroids in the 2-D projection:");
    for class in 0..7 {
        let pts: Vec<&grada::projection::ProjectedPoint> =
            projection.points.iter().filter(|p| p.class_label == class).collect();
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
        println!("  class {class}: ({cx:+.3}, {cy:+.3})");
    }
    println!("\nplot the CSV (x,y colored by class or domain) to inspect clusters.");
}
