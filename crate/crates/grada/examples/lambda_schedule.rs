//! Prints the λ ramp and demonstrates scheduled clamping of per-sample
//! domain losses.
//!
//! ```bash
//! cargo run --example lambda_schedule
//! ```

use grada::schedule::{clamp_domain_loss, combine_losses, factor, ScheduleState};
use grada::tensor::Tensor;

fn main() {
    let total_steps = 1000;
    let clamp = 5.0;
    println!("λ(n) = 2/(1+exp(-α·n/N)) - 1 with α = 10, N = {total_steps}");
    println!("{:>6} {:>8} {:>10} {:>10}", "n", "n/N", "lambda", "ceiling");
    for pct in (0..=100).step_by(10) {
        let state = ScheduleState {
            step: total_steps * pct / 100,
            total_steps,
            alpha: 10.0,
            clamp,
        };
        let lambda = factor(&state).unwrap();
        println!(
            "{:>6} {:>8.2} {:>10.6} {:>10.6}",
            state.step,
            state.step as f64 / total_steps as f64,
            lambda,
            state.ceiling().unwrap()
        );
    }

    // Clamping acts per sample, before any averaging.
    let losses = Tensor::new(vec![5], vec![0.4, 1.2, 2.8, 9.0, 0.0]).unwrap();
    let state = ScheduleState { step: 300, total_steps, alpha: 10.0, clamp };
    let ceiling = state.ceiling().unwrap();
    let clamped = clamp_domain_loss(&losses, &state).unwrap();
    println!("\nper-sample domain losses {:?}", losses.data());
    println!("ceiling at n=300: {ceiling:.4}");
    println!("after clamping:          {:?}", clamped.data());

    let lambda = factor(&state).unwrap();
    let l_dmn = clamped.data().iter().sum::<f64>() / clamped.numel() as f64;
    println!("\ncombined: L = L_CLF + λ·L_DMN = {:.6}", combine_losses(1.5, l_dmn, lambda));
}
