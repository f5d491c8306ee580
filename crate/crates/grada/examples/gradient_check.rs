//! Verifies the tape's gradients against central finite differences on a
//! small conv → pool → activation → softmax chain.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use grada::autodiff::Tape;
use grada::seed;
use grada::tensor::Tensor;
use rand::Rng;

fn loss_value(x: &[f64], kernel: &[f64], bias: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let xn = tape.input(Tensor::new(vec![1, 1, 4, 4], x.to_vec()).unwrap());
    let kn = tape.input(Tensor::new(vec![2, 1, 3, 3], kernel.to_vec()).unwrap());
    let bn = tape.input(Tensor::new(vec![2], bias.to_vec()).unwrap());
    let conv = tape.conv2d(xn, kn, bn).unwrap();
    let pooled = tape.maxpool2d(conv).unwrap();
    let act = tape.leaky_relu(pooled, 0.01);
    let flat = tape.reshape(act, &[1, 8]).unwrap();
    let logprobs = tape.log_softmax(flat).unwrap();
    let nll = tape.nll_loss(logprobs, &[3], &[true]).unwrap();
    let loss = tape.sum(nll);
    tape.value(loss).item().unwrap()
}

fn main() {
    let mut rng = seed::rng(7);
    let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let kernel: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // Analytic gradients from one backward pass.
    let mut tape = Tape::new();
    let xn = tape.param("x", Tensor::new(vec![1, 1, 4, 4], x.clone()).unwrap());
    let kn = tape.param("kernel", Tensor::new(vec![2, 1, 3, 3], kernel.clone()).unwrap());
    let bn = tape.param("bias", Tensor::new(vec![2], bias.clone()).unwrap());
    let conv = tape.conv2d(xn, kn, bn).unwrap();
    let pooled = tape.maxpool2d(conv).unwrap();
    let act = tape.leaky_relu(pooled, 0.01);
    let flat = tape.reshape(act, &[1, 8]).unwrap();
    let logprobs = tape.log_softmax(flat).unwrap();
    let nll = tape.nll_loss(logprobs, &[3], &[true]).unwrap();
    let loss = tape.sum(nll);
    println!("loss = {:.6}", tape.value(loss).item().unwrap());
    let grads = tape.backward(loss).unwrap();

    // Central differences, slot by slot.
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let slots: [(&str, &[f64]); 3] = [("x", &x), ("kernel", &kernel), ("bias", &bias)];
    for (name, values) in slots {
        let analytic = grads.get(name).unwrap().data();
        for i in 0..values.len() {
            let fd = {
                let mut plus = (x.clone(), kernel.clone(), bias.clone());
                let mut minus = plus.clone();
                let (pv, mv) = match name {
                    "x" => (&mut plus.0, &mut minus.0),
                    "kernel" => (&mut plus.1, &mut minus.1),
                    _ => (&mut plus.2, &mut minus.2),
                };
                pv[i] += eps;
                mv[i] -= eps;
                (loss_value(&plus.0, &plus.1, &plus.2) - loss_value(&minus.0, &minus.1, &minus.2))
                    / (2.0 * eps)
            };
            let rel = (analytic[i] - fd).abs() / (fd.abs() + 1e-8);
            worst = worst.max(rel);
        }
        println!("{name}: {} components checked", values.len());
    }
    println!("worst relative error vs central differences: {worst:.3e}");
    assert!(worst <= 1e-6);
    println!("autodiff agrees with the finite-difference oracle");
}
