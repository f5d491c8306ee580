//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured margins. Finite-difference oracles here are written
//! independently of the library's backward implementations.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use grada::autodiff::{NodeId, Tape};
use grada::checkpoint::{load_checkpoint, save_checkpoint};
use grada::data::{generate_synthetic, make_epoch, DomainDataset, ShiftPreset, Split};
use grada::model::{
    forward_with_path, init_params, DomainPath, ModelConfig, ModelParams,
};
use grada::schedule::{clamp_domain_loss, combine_losses, factor, ScheduleState};
use grada::seed;
use grada::tensor::Tensor;
use grada::train::{
    domain_probe_accuracy, evaluate, run_protocol, train_step, Protocol, TrainConfig,
};
use grada::Error;

const GRAD_TOL: f64 = 1e-6;
const FD_EPS: f64 = 1e-5;

fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / (fd.abs() + 1e-8)
}

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Central finite difference of a scalar function over flat input slots,
/// checked against the provided analytic gradients.
fn fd_check(
    label: &str,
    f: &dyn Fn(&[Vec<f64>]) -> f64,
    inputs: &[Vec<f64>],
    analytic: &[Vec<f64>],
) {
    for (slot, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[slot][i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[slot][i] -= FD_EPS;
            let fd = (f(&plus) - f(&minus)) / (2.0 * FD_EPS);
            let ad = analytic[slot][i];
            assert!(
                rel_err(ad, fd) <= GRAD_TOL,
                "{label}: slot {slot} index {i}: autodiff {ad} vs finite difference {fd}"
            );
        }
    }
}

/// Weighted scalar readout Σ wᵢ·outᵢ so every output position is probed.
fn weighted_scalar(tape: &mut Tape, out: NodeId, weights: &[f64]) -> NodeId {
    let n = tape.value(out).numel();
    let flat = tape.reshape(out, &[1, n]).unwrap();
    let w = tape.input(Tensor::new(vec![n, 1], weights.to_vec()).unwrap());
    let prod = tape.matmul(flat, w).unwrap();
    tape.sum(prod)
}

fn grad_of(tape: &Tape, loss: NodeId, node: NodeId) -> Vec<f64> {
    tape.backward_values(loss).unwrap()[node.index()]
        .as_ref()
        .expect("gradient reaches the probed node")
        .data()
        .to_vec()
}

// ── Criterion 1: gradient correctness ───────────────────────────────

#[test]
fn c01_gradient_correctness() {
    let started = Instant::now();
    for seed_idx in 0..20u64 {
        per_op_gradients(seed_idx);
        full_model_gradients(seed_idx);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "gradient sweep took {elapsed:?}, budget is one minute"
    );
    println!(
        "[PASS] criterion 1: per-op and full-model gradients within {GRAD_TOL:e} of central differences over 20 seeds ({elapsed:?})"
    );
}

fn per_op_gradients(seed_idx: u64) {
    let mut rng = seed::rng(seed::split(seed_idx, "acceptance/ops"));

    // matmul
    let a0 = uniform(&mut rng, 6);
    let b0 = uniform(&mut rng, 12);
    let w = uniform(&mut rng, 8);
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let a = tape.input(Tensor::new(vec![2, 3], inp[0].clone()).unwrap());
            let b = tape.input(Tensor::new(vec![3, 4], inp[1].clone()).unwrap());
            let out = tape.matmul(a, b).unwrap();
            let loss = weighted_scalar(&mut tape, out, &w);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let a = tape.input(Tensor::new(vec![2, 3], a0.clone()).unwrap());
        let b = tape.input(Tensor::new(vec![3, 4], b0.clone()).unwrap());
        let out = tape.matmul(a, b).unwrap();
        let loss = weighted_scalar(&mut tape, out, &w);
        let (ga, gb) = (grad_of(&tape, loss, a), grad_of(&tape, loss, b));
        fd_check("matmul", &run, &[a0, b0], &[ga, gb]);
    }

    // conv2d (x, kernel, bias)
    let x0 = uniform(&mut rng, 2 * 16);
    let k0 = uniform(&mut rng, 2 * 9);
    let bias0 = uniform(&mut rng, 2);
    let wc = uniform(&mut rng, 2 * 2 * 16);
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::new(vec![2, 1, 4, 4], inp[0].clone()).unwrap());
            let k = tape.input(Tensor::new(vec![2, 1, 3, 3], inp[1].clone()).unwrap());
            let b = tape.input(Tensor::new(vec![2], inp[2].clone()).unwrap());
            let out = tape.conv2d(x, k, b).unwrap();
            let loss = weighted_scalar(&mut tape, out, &wc);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![2, 1, 4, 4], x0.clone()).unwrap());
        let k = tape.input(Tensor::new(vec![2, 1, 3, 3], k0.clone()).unwrap());
        let b = tape.input(Tensor::new(vec![2], bias0.clone()).unwrap());
        let out = tape.conv2d(x, k, b).unwrap();
        let loss = weighted_scalar(&mut tape, out, &wc);
        let grads = [grad_of(&tape, loss, x), grad_of(&tape, loss, k), grad_of(&tape, loss, b)];
        fd_check("conv2d", &run, &[x0, k0, bias0], &grads);
    }

    // maxpool2d — continuous random input keeps the check away from ties
    let xp = uniform(&mut rng, 16);
    let wp = uniform(&mut rng, 4);
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::new(vec![1, 1, 4, 4], inp[0].clone()).unwrap());
            let out = tape.maxpool2d(x).unwrap();
            let loss = weighted_scalar(&mut tape, out, &wp);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 1, 4, 4], xp.clone()).unwrap());
        let out = tape.maxpool2d(x).unwrap();
        let loss = weighted_scalar(&mut tape, out, &wp);
        let g = grad_of(&tape, loss, x);
        fd_check("maxpool2d", &run, &[xp], &[g]);
    }

    // leaky_relu — keep probes off the kink at 0
    let xr: Vec<f64> = uniform(&mut rng, 10)
        .into_iter()
        .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
        .collect();
    let wr = uniform(&mut rng, 10);
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::new(vec![2, 5], inp[0].clone()).unwrap());
            let out = tape.leaky_relu(x, 0.01);
            let loss = weighted_scalar(&mut tape, out, &wr);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![2, 5], xr.clone()).unwrap());
        let out = tape.leaky_relu(x, 0.01);
        let loss = weighted_scalar(&mut tape, out, &wr);
        let g = grad_of(&tape, loss, x);
        fd_check("leaky_relu", &run, &[xr], &[g]);
    }

    // concat
    let p0 = uniform(&mut rng, 6);
    let p1 = uniform(&mut rng, 4);
    let wcat = uniform(&mut rng, 10);
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let a = tape.input(Tensor::new(vec![2, 3], inp[0].clone()).unwrap());
            let b = tape.input(Tensor::new(vec![2, 2], inp[1].clone()).unwrap());
            let out = tape.concat(&[a, b]).unwrap();
            let loss = weighted_scalar(&mut tape, out, &wcat);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let a = tape.input(Tensor::new(vec![2, 3], p0.clone()).unwrap());
        let b = tape.input(Tensor::new(vec![2, 2], p1.clone()).unwrap());
        let out = tape.concat(&[a, b]).unwrap();
        let loss = weighted_scalar(&mut tape, out, &wcat);
        let grads = [grad_of(&tape, loss, a), grad_of(&tape, loss, b)];
        fd_check("concat", &run, &[p0, p1], &grads);
    }

    // log_softmax → nll chain
    let xl = uniform(&mut rng, 12);
    let targets = [2usize, 0, 3];
    let mask = [true, false, true];
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::new(vec![3, 4], inp[0].clone()).unwrap());
            let lp = tape.log_softmax(x).unwrap();
            let nll = tape.nll_loss(lp, &targets, &mask).unwrap();
            let loss = tape.sum(nll);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![3, 4], xl.clone()).unwrap());
        let lp = tape.log_softmax(x).unwrap();
        let nll = tape.nll_loss(lp, &targets, &mask).unwrap();
        let loss = tape.sum(nll);
        let g = grad_of(&tape, loss, x);
        fd_check("log_softmax+nll", &run, &[xl], &[g]);
    }

    // clamp_max — positive inputs, ceiling between them, probes off ties
    let xc: Vec<f64> = (0..8).map(|_| rng.gen_range(0.1..2.0)).collect();
    let ceiling = 1.0;
    {
        let run = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::new(vec![8], inp[0].clone()).unwrap());
            let out = tape.clamp_max(x, ceiling);
            let loss = tape.sum(out);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![8], xc.clone()).unwrap());
        let out = tape.clamp_max(x, ceiling);
        let loss = tape.sum(out);
        let g = grad_of(&tape, loss, x);
        fd_check("clamp_max", &run, &[xc], &[g]);
    }

    // grad_reverse: autodiff equals the negated finite difference of the
    // identity-substituted composite
    let xg = uniform(&mut rng, 4);
    let wg = uniform(&mut rng, 4);
    {
        let ident = |inp: &[Vec<f64>]| {
            let mut tape = Tape::new();
            let x = tape.input(Tensor::new(vec![1, 4], inp[0].clone()).unwrap());
            let loss = weighted_scalar(&mut tape, x, &wg);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 4], xg.clone()).unwrap());
        let rev = tape.grad_reverse(x);
        let loss = weighted_scalar(&mut tape, rev, &wg);
        let ad = grad_of(&tape, loss, x);
        for i in 0..4 {
            let mut plus = vec![xg.clone()];
            plus[0][i] += FD_EPS;
            let mut minus = vec![xg.clone()];
            minus[0][i] -= FD_EPS;
            let fd = (ident(&plus) - ident(&minus)) / (2.0 * FD_EPS);
            assert!(rel_err(ad[i], -fd) <= GRAD_TOL, "grad_reverse index {i}");
        }
    }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        input_size: 8,
        conv_channels: vec![2, 3],
        tap_width: 4,
        hidden_width: 5,
        num_classes: 7,
        num_domains: 4,
        leaky_slope: 0.01,
    }
}

/// The full composite loss L = L_CLF + λ·L_DMN on a 4-sample batch, with
/// the domain path wired as plain identity so the finite difference of
/// the forward function equals the analytic gradient. (The reversed
/// wiring is criterion 2's subject.)
#[allow(clippy::too_many_arguments)]
fn composite_loss_and_grads(
    config: &ModelConfig,
    params: &ModelParams,
    images: &Tensor,
    classes: &[usize],
    domains: &[usize],
    source_mask: &[bool],
    lambda: f64,
    ceiling: f64,
) -> (f64, grada::autodiff::Gradients) {
    let mut pass = forward_with_path(config, params, images, DomainPath::Direct).unwrap();
    let tape = &mut pass.tape;
    let clf_nll = tape.nll_loss(pass.clf_logprobs, classes, source_mask).unwrap();
    let clf_sum = tape.sum(clf_nll);
    let count = source_mask.iter().filter(|&&m| m).count();
    let l_clf = tape.scale(clf_sum, 1.0 / count as f64);
    let dmn_mask = vec![true; domains.len()];
    let dmn_nll = tape.nll_loss(pass.dmn_logprobs, domains, &dmn_mask).unwrap();
    let clamped = tape.clamp_max(dmn_nll, ceiling);
    let dmn_sum = tape.sum(clamped);
    let l_dmn = tape.scale(dmn_sum, 1.0 / domains.len() as f64);
    let weighted = tape.scale(l_dmn, lambda);
    let total = tape.add(l_clf, weighted).unwrap();
    let value = tape.value(total).item().unwrap();
    let grads = tape.backward(total).unwrap();
    (value, grads)
}

fn full_model_gradients(seed_idx: u64) {
    let config = small_model();
    let params = init_params(&config, seed::split(seed_idx, "acceptance/model-init")).unwrap();
    let mut rng = seed::rng(seed::split(seed_idx, "acceptance/model-batch"));
    let images = Tensor::new(vec![4, 1, 8, 8], uniform(&mut rng, 4 * 64)).unwrap();
    let classes = [3usize, 1, 6, 0];
    let domains = [0usize, 1, 2, 3];
    let source_mask = [true, false, false, true];
    // Mid-weight λ; ceiling far above any per-sample loss keeps the clamp
    // away from its kink.
    let (lambda, ceiling) = (0.7, 100.0);

    let (_, grads) = composite_loss_and_grads(
        &config, &params, &images, &classes, &domains, &source_mask, lambda, ceiling,
    );

    let loss_at = |p: &ModelParams| {
        composite_loss_and_grads(&config, p, &images, &classes, &domains, &source_mask, lambda, ceiling).0
    };

    for (name, tensor) in params.iter() {
        let analytic = grads.get(name).unwrap();
        for i in 0..tensor.numel() {
            let perturb = |delta: f64| {
                let mut map = BTreeMap::new();
                for (n, t) in params.iter() {
                    let mut data = t.data().to_vec();
                    if n == name {
                        data[i] += delta;
                    }
                    map.insert(n.clone(), Tensor::new(t.shape().to_vec(), data).unwrap());
                }
                ModelParams::from_map(map)
            };
            let fd = (loss_at(&perturb(FD_EPS)) - loss_at(&perturb(-FD_EPS))) / (2.0 * FD_EPS);
            let ad = analytic.data()[i];
            // The oracle itself carries rounding noise of roughly
            // ulp(loss)/(2·eps) ≈ 1e-10, so components smaller than
            // ~1e-4 cannot be certified to 1e-6 relative by any f64
            // central difference. Hold the relative bound wherever the
            // oracle can speak, and a 1e-9 absolute backstop (an order
            // above the noise floor, far below any real defect) below it.
            assert!(
                rel_err(ad, fd) <= GRAD_TOL || (ad - fd).abs() <= 1e-9,
                "full model seed {seed_idx}, {name}[{i}]: autodiff {ad} vs finite difference {fd}"
            );
        }
    }
}

// ── Criterion 2: gradient reversal ──────────────────────────────────

#[test]
fn c02_gradient_reversal() {
    // Forward identity is bit-exact.
    let mut rng = seed::rng(seed::split(2, "acceptance/grl"));
    for _ in 0..20 {
        let values = uniform(&mut rng, 32);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![4, 8], values).unwrap());
        let y = tape.grad_reverse(x);
        assert!(tape.value(y).bits_eq(tape.value(x)));
    }

    // Composed DMN path: reversed gradients equal the negation of the
    // identity-substituted path within 1e-10 absolute.
    let config = small_model();
    let params = init_params(&config, 900).unwrap();
    let images = Tensor::new(vec![4, 1, 8, 8], uniform(&mut rng, 4 * 64)).unwrap();
    let domains = [0usize, 1, 2, 3];

    let dmn_grads = |path: DomainPath| {
        let mut pass = forward_with_path(&config, &params, &images, path).unwrap();
        let tape = &mut pass.tape;
        let mask = vec![true; 4];
        let nll = tape.nll_loss(pass.dmn_logprobs, &domains, &mask).unwrap();
        let total = tape.sum(nll);
        let mean = tape.scale(total, 0.25);
        tape.backward(mean).unwrap()
    };
    let adv = dmn_grads(DomainPath::Adversarial);
    let dir = dmn_grads(DomainPath::Direct);
    let mut worst = 0.0f64;
    for (name, ga) in adv.iter() {
        let gd = dir.get(name).unwrap();
        if name.starts_with("f.") {
            for (a, d) in ga.data().iter().zip(gd.data()) {
                worst = worst.max((a + d).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "reversal mismatch {worst}");
    println!("[PASS] criterion 2: forward bit-identity and reversal negation (worst |g_rev + g_dir| = {worst:.2e})");
}

// ── Criterion 3: schedule ───────────────────────────────────────────

#[test]
fn c03_schedule_factor() {
    let state = |n: u64, total: u64| ScheduleState { step: n, total_steps: total, alpha: 10.0, clamp: 1.0 };
    assert_eq!(factor(&state(0, 10_000)).unwrap(), 0.0);

    let mid = factor(&state(5_000, 10_000)).unwrap();
    assert!((mid - 0.986614).abs() <= 1e-6, "λ(N/2) = {mid}");
    let end = factor(&state(10_000, 10_000)).unwrap();
    assert!((end - 0.999909).abs() <= 1e-6, "λ(N) = {end}");

    let mut prev = -1.0;
    for n in 0..=10_000u64 {
        let v = factor(&state(n, 10_000)).unwrap();
        assert!(v > prev, "not strictly increasing at n = {n}");
        prev = v;
    }
    println!("[PASS] criterion 3: λ(0) = 0 exactly, λ(N/2) ≈ 0.986614, λ(N) ≈ 0.999909, monotone on a 10,000-point grid");
}

// ── Criterion 4: clamping ───────────────────────────────────────────

#[test]
fn c04_clamping() {
    let mut rng = seed::rng(seed::split(4, "acceptance/clamp"));
    for trial in 0..200 {
        let n = rng.gen_range(1..=400u64);
        let state = ScheduleState {
            step: n.min(400),
            total_steps: 400,
            alpha: rng.gen_range(1.0..20.0),
            clamp: rng.gen_range(0.5..5000.0),
        };
        let losses = Tensor::new(vec![16], (0..16).map(|_| rng.gen_range(0.0..30.0)).collect()).unwrap();
        let once = clamp_domain_loss(&losses, &state).unwrap();
        let twice = clamp_domain_loss(&once, &state).unwrap();
        assert!(once.bits_eq(&twice), "trial {trial}: clamp not idempotent");
        let ceiling = state.clamp * factor(&state).unwrap();
        for &v in once.data() {
            assert!(v <= ceiling + 1e-12, "trial {trial}: {v} above ceiling {ceiling}");
        }
    }
    // λ = 0 forces zeros.
    let zero_state = ScheduleState { step: 0, total_steps: 100, alpha: 10.0, clamp: 5000.0 };
    let losses = Tensor::new(vec![4], vec![0.3, 11.0, 2.0, 0.0]).unwrap();
    let clamped = clamp_domain_loss(&losses, &zero_state).unwrap();
    assert!(clamped.data().iter().all(|&v| v == 0.0));
    println!("[PASS] criterion 4: per-sample cap ≤ clamp·λ(n)+1e-12, exact idempotence, λ=0 forces zeros");
}

// ── Criterion 5: sampler balance ────────────────────────────────────

#[test]
fn c05_sampler_balance() {
    let datasets: Vec<DomainDataset> = [12usize, 6, 4, 2]
        .iter()
        .enumerate()
        .map(|(domain, &n)| {
            let samples = (0..n)
                .map(|i| grada::data::Sample {
                    image: Tensor::full(&[1, 2, 2], (domain * 100 + i) as f64),
                    class_label: i % 7,
                    domain_label: domain,
                })
                .collect();
            DomainDataset {
                domain_label: domain,
                samples,
                train_indices: (0..n).collect(),
                val_indices: vec![],
            }
        })
        .collect();

    for epoch in 0..100u64 {
        let batches = make_epoch(&datasets, 2, 0, seed::split(55, &format!("epoch{epoch}"))).unwrap();
        assert_eq!(batches.len(), 6, "epoch length");
        let mut largest_seen = Vec::new();
        for batch in &batches {
            for domain in 0..4 {
                let count = batch.domain_labels.iter().filter(|&&d| d == domain).count();
                assert_eq!(count, 2, "epoch {epoch}: domain {domain} not balanced");
            }
            for (row, &domain) in batch.domain_labels.iter().enumerate() {
                if domain == 0 {
                    largest_seen.push(batch.images.data()[row * 4] as usize);
                }
            }
        }
        largest_seen.sort_unstable();
        assert_eq!(largest_seen, (0..12).collect::<Vec<_>>(), "epoch {epoch}: largest domain must appear exactly once");
    }
    println!("[PASS] criterion 5: 100 epochs × (12,6,4,2) at m=2: 6 steps, exact balance, largest domain covered exactly once per epoch");
}

// ── Criterion 6: λ≈0 protocol equivalence ───────────────────────────

#[test]
fn c06_lambda_zero_protocol_equivalence() {
    let model = ModelConfig {
        input_size: 8,
        conv_channels: vec![2],
        tap_width: 3,
        hidden_width: 4,
        num_classes: 7,
        num_domains: 4,
        leaky_slope: 0.01,
    };
    // Source (domain 0) is the largest so both protocols share epoch length.
    let datasets =
        generate_synthetic(4, 7, &[6, 5, 4, 4], 8, &ShiftPreset::Default.shifts(4), 606).unwrap();

    let da_cfg = TrainConfig {
        protocol: Protocol::Da,
        epochs: 0,
        batch_per_domain: 2,
        learning_rate: 1e-2,
        source_domain: 0,
        active_domains: vec![0, 1, 2, 3],
        alpha: 1e-9,
        clamp: 5.0,
        seed: 42,
        eval_every: 1,
    };
    let mut base_cfg = da_cfg.clone();
    base_cfg.protocol = Protocol::Baseline;
    base_cfg.active_domains = vec![0];

    let init = init_params(&model, seed::split(42, "init")).unwrap();
    let mut da_params = init.clone();
    let mut base_params = init;
    let mut da_state = ScheduleState::new(50, 1e-9, 5.0).unwrap();
    let mut base_state = ScheduleState::new(50, 1e-9, 5.0).unwrap();

    let shuffle_seed = seed::split(42, "shuffle");
    let mut steps_done = 0;
    let mut worst = 0.0f64;
    'epochs: for epoch in 1.. {
        let epoch_seed = seed::split(shuffle_seed, &format!("epoch{epoch}"));
        let da_batches = make_epoch(&datasets, 2, 0, epoch_seed).unwrap();
        let base_batches = make_epoch(&datasets[..1], 2, 0, epoch_seed).unwrap();
        for (db, bb) in da_batches.iter().zip(&base_batches) {
            let (dp, _) = train_step(&model, &da_params, db, &da_cfg, &mut da_state).unwrap();
            let (bp, _) = train_step(&model, &base_params, bb, &base_cfg, &mut base_state).unwrap();
            da_params = dp;
            base_params = bp;
            for (name, t) in da_params.iter() {
                let other = base_params.get(name).unwrap();
                for (a, b) in t.data().iter().zip(other.data()) {
                    worst = worst.max((a - b).abs());
                }
            }
            assert!(
                worst <= 1e-9,
                "step {steps_done}: parameter trajectories diverged by {worst}"
            );
            steps_done += 1;
            if steps_done == 50 {
                break 'epochs;
            }
        }
    }
    println!("[PASS] criterion 6: 50-step da(α→0) vs baseline trajectories agree (worst |Δ| = {worst:.2e})");
}

// ── Criterion 7: forgetting reproduction ────────────────────────────

fn desk_model(image_size: usize) -> ModelConfig {
    ModelConfig {
        input_size: image_size,
        conv_channels: vec![8, 16, 32],
        tap_width: 16,
        hidden_width: 32,
        num_classes: 7,
        num_domains: 4,
        leaky_slope: 0.01,
    }
}

#[test]
fn c07_forgetting_reproduction() {
    let started = Instant::now();
    let model = desk_model(16);
    let mut successes = 0;
    let mut lines = Vec::new();
    for seed_idx in 1..=5u64 {
        let datasets = generate_synthetic(
            4,
            7,
            &[12, 12, 12, 12],
            16,
            &ShiftPreset::Default.shifts(4),
            100 + seed_idx,
        )
        .unwrap();

        let base_cfg = TrainConfig {
            protocol: Protocol::Baseline,
            epochs: 40,
            batch_per_domain: 4,
            learning_rate: 0.03,
            source_domain: 0,
            active_domains: vec![0],
            alpha: 10.0,
            clamp: 5.0,
            seed: seed_idx,
            eval_every: 40,
        };
        let base = run_protocol(&model, &base_cfg, &datasets, None).unwrap();
        let pre = |domain: usize| {
            base.metrics
                .iter()
                .rev()
                .find(|m| m.domain == domain)
                .unwrap()
                .accuracy
        };
        let (pre_src, pre_tgt) = (pre(0), pre(1));

        let ft_cfg = TrainConfig {
            protocol: Protocol::Finetune,
            epochs: 50,
            batch_per_domain: 4,
            learning_rate: 0.06,
            source_domain: 0,
            active_domains: vec![1],
            alpha: 10.0,
            clamp: 5.0,
            seed: 200 + seed_idx,
            eval_every: 50,
        };
        let ft = run_protocol(&model, &ft_cfg, &datasets, Some(base.checkpoint)).unwrap();
        let post = |domain: usize| {
            ft.metrics.iter().rev().find(|m| m.domain == domain).unwrap().accuracy
        };
        let (post_src, post_tgt) = (post(0), post(1));

        let target_gain = post_tgt - pre_tgt;
        let source_drop = pre_src - post_src;
        let ok = target_gain >= 0.20 && source_drop >= 0.10;
        if ok {
            successes += 1;
        }
        lines.push(format!(
            "seed {seed_idx}: target {pre_tgt:.3} → {post_tgt:.3} (+{target_gain:.3}), source {pre_src:.3} → {post_src:.3} (−{source_drop:.3}){}",
            if ok { "" } else { "  [MISS]" }
        ));
    }
    for line in &lines {
        println!("  {line}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "forgetting sweep took {elapsed:?}");
    assert!(
        successes >= 4,
        "forgetting pattern held in only {successes}/5 seeds:\n{}",
        lines.join("\n")
    );
    println!(
        "[PASS] criterion 7: fine-tune raises target ≥ 20 pts and drops source ≥ 10 pts in {successes}/5 seeds ({elapsed:?})"
    );
}

// ── Criterion 8: adversarial effect ─────────────────────────────────

#[test]
fn c08_adversarial_effect() {
    let started = Instant::now();
    let model = desk_model(16);
    let chance = 0.25;
    let clf_floor = 1.0 / 7.0 + 0.30;
    let mut successes = 0;
    let mut improvements = Vec::new();
    let mut lines = Vec::new();
    for seed_idx in 1..=5u64 {
        let datasets = generate_synthetic(
            4,
            7,
            &[12, 12, 12, 12],
            16,
            &ShiftPreset::Default.shifts(4),
            300 + seed_idx,
        )
        .unwrap();

        let da_cfg = TrainConfig {
            protocol: Protocol::Da,
            epochs: 40,
            batch_per_domain: 4,
            learning_rate: 0.03,
            source_domain: 0,
            active_domains: vec![0, 1, 2, 3],
            alpha: 10.0,
            clamp: 5.0,
            seed: seed_idx,
            eval_every: 40,
        };
        // Domain identifiability of the features, measured through F by a
        // fresh probe head each time. (The model's own domain head is
        // untrained at epoch 0, so its accuracy starts pinned at chance
        // and says nothing about the features.)
        let probe = |params: &ModelParams| {
            domain_probe_accuracy(&model, params, &datasets, 250, 0.25, 4242).unwrap()
        };
        // The run derives its starting parameters from seed/"init"; rebuild
        // them to measure the untrained extractor.
        let init = init_params(&model, seed::split(da_cfg.seed, "init")).unwrap();
        let domain_acc_init = probe(&init);

        let run = run_protocol(&model, &da_cfg, &datasets, None).unwrap();
        let domain_acc_end = probe(&run.checkpoint.params);
        let src_acc = run
            .metrics
            .iter()
            .rev()
            .find(|m| m.domain == 0)
            .unwrap()
            .accuracy;

        let closer = (domain_acc_end - chance).abs() < (domain_acc_init - chance).abs();
        let ok = closer && src_acc >= clf_floor;
        if ok {
            successes += 1;
        }

        // Reported, not gated: target accuracy against a plain baseline.
        let base_cfg = TrainConfig {
            protocol: Protocol::Baseline,
            active_domains: vec![0],
            ..da_cfg.clone()
        };
        let base = run_protocol(&model, &base_cfg, &datasets, None).unwrap();
        let mean_target = |metrics: &[grada::train::MetricsRecord]| {
            let mut acc = 0.0;
            for d in 1..4 {
                acc += metrics.iter().rev().find(|m| m.domain == d).unwrap().accuracy;
            }
            acc / 3.0
        };
        improvements.push(mean_target(&run.metrics) - mean_target(&base.metrics));

        lines.push(format!(
            "seed {seed_idx}: domain probe {domain_acc_init:.3} → {domain_acc_end:.3} (chance {chance}), source clf {src_acc:.3}{}",
            if ok { "" } else { "  [MISS]" }
        ));
    }
    for line in &lines {
        println!("  {line}");
    }
    let mean_improvement = improvements.iter().sum::<f64>() / improvements.len() as f64;
    println!(
        "  reported (not gated): mean target-accuracy improvement over baseline = {mean_improvement:+.3}"
    );
    let elapsed = started.elapsed();
    assert!(
        successes >= 4,
        "adversarial effect held in only {successes}/5 seeds:\n{}",
        lines.join("\n")
    );
    println!(
        "[PASS] criterion 8: domain probe moves toward chance with source clf ≥ {clf_floor:.3} in {successes}/5 seeds ({elapsed:?})"
    );
}

// ── Criterion 9: determinism & formats ──────────────────────────────

#[test]
fn c09_determinism_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelConfig {
        input_size: 8,
        conv_channels: vec![2],
        tap_width: 3,
        hidden_width: 4,
        num_classes: 7,
        num_domains: 2,
        leaky_slope: 0.01,
    };
    let datasets =
        generate_synthetic(2, 7, &[6, 4], 8, &ShiftPreset::Default.shifts(2), 909).unwrap();
    let cfg = TrainConfig {
        protocol: Protocol::Da,
        epochs: 3,
        batch_per_domain: 3,
        learning_rate: 1e-2,
        source_domain: 0,
        active_domains: vec![0, 1],
        alpha: 10.0,
        clamp: 5.0,
        seed: 7,
        eval_every: 1,
    };

    let run_once = |csv: &str, ckpt: &str| {
        let result = run_protocol(&model, &cfg, &datasets, None).unwrap();
        grada::train::write_metrics_csv(&dir.path().join(csv), &result.metrics).unwrap();
        save_checkpoint(&result.checkpoint, &dir.path().join(ckpt)).unwrap();
    };
    run_once("a.csv", "a.grda");
    run_once("b.csv", "b.grda");
    let csv_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "metrics CSV not byte-identical");
    let ck_a = std::fs::read(dir.path().join("a.grda")).unwrap();
    let ck_b = std::fs::read(dir.path().join("b.grda")).unwrap();
    assert_eq!(ck_a, ck_b, "checkpoint not byte-identical");

    // Round trip is byte-identical.
    let loaded = load_checkpoint(&dir.path().join("a.grda")).unwrap();
    save_checkpoint(&loaded, &dir.path().join("c.grda")).unwrap();
    assert_eq!(ck_a, std::fs::read(dir.path().join("c.grda")).unwrap());

    // Corruption is rejected cleanly.
    let mut corrupt = ck_a.clone();
    corrupt[0] ^= 0xFF;
    std::fs::write(dir.path().join("bad.grda"), &corrupt).unwrap();
    assert!(matches!(
        load_checkpoint(&dir.path().join("bad.grda")),
        Err(Error::Format(_))
    ));
    std::fs::write(dir.path().join("trunc.grda"), &ck_a[..ck_a.len() / 3]).unwrap();
    assert!(matches!(
        load_checkpoint(&dir.path().join("trunc.grda")),
        Err(Error::Format(_))
    ));
    println!("[PASS] criterion 9: byte-identical reruns and round trips; corrupt checkpoints rejected");
}

// ── Criterion 10: loss ledger ───────────────────────────────────────

#[test]
fn c10_loss_ledger() {
    let model = ModelConfig {
        input_size: 8,
        conv_channels: vec![2],
        tap_width: 3,
        hidden_width: 4,
        num_classes: 7,
        num_domains: 3,
        leaky_slope: 0.01,
    };
    let datasets =
        generate_synthetic(3, 7, &[6, 5, 4], 8, &ShiftPreset::Default.shifts(3), 1010).unwrap();
    for protocol in [Protocol::Da, Protocol::Baseline] {
        let cfg = TrainConfig {
            protocol,
            epochs: 4,
            batch_per_domain: 2,
            learning_rate: 1e-2,
            source_domain: 0,
            active_domains: vec![0, 1, 2],
            alpha: 10.0,
            clamp: 5.0,
            seed: 13,
            eval_every: 2,
        };
        let result = run_protocol(&model, &cfg, &datasets, None).unwrap();
        assert!(!result.steps.is_empty());
        for rec in &result.steps {
            let expected = combine_losses(rec.clf_loss, rec.dmn_loss, rec.lambda);
            assert_eq!(
                rec.total_loss.to_bits(),
                expected.to_bits(),
                "{} step {}: logged total {} vs clf+λ·dmn {}",
                protocol.name(),
                rec.step,
                rec.total_loss,
                expected
            );
        }
        // Evaluation rows stay internally consistent too.
        for m in &result.metrics {
            assert!(m.accuracy >= 0.0 && m.accuracy <= 1.0);
            assert!(m.clf_loss >= 0.0 && m.dmn_loss >= 0.0);
        }
    }
    println!("[PASS] criterion 10: every logged step satisfies total = clf + λ·dmn bit-exactly");
}

// Sanity anchor for the two statistical criteria: evaluation works on the
// configs they use.
#[test]
fn desk_scale_evaluation_smoke() {
    let model = desk_model(16);
    let datasets =
        generate_synthetic(4, 7, &[4, 4, 4, 4], 16, &ShiftPreset::Default.shifts(4), 2).unwrap();
    let params = init_params(&model, 3).unwrap();
    let rec = evaluate(&model, &params, &datasets[0], Split::Val, 0, 0.0).unwrap();
    assert!(rec.accuracy >= 0.0 && rec.accuracy <= 1.0);
}
