//! Shows what the gradient-reversal operator does: nothing on the way
//! forward, an exact sign flip on the way back.
//!
//! ```bash
//! cargo run --example gradient_reversal
//! ```

use grada::autodiff::Tape;
use grada::tensor::Tensor;

fn main() {
    // Forward: bit-identical pass-through.
    let mut tape = Tape::new();
    let x = tape.input(Tensor::new(vec![1, 3], vec![0.3, -1.2, 7.5]).unwrap());
    let y = tape.grad_reverse(x);
    println!("forward:  {:?} -> {:?}", tape.value(x).data(), tape.value(y).data());
    assert!(tape.value(y).bits_eq(tape.value(x)));

    // Backward: d/dx sum(grad_reverse(x)·x₀ᵀ-style weighted readout) is the
    // negation of the same graph without the operator.
    let grad_with = |reverse: bool| {
        let mut tape = Tape::new();
        let x = tape.param("x", Tensor::new(vec![1, 1], vec![3.0]).unwrap());
        let g = if reverse { tape.grad_reverse(x) } else { x };
        let sq = tape.matmul(g, g).unwrap(); // x²
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        grads.get("x").unwrap().data()[0]
    };
    let plain = grad_with(false);
    let reversed = grad_with(true);
    println!("d/dx x²              at x=3: {plain}");
    println!("d/dx GradRev(x)²     at x=3: {reversed}");
    assert_eq!(plain, 6.0);
    assert_eq!(reversed, -6.0);
    println!("backward gradient is multiplied by -1 exactly");
}
