//! Reverse-mode gradients of a tiny loss, compared with finite differences.

use relstm::params::{ParamId, ParamStore};
use relstm::tape::{Gradients, Tape};
use relstm::tensor::Matrix;

fn loss(store: &ParamStore, w: ParamId) -> relstm::Result<(f64, Gradients)> {
    let mut tape = Tape::new(store);
    let x = tape.constant(vec![0.5, -1.0, 2.0]);
    let z = tape.affine(w, x, None)?;
    let h = tape.tanh(z)?;
    let l = tape.neg_log_softmax(h, 1)?;
    let value = tape.value(l)?[0];
    Ok((value, tape.backward(l)?))
}

fn main() -> relstm::Result<()> {
    let mut store = ParamStore::new();
    let w = store.add("W", Matrix::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.0, -0.1])?, false)?;
    let (value, grads) = loss(&store, w)?;
    println!("loss {value:.6}");

    let step = 1e-5;
    for k in 0..6 {
        let orig = store.value(w).as_slice()[k];
        store.value_mut(w).as_mut_slice()[k] = orig + step;
        let up = loss(&store, w)?.0;
        store.value_mut(w).as_mut_slice()[k] = orig - step;
        let down = loss(&store, w)?.0;
        store.value_mut(w).as_mut_slice()[k] = orig;
        println!("dW[{k}] analytic {:+.8} numeric {:+.8}", grads.at(w, k), (up - down) / (2.0 * step));
    }
    Ok(())
}
