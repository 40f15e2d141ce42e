use rand::seq::SliceRandom;

use super::Hyperparameters;
use crate::rng::Rng;
use crate::{Error, Result};

/// Parameters viewed as one flat vector, in a fixed order.
pub trait FlatParams {
    fn flat(&self) -> Vec<f64>;
    fn set_flat(&mut self, values: &[f64]);
}

pub(crate) struct Outcome {
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// Plain mini-batch gradient descent. `step` returns the mean loss and flat
/// gradient on one batch of example indices.
pub(crate) fn minibatch_descent<P, F>(
    params: &mut P,
    n: usize,
    hp: &Hyperparameters,
    rng: &mut Rng,
    mut step: F,
) -> Result<Outcome>
where
    P: FlatParams,
    F: FnMut(&P, &[usize], &mut Rng) -> (f64, Vec<f64>),
{
    let mut order: Vec<usize> = (0..n).collect();
    let mut final_loss = f64::NAN;
    for epoch in 1..=hp.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let (loss, grad) = step(params, batch, rng);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            let mut flat = params.flat();
            for (w, g) in flat.iter_mut().zip(&grad) {
                *w -= hp.learning_rate * g;
            }
            params.set_flat(&flat);
            total += loss * batch.len() as f64;
        }
        final_loss = total / n as f64;
        if !final_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: final_loss,
            });
        }
    }
    Ok(Outcome {
        epochs_run: hp.epochs,
        final_loss,
    })
}

/// Concatenates slices into one flat vector.
pub(crate) fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Splits `values` back into the given mutable slices, in order.
pub(crate) fn scatter(values: &[f64], parts: &mut [&mut [f64]]) {
    let mut at = 0;
    for p in parts.iter_mut() {
        let n = p.len();
        p.copy_from_slice(&values[at..at + n]);
        at += n;
    }
    assert_eq!(at, values.len(), "flat parameter length mismatch");
}
