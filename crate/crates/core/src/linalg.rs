//! Small dense helpers shared by the scoring, training and prompt modules.

use ndarray::{Array1, ArrayBase, ArrayView1, Data, Dimension};

use crate::error::{AlbmError, Result};

/// Numerically stable softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// `log(sum(exp(z)))` without overflow.
pub fn log_sum_exp(logits: ArrayView1<f64>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn l2_norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn ensure_finite<S, D>(a: &ArrayBase<S, D>, what: &str) -> Result<()>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(AlbmError::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(array![1000.0, 1000.0].view());
        assert_eq!(p, array![0.5, 0.5]);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(array![0.1, 0.3, 0.3].view()), 1);
    }

    #[test]
    fn lse_matches_naive() {
        let z = array![0.2, -1.0, 3.0];
        let naive = z.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(z.view()) - naive).abs() < 1e-12);
    }
}
