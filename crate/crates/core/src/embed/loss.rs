use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};

/// One anchor with its positive (linked) and negative (unlinked) partners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl PairSample {
    pub fn pair_count(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Link-prediction loss summed over all anchors:
/// `-ln σ(y_i·y_j)` for each positive and `-ln σ(-y_i·y_k)` for each negative.
pub fn loss(y: &Matrix, samples: &[PairSample]) -> f64 {
    let mut total = 0.0;
    for s in samples {
        let yi = y.row(s.anchor);
        for &j in &s.positives {
            total += softplus(-dot(yi, y.row(j)));
        }
        for &k in &s.negatives {
            total += softplus(dot(yi, y.row(k)));
        }
    }
    total
}

/// Loss plus its gradient with respect to every row of `y`.
pub fn loss_and_grad(y: &Matrix, samples: &[PairSample]) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    let mut total = 0.0;
    let accumulate = |i: usize, j: usize, d_dot: f64, grad: &mut Matrix| {
        for c in 0..y.cols() {
            let (yi, yj) = (y[(i, c)], y[(j, c)]);
            grad[(i, c)] += d_dot * yj;
            grad[(j, c)] += d_dot * yi;
        }
    };
    for s in samples {
        let i = s.anchor;
        for &j in &s.positives {
            let d = dot(y.row(i), y.row(j));
            total += softplus(-d);
            accumulate(i, j, -sigmoid(-d), &mut grad);
        }
        for &k in &s.negatives {
            let d = dot(y.row(i), y.row(k));
            total += softplus(d);
            accumulate(i, k, sigmoid(d), &mut grad);
        }
    }
    (total, grad)
}
