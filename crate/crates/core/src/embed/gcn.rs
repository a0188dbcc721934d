//! Stacked graph convolutions `H' = act(Ŝ H W)`: ReLU on hidden layers, the
//! output layer is linear.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Ŝ H_l` per layer.
    propagated: Vec<Matrix>,
    /// `Ŝ H_l W_l` per layer, before activation.
    pre: Vec<Matrix>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    /// Smallest `|pre-activation|` over hidden (ReLU) layers.
    pub fn min_abs_hidden_preactivation(&self) -> Option<f64> {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .reduce(f64::min)
    }
}

fn check_dims(features: &Matrix, weights: &[Matrix]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("GCN needs at least one layer".into()));
    }
    let mut width = features.cols();
    for (l, w) in weights.iter().enumerate() {
        if w.rows() != width {
            return Err(Error::DimMismatch {
                context: format!("GCN layer {l} input"),
                expected: width,
                actual: w.rows(),
            });
        }
        width = w.cols();
    }
    Ok(())
}

pub fn forward_cached(adj: &CsrMatrix, features: &Matrix, weights: &[Matrix]) -> Result<ForwardCache> {
    check_dims(features, weights)?;
    if adj.n_rows() != features.rows() {
        return Err(Error::DimMismatch {
            context: "adjacency vs feature rows".into(),
            expected: features.rows(),
            actual: adj.n_rows(),
        });
    }
    let last = weights.len() - 1;
    let mut propagated = Vec::with_capacity(weights.len());
    let mut pre = Vec::with_capacity(weights.len());
    let mut h = features.clone();
    for (l, w) in weights.iter().enumerate() {
        let p = adj.matmul(&h);
        let z = p.matmul(w);
        h = z.clone();
        if l < last {
            h.map_inplace(|v| v.max(0.0));
        }
        propagated.push(p);
        pre.push(z);
    }
    Ok(ForwardCache {
        propagated,
        pre,
        output: h,
    })
}

pub fn forward(adj: &CsrMatrix, features: &Matrix, weights: &[Matrix]) -> Result<Matrix> {
    forward_cached(adj, features, weights).map(ForwardCache::into_output)
}

/// Weight gradients given `d_out = ∂L/∂Y`.
pub fn backward(adj: &CsrMatrix, weights: &[Matrix], cache: &ForwardCache, d_out: Matrix) -> Vec<Matrix> {
    let last = weights.len() - 1;
    let mut grads = vec![Matrix::zeros(0, 0); weights.len()];
    let mut d_h = d_out;
    for l in (0..weights.len()).rev() {
        let mut d_z = d_h;
        if l < last {
            for (g, &z) in d_z.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        grads[l] = cache.propagated[l].t_matmul(&d_z);
        if l > 0 {
            // Ŝ is symmetric, so Ŝᵀ (dZ Wᵀ) = Ŝ (dZ Wᵀ)
            d_h = adj.matmul(&d_z.matmul_t(&weights[l]));
        } else {
            break;
        }
    }
    grads
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))` per layer.
pub fn glorot_init(layer_dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    layer_dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
            Matrix::from_vec(fan_in, fan_out, data)
        })
        .collect()
}
