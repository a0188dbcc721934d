use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Mean-centred orthonormal projection onto the leading principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Unit directions, descending variance.
    pub components: Vec<Vec<f64>>,
    /// Full covariance spectrum (divided by the sample count), descending.
    pub spectrum: Vec<f64>,
}

impl PcaProjection {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                context: "PCA input".into(),
                expected: self.input_dim(),
                actual: v.len(),
            });
        }
        let centred: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centred)).collect())
    }

    /// Maps projected coordinates back into the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &a) in self.components.iter().zip(coords) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += a * ci;
            }
        }
        out
    }
}

/// Fits a PCA projection keeping `target_dim` components.
///
/// Requires at least two vectors and `target_dim <= min(count - 1, dim)`.
/// Each component is oriented so its first nonzero coordinate is positive.
pub fn fit_pca<V: AsRef<[f64]>>(vectors: &[V], target_dim: usize) -> Result<PcaProjection> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 vectors, got {n}")));
    }
    let dim = vectors[0].as_ref().len();
    if target_dim == 0 || target_dim > dim.min(n - 1) {
        return Err(Error::InvalidArgument(format!(
            "PCA target dim {target_dim} out of range 1..={}",
            dim.min(n - 1)
        )));
    }
    let mut mean = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimMismatch {
                context: "PCA input".into(),
                expected: dim,
                actual: v.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centred = vec![0.0; dim];
    for v in vectors {
        for ((c, x), m) in centred.iter_mut().zip(v.as_ref()).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += centred[i] * centred[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if cov.diagonal().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("all PCA input vectors are identical".into()));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let spectrum = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let components = order[..target_dim]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let norm = dot(&c, &c).sqrt();
            for x in &mut c {
                *x /= norm;
            }
            if let Some(first) = c.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    for x in &mut c {
                        *x = -*x;
                    }
                }
            }
            c
        })
        .collect();
    Ok(PcaProjection {
        mean,
        components,
        spectrum,
    })
}
