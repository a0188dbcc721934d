//! GCN entity embeddings trained with a link-prediction objective.

mod gcn;
mod loss;
mod sampling;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Sidecar;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::kgraph::ShapeGraph;
use crate::linalg::Matrix;

pub use gcn::{backward, forward, forward_cached, glorot_init, ForwardCache};
pub use loss::{loss, loss_and_grad, sigmoid, softplus, PairSample};
pub use sampling::{sample_pairs, sample_pairs_with};

pub const EMBED_SCHEMA: &str = "shapekg.embeddings/1";

/// How the summed pair loss is scaled before differentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Plain sum over every anchor/partner term.
    Sum,
    /// Sum divided by the number of pair terms.
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// Input dim, hidden dims, output (embedding) dim.
    pub layer_dims: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub neg_ratio: usize,
    pub seed: u64,
    /// Stop once the epoch-to-epoch loss change drops below this.
    pub tol: Option<f64>,
    /// Draw fresh negatives every epoch instead of once before training.
    #[serde(default)]
    pub resample_negatives: bool,
    #[serde(default)]
    pub reduction: Reduction,
}

impl GcnConfig {
    pub const DEFAULT_HIDDEN: usize = 128;
    pub const DEFAULT_EMBED_DIM: usize = 64;
    pub const DEFAULT_LR: f64 = 0.01;
    pub const DEFAULT_NEG_RATIO: usize = 5;
    pub const DEFAULT_EPOCHS: usize = 300;

    /// Two layers, hidden 128, embedding 64.
    pub fn with_input_dim(input_dim: usize) -> Self {
        Self {
            layer_dims: vec![input_dim, Self::DEFAULT_HIDDEN, Self::DEFAULT_EMBED_DIM],
            learning_rate: Self::DEFAULT_LR,
            epochs: Self::DEFAULT_EPOCHS,
            neg_ratio: Self::DEFAULT_NEG_RATIO,
            seed: 0,
            tol: None,
            resample_negatives: false,
            reduction: Reduction::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer_dims needs at least two positive entries".into(),
            ));
        }
        if self.neg_ratio == 0 {
            return Err(Error::InvalidArgument("neg_ratio must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Trained weights and the per-node embeddings they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub embeddings: Matrix,
    pub weights: Vec<Matrix>,
    pub final_loss: f64,
    /// Objective at the start of each epoch.
    pub losses: Vec<f64>,
    pub config: GcnConfig,
}

pub(crate) fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream + 1);
    rng
}

fn scale(reduction: Reduction, samples: &[PairSample]) -> f64 {
    match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => {
            let n: usize = samples.iter().map(PairSample::pair_count).sum();
            if n == 0 {
                1.0
            } else {
                1.0 / n as f64
            }
        }
    }
}

/// Objective value and weight gradients for fixed samples.
pub fn objective_and_grad(
    graph: &ShapeGraph,
    weights: &[Matrix],
    samples: &[PairSample],
    reduction: Reduction,
) -> Result<(f64, Vec<Matrix>, ForwardCache)> {
    let cache = forward_cached(graph.norm_adj(), graph.features(), weights)?;
    let (l, mut d_out) = loss_and_grad(cache.output(), samples);
    let s = scale(reduction, samples);
    if s != 1.0 {
        d_out.map_inplace(|v| v * s);
    }
    let grads = backward(graph.norm_adj(), weights, &cache, d_out);
    Ok((l * s, grads, cache))
}

pub fn objective(graph: &ShapeGraph, weights: &[Matrix], samples: &[PairSample], reduction: Reduction) -> Result<f64> {
    let y = forward(graph.norm_adj(), graph.features(), weights)?;
    Ok(loss(&y, samples) * scale(reduction, samples))
}

pub fn gcn_forward(graph: &ShapeGraph, weights: &[Matrix]) -> Result<Matrix> {
    forward(graph.norm_adj(), graph.features(), weights)
}

/// Full-batch gradient descent `W ← W − lr·∂L/∂W`, one step per epoch.
pub fn train(graph: &ShapeGraph, config: &GcnConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    if graph.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty graph".into()));
    }
    if config.layer_dims[0] != graph.dim() {
        return Err(Error::DimMismatch {
            context: "GCN input dim vs graph features".into(),
            expected: graph.dim(),
            actual: config.layer_dims[0],
        });
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = glorot_init(&config.layer_dims, &mut init_rng);
    let mut samples = sample_pairs(graph, config.neg_ratio, config.seed);
    let mut losses: Vec<f64> = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if epoch > 0 && config.resample_negatives {
            samples = sample_pairs_with(graph, config.neg_ratio, &mut epoch_rng(config.seed, epoch as u64));
        }
        let (l, grads, _) = objective_and_grad(graph, &weights, &samples, config.reduction)?;
        if !l.is_finite() {
            return Err(Error::Diverged { epoch, loss: l });
        }
        for (w, g) in weights.iter_mut().zip(&grads) {
            w.sub_scaled(g, config.learning_rate);
        }
        let converged = match (config.tol, losses.last()) {
            (Some(tol), Some(&prev)) => (prev - l).abs() < tol,
            _ => false,
        };
        losses.push(l);
        if converged {
            break;
        }
    }
    let embeddings = gcn_forward(graph, &weights)?;
    let final_loss = loss(&embeddings, &samples) * scale(config.reduction, &samples);
    if !final_loss.is_finite() || !embeddings.is_finite() {
        return Err(Error::Diverged {
            epoch: losses.len(),
            loss: final_loss,
        });
    }
    Ok(EmbeddingTable {
        embeddings,
        weights,
        final_loss,
        losses,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Closest hidden pre-activation to the ReLU kink, if any hidden layer.
    pub min_abs_preactivation: Option<f64>,
    pub entries: usize,
}

/// Denominator floor for relative errors of near-zero gradient entries.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Central finite differences against the analytic gradient, with weights
/// initialised from `config.seed` and the first epoch's samples.
pub fn grad_check(graph: &ShapeGraph, config: &GcnConfig, epsilon: f64) -> Result<GradCheck> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = glorot_init(&config.layer_dims, &mut rng);
    let samples = sample_pairs(graph, config.neg_ratio, config.seed);
    let (_, grads, cache) = objective_and_grad(graph, &weights, &samples, config.reduction)?;
    let mut max_rel = 0.0f64;
    let mut entries = 0;
    for l in 0..weights.len() {
        for idx in 0..weights[l].as_slice().len() {
            let mut plus = weights.clone();
            plus[l].as_mut_slice()[idx] += epsilon;
            let mut minus = weights.clone();
            minus[l].as_mut_slice()[idx] -= epsilon;
            let fd = (objective(graph, &plus, &samples, config.reduction)?
                - objective(graph, &minus, &samples, config.reduction)?)
                / (2.0 * epsilon);
            let an = grads[l].as_slice()[idx];
            let diff = (an - fd).abs();
            let rel = if diff == 0.0 {
                0.0
            } else {
                diff / an.abs().max(fd.abs()).max(GRAD_CHECK_FLOOR)
            };
            max_rel = max_rel.max(rel);
            entries += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        min_abs_preactivation: cache.min_abs_hidden_preactivation(),
        entries,
    })
}

/// Inductive forward pass with frozen weights over a graph that has query
/// nodes attached. Returns embeddings for every node of `graph_with_query`;
/// rows past the base graph belong to the query.
pub fn embed_query(graph_with_query: &ShapeGraph, table: &EmbeddingTable) -> Result<Matrix> {
    gcn_forward(graph_with_query, &table.weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub schema: String,
    pub config: GcnConfig,
    pub weights: Vec<Matrix>,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub nodes: usize,
    pub graph_ref: Option<String>,
}

pub fn embeddings_path(emb_path: &Path) -> PathBuf {
    fsutil::sibling(emb_path, "embeddings.gwkg")
}

pub fn log_path(emb_path: &Path) -> PathBuf {
    fsutil::sibling(emb_path, "log.csv")
}

impl EmbeddingTable {
    /// Weights as JSON at `path`, embeddings in a sidecar and the loss log as
    /// CSV next to it.
    pub fn save(&self, path: &Path, graph_ref: Option<String>) -> Result<()> {
        Sidecar::from_matrix(&self.embeddings)?.write(&embeddings_path(path))?;
        let mut csv = String::from("epoch,loss\n");
        for (e, l) in self.losses.iter().enumerate() {
            csv.push_str(&format!("{e},{l}\n"));
        }
        fsutil::write_atomic(&log_path(path), csv.as_bytes())?;
        let file = EmbeddingFile {
            schema: EMBED_SCHEMA.into(),
            config: self.config.clone(),
            weights: self.weights.clone(),
            final_loss: self.final_loss,
            epochs_run: self.losses.len(),
            nodes: self.embeddings.rows(),
            graph_ref,
        };
        fsutil::write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<(EmbeddingTable, EmbeddingFile)> {
        let raw: serde_json::Value = fsutil::read_json(path)?;
        crate::check_schema(&raw, EMBED_SCHEMA, path)?;
        let file: EmbeddingFile = serde_json::from_value(raw).map_err(|e| Error::json(path, e))?;
        let embeddings = Sidecar::read(&embeddings_path(path))?.to_matrix();
        if embeddings.rows() != file.nodes {
            return Err(Error::DimMismatch {
                context: format!("embedding rows in {}", path.display()),
                expected: file.nodes,
                actual: embeddings.rows(),
            });
        }
        let table = EmbeddingTable {
            embeddings,
            weights: file.weights.clone(),
            final_loss: file.final_loss,
            losses: Vec::new(),
            config: file.config.clone(),
        };
        Ok((table, file))
    }
}


#[cfg(test)]
mod tests {
    use super::testing::graph_from_edges;
    use super::*;

    fn config(dims: &[usize], epochs: usize) -> GcnConfig {
        GcnConfig {
            layer_dims: dims.to_vec(),
            learning_rate: 0.1,
            epochs,
            neg_ratio: 1,
            seed: 5,
            tol: None,
            resample_negatives: false,
            reduction: Reduction::Mean,
        }
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let g = graph_from_edges(4, &[(0, 1), (2, 3)], 3);
        let cfg = config(&[3, 4], 0);
        let t = train(&g, &cfg).unwrap();
        let init = glorot_init(&cfg.layer_dims, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        assert_eq!(t.weights, init);
        assert_eq!(t.embeddings, gcn_forward(&g, &init).unwrap());
        assert!(t.losses.is_empty());
    }

    #[test]
    fn learns_edge_versus_non_edge() {
        let g = graph_from_edges(4, &[(0, 1)], 3);
        let cfg = GcnConfig { epochs: 200, ..config(&[3, 8, 4], 200) };
        let t = train(&g, &cfg).unwrap();
        let y = &t.embeddings;
        let p_edge = sigmoid(crate::linalg::dot(y.row(0), y.row(1)));
        let s = sample_pairs(&g, 1, 0);
        let (a, k) = (s[0].anchor, s[0].negatives[0]);
        let p_non = sigmoid(crate::linalg::dot(y.row(a), y.row(k)));
        assert!(p_edge > 0.9, "edge probability {p_edge}");
        assert!(p_non < 0.5, "non-edge probability {p_non}");
    }

    #[test]
    fn training_is_deterministic() {
        let g = graph_from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5), (0, 5)], 3);
        let cfg = config(&[3, 5, 2], 30);
        assert_eq!(train(&g, &cfg).unwrap(), train(&g, &cfg).unwrap());
    }

    #[test]
    fn zero_features_have_zero_gradient() {
        let mut g = graph_from_edges(5, &[(0, 1), (1, 2), (3, 4)], 3);
        g = ShapeGraph::from_edges(
            g.nodes().to_vec(),
            &g.edges().collect::<Vec<_>>(),
            Matrix::zeros(5, 3),
        )
        .unwrap();
        let cfg = config(&[3, 4], 1);
        let r = grad_check(&g, &cfg, 1e-5).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        let samples = sample_pairs(&g, 1, cfg.seed);
        let w = glorot_init(&cfg.layer_dims, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let (_, grads, _) = objective_and_grad(&g, &w, &samples, Reduction::Sum).unwrap();
        assert!(grads.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradient_check_small_graph() {
        let g = graph_from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)], 4);
        for reduction in [Reduction::Sum, Reduction::Mean] {
            let cfg = GcnConfig { reduction, ..config(&[4, 3], 1) };
            let r = grad_check(&g, &cfg, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
            assert_eq!(r.min_abs_preactivation, None);
        }
    }

    #[test]
    fn invalid_configs() {
        let g = graph_from_edges(2, &[(0, 1)], 3);
        assert!(train(&g, &config(&[3], 1)).is_err());
        assert!(train(&g, &config(&[4, 2], 1)).is_err());
        assert!(train(&g, &GcnConfig { neg_ratio: 0, ..config(&[3, 2], 1) }).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let g = graph_from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)], 3);
        let cfg = GcnConfig {
            learning_rate: 1e200,
            reduction: Reduction::Sum,
            ..config(&[3, 4, 4], 50)
        };
        assert!(matches!(train(&g, &cfg), Err(Error::Diverged { .. })));
    }
}
