//! Dimension harmonization (PCA) and the geometric-word vocabulary (k-means).

mod kmeans;
mod pca;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Corpus, EntityKind};
use crate::error::{Error, Result};

pub use kmeans::{kmeans_fit, Vocabulary};
pub use pca::{fit_pca, PcaProjection};

pub const DEFAULT_K: usize = 64;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const MAX_COMMON_DIM: usize = 128;

/// Per-kind projections into one common dim.
///
/// Kinds that arrive with the same descriptor dim share one projection fitted
/// on their pooled descriptors, so they land in a shared coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    pub target_dim: usize,
    pub projections: Vec<PcaProjection>,
    pub by_kind: BTreeMap<EntityKind, usize>,
}

impl ProjectionSet {
    pub fn get(&self, kind: EntityKind) -> Option<&PcaProjection> {
        self.by_kind.get(&kind).map(|&i| &self.projections[i])
    }

    pub fn project(&self, kind: EntityKind, v: &[f64]) -> Result<Vec<f64>> {
        let proj = self
            .get(kind)
            .ok_or_else(|| Error::InvalidArgument(format!("no projection fitted for kind {kind}")))?;
        proj.apply(v)
    }
}

/// Fits the projection set. Without `target_dim`, the common dim is
/// `min(128, smallest kind dim)`, further clamped so that every pooled group
/// has more vectors than components.
pub fn fit_projections(corpus: &Corpus, target_dim: Option<usize>) -> Result<ProjectionSet> {
    let mut groups: BTreeMap<usize, Vec<EntityKind>> = BTreeMap::new();
    for (&kind, &dim) in corpus.dims() {
        groups.entry(dim).or_default().push(kind);
    }
    if groups.is_empty() {
        return Err(Error::InvalidArgument("cannot fit projections on an empty corpus".into()));
    }
    let pooled: Vec<(Vec<EntityKind>, Vec<&[f64]>)> = groups
        .into_values()
        .map(|kinds| {
            let vecs = corpus
                .entities()
                .iter()
                .filter(|e| kinds.contains(&e.kind))
                .map(|e| e.descriptor.values())
                .collect();
            (kinds, vecs)
        })
        .collect();
    let smallest_dim = *corpus.dims().values().min().expect("non-empty");
    let feasible = pooled
        .iter()
        .map(|(_, v)| v.len().saturating_sub(1))
        .min()
        .expect("non-empty");
    let target = match target_dim {
        Some(t) => t,
        None => MAX_COMMON_DIM.min(smallest_dim).min(feasible),
    };
    if target == 0 {
        return Err(Error::Degenerate(
            "every descriptor group needs at least two vectors for PCA".into(),
        ));
    }
    let mut projections = Vec::new();
    let mut by_kind = BTreeMap::new();
    for (kinds, vecs) in pooled {
        let proj = fit_pca(&vecs, target)?;
        for k in kinds {
            by_kind.insert(k, projections.len());
        }
        projections.push(proj);
    }
    Ok(ProjectionSet {
        target_dim: target,
        projections,
        by_kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabParams {
    pub k: usize,
    pub target_dim: Option<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for VocabParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            target_dim: None,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// PCA-projects every part and clusters the projected parts into `k` words.
pub fn build_vocabulary(corpus: &Corpus, params: &VocabParams) -> Result<(ProjectionSet, Vocabulary)> {
    let projections = fit_projections(corpus, params.target_dim)?;
    let parts = corpus
        .of_kind(EntityKind::Part)
        .map(|p| projections.project(EntityKind::Part, p.descriptor.values()))
        .collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Err(Error::InvalidArgument("corpus has no part entities to cluster".into()));
    }
    let vocab = kmeans_fit(&parts, params.k, params.seed, params.max_iters, params.tol)?;
    Ok((projections, vocab))
}

pub const VOCAB_SCHEMA: &str = "shapekg.vocab/1";

/// On-disk vocabulary: `{k, dim, centroids, inertia, seed}` plus the fitted
/// projections needed to place new descriptors into the same space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabFile {
    pub schema: String,
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
    pub history: Vec<f64>,
    pub projections: ProjectionSet,
}

impl VocabFile {
    pub fn new(vocab: &Vocabulary, projections: &ProjectionSet) -> Self {
        Self {
            schema: VOCAB_SCHEMA.into(),
            k: vocab.k,
            dim: vocab.dim,
            centroids: vocab.centroids.clone(),
            inertia: vocab.inertia,
            seed: vocab.seed,
            history: vocab.history.clone(),
            projections: projections.clone(),
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary {
            k: self.k,
            dim: self.dim,
            centroids: self.centroids.clone(),
            inertia: self.inertia,
            seed: self.seed,
            history: self.history.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let raw: serde_json::Value = crate::fsutil::read_json(path)?;
        crate::check_schema(&raw, VOCAB_SCHEMA, path)?;
        serde_json::from_value(raw).map_err(|e| Error::json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_json(path, self)
    }
}
