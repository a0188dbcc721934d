//! Similarity channels and candidate ranking for shape, image and part-set
//! queries.

mod channels;
mod matching;
mod scorer;

use serde::{Deserialize, Serialize};

pub use channels::{matching_score, shared_words, sim_entity, sim_parts, sim_views, sim_words, word_score};
pub use matching::max_weight_matching;
pub use scorer::{ImageScorer, PartsScorer, QueryScorer, ScorerRegistry, ShapeScorer};

use crate::datamodel::EntityKind;
use crate::error::{Error, Result};
use crate::kgraph::ShapeGraph;
use crate::linalg::Matrix;

const WEIGHT_TOL: f64 = 1e-9;

/// Channel mixing weights for shape queries (`alpha..lambda`) and image
/// queries (`*_img`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta_img: f64,
    pub gamma_img: f64,
    pub lambda_img: f64,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        ChannelWeights {
            alpha: 0.25,
            beta: 0.25,
            gamma: 0.25,
            lambda: 0.25,
            beta_img: 1.0 / 3.0,
            gamma_img: 1.0 / 3.0,
            lambda_img: 1.0 / 3.0,
        }
    }
}

impl ChannelWeights {
    pub fn new(shape: [f64; 4], image: [f64; 3]) -> Result<Self> {
        let w = ChannelWeights {
            alpha: shape[0],
            beta: shape[1],
            gamma: shape[2],
            lambda: shape[3],
            beta_img: image[0],
            gamma_img: image[1],
            lambda_img: image[2],
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_shape(self, shape: [f64; 4]) -> Result<Self> {
        Self::new(shape, [self.beta_img, self.gamma_img, self.lambda_img])
    }

    pub fn with_image(self, image: [f64; 3]) -> Result<Self> {
        Self::new([self.alpha, self.beta, self.gamma, self.lambda], image)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = [self.alpha, self.beta, self.gamma, self.lambda];
        let image = [self.beta_img, self.gamma_img, self.lambda_img];
        for group in [&shape[..], &image[..]] {
            if group.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidArgument(format!("weights must be nonnegative, got {group:?}")));
            }
            let sum: f64 = group.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::Weights(sum));
            }
        }
        Ok(())
    }
}

/// Per-channel scores of one candidate. Channels a mode does not use are
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    #[serde(skip)]
    pub total: f64,
    pub sm: Option<f64>,
    pub si: Option<f64>,
    pub sp: Option<f64>,
    pub sg: Option<f64>,
}

/// Entities below a node that the channels compare.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Profile {
    pub views: Vec<usize>,
    pub parts: Vec<usize>,
    /// Distinct word numbers, ascending.
    pub words: Vec<usize>,
}

fn children_of_kind(graph: &ShapeGraph, i: usize, kind: EntityKind) -> Vec<usize> {
    graph.children(i).iter().copied().filter(|&c| graph.node(c).kind == kind).collect()
}

fn profile(graph: &ShapeGraph, word_number: &[Option<usize>], i: usize) -> Profile {
    let (views, parts) = match graph.node(i).kind {
        EntityKind::Model => {
            let views = children_of_kind(graph, i, EntityKind::RenderedView);
            let parts = views
                .iter()
                .flat_map(|&v| children_of_kind(graph, v, EntityKind::Part))
                .collect();
            (views, parts)
        }
        EntityKind::RenderedView | EntityKind::RealImage => (Vec::new(), children_of_kind(graph, i, EntityKind::Part)),
        EntityKind::Part => (Vec::new(), vec![i]),
        EntityKind::GeometricWord => (Vec::new(), Vec::new()),
    };
    let mut words: Vec<usize> = parts
        .iter()
        .filter_map(|&p| graph.word_of(p))
        .filter_map(|w| word_number[w])
        .collect();
    words.sort_unstable();
    words.dedup();
    Profile { views, parts, words }
}

/// Graph plus node embeddings with per-node channel profiles precomputed.
pub struct SearchIndex<'a> {
    graph: &'a ShapeGraph,
    embeddings: &'a Matrix,
    profiles: Vec<Profile>,
}

impl<'a> SearchIndex<'a> {
    pub fn new(graph: &'a ShapeGraph, embeddings: &'a Matrix) -> Result<Self> {
        if embeddings.rows() != graph.len() {
            return Err(Error::DimMismatch {
                context: "embedding rows vs graph nodes".into(),
                expected: graph.len(),
                actual: embeddings.rows(),
            });
        }
        let mut word_number = vec![None; graph.len()];
        for (n, w) in graph.word_nodes().into_iter().enumerate() {
            word_number[w] = Some(n);
        }
        let profiles = (0..graph.len()).map(|i| profile(graph, &word_number, i)).collect();
        Ok(SearchIndex {
            graph,
            embeddings,
            profiles,
        })
    }

    pub fn graph(&self) -> &ShapeGraph {
        self.graph
    }

    pub fn profile(&self, i: usize) -> &Profile {
        &self.profiles[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<&[f64]> {
        idx.iter().map(|&i| self.row(i)).collect()
    }

    /// Every model node except `query`, in graph order.
    pub fn candidates(&self, query: usize) -> Vec<usize> {
        self.graph.indices_of_kind(EntityKind::Model).filter(|&i| i != query).collect()
    }
}

pub fn score_shape_query(index: &SearchIndex<'_>, query: usize, candidate: usize, w: &ChannelWeights) -> Result<ChannelScores> {
    w.validate()?;
    ShapeScorer.score(index, query, candidate, w)
}

pub fn score_image_query(index: &SearchIndex<'_>, query: usize, candidate: usize, w: &ChannelWeights) -> Result<ChannelScores> {
    w.validate()?;
    ImageScorer.score(index, query, candidate, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
    pub channels: ChannelScores,
}

/// Ranked candidates for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub mode: String,
    pub weights: ChannelWeights,
    pub results: Vec<Hit>,
}

impl RetrievalResult {
    pub fn ranked_ids(&self) -> Vec<&str> {
        self.results.iter().map(|h| h.id.as_str()).collect()
    }
}

/// Scores every candidate model against `query_id`, highest first, ties by
/// ascending id. `top_n = None` keeps the full ranking.
pub fn retrieve(
    index: &SearchIndex<'_>,
    scorer: &dyn QueryScorer,
    query_id: &str,
    weights: &ChannelWeights,
    top_n: Option<usize>,
) -> Result<RetrievalResult> {
    weights.validate()?;
    let graph = index.graph();
    let query = graph
        .index_of(query_id)
        .ok_or_else(|| Error::Query(format!("unknown query id {query_id:?}")))?;
    let kind = graph.node(query).kind;
    if !scorer.accepts(kind) {
        return Err(Error::Query(format!(
            "{} retrieval does not accept a {} query",
            scorer.mode(),
            kind
        )));
    }
    scorer.check_query(index, query, weights)?;
    let candidates = index.candidates(query);
    if candidates.is_empty() {
        return Err(Error::EmptySet("no candidate models"));
    }
    let mut results = candidates
        .into_iter()
        .map(|c| {
            let channels = scorer.score(index, query, c, weights)?;
            Ok(Hit {
                id: graph.node(c).id.clone(),
                score: channels.total.clamp(0.0, 1.0),
                channels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    if let Some(n) = top_n {
        results.truncate(n);
    }
    Ok(RetrievalResult {
        query: query_id.to_string(),
        mode: scorer.mode().to_string(),
        weights: *weights,
        results,
    })
}
