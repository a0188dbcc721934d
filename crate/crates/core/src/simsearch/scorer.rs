//! Query scoring strategies, registered by mode name.

use std::collections::BTreeMap;

use super::channels::{sim_entity, sim_parts, sim_views, word_score, shared_words};
use super::{ChannelScores, ChannelWeights, SearchIndex};
use crate::datamodel::EntityKind;
use crate::error::{Error, Result};

/// One retrieval mode: which query nodes it accepts and how it combines the
/// channels for a query/candidate pair.
pub trait QueryScorer: Send + Sync {
    fn mode(&self) -> &'static str;

    fn accepts(&self, kind: EntityKind) -> bool;

    /// Rejects queries that lack the entities a weighted channel needs.
    fn check_query(&self, index: &SearchIndex<'_>, query: usize, weights: &ChannelWeights) -> Result<()>;

    fn score(
        &self,
        index: &SearchIndex<'_>,
        query: usize,
        candidate: usize,
        weights: &ChannelWeights,
    ) -> Result<ChannelScores>;
}

fn words_channel(index: &SearchIndex<'_>, query: usize, candidate: usize) -> f64 {
    if query == candidate {
        return 1.0;
    }
    word_score(shared_words(&index.profile(query).words, &index.profile(candidate).words))
}

fn parts_channel(index: &SearchIndex<'_>, query: usize, candidate: usize) -> Result<f64> {
    let q = index.rows(&index.profile(query).parts);
    let m = index.rows(&index.profile(candidate).parts);
    if m.is_empty() {
        return Ok(0.0);
    }
    sim_parts(&q, &m)
}

fn require(present: bool, weight: f64, message: &str) -> Result<()> {
    if weight > 0.0 && !present {
        return Err(Error::Query(message.into()));
    }
    Ok(())
}

/// `α·S_M + β·S_I + γ·S_P + λ·S_G` between two models.
pub struct ShapeScorer;

impl QueryScorer for ShapeScorer {
    fn mode(&self) -> &'static str {
        "shape"
    }

    fn accepts(&self, kind: EntityKind) -> bool {
        kind == EntityKind::Model
    }

    fn check_query(&self, index: &SearchIndex<'_>, query: usize, w: &ChannelWeights) -> Result<()> {
        let p = index.profile(query);
        require(!p.views.is_empty(), w.beta, "shape query requires views")?;
        require(!p.parts.is_empty(), w.gamma, "shape query requires parts")
    }

    fn score(&self, index: &SearchIndex<'_>, query: usize, candidate: usize, w: &ChannelWeights) -> Result<ChannelScores> {
        let sm = sim_entity(index.row(query), index.row(candidate))?;
        let qv = index.rows(&index.profile(query).views);
        let mv = index.rows(&index.profile(candidate).views);
        let si = if qv.is_empty() || mv.is_empty() { 0.0 } else { sim_views(&qv, &mv)? };
        let sp = if index.profile(query).parts.is_empty() { 0.0 } else { parts_channel(index, query, candidate)? };
        let sg = words_channel(index, query, candidate);
        Ok(ChannelScores {
            total: w.alpha * sm + w.beta * si + w.gamma * sp + w.lambda * sg,
            sm: Some(sm),
            si: Some(si),
            sp: Some(sp),
            sg: Some(sg),
        })
    }
}

/// `β*·max_j S_e(f_I, f_j) + γ*·S_P + λ*·S_G` between an image and a model.
pub struct ImageScorer;

impl QueryScorer for ImageScorer {
    fn mode(&self) -> &'static str {
        "image"
    }

    fn accepts(&self, kind: EntityKind) -> bool {
        matches!(kind, EntityKind::RealImage | EntityKind::RenderedView)
    }

    fn check_query(&self, index: &SearchIndex<'_>, query: usize, w: &ChannelWeights) -> Result<()> {
        require(!index.profile(query).parts.is_empty(), w.gamma_img, "image query requires parts")
    }

    fn score(&self, index: &SearchIndex<'_>, query: usize, candidate: usize, w: &ChannelWeights) -> Result<ChannelScores> {
        let mv = index.rows(&index.profile(candidate).views);
        let si = if mv.is_empty() { 0.0 } else { sim_views(&[index.row(query)], &mv)? };
        let sp = if index.profile(query).parts.is_empty() { 0.0 } else { parts_channel(index, query, candidate)? };
        let sg = words_channel(index, query, candidate);
        Ok(ChannelScores {
            total: w.beta_img * si + w.gamma_img * sp + w.lambda_img * sg,
            sm: None,
            si: Some(si),
            sp: Some(sp),
            sg: Some(sg),
        })
    }
}

/// Part-set matching and word overlap only, with `γ, λ` renormalized.
pub struct PartsScorer;

impl QueryScorer for PartsScorer {
    fn mode(&self) -> &'static str {
        "parts"
    }

    fn accepts(&self, kind: EntityKind) -> bool {
        matches!(
            kind,
            EntityKind::Model | EntityKind::RealImage | EntityKind::RenderedView | EntityKind::Part
        )
    }

    fn check_query(&self, index: &SearchIndex<'_>, query: usize, w: &ChannelWeights) -> Result<()> {
        if w.gamma + w.lambda <= 0.0 {
            return Err(Error::Weights(w.gamma + w.lambda));
        }
        if index.profile(query).parts.is_empty() {
            return Err(Error::Query("parts query requires parts".into()));
        }
        Ok(())
    }

    fn score(&self, index: &SearchIndex<'_>, query: usize, candidate: usize, w: &ChannelWeights) -> Result<ChannelScores> {
        let sp = parts_channel(index, query, candidate)?;
        let sg = words_channel(index, query, candidate);
        let norm = w.gamma + w.lambda;
        Ok(ChannelScores {
            total: (w.gamma * sp + w.lambda * sg) / norm,
            sm: None,
            si: None,
            sp: Some(sp),
            sg: Some(sg),
        })
    }
}

/// Scorers keyed by mode name.
pub struct ScorerRegistry {
    scorers: BTreeMap<&'static str, Box<dyn QueryScorer>>,
}

impl ScorerRegistry {
    pub fn new() -> Self {
        ScorerRegistry {
            scorers: BTreeMap::new(),
        }
    }

    /// `shape`, `image` and `parts`.
    pub fn with_defaults() -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(ShapeScorer));
        reg.register(Box::new(ImageScorer));
        reg.register(Box::new(PartsScorer));
        reg
    }

    /// Replaces any scorer already registered under the same mode.
    pub fn register(&mut self, scorer: Box<dyn QueryScorer>) {
        self.scorers.insert(scorer.mode(), scorer);
    }

    pub fn get(&self, mode: &str) -> Result<&dyn QueryScorer> {
        self.scorers
            .get(mode)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown retrieval mode {mode:?}")))
    }

    pub fn modes(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.scorers.keys().copied()
    }
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
