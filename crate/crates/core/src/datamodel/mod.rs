//! Entity value types and the validated in-memory corpus.

mod manifest;
pub mod sidecar;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_manifest, manifest_string, parse_manifest, save_manifest};
pub use sidecar::Sidecar;

/// A finite feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("descriptor must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("<descriptor>".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Descriptor {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    #[serde(rename = "shape")]
    Model,
    #[serde(rename = "view")]
    RenderedView,
    #[serde(rename = "real_image")]
    RealImage,
    #[serde(rename = "part")]
    Part,
    #[serde(rename = "word")]
    GeometricWord,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::Model,
        EntityKind::RenderedView,
        EntityKind::RealImage,
        EntityKind::Part,
        EntityKind::GeometricWord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Model => "shape",
            EntityKind::RenderedView => "view",
            EntityKind::RealImage => "real_image",
            EntityKind::Part => "part",
            EntityKind::GeometricWord => "word",
        }
    }

    pub fn requires_parent(self) -> bool {
        matches!(self, EntityKind::RenderedView | EntityKind::Part)
    }

    pub fn may_have_label(self) -> bool {
        matches!(self, EntityKind::Model | EntityKind::RealImage)
    }

    /// Kind(s) a parent of this kind must have.
    fn parent_kinds(self) -> &'static [EntityKind] {
        match self {
            EntityKind::RenderedView => &[EntityKind::Model],
            EntityKind::Part => &[EntityKind::RenderedView, EntityKind::RealImage],
            _ => &[],
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub label: Option<String>,
    pub parent: Option<String>,
    pub descriptor: Descriptor,
}

impl Entity {
    /// Checks the per-entity invariants (no cross-references).
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidEntity {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.descriptor.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.id.clone()));
        }
        match (self.kind.requires_parent(), &self.parent) {
            (true, None) => return Err(invalid(&format!("{} requires a parent", self.kind))),
            (false, Some(_)) => return Err(invalid(&format!("{} must not have a parent", self.kind))),
            _ => {}
        }
        if self.label.is_some() && !self.kind.may_have_label() {
            return Err(invalid(&format!("{} must not carry a label", self.kind)));
        }
        Ok(())
    }
}

/// Validated, immutable collection of entities in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    entities: Vec<Entity>,
    index: HashMap<String, usize>,
    dims: BTreeMap<EntityKind, usize>,
}

impl Corpus {
    /// Validates and indexes `entities`. Nothing is returned on failure.
    pub fn new(entities: Vec<Entity>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entities.len());
        let mut dims = BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            e.validate()?;
            if e.kind == EntityKind::GeometricWord {
                return Err(Error::InvalidEntity {
                    id: e.id.clone(),
                    reason: "geometric words are derived, not ingested".into(),
                });
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            let dim = *dims.entry(e.kind).or_insert(e.descriptor.dim());
            if dim != e.descriptor.dim() {
                return Err(Error::DimMismatch {
                    context: format!("descriptor of {} `{}`", e.kind, e.id),
                    expected: dim,
                    actual: e.descriptor.dim(),
                });
            }
        }
        for e in &entities {
            if let Some(parent) = &e.parent {
                let Some(&p) = index.get(parent) else {
                    return Err(Error::DanglingParent {
                        id: e.id.clone(),
                        parent: parent.clone(),
                    });
                };
                let pk = entities[p].kind;
                if !e.kind.parent_kinds().contains(&pk) {
                    return Err(Error::InvalidEntity {
                        id: e.id.clone(),
                        reason: format!("a {} cannot have a {} parent", e.kind, pk),
                    });
                }
            }
        }
        Ok(Self {
            entities,
            index,
            dims,
        })
    }

    pub fn empty() -> Self {
        Self {
            entities: Vec::new(),
            index: HashMap::new(),
            dims: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.index.get(id).map(|&i| &self.entities[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Descriptor dim per kind present in the corpus.
    pub fn dims(&self) -> &BTreeMap<EntityKind, usize> {
        &self.dims
    }

    pub fn of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.kind == kind)
    }

    pub fn into_entities(self) -> Vec<Entity> {
        self.entities
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub counts: BTreeMap<EntityKind, usize>,
    /// Label histogram, sorted by label.
    pub labels: BTreeMap<String, usize>,
    pub dims: BTreeMap<EntityKind, usize>,
}

impl CorpusStats {
    pub fn count(&self, kind: EntityKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut counts = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for e in corpus.entities() {
        *counts.entry(e.kind).or_insert(0) += 1;
        if let Some(l) = &e.label {
            *labels.entry(l.clone()).or_insert(0) += 1;
        }
    }
    CorpusStats {
        total: corpus.len(),
        counts,
        labels,
        dims: corpus.dims().clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent(id: &str, kind: EntityKind, parent: Option<&str>, label: Option<&str>) -> Entity {
        Entity {
            id: id.into(),
            kind,
            label: label.map(Into::into),
            parent: parent.map(Into::into),
            descriptor: Descriptor::new(vec![0.0, 1.0]).unwrap(),
        }
    }

    #[test]
    fn stats_of_empty_corpus() {
        let s = corpus_stats(&Corpus::empty());
        assert_eq!(s.total, 0);
        for k in EntityKind::ALL {
            assert_eq!(s.count(k), 0);
        }
    }

    #[test]
    fn stats_one_model_twelve_views() {
        let mut es = vec![ent("m", EntityKind::Model, None, Some("chair"))];
        for v in 0..12 {
            es.push(ent(&format!("v{v}"), EntityKind::RenderedView, Some("m"), None));
        }
        let s = corpus_stats(&Corpus::new(es).unwrap());
        assert_eq!(s.count(EntityKind::Model), 1);
        assert_eq!(s.count(EntityKind::RenderedView), 12);
        assert_eq!(s.labels.get("chair"), Some(&1));
    }

    #[test]
    fn label_histogram_is_sorted() {
        let es = vec![
            ent("a", EntityKind::Model, None, Some("zebra")),
            ent("b", EntityKind::Model, None, Some("apple")),
            ent("c", EntityKind::RealImage, None, Some("apple")),
        ];
        let s = corpus_stats(&Corpus::new(es).unwrap());
        let keys: Vec<_> = s.labels.keys().cloned().collect();
        assert_eq!(keys, ["apple", "zebra"]);
        assert_eq!(s.labels["apple"], 2);
    }

    #[test]
    fn structural_errors() {
        let dangling = vec![ent("p", EntityKind::Part, Some("ghost"), None)];
        match Corpus::new(dangling) {
            Err(Error::DanglingParent { id, parent }) => {
                assert_eq!(id, "p");
                assert_eq!(parent, "ghost");
            }
            other => panic!("{other:?}"),
        }

        let dup = vec![ent("a", EntityKind::Model, None, None), ent("a", EntityKind::Model, None, None)];
        assert!(matches!(Corpus::new(dup), Err(Error::DuplicateId(_))));

        // part hanging off a model is not a valid lash
        let bad_parent = vec![
            ent("m", EntityKind::Model, None, None),
            ent("p", EntityKind::Part, Some("m"), None),
        ];
        assert!(matches!(Corpus::new(bad_parent), Err(Error::InvalidEntity { .. })));

        let labelled_part = vec![
            ent("i", EntityKind::RealImage, None, None),
            ent("p", EntityKind::Part, Some("i"), Some("x")),
        ];
        assert!(matches!(Corpus::new(labelled_part), Err(Error::InvalidEntity { .. })));

        let orphan_view = vec![ent("v", EntityKind::RenderedView, None, None)];
        assert!(Corpus::new(orphan_view).is_err());

        let mut wide = ent("b", EntityKind::Model, None, None);
        wide.descriptor = Descriptor::new(vec![1.0; 3]).unwrap();
        let mixed = vec![ent("a", EntityKind::Model, None, None), wide];
        assert!(matches!(Corpus::new(mixed), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn kinds_may_differ_in_dim() {
        let mut v = ent("v", EntityKind::RenderedView, Some("m"), None);
        v.descriptor = Descriptor::new(vec![1.0; 5]).unwrap();
        let c = Corpus::new(vec![ent("m", EntityKind::Model, None, None), v]).unwrap();
        assert_eq!(c.dims()[&EntityKind::Model], 2);
        assert_eq!(c.dims()[&EntityKind::RenderedView], 5);
    }

    #[test]
    fn descriptor_rejects_non_finite() {
        assert!(Descriptor::new(vec![1.0, f64::NAN]).is_err());
        assert!(Descriptor::new(vec![f64::INFINITY]).is_err());
        assert!(Descriptor::new(vec![]).is_err());
    }
}
