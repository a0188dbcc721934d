//! The heterogeneous shape knowledge graph and its GCN propagation operator.
//!
//! Node order is the corpus order followed by one node per geometric word;
//! attached queries are appended after that. Edges are unweighted and carry
//! one of three kinds:
//!
//! * lash: model–view, view–part and image–part subordination,
//! * geometric: part–word, exactly one per part,
//! * category: same-label model–model and image–image pairs (supervised only).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Corpus, Entity, EntityKind, Sidecar};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::linalg::{CsrMatrix, Matrix};
use crate::vocab::{ProjectionSet, Vocabulary};

pub const DEFAULT_CATEGORY_CAP: usize = 10;
pub const GRAPH_SCHEMA: &str = "shapekg.graph/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Lash,
    Geometric,
    Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: EntityKind,
    pub label: Option<String>,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    pub supervised: bool,
    /// Same-label neighbours sampled per node; `None` keeps the full clique.
    pub category_cap: Option<usize>,
    pub seed: u64,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            supervised: true,
            category_cap: Some(DEFAULT_CATEGORY_CAP),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), EdgeKind>,
    features: Matrix,
    neighbors: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    word_of: Vec<Option<usize>>,
    norm_adj: CsrMatrix,
}

fn word_id(i: usize) -> String {
    format!("word:{i}")
}

impl ShapeGraph {
    fn assemble(nodes: Vec<Node>, edges: BTreeMap<(usize, usize), EdgeKind>, features: Matrix) -> Result<Self> {
        let n = nodes.len();
        if features.rows() != n {
            return Err(Error::DimMismatch {
                context: "feature rows vs node count".into(),
                expected: n,
                actual: features.rows(),
            });
        }
        let mut index = HashMap::with_capacity(n);
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(node.id.clone()));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut word_of = vec![None; n];
        for (&(i, j), &kind) in &edges {
            if i >= j || j >= n {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j})")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
            if kind == EdgeKind::Geometric {
                let (part, word) = if nodes[i].kind == EntityKind::Part { (i, j) } else { (j, i) };
                if word_of[part].replace(word).is_some() {
                    return Err(Error::InvalidEntity {
                        id: nodes[part].id.clone(),
                        reason: "part has more than one geometric edge".into(),
                    });
                }
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if let Some(p) = &node.parent {
                let &pi = index.get(p).ok_or_else(|| Error::DanglingParent {
                    id: node.id.clone(),
                    parent: p.clone(),
                })?;
                children[pi].push(i);
            }
        }
        let norm_adj = normalize(&neighbors);
        Ok(Self {
            nodes,
            index,
            edges,
            features,
            neighbors,
            children,
            word_of,
            norm_adj,
        })
    }

    /// Builds a graph from explicit nodes, edges and features. Edge endpoint
    /// order is irrelevant; self-edges and parallel edges are rejected.
    pub fn from_edges(nodes: Vec<Node>, edges: &[(usize, usize, EdgeKind)], features: Matrix) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(i, j, k) in edges {
            if i == j {
                return Err(Error::InvalidArgument(format!("self-edge on node {i}")));
            }
            if map.insert((i.min(j), i.max(j)), k).is_some() {
                return Err(Error::InvalidArgument(format!("parallel edge ({i}, {j})")));
            }
        }
        Self::assemble(nodes, map, features)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeKind)> + '_ {
        self.edges.iter().map(|(&(i, j), &k)| (i, j, k))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_kind(&self, i: usize, j: usize) -> Option<EdgeKind> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.get(&key).copied()
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.values().filter(|&&k| k == kind).count()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Sorted neighbour list (no self-loop).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `1 + number of incident edges`, the diagonal of `D̃`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() + 1
    }

    /// Lash children: views of a model, parts of a view or real image.
    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Geometric-word node of a part.
    pub fn word_of(&self, part: usize) -> Option<usize> {
        self.word_of[part]
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`
    pub fn norm_adj(&self) -> &CsrMatrix {
        &self.norm_adj
    }

    pub fn indices_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(i, _)| i)
    }

    /// Appends a query subtree (a model with views and parts, or a real
    /// image with parts). Queries never receive category edges. Returns the
    /// new graph and the indices of the appended nodes, in input order.
    pub fn attach_query(
        &self,
        query: &[Entity],
        vocab: &Vocabulary,
        proj: &ProjectionSet,
    ) -> Result<(ShapeGraph, Vec<usize>)> {
        let sub = Corpus::new(query.to_vec())?;
        let roots: Vec<&Entity> = sub.entities().iter().filter(|e| e.parent.is_none()).collect();
        let root_ok = roots.len() == 1 && matches!(roots[0].kind, EntityKind::Model | EntityKind::RealImage);
        if !root_ok {
            return Err(Error::Query(
                "a query must be a single model or real-image subtree".into(),
            ));
        }
        if let Some(e) = query.iter().find(|e| self.index.contains_key(&e.id)) {
            return Err(Error::DuplicateId(e.id.clone()));
        }
        let base = self.len();
        let mut nodes = self.nodes.clone();
        let mut edges = self.edges.clone();
        let mut features = self.features.clone();
        let words = self.word_nodes();
        let mut local = HashMap::new();
        for (k, e) in query.iter().enumerate() {
            local.insert(e.id.as_str(), base + k);
        }
        for (k, e) in query.iter().enumerate() {
            let i = base + k;
            let f = proj.project(e.kind, e.descriptor.values())?;
            features.push_row(&f);
            nodes.push(Node {
                id: e.id.clone(),
                kind: e.kind,
                label: None,
                parent: e.parent.clone(),
            });
            if let Some(p) = &e.parent {
                edges.insert((local[p.as_str()], i), EdgeKind::Lash);
            }
            if e.kind == EntityKind::Part {
                let w = vocab.assign_word(&f)?;
                let wi = *words.get(w).ok_or_else(|| {
                    Error::InvalidArgument(format!("vocabulary word {w} has no graph node"))
                })?;
                edges.insert((wi, i), EdgeKind::Geometric);
            }
        }
        let graph = ShapeGraph::assemble(nodes, edges, features)?;
        Ok((graph, (base..base + query.len()).collect()))
    }

    /// Graph indices of the geometric-word nodes, by word number.
    pub fn word_nodes(&self) -> Vec<usize> {
        let mut words: Vec<(usize, usize)> = self
            .indices_of_kind(EntityKind::GeometricWord)
            .map(|i| {
                let n = self.nodes[i].id.strip_prefix("word:").and_then(|s| s.parse().ok());
                (n.unwrap_or(usize::MAX), i)
            })
            .collect();
        words.sort_unstable();
        words.into_iter().map(|(_, i)| i).collect()
    }

    pub fn to_file(&self, vocab_ref: Option<String>) -> GraphFile {
        GraphFile {
            schema: GRAPH_SCHEMA.into(),
            nodes: self.nodes.clone(),
            edges: self.edges().collect(),
            dim: self.dim(),
            vocab_ref,
        }
    }

    /// Writes the JSON graph plus the feature sidecar next to it.
    pub fn save(&self, path: &Path, vocab_ref: Option<String>) -> Result<()> {
        Sidecar::from_matrix(&self.features)?.write(&features_path(path))?;
        fsutil::write_json(path, &self.to_file(vocab_ref))
    }

    pub fn load(path: &Path) -> Result<(ShapeGraph, GraphFile)> {
        let raw: serde_json::Value = fsutil::read_json(path)?;
        crate::check_schema(&raw, GRAPH_SCHEMA, path)?;
        let file: GraphFile = serde_json::from_value(raw).map_err(|e| Error::json(path, e))?;
        let features = Sidecar::read(&features_path(path))?.to_matrix();
        if features.cols() != file.dim {
            return Err(Error::DimMismatch {
                context: format!("feature sidecar of {}", path.display()),
                expected: file.dim,
                actual: features.cols(),
            });
        }
        let edges = file
            .edges
            .iter()
            .map(|&(i, j, k)| ((i.min(j), i.max(j)), k))
            .collect();
        let graph = ShapeGraph::assemble(file.nodes.clone(), edges, features)?;
        Ok((graph, file))
    }
}

pub fn features_path(graph_path: &Path) -> std::path::PathBuf {
    fsutil::sibling(graph_path, "features.gwkg")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub schema: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
    pub dim: usize,
    pub vocab_ref: Option<String>,
}

fn normalize(neighbors: &[Vec<usize>]) -> CsrMatrix {
    let deg: Vec<f64> = neighbors.iter().map(|nb| (nb.len() + 1) as f64).collect();
    let rows = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut row: Vec<(usize, f64)> = nb
                .iter()
                .map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                .collect();
            row.push((i, 1.0 / deg[i]));
            row
        })
        .collect();
    CsrMatrix::from_rows(neighbors.len(), rows)
}

/// Symmetric normalized adjacency with self-loops for `graph`.
pub fn normalized_adjacency(graph: &ShapeGraph) -> &CsrMatrix {
    graph.norm_adj()
}

/// Assembles the knowledge graph from a corpus and fitted vocabulary.
pub fn build_graph(
    corpus: &Corpus,
    vocab: &Vocabulary,
    proj: &ProjectionSet,
    options: &GraphOptions,
) -> Result<ShapeGraph> {
    if vocab.dim != proj.target_dim {
        return Err(Error::DimMismatch {
            context: "vocabulary dim vs projected dim".into(),
            expected: proj.target_dim,
            actual: vocab.dim,
        });
    }
    let n_entities = corpus.len();
    let mut nodes = Vec::with_capacity(n_entities + vocab.k);
    let mut features = Matrix::zeros(0, 0);
    let mut edges = BTreeMap::new();
    let word_base = n_entities;

    for (i, e) in corpus.entities().iter().enumerate() {
        let f = proj.project(e.kind, e.descriptor.values())?;
        if let Some(p) = &e.parent {
            let pi = corpus.position(p).expect("validated corpus");
            edges.insert((pi.min(i), pi.max(i)), EdgeKind::Lash);
        }
        if e.kind == EntityKind::Part {
            let w = vocab.assign_word(&f)?;
            edges.insert((i, word_base + w), EdgeKind::Geometric);
        }
        features.push_row(&f);
        nodes.push(Node {
            id: e.id.clone(),
            kind: e.kind,
            label: e.label.clone(),
            parent: e.parent.clone(),
        });
    }
    for (w, c) in vocab.centroids.iter().enumerate() {
        let id = word_id(w);
        if corpus.get(&id).is_some() {
            return Err(Error::DuplicateId(id));
        }
        features.push_row(c);
        nodes.push(Node {
            id,
            kind: EntityKind::GeometricWord,
            label: None,
            parent: None,
        });
    }
    if features.rows() == 0 {
        features = Matrix::zeros(0, proj.target_dim);
    }

    if options.supervised {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for kind in [EntityKind::Model, EntityKind::RealImage] {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, e) in corpus.entities().iter().enumerate() {
                if e.kind == kind {
                    if let Some(l) = &e.label {
                        groups.entry(l.as_str()).or_default().push(i);
                    }
                }
            }
            for members in groups.values() {
                for (pos, &i) in members.iter().enumerate() {
                    let others: Vec<usize> = members
                        .iter()
                        .enumerate()
                        .filter(|&(q, _)| q != pos)
                        .map(|(_, &j)| j)
                        .collect();
                    let chosen: Vec<usize> = match options.category_cap {
                        Some(cap) if others.len() > cap => sample(&mut rng, others.len(), cap)
                            .into_iter()
                            .map(|q| others[q])
                            .collect(),
                        _ => others,
                    };
                    for j in chosen {
                        edges.entry((i.min(j), i.max(j))).or_insert(EdgeKind::Category);
                    }
                }
            }
        }
    }
    ShapeGraph::assemble(nodes, edges, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Descriptor;
    use crate::vocab::fit_projections;

    fn ent(id: &str, kind: EntityKind, parent: Option<&str>, label: Option<&str>, v: Vec<f64>) -> Entity {
        Entity {
            id: id.into(),
            kind,
            label: label.map(Into::into),
            parent: parent.map(Into::into),
            descriptor: Descriptor::new(v).unwrap(),
        }
    }

    fn one_word_vocab(dim: usize) -> Vocabulary {
        Vocabulary {
            k: 1,
            dim,
            centroids: vec![vec![0.0; dim]],
            inertia: 0.0,
            seed: 0,
            history: vec![],
        }
    }

    /// 1 model, 2 views, 2 parts per view; extra models are labelled `label`.
    fn small_corpus(models: usize) -> Corpus {
        let mut es = Vec::new();
        for m in 0..models {
            let mid = format!("m{m}");
            es.push(ent(&mid, EntityKind::Model, None, Some("chair"), vec![m as f64, 1.0, 0.0]));
            if m > 0 {
                continue;
            }
            for v in 0..2 {
                let vid = format!("v{v}");
                es.push(ent(&vid, EntityKind::RenderedView, Some(&mid), None, vec![0.0, v as f64, 1.0]));
                for p in 0..2 {
                    es.push(ent(
                        &format!("p{v}{p}"),
                        EntityKind::Part,
                        Some(&vid),
                        None,
                        vec![p as f64, 0.5 * v as f64, 2.0 + p as f64],
                    ));
                }
            }
        }
        Corpus::new(es).unwrap()
    }

    fn unsupervised() -> GraphOptions {
        GraphOptions {
            supervised: false,
            ..Default::default()
        }
    }

    #[test]
    fn hand_enumerated_construction() {
        let c = small_corpus(1);
        let proj = fit_projections(&c, Some(2)).unwrap();
        let g = build_graph(&c, &one_word_vocab(2), &proj, &unsupervised()).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.count_edges(EdgeKind::Lash), 6);
        assert_eq!(g.count_edges(EdgeKind::Geometric), 4);
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.count_edges(EdgeKind::Category), 0);
        for p in g.indices_of_kind(EntityKind::Part) {
            assert_eq!(g.word_of(p), Some(7));
        }
        assert_eq!(g.degree(7), 5);
    }

    #[test]
    fn single_category_edge() {
        let c = small_corpus(2);
        let proj = fit_projections(&c, Some(2)).unwrap();
        let g = build_graph(&c, &one_word_vocab(2), &proj, &GraphOptions::default()).unwrap();
        assert_eq!(g.count_edges(EdgeKind::Category), 1);
        let (a, b) = (g.index_of("m0").unwrap(), g.index_of("m1").unwrap());
        assert_eq!(g.edge_kind(a, b), Some(EdgeKind::Category));
    }

    #[test]
    fn category_cap_limits_sampling() {
        let es: Vec<Entity> = (0..12)
            .map(|i| ent(&format!("m{i}"), EntityKind::Model, None, Some("a"), vec![i as f64, (i * i) as f64]))
            .collect();
        let c = Corpus::new(es).unwrap();
        let proj = fit_projections(&c, Some(1)).unwrap();
        let vocab = one_word_vocab(1);
        let full = build_graph(&c, &vocab, &proj, &GraphOptions { category_cap: None, ..Default::default() }).unwrap();
        assert_eq!(full.count_edges(EdgeKind::Category), 66);
        let capped = build_graph(&c, &vocab, &proj, &GraphOptions { category_cap: Some(2), ..Default::default() }).unwrap();
        let n = capped.count_edges(EdgeKind::Category);
        assert!((12..=24).contains(&n), "{n}");
        let again = build_graph(&c, &vocab, &proj, &GraphOptions { category_cap: Some(2), ..Default::default() }).unwrap();
        assert_eq!(capped, again);
    }

    #[test]
    fn zero_parts_builds() {
        let c = Corpus::new(vec![
            ent("a", EntityKind::Model, None, None, vec![0.0, 1.0]),
            ent("b", EntityKind::Model, None, None, vec![1.0, 0.0]),
            ent("v", EntityKind::RenderedView, Some("a"), None, vec![1.0, 0.0]),
        ])
        .unwrap();
        let proj = fit_projections(&c, Some(1)).unwrap();
        let g = build_graph(&c, &one_word_vocab(1), &proj, &unsupervised()).unwrap();
        assert_eq!(g.count_edges(EdgeKind::Geometric), 0);
        for w in g.indices_of_kind(EntityKind::GeometricWord) {
            assert!(g.neighbors(w).is_empty());
        }
    }

    #[test]
    fn normalized_adjacency_examples() {
        let c = Corpus::new(vec![ent("a", EntityKind::Model, None, None, vec![0.0])]).unwrap();
        // a lone node: project via a hand-made identity projection
        let proj = ProjectionSet {
            target_dim: 1,
            projections: vec![crate::vocab::PcaProjection {
                mean: vec![0.0],
                components: vec![vec![1.0]],
                spectrum: vec![1.0],
            }],
            by_kind: [(EntityKind::Model, 0)].into_iter().collect(),
        };
        let vocab = Vocabulary { k: 0, dim: 1, centroids: vec![], inertia: 0.0, seed: 0, history: vec![] };
        let g = build_graph(&c, &vocab, &proj, &unsupervised()).unwrap();
        assert_eq!(normalized_adjacency(&g).to_dense(), Matrix::from_rows(&[[1.0]]));

        let pair = normalize(&[vec![1], vec![0]]).to_dense();
        assert_eq!(pair, Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]));

        let path = normalize(&[vec![1], vec![0, 2], vec![1]]);
        assert_eq!(path.get(0, 0), 0.5);
        assert_eq!(path.get(1, 1), 1.0 / 3.0);
        assert!((path.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(path.get(0, 2), 0.0);
    }

    #[test]
    fn attach_image_query() {
        let c = small_corpus(1);
        let proj = fit_projections(&c, Some(2)).unwrap();
        let mut proj = proj;
        proj.by_kind.insert(EntityKind::RealImage, proj.by_kind[&EntityKind::Part]);
        let vocab = one_word_vocab(2);
        let g = build_graph(&c, &vocab, &proj, &unsupervised()).unwrap();
        let before = g.clone();
        let mut q = vec![ent("q", EntityKind::RealImage, None, Some("secret"), vec![1.0, 1.0, 1.0])];
        for p in 0..3 {
            q.push(ent(&format!("qp{p}"), EntityKind::Part, Some("q"), None, vec![p as f64, 0.0, 1.0]));
        }
        let (ga, ids) = g.attach_query(&q, &vocab, &proj).unwrap();
        assert_eq!(ga.len(), g.len() + 4);
        assert_eq!(ids, vec![8, 9, 10, 11]);
        assert_eq!(ga.count_edges(EdgeKind::Geometric), g.count_edges(EdgeKind::Geometric) + 3);
        assert_eq!(ga.count_edges(EdgeKind::Category), 0);
        assert_eq!(ga.node(8).label, None);
        for i in 0..g.len() {
            assert_eq!(ga.node(i), g.node(i));
        }
        assert_eq!(g, before);

        let model = vec![ent("qm", EntityKind::Model, None, None, vec![0.0, 0.0, 0.0])];
        let (gm, _) = g.attach_query(&model, &vocab, &proj).unwrap();
        assert_eq!(gm.len(), g.len() + 1);
        assert_eq!(gm.edge_count(), g.edge_count());

        let orphan_part = vec![ent("x", EntityKind::Part, Some("v0"), None, vec![0.0; 3])];
        assert!(g.attach_query(&orphan_part, &vocab, &proj).is_err());
        let clash = vec![ent("m0", EntityKind::Model, None, None, vec![0.0; 3])];
        assert!(matches!(g.attach_query(&clash, &vocab, &proj), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let c = small_corpus(2);
        let proj = fit_projections(&c, Some(2)).unwrap();
        let g = build_graph(&c, &one_word_vocab(2), &proj, &GraphOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        g.save(&path, Some("vocab.json".into())).unwrap();
        let (loaded, file) = ShapeGraph::load(&path).unwrap();
        assert_eq!(file.vocab_ref.as_deref(), Some("vocab.json"));
        assert_eq!(loaded.nodes(), g.nodes());
        assert_eq!(loaded.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        assert!(loaded.features().max_abs_diff(g.features()) < 1e-6);
    }
}
