#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapekg::datamodel::EntityKind;
use shapekg::embed::{train, EmbeddingTable, GcnConfig};
use shapekg::evalmetrics::{evaluate, EvalReport, RankedQuery};
use shapekg::kgraph::{build_graph, EdgeKind, GraphOptions, Node, ShapeGraph};
use shapekg::linalg::Matrix;
use shapekg::simsearch::{retrieve, ChannelWeights, ScorerRegistry, SearchIndex};
use shapekg::synthgen::{generate, SynthConfig, SynthWorld};
use shapekg::vocab::{build_vocabulary, ProjectionSet, VocabParams, Vocabulary};

pub struct Trained {
    pub world: SynthWorld,
    pub proj: ProjectionSet,
    pub vocab: Vocabulary,
    pub graph: ShapeGraph,
    pub table: EmbeddingTable,
}

/// Synth world -> vocabulary (k = true word count) -> graph -> GCN.
pub fn build(cfg: &SynthConfig, supervised: bool, tweak: impl FnOnce(&mut GcnConfig)) -> Trained {
    let world = generate(cfg).unwrap();
    let params = VocabParams {
        k: cfg.true_words,
        seed: cfg.seed + 1,
        ..VocabParams::default()
    };
    let (proj, vocab) = build_vocabulary(&world.corpus, &params).unwrap();
    let options = GraphOptions {
        supervised,
        seed: cfg.seed + 2,
        ..GraphOptions::default()
    };
    let graph = build_graph(&world.corpus, &vocab, &proj, &options).unwrap();
    let mut gcn = GcnConfig::with_input_dim(graph.dim());
    gcn.seed = cfg.seed + 3;
    tweak(&mut gcn);
    let table = train(&graph, &gcn).unwrap();
    Trained {
        world,
        proj,
        vocab,
        graph,
        table,
    }
}

/// Labels of every candidate model: graph labels plus ground truth.
pub fn candidate_labels(t: &Trained) -> BTreeMap<String, String> {
    t.graph
        .indices_of_kind(EntityKind::Model)
        .filter_map(|i| {
            let n = t.graph.node(i);
            t.world.truth.get(&n.id).or(n.label.as_ref()).map(|l| (n.id.clone(), l.clone()))
        })
        .collect()
}

/// Evaluates every truth query the mode accepts.
pub fn evaluate_mode(t: &Trained, mode: &str, weights: &ChannelWeights) -> EvalReport {
    let registry = ScorerRegistry::with_defaults();
    let scorer = registry.get(mode).unwrap();
    let index = SearchIndex::new(&t.graph, &t.table.embeddings).unwrap();
    let labels = candidate_labels(t);
    let ranked: Vec<RankedQuery> = t
        .world
        .truth
        .iter()
        .filter(|(q, _)| scorer.accepts(t.graph.node(t.graph.index_of(q).unwrap()).kind))
        .map(|(q, label)| {
            let r = retrieve(&index, scorer, q, weights, None).unwrap();
            RankedQuery::from_retrieval(&r, label, &labels).unwrap()
        })
        .collect();
    evaluate(&ranked, 20).unwrap()
}

/// Random simple graph on `n` nodes with edge probability `p`.
pub fn random_graph(n: usize, p: f64, dim: usize, rng: &mut ChaCha8Rng) -> ShapeGraph {
    let nodes = (0..n)
        .map(|i| Node {
            id: format!("n{i}"),
            kind: EntityKind::Model,
            label: None,
            parent: None,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j, EdgeKind::Category));
            }
        }
    }
    let data = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ShapeGraph::from_edges(nodes, &edges, Matrix::from_vec(n, dim, data)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
