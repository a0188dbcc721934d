use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::loss::PairSample;
use crate::kgraph::ShapeGraph;

/// Positives are the 1-hop neighbours of each node; negatives are drawn
/// uniformly without replacement from the remaining non-neighbours,
/// `neg_ratio` per positive (fewer when not enough exist). Isolated nodes are
/// skipped.
pub fn sample_pairs_with(graph: &ShapeGraph, neg_ratio: usize, rng: &mut ChaCha8Rng) -> Vec<PairSample> {
    let n = graph.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let positives = graph.neighbors(i).to_vec();
        if positives.is_empty() {
            continue;
        }
        // sorted exclusion list: neighbours plus the anchor itself
        let mut excluded = positives.clone();
        let at = excluded.partition_point(|&j| j < i);
        excluded.insert(at, i);
        let available = n - excluded.len();
        let want = (neg_ratio * positives.len()).min(available);
        let mut slots = sample(rng, available, want).into_vec();
        slots.sort_unstable();
        let mut negatives = Vec::with_capacity(want);
        let mut skip = 0;
        for s in slots {
            // the s-th node not in `excluded`
            while skip < excluded.len() && excluded[skip] <= s + skip {
                skip += 1;
            }
            negatives.push(s + skip);
        }
        out.push(PairSample {
            anchor: i,
            positives,
            negatives,
        });
    }
    out
}

pub fn sample_pairs(graph: &ShapeGraph, neg_ratio: usize, seed: u64) -> Vec<PairSample> {
    let mut rng = super::epoch_rng(seed, 0);
    sample_pairs_with(graph, neg_ratio, &mut rng)
}
