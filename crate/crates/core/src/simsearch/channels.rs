//! The individual similarity channels. Every score lies in `[0, 1]`.

use super::matching::max_weight_matching;
use crate::embed::sigmoid;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// `½(1 + cos(f_i, f_j))`
pub fn sim_entity(fi: &[f64], fj: &[f64]) -> Result<f64> {
    if fi.len() != fj.len() {
        return Err(Error::DimMismatch {
            context: "embedding pair".into(),
            expected: fi.len(),
            actual: fj.len(),
        });
    }
    let (ni, nj) = (norm(fi), norm(fj));
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    let cos = dot(fi, fj) / (ni * nj);
    Ok((0.5 * (1.0 + cos)).clamp(0.0, 1.0))
}

/// Best entity similarity over all cross pairs.
pub fn sim_views<A: AsRef<[f64]>, B: AsRef<[f64]>>(query: &[A], candidate: &[B]) -> Result<f64> {
    if query.is_empty() || candidate.is_empty() {
        return Err(Error::EmptySet("view similarity needs two non-empty sets"));
    }
    let mut best = 0.0f64;
    for q in query {
        for c in candidate {
            best = best.max(sim_entity(q.as_ref(), c.as_ref())?);
        }
    }
    Ok(best)
}

/// `σ(ln c)` for `c` shared distinct words, `0` when nothing is shared.
pub fn word_score(shared: usize) -> f64 {
    if shared == 0 {
        0.0
    } else {
        sigmoid((shared as f64).ln())
    }
}

/// Word-overlap channel over distinct words of the two multisets.
pub fn sim_words(query: &[usize], candidate: &[usize]) -> f64 {
    word_score(shared_words(query, candidate))
}

pub fn shared_words(query: &[usize], candidate: &[usize]) -> usize {
    let mut q = query.to_vec();
    q.sort_unstable();
    q.dedup();
    let mut m = candidate.to_vec();
    m.sort_unstable();
    m.dedup();
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < q.len() && j < m.len() {
        match q[i].cmp(&m[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Maximum-weight bipartite matching of entity similarities, normalized by
/// the size of the smaller set.
pub fn sim_parts<A: AsRef<[f64]>, B: AsRef<[f64]>>(query: &[A], candidate: &[B]) -> Result<f64> {
    if query.is_empty() || candidate.is_empty() {
        return Err(Error::EmptySet("part similarity needs two non-empty sets"));
    }
    let weights = query
        .iter()
        .map(|q| {
            candidate
                .iter()
                .map(|c| sim_entity(q.as_ref(), c.as_ref()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(matching_score(&weights))
}

/// Matched weight sum divided by `min(rows, cols)`.
pub fn matching_score(weights: &[Vec<f64>]) -> f64 {
    let pairs = max_weight_matching(weights);
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs.iter().map(|&(r, c)| weights[r][c]).sum();
    total / pairs.len() as f64
}
