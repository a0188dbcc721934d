use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sq_dist;

/// Geometric-word centroids fitted over part descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid at convergence.
    pub inertia: f64,
    pub seed: u64,
    /// Inertia after every assignment step, ending with the final value.
    #[serde(default)]
    pub history: Vec<f64>,
}

impl Vocabulary {
    /// Nearest centroid by Euclidean distance; ties go to the lowest index.
    pub fn assign_word(&self, part: &[f64]) -> Result<usize> {
        if part.len() != self.dim {
            return Err(Error::DimMismatch {
                context: "part descriptor vs vocabulary".into(),
                expected: self.dim,
                actual: part.len(),
            });
        }
        Ok(nearest(&self.centroids, part).0)
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count<V: AsRef<[f64]>>(points: &[V]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.as_ref().iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn d2_sample(d2: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut target = rng.gen::<f64>() * total;
    let mut pick = None;
    for (i, &w) in d2.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        pick = Some(i);
        if target < w {
            break;
        }
        target -= w;
    }
    pick.expect("positive weight exists")
}

/// Greedy k-means++: each step draws `2 + ln k` candidates by D² sampling
/// and keeps the one that lowers the potential most.
fn plus_plus_seed<V: AsRef<[f64]>>(points: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].as_ref().to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        // k <= distinct points, so some point is still uncovered
        debug_assert!(total > 0.0);
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = d2_sample(&d2, total, rng);
            let next: Vec<f64> = d2
                .iter()
                .zip(points)
                .map(|(d, p)| d.min(sq_dist(p.as_ref(), points[cand].as_ref())))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, cand, next));
            }
        }
        let (_, pick, next) = best.expect("at least one trial");
        d2 = next;
        centroids.push(points[pick].as_ref().to_vec());
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Stops when no centroid moves more than `tol` or after `max_iters`
/// update steps. Clusters that empty out are reseeded to the point farthest
/// from its current centroid.
pub fn kmeans_fit<V: AsRef<[f64]>>(
    parts: &[V],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Vocabulary> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("k-means on empty input".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let dim = parts[0].as_ref().len();
    if let Some(p) = parts.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::DimMismatch {
            context: "k-means input".into(),
            expected: dim,
            actual: p.as_ref().len(),
        });
    }
    let distinct = distinct_count(parts);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seed(parts, k, &mut rng);
    let mut assign = vec![0usize; parts.len()];
    let mut dist = vec![0.0f64; parts.len()];
    let mut history = Vec::new();

    let assign_all = |centroids: &[Vec<f64>], assign: &mut [usize], dist: &mut [f64]| -> f64 {
        let mut inertia = 0.0;
        for ((p, a), d) in parts.iter().zip(assign.iter_mut()).zip(dist.iter_mut()) {
            let (i, dd) = nearest(centroids, p.as_ref());
            *a = i;
            *d = dd;
            inertia += dd;
        }
        inertia
    };

    for _ in 0..max_iters {
        let inertia = assign_all(&centroids, &mut assign, &mut dist);
        history.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in parts.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    s
                } else {
                    s.into_iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();
        for e in (0..k).filter(|&e| counts[e] == 0) {
            let far = dist
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
                .0;
            next[e] = parts[far].as_ref().to_vec();
            dist[far] = 0.0;
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }
    let inertia = assign_all(&centroids, &mut assign, &mut dist);
    if let Some(&prev) = history.last() {
        debug_assert!(inertia <= prev * (1.0 + 1e-12) + 1e-12, "inertia increased");
    }
    history.push(inertia);

    Ok(Vocabulary {
        k,
        dim,
        centroids,
        inertia,
        seed,
        history,
    })
}
