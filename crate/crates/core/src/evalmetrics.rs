//! Retrieval evaluation: NN, FT, ST, F-measure, DCG, ANMRR, AUC, mAP and
//! precision-recall curves over labelled queries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simsearch::RetrievalResult;

pub const DEFAULT_F_CUTOFF: usize = 20;
/// Recall levels `0, 0.05, ..., 1` of the averaged PR curve.
pub const PR_LEVELS: usize = 21;

/// One query's ranking reduced to relevance flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedQuery {
    pub query: String,
    pub relevance: Vec<bool>,
    /// Relevant candidates in the whole candidate set, retrieved or not.
    pub relevant_total: usize,
}

impl RankedQuery {
    /// Relevance of every ranked id against the query's label. `labels`
    /// holds the label of every candidate; `relevant_total` counts those
    /// sharing the query label, the query itself excluded.
    pub fn from_ranking(query: &str, query_label: &str, ranked: &[&str], labels: &BTreeMap<String, String>) -> Result<Self> {
        if ranked.contains(&query) {
            return Err(Error::Eval(format!("ranking for {query} contains the query itself")));
        }
        let relevance = ranked
            .iter()
            .map(|id| labels.get(*id).is_some_and(|l| l == query_label))
            .collect();
        let relevant_total = labels
            .iter()
            .filter(|(id, l)| id.as_str() != query && l.as_str() == query_label)
            .count();
        Ok(RankedQuery {
            query: query.to_string(),
            relevance,
            relevant_total,
        })
    }

    pub fn from_retrieval(result: &RetrievalResult, query_label: &str, labels: &BTreeMap<String, String>) -> Result<Self> {
        Self::from_ranking(&result.query, query_label, &result.ranked_ids(), labels)
    }

    fn hits(&self) -> usize {
        self.relevance.iter().filter(|&&r| r).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub rank: usize,
    pub recall: f64,
    pub precision: f64,
}

/// One point per rank position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// `false` when some relevant candidate never appears in the list.
    pub complete: bool,
}

pub fn pr_curve(q: &RankedQuery) -> Result<PrCurve> {
    check(q)?;
    let r = q.relevant_total as f64;
    let mut hits = 0usize;
    let points = q
        .relevance
        .iter()
        .enumerate()
        .map(|(i, &rel)| {
            hits += rel as usize;
            PrPoint {
                rank: i + 1,
                recall: hits as f64 / r,
                precision: hits as f64 / (i + 1) as f64,
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        complete: hits == q.relevant_total,
    })
}

fn check(q: &RankedQuery) -> Result<()> {
    if q.relevant_total == 0 {
        return Err(Error::Eval(format!("query {} has no relevant candidates", q.query)));
    }
    if q.hits() > q.relevant_total {
        return Err(Error::Eval(format!(
            "query {} retrieves {} relevant items but only {} exist",
            q.query,
            q.hits(),
            q.relevant_total
        )));
    }
    Ok(())
}

fn hits_at(rel: &[bool], k: usize) -> usize {
    rel.iter().take(k).filter(|&&r| r).count()
}

/// Precision at each relevant hit, in rank order.
fn hit_precisions(rel: &[bool]) -> Vec<f64> {
    let mut hits = 0;
    rel.iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| {
            hits += 1;
            hits as f64 / (i + 1) as f64
        })
        .collect()
}

pub fn nearest_neighbor(q: &RankedQuery) -> f64 {
    if q.relevance.first() == Some(&true) {
        1.0
    } else {
        0.0
    }
}

/// Recall within the first `R` results, `R` = relevant count.
pub fn first_tier(q: &RankedQuery) -> f64 {
    hits_at(&q.relevance, q.relevant_total) as f64 / q.relevant_total as f64
}

/// Recall within the first `2R` results.
pub fn second_tier(q: &RankedQuery) -> f64 {
    hits_at(&q.relevance, 2 * q.relevant_total) as f64 / q.relevant_total as f64
}

/// Harmonic mean of precision and recall over the first `cutoff` results.
pub fn f_measure(q: &RankedQuery, cutoff: usize) -> f64 {
    let k = cutoff.min(q.relevance.len());
    if k == 0 {
        return 0.0;
    }
    let hits = hits_at(&q.relevance, k) as f64;
    let p = hits / k as f64;
    let r = hits / q.relevant_total as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn discount(rank: usize) -> f64 {
    if rank == 1 {
        1.0
    } else {
        1.0 / (rank as f64).log2()
    }
}

/// Discounted cumulative gain normalized by the ideal ranking.
pub fn dcg(q: &RankedQuery) -> f64 {
    let gained: f64 = q
        .relevance
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal: f64 = (1..=q.relevant_total).map(discount).sum();
    gained / ideal
}

/// Normalized modified retrieval rank with window `K = min(4·NG, 2·gtm)`.
/// Relevant items beyond `K` (or never retrieved) count as rank `1.25·K`.
pub fn nmrr(q: &RankedQuery, gtm: usize) -> f64 {
    let ng = q.relevant_total as f64;
    let k = (4 * q.relevant_total).min(2 * gtm) as f64;
    let penalty = 1.25 * k;
    let mut ranks: Vec<f64> = q
        .relevance
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| {
            let rank = (i + 1) as f64;
            if rank <= k {
                rank
            } else {
                penalty
            }
        })
        .collect();
    ranks.resize(q.relevant_total, penalty);
    let avr = ranks.iter().sum::<f64>() / ng;
    let mrr = avr - 0.5 - ng / 2.0;
    (mrr / (penalty - 0.5 - ng / 2.0)).clamp(0.0, 1.0)
}

/// Mean precision at the relevant hits, divided by the full relevant count.
pub fn average_precision(q: &RankedQuery) -> f64 {
    hit_precisions(&q.relevance).iter().sum::<f64>() / q.relevant_total as f64
}

/// Area under the interpolated PR curve: each recall step carries the best
/// precision reached at that recall or beyond.
pub fn interpolated_auc(q: &RankedQuery) -> f64 {
    let p = hit_precisions(&q.relevance);
    let mut best = 0.0f64;
    let mut area = 0.0;
    for v in p.iter().rev() {
        best = best.max(*v);
        area += best;
    }
    area / q.relevant_total as f64
}

/// Area under the uninterpolated step function through the PR points.
pub fn step_auc(curve: &PrCurve) -> f64 {
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for pt in &curve.points {
        area += (pt.recall - prev_recall) * pt.precision;
        prev_recall = pt.recall;
    }
    area
}

/// Interpolated precision at `levels` evenly spaced recall values.
pub fn interpolate_curve(curve: &PrCurve, levels: usize) -> Vec<(f64, f64)> {
    (0..levels)
        .map(|l| {
            let recall = if levels == 1 { 0.0 } else { l as f64 / (levels - 1) as f64 };
            let precision = curve
                .points
                .iter()
                .filter(|p| p.recall >= recall - 1e-12)
                .map(|p| p.precision)
                .fold(0.0, f64::max);
            (recall, precision)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query: String,
    pub nn: f64,
    pub ft: f64,
    pub st: f64,
    pub f_measure: f64,
    pub dcg: f64,
    pub nmrr: f64,
    pub ap: f64,
    pub auc: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f_cutoff: usize,
    pub nn: f64,
    pub ft: f64,
    pub st: f64,
    pub f_measure: f64,
    pub dcg: f64,
    pub anmrr: f64,
    pub auc: f64,
    pub map: f64,
    /// Macro-averaged interpolated `(recall, precision)`.
    pub pr_curve: Vec<(f64, f64)>,
    pub queries: Vec<QueryMetrics>,
    #[serde(skip)]
    pub curves: Vec<PrCurve>,
}

impl EvalReport {
    /// `query,rank,recall,precision` rows for every query.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("query,rank,recall,precision\n");
        for (q, c) in self.queries.iter().zip(&self.curves) {
            for p in &c.points {
                let _ = writeln!(out, "{},{},{},{}", q.query, p.rank, p.recall, p.precision);
            }
        }
        out
    }
}

pub fn evaluate(queries: &[RankedQuery], f_cutoff: usize) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::Eval("no queries to evaluate".into()));
    }
    if f_cutoff == 0 {
        return Err(Error::InvalidArgument("f_cutoff must be at least 1".into()));
    }
    let gtm = queries.iter().map(|q| q.relevant_total).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(queries.len());
    let mut curves = Vec::with_capacity(queries.len());
    for q in queries {
        let curve = pr_curve(q)?;
        rows.push(QueryMetrics {
            query: q.query.clone(),
            nn: nearest_neighbor(q),
            ft: first_tier(q),
            st: second_tier(q),
            f_measure: f_measure(q, f_cutoff),
            dcg: dcg(q),
            nmrr: nmrr(q, gtm),
            ap: average_precision(q),
            auc: interpolated_auc(q),
            complete: curve.complete,
        });
        curves.push(curve);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mut pr = vec![(0.0, 0.0); PR_LEVELS];
    for c in &curves {
        for (acc, (r, p)) in pr.iter_mut().zip(interpolate_curve(c, PR_LEVELS)) {
            acc.0 = r;
            acc.1 += p / n;
        }
    }
    Ok(EvalReport {
        f_cutoff,
        nn: mean(|r| r.nn),
        ft: mean(|r| r.ft),
        st: mean(|r| r.st),
        f_measure: mean(|r| r.f_measure),
        dcg: mean(|r| r.dcg),
        anmrr: mean(|r| r.nmrr),
        auc: mean(|r| r.auc),
        map: mean(|r| r.ap),
        pr_curve: pr,
        queries: rows,
        curves,
    })
}
