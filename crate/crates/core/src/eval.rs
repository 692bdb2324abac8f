//! Cross-domain retrieval metrics over cosine-distance rankings.
//!
//! * `Prec@k`: relevant items in the top `k`, divided by `k`.
//! * `AP@k`: mean of the precision at each relevant hit within the top `k`,
//!   divided by the number of such hits (zero when there are none).
//! * `AP`: the same over the full ranking, divided by the total number of
//!   relevant gallery items.
//!
//! A gallery item is relevant when its label equals the query's.

use serde::{Deserialize, Serialize};

use crate::correspondence::cosine_distance;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// A feature vector with its evaluation label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeature {
    pub label: usize,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub label: usize,
    /// Gallery indices of the top `k` results, best first.
    pub top_k: Vec<usize>,
    pub prec_at_k: f64,
    pub ap_at_k: f64,
    pub ap: f64,
    /// Set when no gallery item shares the query's label.
    pub class_absent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub k: usize,
    pub prec_at_k: f64,
    pub map_at_k: f64,
    pub map: f64,
    pub queries: Vec<QueryRecord>,
}

impl RetrievalReport {
    pub const CSV_HEADER: &'static str = "k,prec_at_k,map_at_k,map";

    /// One-line CSV summary matching [`Self::CSV_HEADER`].
    pub fn csv_summary(&self) -> String {
        format!("{},{:.6},{:.6},{:.6}", self.k, self.prec_at_k, self.map_at_k, self.map)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Gallery indices by non-decreasing cosine distance; ties keep index order.
pub fn rank_gallery(query: &[f64], gallery: &[Vec<f64>]) -> Result<Vec<usize>> {
    if gallery.is_empty() {
        return Err(Error::invalid("cannot rank an empty gallery"));
    }
    let dists: Vec<f64> = gallery.iter().map(|g| 1.0 - dot(query, g)).collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Metrics for a single ranking, given which gallery indices are relevant.
pub fn ranking_metrics(ranking: &[usize], relevant: impl Fn(usize) -> bool, k: usize) -> (f64, f64, f64, usize) {
    let total_relevant = ranking.iter().filter(|&&g| relevant(g)).count();
    let mut hits = 0usize;
    let mut precision_sum_k = 0.0;
    let mut precision_sum = 0.0;
    let mut hits_k = 0;
    for (rank, &g) in ranking.iter().enumerate() {
        if relevant(g) {
            hits += 1;
            let precision = hits as f64 / (rank + 1) as f64;
            precision_sum += precision;
            if rank < k {
                precision_sum_k += precision;
                hits_k = hits;
            }
        }
    }
    let prec_k = hits_k as f64 / k as f64;
    let ap_k = if hits_k == 0 { 0.0 } else { precision_sum_k / hits_k as f64 };
    let ap = if total_relevant == 0 { 0.0 } else { precision_sum / total_relevant as f64 };
    (prec_k, ap_k, ap, total_relevant)
}

pub fn evaluate(queries: &[LabeledFeature], gallery: &[LabeledFeature], k: usize) -> Result<RetrievalReport> {
    if queries.is_empty() {
        return Err(Error::invalid("no queries to evaluate"));
    }
    if k == 0 || k > gallery.len() {
        return Err(Error::invalid(format!("cutoff k = {k} must lie in 1..={}", gallery.len())));
    }
    let vectors: Vec<Vec<f64>> = gallery.iter().map(|g| g.vector.clone()).collect();
    let mut records = Vec::with_capacity(queries.len());
    for (qi, q) in queries.iter().enumerate() {
        let ranking = rank_gallery(&q.vector, &vectors)?;
        let (prec_at_k, ap_at_k, ap, total) = ranking_metrics(&ranking, |g| gallery[g].label == q.label, k);
        records.push(QueryRecord {
            query: qi,
            label: q.label,
            top_k: ranking[..k].to_vec(),
            prec_at_k,
            ap_at_k,
            ap,
            class_absent: total == 0,
        });
    }
    let n = records.len() as f64;
    let mean = |f: fn(&QueryRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(RetrievalReport {
        k,
        prec_at_k: mean(|r| r.prec_at_k),
        map_at_k: mean(|r| r.ap_at_k),
        map: mean(|r| r.ap),
        queries: records,
    })
}

/// Mean cosine distance from each query to its nearest gallery item; a
/// cheap cross-domain gap indicator for diagnostics.
pub fn mean_nearest_distance(queries: &[Vec<f64>], gallery: &[Vec<f64>]) -> f64 {
    if queries.is_empty() || gallery.is_empty() {
        return 0.0;
    }
    let total: f64 = queries
        .iter()
        .map(|q| gallery.iter().map(|g| cosine_distance(q, g)).fold(f64::INFINITY, f64::min))
        .sum();
    total / queries.len() as f64
}
