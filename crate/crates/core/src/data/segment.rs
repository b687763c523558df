use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::RfmSummary;
use crate::error::{Error, Result};

/// Quintile triple, each in `1..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RfmCellCode {
    pub r_quintile: u8,
    pub f_quintile: u8,
    pub m_quintile: u8,
}

impl RfmCellCode {
    pub fn new(r: u8, f: u8, m: u8) -> Result<Self> {
        if [r, f, m].iter().all(|q| (1..=5).contains(q)) {
            Ok(RfmCellCode { r_quintile: r, f_quintile: f, m_quintile: m })
        } else {
            Err(Error::invalid(format!("quintiles must be in 1..=5, got ({r}, {f}, {m})")))
        }
    }

    /// Position in `0..125`.
    pub fn index(&self) -> usize {
        (self.r_quintile as usize - 1) * 25 + (self.f_quintile as usize - 1) * 5 + (self.m_quintile as usize - 1)
    }
}

impl fmt::Display for RfmCellCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.r_quintile, self.f_quintile, self.m_quintile)
    }
}

/// Rank-based quintiles: a value with `L` strictly smaller values among `N`
/// gets `floor(5 L / N) + 1`, so ties fall into the lowest quintile they span.
pub fn quintiles(values: &[f64]) -> Vec<u8> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0u8; n];
    let mut lower = 0usize;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[order[pos - 1]] < values[i] {
            lower = pos;
        }
        out[i] = (5 * lower / n) as u8 + 1;
    }
    out
}

/// Scores recency, frequency and monetary value into quintiles. More recent
/// customers (fewer days since the last purchase) get higher recency scores.
pub fn rfm_quintile_scores(summaries: &[RfmSummary]) -> Result<BTreeMap<String, RfmCellCode>> {
    if summaries.len() < 5 {
        return Err(Error::invalid(format!("quintile scoring needs at least 5 customers, got {}", summaries.len())));
    }
    let recency: Vec<f64> = summaries.iter().map(|s| -s.days_since_last()).collect();
    let frequency: Vec<f64> = summaries.iter().map(|s| s.frequency as f64).collect();
    let monetary: Vec<f64> = summaries.iter().map(|s| s.monetary_value).collect();
    let (qr, qf, qm) = (quintiles(&recency), quintiles(&frequency), quintiles(&monetary));
    Ok(summaries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (s.customer_id.clone(), RfmCellCode { r_quintile: qr[i], f_quintile: qf[i], m_quintile: qm[i] })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfmWeights {
    pub recency: f64,
    pub frequency: f64,
    pub monetary: f64,
}

impl RfmWeights {
    pub fn new(recency: f64, frequency: f64, monetary: f64) -> Result<Self> {
        let w = [recency, frequency, monetary];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights must be non-negative and sum to 1, got {w:?}")));
        }
        Ok(RfmWeights { recency, frequency, monetary })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCustomer {
    pub customer_id: String,
    pub score: f64,
    /// 1-based position.
    pub rank: usize,
}

/// Min-max normalised; a constant column maps to 0 everywhere.
fn normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Weighted sum of min-max normalised variables, sorted by descending score
/// with ties broken by ascending customer id. Recency is inverted so that the
/// most recent customer scores 1.
pub fn weighted_rfm_rank(summaries: &[RfmSummary], weights: &RfmWeights) -> Result<Vec<RankedCustomer>> {
    if summaries.is_empty() {
        return Err(Error::invalid("ranking needs at least one customer"));
    }
    let r = normalize(&summaries.iter().map(|s| -s.days_since_last()).collect::<Vec<_>>());
    let f = normalize(&summaries.iter().map(|s| s.frequency as f64).collect::<Vec<_>>());
    let m = normalize(&summaries.iter().map(|s| s.monetary_value).collect::<Vec<_>>());
    let mut ranked: Vec<RankedCustomer> = summaries
        .iter()
        .enumerate()
        .map(|(i, s)| RankedCustomer {
            customer_id: s.customer_id.clone(),
            score: weights.recency * r[i] + weights.frequency * f[i] + weights.monetary * m[i],
            rank: 0,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.customer_id.cmp(&b.customer_id)));
    for (i, c) in ranked.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(ranked)
}
