use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use super::{FeatureKind, FeatureMatrix, TargetVector};
use crate::data::{EventKind, TransactionLog};
use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; 5] =
    ["number_of_sessions", "number_of_rounds", "number_of_days", "number_of_purchases", "total_purchase_amount"];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub features: FeatureMatrix,
    pub targets: TargetVector,
    /// Customers with purchases but no gameplay events.
    pub excluded_without_events: usize,
    /// Players whose target horizon extends past the end of observation.
    pub excluded_censored: usize,
}

#[derive(Default)]
struct Player {
    first: Option<f64>,
    events: Vec<(f64, EventKind)>,
    purchases: Vec<(f64, f64)>,
}

/// Per-player behaviour on `[first_event, first_event + window)` and revenue
/// on `[first_event, first_event + target_horizon)`. `number_of_days` counts
/// distinct day indices `floor(t - first_event)` with any event or purchase.
///
/// Players first seen later than `end - target_horizon` are left out, as
/// their target would be truncated; pass `f64::INFINITY` to keep everyone.
pub fn extract_features(log: &TransactionLog, window: f64, target_horizon: f64, end: f64) -> Result<FeatureSet> {
    if !(window > 0.0 && target_horizon >= window) {
        return Err(Error::invalid("need 0 < window <= target horizon"));
    }
    let mut players: BTreeMap<&str, Player> = BTreeMap::new();
    for e in &log.events {
        let p = players.entry(&e.customer_id).or_default();
        p.first = Some(p.first.map_or(e.timestamp, |f: f64| f.min(e.timestamp)));
        p.events.push((e.timestamp, e.kind));
    }
    for r in &log.records {
        players.entry(&r.customer_id).or_default().purchases.push((r.timestamp, r.value));
    }
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let kinds = vec![FeatureKind::Continuous; names.len()];
    let mut features = FeatureMatrix::new(Vec::new(), names, kinds, Vec::new())?;
    let (mut revenue, mut counts) = (Vec::new(), Vec::new());
    let (mut without_events, mut censored) = (0, 0);
    for (id, p) in players {
        let Some(event_first) = p.first else {
            without_events += 1;
            continue;
        };
        let first = p.purchases.iter().map(|x| x.0).fold(event_first, f64::min);
        if first + target_horizon > end {
            censored += 1;
            continue;
        }
        let in_window = |t: f64| t >= first && t < first + window;
        let mut days = BTreeSet::new();
        let (mut sessions, mut rounds) = (0u64, 0u64);
        for &(t, kind) in p.events.iter().filter(|e| in_window(e.0)) {
            days.insert((t - first).floor() as i64);
            match kind {
                EventKind::SessionStart => sessions += 1,
                EventKind::RoundPlayed => rounds += 1,
                EventKind::Purchase => {}
            }
        }
        let (mut n_buy, mut amount) = (0u64, 0.0);
        for &(t, v) in p.purchases.iter().filter(|x| in_window(x.0)) {
            days.insert((t - first).floor() as i64);
            n_buy += 1;
            amount += v;
        }
        let future: Vec<f64> = p.purchases.iter().filter(|x| x.0 < first + target_horizon).map(|x| x.1).collect();
        features.push_row(id.to_string(), &[sessions as f64, rounds as f64, days.len() as f64, n_buy as f64, amount])?;
        revenue.push(future.iter().sum());
        counts.push(future.len() as f64);
    }
    if without_events > 0 {
        log::info!("{without_events} customers without gameplay events excluded");
    }
    Ok(FeatureSet {
        features,
        targets: TargetVector::new(revenue, counts)?,
        excluded_without_events: without_events,
        excluded_censored: censored,
    })
}

/// Header `customer_id, <features...>[, target_revenue, target_purchases]`.
pub fn write_feature_csv<W: Write>(out: W, x: &FeatureMatrix, y: Option<&TargetVector>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec!["customer_id"];
    header.extend(x.names.iter().map(|s| s.as_str()));
    if y.is_some() {
        header.extend(["target_revenue", "target_purchases"]);
    }
    w.write_record(&header)?;
    for i in 0..x.n_rows() {
        let mut rec = vec![x.ids[i].clone()];
        rec.extend(x.row(i).iter().map(|v| v.to_string()));
        if let Some(t) = y {
            rec.push(t.revenue[i].to_string());
            rec.push(t.purchases[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_feature_csv`]; columns named in
/// `categorical` are tagged categorical.
pub fn read_feature_csv<R: Read>(src: R, categorical: &[String]) -> Result<(FeatureMatrix, Option<TargetVector>)> {
    let mut r = csv::Reader::from_reader(src);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.first().map(|s| s.as_str()) != Some("customer_id") {
        return Err(Error::Format("feature table must start with a customer_id column".into()));
    }
    let has_targets = header.iter().any(|h| h == "target_revenue");
    let targets_ok = header.ends_with(&["target_revenue".to_string(), "target_purchases".to_string()]);
    if has_targets && !targets_ok {
        return Err(Error::Format("target_revenue and target_purchases must be the last two columns".into()));
    }
    let n_feat = header.len() - 1 - if has_targets { 2 } else { 0 };
    if n_feat == 0 {
        return Err(Error::Format("feature table has no feature columns".into()));
    }
    let names: Vec<String> = header[1..=n_feat].to_vec();
    let kinds = names
        .iter()
        .map(|n| if categorical.contains(n) { FeatureKind::Categorical } else { FeatureKind::Continuous })
        .collect();
    let mut x = FeatureMatrix::new(Vec::new(), names, kinds, Vec::new())?;
    let (mut rev, mut cnt) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("line {}: column {} is not a number", line + 2, header[j])))
        };
        let row: Vec<f64> = (1..=n_feat).map(parse).collect::<Result<_>>()?;
        x.push_row(rec.get(0).unwrap_or_default().to_string(), &row)?;
        if has_targets {
            rev.push(parse(n_feat + 1)?);
            cnt.push(parse(n_feat + 2)?);
        }
    }
    let y = has_targets.then(|| TargetVector::new(rev, cnt)).transpose()?;
    Ok((x, y))
}
