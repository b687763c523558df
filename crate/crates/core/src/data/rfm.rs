use std::collections::BTreeMap;

use super::{RfmSummary, TransactionLog};
use crate::error::{Error, Result};

/// Builds one summary per customer with at least one purchase.
///
/// Every purchase at or after the first counts; simultaneous purchases count
/// separately. Output is ordered by customer id, so the result does not
/// depend on the order of `log.records`.
pub fn rfm_summary(log: &TransactionLog, observation_end: f64) -> Result<Vec<RfmSummary>> {
    summarize(log, observation_end, None)
}

/// Like [`rfm_summary`] but on a grid of `period` days: timestamps are
/// floored to whole periods, purchases in the same period merge into one
/// (values summed), and recency and age are expressed in periods.
pub fn rfm_summary_periods(log: &TransactionLog, observation_end: f64, period: f64) -> Result<Vec<RfmSummary>> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::invalid(format!("period must be positive, got {period}")));
    }
    summarize(log, observation_end, Some(period))
}

fn summarize(log: &TransactionLog, observation_end: f64, period: Option<f64>) -> Result<Vec<RfmSummary>> {
    if !observation_end.is_finite() {
        return Err(Error::invalid("observation end must be finite"));
    }
    let mut by_customer: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &log.records {
        if r.timestamp > observation_end {
            return Err(Error::invalid(format!(
                "purchase at {} for {} is after the observation end {observation_end}",
                r.timestamp, r.customer_id
            )));
        }
        by_customer.entry(&r.customer_id).or_default().push((r.timestamp, r.value));
    }
    let end = match period {
        Some(p) => (observation_end / p).floor(),
        None => observation_end,
    };
    let mut out = Vec::with_capacity(by_customer.len());
    for (id, mut purchases) in by_customer {
        purchases.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if let Some(p) = period {
            let mut merged: Vec<(f64, f64)> = Vec::with_capacity(purchases.len());
            for (t, v) in purchases {
                let k = (t / p).floor();
                match merged.last_mut() {
                    Some(last) if last.0 == k => last.1 += v,
                    _ => merged.push((k, v)),
                }
            }
            purchases = merged;
        }
        let first = purchases[0].0;
        let last = purchases[purchases.len() - 1].0;
        let repeats = &purchases[1..];
        let frequency = repeats.len() as u32;
        let monetary_value = if repeats.is_empty() {
            0.0
        } else {
            repeats.iter().map(|p| p.1).sum::<f64>() / repeats.len() as f64
        };
        let recency = if repeats.is_empty() { 0.0 } else { last - first };
        out.push(RfmSummary::new(id, frequency, recency, end - first, monetary_value)?);
    }
    Ok(out)
}

/// Splits purchases and events at `cutoff`: the first log holds everything
/// strictly before it, the second everything at or after it.
pub fn split_calibration_holdout(log: &TransactionLog, cutoff: f64) -> (TransactionLog, TransactionLog) {
    let (cal_r, hold_r): (Vec<_>, Vec<_>) = log.records.iter().cloned().partition(|r| r.timestamp < cutoff);
    let (cal_e, hold_e): (Vec<_>, Vec<_>) = log.events.iter().cloned().partition(|e| e.timestamp < cutoff);
    (
        TransactionLog { records: cal_r, events: cal_e },
        TransactionLog { records: hold_r, events: hold_e },
    )
}

/// Purchase count and revenue per customer.
pub fn customer_totals(log: &TransactionLog) -> BTreeMap<String, (u32, f64)> {
    let mut out: BTreeMap<String, (u32, f64)> = BTreeMap::new();
    for r in &log.records {
        let e = out.entry(r.customer_id.clone()).or_default();
        e.0 += 1;
        e.1 += r.value;
    }
    out
}

/// Inactivity rule standing in for a churn event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityConfig {
    inactivity_window: f64,
}

impl ActivityConfig {
    pub fn new(inactivity_window: f64) -> Result<Self> {
        if inactivity_window.is_finite() && inactivity_window > 0.0 {
            Ok(ActivityConfig { inactivity_window })
        } else {
            Err(Error::invalid(format!("inactivity window must be positive, got {inactivity_window}")))
        }
    }

    pub fn inactivity_window(&self) -> f64 {
        self.inactivity_window
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivityState {
    Active,
    Inactive,
}

/// Active iff the latest event at or before `now` is at most
/// `inactivity_window` days old. The boundary counts as active.
pub fn activity_state(event_times: &[f64], now: f64, config: &ActivityConfig) -> ActivityState {
    let last = event_times.iter().copied().filter(|&t| t <= now).fold(None, |acc: Option<f64>, t| {
        Some(acc.map_or(t, |a| a.max(t)))
    });
    match last {
        Some(t) if now - t <= config.inactivity_window => ActivityState::Active,
        _ => ActivityState::Inactive,
    }
}

/// Per-customer activity timestamps (purchases and events), sorted.
pub fn activity_times(log: &TransactionLog) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &log.records {
        out.entry(r.customer_id.clone()).or_default().push(r.timestamp);
    }
    for e in &log.events {
        out.entry(e.customer_id.clone()).or_default().push(e.timestamp);
    }
    for v in out.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    out
}

/// Relationship lengths for survival estimation: time from first to last
/// activity, censored when the customer is still active at `now`.
pub fn relationship_durations(log: &TransactionLog, now: f64, config: &ActivityConfig) -> Vec<(f64, bool)> {
    activity_times(log)
        .values()
        .filter_map(|times| {
            let seen: Vec<f64> = times.iter().copied().filter(|&t| t <= now).collect();
            let (first, last) = (*seen.first()?, *seen.last()?);
            let censored = activity_state(&seen, now, config) == ActivityState::Active;
            Some((last - first, censored))
        })
        .collect()
}

/// Fraction of customers active on each day `0..=horizon` of their own
/// relationship, over customers observed for the full horizon. Day 0 is the
/// first day of activity, so its fraction is 1.
pub fn daily_active_fractions(log: &TransactionLog, now: f64, horizon: usize) -> Result<Vec<(usize, f64)>> {
    let cohort: Vec<Vec<f64>> = activity_times(log)
        .into_values()
        .filter(|t| t[0] + horizon as f64 + 1.0 <= now)
        .collect();
    if cohort.is_empty() {
        return Err(Error::invalid(format!("no customer observed for {horizon} days")));
    }
    let mut active = vec![0usize; horizon + 1];
    for times in &cohort {
        let start = times[0];
        let mut last_day = None;
        for &t in times {
            let day = ((t - start).floor()) as usize;
            if day <= horizon && last_day != Some(day) {
                active[day] += 1;
                last_day = Some(day);
            }
        }
    }
    let n = cohort.len() as f64;
    Ok(active.iter().enumerate().map(|(i, &c)| (i, c as f64 / n)).collect())
}

/// Cumulative revenue share by day `0..=horizon` of the relationship,
/// pooled over customers observed for the full horizon. The final share is 1.
pub fn cumulative_revenue_fractions(log: &TransactionLog, now: f64, horizon: usize) -> Result<Vec<(usize, f64)>> {
    let starts: BTreeMap<String, f64> = activity_times(log).into_iter().map(|(k, v)| (k, v[0])).collect();
    let mut revenue = vec![0.0; horizon + 1];
    for r in &log.records {
        let start = starts[&r.customer_id];
        if start + horizon as f64 + 1.0 > now {
            continue;
        }
        let day = (r.timestamp - start).floor();
        if day <= horizon as f64 {
            revenue[day as usize] += r.value;
        }
    }
    let total: f64 = revenue.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("no revenue within the horizon"));
    }
    let mut acc = 0.0;
    let mut out: Vec<(usize, f64)> = revenue
        .iter()
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            (i, acc / total)
        })
        .collect();
    out[horizon].1 = 1.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Transaction;
    use proptest::prelude::*;

    fn tx(id: &str, t: f64, v: f64) -> Transaction {
        Transaction { customer_id: id.into(), timestamp: t, value: v }
    }

    fn log(records: Vec<Transaction>) -> TransactionLog {
        TransactionLog::new(records, vec![]).unwrap()
    }

    #[test]
    fn single_purchase() {
        let s = rfm_summary(&log(vec![tx("a", 0.0, 9.0)]), 30.0).unwrap();
        assert_eq!(s, vec![RfmSummary::new("a", 0, 0.0, 30.0, 0.0).unwrap()]);
    }

    #[test]
    fn three_purchases() {
        let l = log(vec![tx("a", 0.0, 5.0), tx("a", 10.0, 5.0), tx("a", 20.0, 5.0)]);
        let s = rfm_summary(&l, 30.0).unwrap();
        assert_eq!(s, vec![RfmSummary::new("a", 2, 20.0, 30.0, 5.0).unwrap()]);
    }

    #[test]
    fn first_purchase_value_is_excluded_from_monetary() {
        let l = log(vec![tx("a", 2.0, 100.0), tx("a", 4.0, 2.0), tx("a", 9.0, 4.0)]);
        let s = rfm_summary(&l, 12.0).unwrap();
        assert_eq!(s[0].monetary_value, 3.0);
        assert_eq!(s[0].recency, 7.0);
        assert_eq!(s[0].age, 10.0);
    }

    #[test]
    fn empty_log_gives_empty_set() {
        assert!(rfm_summary(&TransactionLog::default(), 5.0).unwrap().is_empty());
    }

    #[test]
    fn purchase_after_end_is_rejected() {
        assert!(rfm_summary(&log(vec![tx("a", 10.0, 1.0)]), 5.0).is_err());
    }

    #[test]
    fn periods_merge_same_day_purchases() {
        let l = log(vec![tx("a", 0.2, 1.0), tx("a", 0.7, 2.0), tx("a", 3.5, 4.0), tx("a", 3.9, 1.0)]);
        let s = rfm_summary_periods(&l, 10.0, 1.0).unwrap();
        assert_eq!(s, vec![RfmSummary::new("a", 1, 3.0, 10.0, 5.0).unwrap()]);
        let weekly = rfm_summary_periods(&l, 14.0, 7.0).unwrap();
        assert_eq!(weekly[0].frequency, 0);
        assert_eq!(weekly[0].age, 2.0);
    }

    #[test]
    fn split_edges() {
        let l = log(vec![tx("a", 0.0, 1.0), tx("a", 5.0, 1.0), tx("b", 3.0, 1.0)]);
        let (c, h) = split_calibration_holdout(&l, 100.0);
        assert_eq!(c, l);
        assert!(h.is_empty());
        let (c, h) = split_calibration_holdout(&l, 0.0);
        assert!(c.is_empty());
        assert_eq!(h, l);
    }

    #[test]
    fn activity_rule() {
        let cfg = ActivityConfig::new(7.0).unwrap();
        assert_eq!(activity_state(&[1.0, 7.0], 10.0, &cfg), ActivityState::Active);
        assert_eq!(activity_state(&[2.0], 10.0, &cfg), ActivityState::Inactive);
        assert_eq!(activity_state(&[3.0], 10.0, &cfg), ActivityState::Active);
        assert_eq!(activity_state(&[], 10.0, &cfg), ActivityState::Inactive);
        assert!(ActivityConfig::new(0.0).is_err());
    }

    #[test]
    fn retention_and_revenue_fractions() {
        let l = log(vec![tx("a", 0.0, 1.0), tx("a", 1.5, 3.0), tx("b", 10.0, 4.0)]);
        let ret = daily_active_fractions(&l, 20.0, 2).unwrap();
        assert_eq!(ret, vec![(0, 1.0), (1, 0.5), (2, 0.0)]);
        let mon = cumulative_revenue_fractions(&l, 20.0, 2).unwrap();
        assert_eq!(mon, vec![(0, 0.625), (1, 1.0), (2, 1.0)]);
        let d = relationship_durations(&l, 20.0, &ActivityConfig::new(14.0).unwrap());
        assert_eq!(d, vec![(1.5, false), (0.0, true)]);
    }

    fn arb_log() -> impl Strategy<Value = Vec<Transaction>> {
        prop::collection::vec((0u8..6, 0.0f64..100.0, 0.0f64..50.0), 0..60)
            .prop_map(|v| v.into_iter().map(|(c, t, x)| tx(&format!("c{c}"), t, x)).collect())
    }

    proptest! {
        #[test]
        fn summaries_are_valid_and_order_free(records in arb_log(), seed in any::<u64>()) {
            let a = rfm_summary(&TransactionLog { records: records.clone(), events: vec![] }, 100.0).unwrap();
            let mut shuffled = records;
            let n = shuffled.len();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let b = rfm_summary(&TransactionLog { records: shuffled, events: vec![] }, 100.0).unwrap();
            prop_assert_eq!(&a, &b);
            for s in &a {
                prop_assert!(s.validate().is_ok());
            }
        }

        #[test]
        fn split_conserves_records(records in arb_log(), cutoff in 0.0f64..110.0) {
            let l = log(records);
            let (c, h) = split_calibration_holdout(&l, cutoff);
            prop_assert_eq!(c.records.len() + h.records.len(), l.records.len());
            prop_assert!(c.records.iter().all(|r| r.timestamp < cutoff));
            prop_assert!(h.records.iter().all(|r| r.timestamp >= cutoff));
        }
    }
}
