//! Transaction and gameplay-event logs, RFM summaries and RFM segmentation.
//!
//! Time is measured in days as real numbers throughout.

mod ingest;
mod rfm;
mod segment;

use serde::{Deserialize, Serialize};

pub use ingest::{
    parse_event_log, parse_transaction_log, write_events_csv, write_summaries_csv,
    write_transactions_csv, read_summaries_csv, ColumnMapping, EventColumnMapping, ParsedLog,
    TimestampFormat,
};
pub use rfm::{
    activity_state, activity_times, cumulative_revenue_fractions, customer_totals, daily_active_fractions,
    relationship_durations, rfm_summary, rfm_summary_periods, split_calibration_holdout, ActivityConfig,
    ActivityState,
};
pub use segment::{quintiles, rfm_quintile_scores, weighted_rfm_rank, RankedCustomer, RfmCellCode, RfmWeights};

/// One purchase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub customer_id: String,
    pub timestamp: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionStart,
    RoundPlayed,
    Purchase,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionStart => "session_start",
            EventKind::RoundPlayed => "round_played",
            EventKind::Purchase => "purchase",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "session_start" => Some(EventKind::SessionStart),
            "round_played" => Some(EventKind::RoundPlayed),
            "purchase" => Some(EventKind::Purchase),
            _ => None,
        }
    }
}

/// One gameplay event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub customer_id: String,
    pub timestamp: f64,
    pub kind: EventKind,
}

/// Purchases plus optional gameplay events, each kept sorted by
/// `(customer_id, timestamp)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransactionLog {
    pub records: Vec<Transaction>,
    pub events: Vec<Event>,
}

impl TransactionLog {
    /// Builds a log, validating and sorting the records.
    pub fn new(records: Vec<Transaction>, events: Vec<Event>) -> crate::Result<Self> {
        for r in &records {
            if !(r.timestamp.is_finite() && r.timestamp >= 0.0) {
                return Err(crate::Error::invalid(format!("invalid timestamp {} for {}", r.timestamp, r.customer_id)));
            }
            if !(r.value.is_finite() && r.value >= 0.0) {
                return Err(crate::Error::invalid(format!("invalid value {} for {}", r.value, r.customer_id)));
            }
        }
        for e in &events {
            if !(e.timestamp.is_finite() && e.timestamp >= 0.0) {
                return Err(crate::Error::invalid(format!("invalid event timestamp {} for {}", e.timestamp, e.customer_id)));
            }
        }
        let mut log = TransactionLog { records, events };
        log.sort();
        Ok(log)
    }

    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            a.customer_id
                .cmp(&b.customer_id)
                .then(a.timestamp.total_cmp(&b.timestamp))
                .then(a.value.total_cmp(&b.value))
        });
        self.events.sort_by(|a, b| {
            a.customer_id
                .cmp(&b.customer_id)
                .then(a.timestamp.total_cmp(&b.timestamp))
                .then(a.kind.cmp(&b.kind))
        });
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && self.events.is_empty()
    }

    /// Latest purchase or event time, if any.
    pub fn last_timestamp(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.timestamp)
            .chain(self.events.iter().map(|e| e.timestamp))
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
    }
}

/// Per-customer recency/frequency/monetary summary.
///
/// `frequency` counts repeat purchases (the first purchase is excluded),
/// `recency` is the time of the last purchase measured from the first one and
/// `age` is the time from the first purchase to the end of observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfmSummary {
    pub customer_id: String,
    pub frequency: u32,
    pub recency: f64,
    #[serde(rename = "T")]
    pub age: f64,
    pub monetary_value: f64,
}

impl RfmSummary {
    pub fn new(customer_id: impl Into<String>, frequency: u32, recency: f64, age: f64, monetary_value: f64) -> crate::Result<Self> {
        let s = RfmSummary { customer_id: customer_id.into(), frequency, recency, age, monetary_value };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.recency.is_finite()
            && self.age.is_finite()
            && self.monetary_value.is_finite()
            && self.recency >= 0.0
            && self.recency <= self.age
            && self.monetary_value >= 0.0
            && (self.frequency > 0 || (self.recency == 0.0 && self.monetary_value == 0.0));
        if ok {
            Ok(())
        } else {
            Err(crate::Error::invalid(format!("inconsistent RFM summary: {self:?}")))
        }
    }

    /// Days since the last purchase.
    pub fn days_since_last(&self) -> f64 {
        self.age - self.recency
    }
}
