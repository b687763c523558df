use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};

use super::{Event, EventKind, RfmSummary, Transaction, TransactionLog};
use crate::error::{Error, Result};

/// How timestamps are written in the source file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimestampFormat {
    /// Real-valued days since the epoch.
    #[default]
    Days,
    /// ISO-8601 calendar date (`2024-03-01`) or date-time
    /// (`2024-03-01T12:00:00`), converted to days since 1970-01-01.
    Iso8601,
}

impl TimestampFormat {
    pub fn parse_timestamp(self, raw: &str) -> Option<f64> {
        let raw = raw.trim();
        match self {
            TimestampFormat::Days => raw.parse::<f64>().ok(),
            TimestampFormat::Iso8601 => {
                let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?.and_hms_opt(0, 0, 0)?;
                let dt = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
                    .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
                    .ok()
                    .or_else(|| NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok()?.and_hms_opt(0, 0, 0))?;
                Some((dt - epoch).num_milliseconds() as f64 / 86_400_000.0)
            }
        }
    }
}

/// Column names of a transaction file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnMapping {
    pub customer_id: String,
    pub timestamp: String,
    pub value: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            customer_id: "customer_id".into(),
            timestamp: "timestamp".into(),
            value: "value".into(),
        }
    }
}

/// Column names of an event file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventColumnMapping {
    pub customer_id: String,
    pub timestamp: String,
    pub event_kind: String,
}

impl Default for EventColumnMapping {
    fn default() -> Self {
        EventColumnMapping {
            customer_id: "customer_id".into(),
            timestamp: "timestamp".into(),
            event_kind: "event_kind".into(),
        }
    }
}

/// Result of ingesting a delimited file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub log: TransactionLog,
    /// Rows that were dropped, with their 1-based line number and reason.
    pub rejected: Vec<(usize, String)>,
}

impl ParsedLog {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Format(format!("missing column '{name}' (found: {})", headers.iter().collect::<Vec<_>>().join(","))))
}

/// Parses a transaction CSV. Malformed rows (bad timestamp or value,
/// negative values, wrong arity) are rejected and counted.
pub fn parse_transaction_log<R: Read>(source: R, mapping: &ColumnMapping, format: TimestampFormat) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let ci = column_index(&headers, &mapping.customer_id)?;
    let ti = column_index(&headers, &mapping.timestamp)?;
    let vi = column_index(&headers, &mapping.value)?;

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push((line, e.to_string()));
                continue;
            }
        };
        let (Some(id), Some(ts), Some(val)) = (row.get(ci), row.get(ti), row.get(vi)) else {
            rejected.push((line, "missing field".into()));
            continue;
        };
        let id = id.trim();
        if id.is_empty() {
            rejected.push((line, "empty customer id".into()));
            continue;
        }
        let timestamp = match format.parse_timestamp(ts) {
            Some(t) if t.is_finite() && t >= 0.0 => t,
            _ => {
                rejected.push((line, format!("bad timestamp '{ts}'")));
                continue;
            }
        };
        let value = match val.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            _ => {
                rejected.push((line, format!("bad value '{val}'")));
                continue;
            }
        };
        records.push(Transaction { customer_id: id.to_string(), timestamp, value });
    }
    let mut log = TransactionLog { records, events: Vec::new() };
    log.sort();
    Ok(ParsedLog { log, rejected })
}

/// Parses a gameplay-event CSV into `log.events`.
pub fn parse_event_log<R: Read>(source: R, mapping: &EventColumnMapping, format: TimestampFormat) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let ci = column_index(&headers, &mapping.customer_id)?;
    let ti = column_index(&headers, &mapping.timestamp)?;
    let ki = column_index(&headers, &mapping.event_kind)?;

    let mut events = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push((line, e.to_string()));
                continue;
            }
        };
        let (Some(id), Some(ts), Some(kind)) = (row.get(ci), row.get(ti), row.get(ki)) else {
            rejected.push((line, "missing field".into()));
            continue;
        };
        let timestamp = match format.parse_timestamp(ts) {
            Some(t) if t.is_finite() && t >= 0.0 => t,
            _ => {
                rejected.push((line, format!("bad timestamp '{ts}'")));
                continue;
            }
        };
        let Some(kind) = EventKind::parse(kind) else {
            rejected.push((line, format!("unknown event kind '{kind}'")));
            continue;
        };
        if id.trim().is_empty() {
            rejected.push((line, "empty customer id".into()));
            continue;
        }
        events.push(Event { customer_id: id.trim().to_string(), timestamp, kind });
    }
    let mut log = TransactionLog { records: Vec::new(), events };
    log.sort();
    Ok(ParsedLog { log, rejected })
}

/// Writes `customer_id,timestamp,value` with shortest round-trip float
/// formatting, so re-parsing reproduces the records exactly.
pub fn write_transactions_csv<W: Write>(sink: W, records: &[Transaction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["customer_id", "timestamp", "value"])?;
    for r in records {
        w.write_record([r.customer_id.as_str(), &r.timestamp.to_string(), &r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv<W: Write>(sink: W, events: &[Event]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["customer_id", "timestamp", "event_kind"])?;
    for e in events {
        w.write_record([e.customer_id.as_str(), &e.timestamp.to_string(), e.kind.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `customer_id,frequency,recency,T,monetary_value`.
pub fn write_summaries_csv<W: Write>(sink: W, summaries: &[RfmSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["customer_id", "frequency", "recency", "T", "monetary_value"])?;
    for s in summaries {
        w.write_record([
            s.customer_id.as_str(),
            &s.frequency.to_string(),
            &s.recency.to_string(),
            &s.age.to_string(),
            &s.monetary_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a summaries CSV; every row must be a valid summary.
pub fn read_summaries_csv<R: Read>(source: R) -> Result<Vec<RfmSummary>> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let names = ["customer_id", "frequency", "recency", "T", "monetary_value"];
    let mut idx = [0usize; 5];
    let mut missing = Vec::new();
    for (slot, name) in idx.iter_mut().zip(names) {
        match headers.iter().position(|h| h.trim() == name) {
            Some(i) => *slot = i,
            None => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Format(format!("summaries file is missing columns: {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("").trim();
        let bad = |what: &str| Error::Format(format!("line {}: bad {what}", i + 2));
        let frequency = field(1).parse::<u32>().map_err(|_| bad("frequency"))?;
        let recency = field(2).parse::<f64>().map_err(|_| bad("recency"))?;
        let age = field(3).parse::<f64>().map_err(|_| bad("T"))?;
        let monetary_value = field(4).parse::<f64>().map_err(|_| bad("monetary_value"))?;
        out.push(RfmSummary::new(field(0), frequency, recency, age, monetary_value)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_file_has_no_rejects() {
        let src = "customer_id,timestamp,value\na,0,5\na,10,2.5\nb,3,1\n";
        let parsed = parse_transaction_log(src.as_bytes(), &ColumnMapping::default(), TimestampFormat::Days).unwrap();
        assert_eq!(parsed.log.records.len(), 3);
        assert_eq!(parsed.rejected_count(), 0);
    }

    #[test]
    fn negative_value_is_rejected_and_counted() {
        let src = "customer_id,timestamp,value\na,0,5\na,10,-2\nb,3,1\n";
        let parsed = parse_transaction_log(src.as_bytes(), &ColumnMapping::default(), TimestampFormat::Days).unwrap();
        assert_eq!(parsed.log.records.len(), 2);
        assert_eq!(parsed.rejected_count(), 1);
        assert_eq!(parsed.rejected[0].0, 3);
    }

    #[test]
    fn unparseable_fields_are_rejected() {
        let src = "customer_id,timestamp,value\na,yesterday,5\na,1,abc\na,2\nb,3,1\n";
        let parsed = parse_transaction_log(src.as_bytes(), &ColumnMapping::default(), TimestampFormat::Days).unwrap();
        assert_eq!(parsed.log.records.len(), 1);
        assert_eq!(parsed.rejected_count(), 3);
    }

    #[test]
    fn missing_column_is_a_format_error() {
        let src = "id,timestamp,value\na,0,5\n";
        let err = parse_transaction_log(src.as_bytes(), &ColumnMapping::default(), TimestampFormat::Days).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn custom_mapping_and_iso_dates() {
        let src = "when,who,amount\n1970-01-11,x,3\n1970-01-01T12:00:00,x,1\n";
        let mapping = ColumnMapping { customer_id: "who".into(), timestamp: "when".into(), value: "amount".into() };
        let parsed = parse_transaction_log(src.as_bytes(), &mapping, TimestampFormat::Iso8601).unwrap();
        let ts: Vec<f64> = parsed.log.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![0.5, 10.0]);
    }

    #[test]
    fn records_are_sorted_by_customer_then_time() {
        let src = "customer_id,timestamp,value\nb,5,1\na,7,1\nb,1,1\na,2,1\n";
        let parsed = parse_transaction_log(src.as_bytes(), &ColumnMapping::default(), TimestampFormat::Days).unwrap();
        let keys: Vec<(String, f64)> = parsed.log.records.iter().map(|r| (r.customer_id.clone(), r.timestamp)).collect();
        assert_eq!(keys, vec![("a".into(), 2.0), ("a".into(), 7.0), ("b".into(), 1.0), ("b".into(), 5.0)]);
    }

    #[test]
    fn events_parse_and_reject_unknown_kinds() {
        let src = "customer_id,timestamp,event_kind\na,0,session_start\na,0.1,round_played\na,0.2,jump\n";
        let parsed = parse_event_log(src.as_bytes(), &EventColumnMapping::default(), TimestampFormat::Days).unwrap();
        assert_eq!(parsed.log.events.len(), 2);
        assert_eq!(parsed.rejected_count(), 1);
    }

    #[test]
    fn summaries_round_trip() {
        let s = vec![
            RfmSummary::new("a", 2, 20.0, 30.0, 5.0).unwrap(),
            RfmSummary::new("b", 0, 0.0, 12.25, 0.0).unwrap(),
        ];
        let mut buf = Vec::new();
        write_summaries_csv(&mut buf, &s).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("customer_id,frequency,recency,T,monetary_value\n"));
        assert_eq!(read_summaries_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn summaries_missing_columns_are_listed() {
        let err = read_summaries_csv("customer_id,frequency\na,1\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("recency") && msg.contains("monetary_value"));
    }
}
