use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clv_core::data::{
    parse_event_log, parse_transaction_log, read_summaries_csv, rfm_summary, ColumnMapping, EventColumnMapping, ParsedLog,
    RfmSummary, TimestampFormat, TransactionLog,
};
use clv_core::supervised::{extract_features, read_feature_csv, FeatureMatrix, TargetVector};

use crate::args::{DataArgs, Format, GlobalOpts, Timestamps};
use crate::artifact::fingerprint;
use crate::error::{CliError, Result};

pub fn timestamp_format(t: Timestamps) -> TimestampFormat {
    match t {
        Timestamps::Days => TimestampFormat::Days,
        Timestamps::Iso8601 => TimestampFormat::Iso8601,
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn reject_malformed(path: &Path, parsed: &ParsedLog) -> Result<()> {
    if let Some((line, why)) = parsed.rejected.first() {
        return Err(CliError::data(format!(
            "{}: {} malformed rows (first at line {line}: {why}); clean the file with `clv ingest`",
            path.display(),
            parsed.rejected_count()
        )));
    }
    Ok(())
}

/// Reads canonical transaction and event files into one log.
pub fn read_log(transactions: &Path, events: Option<&Path>, ts: Timestamps) -> Result<TransactionLog> {
    let fmt = timestamp_format(ts);
    let parsed = parse_transaction_log(read_bytes(transactions)?.as_slice(), &ColumnMapping::default(), fmt)
        .map_err(|e| CliError::data(format!("{}: {e}", transactions.display())))?;
    reject_malformed(transactions, &parsed)?;
    let mut events_out = Vec::new();
    if let Some(p) = events {
        let ev = parse_event_log(read_bytes(p)?.as_slice(), &EventColumnMapping::default(), fmt)
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        reject_malformed(p, &ev)?;
        events_out = ev.log.events;
    }
    Ok(TransactionLog::new(parsed.log.records, events_out)?)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum InputKind {
    Transactions,
    Summaries,
    Features,
}

fn detect(path: &Path, bytes: &[u8]) -> Result<InputKind> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let has = |c: &str| header.iter().any(|h| h == c);
    Ok(if has("timestamp") {
        InputKind::Transactions
    } else if has("frequency") && has("recency") {
        InputKind::Summaries
    } else {
        InputKind::Features
    })
}

/// Everything a command may need from its input files.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub kind: InputKind,
    pub log: Option<TransactionLog>,
    pub summaries: Vec<RfmSummary>,
    /// End of observation, when known.
    pub end: Option<f64>,
    pub features: Option<FeatureMatrix>,
    pub targets: Option<TargetVector>,
    pub fingerprint: String,
}

impl Dataset {
    pub fn log(&self, what: &str) -> Result<&TransactionLog> {
        self.log.as_ref().ok_or_else(|| {
            CliError::data(format!("{what} needs a transaction log with columns customer_id,timestamp,value"))
        })
    }

    pub fn end(&self) -> Result<f64> {
        self.end.ok_or_else(|| CliError::data("end of observation is unknown; pass --end"))
    }

    pub fn features(&self, what: &str) -> Result<&FeatureMatrix> {
        self.features.as_ref().ok_or_else(|| {
            CliError::data(format!("{what} needs a feature table, or transactions together with --events"))
        })
    }

    pub fn targets(&self, what: &str) -> Result<&TargetVector> {
        self.targets.as_ref().ok_or_else(|| {
            CliError::data(format!("{what} needs targets: missing columns target_revenue,target_purchases"))
        })
    }
}

/// Loads `--input` (and `--events`). With `features`, a gameplay log is
/// turned into the behaviour features; `censor` drops players whose target
/// window is not fully observed.
pub fn load_dataset(args: &DataArgs, g: &GlobalOpts, features: bool, censor: bool) -> Result<Dataset> {
    let bytes = read_bytes(&args.input)?;
    let mut parts = vec![bytes.clone()];
    if let Some(p) = &args.events {
        parts.push(read_bytes(p)?);
    }
    let fp = fingerprint(parts.iter().map(|v| v.as_slice()));
    let kind = detect(&args.input, &bytes)?;
    let mut ds = Dataset { kind, log: None, summaries: Vec::new(), end: args.end, features: None, targets: None, fingerprint: fp };
    match kind {
        InputKind::Transactions => {
            let log = read_log(&args.input, args.events.as_deref(), g.timestamps)?;
            let end = match args.end {
                Some(e) => e,
                None => log.last_timestamp().ok_or_else(|| CliError::data(format!("{} is empty", args.input.display())))?,
            };
            ds.summaries = rfm_summary(&log, end)?;
            if features && !log.events.is_empty() {
                let cut = if censor { end } else { f64::INFINITY };
                let fs = extract_features(&log, args.window_days, args.target_days, cut)?;
                if fs.features.n_rows() == 0 {
                    return Err(CliError::data("no player has a fully observed target window"));
                }
                ds.features = Some(fs.features);
                ds.targets = Some(fs.targets);
            }
            ds.end = Some(end);
            ds.log = Some(log);
        }
        InputKind::Summaries => {
            ds.summaries = read_summaries_csv(bytes.as_slice()).map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
        }
        InputKind::Features => {
            let (x, y) = read_feature_csv(bytes.as_slice(), &args.categorical)
                .map_err(|e| CliError::data(format!("{}: {e}", args.input.display())))?;
            ds.features = Some(x);
            ds.targets = y;
        }
    }
    Ok(ds)
}

/// Writes to the file, or stdout when no path is given.
pub fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        None => {
            let mut buf = Vec::new();
            f(&mut buf)?;
            let mut out = std::io::stdout().lock();
            match out.write_all(&buf).and_then(|_| out.flush()) {
                // a closed reader (`| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::data(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(u64),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            // `-0` reads as a sign error in a report
            Cell::Num(v) if *v == 0.0 => "0".to_string(),
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => s.clone().into(),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, Into::into),
            Cell::Int(v) => (*v).into(),
            Cell::Missing => serde_json::Value::Null,
        }
    }
}

/// Column-named rows rendered as CSV or as `{"columns": .., "rows": ..}` JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn write(&self, out: &mut dyn Write, format: Format) -> Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(Cell::csv))?;
                }
                w.flush().map_err(|e| CliError::data(e.to_string()))
            }
            Format::Json => {
                let rows: Vec<Vec<serde_json::Value>> = self.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect();
                let doc = serde_json::json!({ "columns": self.columns, "rows": rows });
                serde_json::to_writer_pretty(&mut *out, &doc)?;
                writeln!(out).map_err(|e| CliError::data(e.to_string()))
            }
        }
    }
}
