use std::collections::BTreeMap;
use std::path::Path;

use clv_core::btyd::{discounted_clv, BgNbdParams, GammaGammaParams, ParetoNbdParams, PurchaseHistory};
use clv_core::data::{
    customer_totals, parse_event_log, quintiles, parse_transaction_log, rfm_quintile_scores, rfm_summary, rfm_summary_periods,
    split_calibration_holdout, weighted_rfm_rank, write_events_csv, write_summaries_csv, write_transactions_csv,
    ColumnMapping, EventColumnMapping, RfmWeights, TransactionLog,
};
use clv_core::simulator::{
    simulate_bg_nbd_cohort, simulate_pareto_nbd_cohort, simulate_player_cohort, GameplayIntensity, PlayerCohortConfig,
    PurchaseProcess, SimConfig,
};
use clv_core::supervised::{evaluate, EvalMetrics, Learner, MeanBaseline, Resampled, SmoteConfig, ThreeStage};

use crate::args::*;
use crate::artifact::{ModelArtifact, ModelKind, ModelParams};
use crate::error::{CliError, Result};
use crate::io::{load_dataset, read_bytes, read_log, timestamp_format, with_output, Cell, Table};
use crate::models::{fit_model, forest_config, init_vector, predict, purchase_params, spend_params, FitOptions, PredictOptions};

pub fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, g),
        Command::Summarize(a) => cmd_summarize(a, g),
        Command::Split(a) => cmd_split(a, g),
        Command::Fit(a) => cmd_fit(a, g),
        Command::Predict(a) => cmd_predict(a, g),
        Command::Simulate(a) => cmd_simulate(a, g),
        Command::Evaluate(a) => cmd_evaluate(a, g),
        Command::Segment(a) => cmd_segment(a, g),
    }
}

fn cmd_ingest(a: &IngestArgs, g: &GlobalOpts) -> Result<()> {
    let bytes = read_bytes(&a.input)?;
    let fmt = timestamp_format(g.timestamps);
    let parsed = match a.kind {
        LogKind::Transactions => {
            let m = ColumnMapping { customer_id: a.customer_col.clone(), timestamp: a.timestamp_col.clone(), value: a.value_col.clone() };
            parse_transaction_log(bytes.as_slice(), &m, fmt)
        }
        LogKind::Events => {
            let m = EventColumnMapping {
                customer_id: a.customer_col.clone(),
                timestamp: a.timestamp_col.clone(),
                event_kind: a.event_col.clone(),
            };
            parse_event_log(bytes.as_slice(), &m, fmt)
        }
    }
    .map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?;
    let kept = parsed.log.records.len() + parsed.log.events.len();
    eprintln!("{}: kept {kept} rows, rejected {}", a.input.display(), parsed.rejected_count());
    for (line, why) in parsed.rejected.iter().take(5) {
        eprintln!("  line {line}: {why}");
    }
    with_output(a.output.as_deref(), |w| {
        match a.kind {
            LogKind::Transactions => write_transactions_csv(w, &parsed.log.records)?,
            LogKind::Events => write_events_csv(w, &parsed.log.events)?,
        }
        Ok(())
    })
}

fn observation_end(log: &TransactionLog, end: Option<f64>, path: &Path) -> Result<f64> {
    match end {
        Some(e) => Ok(e),
        None => log.last_timestamp().ok_or_else(|| CliError::data(format!("{} has no rows", path.display()))),
    }
}

fn cmd_summarize(a: &SummarizeArgs, g: &GlobalOpts) -> Result<()> {
    let log = read_log(&a.input, None, g.timestamps)?;
    let end = observation_end(&log, a.end, &a.input)?;
    let summaries = match g.period_days {
        Some(p) => rfm_summary_periods(&log, end, p)?,
        None => rfm_summary(&log, end)?,
    };
    with_output(a.output.as_deref(), |w| {
        match g.format {
            Format::Csv => write_summaries_csv(w, &summaries)?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut *w, &summaries)?;
                writeln!(w).map_err(|e| CliError::data(e.to_string()))?;
            }
        }
        Ok(())
    })
}

fn cmd_split(a: &SplitArgs, g: &GlobalOpts) -> Result<()> {
    let log = read_log(&a.input, a.events.as_deref(), g.timestamps)?;
    let (cal, hold) = split_calibration_holdout(&log, a.cutoff);
    with_output(Some(&a.calibration), |w| Ok(write_transactions_csv(w, &cal.records)?))?;
    with_output(Some(&a.holdout), |w| Ok(write_transactions_csv(w, &hold.records)?))?;
    if let Some(p) = &a.calibration_events {
        with_output(Some(p), |w| Ok(write_events_csv(w, &cal.events)?))?;
    }
    if let Some(p) = &a.holdout_events {
        with_output(Some(p), |w| Ok(write_events_csv(w, &hold.events)?))?;
    }
    eprintln!("calibration: {} purchases, holdout: {} purchases", cal.records.len(), hold.records.len());
    Ok(())
}

fn parse_init(spec: &str, kind: ModelKind) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    if let Ok(v) = values {
        return Ok(v);
    }
    let a = ModelArtifact::load(Path::new(spec))?;
    if a.kind() != kind {
        return Err(CliError::usage(format!("--init artifact is a {} model, expected {kind}", a.kind())));
    }
    init_vector(&a).ok_or_else(|| CliError::usage(format!("{kind} models take no starting parameters")))
}

fn is_supervised(kind: ModelKind) -> bool {
    matches!(kind, ModelKind::Forest | ModelKind::ThreeStage)
}

pub fn fit_summary_table(a: &ModelArtifact) -> Table {
    let mut t = Table::new(&["model_kind", "n_customers", "nll", "rss", "iterations", "converged"]);
    let opt = |v: Option<f64>| v.map_or(Cell::Missing, Cell::Num);
    t.rows.push(vec![
        Cell::Text(a.kind().to_string()),
        Cell::Int(a.fit.n_customers as u64),
        opt(a.fit.nll),
        opt(a.fit.rss),
        a.fit.iterations.map_or(Cell::Missing, |v| Cell::Int(v as u64)),
        a.fit.converged.map_or(Cell::Missing, |v| Cell::Text(v.to_string())),
    ]);
    t
}

fn cmd_fit(a: &FitArgs, g: &GlobalOpts) -> Result<()> {
    let init = a.init.as_deref().map(|s| parse_init(s, a.model)).transpose()?;
    let ds = load_dataset(&a.data, g, is_supervised(a.model), true)?;
    let artifact = fit_model(a.model, &ds, &FitOptions::new(a, g.period(), init), g.seed)?;
    artifact.save(&a.output)?;
    with_output(None, |w| fit_summary_table(&artifact).write(w, g.format))
}

fn cmd_predict(a: &PredictArgs, g: &GlobalOpts) -> Result<()> {
    let artifact = ModelArtifact::load(&a.artifact)?;
    let mut data = a.data.clone();
    let supervised = match &artifact.model {
        ModelParams::Forest(m) => Some((m.window_days, m.target_days, m.categorical.clone())),
        ModelParams::ThreeStage(m) => Some((m.window_days, m.target_days, m.categorical.clone())),
        _ => None,
    };
    if let Some((w, t, c)) = &supervised {
        data.window_days = *w;
        data.target_days = *t;
        data.categorical = c.clone();
    }
    let ds = load_dataset(&data, g, supervised.is_some(), false)?;
    let spend = a.spend.as_deref().map(|p| ModelArtifact::load(p).and_then(|s| spend_params(&s))).transpose()?;
    let opts = PredictOptions { horizon: a.horizon, discount_rate: a.discount_rate, period: g.period() };
    let table = predict(&artifact, spend.as_ref(), &ds, &opts)?;
    with_output(a.output.as_deref(), |w| table.write(w, g.format))
}

fn params<const N: usize>(v: &Option<Vec<f64>>, default: [f64; N], what: &str) -> Result<[f64; N]> {
    match v {
        None => Ok(default),
        Some(v) => v.as_slice().try_into().map_err(|_| CliError::usage(format!("{what} needs {N} comma-separated values"))),
    }
}

fn cmd_simulate(a: &SimulateArgs, g: &GlobalOpts) -> Result<()> {
    let [p, q, gamma] = params(&Some(a.spend_params.clone()), [6.0, 4.0, 15.0], "--spend-params")?;
    let spend = GammaGammaParams::new(p, q, gamma)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let (log, truth) = match a.model {
        SimModel::ParetoNbd | SimModel::BgNbd => {
            let purchase = if a.model == SimModel::ParetoNbd {
                let [r, alpha, s, beta] = params(&a.purchase_params, [0.5, 10.0, 0.6, 12.0], "--purchase-params")?;
                PurchaseProcess::ParetoNbd(ParetoNbdParams::new(r, alpha, s, beta)?)
            } else {
                let [r, alpha, pa, pb] = params(&a.purchase_params, [0.4, 8.0, 0.8, 2.5], "--purchase-params")?;
                PurchaseProcess::BgNbd(BgNbdParams::new(r, alpha, pa, pb)?)
            };
            let mut cfg = SimConfig::new(a.customers, a.days, purchase, spend, g.seed);
            cfg.acquisition_days = a.acquisition_days.unwrap_or(0.0);
            cfg.gameplay = a
                .sessions_per_day
                .map(|s| GameplayIntensity { sessions_per_day: s, rounds_per_session: a.rounds_per_session });
            let (log, truth) =
                if a.model == SimModel::ParetoNbd { simulate_pareto_nbd_cohort(&cfg)? } else { simulate_bg_nbd_cohort(&cfg)? };
            (log, truth.to_json()?)
        }
        SimModel::Players => {
            let mut cfg = PlayerCohortConfig::new(a.customers, g.seed);
            cfg.observation_days = a.days;
            cfg.spend = spend;
            if let Some(d) = a.acquisition_days {
                cfg.install_days = d;
            }
            if let Some(s) = a.sessions_per_day {
                cfg.gameplay = GameplayIntensity { sessions_per_day: s, rounds_per_session: a.rounds_per_session };
            }
            let (log, truth) = simulate_player_cohort(&cfg)?;
            (log, serde_json::to_string_pretty(&truth)?)
        }
    };
    with_output(Some(&a.out_dir.join("transactions.csv")), |w| Ok(write_transactions_csv(w, &log.records)?))?;
    if !log.events.is_empty() {
        with_output(Some(&a.out_dir.join("events.csv")), |w| Ok(write_events_csv(w, &log.events)?))?;
    }
    let truth_path = a.out_dir.join("truth.json");
    std::fs::write(&truth_path, truth).map_err(|e| CliError::io(&truth_path, e))?;
    eprintln!("wrote {} purchases and {} events to {}", log.records.len(), log.events.len(), a.out_dir.display());
    Ok(())
}

pub fn eval_table(m: &EvalMetrics) -> Table {
    let mut t = Table::new(&["fold", "n_train", "n_test", "mse", "nrmse"]);
    let nr = |v: Option<f64>| v.map_or(Cell::Text("undefined".into()), Cell::Num);
    for f in &m.folds {
        t.rows.push(vec![
            Cell::Int(f.fold as u64 + 1),
            Cell::Int(f.n_train as u64),
            Cell::Int(f.n_test as u64),
            Cell::Num(f.mse),
            nr(f.nrmse),
        ]);
    }
    t.rows.push(vec![Cell::Text("mean".into()), Cell::Missing, Cell::Missing, Cell::Num(m.mse), nr(m.nrmse)]);
    t
}

fn run_eval<L: Learner>(learner: L, a: &EvaluateArgs, g: &GlobalOpts, x: &clv_core::supervised::FeatureMatrix, y: &clv_core::supervised::TargetVector) -> Result<EvalMetrics> {
    Ok(match a.forest.smote_ratio {
        Some(r) => {
            let smote = SmoteConfig { k_neighbors: a.forest.smote_k, target_ratio: r, seed: g.seed };
            evaluate(&Resampled { smote, learner }, x, y, a.folds, g.seed)?
        }
        None => evaluate(&learner, x, y, a.folds, g.seed)?,
    })
}

fn cmd_evaluate(a: &EvaluateArgs, g: &GlobalOpts) -> Result<()> {
    let ds = load_dataset(&a.data, g, true, true)?;
    let x = ds.features("evaluate")?;
    let y = ds.targets("evaluate")?;
    let cfg = forest_config(&a.forest, g.seed);
    let m = match a.learner {
        LearnerKind::Forest => run_eval(cfg, a, g, x, y)?,
        LearnerKind::ThreeStage => run_eval(ThreeStage { forest: cfg }, a, g, x, y)?,
        LearnerKind::Mean => run_eval(MeanBaseline, a, g, x, y)?,
    };
    with_output(a.output.as_deref(), |w| eval_table(&m).write(w, g.format))
}

/// Segment report and per-customer table.
pub struct Segmentation {
    pub report: Table,
    pub customers: Table,
}

#[allow(clippy::too_many_arguments)]
pub fn segment(
    calibration: &TransactionLog,
    end: f64,
    holdout: Option<&TransactionLog>,
    purchase: &ModelArtifact,
    spend: &ModelArtifact,
    opts: &PredictOptions,
    weights: &RfmWeights,
    by: SegmentBy,
) -> Result<Segmentation> {
    let model = purchase_params(purchase)?;
    let spend = spend_params(spend)?;
    let summaries = rfm_summary(calibration, end)?;
    let codes = rfm_quintile_scores(&summaries)?;
    let ranks: BTreeMap<String, (usize, f64)> =
        weighted_rfm_rank(&summaries, weights)?.into_iter().map(|r| (r.customer_id, (r.rank, r.score))).collect();
    let realised = holdout.map(customer_totals).unwrap_or_default();
    let clv: Vec<f64> = summaries
        .iter()
        .map(|s| {
            let h = PurchaseHistory::from(s);
            discounted_clv(&model, &spend, &h, s.monetary_value, opts.horizon, opts.discount_rate, opts.period)
        })
        .collect::<clv_core::Result<_>>()?;
    let q = quintiles(&clv);
    let mut customers =
        Table::new(&["customer_id", "rfm_code", "rfm_rank", "rfm_score", "predicted_clv", "clv_quintile", "holdout_revenue"]);
    let mut groups: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for (i, s) in summaries.iter().enumerate() {
        let code = codes[&s.customer_id];
        let (rank, score) = ranks[&s.customer_id];
        let real = realised.get(&s.customer_id).map_or(0.0, |t| t.1);
        customers.rows.push(vec![
            Cell::Text(s.customer_id.clone()),
            Cell::Text(code.to_string()),
            Cell::Int(rank as u64),
            Cell::Num(score),
            Cell::Num(clv[i]),
            Cell::Int(q[i] as u64),
            Cell::Num(real),
        ]);
        let key = match by {
            SegmentBy::Clv => format!("clv_q{}", q[i]),
            SegmentBy::Rfm => code.to_string(),
        };
        let e = groups.entry(key).or_default();
        e.0 += 1;
        e.1 += clv[i];
        e.2 += real;
    }
    let mut report = Table::new(&["segment", "count", "mean_predicted_clv", "mean_holdout_revenue"]);
    for (k, (n, c, r)) in groups {
        let real = if holdout.is_some() { Cell::Num(r / n as f64) } else { Cell::Missing };
        report.rows.push(vec![Cell::Text(k), Cell::Int(n as u64), Cell::Num(c / n as f64), real]);
    }
    Ok(Segmentation { report, customers })
}

fn cmd_segment(a: &SegmentArgs, g: &GlobalOpts) -> Result<()> {
    let cal = read_log(&a.input, None, g.timestamps)?;
    let end = observation_end(&cal, a.end, &a.input)?;
    let hold = a.holdout.as_deref().map(|p| read_log(p, None, g.timestamps)).transpose()?;
    let [wr, wf, wm] = params(&Some(a.weights.clone()), [0.4, 0.3, 0.3], "--weights")?;
    let weights = RfmWeights::new(wr, wf, wm)?;
    let purchase = ModelArtifact::load(&a.artifact)?;
    let spend = ModelArtifact::load(&a.spend)?;
    let opts = PredictOptions { horizon: a.horizon, discount_rate: a.discount_rate, period: g.period() };
    let s = segment(&cal, end, hold.as_ref(), &purchase, &spend, &opts, &weights, a.by)?;
    if let Some(p) = &a.customers {
        with_output(Some(p), |w| s.customers.write(w, g.format))?;
    }
    with_output(a.output.as_deref(), |w| s.report.write(w, g.format))
}
