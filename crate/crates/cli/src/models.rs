use std::collections::BTreeMap;

use clv_core::average::{
    basic_clv, fit_monetization_curve, fit_retention_curve, kaplan_meier, monetization_clv, retention_clv, BasicClvConfig,
    RetentionCurve, RetentionFamily,
};
use clv_core::btyd::{
    conditional_expected_value, discounted_clv, fit_bg_nbd_with, fit_gamma_gamma_with, fit_pareto_nbd_with, BgNbdParams,
    FitConfig, FitResult, GammaGammaParams, ParetoNbdParams, PurchaseHistory, PurchaseModel, PurchaseParams, SpendHistory,
};
use clv_core::data::{
    activity_times, cumulative_revenue_fractions, customer_totals, daily_active_fractions, relationship_durations,
    ActivityConfig, TransactionLog,
};
use clv_core::markov::{discretize_states, estimate_state_rewards, learn_transition_matrix, mcm_clv, Horizon, StateSpace};
use clv_core::supervised::{
    FeatureMatrix, FeaturesPerSplit, ForestConfig, Learner, Predict, Resampled, SmoteConfig, TargetVector,
    ThreeStage,
};

use crate::args::{FitArgs, ForestArgs, RetentionKind};
use crate::artifact::{
    BasicModel, FitSummary, MarkovModel, ModelArtifact, ModelKind, ModelParams, MonetizationModel, RetentionModel,
    SupervisedModel,
};
use crate::error::{CliError, Result};
use crate::io::{Cell, Dataset, Table};

/// Settings of `fit` that do not depend on the input files.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub penalizer: f64,
    pub init: Option<Vec<f64>>,
    pub starts: usize,
    pub repeat_only: bool,
    pub marketing_cost: f64,
    pub curve_days: usize,
    pub family: RetentionKind,
    pub inactivity_days: f64,
    pub markov_cells: u32,
    pub period_days: f64,
    pub forest: ForestArgs,
    pub window_days: f64,
    pub target_days: f64,
    pub categorical: Vec<String>,
}

impl FitOptions {
    pub fn new(args: &FitArgs, period_days: f64, init: Option<Vec<f64>>) -> Self {
        FitOptions {
            penalizer: args.penalizer,
            init,
            starts: args.starts,
            repeat_only: args.repeat_only,
            marketing_cost: args.marketing_cost,
            curve_days: args.curve_days,
            family: args.family,
            inactivity_days: args.inactivity_days,
            markov_cells: args.markov_cells,
            period_days,
            forest: args.forest.clone(),
            window_days: args.data.window_days,
            target_days: args.data.target_days,
            categorical: args.data.categorical.clone(),
        }
    }

    fn supervised<M>(&self, model: M) -> SupervisedModel<M> {
        SupervisedModel {
            model,
            window_days: self.window_days,
            target_days: self.target_days,
            categorical: self.categorical.clone(),
        }
    }
}

/// Flat parameter vector of a fitted BTYD artifact, for `--init`.
pub fn init_vector(a: &ModelArtifact) -> Option<Vec<f64>> {
    match &a.model {
        ModelParams::ParetoNbd(p) => Some(p.to_vec()),
        ModelParams::BgNbd(p) => Some(p.to_vec()),
        ModelParams::GammaGamma(p) => Some(p.to_vec()),
        _ => None,
    }
}

fn btyd_summary<P>(r: &FitResult<P, f64>, n: usize) -> FitSummary {
    FitSummary {
        n_customers: n,
        nll: Some(r.nll),
        rss: None,
        iterations: Some(r.iterations),
        converged: Some(r.converged),
        penalizer: Some(r.penalizer),
    }
}

fn init_of(init: &Option<Vec<f64>>, n: usize, kind: ModelKind) -> Result<Option<&[f64]>> {
    match init {
        Some(v) if v.len() != n => Err(CliError::usage(format!("--init for {kind} needs {n} values, got {}", v.len()))),
        Some(v) => Ok(Some(v.as_slice())),
        None => Ok(None),
    }
}

pub fn forest_config(f: &ForestArgs, seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees: f.trees,
        max_depth: f.max_depth,
        min_samples_leaf: f.min_samples_leaf,
        bootstrap: !f.no_bootstrap,
        features_per_split: FeaturesPerSplit::Auto,
        seed,
    }
}

fn fit_learner<L: Learner>(learner: L, f: &ForestArgs, seed: u64, x: &FeatureMatrix, y: &TargetVector) -> Result<L::Model> {
    Ok(match f.smote_ratio {
        Some(ratio) => Resampled { smote: SmoteConfig { k_neighbors: f.smote_k, target_ratio: ratio, seed }, learner }.fit(x, y)?,
        None => learner.fit(x, y)?,
    })
}

/// Fits `kind` on the dataset.
pub fn fit_model(kind: ModelKind, ds: &Dataset, o: &FitOptions, seed: u64) -> Result<ModelArtifact> {
    let config = FitConfig { penalizer: o.penalizer, n_starts: o.starts, seed, ..FitConfig::default() };
    let histories = || ds.summaries.iter().map(PurchaseHistory::from).collect::<Vec<_>>();
    let (model, summary) = match kind {
        ModelKind::ParetoNbd => {
            let init = init_of(&o.init, 4, kind)?.map(|v| ParetoNbdParams::new(v[0], v[1], v[2], v[3])).transpose()?;
            let r = fit_pareto_nbd_with(&histories(), &config, init.as_ref())?;
            (ModelParams::ParetoNbd(r.params), btyd_summary(&r, ds.summaries.len()))
        }
        ModelKind::BgNbd => {
            let init = init_of(&o.init, 4, kind)?.map(|v| BgNbdParams::new(v[0], v[1], v[2], v[3])).transpose()?;
            let r = fit_bg_nbd_with(&histories(), &config, init.as_ref())?;
            (ModelParams::BgNbd(r.params), btyd_summary(&r, ds.summaries.len()))
        }
        ModelKind::GammaGamma => {
            let init = init_of(&o.init, 3, kind)?.map(|v| GammaGammaParams::new(v[0], v[1], v[2])).transpose()?;
            let spend: Vec<SpendHistory<f64>> =
                ds.summaries.iter().filter(|s| !o.repeat_only || s.frequency > 0).map(SpendHistory::from).collect();
            let r = fit_gamma_gamma_with(&spend, &config, init.as_ref())?;
            (ModelParams::GammaGamma(r.params), btyd_summary(&r, spend.len()))
        }
        ModelKind::Basic => {
            let (m, n) = fit_basic(ds.log("basic model")?, ds.end()?, o.period_days, o.marketing_cost)?;
            (ModelParams::Basic(m), FitSummary { n_customers: n, ..FitSummary::default() })
        }
        ModelKind::Retention => {
            let log = ds.log("retention model")?;
            let end = ds.end()?;
            let curve = match o.family {
                RetentionKind::KaplanMeier => RetentionCurve::KaplanMeier {
                    steps: kaplan_meier(&relationship_durations(log, end, &ActivityConfig::new(o.inactivity_days)?))?,
                },
                family => {
                    let points: Vec<(f64, f64)> =
                        daily_active_fractions(log, end, o.curve_days)?.into_iter().map(|(d, f)| (d as f64, f)).collect();
                    let family =
                        if family == RetentionKind::PowerLaw { RetentionFamily::PowerLaw } else { RetentionFamily::Exponential };
                    fit_retention_curve(&points, family)?
                }
            };
            let (arpdau, n) = arpdau(log, end);
            let rss = curve.rss();
            (ModelParams::Retention(RetentionModel { curve, arpdau }), FitSummary { n_customers: n, rss, ..FitSummary::default() })
        }
        ModelKind::Monetization => {
            let log = ds.log("monetization model")?;
            let points: Vec<(f64, f64)> =
                cumulative_revenue_fractions(log, ds.end()?, o.curve_days)?.into_iter().map(|(d, f)| (d as f64, f)).collect();
            let curve = fit_monetization_curve(&points)?;
            let n = activity_times(log).len();
            (ModelParams::Monetization(MonetizationModel { curve }), FitSummary { n_customers: n, ..FitSummary::default() })
        }
        ModelKind::Markov => {
            let (m, n) = fit_markov(ds.log("markov model")?, ds.end()?, o.period_days, o.markov_cells)?;
            (ModelParams::Markov(m), FitSummary { n_customers: n, ..FitSummary::default() })
        }
        ModelKind::Forest | ModelKind::ThreeStage => {
            let what = format!("{kind} model");
            let x = ds.features(&what)?;
            let y = ds.targets(&what)?;
            let cfg = forest_config(&o.forest, seed);
            let params = if kind == ModelKind::Forest {
                ModelParams::Forest(o.supervised(fit_learner(cfg, &o.forest, seed, x, y)?))
            } else {
                ModelParams::ThreeStage(o.supervised(fit_learner(ThreeStage { forest: cfg }, &o.forest, seed, x, y)?))
            };
            (params, FitSummary { n_customers: x.n_rows(), ..FitSummary::default() })
        }
    };
    Ok(ModelArtifact::new(model, summary, seed, ds.fingerprint.clone()))
}

type Purchases = BTreeMap<String, Vec<(f64, f64)>>;

fn purchases_by_customer(log: &TransactionLog) -> Purchases {
    let mut out: Purchases = BTreeMap::new();
    for r in &log.records {
        out.entry(r.customer_id.clone()).or_default().push((r.timestamp, r.value));
    }
    out
}

/// Complete periods since the first purchase, with per-period purchase flags
/// and revenue.
fn period_history(purchases: &[(f64, f64)], end: f64, period: f64) -> (Vec<bool>, Vec<f64>) {
    let first = purchases[0].0;
    let whole = ((end - first) / period).floor().max(0.0) as usize;
    let mut flags = vec![false; whole];
    let mut cash = vec![0.0; whole];
    for &(t, v) in purchases {
        let k = ((t - first) / period).floor() as usize;
        if k < whole {
            flags[k] = true;
            cash[k] += v;
        }
    }
    (flags, cash)
}

/// Margin per retained customer-period and the geometric retention MLE:
/// a customer survives each period up to the one holding their last
/// purchase, and churns after it unless that is their last observed period.
fn fit_basic(log: &TransactionLog, end: f64, period: f64, marketing_cost: f64) -> Result<(BasicModel, usize)> {
    let (mut survived, mut churned, mut alive_periods, mut revenue, mut n) = (0usize, 0usize, 0usize, 0.0, 0);
    for p in purchases_by_customer(log).values() {
        let (flags, cash) = period_history(p, end, period);
        let Some(last) = flags.iter().rposition(|&f| f) else {
            continue;
        };
        n += 1;
        survived += last;
        if last + 1 < flags.len() {
            churned += 1;
        }
        alive_periods += last + 1;
        revenue += cash.iter().sum::<f64>();
    }
    if alive_periods == 0 {
        return Err(CliError::data(format!("no customer is observed for a full period of {period} days")));
    }
    let retention = if survived + churned == 0 { 1.0 } else { survived as f64 / (survived + churned) as f64 };
    let model = BasicModel { gc: revenue / alive_periods as f64, marketing_cost, retention, period_days: period };
    Ok((model, n))
}

/// Revenue per active customer-day.
fn arpdau(log: &TransactionLog, end: f64) -> (f64, usize) {
    let times = activity_times(log);
    let days: usize = times
        .values()
        .map(|t| {
            let mut d: Vec<i64> = t.iter().filter(|&&x| x <= end).map(|x| x.floor() as i64).collect();
            d.dedup();
            d.len()
        })
        .sum();
    let revenue: f64 = log.records.iter().filter(|r| r.timestamp <= end).map(|r| r.value).sum();
    (if days == 0 { 0.0 } else { revenue / days as f64 }, times.len())
}

fn fit_markov(log: &TransactionLog, end: f64, period: f64, cells: u32) -> Result<(MarkovModel, usize)> {
    let space = StateSpace::recency(1, cells)?;
    let (flags, cash): (Vec<Vec<bool>>, Vec<Vec<f64>>) = purchases_by_customer(log)
        .values()
        .map(|p| period_history(p, end, period))
        .filter(|(f, _)| !f.is_empty())
        .unzip();
    if flags.is_empty() {
        return Err(CliError::data(format!("no customer is observed for a full period of {period} days")));
    }
    let seqs = discretize_states(&flags, &space);
    let matrix = learn_transition_matrix::<f64>(&seqs, &space)?;
    let (rewards, _) = estimate_state_rewards(&seqs, &cash, &space)?;
    Ok((MarkovModel { space, matrix, rewards, period_days: period }, flags.len()))
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PredictOptions {
    /// Days.
    pub horizon: f64,
    pub discount_rate: f64,
    /// Days per discounting period.
    pub period: f64,
}

fn whole_periods(horizon: f64, period: f64) -> Result<usize> {
    let k = (horizon / period).round();
    if !(period > 0.0 && horizon >= 0.0) || (horizon / period - k).abs() > 1e-9 {
        return Err(CliError::usage(format!("horizon {horizon} is not a whole number of {period}-day periods")));
    }
    Ok(k as usize)
}

fn id(s: &str) -> Cell {
    Cell::Text(s.to_string())
}

/// Per-customer BTYD forecasts for the horizon.
pub fn btyd_predictions<M: PurchaseModel<f64> + ?Sized>(
    model: &M,
    spend: Option<&GammaGammaParams<f64>>,
    ds: &Dataset,
    o: &PredictOptions,
) -> Result<Table> {
    let mut t = match spend {
        Some(_) => Table::new(&["customer_id", "p_alive", "expected_purchases", "expected_value", "clv"]),
        None => Table::new(&["customer_id", "p_alive", "expected_purchases"]),
    };
    for s in &ds.summaries {
        let h = PurchaseHistory::from(s);
        let mut row = vec![id(&s.customer_id), Cell::Num(model.p_alive(&h)?), Cell::Num(model.expected_transactions(&h, o.horizon)?)];
        if let Some(g) = spend {
            row.push(Cell::Num(conditional_expected_value(g, s.frequency, s.monetary_value)?));
            row.push(Cell::Num(discounted_clv(model, g, &h, s.monetary_value, o.horizon, o.discount_rate, o.period)?));
        }
        t.rows.push(row);
    }
    Ok(t)
}

fn supervised_predictions<M: Predict>(model: &M, ds: &Dataset, what: &str) -> Result<Table> {
    let x = ds.features(what)?;
    let p = model.predict(x)?;
    let mut t = Table::new(&["customer_id", "clv"]);
    t.rows = x.ids.iter().zip(p).map(|(i, v)| vec![id(i), Cell::Num(v)]).collect();
    Ok(t)
}

/// Per-customer predictions of any artifact. `spend` adds value columns to
/// purchase-model forecasts.
pub fn predict(artifact: &ModelArtifact, spend: Option<&GammaGammaParams<f64>>, ds: &Dataset, o: &PredictOptions) -> Result<Table> {
    if !(o.discount_rate >= 0.0) {
        return Err(CliError::usage("discount rate must be non-negative"));
    }
    let constant = |value: f64, ids: Vec<String>| {
        let mut t = Table::new(&["customer_id", "clv"]);
        t.rows = ids.into_iter().map(|i| vec![Cell::Text(i), Cell::Num(value)]).collect();
        t
    };
    let log_ids = |what: &str| -> Result<Vec<String>> { Ok(activity_times(ds.log(what)?).into_keys().collect()) };
    match &artifact.model {
        ModelParams::ParetoNbd(p) => btyd_predictions(p, spend, ds, o),
        ModelParams::BgNbd(p) => btyd_predictions(p, spend, ds, o),
        ModelParams::GammaGamma(g) => {
            let mut t = Table::new(&["customer_id", "expected_value"]);
            for s in &ds.summaries {
                t.rows.push(vec![id(&s.customer_id), Cell::Num(conditional_expected_value(g, s.frequency, s.monetary_value)?)]);
            }
            Ok(t)
        }
        ModelParams::Basic(b) => {
            let n = whole_periods(o.horizon, b.period_days)?;
            let cfg = BasicClvConfig::new(b.gc, b.marketing_cost, n as u32, b.retention, o.discount_rate)?;
            Ok(constant(basic_clv(&cfg), log_ids("basic model")?))
        }
        ModelParams::Retention(r) => {
            let n = whole_periods(o.horizon, 1.0)?;
            Ok(constant(retention_clv(r.arpdau, &r.curve, n as u32), log_ids("retention model")?))
        }
        ModelParams::Monetization(m) => {
            let log = ds.log("monetization model")?;
            let end = ds.end()?;
            let totals = customer_totals(log);
            let mut t = Table::new(&["customer_id", "revenue_to_date", "clv"]);
            for (cid, times) in activity_times(log) {
                let revenue = totals.get(&cid).map_or(0.0, |x| x.1);
                let age = end - times[0];
                t.rows.push(vec![Cell::Text(cid), Cell::Num(revenue), Cell::Num(monetization_clv(revenue, &m.curve, age)?)]);
            }
            Ok(t)
        }
        ModelParams::Markov(mk) => {
            let n = whole_periods(o.horizon, mk.period_days)?;
            let values = mcm_clv(&mk.matrix, &mk.rewards, o.discount_rate, Horizon::Finite(n))?;
            let mut t = Table::new(&["customer_id", "state", "clv"]);
            let end = ds.end()?;
            for (cid, p) in purchases_by_customer(ds.log("markov model")?) {
                let (flags, _) = period_history(&p, end, mk.period_days);
                let state = if flags.is_empty() { 0 } else { *discretize_states(&[flags], &mk.space)[0].last().expect("non-empty") };
                // value of the periods after the current one
                let v = values[state] - mk.rewards[state];
                t.rows.push(vec![Cell::Text(cid), Cell::Text(mk.space.labels[state].clone()), Cell::Num(v)]);
            }
            Ok(t)
        }
        ModelParams::Forest(f) => supervised_predictions(&f.model, ds, "forest model"),
        ModelParams::ThreeStage(m) => supervised_predictions(&m.model, ds, "three_stage model"),
    }
}

/// Purchase model of a BTYD artifact.
pub fn purchase_params(a: &ModelArtifact) -> Result<PurchaseParams<f64>> {
    match &a.model {
        ModelParams::ParetoNbd(p) => Ok(PurchaseParams::ParetoNbd(*p)),
        ModelParams::BgNbd(p) => Ok(PurchaseParams::BgNbd(*p)),
        _ => Err(CliError::usage(format!("expected a pareto_nbd or bg_nbd artifact, got {}", a.kind()))),
    }
}

pub fn spend_params(a: &ModelArtifact) -> Result<GammaGammaParams<f64>> {
    match &a.model {
        ModelParams::GammaGamma(g) => Ok(*g),
        _ => Err(CliError::usage(format!("expected a gamma_gamma artifact, got {}", a.kind()))),
    }
}
