//! Synthetic cohorts drawn from the generative assumptions behind the
//! models: Pareto/NBD and BG/NBD purchase processes, Gamma-Gamma spend,
//! Markov state trajectories and free-to-play player behaviour.
//!
//! Gamma distributions are parameterised by (shape, rate). Each customer
//! draws from its own ChaCha stream derived from `(seed, index)`, so output
//! does not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btyd::{BgNbdParams, GammaGammaParams, ParetoNbdParams};
use crate::data::{Event, EventKind, Transaction, TransactionLog};
use crate::error::{Error, Result};
use crate::markov::TransitionMatrix;

/// Spacing between consecutive rounds of one session: one minute.
pub const ROUND_SPACING: f64 = 1.0 / 1440.0;

fn customer_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn gamma(shape: f64, rate: f64) -> Result<Gamma<f64>> {
    Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid(format!("gamma({shape}, {rate}): {e}")))
}

fn exp(rate: f64) -> Result<Exp<f64>> {
    Exp::new(rate).map_err(|e| Error::invalid(format!("exponential({rate}): {e}")))
}

pub fn customer_id(index: usize) -> String {
    format!("c{index:06}")
}

/// Gameplay intensities for the alive period of each customer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameplayIntensity {
    pub sessions_per_day: f64,
    pub rounds_per_session: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PurchaseProcess {
    ParetoNbd(ParetoNbdParams<f64>),
    BgNbd(BgNbdParams<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_customers: usize,
    /// End of observation, in days from 0.
    pub observation_days: f64,
    /// Relationship starts are uniform on `[0, acquisition_days)`; 0 starts
    /// everyone at day 0.
    pub acquisition_days: f64,
    pub purchase: PurchaseProcess,
    pub spend: GammaGammaParams<f64>,
    pub gameplay: Option<GameplayIntensity>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_customers: usize, observation_days: f64, purchase: PurchaseProcess, spend: GammaGammaParams<f64>, seed: u64) -> Self {
        SimConfig { n_customers, observation_days, acquisition_days: 0.0, purchase, spend, gameplay: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_customers == 0 {
            return Err(Error::invalid("cohort needs at least one customer"));
        }
        if !(self.observation_days.is_finite() && self.observation_days > 0.0) {
            return Err(Error::invalid("observation length must be positive"));
        }
        if !(self.acquisition_days >= 0.0 && self.acquisition_days < self.observation_days) {
            return Err(Error::invalid("acquisition window must lie inside the observation period"));
        }
        match self.purchase {
            PurchaseProcess::ParetoNbd(p) => {
                ParetoNbdParams::new(p.r, p.alpha, p.s, p.beta)?;
            }
            PurchaseProcess::BgNbd(p) => {
                BgNbdParams::new(p.r, p.alpha, p.a, p.b)?;
            }
        }
        GammaGammaParams::new(self.spend.p, self.spend.q, self.spend.gamma)?;
        if let Some(g) = self.gameplay {
            if !(g.sessions_per_day >= 0.0 && g.rounds_per_session >= 0.0) {
                return Err(Error::invalid("gameplay intensities must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Latent draws and realised counters of one simulated customer. Counters
/// follow the RFM conventions: the first purchase at relationship start is
/// excluded from `frequency` and `monetary_value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomerTruth {
    pub customer_id: String,
    pub start: f64,
    pub lambda: f64,
    /// Pareto/NBD death rate.
    pub mu: Option<f64>,
    /// BG/NBD dropout probability.
    pub dropout: Option<f64>,
    /// Spend-scale draw `ν`.
    pub nu: f64,
    /// Absolute death time; `None` when a BG/NBD customer has not dropped
    /// out by the end of observation.
    pub death_time: Option<f64>,
    pub alive_at_end: bool,
    pub purchase_times: Vec<f64>,
    pub purchase_values: Vec<f64>,
    pub frequency: u32,
    pub recency: f64,
    pub age: f64,
    pub monetary_value: f64,
    pub sessions: u32,
    pub rounds: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub observation_days: f64,
    pub customers: Vec<CustomerTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn total_repeat_purchases(&self) -> u64 {
        self.customers.iter().map(|c| c.frequency as u64).sum()
    }
}

struct Drawn {
    truth: CustomerTruth,
    records: Vec<Transaction>,
    events: Vec<Event>,
}

fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, from: f64, until: f64, out: &mut Vec<f64>) -> Result<()> {
    if rate <= 0.0 || until <= from {
        return Ok(());
    }
    let gap = exp(rate)?;
    let mut t = from;
    loop {
        t += gap.sample(rng);
        if t >= until {
            return Ok(());
        }
        out.push(t);
    }
}

/// Session starts (Poisson, plus `first` if given) on `[from, until)`, each
/// followed by a Poisson number of rounds. Returns session times and rounds
/// per session.
fn gameplay_events(
    rng: &mut ChaCha8Rng,
    id: &str,
    sessions_per_day: f64,
    rounds_per_session: f64,
    first: Option<f64>,
    from: f64,
    until: f64,
    events: &mut Vec<Event>,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let mut sessions: Vec<f64> = first.into_iter().collect();
    poisson_times(rng, sessions_per_day, from, until, &mut sessions)?;
    let rounds_dist = (rounds_per_session > 0.0)
        .then(|| Poisson::new(rounds_per_session).map_err(|e| Error::invalid(format!("poisson: {e}"))))
        .transpose()?;
    let mut rounds = Vec::with_capacity(sessions.len());
    for &s in &sessions {
        events.push(Event { customer_id: id.to_string(), timestamp: s, kind: EventKind::SessionStart });
        let k = rounds_dist.as_ref().map_or(0, |d| d.sample(rng) as u32);
        for j in 0..k {
            events.push(Event { customer_id: id.to_string(), timestamp: s + (j + 1) as f64 * ROUND_SPACING, kind: EventKind::RoundPlayed });
        }
        rounds.push(k);
    }
    Ok((sessions, rounds))
}

fn draw_customer(cfg: &SimConfig, index: usize) -> Result<Drawn> {
    let mut rng = customer_rng(cfg.seed, index);
    let id = customer_id(index);
    let end = cfg.observation_days;
    let start = if cfg.acquisition_days > 0.0 { rng.random::<f64>() * cfg.acquisition_days } else { 0.0 };

    // relationship starts with a purchase; repeats follow
    let mut times = vec![start];
    let (lambda, mu, dropout, death_time) = match cfg.purchase {
        PurchaseProcess::ParetoNbd(p) => {
            let lambda = gamma(p.r, p.alpha)?.sample(&mut rng);
            let mu = gamma(p.s, p.beta)?.sample(&mut rng);
            let death = start + exp(mu)?.sample(&mut rng);
            poisson_times(&mut rng, lambda, start, death.min(end), &mut times)?;
            (lambda, Some(mu), None, Some(death))
        }
        PurchaseProcess::BgNbd(p) => {
            let lambda = gamma(p.r, p.alpha)?.sample(&mut rng);
            let drop = Beta::new(p.a, p.b).map_err(|e| Error::invalid(format!("beta: {e}")))?.sample(&mut rng);
            let gap = exp(lambda)?;
            let mut t = start;
            let mut death = None;
            loop {
                t += gap.sample(&mut rng);
                if t >= end {
                    break;
                }
                times.push(t);
                // dropout can only follow a repeat purchase
                if rng.random::<f64>() < drop {
                    death = Some(t);
                    break;
                }
            }
            (lambda, None, Some(drop), death)
        }
    };
    let alive_at_end = death_time.is_none_or(|d| d > end);

    let nu = gamma(cfg.spend.q, cfg.spend.gamma)?.sample(&mut rng);
    let spend = gamma(cfg.spend.p, nu)?;
    let values: Vec<f64> = times.iter().map(|_| spend.sample(&mut rng)).collect();

    let mut events = Vec::new();
    let (sessions, rounds) = match &cfg.gameplay {
        Some(g) => {
            let until = death_time.map_or(end, |d| d.min(end));
            let (s, r) = gameplay_events(&mut rng, &id, g.sessions_per_day, g.rounds_per_session, None, start, until, &mut events)?;
            (s.len() as u32, r.iter().sum())
        }
        None => (0, 0),
    };
    for &t in &times {
        events.push(Event { customer_id: id.clone(), timestamp: t, kind: EventKind::Purchase });
    }

    let frequency = (times.len() - 1) as u32;
    let last = *times.last().expect("first purchase");
    let monetary_value = if frequency == 0 { 0.0 } else { values[1..].iter().sum::<f64>() / frequency as f64 };
    let records = times
        .iter()
        .zip(&values)
        .map(|(&t, &v)| Transaction { customer_id: id.clone(), timestamp: t, value: v })
        .collect();
    Ok(Drawn {
        truth: CustomerTruth {
            customer_id: id,
            start,
            lambda,
            mu,
            dropout,
            nu,
            death_time,
            alive_at_end,
            recency: last - start,
            age: end - start,
            purchase_times: times,
            purchase_values: values,
            frequency,
            monetary_value,
            sessions,
            rounds,
        },
        records,
        events,
    })
}

fn assemble(drawn: Vec<Drawn>, observation_days: f64) -> Result<(TransactionLog, GroundTruth)> {
    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut customers = Vec::with_capacity(drawn.len());
    for d in drawn {
        records.extend(d.records);
        events.extend(d.events);
        customers.push(d.truth);
    }
    Ok((TransactionLog::new(records, events)?, GroundTruth { observation_days, customers }))
}

fn simulate(cfg: &SimConfig) -> Result<(TransactionLog, GroundTruth)> {
    cfg.validate()?;
    let drawn = (0..cfg.n_customers).into_par_iter().map(|i| draw_customer(cfg, i)).collect::<Result<Vec<_>>>()?;
    assemble(drawn, cfg.observation_days)
}

/// Pareto/NBD cohort: `λ ~ Gamma(r, α)`, lifetime `~ Exp(μ)` with
/// `μ ~ Gamma(s, β)`, purchases Poisson(λ) until death or the end of
/// observation.
pub fn simulate_pareto_nbd_cohort(cfg: &SimConfig) -> Result<(TransactionLog, GroundTruth)> {
    if !matches!(cfg.purchase, PurchaseProcess::ParetoNbd(_)) {
        return Err(Error::invalid("config does not describe a Pareto/NBD process"));
    }
    simulate(cfg)
}

/// BG/NBD cohort: after every repeat purchase the customer drops out with
/// a per-customer probability `p ~ Beta(a, b)`.
pub fn simulate_bg_nbd_cohort(cfg: &SimConfig) -> Result<(TransactionLog, GroundTruth)> {
    if !matches!(cfg.purchase, PurchaseProcess::BgNbd(_)) {
        return Err(Error::invalid("config does not describe a BG/NBD process"));
    }
    simulate(cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardNoise {
    /// Cash flow equals the state reward.
    None,
    /// Reward plus `N(0, sd²)`.
    Gaussian { sd: f64 },
    /// Exponential with the state reward as mean (rewards must be >= 0).
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovCohortConfig {
    pub n_customers: usize,
    /// Sequence length; transitions per customer are `periods - 1`.
    pub periods: usize,
    pub initial_state: usize,
    pub noise: RewardNoise,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkovCohort {
    pub states: Vec<Vec<usize>>,
    pub cash_flows: Vec<Vec<f64>>,
}

/// I.i.d. trajectories from `p`; cash flows are zero in the churn state.
pub fn simulate_markov_cohort(p: &TransitionMatrix<f64>, rewards: &[f64], cfg: &MarkovCohortConfig) -> Result<MarkovCohort> {
    p.validate()?;
    let n = p.len();
    if rewards.len() != n {
        return Err(Error::invalid("reward vector length differs from the state count"));
    }
    if cfg.initial_state >= n {
        return Err(Error::invalid(format!("initial state {} out of range", cfg.initial_state)));
    }
    match cfg.noise {
        RewardNoise::Gaussian { sd } if !(sd >= 0.0) => return Err(Error::invalid("noise sd must be non-negative")),
        RewardNoise::Exponential if rewards.iter().any(|&r| r < 0.0) => {
            return Err(Error::invalid("exponential noise needs non-negative rewards"))
        }
        _ => {}
    }
    let cumulative: Vec<Vec<f64>> = p
        .p
        .iter()
        .map(|row| {
            row.iter()
                .scan(0.0, |acc, &x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("standard normal");
    let (states, cash_flows) = (0..cfg.n_customers)
        .into_par_iter()
        .map(|i| {
            let mut rng = customer_rng(cfg.seed, i);
            let mut seq = Vec::with_capacity(cfg.periods);
            let mut cash = Vec::with_capacity(cfg.periods);
            let mut s = cfg.initial_state;
            for t in 0..cfg.periods {
                if t > 0 {
                    let u: f64 = rng.random();
                    let row = &cumulative[s];
                    // the last state with positive mass absorbs rounding in the row sum
                    s = row.iter().position(|&c| u < c).unwrap_or_else(|| {
                        p.p[s].iter().rposition(|&x| x > 0.0).expect("row has mass")
                    });
                }
                seq.push(s);
                let c = if s == p.churn {
                    0.0
                } else {
                    match cfg.noise {
                        RewardNoise::None => rewards[s],
                        RewardNoise::Gaussian { sd } => rewards[s] + sd * normal.sample(&mut rng),
                        RewardNoise::Exponential => {
                            if rewards[s] == 0.0 {
                                0.0
                            } else {
                                exp(1.0 / rewards[s]).expect("positive rate").sample(&mut rng)
                            }
                        }
                    }
                };
                cash.push(c);
            }
            (seq, cash)
        })
        .unzip();
    Ok(MarkovCohort { states, cash_flows })
}

/// Free-to-play cohort: installs spread over a window, engagement
/// `e ~ Gamma(k, k)` scaling session rates and purchase rates, an
/// engagement-dependent payer probability and exponential churn whose rate
/// falls with engagement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerCohortConfig {
    pub n_players: usize,
    pub install_days: f64,
    pub observation_days: f64,
    pub engagement_shape: f64,
    pub gameplay: GameplayIntensity,
    /// Churn rate `μ / e` with `μ ~ Gamma(churn_shape, churn_rate)`.
    pub churn_shape: f64,
    pub churn_rate: f64,
    /// `P(payer) = logistic(payer_intercept + payer_slope * ln e)`.
    pub payer_intercept: f64,
    pub payer_slope: f64,
    /// Purchases per day of a payer with unit engagement.
    pub purchase_rate: f64,
    pub spend: GammaGammaParams<f64>,
    pub seed: u64,
}

impl PlayerCohortConfig {
    /// Defaults giving roughly 5% payers.
    pub fn new(n_players: usize, seed: u64) -> Self {
        PlayerCohortConfig {
            n_players,
            install_days: 30.0,
            observation_days: 240.0,
            engagement_shape: 1.5,
            gameplay: GameplayIntensity { sessions_per_day: 1.5, rounds_per_session: 4.0 },
            churn_shape: 2.0,
            churn_rate: 60.0,
            payer_intercept: -3.4,
            payer_slope: 1.2,
            purchase_rate: 0.08,
            spend: GammaGammaParams { p: 6.0, q: 4.0, gamma: 15.0 },
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_players == 0 {
            return Err(Error::invalid("cohort needs at least one player"));
        }
        if !(self.install_days >= 0.0 && self.install_days < self.observation_days) {
            return Err(Error::invalid("install window must lie inside the observation period"));
        }
        if !(self.engagement_shape > 0.0 && self.churn_shape > 0.0 && self.churn_rate > 0.0 && self.purchase_rate > 0.0) {
            return Err(Error::invalid("player cohort rates must be positive"));
        }
        if !(self.gameplay.sessions_per_day >= 0.0 && self.gameplay.rounds_per_session >= 0.0) {
            return Err(Error::invalid("gameplay intensities must be non-negative"));
        }
        GammaGammaParams::new(self.spend.p, self.spend.q, self.spend.gamma)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerTruth {
    pub customer_id: String,
    pub install: f64,
    pub engagement: f64,
    pub payer: bool,
    pub death_time: f64,
    /// Session start times; the first is the install.
    pub session_times: Vec<f64>,
    pub rounds_per_session: Vec<u32>,
    pub purchase_times: Vec<f64>,
    pub purchase_values: Vec<f64>,
}

impl PlayerTruth {
    /// Revenue from purchases strictly before `install + days`.
    pub fn revenue_within(&self, days: f64) -> f64 {
        self.purchase_times
            .iter()
            .zip(&self.purchase_values)
            .filter(|(&t, _)| t < self.install + days)
            .map(|(_, &v)| v)
            .sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlayerGroundTruth {
    pub observation_days: f64,
    pub players: Vec<PlayerTruth>,
}

impl PlayerGroundTruth {
    pub fn payer_fraction(&self) -> f64 {
        self.players.iter().filter(|p| !p.purchase_times.is_empty()).count() as f64 / self.players.len().max(1) as f64
    }
}

fn draw_player(cfg: &PlayerCohortConfig, index: usize) -> Result<(PlayerTruth, Vec<Transaction>, Vec<Event>)> {
    let mut rng = customer_rng(cfg.seed, index);
    let id = customer_id(index);
    let end = cfg.observation_days;
    let install = if cfg.install_days > 0.0 { rng.random::<f64>() * cfg.install_days } else { 0.0 };
    let engagement = gamma(cfg.engagement_shape, cfg.engagement_shape)?.sample(&mut rng);
    let mu = gamma(cfg.churn_shape, cfg.churn_rate)?.sample(&mut rng) / engagement;
    let death_time = install + exp(mu)?.sample(&mut rng);
    let until = death_time.min(end);
    let z = cfg.payer_intercept + cfg.payer_slope * engagement.ln();
    let payer = rng.random::<f64>() < 1.0 / (1.0 + (-z).exp());

    let mut events = Vec::new();
    let (session_times, rounds_per_session) = gameplay_events(
        &mut rng,
        &id,
        cfg.gameplay.sessions_per_day * engagement,
        cfg.gameplay.rounds_per_session,
        Some(install),
        install,
        until,
        &mut events,
    )?;

    let mut purchase_times = Vec::new();
    let mut purchase_values = Vec::new();
    if payer {
        poisson_times(&mut rng, cfg.purchase_rate * engagement, install, until, &mut purchase_times)?;
        let nu = gamma(cfg.spend.q, cfg.spend.gamma)?.sample(&mut rng);
        let spend = gamma(cfg.spend.p, nu)?;
        purchase_values = purchase_times.iter().map(|_| spend.sample(&mut rng)).collect();
    }
    let mut records = Vec::with_capacity(purchase_times.len());
    for (&t, &v) in purchase_times.iter().zip(&purchase_values) {
        events.push(Event { customer_id: id.clone(), timestamp: t, kind: EventKind::Purchase });
        records.push(Transaction { customer_id: id.clone(), timestamp: t, value: v });
    }
    let truth = PlayerTruth {
        customer_id: id,
        install,
        engagement,
        payer,
        death_time,
        session_times,
        rounds_per_session,
        purchase_times,
        purchase_values,
    };
    Ok((truth, records, events))
}

/// Players with sessions, rounds and purchases; the first session is at
/// install. Most players never pay.
pub fn simulate_player_cohort(cfg: &PlayerCohortConfig) -> Result<(TransactionLog, PlayerGroundTruth)> {
    cfg.validate()?;
    let drawn = (0..cfg.n_players).into_par_iter().map(|i| draw_player(cfg, i)).collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut players = Vec::with_capacity(drawn.len());
    for (t, r, e) in drawn {
        records.extend(r);
        events.extend(e);
        players.push(t);
    }
    Ok((TransactionLog::new(records, events)?, PlayerGroundTruth { observation_days: cfg.observation_days, players }))
}
