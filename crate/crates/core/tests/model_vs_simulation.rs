//! Model quantities against simulated ground truth, at the generating parameters.

use clv_core::btyd::{
    conditional_expected_value, BgNbdParams, GammaGammaParams, ParetoNbdParams, PurchaseHistory, PurchaseModel,
};
use clv_core::data::{rfm_summary, split_calibration_holdout, TransactionLog};
use clv_core::simulator::{simulate_bg_nbd_cohort, simulate_pareto_nbd_cohort, GroundTruth, PurchaseProcess, SimConfig};
use proptest::prelude::*;

const SPEND: GammaGammaParams<f64> = GammaGammaParams { p: 6.0, q: 4.0, gamma: 15.0 };

fn pareto() -> ParetoNbdParams<f64> {
    ParetoNbdParams::new(0.5, 10.0, 0.6, 12.0).unwrap()
}

fn bg() -> BgNbdParams<f64> {
    BgNbdParams::new(0.4, 8.0, 0.8, 2.5).unwrap()
}

fn cohort(process: PurchaseProcess, n: usize, days: f64, seed: u64) -> (TransactionLog, GroundTruth) {
    let cfg = SimConfig::new(n, days, process, SPEND, seed);
    match process {
        PurchaseProcess::ParetoNbd(_) => simulate_pareto_nbd_cohort(&cfg).unwrap(),
        PurchaseProcess::BgNbd(_) => simulate_bg_nbd_cohort(&cfg).unwrap(),
    }
}

#[test]
fn pareto_p_alive_is_calibrated() {
    let p = pareto();
    let (log, truth) = cohort(PurchaseProcess::ParetoNbd(p), 20_000, 365.0, 1);
    let summaries = rfm_summary(&log, 365.0).unwrap();
    let mut pairs: Vec<(f64, bool)> = summaries
        .iter()
        .zip(&truth.customers)
        .map(|(s, c)| {
            assert_eq!(s.customer_id, c.customer_id);
            (p.p_alive(&PurchaseHistory::from(s)).unwrap(), c.alive_at_end)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for bin in pairs.chunks(pairs.len() / 5) {
        let predicted = bin.iter().map(|x| x.0).sum::<f64>() / bin.len() as f64;
        let observed = bin.iter().filter(|x| x.1).count() as f64 / bin.len() as f64;
        assert!((predicted - observed).abs() < 0.03, "predicted {predicted} observed {observed}");
    }
}

fn holdout_by_frequency<M: PurchaseModel<f64>>(model: &M, log: &TransactionLog, cutoff: f64, end: f64) {
    let (cal, hold) = split_calibration_holdout(log, cutoff);
    let summaries = rfm_summary(&cal, cutoff).unwrap();
    let actual = clv_core::data::customer_totals(&hold);
    let groups: [(u32, u32); 4] = [(0, 0), (1, 1), (2, 4), (5, u32::MAX)];
    for (lo, hi) in groups {
        let members: Vec<_> = summaries.iter().filter(|s| s.frequency >= lo && s.frequency <= hi).collect();
        let predicted: f64 =
            members.iter().map(|s| model.expected_transactions(&PurchaseHistory::from(*s), end - cutoff).unwrap()).sum();
        let observed: f64 = members.iter().map(|s| actual.get(&s.customer_id).map_or(0.0, |t| t.0 as f64)).sum();
        assert!(
            (predicted - observed).abs() <= 0.06 * observed + 3.0 * observed.sqrt(),
            "frequency {lo}..={hi}: predicted {predicted}, observed {observed}"
        );
    }
}

#[test]
fn bg_nbd_conditional_forecast_matches_holdout() {
    let p = bg();
    let (log, _) = cohort(PurchaseProcess::BgNbd(p), 20_000, 365.0, 2);
    holdout_by_frequency(&p, &log, 182.0, 365.0);
}

#[test]
fn pareto_conditional_forecast_matches_holdout() {
    let p = pareto();
    let (log, _) = cohort(PurchaseProcess::ParetoNbd(p), 20_000, 365.0, 3);
    holdout_by_frequency(&p, &log, 182.0, 365.0);
}

#[test]
fn conditional_spend_tracks_latent_mean() {
    let (log, truth) = cohort(PurchaseProcess::BgNbd(bg()), 20_000, 365.0, 4);
    let summaries = rfm_summary(&log, 365.0).unwrap();
    let (mut predicted, mut latent, mut n) = (0.0, 0.0, 0.0);
    for (s, c) in summaries.iter().zip(&truth.customers) {
        if s.frequency > 0 {
            predicted += conditional_expected_value(&SPEND, s.frequency, s.monetary_value).unwrap();
            latent += SPEND.p / c.nu;
            n += 1.0;
        }
    }
    assert!((predicted / latent - 1.0).abs() < 0.02, "{} vs {}", predicted / n, latent / n);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn summaries_agree_with_truth(seed in 0u64..1000, n in 1usize..300, days in 30.0f64..400.0) {
        let (log, truth) = cohort(PurchaseProcess::ParetoNbd(pareto()), n, days, seed);
        let summaries = rfm_summary(&log, days).unwrap();
        prop_assert_eq!(summaries.len(), truth.customers.len());
        for (s, c) in summaries.iter().zip(&truth.customers) {
            prop_assert_eq!(s.frequency, c.frequency);
            prop_assert!((s.recency - c.recency).abs() < 1e-9 && (s.age - c.age).abs() < 1e-9);
            prop_assert!(s.recency <= s.age);
            if s.frequency == 0 {
                prop_assert_eq!(s.monetary_value, 0.0);
            } else {
                prop_assert!((s.monetary_value - c.monetary_value).abs() <= 1e-9 * c.monetary_value.max(1.0));
            }
        }
    }
}
