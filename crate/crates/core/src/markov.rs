//! Recency-state customer models: Dwyer migration cells, transition-matrix
//! learning from state sequences, discounted Markov-chain valuation and a
//! finite-horizon promotion-policy optimiser.
//!
//! Cash flows are earned at the start of each period, so values include the
//! current period undiscounted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered states with a unique absorbing churn state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub labels: Vec<String>,
    pub churn: usize,
    /// Periods covered by one recency cell.
    pub cell_width: u32,
    /// Recency cells before churn.
    pub max_cells: u32,
}

impl StateSpace {
    /// Cells `r1..r{max_cells}` followed by `churn`.
    pub fn recency(cell_width: u32, max_cells: u32) -> Result<Self> {
        if cell_width == 0 || max_cells == 0 {
            return Err(Error::invalid("cell width and cell count must be positive"));
        }
        let mut labels: Vec<String> = (1..=max_cells).map(|i| format!("r{i}")).collect();
        labels.push("churn".into());
        Ok(StateSpace { labels, churn: max_cells as usize, cell_width, max_cells })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Maps per-period purchase flags to recency states. The first period is
/// the acquisition and counts as a purchase; after `max_cells * cell_width`
/// silent periods the customer churns for good.
pub fn discretize_states(histories: &[Vec<bool>], space: &StateSpace) -> Vec<Vec<usize>> {
    histories
        .iter()
        .map(|flags| {
            let mut since = 0u64;
            let mut churned = false;
            flags
                .iter()
                .enumerate()
                .map(|(t, &bought)| {
                    if churned {
                        return space.churn;
                    }
                    since = if t == 0 || bought { 0 } else { since + 1 };
                    let cell = since / space.cell_width as u64;
                    if cell >= space.max_cells as u64 {
                        churned = true;
                        space.churn
                    } else {
                        cell as usize
                    }
                })
                .collect()
        })
        .collect()
}

/// Row-stochastic matrix with an absorbing churn state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix<T> {
    pub labels: Vec<String>,
    pub churn: usize,
    pub p: Vec<Vec<T>>,
}

impl<T: Scalar> TransitionMatrix<T> {
    pub fn new(labels: Vec<String>, churn: usize, p: Vec<Vec<T>>) -> Result<Self> {
        let m = TransitionMatrix { labels, churn, p };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.p.len();
        if n == 0 || self.labels.len() != n || self.churn >= n {
            return Err(Error::invalid("transition matrix needs matching labels and a churn index in range"));
        }
        let tol = T::lit(1e-12);
        for (i, row) in self.p.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(Error::invalid(format!("row {i} has entries outside [0, 1]")));
            }
            let sum = row.iter().fold(T::zero(), |a, &b| a + b);
            if (sum - T::one()).abs_val() > tol {
                return Err(Error::invalid(format!("row {i} sums to {sum:?}")));
            }
        }
        if self.p[self.churn][self.churn] != T::one() {
            return Err(Error::invalid("churn state must be absorbing"));
        }
        Ok(())
    }

    fn apply(&self, v: &[T]) -> Vec<T> {
        self.p
            .iter()
            .map(|row| row.iter().zip(v).fold(T::zero(), |a, (&p, &x)| a + p * x))
            .collect()
    }
}

/// Transition counts; partial counts from disjoint sequence sets can be merged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionCounts {
    pub counts: Vec<Vec<u64>>,
}

impl TransitionCounts {
    pub fn new(n_states: usize) -> Self {
        TransitionCounts { counts: vec![vec![0; n_states]; n_states] }
    }

    pub fn add_sequences(&mut self, sequences: &[Vec<usize>]) -> Result<()> {
        let n = self.counts.len();
        for seq in sequences {
            for w in seq.windows(2) {
                if w[0] >= n || w[1] >= n {
                    return Err(Error::invalid(format!("state index out of range in transition {w:?}")));
                }
                self.counts[w[0]][w[1]] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &TransitionCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Divides each row by its sum and forces the churn row absorbing.
    pub fn normalize<T: Scalar>(&self, space: &StateSpace) -> Result<TransitionMatrix<T>> {
        let n = space.len();
        if self.counts.len() != n {
            return Err(Error::invalid("count matrix does not match the state space"));
        }
        let starved: Vec<&str> = (0..n)
            .filter(|&i| i != space.churn && self.counts[i].iter().all(|&c| c == 0))
            .map(|i| space.labels[i].as_str())
            .collect();
        if !starved.is_empty() {
            return Err(Error::invalid(format!("no outgoing transitions observed from: {}", starved.join(", "))));
        }
        let p = (0..n)
            .map(|i| {
                if i == space.churn {
                    return (0..n).map(|j| if j == i { T::one() } else { T::zero() }).collect();
                }
                let total: u64 = self.counts[i].iter().sum();
                let denom = T::from_u64(total).expect("count fits the scalar type");
                self.counts[i].iter().map(|&c| T::from_u64(c).expect("count fits") / denom).collect()
            })
            .collect();
        Ok(TransitionMatrix { labels: space.labels.clone(), churn: space.churn, p })
    }
}

pub fn learn_transition_matrix<T: Scalar>(sequences: &[Vec<usize>], space: &StateSpace) -> Result<TransitionMatrix<T>> {
    let mut counts = TransitionCounts::new(space.len());
    counts.add_sequences(sequences)?;
    counts.normalize(space)
}

/// Mean per-period cash flow in each state (churn forced to 0), plus
/// warnings for unvisited states and for cash recorded while churned.
pub fn estimate_state_rewards<T: Scalar>(
    sequences: &[Vec<usize>],
    cash_flows: &[Vec<T>],
    space: &StateSpace,
) -> Result<(Vec<T>, Vec<String>)> {
    if sequences.len() != cash_flows.len() {
        return Err(Error::invalid("sequences and cash flows must align"));
    }
    let n = space.len();
    let mut sums = vec![T::zero(); n];
    let mut visits = vec![0usize; n];
    for (seq, cash) in sequences.iter().zip(cash_flows) {
        if seq.len() != cash.len() {
            return Err(Error::invalid("sequence and cash flow lengths differ"));
        }
        for (&s, &c) in seq.iter().zip(cash) {
            if s >= n {
                return Err(Error::invalid(format!("state index {s} out of range")));
            }
            sums[s] = sums[s] + c;
            visits[s] += 1;
        }
    }
    let mut warnings = Vec::new();
    let rewards = (0..n)
        .map(|s| {
            if s == space.churn {
                if sums[s] != T::zero() {
                    warnings.push(format!("cash recorded in churn state {}; reward forced to 0", space.labels[s]));
                }
                return T::zero();
            }
            if visits[s] == 0 {
                warnings.push(format!("state {} never visited; reward set to 0", space.labels[s]));
                return T::zero();
            }
            sums[s] / T::from_count(visits[s])
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((rewards, warnings))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Periods `0..=n`.
    Finite(usize),
    Infinite,
}

/// Value per state: `sum_t (1+d)^-t P^t R` over the horizon, or
/// `(I - P/(1+d))^-1 R` for the infinite horizon.
pub fn mcm_clv<T: Scalar>(p: &TransitionMatrix<T>, rewards: &[T], d: T, horizon: Horizon) -> Result<Vec<T>> {
    p.validate()?;
    if rewards.len() != p.len() {
        return Err(Error::invalid("reward vector length differs from the state count"));
    }
    if !(d >= T::zero()) {
        return Err(Error::invalid("discount rate must be non-negative"));
    }
    let delta = T::one() / (T::one() + d);
    match horizon {
        Horizon::Finite(h) => {
            let mut v = rewards.to_vec();
            for _ in 0..h {
                let next = p.apply(&v);
                v = rewards.iter().zip(next).map(|(&r, x)| r + delta * x).collect();
            }
            Ok(v)
        }
        Horizon::Infinite => {
            if !(d > T::zero()) {
                return Err(Error::numerical("infinite-horizon valuation needs a positive discount rate"));
            }
            let n = p.len();
            let a: Vec<Vec<T>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let id = if i == j { T::one() } else { T::zero() };
                            id - delta * p.p[i][j]
                        })
                        .collect()
                })
                .collect();
            solve(a, rewards.to_vec())
        }
    }
}

/// Gaussian elimination with partial pivoting.
fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col].abs_val().partial_cmp(&a[j][col].abs_val()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty");
        if a[pivot][col] == T::zero() {
            return Err(Error::numerical("singular valuation system"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let sub = f * a[col][k];
                a[row][k] = a[row][k] - sub;
            }
            let sub = f * b[col];
            b[row] = b[row] - sub;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Purchase probability and expected purchase value per recency cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecencyCellTable<T> {
    pub purchase_probability: Vec<T>,
    pub purchase_value: Vec<T>,
}

impl<T: Scalar> RecencyCellTable<T> {
    pub fn new(purchase_probability: Vec<T>, purchase_value: Vec<T>) -> Result<Self> {
        if purchase_probability.is_empty() || purchase_probability.len() != purchase_value.len() {
            return Err(Error::invalid("cell table needs matching, non-empty columns"));
        }
        if purchase_probability.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::invalid("purchase probabilities must lie in [0, 1]"));
        }
        if purchase_value.iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::invalid("purchase values must be non-negative"));
        }
        Ok(RecencyCellTable { purchase_probability, purchase_value })
    }

    pub fn cells(&self) -> usize {
        self.purchase_probability.len()
    }

    /// Chain over the cells plus churn: a purchase returns to the first
    /// cell, otherwise the customer moves one cell on (churning after the
    /// last). Rewards are the expected purchase value per cell.
    pub fn to_markov(&self) -> (TransitionMatrix<T>, Vec<T>) {
        let n = self.cells();
        let mut p = vec![vec![T::zero(); n + 1]; n + 1];
        for c in 0..n {
            let buy = self.purchase_probability[c];
            p[c][0] = p[c][0] + buy;
            p[c][c + 1] = p[c][c + 1] + (T::one() - buy);
        }
        p[n][n] = T::one();
        let mut labels: Vec<String> = (1..=n).map(|i| format!("r{i}")).collect();
        labels.push("churn".into());
        let mut rewards: Vec<T> = (0..n).map(|c| self.purchase_probability[c] * self.purchase_value[c]).collect();
        rewards.push(T::zero());
        (TransitionMatrix { labels, churn: n, p }, rewards)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwyerForecast<T> {
    /// Expected value in periods `1..=n`.
    pub stream: Vec<T>,
    pub total: T,
}

pub fn dwyer_migration_forecast<T: Scalar>(table: &RecencyCellTable<T>, start_cell: usize, periods: usize) -> Result<DwyerForecast<T>> {
    let n = table.cells();
    if start_cell >= n {
        return Err(Error::invalid(format!("start cell {start_cell} outside 0..{n}")));
    }
    if periods == 0 {
        return Err(Error::invalid("forecast needs at least one period"));
    }
    let mut prob = vec![T::zero(); n];
    prob[start_cell] = T::one();
    let mut stream = Vec::with_capacity(periods);
    let mut total = T::zero();
    for _ in 0..periods {
        let value = (0..n).fold(T::zero(), |a, c| {
            a + prob[c] * table.purchase_probability[c] * table.purchase_value[c]
        });
        stream.push(value);
        total = total + value;
        let mut next = vec![T::zero(); n];
        for c in 0..n {
            let buy = prob[c] * table.purchase_probability[c];
            next[0] = next[0] + buy;
            if c + 1 < n {
                next[c + 1] = next[c + 1] + (prob[c] - buy);
            }
        }
        prob = next;
    }
    Ok(DwyerForecast { stream, total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySolution<T> {
    /// `policy[t][s]`: action index for state `s` in period `t`.
    pub policy: Vec<Vec<usize>>,
    /// Optimal value per state at period 0.
    pub values: Vec<T>,
}

/// Backward induction over `horizon` periods maximising discounted reward
/// net of action costs. Ties go to the lowest action index.
pub fn optimize_promotion_policy<T: Scalar>(
    matrices: &[TransitionMatrix<T>],
    rewards: &[Vec<T>],
    costs: &[T],
    d: T,
    horizon: usize,
) -> Result<PolicySolution<T>> {
    if matrices.is_empty() {
        return Err(Error::invalid("need at least one action"));
    }
    if rewards.len() != matrices.len() || costs.len() != matrices.len() {
        return Err(Error::invalid("one reward vector and cost per action required"));
    }
    let n = matrices[0].len();
    for (a, m) in matrices.iter().enumerate() {
        m.validate()?;
        if m.len() != n || m.labels != matrices[0].labels || m.churn != matrices[0].churn {
            return Err(Error::invalid(format!("action {a} uses a different state space")));
        }
        if rewards[a].len() != n {
            return Err(Error::invalid(format!("reward vector of action {a} has the wrong length")));
        }
    }
    if !(d >= T::zero()) {
        return Err(Error::invalid("discount rate must be non-negative"));
    }
    let delta = T::one() / (T::one() + d);
    let mut v = vec![T::zero(); n];
    let mut policy = vec![vec![0usize; n]; horizon];
    for t in (0..horizon).rev() {
        let continuation: Vec<Vec<T>> = matrices.iter().map(|m| m.apply(&v)).collect();
        let mut next = vec![T::zero(); n];
        for s in 0..n {
            let mut best: Option<(usize, T)> = None;
            for a in 0..matrices.len() {
                let q = rewards[a][s] - costs[a] + delta * continuation[a][s];
                if best.is_none_or(|(_, b)| q > b) {
                    best = Some((a, q));
                }
            }
            let (a, q) = best.expect("at least one action");
            policy[t][s] = a;
            next[s] = q;
        }
        v = next;
    }
    Ok(PolicySolution { policy, values: v })
}

/// Value of a fixed (possibly time-varying) policy.
pub fn evaluate_policy<T: Scalar>(
    matrices: &[TransitionMatrix<T>],
    rewards: &[Vec<T>],
    costs: &[T],
    d: T,
    policy: &[Vec<usize>],
) -> Vec<T> {
    let n = matrices[0].len();
    let delta = T::one() / (T::one() + d);
    let mut v = vec![T::zero(); n];
    for t in (0..policy.len()).rev() {
        let mut next = vec![T::zero(); n];
        for s in 0..n {
            let a = policy[t][s];
            let cont = matrices[a].p[s].iter().zip(&v).fold(T::zero(), |acc, (&p, &x)| acc + p * x);
            next[s] = rewards[a][s] - costs[a] + delta * cont;
        }
        v = next;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn three_state() -> TransitionMatrix<f64> {
        TransitionMatrix::new(labels(3), 2, vec![vec![0.6, 0.3, 0.1], vec![0.3, 0.4, 0.3], vec![0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn recency_trace() {
        let space = StateSpace::recency(1, 4).unwrap();
        let seq = discretize_states(&[vec![true, false, false, false, false], vec![true; 3]], &space);
        assert_eq!(seq[0], vec![0, 1, 2, 3, 4]);
        assert_eq!(seq[1], vec![0, 0, 0]);
        assert!(discretize_states(&[vec![]], &space)[0].is_empty());
        let wide = StateSpace::recency(2, 2).unwrap();
        assert_eq!(discretize_states(&[vec![true, false, false, true, false, false, false, false, true]], &wide)[0], vec![0, 0, 1, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn learning_by_hand() {
        let space = StateSpace { labels: labels(3), churn: 2, cell_width: 1, max_cells: 2 };
        let m: TransitionMatrix<Q> = learn_transition_matrix(&[vec![0, 1], vec![0, 1], vec![1, 1, 2]], &space).unwrap();
        assert_eq!(m.p[0], vec![q(0, 1), q(1, 1), q(0, 1)]);
        assert_eq!(m.p[1], vec![q(0, 1), q(1, 2), q(1, 2)]);
        let alt: TransitionMatrix<Q> = learn_transition_matrix(&[vec![0, 1, 0, 1]], &space).unwrap();
        assert_eq!(alt.p[0][1], q(1, 1));
        assert_eq!(alt.p[1][0], q(1, 1));
        let stay: TransitionMatrix<Q> = learn_transition_matrix(&[vec![0, 0, 0], vec![1, 2]], &space).unwrap();
        assert_eq!(stay.p[0], vec![q(1, 1), q(0, 1), q(0, 1)]);
        let err = learn_transition_matrix::<f64>(&[vec![0, 0]], &space).unwrap_err();
        assert!(err.to_string().contains("s1"));
    }

    #[test]
    fn rewards_by_state() {
        let space = StateSpace { labels: labels(3), churn: 2, cell_width: 1, max_cells: 2 };
        let (r, w) = estimate_state_rewards(&[vec![0, 0, 2], vec![0, 2]], &[vec![0.0, 20.0, 5.0], vec![10.0, 0.0]], &space).unwrap();
        assert_eq!(r, vec![10.0, 0.0, 0.0]);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn identity_chain_geometric_value() {
        let p = TransitionMatrix::new(vec!["a".into()], 0, vec![vec![1.0]]).unwrap();
        let v = mcm_clv(&p, &[10.0f64], 0.1, Horizon::Infinite).unwrap();
        assert!((v[0] - 110.0).abs() < 1e-9);
        let exact = mcm_clv(&TransitionMatrix::new(vec!["a".into()], 0, vec![vec![q(1, 1)]]).unwrap(), &[q(10, 1)], q(1, 10), Horizon::Infinite).unwrap();
        assert_eq!(exact[0], q(110, 1));
        assert!(mcm_clv(&p, &[10.0], 0.0, Horizon::Infinite).is_err());
    }

    #[test]
    fn zero_rewards_give_zero_value() {
        for h in [Horizon::Finite(10), Horizon::Infinite] {
            assert_eq!(mcm_clv(&three_state(), &[0.0; 3], 0.05, h).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn finite_horizon_converges_to_infinite() {
        let d: f64 = 0.05;
        let h = ((1e-8f64).ln() / (1.0 / (1.0 + d)).ln()).ceil() as usize;
        let r = [10.0, 4.0, 0.0];
        let fin = mcm_clv(&three_state(), &r, d, Horizon::Finite(h)).unwrap();
        let inf = mcm_clv(&three_state(), &r, d, Horizon::Infinite).unwrap();
        for (a, b) in fin.iter().zip(&inf) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn valuation_is_linear(r1 in prop::collection::vec(-50.0f64..50.0, 3), r2 in prop::collection::vec(-50.0f64..50.0, 3), a in -3.0f64..3.0, b in -3.0f64..3.0, h in 0usize..40) {
            for hz in [Horizon::Finite(h), Horizon::Infinite] {
                let m = three_state();
                let combo: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
                let lhs = mcm_clv(&m, &combo, 0.1, hz).unwrap();
                let v1 = mcm_clv(&m, &r1, 0.1, hz).unwrap();
                let v2 = mcm_clv(&m, &r2, 0.1, hz).unwrap();
                for i in 0..3 {
                    prop_assert!((lhs[i] - (a * v1[i] + b * v2[i])).abs() <= 1e-10 * (1.0 + lhs[i].abs()));
                }
            }
        }
    }

    #[test]
    fn dwyer_examples() {
        let t = RecencyCellTable::new(vec![0.3f64], vec![10.0]).unwrap();
        let f = dwyer_migration_forecast(&t, 0, 3).unwrap();
        assert!((f.stream[0] - 3.0).abs() < 1e-15);
        let zero = RecencyCellTable::new(vec![0.0; 4], vec![5.0; 4]).unwrap();
        assert!(dwyer_migration_forecast(&zero, 0, 10).unwrap().stream.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn dwyer_equals_chain_at_zero_discount(cells in prop::collection::vec((0i64..=8, 0i64..40), 1..6), start in 0usize..6, n in 1usize..12) {
            let start = start % cells.len();
            let table = RecencyCellTable::new(
                cells.iter().map(|c| q(c.0, 8)).collect(),
                cells.iter().map(|c| Q::from_integer(c.1)).collect(),
            ).unwrap();
            let f = dwyer_migration_forecast(&table, start, n).unwrap();
            let (p, r) = table.to_markov();
            let v = mcm_clv(&p, &r, Q::from_integer(0), Horizon::Finite(n - 1)).unwrap();
            prop_assert_eq!(f.total, v[start]);
        }
    }

    fn rational_instance() -> (Vec<TransitionMatrix<Q>>, Vec<Vec<Q>>, Vec<Q>) {
        let lab = labels(3);
        let keep = TransitionMatrix::new(lab.clone(), 2, vec![vec![q(1, 2), q(1, 4), q(1, 4)], vec![q(1, 3), q(1, 3), q(1, 3)], vec![q(0, 1), q(0, 1), q(1, 1)]]).unwrap();
        let promo = TransitionMatrix::new(lab, 2, vec![vec![q(3, 4), q(1, 8), q(1, 8)], vec![q(1, 2), q(1, 3), q(1, 6)], vec![q(0, 1), q(0, 1), q(1, 1)]]).unwrap();
        (vec![keep, promo], vec![vec![q(10, 1), q(4, 1), q(0, 1)], vec![q(9, 1), q(5, 1), q(0, 1)]], vec![q(0, 1), q(3, 2)])
    }

    fn all_policies(periods: usize, states: usize, actions: usize) -> Vec<Vec<Vec<usize>>> {
        let slots = periods * states;
        (0..actions.pow(slots as u32))
            .map(|mut code| {
                let mut pol = vec![vec![0; states]; periods];
                for slot in 0..slots {
                    pol[slot / states][slot % states] = code % actions;
                    code /= actions;
                }
                pol
            })
            .collect()
    }

    #[test]
    fn dp_matches_exhaustive_enumeration() {
        let (m, r, c) = rational_instance();
        let d = q(1, 10);
        let sol = optimize_promotion_policy(&m, &r, &c, d, 3).unwrap();
        let policies = all_policies(3, 3, 2);
        assert_eq!(policies.len(), 512);
        for s in 0..3 {
            let best = policies.iter().map(|p| evaluate_policy(&m, &r, &c, d, p)[s]).max().unwrap();
            assert_eq!(sol.values[s], best);
        }
        assert_eq!(evaluate_policy(&m, &r, &c, d, &sol.policy), sol.values);
    }

    #[test]
    fn dominant_action_everywhere() {
        let lab = labels(3);
        let weak = TransitionMatrix::new(lab.clone(), 2, vec![vec![q(1, 2), q(1, 4), q(1, 4)], vec![q(1, 4), q(1, 4), q(1, 2)], vec![q(0, 1), q(0, 1), q(1, 1)]]).unwrap();
        let strong = TransitionMatrix::new(lab, 2, vec![vec![q(3, 4), q(1, 8), q(1, 8)], vec![q(1, 2), q(1, 4), q(1, 4)], vec![q(0, 1), q(0, 1), q(1, 1)]]).unwrap();
        let r = vec![q(10, 1), q(4, 1), q(0, 1)];
        let sol = optimize_promotion_policy(&[weak, strong], &[r.clone(), r], &[q(1, 1), q(1, 1)], q(1, 10), 3).unwrap();
        for t in 0..2 {
            assert_eq!(&sol.policy[t][..2], &[1, 1]);
        }
        // no continuation value in the last period: equal rewards tie
        assert_eq!(sol.policy[2], vec![0, 0, 0]);
    }

    #[test]
    fn single_action_is_net_chain_value() {
        let m = three_state();
        let r = vec![10.0, 4.0, 0.0];
        let (d, h, cost) = (0.1, 6usize, 1.5);
        let sol = optimize_promotion_policy(std::slice::from_ref(&m), std::slice::from_ref(&r), &[cost], d, h).unwrap();
        let chain = mcm_clv(&m, &r, d, Horizon::Finite(h - 1)).unwrap();
        let stream: f64 = (0..h).map(|t| 1.1f64.powi(-(t as i32))).sum();
        for s in 0..3 {
            assert!((sol.values[s] - (chain[s] - cost * stream)).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let a = three_state();
        let b = TransitionMatrix::new(vec!["x".into(), "y".into()], 1, vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(optimize_promotion_policy(&[a, b], &[vec![0.0; 3], vec![0.0; 2]], &[0.0, 0.0], 0.1, 3).is_err());
    }

    proptest! {
        #[test]
        fn dp_value_monotone_in_rewards(bump in prop::collection::vec(0i64..5, 3), action in 0usize..2, state in 0usize..2) {
            let (m, r, c) = rational_instance();
            let base = optimize_promotion_policy(&m, &r, &c, q(1, 10), 3).unwrap();
            let mut r2 = r.clone();
            r2[action][state] += Q::from_integer(bump[state]);
            let more = optimize_promotion_policy(&m, &r2, &c, q(1, 10), 3).unwrap();
            for s in 0..3 {
                prop_assert!(more.values[s] >= base.values[s]);
            }
        }
    }
}
