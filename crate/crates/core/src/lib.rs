#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod average;
pub mod btyd;
pub mod data;
pub mod error;
pub mod markov;
pub mod optim;
pub mod scalar;
pub mod simulator;
pub mod special;
pub mod supervised;

#[cfg(test)]
pub(crate) mod quadrature;

pub use error::{Error, Result};

pub type ParetoNbd = btyd::ParetoNbdParams<f64>;
pub type BgNbd = btyd::BgNbdParams<f64>;
pub type GammaGamma = btyd::GammaGammaParams<f64>;
pub type PurchaseHistory = btyd::PurchaseHistory<f64>;
pub type SpendHistory = btyd::SpendHistory<f64>;
pub type FitConfig = btyd::FitConfig<f64>;
pub type BasicClvConfig = average::BasicClvConfig<f64>;
pub type SurvivalSteps = average::SurvivalSteps<f64>;
pub type MonetizationCurve = average::MonetizationCurve<f64>;
pub type TransitionMatrix = markov::TransitionMatrix<f64>;
pub type RecencyCellTable = markov::RecencyCellTable<f64>;
