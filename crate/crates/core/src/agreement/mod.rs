//! Chance-corrected agreement over binary rating matrices.
//!
//! Every coefficient here shares the form `(p_o - p_e) / (1 - p_e)` except PABAK, which is
//! `2·p_o - 1`. They differ only in the chance term `p_e`:
//!
//! | statistic        | chance agreement                                   |
//! |------------------|----------------------------------------------------|
//! | Cohen's κ        | Σ_k a_k·b_k from each rater's own marginals         |
//! | Gwet AC1         | 2·π·(1-π), π the mean positive rate across raters   |
//! | Fleiss' κ        | Σ_k p̄_k², p̄ the pooled category proportions        |
//!
//! When `p_e = 1` (every rating in a single category) the ratio is 0/0; those results are
//! returned with `degenerate = true` and an estimate of 1.

mod bootstrap;
mod matrix;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_ci, percentile, BootstrapSpec, ConfidenceInterval};
pub use matrix::RatingMatrix;

use crate::inference::{LedgerError, RunLedger};
use crate::label::ScreeningLabel;

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("at least two raters are required (got {0})")]
    TooFewRaters(usize),
    #[error("rating matrix has no items")]
    Empty,
    #[error("rater columns differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("row {row} has {found} ratings, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("{0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("invalid bootstrap spec: {0}")]
    InvalidBootstrap(String),
    #[error("{degenerate} of {replicates} bootstrap replicates were degenerate ({rate:.1}%), above the 50% limit")]
    DegenerateBootstrap {
        degenerate: usize,
        replicates: usize,
        rate: f64,
    },
    #[error("pass consistency needs at least two temperature passes (got {0})")]
    SinglePass(usize),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    CohenKappa,
    Pabak,
    GwetAc1,
    FleissKappa,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::CohenKappa => "Cohen's kappa",
            Statistic::Pabak => "PABAK",
            Statistic::GwetAc1 => "Gwet AC1",
            Statistic::FleissKappa => "Fleiss' kappa",
        }
    }

    /// Pairwise statistics use the first two raters; the multi-rater ones use all.
    pub fn compute(self, m: &RatingMatrix) -> Result<AgreementResult, AgreementError> {
        let pair = || -> Result<(Vec<ScreeningLabel>, Vec<ScreeningLabel>), AgreementError> {
            if m.r() != 2 {
                return Err(AgreementError::Format(format!(
                    "{} is pairwise; the matrix has {} raters",
                    self.name(),
                    m.r()
                )));
            }
            Ok((m.column(0), m.column(1)))
        };
        match self {
            Statistic::CohenKappa => {
                let (a, b) = pair()?;
                cohen_kappa(&a, &b)
            }
            Statistic::Pabak => {
                let (a, b) = pair()?;
                pabak(&a, &b)
            }
            Statistic::GwetAc1 => gwet_ac1_multi(m),
            Statistic::FleissKappa => fleiss_kappa(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub statistic: Statistic,
    pub estimate: f64,
    pub p_o: f64,
    pub p_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    pub n: usize,
    pub r: usize,
    /// `p_e = 1`: the estimate is a convention, not a ratio.
    pub degenerate: bool,
}

fn kappa_form(statistic: Statistic, p_o: f64, p_e: f64, degenerate: bool, n: usize, r: usize) -> AgreementResult {
    let estimate = if degenerate { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    AgreementResult {
        statistic,
        estimate,
        p_o,
        p_e,
        ci: None,
        n,
        r,
        degenerate,
    }
}

fn check_pair(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> Result<usize, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    Ok(a.len())
}

fn positives(x: &[ScreeningLabel]) -> u64 {
    x.iter().filter(|l| l.is_include()).count() as u64
}

fn matches(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as u64
}

/// Fraction of items on which the two raters agree.
pub fn pairwise_observed(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> Result<f64, AgreementError> {
    let n = check_pair(a, b)?;
    Ok(matches(a, b) as f64 / n as f64)
}

/// Mean over items of the fraction of agreeing ordered rater pairs:
/// `(1/n)·Σ_i Σ_k r_ik(r_ik-1) / (r(r-1))`.
pub fn observed_agreement(m: &RatingMatrix) -> Result<f64, AgreementError> {
    let r = m.r();
    if r < 2 {
        return Err(AgreementError::TooFewRaters(r));
    }
    let pairs = (r * (r - 1)) as u64;
    let agreeing: u64 = m
        .include_counts()
        .map(|inc| {
            let inc = inc as u64;
            let exc = r as u64 - inc;
            inc * inc.saturating_sub(1) + exc * exc.saturating_sub(1)
        })
        .sum();
    Ok(agreeing as f64 / (pairs * m.n() as u64) as f64)
}

pub fn cohen_kappa(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> Result<AgreementResult, AgreementError> {
    let n = check_pair(a, b)? as u64;
    let (pa, pb) = (positives(a), positives(b));
    let chance_num = pa * pb + (n - pa) * (n - pb);
    let nn = n * n;
    let p_e = chance_num as f64 / nn as f64;
    let p_o = matches(a, b) as f64 / n as f64;
    Ok(kappa_form(
        Statistic::CohenKappa,
        p_o,
        p_e,
        chance_num == nn,
        n as usize,
        2,
    ))
}

pub fn pabak(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> Result<AgreementResult, AgreementError> {
    let n = check_pair(a, b)?;
    let p_o = matches(a, b) as f64 / n as f64;
    Ok(AgreementResult {
        statistic: Statistic::Pabak,
        estimate: 2.0 * p_o - 1.0,
        p_o,
        p_e: 0.5,
        ci: None,
        n,
        r: 2,
        degenerate: false,
    })
}

pub fn gwet_ac1_pairwise(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> Result<AgreementResult, AgreementError> {
    let n = check_pair(a, b)?;
    let p_e = ac1_chance(positives(a) + positives(b), 2 * n as u64);
    let p_o = matches(a, b) as f64 / n as f64;
    Ok(kappa_form(Statistic::GwetAc1, p_o, p_e, false, n, 2))
}

/// Binary AC1 chance term `Σ_k π_k(1-π_k) / (q-1) = 2π(1-π)`, where `π` is the mean
/// Include proportion over raters. With complete data that mean is `includes / ratings`.
fn ac1_chance(includes: u64, ratings: u64) -> f64 {
    let pi = includes as f64 / ratings as f64;
    2.0 * pi * (1.0 - pi)
}

pub fn gwet_ac1_multi(m: &RatingMatrix) -> Result<AgreementResult, AgreementError> {
    let p_o = observed_agreement(m)?;
    let (n, r) = (m.n(), m.r());
    let includes: u64 = (0..r).map(|j| m.column_include_count(j) as u64).sum();
    let p_e = ac1_chance(includes, (n * r) as u64);
    Ok(kappa_form(Statistic::GwetAc1, p_o, p_e, false, n, r))
}

pub fn fleiss_kappa(m: &RatingMatrix) -> Result<AgreementResult, AgreementError> {
    let p_o = observed_agreement(m)?;
    let (n, r) = (m.n(), m.r());
    let total = (n * r) as u64;
    let inc: u64 = m.include_counts().map(|c| c as u64).sum();
    let p_bar = inc as f64 / total as f64;
    let p_e = p_bar * p_bar + (1.0 - p_bar) * (1.0 - p_bar);
    let degenerate = inc == 0 || inc == total;
    Ok(kappa_form(Statistic::FleissKappa, p_o, p_e, degenerate, n, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAgreement {
    pub temperature_a: f64,
    pub temperature_b: f64,
    pub kappa: AgreementResult,
}

/// Cohen's κ for every unordered pair of temperature passes in a completed ledger.
pub fn pairwise_consistency(ledger: &RunLedger) -> Result<Vec<PassAgreement>, AgreementError> {
    ledger.check_complete()?;
    let passes = ledger.passes();
    if passes.len() < 2 {
        return Err(AgreementError::SinglePass(passes.len()));
    }
    let columns: Vec<(f64, Vec<ScreeningLabel>)> = passes
        .into_iter()
        .map(|(t, recs)| (t, recs.iter().map(|r| r.decision).collect()))
        .collect();
    let mut out = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            out.push(PassAgreement {
                temperature_a: columns[i].0,
                temperature_b: columns[j].0,
                kappa: cohen_kappa(&columns[i].1, &columns[j].1)?,
            });
        }
    }
    Ok(out)
}
