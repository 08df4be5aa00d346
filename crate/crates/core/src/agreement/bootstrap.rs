//! Item-resampling percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AgreementError, AgreementResult, RatingMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            replicates: 2000,
            seed: 20_240_601,
            confidence: 0.95,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<(), AgreementError> {
        if self.replicates < 100 {
            return Err(AgreementError::InvalidBootstrap(format!(
                "replicates must be >= 100 (got {})",
                self.replicates
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(AgreementError::InvalidBootstrap(format!(
                "confidence must lie in (0, 1) (got {})",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
    pub confidence: f64,
    pub replicates: usize,
    /// Replicates skipped because the statistic was degenerate or undefined on them.
    pub degenerate_replicates: usize,
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile interval over `spec.replicates` row-resampled copies of `m`.
///
/// Replicate `b` draws its rows from a ChaCha8 stream selected by `(spec.seed, b)`, so the
/// result does not depend on thread scheduling.
pub fn bootstrap_ci<F>(
    statistic: F,
    m: &RatingMatrix,
    spec: &BootstrapSpec,
) -> Result<ConfidenceInterval, AgreementError>
where
    F: Fn(&RatingMatrix) -> Result<AgreementResult, AgreementError> + Sync,
{
    spec.validate()?;
    let n = m.n();
    if n == 0 {
        return Err(AgreementError::Empty);
    }
    let estimates: Vec<Option<f64>> = (0..spec.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            match statistic(&m.resample(&rows)) {
                Ok(res) if !res.degenerate && res.estimate.is_finite() => Some(res.estimate),
                _ => None,
            }
        })
        .collect();

    let mut valid: Vec<f64> = estimates.into_iter().flatten().collect();
    let degenerate = spec.replicates - valid.len();
    if 2 * degenerate > spec.replicates {
        return Err(AgreementError::DegenerateBootstrap {
            degenerate,
            replicates: spec.replicates,
            rate: 100.0 * degenerate as f64 / spec.replicates as f64,
        });
    }
    valid.sort_by(f64::total_cmp);
    let alpha = 1.0 - spec.confidence;
    Ok(ConfidenceInterval {
        low: percentile(&valid, alpha / 2.0),
        high: percentile(&valid, 1.0 - alpha / 2.0),
        confidence: spec.confidence,
        replicates: spec.replicates,
        degenerate_replicates: degenerate,
    })
}
