//! AUC (ties count half) and mean BCE on held-out interactions.

use serde::{Deserialize, Serialize};

use crate::data::Interaction;
use crate::error::{Error, Result};
use crate::losses;
use crate::netcore::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsResult {
    pub auc: f64,
    pub bce: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Mann-Whitney AUC in `O(n log n)`: sort once, then sweep groups of equal
/// scores, crediting each positive with the negatives strictly below it
/// plus half of the negatives tied with it.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Precondition("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc { n_pos, n_neg });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the U statistic, kept integral.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut p, mut q) = (0u128, 0u128);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if labels[order[end]] {
                p += 1;
            } else {
                q += 1;
            }
            end += 1;
        }
        twice_u += 2 * p * neg_below + p * q;
        neg_below += q;
        start = end;
    }
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean clamped BCE.
pub fn bce_eval(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::Empty("bce_eval input"));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| losses::bce(p, y))
        .sum();
    Ok(total / scores.len() as f64)
}

/// Deterministic-mode scoring of every test interaction.
pub fn evaluate(net: &Network, testset: &[Interaction]) -> Result<MetricsResult> {
    if testset.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let pairs: Vec<(usize, usize)> = testset.iter().map(Interaction::pair).collect();
    let labels: Vec<bool> = testset.iter().map(|x| x.label).collect();
    let scores = net.predict(&pairs)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(MetricsResult {
        auc: auc(&scores, &labels)?,
        bce: bce_eval(&scores, &labels)?,
        n_pos,
        n_neg: labels.len() - n_pos,
    })
}
