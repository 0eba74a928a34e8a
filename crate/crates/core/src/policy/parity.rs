//! Parity-based fairness baselines over binary groups.
//!
//! Group `false` is the reference group `A` and group `true` is `B`. Every
//! difference is `B - A` and the disparate impact ratio is `rate(B) / rate(A)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratios at or below this value admit disparate impact (the 80% rule).
pub const DISPARATE_IMPACT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparateImpact {
    /// `P(Y_hat = 1 | B) / P(Y_hat = 1 | A)`; `+inf` when only `A` has no positives.
    pub ratio: f64,
    pub admits_disparate_impact: bool,
    /// Neither group receives a positive prediction; the ratio is reported as 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: String,
    pub size: usize,
    pub positive_rate: f64,
    /// `None` when the group has no truth-positive members.
    pub true_positive_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub ratio_convention: String,
    pub disparate_impact_ratio: f64,
    pub admits_disparate_impact: bool,
    pub degenerate: bool,
    pub ddp: f64,
    pub equal_opportunity_gap: Option<f64>,
    pub group_rates: Vec<GroupRates>,
}

fn group_sizes(group: &[bool]) -> (usize, usize) {
    let b = group.iter().filter(|&&g| g).count();
    (group.len() - b, b)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::input(
            "policy",
            format!("{a} predictions but {b} group labels"),
        ));
    }
    Ok(())
}

fn positive_rate(predictions: &[bool], group: &[bool], which: bool) -> f64 {
    let (hits, total) = predictions
        .iter()
        .zip(group)
        .filter(|(_, &g)| g == which)
        .fold((0usize, 0usize), |(h, t), (&p, _)| (h + p as usize, t + 1));
    hits as f64 / total as f64
}

pub fn disparate_impact_ratio(predictions: &[bool], group: &[bool]) -> Result<DisparateImpact> {
    check_lengths(predictions.len(), group.len())?;
    let (n_a, n_b) = group_sizes(group);
    if n_a == 0 || n_b == 0 {
        return Err(Error::input("policy", "both groups must be nonempty"));
    }
    let rate_a = positive_rate(predictions, group, false);
    let rate_b = positive_rate(predictions, group, true);
    let (ratio, degenerate) = match (rate_a == 0.0, rate_b == 0.0) {
        (true, true) => (1.0, true),
        (true, false) => (f64::INFINITY, true),
        _ => (rate_b / rate_a, false),
    };
    Ok(DisparateImpact {
        ratio,
        admits_disparate_impact: ratio <= DISPARATE_IMPACT_THRESHOLD,
        degenerate,
    })
}

/// `E[h | B] - E[h | A]` for scores or 0/1 predictions.
pub fn demographic_parity_difference(scores: &[f64], group: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), group.len())?;
    let mean = |which: bool| -> Result<f64> {
        let (sum, count) = scores
            .iter()
            .zip(group)
            .filter(|(_, &g)| g == which)
            .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
        if count == 0 {
            return Err(Error::input(
                "policy",
                format!("group {} is empty", if which { "B" } else { "A" }),
            ));
        }
        Ok(sum / count as f64)
    };
    Ok(mean(true)? - mean(false)?)
}

fn true_positive_rate(predictions: &[bool], truth: &[bool], group: &[bool], which: bool) -> Option<f64> {
    let (hits, positives) = predictions
        .iter()
        .zip(truth)
        .zip(group)
        .filter(|((_, &t), &g)| g == which && t)
        .fold((0usize, 0usize), |(h, c), ((&p, _), _)| (h + p as usize, c + 1));
    (positives > 0).then(|| hits as f64 / positives as f64)
}

/// `TPR(B) - TPR(A)`.
pub fn equal_opportunity_gap(predictions: &[bool], truth: &[bool], group: &[bool]) -> Result<f64> {
    check_lengths(predictions.len(), group.len())?;
    check_lengths(truth.len(), group.len())?;
    let tpr = |which: bool| {
        true_positive_rate(predictions, truth, group, which).ok_or_else(|| {
            Error::input(
                "policy",
                format!(
                    "group {} has no truth-positive members",
                    if which { "B" } else { "A" }
                ),
            )
        })
    };
    Ok(tpr(true)? - tpr(false)?)
}

/// All three baselines at once. The equal-opportunity gap is omitted when no
/// ground truth is given or a group lacks truth positives.
pub fn parity_report(
    predictions: &[bool],
    truth: Option<&[bool]>,
    group: &[bool],
    group_names: [&str; 2],
) -> Result<ParityReport> {
    let di = disparate_impact_ratio(predictions, group)?;
    let as_scores: Vec<f64> = predictions.iter().map(|&p| p as u8 as f64).collect();
    let ddp = demographic_parity_difference(&as_scores, group)?;
    let eo = truth.and_then(|t| equal_opportunity_gap(predictions, t, group).ok());
    let (n_a, n_b) = group_sizes(group);
    let group_rates = [(false, n_a), (true, n_b)]
        .into_iter()
        .map(|(which, size)| GroupRates {
            group: group_names[which as usize].to_string(),
            size,
            positive_rate: positive_rate(predictions, group, which),
            true_positive_rate: truth.and_then(|t| true_positive_rate(predictions, t, group, which)),
        })
        .collect();
    Ok(ParityReport {
        ratio_convention: format!(
            "positive rate of {} / positive rate of {}",
            group_names[1], group_names[0]
        ),
        disparate_impact_ratio: di.ratio,
        admits_disparate_impact: di.admits_disparate_impact,
        degenerate: di.degenerate,
        ddp,
        equal_opportunity_gap: eo,
        group_rates,
    })
}
