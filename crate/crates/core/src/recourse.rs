//! Recourse through the coupling: move an individual's actionable features
//! part of the way toward the average of their counterparts, then re-score.
//!
//! Interpolation happens in encoded space, so a one-hot block may become
//! fractional. The policy is linear, which keeps such rows meaningful inputs;
//! [`decode_row`] labels them as partial when rendering.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, Encoder, FeatureRole};
use crate::ot::Coupling;
use crate::policy::Policy;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Expected actionable features of source `i`'s counterparts: the row of `pi`
/// normalized to a distribution, applied to `features_b[:, mask]`.
pub fn barycentric_projection(
    i: usize,
    pi: &Coupling,
    features_b: ArrayView2<'_, f64>,
    mask: &[usize],
) -> Result<Array1<f64>> {
    if features_b.nrows() != pi.n_target() {
        return Err(Error::input(
            "recourse",
            format!("coupling has {} targets but B has {} rows", pi.n_target(), features_b.nrows()),
        ));
    }
    if let Some(&k) = mask.iter().find(|&&k| k >= features_b.ncols()) {
        return Err(Error::input("recourse", format!("mask column {k} out of range")));
    }
    let weights = pi
        .row_conditional(i)
        .map_err(|_| Error::input("recourse", format!("source individual {i} carries no mass")))?;
    Ok(mask
        .iter()
        .map(|&k| {
            weights
                .iter()
                .zip(features_b.column(k))
                .map(|(w, b)| w * b)
                .sum()
        })
        .collect())
}

/// Columns whose role is [`FeatureRole::Actionable`].
pub fn actionable_columns(roles: &[FeatureRole]) -> Vec<usize> {
    roles
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == FeatureRole::Actionable)
        .map(|(k, _)| k)
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input("recourse", format!("alpha {alpha} is outside [0, 1]")));
    }
    Ok(())
}

/// `(1 - α) a + α p` on the actionable columns, every other column copied.
/// `projection` lists values for the actionable columns in column order.
pub fn interpolate(
    a: ArrayView1<'_, f64>,
    projection: ArrayView1<'_, f64>,
    alpha: f64,
    roles: &[FeatureRole],
) -> Result<Array1<f64>> {
    check_alpha(alpha)?;
    if roles.len() != a.len() {
        return Err(Error::input("recourse", "role list length differs from feature width"));
    }
    let cols = actionable_columns(roles);
    if cols.len() != projection.len() {
        return Err(Error::input(
            "recourse",
            format!("projection has {} values for {} actionable columns", projection.len(), cols.len()),
        ));
    }
    let mut out = a.to_owned();
    for (&k, &p) in cols.iter().zip(projection) {
        out[k] = if alpha == 0.0 {
            a[k]
        } else if alpha == 1.0 {
            p
        } else {
            (1.0 - alpha) * a[k] + alpha * p
        };
    }
    Ok(out)
}

fn rows<S: Serializer>(m: &Array2<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(m.rows().into_iter().map(|r| r.to_vec()))
}

/// Outcome of moving a set of individuals by one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecourseResult {
    pub alpha: f64,
    pub threshold: f64,
    /// Caller-facing ids of the rows, in the order of `new_features`.
    pub individual_ids: Vec<usize>,
    #[serde(serialize_with = "rows")]
    pub new_features: Array2<f64>,
    pub baseline_probability: Vec<f64>,
    pub good_label_probability: Vec<f64>,
    /// Positions (into `individual_ids`) that crossed the threshold upward.
    pub reclassified: Vec<usize>,
    pub reclassified_fraction: f64,
    /// Mean change of every encoded column among the reclassified; zeros when none.
    pub feature_deltas: Vec<f64>,
}

impl RecourseResult {
    pub fn mean_probability(&self) -> f64 {
        self.good_label_probability.iter().sum::<f64>() / self.good_label_probability.len() as f64
    }
}

/// Move every row of `a_subset` toward its barycentric projection for each
/// alpha and re-score with `policy`. Row `r` of `a_subset` is source `ids[r]`
/// of `pi`.
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep(
    policy: &Policy,
    a_subset: ArrayView2<'_, f64>,
    ids: &[usize],
    pi: &Coupling,
    features_b: ArrayView2<'_, f64>,
    alphas: &[f64],
    roles: &[FeatureRole],
    threshold: f64,
) -> Result<Vec<RecourseResult>> {
    if a_subset.nrows() == 0 {
        return Err(Error::input("recourse", "no individuals to move"));
    }
    if ids.len() != a_subset.nrows() {
        return Err(Error::input("recourse", "one source id is needed per row"));
    }
    if roles.len() != a_subset.ncols() || features_b.ncols() != a_subset.ncols() {
        return Err(Error::input("recourse", "feature widths and role list disagree"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::input("recourse", format!("threshold {threshold} is outside [0, 1]")));
    }
    for &alpha in alphas {
        check_alpha(alpha)?;
    }
    let mask = actionable_columns(roles);
    let projections = ids
        .iter()
        .map(|&i| barycentric_projection(i, pi, features_b, &mask))
        .collect::<Result<Vec<_>>>()?;
    let baseline = policy.positive_probabilities(a_subset)?.to_vec();
    let n = a_subset.nrows();

    alphas
        .iter()
        .map(|&alpha| {
            let mut new_features = Array2::zeros(a_subset.raw_dim());
            for (r, proj) in projections.iter().enumerate() {
                let row = interpolate(a_subset.row(r), proj.view(), alpha, roles)?;
                new_features.row_mut(r).assign(&row);
            }
            let probs = policy.positive_probabilities(new_features.view())?.to_vec();
            let reclassified: Vec<usize> = (0..n)
                .filter(|&r| baseline[r] < threshold && probs[r] >= threshold)
                .collect();
            let mut deltas = vec![0.0; a_subset.ncols()];
            if !reclassified.is_empty() {
                for &r in &reclassified {
                    for (k, d) in deltas.iter_mut().enumerate() {
                        *d += new_features[[r, k]] - a_subset[[r, k]];
                    }
                }
                let m = reclassified.len() as f64;
                deltas.iter_mut().for_each(|d| *d /= m);
            }
            Ok(RecourseResult {
                alpha,
                threshold,
                individual_ids: ids.to_vec(),
                new_features,
                baseline_probability: baseline.clone(),
                good_label_probability: probs,
                reclassified_fraction: reclassified.len() as f64 / n as f64,
                reclassified,
                feature_deltas: deltas,
            })
        })
        .collect()
}

/// Per raw feature change among the reclassified at one alpha.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureChange {
    pub alpha: f64,
    pub feature: String,
    pub role: FeatureRole,
    pub n_reclassified: usize,
    /// Numeric features: mean signed change in z-score units. Categorical
    /// features: net mass moved between categories.
    pub mean_change: f64,
    /// Signed mean change of each category column of a one-hot block.
    pub categories: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureChangeSummary {
    /// Set when no alpha reclassified anyone; `rows` is then empty.
    pub empty: bool,
    pub rows: Vec<FeatureChange>,
}

/// Aggregate encoded-column deltas to raw features for every alpha that
/// reclassified at least one individual.
pub fn feature_change_summary(results: &[RecourseResult], encoder: &Encoder) -> Result<FeatureChangeSummary> {
    let mut rows = Vec::new();
    for res in results {
        if res.reclassified.is_empty() {
            continue;
        }
        if res.feature_deltas.len() != encoder.width {
            return Err(Error::input("recourse", "result width differs from the encoder"));
        }
        for f in &encoder.features {
            let block = &res.feature_deltas[f.start..f.start + f.width];
            let (mean_change, categories) = match f.kind {
                ColumnKind::Numeric => (block[0], Vec::new()),
                ColumnKind::Categorical => {
                    // Mean one-hot rows sum to one before and after, so half the
                    // L1 norm of the mean change is the net mass moved between
                    // categories.
                    let moved = 0.5 * block.iter().map(|d| d.abs()).sum::<f64>();
                    let cats = f.categories.iter().cloned().zip(block.iter().copied()).collect();
                    (moved, cats)
                }
            };
            rows.push(FeatureChange {
                alpha: res.alpha,
                feature: f.name.clone(),
                role: f.role,
                n_reclassified: res.reclassified.len(),
                mean_change,
                categories,
            });
        }
    }
    Ok(FeatureChangeSummary {
        empty: rows.is_empty(),
        rows,
    })
}

/// Long-format table `alpha,individual_id,probability` over all results.
pub fn write_probabilities_csv<W: Write>(results: &[RecourseResult], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::input("recourse", format!("cannot write CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "individual_id", "probability"]).map_err(err)?;
    for res in results {
        for (id, p) in res.individual_ids.iter().zip(&res.good_label_probability) {
            w.write_record([res.alpha.to_string(), id.to_string(), p.to_string()])
                .map_err(err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::input("recourse", format!("cannot write CSV: {e}")))
}

/// Render an encoded row back into raw feature values. Numeric columns are
/// un-z-scored; a one-hot block that is not exactly one category becomes
/// `partial(cat:weight;...)` listing its nonzero entries.
pub fn decode_row(encoder: &Encoder, row: ArrayView1<'_, f64>) -> Result<Vec<(String, String)>> {
    if row.len() != encoder.width {
        return Err(Error::input("recourse", "row width differs from the encoder"));
    }
    Ok(encoder
        .features
        .iter()
        .map(|f| {
            let block = row.slice(ndarray::s![f.start..f.start + f.width]);
            let value = match f.kind {
                ColumnKind::Numeric if f.constant => f.mean.to_string(),
                ColumnKind::Numeric => (block[0] * f.std + f.mean).to_string(),
                ColumnKind::Categorical => {
                    let hot: Vec<usize> = (0..f.width).filter(|&k| block[k] != 0.0).collect();
                    if hot.len() == 1 && block[hot[0]] == 1.0 {
                        f.categories[hot[0]].clone()
                    } else {
                        let parts: Vec<String> = hot
                            .iter()
                            .map(|&k| format!("{}:{}", f.categories[k], block[k]))
                            .collect();
                        format!("partial({})", parts.join(";"))
                    }
                }
            };
            (f.name.clone(), value)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Dataset, RawTable, SchemaConfig};
    use ndarray::{array, Array2};

    fn coupling(m: Array2<f64>) -> Coupling {
        let rows = m.sum_axis(ndarray::Axis(1));
        let cols = m.sum_axis(ndarray::Axis(0));
        let zero = Array2::zeros(m.dim());
        Coupling::from_matrix(m, rows, cols, zero.view()).unwrap()
    }

    const ACT: FeatureRole = FeatureRole::Actionable;
    const IMM: FeatureRole = FeatureRole::Immutable;

    #[test]
    fn projection_examples() {
        let fb = array![[2.0, 7.0], [4.0, -1.0]];
        let one = coupling(array![[0.0, 0.5], [0.5, 0.0]]);
        assert_eq!(barycentric_projection(0, &one, fb.view(), &[0, 1]).unwrap().to_vec(), vec![4.0, -1.0]);

        let split = coupling(array![[0.25, 0.25], [0.25, 0.25]]);
        assert_eq!(barycentric_projection(1, &split, fb.view(), &[0]).unwrap().to_vec(), vec![3.0]);

        let id = coupling(array![[0.5, 0.0], [0.0, 0.5]]);
        for i in 0..2 {
            let p = barycentric_projection(i, &id, fb.view(), &[0, 1]).unwrap();
            assert_eq!(p, fb.row(i));
        }

        let zero = coupling(array![[0.0, 0.0], [0.5, 0.5]]);
        assert!(barycentric_projection(0, &zero, fb.view(), &[0]).unwrap_err().is_input());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = array![2.0, 10.0, 0.3];
        let roles = [ACT, IMM, ACT];
        let p = array![4.0, 0.7];
        assert_eq!(interpolate(a.view(), p.view(), 0.0, &roles).unwrap(), a);
        assert_eq!(interpolate(a.view(), p.view(), 1.0, &roles).unwrap().to_vec(), vec![4.0, 10.0, 0.7]);
        let mid = interpolate(a.view(), p.view(), 0.5, &roles).unwrap();
        assert_eq!(mid[0], 3.0);
        assert_eq!(mid[1], 10.0);
        assert!(interpolate(a.view(), p.view(), 1.5, &roles).unwrap_err().is_input());
        assert!(interpolate(a.view(), p.view(), -0.1, &roles).is_err());
    }

    #[test]
    fn zero_alpha_and_constant_policy() {
        let fa = array![[0.0, 1.0], [1.0, 0.0]];
        let fb = array![[3.0, 1.0], [5.0, 0.0]];
        let pi = coupling(array![[0.5, 0.0], [0.0, 0.5]]);
        let roles = [ACT, IMM];

        let policy = Policy::new(vec![1.0, 0.5], -1.0);
        let res = alpha_sweep(&policy, fa.view(), &[0, 1], &pi, fb.view(), &[0.0, 1.0], &roles, 0.5).unwrap();
        assert_eq!(res[0].good_label_probability, res[0].baseline_probability);
        assert_eq!(res[0].reclassified_fraction, 0.0);
        assert!(res[1].mean_probability() > res[0].mean_probability());
        assert_eq!(res[1].feature_deltas[1], 0.0);

        let flat = Policy::constant(2, 0.0);
        let res = alpha_sweep(&flat, fa.view(), &[0, 1], &pi, fb.view(), &[0.0, 0.5, 1.0], &roles, 0.5).unwrap();
        assert!(res.iter().all(|r| r.good_label_probability.iter().all(|&p| p == 0.5)));

        let empty = Array2::<f64>::zeros((0, 2));
        assert!(alpha_sweep(&flat, empty.view(), &[], &pi, fb.view(), &[0.0], &roles, 0.5).is_err());
    }

    fn savings_encoder() -> Encoder {
        let s = SchemaConfig::from_json(
            r#"{"columns":[{"name":"savings","kind":"numeric","role":"actionable"},
                           {"name":"job","kind":"categorical","role":"actionable"},
                           {"name":"age","kind":"numeric","role":"immutable"}]}"#,
        )
        .unwrap();
        let raw = RawTable::from_reader("savings,job,age\n1,a,20\n3,b,40\n".as_bytes(), &s).unwrap();
        Dataset::from_raw(raw).unwrap().encoder
    }

    fn result_with(deltas: Vec<f64>, reclassified: Vec<usize>) -> RecourseResult {
        RecourseResult {
            alpha: 1.0,
            threshold: 0.5,
            individual_ids: vec![0],
            new_features: Array2::zeros((1, 4)),
            baseline_probability: vec![0.4],
            good_label_probability: vec![0.6],
            reclassified_fraction: reclassified.len() as f64,
            reclassified,
            feature_deltas: deltas,
        }
    }

    #[test]
    fn summary_of_single_reclassified() {
        let enc = savings_encoder();
        let res = result_with(vec![0.8, -0.25, 0.25, 0.0], vec![0]);
        let summary = feature_change_summary(&[res], &enc).unwrap();
        assert!(!summary.empty);
        let by_name = |n: &str| summary.rows.iter().find(|r| r.feature == n).unwrap();
        assert_eq!(by_name("savings").mean_change, 0.8);
        assert_eq!(by_name("job").mean_change, 0.25);
        assert_eq!(by_name("job").categories, vec![("a".to_string(), -0.25), ("b".to_string(), 0.25)]);
        assert_eq!(by_name("age").mean_change, 0.0);
    }

    #[test]
    fn summary_without_reclassification_is_flagged() {
        let enc = savings_encoder();
        let summary = feature_change_summary(&[result_with(vec![0.0; 4], vec![])], &enc).unwrap();
        assert!(summary.empty && summary.rows.is_empty());
    }

    #[test]
    fn decode_marks_partial_categories() {
        let enc = savings_encoder();
        let decoded = decode_row(&enc, array![1.0, 0.0, 1.0, -1.0].view()).unwrap();
        assert_eq!(decoded[0], ("savings".to_string(), "3".to_string()));
        assert_eq!(decoded[1].1, "b");
        assert_eq!(decoded[2].1, "20");
        let decoded = decode_row(&enc, array![0.0, 0.5, 0.5, 0.0].view()).unwrap();
        assert_eq!(decoded[1].1, "partial(a:0.5;b:0.5)");
    }

    #[test]
    fn long_csv_layout() {
        let mut buf = Vec::new();
        write_probabilities_csv(&[result_with(vec![0.0; 4], vec![])], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "alpha,individual_id,probability\n1,0,0.6\n");
    }
}
