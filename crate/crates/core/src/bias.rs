//! Bias read off a coupling: who each individual is mapped to, how far away
//! those counterparts are in feature space, and how that adds up per group.
//!
//! Two conventions exist for the individual score. `MassWeighted` sums raw
//! coupling entries, `Σ_j π_ij d(a_i, b_j)`, and is what group totals and the
//! decomposition are built from. `Expectation` averages over the normalized
//! row instead, which under uniform source weights is exactly `n₁` times the
//! mass-weighted value.

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Partition;
use crate::ot::Coupling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    /// Divide each individual's score by the distance to their farthest target.
    PerIndividualMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Expectation,
    #[default]
    MassWeighted,
}

/// Distance between individuals, restricted to a subset of encoded columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetric {
    #[serde(default)]
    pub kind: MetricKind,
    pub feature_mask: Vec<usize>,
    #[serde(default)]
    pub normalization: Normalization,
}

impl FeatureMetric {
    pub fn new(feature_mask: Vec<usize>) -> Self {
        Self {
            kind: MetricKind::Euclidean,
            feature_mask,
            normalization: Normalization::None,
        }
    }

    /// Every column of a `width`-column encoding.
    pub fn all(width: usize) -> Self {
        Self::new((0..width).collect())
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        if self.feature_mask.is_empty() {
            return Err(Error::input("bias", "feature mask is empty"));
        }
        if let Some(&k) = self.feature_mask.iter().find(|&&k| k >= width) {
            return Err(Error::input(
                "bias",
                format!("feature mask column {k} does not exist (encoding has {width})"),
            ));
        }
        Ok(())
    }

    pub fn distance(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self.kind {
            MetricKind::Euclidean => self
                .feature_mask
                .iter()
                .map(|&k| (a[k] - b[k]) * (a[k] - b[k]))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `Γ(a_i, π)`: targets receiving more than `threshold` mass from source `i`.
pub fn support_set(pi: &Coupling, i: usize, threshold: f64) -> Result<Vec<usize>> {
    if i >= pi.n_source() {
        return Err(Error::input("bias", format!("source index {i} out of range")));
    }
    Ok(pi.support(i, threshold))
}

/// Shared state for evaluating bias scores against one coupling.
struct Scorer<'a> {
    pi: &'a Coupling,
    fa: ArrayView2<'a, f64>,
    fb: ArrayView2<'a, f64>,
    metric: &'a FeatureMetric,
    uniform_n: Option<f64>,
}

impl<'a> Scorer<'a> {
    fn new(
        pi: &'a Coupling,
        fa: ArrayView2<'a, f64>,
        fb: ArrayView2<'a, f64>,
        metric: &'a FeatureMetric,
    ) -> Result<Self> {
        if fa.nrows() != pi.n_source() || fb.nrows() != pi.n_target() {
            return Err(Error::input(
                "bias",
                format!(
                    "coupling is {:?} but feature tables have {} and {} rows",
                    pi.shape(),
                    fa.nrows(),
                    fb.nrows()
                ),
            ));
        }
        if fa.ncols() != fb.ncols() {
            return Err(Error::input("bias", "feature tables have different widths"));
        }
        metric.validate(fa.ncols())?;
        let w = pi.source_marginal();
        let uniform_n = w
            .iter()
            .all(|&v| v == w[0])
            .then_some(w.len() as f64);
        Ok(Self {
            pi,
            fa,
            fb,
            metric,
            uniform_n,
        })
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.pi.n_source() {
            return Err(Error::input("bias", format!("source index {i} out of range")));
        }
        if self.pi.source_marginal()[i] <= 0.0 || self.pi.row_sum(i) <= 0.0 {
            return Err(Error::input("bias", format!("source individual {i} carries no mass")));
        }
        Ok(())
    }

    fn distances(&self, i: usize) -> Array1<f64> {
        let a = self.fa.row(i);
        self.fb
            .rows()
            .into_iter()
            .map(|b| self.metric.distance(a, b))
            .collect()
    }

    /// Factor turning raw `π_ij d_ij` sums into row `i`'s score, plus whether the
    /// normalization hit an all-zero distance row.
    fn scale(&self, i: usize, d: &Array1<f64>, convention: Convention) -> (f64, bool) {
        let mut s = match convention {
            Convention::MassWeighted => 1.0,
            Convention::Expectation => match self.uniform_n {
                Some(n) => n,
                None => 1.0 / self.pi.source_marginal()[i],
            },
        };
        let mut degenerate = false;
        if self.metric.normalization == Normalization::PerIndividualMax {
            let max = d.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                s /= max;
            } else {
                s = 0.0;
                degenerate = true;
            }
        }
        (s, degenerate)
    }

    fn raw(&self, i: usize, d: &Array1<f64>) -> f64 {
        let pi = self.pi.matrix();
        pi.row(i).iter().zip(d.iter()).map(|(p, d)| p * d).sum()
    }

    fn individual(&self, i: usize, convention: Convention) -> Result<(f64, bool)> {
        self.check_row(i)?;
        let d = self.distances(i);
        let (s, degenerate) = self.scale(i, &d, convention);
        Ok((s * self.raw(i, &d), degenerate))
    }
}

/// Bias individual `i` experiences under `pi` (see the module docs for the
/// two conventions).
pub fn individual_bias(
    i: usize,
    pi: &Coupling,
    features_a: ArrayView2<'_, f64>,
    features_b: ArrayView2<'_, f64>,
    metric: &FeatureMetric,
    convention: Convention,
) -> Result<f64> {
    Ok(Scorer::new(pi, features_a, features_b, metric)?
        .individual(i, convention)?
        .0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBias {
    pub value: f64,
    /// Set when the individual is at distance zero from every target.
    pub degenerate: bool,
}

/// `u*`: `n₁ Σ_j π_ij d_ij / max_j d_ij`, in `[0, 1]` under uniform source weights.
pub fn normalized_individual_bias(
    i: usize,
    pi: &Coupling,
    features_a: ArrayView2<'_, f64>,
    features_b: ArrayView2<'_, f64>,
    metric: &FeatureMetric,
) -> Result<NormalizedBias> {
    let metric = metric.clone().with_normalization(Normalization::PerIndividualMax);
    let (value, degenerate) =
        Scorer::new(pi, features_a, features_b, &metric)?.individual(i, Convention::Expectation)?;
    Ok(NormalizedBias { value, degenerate })
}

/// Sum of individual biases over the source indices in `group`.
pub fn group_bias(
    group: &[usize],
    pi: &Coupling,
    features_a: ArrayView2<'_, f64>,
    features_b: ArrayView2<'_, f64>,
    metric: &FeatureMetric,
    convention: Convention,
) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::input("bias", "group is empty"));
    }
    let scorer = Scorer::new(pi, features_a, features_b, metric)?;
    group
        .iter()
        .map(|&i| scorer.individual(i, convention).map(|(v, _)| v))
        .sum()
}

/// Individual, group and group-by-group bias for one coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub convention: Convention,
    pub normalization: Normalization,
    pub groups_a: Vec<String>,
    pub groups_b: Vec<String>,
    pub individual_bias: Vec<f64>,
    /// Source indices whose normalized score hit an all-zero distance row.
    pub degenerate_individuals: Vec<usize>,
    pub group_bias: Vec<f64>,
    /// `decomposition[g][h]`: the part of group `g`'s bias carried to target group `h`.
    pub decomposition: Vec<Vec<f64>>,
    /// `mass_shares[g][h]`: fraction of group `g`'s mass transported into group `h`.
    pub mass_shares: Vec<Vec<f64>>,
}

impl BiasReport {
    pub fn total_bias(&self) -> f64 {
        self.group_bias.iter().sum()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("bias report", e))
    }

    pub fn write_decomposition_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_matrix_csv(out, &self.decomposition)
    }

    pub fn write_mass_shares_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_matrix_csv(out, &self.mass_shares)
    }

    fn write_matrix_csv<W: Write>(&self, out: W, matrix: &[Vec<f64>]) -> Result<()> {
        let err = |e: csv::Error| Error::input("bias", format!("cannot write CSV: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group".to_string()];
        header.extend(self.groups_b.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (name, row) in self.groups_a.iter().zip(matrix) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::input("bias", format!("cannot write CSV: {e}")))
    }
}

/// Decompose each source group's bias by the target group that absorbed its mass.
pub fn decompose(
    pi: &Coupling,
    features_a: ArrayView2<'_, f64>,
    features_b: ArrayView2<'_, f64>,
    partition_a: &Partition,
    partition_b: &Partition,
    metric: &FeatureMetric,
    convention: Convention,
) -> Result<BiasReport> {
    let scorer = Scorer::new(pi, features_a, features_b, metric)?;
    let (n1, n2) = pi.shape();
    if partition_a.n_indices() != n1 || partition_b.n_indices() != n2 {
        return Err(Error::input(
            "bias",
            format!(
                "partitions cover {} and {} individuals but the coupling is {n1}x{n2}",
                partition_a.n_indices(),
                partition_b.n_indices()
            ),
        ));
    }
    let labels_b = partition_b.labels();
    let (ga, gb) = (partition_a.len(), partition_b.len());
    let pi_m = pi.matrix();

    let mut individual = vec![0.0; n1];
    let mut degenerate_individuals = Vec::new();
    let mut group_bias = vec![0.0; ga];
    let mut decomposition = vec![vec![0.0; gb]; ga];
    let mut mass_shares = vec![vec![0.0; gb]; ga];

    for (g, members) in partition_a.groups.iter().enumerate() {
        let mut group_mass = 0.0;
        for &i in members {
            scorer.check_row(i)?;
            let d = scorer.distances(i);
            let (s, degenerate) = scorer.scale(i, &d, convention);
            if degenerate {
                degenerate_individuals.push(i);
            }
            let row = pi_m.row(i);
            let mut by_target = vec![0.0; gb];
            let mut mass_by_target = vec![0.0; gb];
            for j in 0..n2 {
                by_target[labels_b[j]] += row[j] * d[j];
                mass_by_target[labels_b[j]] += row[j];
            }
            individual[i] = s * scorer.raw(i, &d);
            group_bias[g] += individual[i];
            for h in 0..gb {
                decomposition[g][h] += s * by_target[h];
                mass_shares[g][h] += mass_by_target[h];
            }
            group_mass += row.sum();
        }
        for share in &mut mass_shares[g] {
            *share /= group_mass;
        }
    }
    degenerate_individuals.sort_unstable();

    Ok(BiasReport {
        convention,
        normalization: metric.normalization,
        groups_a: partition_a.names.clone(),
        groups_b: partition_b.names.clone(),
        individual_bias: individual,
        degenerate_individuals,
        group_bias,
        decomposition,
        mass_shares,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn coupling(m: Array2<f64>) -> Coupling {
        let rows = m.sum_axis(ndarray::Axis(1));
        let cols = m.sum_axis(ndarray::Axis(0));
        let zero = Array2::zeros(m.dim());
        Coupling::from_matrix(m, rows, cols, zero.view()).unwrap()
    }

    #[test]
    fn support_set_examples() {
        let id = coupling(array![[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(support_set(&id, 0, 1e-12).unwrap(), vec![0]);
        let prod = coupling(Array2::from_elem((2, 3), 1.0 / 6.0));
        assert_eq!(support_set(&prod, 1, 1e-12).unwrap(), vec![0, 1, 2]);
        let pi = coupling(array![[0.25, 1e-15, 0.0], [0.0, 0.375, 0.375]]);
        assert_eq!(support_set(&pi, 0, 1e-12).unwrap(), vec![0]);
        assert!(support_set(&pi, 2, 1e-12).is_err());
    }

    #[test]
    fn split_row_hand_values() {
        // One source, mass split evenly between targets at distances 2 and 4.
        let pi = coupling(array![[0.5, 0.5]]);
        let fa = array![[0.0]];
        let fb = array![[2.0], [4.0]];
        let m = FeatureMetric::all(1);
        for conv in [Convention::Expectation, Convention::MassWeighted] {
            let v = individual_bias(0, &pi, fa.view(), fb.view(), &m, conv).unwrap();
            assert_eq!(v, 3.0);
        }

        // Normalized row (0.75, 0.25) against distances (1, 3).
        let pi = coupling(array![[0.375, 0.125], [0.125, 0.375]]);
        let fa = array![[0.0], [5.0]];
        let fb = array![[1.0], [3.0]];
        let v = individual_bias(0, &pi, fa.view(), fb.view(), &m, Convention::Expectation).unwrap();
        assert_eq!(v, 1.5);
    }

    #[test]
    fn conventions_differ_by_source_count() {
        let pi = coupling(array![[0.2, 0.05, 0.0], [0.0, 0.1, 0.15], [0.05, 0.05, 0.15], [0.0, 0.1, 0.15]]);
        let fa = array![[0.0, 1.0], [1.0, 0.3], [2.0, -1.0], [0.5, 0.5]];
        let fb = array![[0.1, 0.0], [1.5, 2.0], [-1.0, 0.25]];
        let m = FeatureMetric::all(2);
        for i in 0..4 {
            let e = individual_bias(i, &pi, fa.view(), fb.view(), &m, Convention::Expectation).unwrap();
            let w = individual_bias(i, &pi, fa.view(), fb.view(), &m, Convention::MassWeighted).unwrap();
            assert_eq!(e, 4.0 * w);
        }
    }

    #[test]
    fn normalized_examples() {
        let fa = array![[0.0]];
        let fb = array![[1.0], [5.0]];
        let m = FeatureMetric::all(1);
        let far = coupling(array![[0.0, 1.0]]);
        assert_eq!(normalized_individual_bias(0, &far, fa.view(), fb.view(), &m).unwrap().value, 1.0);
        let near = coupling(array![[1.0, 0.0]]);
        let v = normalized_individual_bias(0, &near, fa.view(), fb.view(), &m).unwrap();
        assert!((v.value - 0.2).abs() < 1e-15);

        let equidistant = array![[3.0], [-3.0]];
        let even = coupling(array![[0.5, 0.5]]);
        let v = normalized_individual_bias(0, &even, fa.view(), equidistant.view(), &m).unwrap();
        assert_eq!(v.value, 1.0);

        let same = array![[0.0], [0.0]];
        let v = normalized_individual_bias(0, &even, fa.view(), same.view(), &m).unwrap();
        assert_eq!(v, NormalizedBias { value: 0.0, degenerate: true });
    }

    #[test]
    fn zero_mass_row_is_an_input_error() {
        let pi = coupling(array![[0.0, 0.0], [0.5, 0.5]]);
        let f = array![[0.0], [1.0]];
        let err = individual_bias(0, &pi, f.view(), f.view(), &FeatureMetric::all(1), Convention::MassWeighted)
            .unwrap_err();
        assert!(err.is_input());
    }

    #[test]
    fn masked_distance_ignores_other_columns() {
        let pi = coupling(array![[0.5, 0.0], [0.0, 0.5]]);
        let fa = array![[1.0, 9.0], [2.0, -4.0]];
        let fb = array![[1.0, 0.0], [2.0, 0.0]];
        let m = FeatureMetric::new(vec![0]);
        let total = group_bias(&[0, 1], &pi, fa.view(), fb.view(), &m, Convention::MassWeighted).unwrap();
        assert_eq!(total, 0.0);
        assert!(FeatureMetric::new(vec![]).validate(2).is_err());
        assert!(FeatureMetric::new(vec![2]).validate(2).is_err());
    }

    #[test]
    fn single_group_decomposition() {
        let pi = coupling(array![[0.3, 0.2], [0.0, 0.5]]);
        let fa = array![[0.0], [1.0]];
        let fb = array![[1.0], [3.0]];
        let m = FeatureMetric::all(1);
        let pa = Partition::single("A", 2).unwrap();
        let pb = Partition::single("B", 2).unwrap();
        let r = decompose(&pi, fa.view(), fb.view(), &pa, &pb, &m, Convention::MassWeighted).unwrap();
        assert_eq!(r.mass_shares, vec![vec![1.0]]);
        assert!((r.decomposition[0][0] - r.group_bias[0]).abs() < 1e-15);
        assert!((r.group_bias[0] - (0.3 + 0.6 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_coupling_gives_identity_shares() {
        let pi = coupling(Array2::from_diag(&array![0.25, 0.25, 0.25, 0.25]));
        let f = array![[0.0], [1.0], [2.0], [3.0]];
        let p = Partition::new(vec!["x".into(), "y".into()], vec![vec![0, 2], vec![1, 3]], 4).unwrap();
        let r = decompose(&pi, f.view(), f.view(), &p, &p, &FeatureMetric::all(1), Convention::Expectation)
            .unwrap();
        assert_eq!(r.mass_shares, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(r.total_bias(), 0.0);
    }

    #[test]
    fn csv_has_group_headers() {
        let pi = coupling(array![[0.5, 0.0], [0.0, 0.5]]);
        let f = array![[0.0], [1.0]];
        let p = Partition::new(vec!["sex=f".into(), "sex=m".into()], vec![vec![0], vec![1]], 2).unwrap();
        let r = decompose(&pi, f.view(), f.view(), &p, &p, &FeatureMetric::all(1), Convention::MassWeighted)
            .unwrap();
        let mut buf = Vec::new();
        r.write_mass_shares_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "group,sex=f,sex=m\nsex=f,1,0\nsex=m,0,1\n");
    }
}
