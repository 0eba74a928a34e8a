//! The two-school admissions simulation and seeded synthetic tabular data.
//!
//! In the admissions model every School A student is admitted with the same
//! probability `r`, while School B admits exactly its top `r` fraction by GPA.
//! Both schools admit the same share on average, so disparate impact hovers
//! around 1, yet the outcome distributions differ: A's outcome vector is the
//! constant `(1 - r, r)` and B's is a mix of `(0, 1)` and `(1, 0)`. The
//! Wasserstein-2 distance between them is `sqrt(2 r (1 - r))`.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SchemaConfig;
use crate::ot::{build_cost_matrix, solve_exact, DiscreteMeasure};
use crate::policy::{disparate_impact_ratio, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    /// Acceptance rule `r`: the admitted fraction.
    pub rule: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub years: usize,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            rule: 0.25,
            n_a: 400,
            n_b: 400,
            years: 50,
            seed: 7,
        }
    }
}

impl SimulationSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("simulation spec", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rule) {
            return Err(Error::input("simulate", format!("rule {} is outside [0, 1]", self.rule)));
        }
        if self.n_a < 4 || self.n_b < 4 {
            return Err(Error::input("simulate", "each cohort needs at least 4 students"));
        }
        if self.years == 0 {
            return Err(Error::input("simulate", "simulate at least one year"));
        }
        Ok(())
    }
}

/// Number of top-GPA admits: `r n` rounded to nearest, ties toward fewer.
pub fn top_k_count(rule: f64, n: usize) -> usize {
    let target = rule * n as f64;
    ((target - 0.5).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRecord {
    pub year: usize,
    pub admitted_a: usize,
    pub admitted_b: usize,
    /// `rate(B) / rate(A)` of the realized admissions.
    pub di_ratio: f64,
    pub di_degenerate: bool,
    pub wasserstein: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: SimulationSpec,
    pub closed_form_wasserstein: f64,
    /// Mean over years with a finite ratio.
    pub mean_di_ratio: f64,
    pub years: Vec<YearRecord>,
}

impl SimulationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("simulation report", e))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,admitted_a,admitted_b,di_ratio,di_degenerate,wasserstein\n");
        for y in &self.years {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                y.year, y.admitted_a, y.admitted_b, y.di_ratio, y.di_degenerate, y.wasserstein
            ));
        }
        out
    }
}

/// Run the admissions model for `spec.years` years.
pub fn simulate_admissions(spec: &SimulationSpec) -> Result<SimulationReport> {
    spec.validate()?;
    let r = spec.rule;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gpa = Normal::new(3.0, 0.5).expect("valid normal");
    let k = top_k_count(r, spec.n_b);

    let outcomes_a = Array2::from_shape_fn((spec.n_a, 2), |(_, c)| if c == 0 { 1.0 - r } else { r });
    let measure_a = DiscreteMeasure::uniform(outcomes_a)?;
    let mut years = Vec::with_capacity(spec.years);

    for year in 1..=spec.years {
        let gpas: Vec<f64> = (0..spec.n_b).map(|_| gpa.sample(&mut rng)).collect();
        let mut order: Vec<usize> = (0..spec.n_b).collect();
        order.sort_by(|&x, &y| gpas[y].total_cmp(&gpas[x]).then(x.cmp(&y)));
        let mut admitted_b = vec![false; spec.n_b];
        for &s in &order[..k] {
            admitted_b[s] = true;
        }
        let admitted_a: Vec<bool> = (0..spec.n_a).map(|_| rng.random_bool(r)).collect();

        let outcomes_b = Array2::from_shape_fn((spec.n_b, 2), |(s, c)| {
            if admitted_b[s] == (c == 1) {
                1.0
            } else {
                0.0
            }
        });
        let measure_b = DiscreteMeasure::uniform(outcomes_b)?;
        let cost = build_cost_matrix(measure_a.points(), measure_b.points(), 2.0)?;
        let pi = solve_exact(&measure_a, &measure_b, &cost)?;
        let wasserstein = pi.objective().max(0.0).sqrt();

        let predictions: Vec<bool> = admitted_a.iter().chain(&admitted_b).copied().collect();
        let group: Vec<bool> = (0..spec.n_a + spec.n_b).map(|s| s >= spec.n_a).collect();
        let di = disparate_impact_ratio(&predictions, &group)?;
        years.push(YearRecord {
            year,
            admitted_a: admitted_a.iter().filter(|&&a| a).count(),
            admitted_b: k,
            di_ratio: di.ratio,
            di_degenerate: di.degenerate,
            wasserstein,
        });
    }

    let finite: Vec<f64> = years.iter().map(|y| y.di_ratio).filter(|v| v.is_finite()).collect();
    let mean_di_ratio = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(SimulationReport {
        spec: spec.clone(),
        closed_form_wasserstein: (2.0 * r * (1.0 - r)).sqrt(),
        mean_di_ratio,
        years,
    })
}

/// Schema of [`synthetic_credit_csv`].
pub fn synthetic_credit_schema() -> SchemaConfig {
    SchemaConfig::from_json(
        r#"{
  "columns": [
    {"name": "savings", "kind": "numeric", "role": "actionable"},
    {"name": "checking", "kind": "categorical", "role": "actionable"},
    {"name": "existing_credits", "kind": "numeric", "role": "actionable"},
    {"name": "duration", "kind": "numeric", "role": "non_actionable"},
    {"name": "purpose", "kind": "categorical", "role": "non_actionable"},
    {"name": "age", "kind": "numeric", "role": "immutable", "is_group": true, "exclude_from_policy": true},
    {"name": "sex", "kind": "categorical", "role": "immutable", "is_group": true, "exclude_from_policy": true},
    {"name": "credit_risk", "kind": "categorical", "is_label": true}
  ],
  "label_positive_value": "good"
}"#,
    )
    .expect("synthetic schema parses")
}

/// Loan applications whose good/bad label is driven by the actionable
/// columns (savings, checking status, number of existing credits) and loan
/// duration. Age and sex carry no signal.
pub fn synthetic_credit_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let mut out = String::from("savings,checking,existing_credits,duration,purpose,age,sex,credit_risk\n");
    for _ in 0..n {
        let savings_z: f64 = std.sample(&mut rng);
        let checking = ["none", "low", "high"][rng.random_range(0..3)];
        let credits: u32 = rng.random_range(1..=4);
        let duration: u32 = rng.random_range(6..=60);
        let purpose = ["car", "education", "furniture", "business"][rng.random_range(0..4)];
        let age: u32 = rng.random_range(19..=75);
        let sex = if rng.random_bool(0.5) { "f" } else { "m" };
        let checking_effect = match checking {
            "none" => -1.0,
            "low" => 0.0,
            _ => 1.0,
        };
        let latent = 1.5 * savings_z + checking_effect - 0.4 * (credits as f64 - 2.5)
            - 0.03 * (duration as f64 - 33.0);
        let good = rng.random_bool(sigmoid(1.5 * latent));
        out.push_str(&format!(
            "{:.3},{checking},{credits},{duration},{purpose},{age},{sex},{}\n",
            2000.0 + 800.0 * savings_z,
            if good { "good" } else { "bad" }
        ));
    }
    out
}

/// Schema of [`planted_bias_csv`].
pub fn planted_bias_schema() -> SchemaConfig {
    SchemaConfig::from_json(
        r#"{
  "columns": [
    {"name": "priors", "kind": "numeric", "role": "actionable"},
    {"name": "history", "kind": "numeric", "role": "actionable"},
    {"name": "group", "kind": "categorical", "role": "immutable", "is_group": true, "exclude_from_policy": true},
    {"name": "outcome", "kind": "categorical", "is_label": true}
  ],
  "label_positive_value": "1"
}"#,
    )
    .expect("planted schema parses")
}

/// Two groups `g` and `h` (fraction `g_share` in `g`) whose label depends
/// only on two merit features. Group `g` has higher merit on average.
pub fn planted_bias_csv(n: usize, g_share: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let mut out = String::from("priors,history,group,outcome\n");
    for _ in 0..n {
        let in_g = rng.random_bool(g_share);
        let shift = if in_g { 2.0 } else { 0.0 };
        let priors: f64 = std.sample(&mut rng) + shift;
        let history: f64 = std.sample(&mut rng) + shift;
        let positive = rng.random_bool(sigmoid(2.0 * (priors + history)));
        out.push_str(&format!(
            "{priors:.4},{history:.4},{},{}\n",
            if in_g { "g" } else { "h" },
            positive as u8
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_rounds_half_down() {
        assert_eq!(top_k_count(0.25, 400), 100);
        assert_eq!(top_k_count(0.1, 400), 40);
        assert_eq!(top_k_count(0.5, 5), 2);
        assert_eq!(top_k_count(0.3, 5), 1);
        assert_eq!(top_k_count(0.7, 5), 3);
        assert_eq!(top_k_count(0.0, 5), 0);
        assert_eq!(top_k_count(1.0, 5), 5);
    }

    #[test]
    fn quarter_rule_matches_closed_form() {
        let spec = SimulationSpec {
            rule: 0.25,
            n_a: 40,
            n_b: 40,
            years: 3,
            seed: 1,
        };
        let rep = simulate_admissions(&spec).unwrap();
        for y in &rep.years {
            assert!((y.wasserstein - 0.612_372_4).abs() < 1e-7);
            assert!((y.wasserstein - rep.closed_form_wasserstein).abs() < 1e-9);
            assert_eq!(y.admitted_b, 10);
        }
    }

    #[test]
    fn zero_rule_is_degenerate_fair() {
        let spec = SimulationSpec {
            rule: 0.0,
            n_a: 8,
            n_b: 8,
            years: 2,
            seed: 0,
        };
        let rep = simulate_admissions(&spec).unwrap();
        for y in &rep.years {
            assert_eq!(y.wasserstein, 0.0);
            assert_eq!(y.di_ratio, 1.0);
            assert!(y.di_degenerate);
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = |f: fn(&mut SimulationSpec)| {
            let mut s = SimulationSpec::default();
            f(&mut s);
            simulate_admissions(&s).unwrap_err().is_input()
        };
        assert!(bad(|s| s.rule = 1.5));
        assert!(bad(|s| s.n_b = 3));
        assert!(bad(|s| s.years = 0));
    }

    #[test]
    fn generators_are_deterministic_and_match_schema() {
        use crate::ingest::RawTable;
        let a = synthetic_credit_csv(50, 3);
        assert_eq!(a, synthetic_credit_csv(50, 3));
        assert_ne!(a, synthetic_credit_csv(50, 4));
        let t = RawTable::from_reader(a.as_bytes(), &synthetic_credit_schema()).unwrap();
        assert_eq!(t.n_rows, 50);
        let p = planted_bias_csv(30, 0.4, 1);
        let t = RawTable::from_reader(p.as_bytes(), &planted_bias_schema()).unwrap();
        assert_eq!(t.n_rows, 30);
    }
}
