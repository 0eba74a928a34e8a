//! Configuration-driven audits: load populations, obtain policies, solve the
//! transport problem between outcome measures and write reports.
//!
//! Relative paths in a config file are resolved against the directory that
//! holds the config. Every report is a pure function of the config and seed,
//! so repeated runs write byte-identical files.

use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::bias::{decompose, BiasReport, Convention, FeatureMetric, Normalization};
use crate::error::{Error, Result};
use crate::ingest::{
    cross, load_csv, load_csv_pair, partition_by, split, Bin, Dataset, FeatureRole, Partition,
    SchemaConfig,
};
use crate::ot::{build_cost_matrix, solve, Coupling, SolveStats, SolverConfig};
use crate::policy::{apply_policy, empirical_outcome_measure, train_logistic_with, LogisticConfig, Policy};
use crate::recourse::{
    alpha_sweep, decode_row, feature_change_summary, write_probabilities_csv, FeatureChangeSummary,
    RecourseResult,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub data: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PolicySource {
    /// Fit a logistic policy on the population's own labels.
    Train {
        #[serde(default = "default_l2")]
        l2: f64,
        /// Train on a seeded split of this size instead of every row.
        #[serde(default)]
        train_fraction: Option<f64>,
    },
    Load { path: PathBuf },
}

fn default_l2() -> f64 {
    1e-4
}

impl Default for PolicySource {
    fn default() -> Self {
        PolicySource::Train {
            l2: default_l2(),
            train_fraction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub column: String,
    #[serde(default)]
    pub bins: Option<Vec<Bin>>,
}

/// Which policy's hard predictions, if any, further split the partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSplit {
    #[default]
    None,
    /// Each population by the policy applied to it.
    Own,
    PolicyA,
    PolicyB,
}

/// How the recourse audit separates the population into `A` (to move) and `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecourseSplit {
    #[default]
    Label,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    /// Feature roles whose encoded columns enter the distance.
    #[serde(default = "all_roles")]
    pub roles: Vec<FeatureRole>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub convention: Convention,
}

fn all_roles() -> Vec<FeatureRole> {
    FeatureRole::ALL.to_vec()
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            roles: all_roles(),
            normalization: Normalization::None,
            convention: Convention::MassWeighted,
        }
    }
}

fn default_threshold() -> f64 {
    0.5
}

fn default_order() -> f64 {
    2.0
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_output() -> PathBuf {
    PathBuf::from("audit_out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub population_a: PopulationSpec,
    /// Defaults to population A.
    #[serde(default)]
    pub population_b: Option<PopulationSpec>,
    #[serde(default)]
    pub policy_a: PolicySource,
    /// Defaults to the same source as `policy_a`.
    #[serde(default)]
    pub policy_b: Option<PolicySource>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_order")]
    pub cost_order: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub metric: MetricSpec,
    /// Crossed in order; empty means one group holding everybody.
    #[serde(default)]
    pub partitions_a: Vec<PartitionSpec>,
    /// Defaults to `partitions_a`.
    #[serde(default)]
    pub partitions_b: Option<Vec<PartitionSpec>>,
    #[serde(default)]
    pub prediction_partition: PredictionSplit,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub recourse_split: RecourseSplit,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub write_coupling: bool,
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("audit config", e))
    }

    /// Parse a config file and resolve its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.population_a.data);
        fix(&mut self.population_a.schema);
        if let Some(b) = self.population_b.as_mut() {
            fix(&mut b.data);
            fix(&mut b.schema);
        }
        for p in [Some(&mut self.policy_a), self.policy_b.as_mut()].into_iter().flatten() {
            if let PolicySource::Load { path } = p {
                fix(path);
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let exists = |p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::input("audit", format!("file {} does not exist", p.display())))
            }
        };
        exists(&self.population_a.data)?;
        exists(&self.population_a.schema)?;
        if let Some(b) = &self.population_b {
            exists(&b.data)?;
            exists(&b.schema)?;
        }
        for p in [Some(&self.policy_a), self.policy_b.as_ref()].into_iter().flatten() {
            match p {
                PolicySource::Load { path } => exists(path)?,
                PolicySource::Train { l2, train_fraction } => {
                    if !(*l2 >= 0.0 && l2.is_finite()) {
                        return Err(Error::input("audit", "l2 must be a nonnegative number"));
                    }
                    if let Some(f) = train_fraction {
                        if !(*f > 0.0 && *f < 1.0) {
                            return Err(Error::input("audit", "train_fraction must be in (0, 1)"));
                        }
                    }
                }
            }
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::input("audit", format!("alpha {a} is outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::input("audit", "threshold must be in [0, 1]"));
        }
        if !(self.cost_order >= 1.0 && self.cost_order.is_finite()) {
            return Err(Error::input("audit", "cost_order must be >= 1"));
        }
        if self.metric.roles.is_empty() {
            return Err(Error::input("audit", "metric.roles is empty"));
        }
        self.solver.validate()
    }
}

/// Populations and policies ready for an audit.
pub struct Prepared {
    pub a: Dataset,
    pub b: Dataset,
    pub policy_a: Policy,
    pub policy_b: Policy,
}

fn load_policy(path: &Path, dataset: &Dataset) -> Result<Policy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let policy = Policy::from_json(&text)?;
    if policy.n_features() != dataset.width() {
        return Err(Error::input(
            "audit",
            format!(
                "policy {} has {} weights but the encoding has {} columns",
                path.display(),
                policy.n_features(),
                dataset.width()
            ),
        ));
    }
    if !policy.encoder_fingerprint.is_empty() && policy.encoder_fingerprint != dataset.fingerprint() {
        return Err(Error::input(
            "audit",
            format!("policy {} was fit against a different encoding", path.display()),
        ));
    }
    Ok(policy)
}

/// Fit a logistic policy on `dataset`'s labels, leaving out excluded columns.
pub fn train_policy(dataset: &Dataset, l2: f64, train_fraction: Option<f64>, seed: u64) -> Result<Policy> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::input("audit", "training a policy needs a label column"))?;
    let config = LogisticConfig {
        l2,
        frozen: dataset.policy_frozen_mask(),
        ..LogisticConfig::default()
    };
    let policy = match train_fraction {
        None => train_logistic_with(dataset.features(), labels, &config, seed)?,
        Some(f) => {
            let (train, _) = split(dataset.n_rows(), f, seed)?;
            let sub = dataset.subset(&train)?;
            train_logistic_with(sub.features(), sub.labels().expect("subset keeps labels"), &config, seed)?
        }
    };
    let positive = dataset.raw.schema.positive_value().to_string();
    let policy = if positive == "1" {
        policy
    } else {
        policy.with_labels("other", positive)
    };
    Ok(policy.with_fingerprint(dataset.fingerprint()))
}

fn obtain_policy(source: &PolicySource, dataset: &Dataset, seed: u64) -> Result<Policy> {
    match source {
        PolicySource::Train { l2, train_fraction } => train_policy(dataset, *l2, *train_fraction, seed),
        PolicySource::Load { path } => load_policy(path, dataset),
    }
}

/// Load both populations (encoded jointly when they differ) and their policies.
pub fn prepare(config: &AuditConfig) -> Result<Prepared> {
    config.validate()?;
    let schema_a = SchemaConfig::load(&config.population_a.schema)?;
    let (a, b) = match &config.population_b {
        Some(pb) if pb != &config.population_a => {
            let schema_b = SchemaConfig::load(&pb.schema)?;
            if schema_a != schema_b {
                return Err(Error::input("audit", "populations A and B must share a schema"));
            }
            load_csv_pair(&config.population_a.data, &pb.data, &schema_a)?
        }
        _ => {
            let a = load_csv(&config.population_a.data, &schema_a)?;
            (a.clone(), a)
        }
    };
    let policy_a = obtain_policy(&config.policy_a, &a, config.seed)?;
    let policy_b = match &config.policy_b {
        None if a == b => policy_a.clone(),
        None => obtain_policy(&config.policy_a, &b, config.seed)?,
        Some(src) => obtain_policy(src, &b, config.seed)?,
    };
    Ok(Prepared {
        a,
        b,
        policy_a,
        policy_b,
    })
}

/// Exact or entropic coupling between the outcome measures of two policies.
pub fn outcome_coupling(
    policy_a: &Policy,
    features_a: ArrayView2<'_, f64>,
    policy_b: &Policy,
    features_b: ArrayView2<'_, f64>,
    cost_order: f64,
    solver: &SolverConfig,
) -> Result<Coupling> {
    let ma = empirical_outcome_measure(&apply_policy(policy_a, features_a)?)?;
    let mb = empirical_outcome_measure(&apply_policy(policy_b, features_b)?)?;
    let cost = build_cost_matrix(ma.points(), mb.points(), cost_order)?;
    solve(&ma, &mb, &cost, solver)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn coupling_csv(pi: &Coupling, threshold: f64) -> String {
    let mut out = String::from("i,j,mass\n");
    for (i, j, m) in pi.sparse_entries(threshold) {
        out.push_str(&format!("{i},{j},{m}\n"));
    }
    out
}

fn json<T: Serialize>(value: &T, what: &str) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(what, e))?;
    text.push('\n');
    Ok(text.into_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub wasserstein: f64,
    pub objective: f64,
    pub cost_order: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub solver: SolveStats,
    pub policy_a_fingerprint: String,
    pub policy_b_fingerprint: String,
}

/// `W_p` between the outcome measures of policy A on population A and policy
/// B on population B. Writes `distance.json` and optionally `coupling.csv`.
pub fn run_distance(config: &AuditConfig) -> Result<DistanceReport> {
    let prep = prepare(config)?;
    let pi = outcome_coupling(
        &prep.policy_a,
        prep.a.features(),
        &prep.policy_b,
        prep.b.features(),
        config.cost_order,
        &config.solver,
    )?;
    let report = DistanceReport {
        wasserstein: pi.objective().max(0.0).powf(1.0 / config.cost_order),
        objective: pi.objective(),
        cost_order: config.cost_order,
        n_a: prep.a.n_rows(),
        n_b: prep.b.n_rows(),
        solver: *pi.stats(),
        policy_a_fingerprint: prep.policy_a.encoder_fingerprint.clone(),
        policy_b_fingerprint: prep.policy_b.encoder_fingerprint.clone(),
    };
    write_file(&config.output_dir, "distance.json", &json(&report, "distance report")?)?;
    if config.write_coupling {
        write_file(
            &config.output_dir,
            "coupling.csv",
            coupling_csv(&pi, config.solver.support_threshold).as_bytes(),
        )?;
    }
    Ok(report)
}

/// Partition of the rows as two complementary prediction groups.
pub fn prediction_partition(predictions: &[bool]) -> Result<Partition> {
    let neg: Vec<usize> = (0..predictions.len()).filter(|&i| !predictions[i]).collect();
    let pos: Vec<usize> = (0..predictions.len()).filter(|&i| predictions[i]).collect();
    let (names, groups): (Vec<_>, Vec<_>) = [("pred=neg", neg), ("pred=pos", pos)]
        .into_iter()
        .filter(|(_, g)| !g.is_empty())
        .map(|(n, g)| (n.to_string(), g))
        .unzip();
    Partition::new(names, groups, predictions.len())
}

fn build_partition(
    dataset: &Dataset,
    specs: &[PartitionSpec],
    predictions: Option<Vec<bool>>,
) -> Result<Partition> {
    let mut part = Partition::single("all", dataset.n_rows())?;
    for (k, spec) in specs.iter().enumerate() {
        let next = partition_by(dataset, &spec.column, spec.bins.as_deref())?;
        part = if k == 0 { next } else { cross(&part, &next)? };
    }
    if let Some(pred) = predictions {
        let next = prediction_partition(&pred)?;
        part = if specs.is_empty() { next } else { cross(&part, &next)? };
    }
    Ok(part)
}

/// Metric over the encoded columns whose role is listed in `spec`.
pub fn metric_for(dataset: &Dataset, spec: &MetricSpec) -> Result<FeatureMetric> {
    let cols = dataset.role_columns(&spec.roles);
    if cols.is_empty() {
        return Err(Error::input("audit", "no encoded column has one of the metric roles"));
    }
    Ok(FeatureMetric::new(cols).with_normalization(spec.normalization))
}

/// Decompose bias over the configured partitions. Writes `bias.json`,
/// `bias_decomposition.csv`, `bias_mass_shares.csv` and optionally `coupling.csv`.
pub fn run_bias(config: &AuditConfig) -> Result<BiasReport> {
    let prep = prepare(config)?;
    let pi = outcome_coupling(
        &prep.policy_a,
        prep.a.features(),
        &prep.policy_b,
        prep.b.features(),
        config.cost_order,
        &config.solver,
    )?;
    let predict = |policy: &Policy, d: &Dataset| policy.predict(d.features(), config.threshold);
    let (pred_a, pred_b) = match config.prediction_partition {
        PredictionSplit::None => (None, None),
        PredictionSplit::Own => (
            Some(predict(&prep.policy_a, &prep.a)?),
            Some(predict(&prep.policy_b, &prep.b)?),
        ),
        PredictionSplit::PolicyA => (
            Some(predict(&prep.policy_a, &prep.a)?),
            Some(predict(&prep.policy_a, &prep.b)?),
        ),
        PredictionSplit::PolicyB => (
            Some(predict(&prep.policy_b, &prep.a)?),
            Some(predict(&prep.policy_b, &prep.b)?),
        ),
    };
    let part_a = build_partition(&prep.a, &config.partitions_a, pred_a)?;
    let specs_b = config.partitions_b.as_ref().unwrap_or(&config.partitions_a);
    let part_b = build_partition(&prep.b, specs_b, pred_b)?;
    let metric = metric_for(&prep.a, &config.metric)?;
    let report = decompose(
        &pi,
        prep.a.features(),
        prep.b.features(),
        &part_a,
        &part_b,
        &metric,
        config.metric.convention,
    )?;

    let dir = &config.output_dir;
    write_file(dir, "bias.json", &json(&report, "bias report")?)?;
    let mut buf = Vec::new();
    report.write_decomposition_csv(&mut buf)?;
    write_file(dir, "bias_decomposition.csv", &buf)?;
    let mut buf = Vec::new();
    report.write_mass_shares_csv(&mut buf)?;
    write_file(dir, "bias_mass_shares.csv", &buf)?;
    if config.write_coupling {
        write_file(dir, "coupling.csv", coupling_csv(&pi, config.solver.support_threshold).as_bytes())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub mean_probability: f64,
    pub reclassified_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecourseReport {
    pub threshold: f64,
    pub split: RecourseSplit,
    /// Row indices (into the population) of the individuals moved.
    pub moved: Vec<usize>,
    /// Row indices of the counterparts they are coupled to.
    pub counterparts: Vec<usize>,
    pub alphas: Vec<AlphaSummary>,
    pub feature_changes: FeatureChangeSummary,
    pub results: Vec<RecourseResult>,
}

/// Couple the unfavourably treated part of population A to the favourably
/// treated part and sweep alpha. Writes `recourse.json`,
/// `recourse_probabilities.csv`, `feature_changes.csv` and
/// `recourse_features.csv` (decoded rows at the largest alpha).
pub fn run_recourse(config: &AuditConfig) -> Result<RecourseReport> {
    let prep = prepare(config)?;
    let data = &prep.a;
    let policy = &prep.policy_a;
    let favourable: Vec<bool> = match config.recourse_split {
        RecourseSplit::Label => data
            .labels()
            .ok_or_else(|| Error::input("audit", "recourse_split 'label' needs a label column"))?
            .to_vec(),
        RecourseSplit::Prediction => policy.predict(data.features(), config.threshold)?,
    };
    let moved: Vec<usize> = (0..data.n_rows()).filter(|&i| !favourable[i]).collect();
    let counterparts: Vec<usize> = (0..data.n_rows()).filter(|&i| favourable[i]).collect();
    if moved.is_empty() || counterparts.is_empty() {
        return Err(Error::input("audit", "recourse needs individuals on both sides of the split"));
    }
    let sub_a = data.subset(&moved)?;
    let sub_b = data.subset(&counterparts)?;
    let pi = outcome_coupling(
        policy,
        sub_a.features(),
        policy,
        sub_b.features(),
        config.cost_order,
        &config.solver,
    )?;
    let ids: Vec<usize> = (0..moved.len()).collect();
    let roles = data.roles();
    let mut results = alpha_sweep(
        policy,
        sub_a.features(),
        &ids,
        &pi,
        sub_b.features(),
        &config.alphas,
        &roles,
        config.threshold,
    )?;
    for res in &mut results {
        res.individual_ids = moved.clone();
    }
    let feature_changes = feature_change_summary(&results, &data.encoder)?;
    let alphas = results
        .iter()
        .map(|r| AlphaSummary {
            alpha: r.alpha,
            mean_probability: r.mean_probability(),
            reclassified_fraction: r.reclassified_fraction,
        })
        .collect();
    let report = RecourseReport {
        threshold: config.threshold,
        split: config.recourse_split,
        moved,
        counterparts,
        alphas,
        feature_changes,
        results,
    };

    let dir = &config.output_dir;
    write_file(dir, "recourse.json", &json(&report, "recourse report")?)?;
    let mut buf = Vec::new();
    write_probabilities_csv(&report.results, &mut buf)?;
    write_file(dir, "recourse_probabilities.csv", &buf)?;
    write_file(dir, "feature_changes.csv", feature_changes_csv(&report.feature_changes).as_bytes())?;
    if let Some(last) = report
        .results
        .iter()
        .max_by(|x, y| x.alpha.total_cmp(&y.alpha))
    {
        write_file(dir, "recourse_features.csv", decoded_csv(data, last)?.as_bytes())?;
    }
    Ok(report)
}

fn feature_changes_csv(summary: &FeatureChangeSummary) -> String {
    let mut out = String::from("alpha,feature,role,n_reclassified,mean_change\n");
    for r in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.alpha,
            r.feature,
            r.role.as_str(),
            r.n_reclassified,
            r.mean_change
        ));
    }
    out
}

fn decoded_csv(data: &Dataset, res: &RecourseResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::input("audit", format!("cannot write CSV: {e}"));
    let mut header = vec!["individual_id".to_string()];
    header.extend(data.encoder.features.iter().map(|f| f.name.clone()));
    w.write_record(&header).map_err(err)?;
    for (r, id) in res.individual_ids.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(decode_row(&data.encoder, res.new_features.row(r))?.into_iter().map(|(_, v)| v));
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::input("audit", format!("cannot write CSV: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
