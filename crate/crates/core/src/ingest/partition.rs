use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, RawColumn};
use crate::error::{Error, Result};

/// Half-open numeric interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
}

impl Bin {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    fn label(&self) -> String {
        format!("[{},{})", self.lo, self.hi)
    }
}

/// Named, pairwise disjoint index groups that together cover `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub names: Vec<String>,
    pub groups: Vec<Vec<usize>>,
}

impl Partition {
    /// Build and check a partition of `0..n`. Indices inside each group are sorted.
    pub fn new(names: Vec<String>, mut groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if names.len() != groups.len() {
            return Err(Error::input("ingest", "partition has a different number of names and groups"));
        }
        let mut owner = vec![usize::MAX; n];
        for (g, members) in groups.iter_mut().enumerate() {
            if members.is_empty() {
                return Err(Error::input("ingest", format!("partition group '{}' is empty", names[g])));
            }
            members.sort_unstable();
            for &i in members.iter() {
                if i >= n {
                    return Err(Error::input(
                        "ingest",
                        format!("partition group '{}' has index {i} outside 0..{n}", names[g]),
                    ));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::input(
                        "ingest",
                        format!(
                            "index {i} is in both '{}' and '{}'",
                            names[owner[i]], names[g]
                        ),
                    ));
                }
                owner[i] = g;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::input("ingest", format!("index {i} belongs to no partition group")));
        }
        Ok(Self { names, groups })
    }

    /// One group holding every index.
    pub fn single(name: impl Into<String>, n: usize) -> Result<Self> {
        Self::new(vec![name.into()], vec![(0..n).collect()], n)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_indices(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index of every element.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_indices()];
        for (g, members) in self.groups.iter().enumerate() {
            for &i in members {
                out[i] = g;
            }
        }
        out
    }

    /// Restrict to the elements listed in `rows`, renumbered by their position there.
    /// Groups that end up empty are dropped.
    pub fn restrict(&self, rows: &[usize]) -> Result<Partition> {
        let labels = self.labels();
        let mut groups = vec![Vec::new(); self.len()];
        for (new, &old) in rows.iter().enumerate() {
            let g = *labels
                .get(old)
                .ok_or_else(|| Error::input("ingest", format!("row {old} out of range")))?;
            groups[g].push(new);
        }
        let (names, groups): (Vec<_>, Vec<_>) = self
            .names
            .iter()
            .cloned()
            .zip(groups)
            .filter(|(_, g)| !g.is_empty())
            .unzip();
        Partition::new(names, groups, rows.len())
    }
}

/// Group the rows of `dataset` by the raw values of `column`.
///
/// Categorical columns give one group per observed category (`col=value`).
/// Numeric columns give one group per bin when `bins` is supplied, otherwise
/// one group per distinct value. Bins that catch no row are dropped.
pub fn partition_by(dataset: &Dataset, column: &str, bins: Option<&[Bin]>) -> Result<Partition> {
    let raw = dataset
        .raw
        .column(column)
        .ok_or_else(|| Error::input("ingest", format!("unknown partition column '{column}'")))?;
    let n = dataset.n_rows();
    match (raw, bins) {
        (RawColumn::Categorical(values), None) => {
            let mut by_value: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, v) in values.iter().enumerate() {
                by_value.entry(v).or_default().push(i);
            }
            let (names, groups) = by_value
                .into_iter()
                .map(|(v, g)| (format!("{column}={v}"), g))
                .unzip();
            Partition::new(names, groups, n)
        }
        (RawColumn::Categorical(_), Some(_)) => Err(Error::input(
            "ingest",
            format!("column '{column}' is categorical and cannot be binned"),
        )),
        (RawColumn::Numeric(values), None) => {
            let mut distinct: Vec<f64> = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let mut groups = vec![Vec::new(); distinct.len()];
            for (i, v) in values.iter().enumerate() {
                let g = distinct.binary_search_by(|d| d.total_cmp(v)).expect("value is present");
                groups[g].push(i);
            }
            let names = distinct.iter().map(|v| format!("{column}={v}")).collect();
            Partition::new(names, groups, n)
        }
        (RawColumn::Numeric(values), Some(bins)) => {
            check_bins(column, bins)?;
            let mut groups = vec![Vec::new(); bins.len()];
            for (i, &v) in values.iter().enumerate() {
                let b = bins.iter().position(|b| b.contains(v)).ok_or_else(|| {
                    Error::input(
                        "ingest",
                        format!("value {v} in row {i} of '{column}' falls outside every bin"),
                    )
                })?;
                groups[b].push(i);
            }
            let (names, groups) = bins
                .iter()
                .zip(groups)
                .filter(|(_, g)| !g.is_empty())
                .map(|(b, g)| (format!("{column} in {}", b.label()), g))
                .unzip();
            Partition::new(names, groups, n)
        }
    }
}

fn check_bins(column: &str, bins: &[Bin]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::input("ingest", format!("no bins given for '{column}'")));
    }
    for b in bins {
        if b.lo.partial_cmp(&b.hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::input("ingest", format!("bin {} for '{column}' is empty", b.label())));
        }
    }
    let mut sorted = bins.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in sorted.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(Error::input(
                "ingest",
                format!("bins {} and {} for '{column}' overlap", w[0].label(), w[1].label()),
            ));
        }
    }
    Ok(())
}

/// Intersect two partitions of the same rows. Names join with " & ", and empty
/// intersections are dropped.
pub fn cross(p: &Partition, q: &Partition) -> Result<Partition> {
    let n = p.n_indices();
    if q.n_indices() != n {
        return Err(Error::input("ingest", "cannot cross partitions of different sizes"));
    }
    let qlab = q.labels();
    let mut names = Vec::new();
    let mut groups = Vec::new();
    for (pn, pg) in p.names.iter().zip(&p.groups) {
        let mut split = vec![Vec::new(); q.len()];
        for &i in pg {
            split[qlab[i]].push(i);
        }
        for (qn, g) in q.names.iter().zip(split) {
            if !g.is_empty() {
                names.push(format!("{pn} & {qn}"));
                groups.push(g);
            }
        }
    }
    Partition::new(names, groups, n)
}
