use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether an individual can change a feature through their own actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Actionable,
    NonActionable,
    Immutable,
}

impl FeatureRole {
    pub const ALL: [FeatureRole; 3] = [
        FeatureRole::Actionable,
        FeatureRole::NonActionable,
        FeatureRole::Immutable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureRole::Actionable => "actionable",
            FeatureRole::NonActionable => "non_actionable",
            FeatureRole::Immutable => "immutable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Required for every feature column; ignored on the label column.
    #[serde(default)]
    pub role: Option<FeatureRole>,
    #[serde(default)]
    pub is_group: bool,
    #[serde(default)]
    pub is_label: bool,
    /// Encoded as usual but kept out of policy training.
    #[serde(default)]
    pub exclude_from_policy: bool,
}

/// Column typing, roles and label definition for one CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub label_positive_value: Option<String>,
}

impl SchemaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: SchemaConfig =
            serde_json::from_str(text).map_err(|e| Error::json("schema config", e))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::input("ingest", format!("column '{}' listed twice", c.name)));
            }
            if !c.is_label && c.role.is_none() {
                return Err(Error::input(
                    "ingest",
                    format!("feature column '{}' has no role", c.name),
                ));
            }
        }
        if self.columns.iter().filter(|c| c.is_label).count() > 1 {
            return Err(Error::input("ingest", "more than one label column"));
        }
        if self.columns.iter().all(|c| c.is_label) {
            return Err(Error::input("ingest", "schema has no feature columns"));
        }
        Ok(())
    }

    pub fn label(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.is_label)
    }

    pub fn features(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| !c.is_label)
    }

    pub fn positive_value(&self) -> &str {
        self.label_positive_value.as_deref().unwrap_or("1")
    }
}

/// Role table for the German credit layout: nine actionable, four
/// non-actionable and six immutable raw features.
pub fn german_credit_schema() -> SchemaConfig {
    SchemaConfig::from_json(include_str!("../../data/german_credit_schema.json"))
        .expect("bundled schema parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_role_is_rejected() {
        let text = r#"{"columns":[{"name":"x","kind":"numeric"}]}"#;
        let err = SchemaConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("'x' has no role"));
    }

    #[test]
    fn label_needs_no_role() {
        let text = r#"{"columns":[
            {"name":"x","kind":"numeric","role":"actionable"},
            {"name":"y","kind":"categorical","is_label":true}
        ],"label_positive_value":"good"}"#;
        let s = SchemaConfig::from_json(text).unwrap();
        assert_eq!(s.label().unwrap().name, "y");
        assert_eq!(s.positive_value(), "good");
    }

    #[test]
    fn bundled_german_schema_has_every_role() {
        let s = german_credit_schema();
        let count = |r| s.features().filter(|c| c.role == Some(r)).count();
        assert_eq!(count(FeatureRole::Actionable), 9);
        assert_eq!(count(FeatureRole::NonActionable), 4);
        assert_eq!(count(FeatureRole::Immutable), 6);
    }
}
