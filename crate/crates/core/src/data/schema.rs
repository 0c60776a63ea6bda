use serde::{Deserialize, Serialize};

use super::DataError;

/// Kind of a raw covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// Must contain only 0 and 1.
    Binary,
    /// String-valued; one-hot encoded at load time with the first listed
    /// level as the reference.
    Categorical { levels: Vec<String> },
}

/// Declaration of one raw covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn binary(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Binary,
        }
    }

    /// Names of the encoded columns this spec expands to.
    pub fn encoded_names(&self) -> Vec<String> {
        match &self.kind {
            ColumnKind::Continuous | ColumnKind::Binary => vec![self.name.clone()],
            ColumnKind::Categorical { levels } => levels
                .iter()
                .skip(1)
                .map(|l| format!("{}={}", self.name, l))
                .collect(),
        }
    }
}

/// Declares the covariate layout of a dataset file: which columns are shared
/// per pair and which are measured per twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub shared: Vec<ColumnSpec>,
    pub individual: Vec<ColumnSpec>,
}

impl SchemaSpec {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn encoded_shared_names(&self) -> Vec<String> {
        self.shared.iter().flat_map(|c| c.encoded_names()).collect()
    }

    pub fn encoded_individual_names(&self) -> Vec<String> {
        self.individual
            .iter()
            .flat_map(|c| c.encoded_names())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_encoding_drops_reference_level() {
        let spec = ColumnSpec {
            name: "occupation".into(),
            kind: ColumnKind::Categorical {
                levels: vec!["low".into(), "mid".into(), "high".into()],
            },
        };
        assert_eq!(spec.encoded_names(), vec!["occupation=mid", "occupation=high"]);
    }

    #[test]
    fn schema_round_trips_through_json() {
        let schema = SchemaSpec {
            shared: vec![ColumnSpec::binary("zygosity"), ColumnSpec::binary("sex")],
            individual: vec![ColumnSpec::continuous("age")],
        };
        let text = serde_json::to_string(&schema).unwrap();
        let back: SchemaSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, schema);
    }
}
