//! Twin-pair data structures and ingestion.
//!
//! A dataset holds one record per pair: shared covariates `c` (measured once
//! per pair), individual covariates `x1`/`x2` (one copy per twin), binary
//! exposures `a1`/`a2`, and outcomes `y1`/`y2`. The twin-level view consumed
//! by the regression machinery is produced by [`stack`], which emits two
//! mirror-image rows per pair with own/co-twin roles made explicit.

mod load;
mod schema;
pub mod synthetic;

pub use load::load_dataset;
pub use schema::{ColumnKind, ColumnSpec, SchemaSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: exposure column `{column}` must be 0 or 1, got `{value}`")]
    NonBinaryExposure {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: column `{column}` is not a finite number")]
    NonFiniteValue { row: usize, column: String },
    #[error("row {row}: duplicate pair id `{id}`")]
    DuplicatePairId { row: usize, id: String },
    #[error("row {row}: column `{column}`: {message}")]
    InvalidValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error("subset `{0}` selects no pairs")]
    EmptySubset(String),
    #[error("stacked rows do not form a consistent pairwise mirror: {0}")]
    InconsistentStack(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One twin pair in wide form.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TwinPairRecord {
    pub pair_id: String,
    /// Shared covariates, aligned with the dataset's `c_names`.
    pub c: Vec<f64>,
    /// Twin 1's individual covariates, aligned with `x_names`.
    pub x1: Vec<f64>,
    /// Twin 2's individual covariates, aligned with `x_names`.
    pub x2: Vec<f64>,
    pub a1: u8,
    pub a2: u8,
    pub y1: f64,
    pub y2: f64,
}

impl TwinPairRecord {
    /// The same pair with the twin labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pair_id: self.pair_id.clone(),
            c: self.c.clone(),
            x1: self.x2.clone(),
            x2: self.x1.clone(),
            a1: self.a2,
            a2: self.a1,
            y1: self.y2,
            y2: self.y1,
        }
    }
}

/// A collection of twin pairs with named covariate columns.
///
/// Deserialization runs the same validation as [`PairedDataset::new`], so a
/// dataset read back from JSON carries the same guarantees as one built in
/// code.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawPairedDataset", into = "RawPairedDataset")]
pub struct PairedDataset {
    c_names: Vec<String>,
    x_names: Vec<String>,
    records: Vec<TwinPairRecord>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RawPairedDataset {
    c_names: Vec<String>,
    x_names: Vec<String>,
    records: Vec<TwinPairRecord>,
}

impl TryFrom<RawPairedDataset> for PairedDataset {
    type Error = DataError;

    fn try_from(raw: RawPairedDataset) -> Result<Self, DataError> {
        PairedDataset::new(raw.c_names, raw.x_names, raw.records)
    }
}

impl From<PairedDataset> for RawPairedDataset {
    fn from(ds: PairedDataset) -> Self {
        RawPairedDataset {
            c_names: ds.c_names,
            x_names: ds.x_names,
            records: ds.records,
        }
    }
}

/// Zygosity stratum selector. The shared covariate column `zygosity` codes
/// monozygotic pairs as 1 and dizygotic pairs as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zygosity {
    Mz,
    Dz,
}

impl Zygosity {
    pub fn label(self) -> &'static str {
        match self {
            Zygosity::Mz => "MZ",
            Zygosity::Dz => "DZ",
        }
    }

    fn coded(self) -> f64 {
        match self {
            Zygosity::Mz => 1.0,
            Zygosity::Dz => 0.0,
        }
    }
}

impl PairedDataset {
    /// Builds a dataset from records, validating shape, finiteness, binary
    /// exposures, and pair-id uniqueness.
    pub fn new(
        c_names: Vec<String>,
        x_names: Vec<String>,
        records: Vec<TwinPairRecord>,
    ) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            if !seen.insert(r.pair_id.clone()) {
                return Err(DataError::DuplicatePairId {
                    row,
                    id: r.pair_id.clone(),
                });
            }
            for (vals, names, what) in [
                (&r.c, &c_names, "c"),
                (&r.x1, &x_names, "x1"),
                (&r.x2, &x_names, "x2"),
            ] {
                if vals.len() != names.len() {
                    return Err(DataError::InvalidValue {
                        row,
                        column: what.to_string(),
                        message: format!("expected {} values, got {}", names.len(), vals.len()),
                    });
                }
                for (v, name) in vals.iter().zip(names) {
                    if !v.is_finite() {
                        return Err(DataError::NonFiniteValue {
                            row,
                            column: name.clone(),
                        });
                    }
                }
            }
            for (a, col) in [(r.a1, "a1"), (r.a2, "a2")] {
                if a > 1 {
                    return Err(DataError::NonBinaryExposure {
                        row,
                        column: col.to_string(),
                        value: a.to_string(),
                    });
                }
            }
            for (y, col) in [(r.y1, "y1"), (r.y2, "y2")] {
                if !y.is_finite() {
                    return Err(DataError::NonFiniteValue {
                        row,
                        column: col.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            c_names,
            x_names,
            records,
        })
    }

    pub fn c_names(&self) -> &[String] {
        &self.c_names
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn records(&self) -> &[TwinPairRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Pair-level resample by index, used by the bootstrap. The result keeps
    /// the original pair ids, so replicate datasets may repeat ids; the
    /// uniqueness invariant applies to ingested data, not to resamples.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self {
            c_names: self.c_names.clone(),
            x_names: self.x_names.clone(),
            records,
        }
    }

    /// The dataset with every pair's twin labels exchanged. Estimators are
    /// invariant to this relabeling up to floating-point roundoff.
    pub fn swapped_labels(&self) -> Self {
        Self {
            c_names: self.c_names.clone(),
            x_names: self.x_names.clone(),
            records: self.records.iter().map(TwinPairRecord::swapped).collect(),
        }
    }

    fn c_index(&self, name: &str) -> Result<usize, DataError> {
        self.c_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }
}

/// One twin's view of its pair: own and co-twin roles resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedRow {
    /// Index of the source pair in the dataset.
    pub pair_index: usize,
    pub pair_id: String,
    /// Which twin this row belongs to (1 or 2).
    pub own: u8,
    pub c: Vec<f64>,
    pub x_own: Vec<f64>,
    pub x_cotwin: Vec<f64>,
    pub a_own: u8,
    pub a_cotwin: u8,
    pub y_own: f64,
}

/// Expands a dataset into 2n twin-level rows: for each pair, first the row
/// where twin 1 is "own", then its mirror.
pub fn stack(ds: &PairedDataset) -> Vec<StackedRow> {
    let mut rows = Vec::with_capacity(2 * ds.len());
    for (i, r) in ds.records.iter().enumerate() {
        rows.push(StackedRow {
            pair_index: i,
            pair_id: r.pair_id.clone(),
            own: 1,
            c: r.c.clone(),
            x_own: r.x1.clone(),
            x_cotwin: r.x2.clone(),
            a_own: r.a1,
            a_cotwin: r.a2,
            y_own: r.y1,
        });
        rows.push(StackedRow {
            pair_index: i,
            pair_id: r.pair_id.clone(),
            own: 2,
            c: r.c.clone(),
            x_own: r.x2.clone(),
            x_cotwin: r.x1.clone(),
            a_own: r.a2,
            a_cotwin: r.a1,
            y_own: r.y2,
        });
    }
    rows
}

/// Rebuilds a dataset from stacked rows. Rows must come in the order
/// produced by [`stack`]: the two mirror rows of each pair adjacent, twin 1
/// first.
pub fn unstack(
    c_names: &[String],
    x_names: &[String],
    rows: &[StackedRow],
) -> Result<PairedDataset, DataError> {
    if rows.len() % 2 != 0 {
        return Err(DataError::InconsistentStack(format!(
            "odd number of rows ({})",
            rows.len()
        )));
    }
    let mut records = Vec::with_capacity(rows.len() / 2);
    for (k, pair_rows) in rows.chunks_exact(2).enumerate() {
        let (r1, r2) = (&pair_rows[0], &pair_rows[1]);
        let consistent = r1.pair_id == r2.pair_id
            && r1.own == 1
            && r2.own == 2
            && r1.c == r2.c
            && r1.x_own == r2.x_cotwin
            && r1.x_cotwin == r2.x_own
            && r1.a_own == r2.a_cotwin
            && r1.a_cotwin == r2.a_own;
        if !consistent {
            return Err(DataError::InconsistentStack(format!(
                "pair block {k} is not a mirror image"
            )));
        }
        records.push(TwinPairRecord {
            pair_id: r1.pair_id.clone(),
            c: r1.c.clone(),
            x1: r1.x_own.clone(),
            x2: r1.x_cotwin.clone(),
            a1: r1.a_own,
            a2: r1.a_cotwin,
            y1: r1.y_own,
            y2: r2.y_own,
        });
    }
    PairedDataset::new(c_names.to_vec(), x_names.to_vec(), records)
}

/// Restricts a dataset to one zygosity stratum.
pub fn subset_by_zygosity(ds: &PairedDataset, z: Zygosity) -> Result<PairedDataset, DataError> {
    let idx = ds.c_index("zygosity")?;
    let target = z.coded();
    let records: Vec<TwinPairRecord> = ds
        .records
        .iter()
        .filter(|r| r.c[idx] == target)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(DataError::EmptySubset(z.label().to_string()));
    }
    Ok(PairedDataset {
        c_names: ds.c_names.clone(),
        x_names: ds.x_names.clone(),
        records,
    })
}
