use std::collections::HashMap;
use std::path::Path;

use super::schema::{ColumnKind, ColumnSpec, SchemaSpec};
use super::{DataError, PairedDataset, TwinPairRecord};

/// Reads a wide-format CSV dataset.
///
/// Expected columns: `pair_id`, each shared covariate under its own name,
/// each individual covariate twice as `x1_<name>` and `x2_<name>`, then
/// `a1`, `a2`, `y1`, `y2`. Column order is free; extra columns are ignored.
/// Categorical covariates are one-hot encoded here, so the returned dataset
/// is purely numeric. The shared covariates must include `zygosity` and
/// `sex`, which downstream defaults rely on.
pub fn load_dataset(path: &Path, schema: &SchemaSpec) -> Result<PairedDataset, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let index: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let col = |name: &str| -> Result<usize, DataError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    for required in ["zygosity", "sex"] {
        if !schema.shared.iter().any(|c| c.name == required) {
            return Err(DataError::MissingColumn(required.to_string()));
        }
    }

    let id_col = col("pair_id")?;
    let shared_cols: Vec<usize> = schema
        .shared
        .iter()
        .map(|c| col(&c.name))
        .collect::<Result<_, _>>()?;
    let x1_cols: Vec<usize> = schema
        .individual
        .iter()
        .map(|c| col(&format!("x1_{}", c.name)))
        .collect::<Result<_, _>>()?;
    let x2_cols: Vec<usize> = schema
        .individual
        .iter()
        .map(|c| col(&format!("x2_{}", c.name)))
        .collect::<Result<_, _>>()?;
    let a_cols = [col("a1")?, col("a2")?];
    let y_cols = [col("y1")?, col("y2")?];

    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let record = result?;
        let field = |idx: usize| record.get(idx).unwrap_or("").trim();

        let mut c = Vec::new();
        for (spec, &idx) in schema.shared.iter().zip(&shared_cols) {
            encode_into(&mut c, spec, field(idx), row)?;
        }
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        for ((spec, &i1), &i2) in schema.individual.iter().zip(&x1_cols).zip(&x2_cols) {
            encode_into(&mut x1, spec, field(i1), row)?;
            encode_into(&mut x2, spec, field(i2), row)?;
        }

        let exposure = |idx: usize, name: &str| -> Result<u8, DataError> {
            match field(idx) {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(DataError::NonBinaryExposure {
                    row,
                    column: name.to_string(),
                    value: other.to_string(),
                }),
            }
        };
        let outcome = |idx: usize, name: &str| -> Result<f64, DataError> {
            let v: f64 = field(idx).parse().map_err(|_| DataError::InvalidValue {
                row,
                column: name.to_string(),
                message: format!("cannot parse `{}` as a number", field(idx)),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    row,
                    column: name.to_string(),
                });
            }
            Ok(v)
        };

        records.push(TwinPairRecord {
            pair_id: field(id_col).to_string(),
            c,
            x1,
            x2,
            a1: exposure(a_cols[0], "a1")?,
            a2: exposure(a_cols[1], "a2")?,
            y1: outcome(y_cols[0], "y1")?,
            y2: outcome(y_cols[1], "y2")?,
        });
    }

    PairedDataset::new(
        schema.encoded_shared_names(),
        schema.encoded_individual_names(),
        records,
    )
}

fn encode_into(
    out: &mut Vec<f64>,
    spec: &ColumnSpec,
    raw: &str,
    row: usize,
) -> Result<(), DataError> {
    match &spec.kind {
        ColumnKind::Continuous => {
            let v: f64 = raw.parse().map_err(|_| DataError::InvalidValue {
                row,
                column: spec.name.clone(),
                message: format!("cannot parse `{raw}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    row,
                    column: spec.name.clone(),
                });
            }
            out.push(v);
        }
        ColumnKind::Binary => match raw {
            "0" => out.push(0.0),
            "1" => out.push(1.0),
            other => {
                return Err(DataError::InvalidValue {
                    row,
                    column: spec.name.clone(),
                    message: format!("binary column must be 0 or 1, got `{other}`"),
                })
            }
        },
        ColumnKind::Categorical { levels } => {
            if !levels.iter().any(|l| l == raw) {
                return Err(DataError::InvalidValue {
                    row,
                    column: spec.name.clone(),
                    message: format!("unknown level `{raw}`"),
                });
            }
            for level in levels.iter().skip(1) {
                out.push(if level == raw { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(())
}
