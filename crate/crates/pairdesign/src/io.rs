//! CSV input.
//!
//! The first column is the unit id. Columns named `outcome`, `treatment`,
//! `attrition` and `label` are read into their own fields; every other
//! column, `baseline` included, is a covariate.

use std::path::Path;

use pairdesign_core::{Matrix, Sample};
use thiserror::Error;

pub const BASELINE: &str = "baseline";
pub const OUTCOME: &str = "outcome";
pub const TREATMENT: &str = "treatment";
pub const ATTRITION: &str = "attrition";
pub const LABEL: &str = "label";

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { path: String, row: usize, column: String, value: String },
    #[error("{path}: {message}")]
    Shape { path: String, message: String },
    #[error("{path}: {source}")]
    Sample { path: String, source: pairdesign_core::Error },
}

/// A sample plus the optional subpopulation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSample {
    pub sample: Sample,
    pub labels: Option<Vec<u32>>,
}

pub fn load_sample(path: &Path) -> Result<LoadedSample, InputError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| InputError::Io { path: path.display().to_string(), source })?;
    parse_sample(&text, &path.display().to_string())
}

pub fn parse_sample(text: &str, origin: &str) -> Result<LoadedSample, InputError> {
    let path = origin.to_string();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| InputError::Csv { path: path.clone(), source })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(InputError::Shape { path, message: "missing header row".into() });
    }
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(InputError::Shape { path, message: format!("duplicate column `{h}`") });
        }
    }
    let special = [OUTCOME, TREATMENT, ATTRITION, LABEL];
    let covariate_cols: Vec<usize> = (1..headers.len()).filter(|&j| !special.contains(&headers[j].as_str())).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (outcome, treatment, attrition, label) = (find(OUTCOME), find(TREATMENT), find(ATTRITION), find(LABEL));

    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut a = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|source| InputError::Csv { path: path.clone(), source })?;
        let row = r + 2;
        let field = |j: usize| record.get(j).unwrap_or("");
        let fail = |j: usize| InputError::Parse {
            path: path.clone(),
            row,
            column: headers[j].clone(),
            value: field(j).to_string(),
        };
        ids.push(field(0).to_string());
        for &j in &covariate_cols {
            x.push(field(j).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| fail(j))?);
        }
        if let Some(j) = outcome {
            let v = field(j);
            y.push(if v.is_empty() || v.eq_ignore_ascii_case("na") {
                f64::NAN
            } else {
                v.parse::<f64>().map_err(|_| fail(j))?
            });
        }
        let binary = |j: usize| match field(j) {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            _ => Err(fail(j)),
        };
        if let Some(j) = treatment {
            d.push(binary(j)?);
        }
        if let Some(j) = attrition {
            a.push(binary(j)?);
        }
        if let Some(j) = label {
            labels.push(field(j).parse::<u32>().map_err(|_| fail(j))?);
        }
    }
    if ids.is_empty() {
        return Err(InputError::Shape { path, message: "no data rows".into() });
    }
    let names: Vec<String> = covariate_cols.iter().map(|&j| headers[j].clone()).collect();
    let n = ids.len();
    let wrap = |source| InputError::Sample { path: path.clone(), source };
    let covariates = Matrix::from_vec(n, names.len(), x).map_err(wrap)?;
    let baseline = names.iter().position(|h| h == BASELINE);
    let mut sample = Sample::with_names(ids, names, covariates, baseline).map_err(wrap)?;
    if outcome.is_some() {
        sample = sample.with_outcomes(y).map_err(wrap)?;
    }
    if treatment.is_some() {
        sample = sample.with_treatment(d).map_err(wrap)?;
    }
    if attrition.is_some() {
        sample = sample.with_attrition(a).map_err(wrap)?;
    }
    Ok(LoadedSample { sample, labels: label.map(|_| labels) })
}
