//! Long-format CSV ingestion: one row per encounter, one column per outcome
//! (empty cell = missing), covariate columns as declared by the schema.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{LongitudinalDataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::io::config::DataSchema;

struct ParsedRow {
    line: u64,
    time: f64,
    outcomes: Vec<Option<f64>>,
    covariates: Vec<f64>,
    group: Option<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::data(format!("missing required column '{name}'")))
}

fn parse_f64(cell: &str, column: &str, line: u64) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        Error::data(format!(
            "line {line}: non-numeric value '{cell}' in column '{column}'"
        ))
    })
}

/// Load a dataset. Rows are sorted by (id, time); duplicate (id, time) pairs
/// are rejected; a row with every outcome cell empty is rejected with its
/// line number.
pub fn load_long_csv(path: &Path, schema: &DataSchema) -> Result<LongitudinalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();

    let id_idx = column_index(&headers, &schema.id_column)?;
    let time_idx = column_index(&headers, &schema.time_column)?;
    let outcome_idx: Vec<usize> = schema
        .outcome_columns
        .iter()
        .map(|n| column_index(&headers, n))
        .collect::<Result<_>>()?;
    let numeric_idx: Vec<usize> = schema
        .numeric_covariates
        .iter()
        .map(|n| column_index(&headers, n))
        .collect::<Result<_>>()?;
    let categorical_idx: Vec<usize> = schema
        .categorical
        .iter()
        .map(|(n, _)| column_index(&headers, n))
        .collect::<Result<_>>()?;
    let group_idx = match &schema.group_column {
        Some(name) => Some(column_index(&headers, name)?),
        None => None,
    };

    let mut by_subject: BTreeMap<String, Vec<ParsedRow>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or_default();
        let id = record.get(id_idx).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::data(format!("line {line}: empty subject id")));
        }
        let time = parse_f64(
            record.get(time_idx).unwrap_or_default(),
            &schema.time_column,
            line,
        )?;

        let mut outcomes = Vec::with_capacity(outcome_idx.len());
        for (j, &idx) in outcome_idx.iter().enumerate() {
            let cell = record.get(idx).unwrap_or_default();
            if cell.is_empty() {
                outcomes.push(None);
            } else {
                outcomes.push(Some(parse_f64(cell, &schema.outcome_columns[j], line)?));
            }
        }
        if outcomes.iter().all(Option::is_none) {
            return Err(Error::data(format!(
                "line {line}: every outcome cell is empty"
            )));
        }

        let mut covariates = Vec::with_capacity(
            numeric_idx.len() + categorical_idx.len(), // indicator columns extend this
        );
        for (j, &idx) in numeric_idx.iter().enumerate() {
            covariates.push(parse_f64(
                record.get(idx).unwrap_or_default(),
                &schema.numeric_covariates[j],
                line,
            )?);
        }
        for (&idx, (name, levels)) in categorical_idx.iter().zip(&schema.categorical) {
            let cell = record.get(idx).unwrap_or_default();
            if !levels.iter().any(|l| l == cell) {
                return Err(Error::data(format!(
                    "line {line}: value '{cell}' of '{name}' is not a declared level"
                )));
            }
            for level in levels.iter().skip(1) {
                covariates.push(if level == cell { 1.0 } else { 0.0 });
            }
        }

        let group = group_idx.map(|idx| record.get(idx).unwrap_or_default().to_string());

        by_subject.entry(id).or_default().push(ParsedRow {
            line,
            time,
            outcomes,
            covariates,
            group,
        });
    }

    let n_outcomes = schema.outcome_columns.len();
    let mut subjects = Vec::with_capacity(by_subject.len());
    for (id, mut rows) in by_subject {
        // Unsorted input is sorted silently; exact duplicates are errors.
        rows.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        for pair in rows.windows(2) {
            if pair[0].time == pair[1].time {
                return Err(Error::data(format!(
                    "duplicate encounter for subject '{id}' at time {} (lines {} and {})",
                    pair[0].time, pair[0].line, pair[1].line
                )));
            }
        }
        let group = rows[0].group.clone();
        for row in &rows {
            if row.group != group {
                return Err(Error::data(format!(
                    "subject '{id}' has conflicting group labels"
                )));
            }
        }
        let mut outcomes = vec![Vec::with_capacity(rows.len()); n_outcomes];
        for row in &rows {
            for (k, v) in row.outcomes.iter().enumerate() {
                outcomes[k].push(*v);
            }
        }
        subjects.push(SubjectRecord {
            id,
            times: rows.iter().map(|r| r.time).collect(),
            outcomes,
            covariates: rows.iter().map(|r| r.covariates.clone()).collect(),
            group,
        });
    }

    let mut data = LongitudinalDataset::new(
        subjects,
        schema.outcome_columns.clone(),
        schema.expanded_covariates(),
    )?;
    data.group_column = schema.group_column.clone();
    Ok(data)
}

/// Write a dataset back to CSV with covariates in expanded (numeric) form.
/// Floats use the shortest exact representation, so a write/read cycle is
/// idempotent.
pub fn write_long_csv(data: &LongitudinalDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "time".to_string()];
    header.extend(data.outcome_names.iter().cloned());
    header.extend(data.covariate_names.iter().cloned());
    if data.group_column.is_some() {
        header.push(data.group_column.clone().unwrap());
    }
    writer.write_record(&header)?;
    for subject in &data.subjects {
        for j in 0..subject.n_encounters() {
            let mut row = vec![subject.id.clone(), format!("{}", subject.times[j])];
            for k in 0..data.n_outcomes() {
                row.push(match subject.outcomes[k][j] {
                    Some(v) => format!("{v}"),
                    None => String::new(),
                });
            }
            for v in &subject.covariates[j] {
                row.push(format!("{v}"));
            }
            if data.group_column.is_some() {
                row.push(subject.group.clone().unwrap_or_default());
            }
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}
