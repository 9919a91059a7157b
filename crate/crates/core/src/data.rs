//! Trial dataset ingestion and the subgroup schema.
//!
//! The schema declares the categorical subgrouping variables and their level
//! order; it is the single source of truth for subgroup indexing, so column
//! layouts are reproducible regardless of how the data file is shuffled.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty input: no header row")]
    EmptyFile,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("non-numeric time `{value}`, row {row}")]
    NonNumericTime { row: usize, value: String },
    #[error("nonpositive time, row {0}")]
    NonPositiveTime(usize),
    #[error("non-finite time, row {0}")]
    NonFiniteTime(usize),
    #[error("column `{column}` must be 0 or 1, row {row} (got `{value}`)")]
    NotBinary {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown level `{value}` for variable `{column}`, row {row}")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing value in column `{column}`, row {row}")]
    MissingValue { row: usize, column: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("schema invalid: {0}")]
    BadSchema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One categorical subgrouping variable with its declared level order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub levels: Vec<String>,
}

/// The set of subgrouping variables. Subgroup `k` enumerates all levels of
/// all variables in declaration order, so `K = sum_j l_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSchema {
    pub variables: Vec<Variable>,
}

impl SubgroupSchema {
    pub fn new(variables: Vec<Variable>) -> Result<Self, DataError> {
        let schema = SubgroupSchema { variables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: SubgroupSchema = serde_json::from_str(text)
            .map_err(|e| DataError::BadSchema(format!("schema JSON: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), DataError> {
        let mut names = HashMap::new();
        for v in &self.variables {
            if v.levels.len() < 2 {
                return Err(DataError::BadSchema(format!(
                    "variable `{}` has {} levels; need at least 2",
                    v.name,
                    v.levels.len()
                )));
            }
            if names.insert(v.name.clone(), ()).is_some() {
                return Err(DataError::BadSchema(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
            let mut seen = HashMap::new();
            for l in &v.levels {
                if seen.insert(l.clone(), ()).is_some() {
                    return Err(DataError::BadSchema(format!(
                        "duplicate level `{}` in variable `{}`",
                        l, v.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of subgrouping variables `p`.
    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Total number of subgroups `K` (one per level of each variable).
    pub fn n_subgroups(&self) -> usize {
        self.variables.iter().map(|v| v.levels.len()).sum()
    }

    /// Maps subgroup index `k` to `(variable index, level index)`.
    pub fn subgroup_of(&self, k: usize) -> (usize, usize) {
        let mut rest = k;
        for (j, v) in self.variables.iter().enumerate() {
            if rest < v.levels.len() {
                return (j, rest);
            }
            rest -= v.levels.len();
        }
        panic!("subgroup index {k} out of range");
    }

    /// Labels like `region=a`, in subgroup order.
    pub fn subgroup_labels(&self) -> Vec<String> {
        self.variables
            .iter()
            .flat_map(|v| v.levels.iter().map(move |l| format!("{}={}", v.name, l)))
            .collect()
    }
}

/// One subject: observation time in years, event flag, arm, covariate levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub time: f64,
    pub event: u8,
    pub treatment: u8,
    pub covariates: Vec<usize>,
}

/// Validated time-to-event dataset. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub subjects: Vec<Subject>,
}

impl TrialDataset {
    pub fn new(subjects: Vec<Subject>, schema: &SubgroupSchema) -> Result<Self, DataError> {
        for (i, s) in subjects.iter().enumerate() {
            let row = i + 1;
            if !s.time.is_finite() {
                return Err(DataError::NonFiniteTime(row));
            }
            if s.time <= 0.0 {
                return Err(DataError::NonPositiveTime(row));
            }
            if s.event > 1 {
                return Err(DataError::NotBinary {
                    row,
                    column: "event".into(),
                    value: s.event.to_string(),
                });
            }
            if s.treatment > 1 {
                return Err(DataError::NotBinary {
                    row,
                    column: "treatment".into(),
                    value: s.treatment.to_string(),
                });
            }
            if s.covariates.len() != schema.n_variables() {
                return Err(DataError::BadSchema(format!(
                    "row {row} has {} covariates, schema has {}",
                    s.covariates.len(),
                    schema.n_variables()
                )));
            }
            for (j, &c) in s.covariates.iter().enumerate() {
                if c >= schema.variables[j].levels.len() {
                    return Err(DataError::UnknownLevel {
                        row,
                        column: schema.variables[j].name.clone(),
                        value: c.to_string(),
                    });
                }
            }
        }
        Ok(TrialDataset { subjects })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Subjects belonging to subgroup `k`, i.e. whose level of variable `j`
    /// matches the level the subgroup indexes.
    pub fn subgroup_members(&self, schema: &SubgroupSchema, k: usize) -> Vec<usize> {
        let (j, l) = schema.subgroup_of(k);
        (0..self.len())
            .filter(|&i| self.subjects[i].covariates[j] == l)
            .collect()
    }

    /// Largest uncensored event time; `None` when no events were observed.
    pub fn max_event_time(&self) -> Option<f64> {
        self.subjects
            .iter()
            .filter(|s| s.event == 1)
            .map(|s| s.time)
            .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }
}

fn parse_binary_field(
    raw: &str,
    row: usize,
    column: &str,
) -> Result<u8, DataError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(DataError::NotBinary {
            row,
            column: column.to_string(),
            value: other.to_string(),
        }),
    }
}

/// Column layout of a dataset CSV resolved against a schema: fixed outcome
/// columns plus one column per subgrouping variable, located by name.
pub(crate) struct HeaderMap {
    pub fixed: Vec<usize>,
    pub covariate: Vec<usize>,
    pub width: usize,
}

pub(crate) fn resolve_header(
    header: &csv::StringRecord,
    fixed_names: &[&str],
    schema: &SubgroupSchema,
) -> Result<HeaderMap, DataError> {
    let names: Vec<&str> = header.iter().map(|s| s.trim()).collect();
    let find = |name: &str| -> Result<usize, DataError> {
        names
            .iter()
            .position(|&h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let fixed = fixed_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>, _>>()?;
    let covariate = schema
        .variables
        .iter()
        .map(|v| find(&v.name))
        .collect::<Result<Vec<_>, _>>()?;
    let mut used = vec![false; names.len()];
    for &c in fixed.iter().chain(covariate.iter()) {
        used[c] = true;
    }
    if let Some(pos) = used.iter().position(|u| !u) {
        return Err(DataError::UnexpectedColumn(names[pos].to_string()));
    }
    Ok(HeaderMap {
        fixed,
        covariate,
        width: names.len(),
    })
}

pub(crate) fn require_field<'a>(
    record: &'a csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<&'a str, DataError> {
    let raw = record.get(idx).unwrap_or("");
    if raw.trim().is_empty() {
        return Err(DataError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    Ok(raw.trim())
}

pub(crate) fn parse_covariates(
    record: &csv::StringRecord,
    map: &HeaderMap,
    schema: &SubgroupSchema,
    row: usize,
) -> Result<Vec<usize>, DataError> {
    let mut covariates = Vec::with_capacity(schema.n_variables());
    for (j, v) in schema.variables.iter().enumerate() {
        let raw = require_field(record, map.covariate[j], row, &v.name)?;
        let level = v.levels.iter().position(|l| l == raw).ok_or_else(|| {
            DataError::UnknownLevel {
                row,
                column: v.name.clone(),
                value: raw.to_string(),
            }
        })?;
        covariates.push(level);
    }
    Ok(covariates)
}

/// Parses a dataset CSV (`time,event,treatment` plus one column per schema
/// variable, header required) and validates it against the schema.
pub fn parse_dataset(csv_text: &str, schema: &SubgroupSchema) -> Result<TrialDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let map = resolve_header(&header, &["time", "event", "treatment"], schema)?;

    let mut subjects = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != map.width {
            return Err(DataError::RaggedRow {
                row,
                got: record.len(),
                expected: map.width,
            });
        }
        let time_raw = require_field(&record, map.fixed[0], row, "time")?;
        let time: f64 = time_raw.parse().map_err(|_| DataError::NonNumericTime {
            row,
            value: time_raw.to_string(),
        })?;
        if !time.is_finite() {
            return Err(DataError::NonFiniteTime(row));
        }
        if time <= 0.0 {
            return Err(DataError::NonPositiveTime(row));
        }
        let event = parse_binary_field(
            require_field(&record, map.fixed[1], row, "event")?,
            row,
            "event",
        )?;
        let treatment = parse_binary_field(
            require_field(&record, map.fixed[2], row, "treatment")?,
            row,
            "treatment",
        )?;
        let covariates = parse_covariates(&record, &map, schema, row)?;
        subjects.push(Subject {
            time,
            event,
            treatment,
            covariates,
        });
    }
    TrialDataset::new(subjects, schema)
}

/// Writes a dataset back to CSV in schema column order. `parse_dataset` of
/// the output reproduces the dataset exactly.
pub fn serialize_dataset(dataset: &TrialDataset, schema: &SubgroupSchema) -> String {
    let mut out = String::from("time,event,treatment");
    for v in &schema.variables {
        out.push(',');
        out.push_str(&v.name);
    }
    out.push('\n');
    for s in &dataset.subjects {
        out.push_str(&format!("{},{},{}", s.time, s.event, s.treatment));
        for (j, &c) in s.covariates.iter().enumerate() {
            out.push(',');
            out.push_str(&schema.variables[j].levels[c]);
        }
        out.push('\n');
    }
    out
}

/// Convenience constructor used across tests and the simulation module.
pub fn schema_from_counts(names_levels: &[(&str, &[&str])]) -> SubgroupSchema {
    SubgroupSchema::new(
        names_levels
            .iter()
            .map(|(n, ls)| Variable {
                name: n.to_string(),
                levels: ls.iter().map(|l| l.to_string()).collect(),
            })
            .collect(),
    )
    .expect("valid schema literal")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_binary() -> SubgroupSchema {
        schema_from_counts(&[("x1", &["a", "b"])])
    }

    #[test]
    fn parses_minimal_file() {
        let csv = "time,event,treatment,x1\n1.0,1,0,a\n2.0,1,1,b\n";
        let d = parse_dataset(csv, &one_binary()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.subjects[0].time, 1.0);
        assert_eq!(d.subjects[1].covariates, vec![1]);
    }

    #[test]
    fn rejects_nonpositive_time_with_row() {
        let csv = "time,event,treatment,x1\n1.0,1,0,a\n-1,1,1,b\n";
        let err = parse_dataset(csv, &one_binary()).unwrap_err();
        assert!(matches!(err, DataError::NonPositiveTime(2)));
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn distinct_diagnostics() {
        let schema = one_binary();
        let missing = parse_dataset("time,event,x1\n", &schema).unwrap_err();
        assert!(matches!(missing, DataError::MissingColumn(ref c) if c == "treatment"));
        let nonnum = parse_dataset("time,event,treatment,x1\noops,1,0,a\n", &schema).unwrap_err();
        assert!(matches!(nonnum, DataError::NonNumericTime { row: 1, .. }));
        let badevt = parse_dataset("time,event,treatment,x1\n1,2,0,a\n", &schema).unwrap_err();
        assert!(matches!(badevt, DataError::NotBinary { row: 1, ref column, .. } if column == "event"));
        let badlvl = parse_dataset("time,event,treatment,x1\n1,1,0,z\n", &schema).unwrap_err();
        assert!(matches!(badlvl, DataError::UnknownLevel { row: 1, ref column, .. } if column == "x1"));
        let empty = parse_dataset("", &schema).unwrap_err();
        assert!(matches!(empty, DataError::EmptyFile));
        let gap = parse_dataset("time,event,treatment,x1\n1,,0,a\n", &schema).unwrap_err();
        assert!(matches!(gap, DataError::MissingValue { row: 1, ref column } if column == "event"));
    }

    #[test]
    fn hand_parsed_fixture_matches_field_by_field() {
        let schema = schema_from_counts(&[("sex", &["m", "f"]), ("risk", &["lo", "mid", "hi"])]);
        let mut csv = String::from("time,event,treatment,sex,risk\n");
        let rows: Vec<(f64, u8, u8, &str, &str)> = vec![
            (0.5, 1, 0, "m", "lo"),
            (1.25, 0, 1, "f", "mid"),
            (2.0, 1, 1, "f", "hi"),
            (3.75, 0, 0, "m", "mid"),
            (4.5, 1, 0, "f", "lo"),
            (0.25, 0, 1, "m", "hi"),
            (6.0, 1, 1, "m", "lo"),
            (7.125, 0, 0, "f", "mid"),
            (8.0, 1, 1, "f", "hi"),
            (9.5, 0, 0, "m", "lo"),
            (10.0, 1, 0, "f", "mid"),
            (11.25, 0, 1, "m", "hi"),
            (12.0, 1, 0, "m", "mid"),
            (13.5, 0, 1, "f", "lo"),
            (14.0, 1, 1, "m", "hi"),
            (15.75, 0, 0, "f", "mid"),
            (16.0, 1, 1, "f", "lo"),
            (17.5, 0, 0, "m", "mid"),
            (18.0, 1, 0, "f", "hi"),
            (19.25, 0, 1, "m", "lo"),
        ];
        for r in &rows {
            csv.push_str(&format!("{},{},{},{},{}\n", r.0, r.1, r.2, r.3, r.4));
        }
        let d = parse_dataset(&csv, &schema).unwrap();
        assert_eq!(d.len(), 20);
        let lvl = |var: usize, label: &str| {
            schema.variables[var]
                .levels
                .iter()
                .position(|l| l == label)
                .unwrap()
        };
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(d.subjects[i].time, r.0, "time row {}", i + 1);
            assert_eq!(d.subjects[i].event, r.1);
            assert_eq!(d.subjects[i].treatment, r.2);
            assert_eq!(d.subjects[i].covariates[0], lvl(0, r.3));
            assert_eq!(d.subjects[i].covariates[1], lvl(1, r.4));
        }
    }

    #[test]
    fn schema_json_round_trip() {
        let schema = schema_from_counts(&[("x1", &["a", "b"]), ("x2", &["a", "b", "c"])]);
        let json = serde_json::to_string(&schema).unwrap();
        assert_eq!(SubgroupSchema::from_json(&json).unwrap(), schema);
        assert_eq!(schema.n_subgroups(), 5);
        assert_eq!(schema.subgroup_of(0), (0, 0));
        assert_eq!(schema.subgroup_of(4), (1, 2));
        assert_eq!(schema.subgroup_labels()[3], "x2=b");
    }

    #[test]
    fn rejects_single_level_variable() {
        let err = SubgroupSchema::new(vec![Variable {
            name: "x".into(),
            levels: vec!["only".into()],
        }])
        .unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }
}
