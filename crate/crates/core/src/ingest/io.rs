//! CSV and JSON suite files.
//!
//! Both formats carry the columns `id`, the seven canonical features,
//! `coverage` and `detects`. In CSV the two set-valued columns are
//! `;`-separated identifier lists and an empty numeric cell is MISSING. In
//! JSON they are string arrays (a `;`-joined string is also accepted) and a
//! `null` numeric field is MISSING.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{Dataset, IngestError};
use crate::model::{FeatureVector, Suite, TestCaseRecord, FEATURE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Json,
}

impl FileFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(FileFormat::Csv),
            "json" => Some(FileFormat::Json),
            _ => None,
        }
    }
}

impl FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(FileFormat::Csv),
            "json" => Ok(FileFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// Every column of the file schema, in header order.
pub fn schema_columns() -> Vec<&'static str> {
    let mut cols = vec!["id"];
    cols.extend(FEATURE_NAMES);
    cols.extend(["coverage", "detects"]);
    cols
}

fn suite_id_from_path(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("suite")
        .to_string()
}

/// Loads one suite file. The suite id is the file stem.
pub fn load_dataset(path: &Path, format: FileFormat) -> Result<Dataset, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let records = match format {
        FileFormat::Csv => read_csv(reader)?,
        FileFormat::Json => read_json(reader)?,
    };
    Ok(Dataset::from_suites(vec![Suite::from_records(
        suite_id_from_path(path),
        records,
    )]))
}

fn split_ids(cell: &str) -> BTreeSet<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_number(cell: &str, line: u64, field: &str) -> Result<Option<f64>, IngestError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(IngestError::Parse {
            line,
            field: field.to_string(),
            message: format!("`{cell}` is not a finite number"),
        }),
    }
}

fn check_header<'a>(columns: impl IntoIterator<Item = &'a str>) -> Result<Vec<String>, IngestError> {
    let schema = schema_columns();
    let mut seen = Vec::new();
    for col in columns {
        let col = col.trim();
        if !schema.contains(&col) {
            return Err(IngestError::Schema(format!("unknown column `{col}`")));
        }
        if seen.iter().any(|c: &String| c == col) {
            return Err(IngestError::Schema(format!("duplicate column `{col}`")));
        }
        seen.push(col.to_string());
    }
    if let Some(missing) = schema.iter().find(|c| !seen.iter().any(|s| s == *c)) {
        return Err(IngestError::Schema(format!("missing column `{missing}`")));
    }
    Ok(seen)
}

fn build_record(
    id: String,
    numbers: Vec<(&str, Option<f64>)>,
    coverage: BTreeSet<String>,
    detects: BTreeSet<String>,
) -> TestCaseRecord {
    let exec_time = numbers
        .iter()
        .find(|(n, _)| *n == "exec_time")
        .and_then(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    TestCaseRecord::new(
        id,
        FeatureVector::from_pairs(numbers),
        coverage,
        exec_time,
        detects,
    )
}

/// Parses CSV rows. An empty `exec_time` cell leaves the record's time as NaN
/// until imputation fills it.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TestCaseRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(IngestError::Csv)?.clone();
    let columns = check_header(header.iter())?;
    let index_of = |name: &str| columns.iter().position(|c| c == name).expect("checked");

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(IngestError::Csv)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != columns.len() {
            return Err(IngestError::Parse {
                line,
                field: "*".into(),
                message: format!("expected {} cells, found {}", columns.len(), row.len()),
            });
        }
        let id = row[index_of("id")].trim().to_string();
        if id.is_empty() {
            return Err(IngestError::Parse {
                line,
                field: "id".into(),
                message: "empty test id".into(),
            });
        }
        let mut numbers = Vec::with_capacity(FEATURE_NAMES.len());
        for name in FEATURE_NAMES {
            numbers.push((name, parse_number(&row[index_of(name)], line, name)?));
        }
        records.push(build_record(
            id,
            numbers,
            split_ids(&row[index_of("coverage")]),
            split_ids(&row[index_of("detects")]),
        ));
    }
    Ok(records)
}

fn json_ids(value: &Value, line: u64, field: &str) -> Result<BTreeSet<String>, IngestError> {
    match value {
        Value::Null => Ok(BTreeSet::new()),
        Value::String(s) => Ok(split_ids(s)),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str().map(str::to_string).ok_or_else(|| IngestError::Parse {
                    line,
                    field: field.to_string(),
                    message: "identifier list must contain strings".into(),
                })
            })
            .collect(),
        _ => Err(IngestError::Parse {
            line,
            field: field.to_string(),
            message: "expected an array of identifiers".into(),
        }),
    }
}

/// Parses a JSON array of record objects. `line` in errors is the 1-based
/// object index.
pub fn read_json<R: Read>(reader: R) -> Result<Vec<TestCaseRecord>, IngestError> {
    let value: Value = serde_json::from_reader(reader).map_err(IngestError::Json)?;
    let Value::Array(items) = value else {
        return Err(IngestError::Schema("top-level JSON value must be an array".into()));
    };
    let mut records = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let line = i as u64 + 1;
        let Value::Object(obj) = item else {
            return Err(IngestError::Parse {
                line,
                field: "*".into(),
                message: "expected an object".into(),
            });
        };
        check_header(obj.keys().map(String::as_str))?;
        let id = obj["id"]
            .as_str()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| IngestError::Parse {
                line,
                field: "id".into(),
                message: "id must be a nonempty string".into(),
            })?
            .to_string();
        let mut numbers = Vec::with_capacity(FEATURE_NAMES.len());
        for name in FEATURE_NAMES {
            let v = match &obj[name] {
                Value::Null => None,
                Value::Number(n) => n.as_f64(),
                _ => {
                    return Err(IngestError::Parse {
                        line,
                        field: name.to_string(),
                        message: "expected a number or null".into(),
                    })
                }
            };
            numbers.push((name, v));
        }
        records.push(build_record(
            id,
            numbers,
            json_ids(&obj["coverage"], line, "coverage")?,
            json_ids(&obj["detects"], line, "detects")?,
        ));
    }
    Ok(records)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join_ids(ids: &BTreeSet<String>) -> String {
    ids.iter().map(String::as_str).collect::<Vec<_>>().join(";")
}

pub fn write_csv<W: Write>(writer: W, records: &[TestCaseRecord]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema_columns()).map_err(IngestError::Csv)?;
    for r in records {
        let mut row = vec![r.id.clone()];
        for name in FEATURE_NAMES {
            row.push(fmt_cell(r.features.get(name).flatten()));
        }
        row.push(join_ids(&r.coverage));
        row.push(join_ids(&r.detects));
        wtr.write_record(&row).map_err(IngestError::Csv)?;
    }
    wtr.flush().map_err(|e| IngestError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn write_json<W: Write>(writer: W, records: &[TestCaseRecord]) -> Result<(), IngestError> {
    let items: Vec<Value> = records
        .iter()
        .map(|r| {
            let mut obj = Map::new();
            obj.insert("id".into(), Value::String(r.id.clone()));
            for name in FEATURE_NAMES {
                let v = r
                    .features
                    .get(name)
                    .flatten()
                    .and_then(serde_json::Number::from_f64)
                    .map(Value::Number)
                    .unwrap_or(Value::Null);
                obj.insert(name.into(), v);
            }
            obj.insert(
                "coverage".into(),
                Value::Array(r.coverage.iter().cloned().map(Value::String).collect()),
            );
            obj.insert(
                "detects".into(),
                Value::Array(r.detects.iter().cloned().map(Value::String).collect()),
            );
            Value::Object(obj)
        })
        .collect();
    serde_json::to_writer_pretty(writer, &Value::Array(items)).map_err(IngestError::Json)
}

/// Writes one suite in the chosen format.
pub fn save_suite(path: &Path, suite: &Suite, format: FileFormat) -> Result<(), IngestError> {
    let mut file = File::create(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    match format {
        FileFormat::Csv => write_csv(&mut file, &suite.records),
        FileFormat::Json => write_json(&mut file, &suite.records),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
id,cyclomatic_complexity,code_churn,dependency_degree,exec_time,line_coverage,branch_coverage,mutation_kill_score,coverage,detects
t1,3,10,2,1.5,0.5,0.4,0.9,a;b,f1
t2,1,0,1,0.5,0.1,0.1,,c,
t3,7,25,4,3.0,0.9,0.8,0.5,a;c;d,f1;f2
";

    #[test]
    fn reads_well_formed_csv() {
        let recs = read_csv(GOOD.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].coverage.len(), 2);
        assert!(recs[0].label);
        assert!(!recs[1].label);
        assert_eq!(recs[2].exec_time, 3.0);
    }

    #[test]
    fn empty_cell_is_missing() {
        let recs = read_csv(GOOD.as_bytes()).unwrap();
        assert_eq!(recs[1].features.get("mutation_kill_score"), Some(None));
    }

    #[test]
    fn misspelled_column_is_schema_error() {
        let bad = GOOD.replacen("exec_time", "exec_tmie", 1);
        match read_csv(bad.as_bytes()) {
            Err(IngestError::Schema(msg)) => assert!(msg.contains("exec_tmie"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line_and_field() {
        let bad = GOOD.replacen("t2,1,0", "t2,x,0", 1);
        match read_csv(bad.as_bytes()) {
            Err(IngestError::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "cyclomatic_complexity");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let recs = read_csv(GOOD.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs[..]);

        // NaN exec_time never occurs here, so JSON equality is exact.
        let mut buf = Vec::new();
        write_json(&mut buf, &recs).unwrap();
        assert_eq!(read_json(buf.as_slice()).unwrap(), recs[..]);
    }

    #[test]
    fn json_unknown_key_rejected() {
        let text = r#"[{"id":"t1","cyclomatic_complexity":1,"code_churn":1,"dependency_degree":1,
            "exec_time":1,"line_coverage":1,"branch_coverage":1,"mutation_kill_score":1,
            "coverage":[],"detects":[],"owner":"x"}]"#;
        assert!(matches!(read_json(text.as_bytes()), Err(IngestError::Schema(_))));
    }
}
