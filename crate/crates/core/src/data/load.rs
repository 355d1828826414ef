use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout of the expression table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// One row per sample, one column per gene.
    #[default]
    SamplesAsRows,
    /// One row per gene, one column per sample (the layout of the public
    /// GDSC expression exports).
    GenesAsRows,
}

fn default_sample_column() -> String {
    "sample_name".into()
}
fn default_log_ic50_column() -> String {
    "logIC50".into()
}
fn default_response_column() -> String {
    "response".into()
}
fn default_responder_values() -> Vec<String> {
    ["R", "1", "true", "responder"].map(String::from).to_vec()
}

/// Sidecar describing how to read a drug's response table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSchema {
    pub drug: String,
    #[serde(default = "default_sample_column")]
    pub sample_column: String,
    #[serde(default = "default_log_ic50_column")]
    pub log_ic50_column: String,
    #[serde(default = "default_response_column")]
    pub response_column: String,
    /// Case-insensitive cell values marking a responder; anything else is a
    /// non-responder.
    #[serde(default = "default_responder_values")]
    pub responder_values: Vec<String>,
    #[serde(default)]
    pub orientation: Orientation,
    /// Field delimiter; inferred from the file extension (`.tsv`/`.txt` → tab)
    /// when absent.
    #[serde(default)]
    pub delimiter: Option<char>,
}

impl ResponseSchema {
    pub fn new(drug: impl Into<String>) -> Self {
        Self {
            drug: drug.into(),
            sample_column: default_sample_column(),
            log_ic50_column: default_log_ic50_column(),
            response_column: default_response_column(),
            responder_values: default_responder_values(),
            orientation: Orientation::default(),
            delimiter: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })
    }

    fn is_responder(&self, cell: &str) -> bool {
        let cell = cell.trim();
        self.responder_values.iter().any(|v| v.eq_ignore_ascii_case(cell))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub samples: Vec<String>,
    pub genes: Vec<String>,
    /// `samples × genes`
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub sample: String,
    pub log_ic50: f64,
    pub responder: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseTable {
    pub records: Vec<ResponseRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    /// Response rows whose sample has no expression profile.
    pub dropped_responses: usize,
    /// Expression profiles with no response row.
    pub unused_expression: usize,
}

/// Joined data for one drug; row `i` of `expression` belongs to `responses.records[i]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub drug: String,
    pub expression: ExpressionMatrix,
    pub responses: ResponseTable,
    pub report: LoadReport,
}

impl Dataset {
    pub fn log_ic50(&self) -> Vec<f64> {
        self.responses.records.iter().map(|r| r.log_ic50).collect()
    }

    pub fn responders(&self) -> Vec<bool> {
        self.responses.records.iter().map(|r| r.responder).collect()
    }
}

fn delimiter_for(path: &Path, explicit: Option<char>) -> u8 {
    if let Some(c) = explicit {
        return c as u8;
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(ext) if ext == "tsv" || ext == "txt" => b'\t',
        _ => b',',
    }
}

fn reader(path: &Path, delimiter: u8) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_number(path: &Path, cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.into(),
            message: format!("row {row}, column {column:?}: malformed number {cell:?}"),
        }),
    }
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        message,
    }
}

pub(crate) fn read_expression(path: &Path, schema: &ResponseSchema) -> Result<ExpressionMatrix> {
    let mut rdr = reader(path, delimiter_for(path, schema.delimiter))?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.len() < 2 {
        return Err(parse_err(path, "expression table needs an id column and data".into()));
    }
    let columns = header[1..].to_vec();
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Data rows are 1-based after the header line.
        let line = r + 2;
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                format!("row {line} has {} fields, header has {}", rec.len(), header.len()),
            ));
        }
        row_ids.push(rec[0].to_string());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            values.push(parse_number(path, cell, line, &header[c])?);
        }
    }
    let values = Array2::from_shape_vec((row_ids.len(), columns.len()), values)
        .map_err(|e| parse_err(path, e.to_string()))?;

    let (samples, genes, values) = match schema.orientation {
        Orientation::SamplesAsRows => (row_ids, columns, values),
        Orientation::GenesAsRows => (columns, row_ids, values.t().to_owned()),
    };
    for (what, ids) in [("sample", &samples), ("gene", &genes)] {
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(parse_err(path, format!("duplicated {what} id {dup:?}")));
        }
    }
    Ok(ExpressionMatrix {
        samples,
        genes,
        values,
    })
}

pub(crate) fn read_responses(path: &Path, schema: &ResponseSchema) -> Result<ResponseTable> {
    let mut rdr = reader(path, delimiter_for(path, schema.delimiter))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, format!("missing column {name:?}")))
    };
    let (cs, cl, cr) = (
        col(&schema.sample_column)?,
        col(&schema.log_ic50_column)?,
        col(&schema.response_column)?,
    );
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        let get = |c: usize| {
            rec.get(c)
                .ok_or_else(|| parse_err(path, format!("row {line} is missing field {c}")))
        };
        let sample = get(cs)?.to_string();
        if !seen.insert(sample.clone()) {
            return Err(parse_err(path, format!("duplicated sample id {sample:?}")));
        }
        records.push(ResponseRecord {
            log_ic50: parse_number(path, get(cl)?, line, &schema.log_ic50_column)?,
            responder: schema.is_responder(get(cr)?),
            sample,
        });
    }
    Ok(ResponseTable { records })
}

/// Read both tables and inner-join them on sample id, keeping the response
/// table's row order. Unmatched ids are dropped and counted.
pub fn load_dataset(
    expression_path: &Path,
    response_path: &Path,
    schema: &ResponseSchema,
) -> Result<Dataset> {
    let expr = read_expression(expression_path, schema)?;
    let responses = read_responses(response_path, schema)?;

    let index: HashMap<&str, usize> = expr
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rows = Vec::new();
    let mut kept = Vec::new();
    let mut report = LoadReport::default();
    for rec in responses.records {
        match index.get(rec.sample.as_str()) {
            Some(&i) => {
                rows.push(i);
                kept.push(rec);
            }
            None => report.dropped_responses += 1,
        }
    }
    report.unused_expression = expr.samples.len() - rows.len();
    if report.dropped_responses > 0 {
        log::warn!(
            "{}: dropped {} response rows without expression data",
            schema.drug,
            report.dropped_responses
        );
    }
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "{}: no sample ids shared between expression and response tables",
            schema.drug
        )));
    }

    let values = expr.values.select(ndarray::Axis(0), &rows);
    Ok(Dataset {
        drug: schema.drug.clone(),
        expression: ExpressionMatrix {
            samples: kept.iter().map(|r| r.sample.clone()).collect(),
            genes: expr.genes,
            values,
        },
        responses: ResponseTable { records: kept },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const EXPR: &str = "sample_id,g1,g2,g3\ns1,0.1,0.2,0.3\ns2,1.0,2.0,3.0\ns3,-1,0,1\n";

    #[test]
    fn three_sample_fixture() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.csv", EXPR);
        let r = write(
            d.path(),
            "r.csv",
            "sample_name,logIC50,response\ns2,1.5,NR\ns1,-0.5,R\ns3,0.0,NR\n",
        );
        let ds = load_dataset(&e, &r, &ResponseSchema::new("X")).unwrap();
        assert_eq!(ds.expression.values.dim(), (3, 3));
        assert_eq!(ds.responses.records.len(), 3);
        assert_eq!(ds.expression.samples, vec!["s2", "s1", "s3"]);
        assert_eq!(ds.expression.values[[0, 2]], 3.0);
        assert_eq!(ds.responders(), vec![false, true, false]);
        assert_eq!(ds.report, LoadReport::default());
    }

    #[test]
    fn unknown_response_sample_dropped() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.csv", EXPR);
        let r = write(
            d.path(),
            "r.csv",
            "sample_name,logIC50,response\ns1,1,R\nzz,2,NR\ns2,3,NR\n",
        );
        let ds = load_dataset(&e, &r, &ResponseSchema::new("X")).unwrap();
        assert_eq!(ds.report.dropped_responses, 1);
        assert_eq!(ds.report.unused_expression, 1);
        assert_eq!(ds.responses.records.len(), 2);
    }

    #[test]
    fn duplicated_sample_is_error() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.csv", "sample_id,g1\ns1,1\ns1,2\n");
        let r = write(d.path(), "r.csv", "sample_name,logIC50,response\ns1,1,R\n");
        assert!(matches!(
            load_dataset(&e, &r, &ResponseSchema::new("X")),
            Err(Error::Parse { .. })
        ));
        let e = write(d.path(), "e2.csv", EXPR);
        let r = write(d.path(), "r2.csv", "sample_name,logIC50,response\ns1,1,R\ns1,2,NR\n");
        assert!(load_dataset(&e, &r, &ResponseSchema::new("X")).is_err());
    }

    #[test]
    fn malformed_number_names_location() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.csv", "sample_id,g1,g2\ns1,1,oops\n");
        let r = write(d.path(), "r.csv", "sample_name,logIC50,response\ns1,1,R\n");
        let err = load_dataset(&e, &r, &ResponseSchema::new("X")).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("g2"), "{err}");
    }

    #[test]
    fn genes_as_rows_tsv() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.tsv", "gene\ts1\ts2\nA\t1\t2\nB\t3\t4\nC\t5\t6\n");
        let r = write(d.path(), "r.tsv", "sample_name\tlogIC50\tresponse\ns2\t0.5\tR\n");
        let mut schema = ResponseSchema::new("X");
        schema.orientation = Orientation::GenesAsRows;
        let ds = load_dataset(&e, &r, &schema).unwrap();
        assert_eq!(ds.expression.genes, vec!["A", "B", "C"]);
        assert_eq!(ds.expression.values.row(0).to_vec(), vec![2.0, 4.0, 6.0]);
    }
}
