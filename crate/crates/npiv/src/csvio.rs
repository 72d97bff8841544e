//! CSV formats: per-replication results, sample dumps and input data.
//!
//! Replication files carry the schema tag in their first column so that
//! downstream scripts can check the layout before reading.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use npiv_core::Dataset;
use serde::{Deserialize, Serialize};

use crate::config::ColumnRoles;
use crate::error::{HarnessError, Result};

/// Schema tag of the per-replication CSV.
pub const REPLICATION_SCHEMA: &str = "npiv-replications-v1";

/// One `(replication, estimator)` outcome. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub schema: String,
    pub run: String,
    pub design: String,
    pub sieve: String,
    pub estimator: String,
    pub rep: u64,
    pub seed: u64,
    pub n: usize,
    pub theta: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub ci_level: Option<f64>,
    pub covered: Option<bool>,
    /// Held-out R^2 for regression designs.
    pub r2: Option<f64>,
    pub boot_failures: Option<usize>,
    pub runtime_ms: f64,
    /// `ok` or `failed`.
    pub status: String,
    pub error: Option<String>,
}

impl ReplicationRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn write_replications(path: &Path, rows: &[ReplicationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::csv(path, e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_replications(path: &Path) -> Result<Vec<ReplicationRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<ReplicationRow>().enumerate() {
        let row = rec.map_err(|e| HarnessError::csv(path, e.to_string()))?;
        if row.schema != REPLICATION_SCHEMA {
            return Err(HarnessError::csv(
                path,
                format!("row {}: schema tag {:?}, expected {REPLICATION_SCHEMA:?}", i + 2, row.schema),
            ));
        }
        out.push(row);
    }
    Ok(out)
}

/// Writes `y1, y2_0.., x_0..` and returns the header.
pub fn write_sample(path: &Path, data: &Dataset) -> Result<Vec<String>> {
    let mut header = vec!["y1".to_string()];
    header.extend((0..data.y2.ncols()).map(|j| format!("y2_{j}")));
    header.extend((0..data.x.ncols()).map(|j| format!("x_{j}")));
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e.to_string()))?;
    let werr = |e: csv::Error| HarnessError::csv(path, e.to_string());
    w.write_record(&header).map_err(werr)?;
    for i in 0..data.len() {
        let mut rec = vec![fmt_f64(data.y1[i])];
        rec.extend((0..data.y2.ncols()).map(|j| fmt_f64(data.y2[(i, j)])));
        rec.extend((0..data.x.ncols()).map(|j| fmt_f64(data.x[(i, j)])));
        w.write_record(&rec).map_err(werr)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(header)
}

/// Shortest representation that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Roles matching [`write_sample`]'s header.
pub fn sample_roles(data: &Dataset) -> ColumnRoles {
    ColumnRoles {
        outcome: "y1".into(),
        structural: (0..data.y2.ncols()).map(|j| format!("y2_{j}")).collect(),
        instruments: (0..data.x.ncols()).map(|j| format!("x_{j}")).collect(),
    }
}

/// A numeric table read from CSV; `None` marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | ".")
}

/// Reads a headed, comma-delimited numeric CSV. Missing cells are kept as
/// `None`; other cells must parse as numbers in every column that is used,
/// but unused columns are not inspected.
pub fn read_table(path: &Path, used: &[&str]) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HarnessError::csv(path, e.to_string()))?;
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| HarnessError::csv(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let want: Vec<bool> = headers.iter().map(|h| used.contains(&h.as_str())).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::csv(path, e.to_string()))?;
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in rec.iter().enumerate() {
            if !want[j] || is_missing(cell) {
                row.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                HarnessError::csv(path, format!("line {}: column {:?}: cannot parse {cell:?}", line + 2, headers[j]))
            })?;
            row.push(Some(v));
        }
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// Builds the dataset for `roles`, dropping rows with a missing value in a
/// used column. Returns the dataset and the number of dropped rows.
pub fn dataset_from_table(table: &Table, roles: &ColumnRoles) -> Result<(Dataset, usize)> {
    let index = |name: &str| -> Result<usize> {
        table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Roles(format!("column {name:?} not in data (have {:?})", table.headers)))
    };
    let y1c = index(&roles.outcome)?;
    let y2c = roles.structural.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;
    let xc = roles.instruments.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;
    let used: Vec<usize> = std::iter::once(y1c).chain(y2c.iter().copied()).chain(xc.iter().copied()).collect();
    let keep: Vec<&Vec<Option<f64>>> = table
        .rows
        .iter()
        .filter(|r| used.iter().all(|&j| r[j].is_some()))
        .collect();
    let dropped = table.rows.len() - keep.len();
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values in used columns");
    }
    let n = keep.len();
    let cell = |i: usize, j: usize| keep[i][j].expect("filtered");
    let y1 = DVector::from_fn(n, |i, _| cell(i, y1c));
    let y2 = DMatrix::from_fn(n, y2c.len(), |i, j| cell(i, y2c[j]));
    let x = DMatrix::from_fn(n, xc.len(), |i, j| cell(i, xc[j]));
    Ok((Dataset::new(y1, y2, x)?, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn roles() -> ColumnRoles {
        ColumnRoles {
            outcome: "y".into(),
            structural: vec!["p".into(), "w".into()],
            instruments: vec!["z".into(), "w".into()],
        }
    }

    #[test]
    fn missing_unused_cell_keeps_row() {
        let f = temp_csv("y,p,w,z,note\n1,2,3,4,\n5,6,7,8,abc\n");
        let r = roles();
        let t = read_table(f.path(), &r.used_columns()).unwrap();
        let (d, dropped) = dataset_from_table(&t, &r).unwrap();
        assert_eq!((d.len(), dropped), (2, 0));
        assert_eq!(d.x[(1, 1)], 7.0);
    }

    #[test]
    fn missing_used_cell_drops_row() {
        let f = temp_csv("y,p,w,z\n1,2,3,4\n5,NA,7,8\n9,10,,12\n");
        let r = roles();
        let t = read_table(f.path(), &r.used_columns()).unwrap();
        let (d, dropped) = dataset_from_table(&t, &r).unwrap();
        assert_eq!((d.len(), dropped), (1, 2));
    }

    #[test]
    fn bad_cells_and_roles_are_errors() {
        let f = temp_csv("y,p,w,z\n1,2,x3,4\n");
        let r = roles();
        let e = read_table(f.path(), &r.used_columns()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("\"w\""), "{e}");
        let g = temp_csv("y,p,z\n1,2,4\n");
        let t = read_table(g.path(), &r.used_columns()).unwrap();
        assert!(matches!(dataset_from_table(&t, &r), Err(HarnessError::Roles(_))));
    }

    #[test]
    fn sample_round_trips_exactly() {
        let data = Dataset::new(
            DVector::from_vec(vec![0.1, 1.0 / 3.0]),
            DMatrix::from_row_slice(2, 1, &[1e-300, -2.5]),
            DMatrix::from_row_slice(2, 2, &[std::f64::consts::PI, 0.0, 7.0, 1e20]),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_sample(f.path(), &data).unwrap();
        let r = sample_roles(&data);
        let (back, _) = dataset_from_table(&read_table(f.path(), &r.used_columns()).unwrap(), &r).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn replication_schema_checked() {
        let f = temp_csv(
            "schema,run,design,sieve,estimator,rep,seed,n,theta,se,ci_lo,ci_hi,ci_level,covered,r2,boot_failures,runtime_ms,status,error\n\
             other-v0,a,b,c,d,0,1,10,1.0,,,,,,,,1.0,ok,\n",
        );
        assert!(read_replications(f.path()).is_err());
    }
}
