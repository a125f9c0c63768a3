//! Cohort CSV schema.
//!
//! Header names carry the role: `x_<name>` covariates, `s_<name>` surrogates,
//! and the optional whole columns `t` and `y`. Cells are `.`-decimal numbers;
//! an empty cell is missing.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Cohort, DataError, Population, ScenarioTruth};

/// A parsed numeric table with file line numbers kept for error reporting.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<RawRow>,
}

#[derive(Clone, Debug)]
pub struct RawRow {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    /// 1-based line in the file.
    pub line: u64,
    pub cells: Vec<Option<f64>>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<RawTable, DataError> {
    read_table_with(reader, |_| true)
}

/// Like [`read_table`], but only columns whose header passes `parse` are
/// parsed; the cells of the others are left empty.
pub fn read_table_with<R: Read>(reader: R, parse: impl Fn(&str) -> bool) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let wanted: Vec<bool> = headers.iter().map(|h| parse(h)).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let row = i + 1;
        if record.len() != headers.len() {
            return Err(DataError::Schema(format!(
                "row {row} (line {line}) has {} cells, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let cells = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if cell.is_empty() || !wanted[j] {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| DataError::Parse {
                        row,
                        line,
                        column: headers[j].clone(),
                        value: cell.to_owned(),
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(RawRow { row, line, cells });
    }
    Ok(RawTable { headers, rows })
}

/// Writes `cohort` with role-prefixed headers.
pub fn write_cohort_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = cohort.x_names.iter().map(|n| format!("x_{n}")).collect();
    header.extend(cohort.s_names.iter().map(|n| format!("s_{n}")));
    if cohort.t.is_some() {
        header.push("t".into());
    }
    if cohort.y.is_some() {
        header.push("y".into());
    }
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    for i in 0..cohort.n {
        let mut rec: Vec<String> = cohort.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.extend(cohort.s.row(i).iter().map(|v| v.to_string()));
        if let Some(t) = &cohort.t {
            rec.push(t[i].to_string());
        }
        if let Some(y) = &cohort.y {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))?;
    Ok(())
}

/// Reads a cohort written in the role-prefixed schema. Missing cells are only
/// allowed when a whole `t` or `y` column is empty, in which case the column
/// is treated as absent.
pub fn read_cohort_csv<R: Read>(reader: R, population: Population) -> Result<Cohort, DataError> {
    let table = read_table(reader)?;
    let mut x_cols = Vec::new();
    let mut s_cols = Vec::new();
    let mut t_col = None;
    let mut y_col = None;
    for (j, h) in table.headers.iter().enumerate() {
        if let Some(name) = h.strip_prefix("x_") {
            x_cols.push((j, name.to_owned()));
        } else if let Some(name) = h.strip_prefix("s_") {
            s_cols.push((j, name.to_owned()));
        } else if h == "t" {
            t_col = Some(j);
        } else if h == "y" {
            y_col = Some(j);
        } else {
            return Err(DataError::Schema(format!("column `{h}` has no role prefix")));
        }
    }
    let n = table.rows.len();
    let whole_or_absent = |col: Option<usize>, name: &'static str| -> Result<Option<Vec<f64>>, DataError> {
        let Some(j) = col else { return Ok(None) };
        let present = table.rows.iter().filter(|r| r.cells[j].is_some()).count();
        if present == 0 {
            Ok(None)
        } else if present == n {
            Ok(Some(table.rows.iter().map(|r| r.cells[j].unwrap()).collect()))
        } else {
            Err(DataError::PartialColumn(name))
        }
    };
    let t = whole_or_absent(t_col, "t")?;
    let y = whole_or_absent(y_col, "y")?;
    let block = |cols: &[(usize, String)]| -> Result<Array2<f64>, DataError> {
        let mut m = Array2::zeros((n, cols.len()));
        for (i, r) in table.rows.iter().enumerate() {
            for (c, (j, name)) in cols.iter().enumerate() {
                m[[i, c]] = r.cells[*j].ok_or_else(|| DataError::MissingCell { row: r.row, line: r.line, column: name.clone() })?;
            }
        }
        Ok(m)
    };
    let x = block(&x_cols)?;
    let s = block(&s_cols)?;
    let t = t.map(|v| super::binary_treatment(Array1::from(v).view())).transpose()?;
    Cohort {
        n,
        x,
        t,
        s,
        y: y.map(Array1::from),
        population,
        x_names: x_cols.into_iter().map(|(_, n)| n).collect(),
        s_names: s_cols.into_iter().map(|(_, n)| n).collect(),
    }
    .validated()
}

impl Cohort {
    fn validated(self) -> Result<Cohort, DataError> {
        self.validate()?;
        Ok(self)
    }
}

/// Sidecar with the potential outcomes of a synthetic cohort:
/// `s0_*`, `s1_*`, `y0`, `y1`, `cate`.
pub fn write_truth_csv<W: Write>(truth: &ScenarioTruth, s_names: &[String], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = s_names.iter().map(|n| format!("s0_{n}")).collect();
    header.extend(s_names.iter().map(|n| format!("s1_{n}")));
    header.extend(["y0", "y1", "cate"].map(String::from));
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    for i in 0..truth.n() {
        let mut rec: Vec<String> = truth.s0.row(i).iter().map(|v| v.to_string()).collect();
        rec.extend(truth.s1.row(i).iter().map(|v| v.to_string()));
        rec.extend([truth.y0[i], truth.y1[i], truth.cate[i]].map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_prefixed_columns() {
        let text = "x_a,s_b,t,y\n1,2,0,3\n4,5.5,1,6\n-7,8e-1,1,9\n";
        let c = read_cohort_csv(text.as_bytes(), Population::Observational).unwrap();
        assert_eq!((c.n, c.k(), c.d()), (3, 1, 1));
        assert_eq!(c.x_names, vec!["a"]);
        assert_eq!(c.s[[2, 0]], 0.8);
        assert_eq!(c.t.as_deref(), Some(&[0u8, 1, 1][..]));
    }

    #[test]
    fn bad_number_cites_row() {
        let text = "x_a,s_b\n1,2\n1,oops\n";
        match read_cohort_csv(text.as_bytes(), Population::Observational) {
            Err(DataError::Parse { row, line, column, .. }) => {
                assert_eq!((row, line), (2, 3));
                assert_eq!(column, "s_b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_outcome_column_is_absent_partial_is_error() {
        let c = read_cohort_csv("x_a,s_b,y\n1,2,\n3,4,\n".as_bytes(), Population::Observational).unwrap();
        assert!(c.y.is_none());
        let r = read_cohort_csv("x_a,s_b,y\n1,2,5\n3,4,\n".as_bytes(), Population::Observational);
        assert!(matches!(r, Err(DataError::PartialColumn("y"))));
    }

    #[test]
    fn unprefixed_column_rejected() {
        let r = read_cohort_csv("age,s_b\n1,2\n".as_bytes(), Population::Observational);
        assert!(matches!(r, Err(DataError::Schema(_))));
    }
}
