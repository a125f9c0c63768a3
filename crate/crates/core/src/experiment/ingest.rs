//! Loading user cohorts and splitting them by treatment arm.

use std::fs::File;
use std::path::Path;

use log::{debug, warn};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::data::csv::{read_cohort_csv, read_table_with};
use crate::data::{binary_treatment, Cohort, DataError, Population, RandomSource};

/// Explicit column roles for files whose headers carry no role prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleMap {
    pub x: Vec<String>,
    pub s: Vec<String>,
    #[serde(default)]
    pub t: Option<String>,
    #[serde(default)]
    pub y: Option<String>,
    /// Drop rows with a missing role cell (logging their lines) instead of failing.
    #[serde(default)]
    pub complete_cases: bool,
}

impl RoleMap {
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
    }
}

/// Reads a CSV and assigns columns by `roles`. Columns not named in the map
/// are ignored and may hold anything.
pub fn read_cohort_with_roles<R: std::io::Read>(reader: R, roles: &RoleMap, population: Population) -> Result<Cohort, DataError> {
    let named = |h: &str| roles.x.iter().chain(&roles.s).chain(&roles.t).chain(&roles.y).any(|c| c == h);
    let table = read_table_with(reader, named)?;
    let find = |name: &str| table.column(name).ok_or_else(|| DataError::Schema(format!("role map names column `{name}`, which the file lacks")));
    let x_cols = roles.x.iter().map(|c| find(c)).collect::<Result<Vec<_>, _>>()?;
    let s_cols = roles.s.iter().map(|c| find(c)).collect::<Result<Vec<_>, _>>()?;
    let t_col = roles.t.as_deref().map(find).transpose()?;
    let y_col = roles.y.as_deref().map(find).transpose()?;
    let required: Vec<usize> = x_cols.iter().chain(&s_cols).chain(t_col.iter()).chain(y_col.iter()).copied().collect();

    let mut kept = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        match required.iter().find(|&&j| r.cells[j].is_none()) {
            None => kept.push(r),
            Some(&j) if roles.complete_cases => {
                debug!("dropping row {} (line {}): no value for `{}`", r.row, r.line, table.headers[j]);
            }
            Some(&j) => return Err(DataError::MissingCell { row: r.row, line: r.line, column: table.headers[j].clone() }),
        }
    }
    if kept.len() < table.rows.len() {
        warn!("kept {} of {} rows after restricting to complete cases", kept.len(), table.rows.len());
    }
    let n = kept.len();
    let block = |cols: &[usize]| Array2::from_shape_fn((n, cols.len()), |(i, c)| kept[i].cells[cols[c]].expect("complete"));
    let column = |j: usize| Array1::from_iter(kept.iter().map(|r| r.cells[j].expect("complete")));
    let t = t_col.map(|j| binary_treatment(column(j).view())).transpose()?;
    let cohort = Cohort::new(block(&x_cols), t, block(&s_cols), y_col.map(column), population)?;
    cohort.with_names(roles.x.clone(), roles.s.clone())
}

/// Loads a cohort CSV, by `roles` when given and by header prefix otherwise.
pub fn load_cohort_csv(path: &Path, roles: Option<&RoleMap>, population: Population) -> Result<Cohort, ExperimentError> {
    let file = File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let cohort = match roles {
        Some(r) => read_cohort_with_roles(reader, r, population),
        None => read_cohort_csv(reader, population),
    };
    cohort.map_err(|source| ExperimentError::Data { path: path.to_owned(), source })
}

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("split fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("the cohort has no treatment column")]
    MissingTreatment,
    #[error("arm {0} is empty")]
    SingleArmData(u8),
}

/// Units of one arm that go to training: `floor(fraction · size)`, plus one
/// when the fractional part is at least one half.
pub fn train_count(fraction: f64, size: usize) -> usize {
    let target = fraction * size as f64;
    // Tolerance absorbs products such as 0.7 · 5 = 3.4999999999999996.
    (target + 0.5 + 1e-9).floor().min(size as f64) as usize
}

/// Random train/test partition stratified by treatment. Both parts keep the
/// original row order.
pub fn stratified_split(cohort: &Cohort, fraction: f64, source: RandomSource) -> Result<(Cohort, Cohort), SplitError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::InvalidFraction(fraction));
    }
    let t = cohort.t.as_ref().ok_or(SplitError::MissingTreatment)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for arm in 0..2u8 {
        let mut idx: Vec<usize> = (0..cohort.n).filter(|&i| t[i] == arm).collect();
        if idx.is_empty() {
            return Err(SplitError::SingleArmData(arm));
        }
        idx.shuffle(&mut source.substream(arm as u64).rng());
        let m = train_count(fraction, idx.len());
        train.extend_from_slice(&idx[..m]);
        test.extend_from_slice(&idx[m..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((cohort.subset(&train), cohort.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_rng;

    fn roles() -> RoleMap {
        RoleMap { x: vec!["age".into()], s: vec!["score".into()], t: Some("treat".into()), y: Some("iq".into()), complete_cases: false }
    }

    #[test]
    fn role_map_reads_named_columns() {
        let text = "site,age,score,treat,iq\nnorth,3,0.5,1,90\nsouth,4,0.25,0,85\n,5,1.5,1,100\n";
        let c = read_cohort_with_roles(text.as_bytes(), &roles(), Population::Experimental).unwrap();
        assert_eq!((c.n, c.k(), c.d()), (3, 1, 1));
        assert_eq!(c.t.as_deref(), Some(&[1u8, 0, 1][..]));
        assert_eq!(c.x_names, vec!["age"]);
    }

    #[test]
    fn missing_cells_fail_or_drop() {
        let text = "age,score,treat,iq\n3,0.5,1,90\n4,,0,85\n5,1.5,0,100\n";
        let err = read_cohort_with_roles(text.as_bytes(), &roles(), Population::Experimental).unwrap_err();
        assert!(matches!(err, DataError::MissingCell { row: 2, line: 3, .. }), "{err:?}");
        let lenient = RoleMap { complete_cases: true, ..roles() };
        assert_eq!(read_cohort_with_roles(text.as_bytes(), &lenient, Population::Experimental).unwrap().n, 2);
    }

    #[test]
    fn schema_and_parse_errors() {
        let no_t = "age,score,iq\n3,0.5,90\n";
        assert!(matches!(read_cohort_with_roles(no_t.as_bytes(), &roles(), Population::Experimental), Err(DataError::Schema(_))));
        let bad = "age,score,treat,iq\n3,0.5,1,90\n4,abc,0,85\n";
        assert!(matches!(read_cohort_with_roles(bad.as_bytes(), &roles(), Population::Experimental), Err(DataError::Parse { row: 2, .. })));
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(train_count(0.7, 60), 42);
        assert_eq!(train_count(0.7, 40), 28);
        assert_eq!(train_count(0.7, 5), 4);
        assert_eq!(train_count(0.7, 3), 2);
        assert_eq!(train_count(0.1, 4), 0);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let n = 100;
        let t: Vec<u8> = (0..n).map(|i| u8::from(i >= 60)).collect();
        let c = Cohort::new(Array2::zeros((n, 1)), Some(t), Array2::from_shape_fn((n, 1), |(i, _)| i as f64), None, Population::Experimental).unwrap();
        let (train, test) = stratified_split(&c, 0.7, make_rng(3, 0)).unwrap();
        let treated = |c: &Cohort| c.t.as_ref().unwrap().iter().filter(|&&v| v == 1).count();
        assert_eq!((train.n - treated(&train), treated(&train)), (42, 28));
        assert_eq!(test.n, 30);
        let (again, _) = stratified_split(&c, 0.7, make_rng(3, 0)).unwrap();
        assert_eq!(again.s, train.s);
        assert!(matches!(stratified_split(&c, 1.0, make_rng(3, 0)), Err(SplitError::InvalidFraction(_))));
    }
}
