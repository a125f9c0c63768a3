//! Outcome regression and regress-select-regress.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::nuisance::fit_tree_cv;
use super::{SurrogateError, SurrogateModel};
use crate::data::{Cohort, RandomSource};
use crate::models::{fit_linear, LinearModel, TreeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineFamily {
    Linear,
    Tree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    /// Lasso strength of the linear family; 0 is least squares.
    pub lambda: f64,
    pub grid: TreeGrid,
    pub folds: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions { lambda: 0.0, grid: TreeGrid::standard(), folds: 5 }
    }
}

fn fit_family(
    s: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    family: BaselineFamily,
    options: &BaselineOptions,
    source: RandomSource,
) -> Result<SurrogateModel, SurrogateError> {
    Ok(match family {
        BaselineFamily::Linear => SurrogateModel::linear(fit_linear(s, y, None, options.lambda)?),
        BaselineFamily::Tree => SurrogateModel::tree(fit_tree_cv(s, y, None, &options.grid, options.folds, source)?),
    })
}

/// Regression of `y` on `s` alone.
pub fn fit_outcome_regression(
    outcome: &Cohort,
    family: BaselineFamily,
    options: &BaselineOptions,
    source: RandomSource,
) -> Result<SurrogateModel, SurrogateError> {
    let y = outcome.outcome()?;
    fit_family(outcome.s.view(), y, family, options, source)
}

/// Least-squares coefficients of `y` on the z-scored columns of `s`.
/// Constant columns get coefficient 0.
pub fn standardized_coefficients(s: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>, SurrogateError> {
    let n = s.nrows() as f64;
    let mut z = s.to_owned();
    for mut col in z.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 });
    }
    Ok(fit_linear(z.view(), y, None, 0.0)?.coefficients)
}

/// Stage one picks the column with the largest absolute standardized
/// coefficient (lowest index on ties); stage two fits `family` on that
/// column alone. The result takes all `d` surrogates and ignores the rest.
pub fn fit_reg_sel_reg(
    outcome: &Cohort,
    family: BaselineFamily,
    options: &BaselineOptions,
    source: RandomSource,
) -> Result<SurrogateModel, SurrogateError> {
    let y = outcome.outcome()?;
    let d = outcome.d();
    let theta = standardized_coefficients(outcome.s.view(), y)?;
    // Relative slack so that ties broken only by rounding keep the lower index.
    let mut best = 0;
    for j in 1..d {
        if theta[j].abs() > theta[best].abs() * (1.0 + 1e-12) {
            best = j;
        }
    }
    let column = outcome.s.select(Axis(1), &[best]);
    let stage2 = fit_family(column.view(), y, family, options, source)?;
    Ok(match stage2.form {
        super::SurrogateForm::Linear(m) => {
            let mut beta = Array1::zeros(d);
            beta[best] = m.coefficients[0];
            SurrogateModel::linear(LinearModel::new(beta, m.intercept))
        }
        super::SurrogateForm::Tree(t) => SurrogateModel::tree(t.remap_features(&[best], d)),
        super::SurrogateForm::BinarizedTree { .. } => unreachable!("baselines never binarize"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_rng, Population};
    use ndarray::{Array, Array2};
    use rand::Rng;

    fn outcome(s: Array2<f64>, y: Array1<f64>) -> Cohort {
        let n = s.nrows();
        Cohort::new(Array2::zeros((n, 1)), None, s, Some(y), Population::Observational).unwrap()
    }

    fn random_s(n: usize, d: usize) -> Array2<f64> {
        let mut rng = make_rng(9, 0).rng();
        Array::from_shape_fn((n, d), |_| rng.random::<f64>())
    }

    #[test]
    fn outcome_regression_is_exact_on_noiseless_data() {
        let s = random_s(30, 3);
        let y = s.column(0).mapv(|v| 4.0 * v);
        let f = fit_outcome_regression(&outcome(s, y), BaselineFamily::Linear, &Default::default(), make_rng(0, 0)).unwrap();
        let (beta, b) = f.linear_parts().unwrap();
        assert!((beta[0] - 4.0).abs() < 1e-10 && beta[1].abs() < 1e-10 && beta[2].abs() < 1e-10 && b.abs() < 1e-10);
    }

    #[test]
    fn selects_dominant_column() {
        let s = random_s(40, 3);
        let y = Array1::from_iter(s.rows().into_iter().map(|r| 5.0 * r[1] + 0.1 * r[0]));
        let f = fit_reg_sel_reg(&outcome(s, y), BaselineFamily::Linear, &Default::default(), make_rng(0, 0)).unwrap();
        let (beta, _) = f.linear_parts().unwrap();
        assert_eq!(beta[0], 0.0);
        assert_eq!(beta[2], 0.0);
        assert!(beta[1] > 4.0);
    }

    #[test]
    fn tie_selects_lowest_index() {
        let s = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let y = Array1::from_iter(s.rows().into_iter().map(|r| r[0] + r[1]));
        let f = fit_reg_sel_reg(&outcome(s, y), BaselineFamily::Linear, &Default::default(), make_rng(0, 0)).unwrap();
        let (beta, _) = f.linear_parts().unwrap();
        assert!(beta[0] != 0.0 && beta[1] == 0.0);
    }

    #[test]
    fn tree_stage_two_reads_selected_column() {
        let s = random_s(400, 2);
        let y = s.column(1).mapv(|v| if v > 0.5 { 1.0 } else { 0.0 });
        let f = fit_reg_sel_reg(&outcome(s, y), BaselineFamily::Tree, &Default::default(), make_rng(0, 0)).unwrap();
        assert!(f.evaluate_row(&[0.0, 0.9]).unwrap() > 0.9);
        assert!(f.evaluate_row(&[0.9, 0.1]).unwrap() < 0.1);
    }
}
