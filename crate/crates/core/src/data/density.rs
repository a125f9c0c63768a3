use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

/// One inclusion condition `x[feature] <op> value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub feature: usize,
    pub op: Comparison,
    pub value: f64,
}

impl Criterion {
    pub fn new(feature: usize, op: Comparison, value: f64) -> Self {
        Criterion { feature, op, value }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        let v = x[self.feature];
        match self.op {
            Comparison::Gt => v > self.value,
            Comparison::Ge => v >= self.value,
            Comparison::Lt => v < self.value,
            Comparison::Le => v <= self.value,
        }
    }
}

/// A covariate stratum identified by the exact value of one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub label: String,
    pub value: f64,
    pub ratio: f64,
}

/// The covariate shift factor `p_e(x) / p_o(x)` between the trial and the
/// observational cohort, supplied by the user rather than estimated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityRatio {
    /// Both cohorts share `p(x)`.
    #[default]
    Identity,
    /// `p_e(x) ∝ p_o(x)·1[x satisfies every criterion]`; `scale` is the
    /// reciprocal of the included fraction of the reference cohort.
    InclusionIndicator { dim: usize, criteria: Vec<Criterion>, scale: f64 },
    /// Per-stratum ratios keyed by the value of `x[feature]`.
    Tabulated { dim: usize, feature: usize, strata: Vec<Stratum> },
}

impl DensityRatio {
    /// Inclusion-criteria ratio normalized so that its mean over `reference`
    /// (the observational covariates) is one.
    pub fn inclusion(criteria: Vec<Criterion>, reference: ArrayView2<'_, f64>) -> Result<Self, DataError> {
        let dim = reference.ncols();
        if let Some(c) = criteria.iter().find(|c| c.feature >= dim) {
            return Err(DataError::DomainMismatch { expected: dim, found: c.feature + 1 });
        }
        let n = reference.nrows();
        let included = reference
            .rows()
            .into_iter()
            .filter(|row| {
                let row = row.to_vec();
                criteria.iter().all(|c| c.holds(&row))
            })
            .count();
        if included == 0 {
            return Err(DataError::NoIncludedUnits);
        }
        Ok(DensityRatio::InclusionIndicator { dim, criteria, scale: n as f64 / included as f64 })
    }

    pub fn tabulated(dim: usize, feature: usize, strata: Vec<Stratum>) -> Result<Self, DataError> {
        if feature >= dim {
            return Err(DataError::DomainMismatch { expected: dim, found: feature + 1 });
        }
        if let Some(s) = strata.iter().find(|s| !(s.ratio >= 0.0 && s.ratio.is_finite())) {
            return Err(DataError::InvalidRatio(s.ratio));
        }
        Ok(DensityRatio::Tabulated { dim, feature, strata })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DensityRatio::Identity)
    }

    /// Ratio at covariate vector `x`.
    pub fn density_ratio(&self, x: &[f64]) -> Result<f64, DataError> {
        match self {
            DensityRatio::Identity => Ok(1.0),
            DensityRatio::InclusionIndicator { dim, criteria, scale } => {
                check_dim(*dim, x)?;
                Ok(if criteria.iter().all(|c| c.holds(x)) { *scale } else { 0.0 })
            }
            DensityRatio::Tabulated { dim, feature, strata } => {
                check_dim(*dim, x)?;
                let v = x[*feature];
                strata
                    .iter()
                    .find(|s| s.value == v)
                    .map(|s| s.ratio)
                    .ok_or(DataError::UnknownStratum(v))
            }
        }
    }

    /// Ratios for every row of `x`.
    pub fn evaluate(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, DataError> {
        if self.is_identity() {
            return Ok(vec![1.0; x.nrows()]);
        }
        x.rows().into_iter().map(|row| self.density_ratio(&row.to_vec())).collect()
    }
}

pub fn density_ratio(dr: &DensityRatio, x: &[f64]) -> Result<f64, DataError> {
    dr.density_ratio(x)
}

fn check_dim(dim: usize, x: &[f64]) -> Result<(), DataError> {
    if x.len() == dim {
        Ok(())
    } else {
        Err(DataError::DomainMismatch { expected: dim, found: x.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identity_is_one() {
        assert_eq!(DensityRatio::Identity.density_ratio(&[3.0, -1.0]).unwrap(), 1.0);
        assert_eq!(DensityRatio::Identity.density_ratio(&[]).unwrap(), 1.0);
    }

    #[test]
    fn half_included_gives_two() {
        let x = Array2::from_shape_vec((4, 1), vec![-1.0, 0.5, 2.0, -0.3]).unwrap();
        let dr = DensityRatio::inclusion(vec![Criterion::new(0, Comparison::Gt, 0.0)], x.view()).unwrap();
        assert_eq!(dr.density_ratio(&[0.5]).unwrap(), 2.0);
        assert_eq!(dr.density_ratio(&[-0.5]).unwrap(), 0.0);
        let mean: f64 = dr.evaluate(x.view()).unwrap().iter().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_lookup() {
        let dr = DensityRatio::tabulated(
            2,
            1,
            vec![
                Stratum { label: "A".into(), value: 0.0, ratio: 0.5 },
                Stratum { label: "B".into(), value: 1.0, ratio: 1.5 },
            ],
        )
        .unwrap();
        assert_eq!(dr.density_ratio(&[9.0, 0.0]).unwrap(), 0.5);
        assert_eq!(dr.density_ratio(&[9.0, 1.0]).unwrap(), 1.5);
        assert!(matches!(dr.density_ratio(&[9.0, 2.0]), Err(DataError::UnknownStratum(_))));
        assert!(matches!(dr.density_ratio(&[1.0]), Err(DataError::DomainMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn nobody_included_is_an_error() {
        let x = Array2::from_shape_vec((2, 1), vec![-1.0, -2.0]).unwrap();
        let r = DensityRatio::inclusion(vec![Criterion::new(0, Comparison::Gt, 0.0)], x.view());
        assert!(matches!(r, Err(DataError::NoIncludedUnits)));
    }
}
