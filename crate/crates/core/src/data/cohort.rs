use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::DataError;

/// Which population a cohort was drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    #[default]
    Observational,
    Experimental,
}

/// Role-tagged rectangular data: pre-treatment covariates `x` (n×k), an
/// optional binary treatment `t`, post-treatment surrogates `s` (n×d) and an
/// optional primary outcome `y`.
///
/// `t` or `y` may be absent as a whole, which models the two observational
/// sources the learners consume: treatment data `(x, t, s)` and outcome data
/// `(x, s, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub n: usize,
    pub x: Array2<f64>,
    pub t: Option<Vec<u8>>,
    pub s: Array2<f64>,
    pub y: Option<Array1<f64>>,
    pub population: Population,
    pub x_names: Vec<String>,
    pub s_names: Vec<String>,
}

impl Cohort {
    /// Builds a cohort with default column names and validates it.
    pub fn new(
        x: Array2<f64>,
        t: Option<Vec<u8>>,
        s: Array2<f64>,
        y: Option<Array1<f64>>,
        population: Population,
    ) -> Result<Self, DataError> {
        let x_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        let s_names = (0..s.ncols()).map(|j| format!("s{j}")).collect();
        let cohort = Cohort { n: s.nrows(), x, t, s, y, population, x_names, s_names };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn with_names(mut self, x_names: Vec<String>, s_names: Vec<String>) -> Result<Self, DataError> {
        self.x_names = x_names;
        self.s_names = s_names;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        validate_cohort(self)
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.s.ncols()
    }

    pub fn treatment(&self) -> Result<&[u8], DataError> {
        self.t.as_deref().ok_or(DataError::MissingColumn("t"))
    }

    pub fn outcome(&self) -> Result<ArrayView1<'_, f64>, DataError> {
        self.y.as_ref().map(|y| y.view()).ok_or(DataError::MissingColumn("y"))
    }

    /// `[x | s]`, the input layout of the surrogate index.
    pub fn xs(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.x.view(), self.s.view()]).expect("row counts agree")
    }

    /// Indices of units in arm `arm`.
    pub fn arm_indices(&self, arm: u8) -> Result<Vec<usize>, DataError> {
        Ok(self
            .treatment()?
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| (t == arm).then_some(i))
            .collect())
    }

    /// Rows `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Cohort {
        Cohort {
            n: idx.len(),
            x: self.x.select(Axis(0), idx),
            t: self.t.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
            s: self.s.select(Axis(0), idx),
            y: self.y.as_ref().map(|y| y.select(Axis(0), idx)),
            population: self.population,
            x_names: self.x_names.clone(),
            s_names: self.s_names.clone(),
        }
    }

    pub fn with_population(mut self, population: Population) -> Self {
        self.population = population;
        self
    }

    /// Drops the outcome column, leaving treatment data `(x, t, s)`.
    pub fn without_outcome(&self) -> Cohort {
        Cohort { y: None, ..self.clone() }
    }

    /// Drops the treatment column, leaving outcome data `(x, s, y)`.
    pub fn without_treatment(&self) -> Cohort {
        Cohort { t: None, ..self.clone() }
    }
}

pub fn validate_cohort(c: &Cohort) -> Result<(), DataError> {
    if c.n == 0 {
        return Err(DataError::EmptyCohort);
    }
    let check = |column: &'static str, len: usize| {
        if len == c.n {
            Ok(())
        } else {
            Err(DataError::ShapeMismatch { column, expected: c.n, found: len })
        }
    };
    check("x", c.x.nrows())?;
    check("s", c.s.nrows())?;
    if let Some(t) = &c.t {
        check("t", t.len())?;
        if let Some((index, &value)) = t.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(DataError::NonBinaryTreatment { index, value: value as f64 });
        }
    }
    if let Some(y) = &c.y {
        check("y", y.len())?;
    }
    if c.s.ncols() == 0 {
        return Err(DataError::NoSurrogates);
    }
    if c.x_names.len() != c.x.ncols() {
        return Err(DataError::ShapeMismatch { column: "x_names", expected: c.x.ncols(), found: c.x_names.len() });
    }
    if c.s_names.len() != c.s.ncols() {
        return Err(DataError::ShapeMismatch { column: "s_names", expected: c.s.ncols(), found: c.s_names.len() });
    }
    Ok(())
}

/// Converts a real-valued treatment column into `{0,1}` codes.
pub fn binary_treatment(values: ArrayView1<'_, f64>) -> Result<Vec<u8>, DataError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(DataError::NonBinaryTreatment { index, value: v })
            }
        })
        .collect()
}

/// Simulated potential outcomes for a synthetic cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub s0: Array2<f64>,
    pub s1: Array2<f64>,
    pub y0: Array1<f64>,
    pub y1: Array1<f64>,
    /// τ_Y(x_i) for every unit.
    pub cate: Array1<f64>,
    /// Sample mean of `y1 - y0`.
    pub ate: f64,
    /// Population ATE, when the generator knows it in closed form.
    pub population_ate: Option<f64>,
}

impl ScenarioTruth {
    pub fn n(&self) -> usize {
        self.y0.len()
    }

    pub fn subset(&self, idx: &[usize]) -> ScenarioTruth {
        let y0 = self.y0.select(Axis(0), idx);
        let y1 = self.y1.select(Axis(0), idx);
        let ate = mean_contrast(y1.view(), y0.view());
        ScenarioTruth {
            s0: self.s0.select(Axis(0), idx),
            s1: self.s1.select(Axis(0), idx),
            y0,
            y1,
            cate: self.cate.select(Axis(0), idx),
            ate,
            population_ate: self.population_ate,
        }
    }

    /// Surrogate potential outcomes as views, `(s0, s1)`.
    pub fn surrogate_arms(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        (self.s0.view(), self.s1.view())
    }
}

pub(crate) fn mean_contrast(y1: ArrayView1<'_, f64>, y0: ArrayView1<'_, f64>) -> f64 {
    let n = y1.len() as f64;
    y1.iter().zip(y0.iter()).map(|(a, b)| a - b).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn cohort(n: usize) -> Cohort {
        let x = Array::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let s = Array::from_shape_fn((n, 3), |(i, j)| (i + j) as f64 * 0.5);
        let t = (0..n).map(|i| (i % 2) as u8).collect();
        let y = Array1::from_iter((0..n).map(|i| i as f64));
        Cohort::new(x, Some(t), s, Some(y), Population::Observational).unwrap()
    }

    #[test]
    fn valid_cohort_passes() {
        let c = cohort(10);
        assert_eq!((c.n, c.k(), c.d()), (10, 2, 3));
        assert!(validate_cohort(&c).is_ok());
    }

    #[test]
    fn treatment_outside_binary_rejected() {
        let mut c = cohort(10);
        c.t.as_mut().unwrap()[3] = 2;
        assert!(matches!(validate_cohort(&c), Err(DataError::NonBinaryTreatment { index: 3, .. })));
        assert!(matches!(
            binary_treatment(ndarray::array![0.0, 1.0, 0.5].view()),
            Err(DataError::NonBinaryTreatment { index: 2, .. })
        ));
    }

    #[test]
    fn short_outcome_is_shape_mismatch() {
        let mut c = cohort(10);
        c.y = Some(Array1::zeros(9));
        assert!(matches!(
            validate_cohort(&c),
            Err(DataError::ShapeMismatch { column: "y", expected: 10, found: 9 })
        ));
    }

    #[test]
    fn empty_cohort_rejected() {
        let r = Cohort::new(Array2::zeros((0, 1)), None, Array2::zeros((0, 1)), None, Population::Observational);
        assert!(matches!(r, Err(DataError::EmptyCohort)));
    }

    #[test]
    fn zero_covariates_allowed() {
        let c = Cohort::new(Array2::zeros((4, 0)), None, Array2::ones((4, 1)), None, Population::Experimental);
        assert!(c.is_ok());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut c = cohort(6);
        c.s[[2, 1]] = 0.1 + 0.2;
        c.y.as_mut().unwrap()[0] = std::f64::consts::PI / 7.0;
        let text = serde_json::to_string(&c).unwrap();
        let back: Cohort = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
