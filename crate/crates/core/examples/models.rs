//! The learners underneath the surrogates: weighted Lasso, logistic
//! regression, CART, random forests and gradient boosting.
//!
//!     cargo run --release --example models

use ndarray::{Array1, Array2};
use plugin_surrogates::data::make_rng;
use plugin_surrogates::models::{fit_forest, fit_gbm, fit_linear, fit_logistic, fit_tree, ForestParams, GbmParams, Regressor, TreeParams};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = make_rng(5, 0).rng();
    let (n, p) = (2_000, 4);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let y: Array1<f64> = x.rows().into_iter().map(|r| 2.0 * r[0] - r[1] + (2.0 * r[2]).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let (train, test) = (0..1_500, 1_500..n);
    let rows = |r: std::ops::Range<usize>| x.slice(ndarray::s![r, ..]);
    let ys = |r: std::ops::Range<usize>| y.slice(ndarray::s![r]);
    let mse = |pred: Array1<f64>| (&pred - &ys(test.clone())).mapv(|e| e * e).mean().unwrap_or(f64::NAN);

    for lambda in [0.0, 0.05, 0.5] {
        let m = fit_linear(rows(train.clone()), ys(train.clone()), None, lambda)?;
        println!("lasso {lambda:<4}: coefficients {:.3}, test MSE {:.3}", m.coefficients, mse(m.predict(rows(test.clone()))?));
    }
    let tree = fit_tree(rows(train.clone()), ys(train.clone()), None, &TreeParams::with_depth(5))?;
    println!("tree depth 5: {} nodes, test MSE {:.3}", tree.nodes.len(), mse(tree.predict(rows(test.clone()))?));
    let forest = fit_forest(rows(train.clone()), ys(train.clone()), &ForestParams::default(), make_rng(5, 1))?;
    println!("forest: {} trees, test MSE {:.3}", forest.trees.len(), mse(forest.predict(rows(test.clone()))?));
    let (gbm, trace) = fit_gbm(rows(train.clone()), ys(train.clone()), None, &GbmParams::default(), make_rng(5, 2))?;
    println!("boosting: {} trees kept of {}, test MSE {:.3}", gbm.trees.len(), trace.train_loss.len(), mse(gbm.predict(rows(test.clone()))?));

    let labels: Vec<u8> = y.iter().map(|&v| u8::from(v > 0.0)).collect();
    let logit = fit_logistic(x.view(), &labels, 1.0)?;
    let acc = x.rows().into_iter().zip(&labels).filter(|(r, &l)| (logit.probability(r.as_slice().unwrap()) > 0.5) == (l == 1)).count();
    println!("logistic: coefficients {:.3}, accuracy {:.3}", logit.coefficients, acc as f64 / n as f64);
    Ok(())
}
