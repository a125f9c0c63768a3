//! Sampled cohorts from discrete models agree with exact enumeration.

use plugin_surrogates::data::make_rng;
use plugin_surrogates::oracle::{exact_effects, DiscreteScm, RandomModelSpec};
use plugin_surrogates::scm::CaseId;

const N: usize = 200_000;

fn level(values: &ndarray::Array2<f64>, row: ndarray::ArrayView1<'_, f64>) -> usize {
    values.rows().into_iter().position(|v| v == row).expect("sampled value is a support point")
}

#[test]
fn sample_means_match_exact_effects() {
    for (i, case) in [CaseId::A, CaseId::B, CaseId::C, CaseId::D, CaseId::E].into_iter().enumerate() {
        let m = DiscreteScm::random(&RandomModelSpec::new(case), make_rng(11, 0).substream(i as u64)).unwrap();
        let (cohort, truth) = m.sample(N, make_rng(11, 1).substream(i as u64)).unwrap();
        let exact = exact_effects(&m).unwrap();

        let diff: Vec<f64> = truth.y1.iter().zip(&truth.y0).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / N as f64;
        let sd = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (N - 1) as f64).sqrt();
        assert!((mean - exact.tau_y).abs() < 5.0 * sd / (N as f64).sqrt() + 1e-12, "{case:?}: {mean} vs {}", exact.tau_y);
        assert_eq!(truth.population_ate, Some(exact.tau_y));

        let mut freq = vec![0.0; m.n_x()];
        for r in cohort.x.rows() {
            freq[level(&m.x_values, r)] += 1.0 / N as f64;
        }
        for (x, (&f, &p)) in freq.iter().zip(&m.p_x).enumerate() {
            let se = (p * (1.0 - p) / N as f64).sqrt();
            assert!((f - p).abs() < 5.0 * se + 1e-12, "{case:?} x={x}: {f} vs {p}");
        }
    }
}

#[test]
fn surrogate_arm_frequencies_match_the_kernel() {
    let m = DiscreteScm::random(&RandomModelSpec::new(CaseId::D), make_rng(12, 0)).unwrap();
    let (cohort, truth) = m.sample(N, make_rng(12, 1)).unwrap();
    let (nx, ns) = (m.n_x(), m.n_s());
    let mut counts = vec![[vec![0.0; ns], vec![0.0; ns]]; nx];
    let mut totals = vec![0.0; nx];
    for i in 0..N {
        let x = level(&m.x_values, cohort.x.row(i));
        totals[x] += 1.0;
        counts[x][0][level(&m.s_values, truth.s0.row(i))] += 1.0;
        counts[x][1][level(&m.s_values, truth.s1.row(i))] += 1.0;
    }
    for x in 0..nx {
        for t in 0..2 {
            for s in 0..ns {
                let p = m.p_s[[x, t, s]];
                let f = counts[x][t][s] / totals[x];
                let se = (p * (1.0 - p) / totals[x]).sqrt();
                assert!((f - p).abs() < 5.0 * se + 1e-9, "x={x} t={t} s={s}: {f} vs {p}");
            }
        }
    }
}

#[test]
fn observed_arm_follows_treatment() {
    let m = DiscreteScm::random(&RandomModelSpec::new(CaseId::C), make_rng(13, 0)).unwrap();
    let (cohort, truth) = m.sample(2_000, make_rng(13, 1)).unwrap();
    let t = cohort.treatment().unwrap();
    let y = cohort.outcome().unwrap();
    for i in 0..cohort.n {
        let (s_arm, y_arm) = if t[i] == 1 { (truth.s1.row(i), truth.y1[i]) } else { (truth.s0.row(i), truth.y0[i]) };
        assert_eq!(cohort.s.row(i), s_arm);
        assert_eq!(y[i], y_arm);
    }
}
