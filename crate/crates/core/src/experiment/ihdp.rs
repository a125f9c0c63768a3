//! An IHDP-shaped stand-in: the column names and roles of the infant health
//! trial file with simulated values and a planted effect.
//!
//! The trial data are not redistributable, so this generator exists to drive
//! the external-data path end to end. Treatment is randomized (about a third
//! treated), the effect on IQ at 36 months runs entirely through the Bayley
//! mental development scores, and baseline covariates confound surrogates and
//! outcome. Text columns (`Site_name`, `Maternal_race`, ...) and a few missing
//! surrogate cells mimic the raw file.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ingest::RoleMap;
use crate::data::{DataError, RandomSource, StreamRng};

/// Effect of treatment on the 36-month IQ score in the reference analysis.
pub const IHDP_PLANTED_ATE: f64 = 6.47;

pub const IHDP_TREATMENT: &str = "Treatment_group";
pub const IHDP_OUTCOME: &str = "Stanford_binet_IQ_36m";

pub const IHDP_BASELINE: [&str; 16] = [
    "Birth_weight_gm_baseline",
    "Infant_sex_baseline",
    "Maternal_age_birth_baseline",
    "Maternal_education_baseline",
    "BLACK",
    "HISPANIC",
    "Neonatal_health_index_by_BW_baseline",
    "Analysis_gestational_age_weeks_baseline",
    "SGA_based_on_ANGA_BW_baseline",
    "SGA_based_on_ANGA_birth_length_baseline",
    "SGA_based_on_ANGA_birth_head_circ_baseline",
    "Birth_order_baseline",
    "Marital_status_birth_baseline",
    "Head_circ_birth_cm_baseline",
    "Infant_length_at_birth_baseline",
    "BMI_at_birth_baseline",
];

const AGES: [&str; 6] = ["40w", "4m", "8m", "12m", "18m", "24m"];

/// Anthropometrics at every visit, Bayley scales at 12 and 24 months.
pub fn ihdp_surrogates() -> Vec<String> {
    let mut out = Vec::new();
    for age in AGES {
        for m in ["Infant_weight", "Infant_length", "BMI"] {
            out.push(format!("{m}_{age}"));
        }
        if age == "12m" || age == "24m" {
            out.push(format!("Bayley_MDI_{age}"));
            out.push(format!("Bayley_PDI_{age}"));
        }
    }
    out
}

/// Roles for the IHDP columns, restricted to complete cases.
pub fn ihdp_role_map() -> RoleMap {
    RoleMap {
        x: IHDP_BASELINE.iter().map(|s| s.to_string()).collect(),
        s: ihdp_surrogates(),
        t: Some(IHDP_TREATMENT.into()),
        y: Some(IHDP_OUTCOME.into()),
        complete_cases: true,
    }
}

const SITES: [&str; 8] = ["Arkansas", "Einstein", "Harvard", "Miami", "Penn", "Stanford", "Washington", "Yale"];

/// Bayley MDI shifts at 12 and 24 months and their IQ loadings; the
/// products sum to [`IHDP_PLANTED_ATE`].
const MDI_SHIFT: [f64; 2] = [5.0, 9.0];
const MDI_LOADING: [f64; 2] = [0.304, 0.55];

/// Writes `n` simulated rows (plus the header) in the IHDP column layout.
/// About `missing` of the rows lose one surrogate cell.
pub fn write_ihdp_like_csv<W: Write>(n: usize, missing: f64, source: RandomSource, writer: W) -> Result<(), DataError> {
    debug_assert!((MDI_SHIFT[0] * MDI_LOADING[0] + MDI_SHIFT[1] * MDI_LOADING[1] - IHDP_PLANTED_ATE).abs() < 1e-12);
    let mut rng = source.rng();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let z = |rng: &mut StreamRng| -> f64 { std.sample(rng) };
    let surrogates = ihdp_surrogates();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["IHDP_Number", "Site_name", IHDP_TREATMENT, "Birth_weight_group", "Maternal_race"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(IHDP_BASELINE.iter().map(|s| s.to_string()));
    header.extend(surrogates.iter().cloned());
    header.push(IHDP_OUTCOME.into());
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;

    for id in 0..n {
        let t = u8::from(rng.random::<f64>() < 0.35);
        let gest = (33.0 + 2.5 * z(&mut rng)).clamp(24.0, 37.0);
        let bw = (1800.0 + 120.0 * (gest - 33.0) + 250.0 * z(&mut rng)).clamp(600.0, 2500.0);
        let sex = 1 + u8::from(rng.random::<f64>() < 0.5);
        let race_draw: f64 = rng.random();
        let (black, hispanic, race) = if race_draw < 0.52 {
            (1.0, 0.0, "Black")
        } else if race_draw < 0.63 {
            (0.0, 1.0, "Hispanic")
        } else {
            (0.0, 0.0, "White/Other")
        };
        let education = (1.0 + (rng.random::<f64>() * 5.0).floor()).min(5.0);
        let mat_age = (24.5 + 6.0 * z(&mut rng)).clamp(14.0, 45.0);
        let neonatal = 100.0 + 0.01 * (bw - 1800.0) + 12.0 * z(&mut rng);
        let sga = |rng: &mut StreamRng| f64::from(u8::from(rng.random::<f64>() < 0.2));
        let sga_bw = sga(&mut rng);
        let sga_len = sga(&mut rng);
        let sga_head = sga(&mut rng);
        let order = 1.0 + (rng.random::<f64>() * 3.0).floor();
        let marital = 1.0 + (rng.random::<f64>() * 4.0).floor();
        let head = 28.0 + 0.002 * (bw - 1800.0) + 1.2 * z(&mut rng);
        let length = 41.0 + 0.004 * (bw - 1800.0) + 1.5 * z(&mut rng);
        let bmi = bw / 1000.0 / (length / 100.0).powi(2);

        // Socioeconomic and birth-size indices that drive both S and Y.
        let ses = 0.8 * (education - 3.0) - 0.6 * black + 0.2 * (mat_age - 24.5) / 6.0;
        let size = (bw - 1800.0) / 400.0;
        let tf = f64::from(t);

        let mut s = Vec::with_capacity(surrogates.len());
        let mut mdi = [0.0; 2];
        for (a, age) in AGES.iter().enumerate() {
            let months = [0.0, 4.0, 8.0, 12.0, 18.0, 24.0][a];
            let weight = 2800.0 + 420.0 * months + 300.0 * size + 40.0 * tf + 250.0 * z(&mut rng);
            let len = 47.0 + 1.4 * months + 1.5 * size + 0.2 * tf + 1.5 * z(&mut rng);
            s.push(weight);
            s.push(len);
            s.push(weight / 1000.0 / (len / 100.0).powi(2));
            if *age == "12m" || *age == "24m" {
                let k = usize::from(*age == "24m");
                let m = 92.0 + 4.0 * ses + 3.0 * size + MDI_SHIFT[k] * tf + 9.0 * z(&mut rng);
                let p = 90.0 + 2.0 * ses + 4.0 * size + 3.0 * tf + 10.0 * z(&mut rng);
                mdi[k] = m;
                s.push(m);
                s.push(p);
            }
        }
        let y = 20.0 + MDI_LOADING[0] * mdi[0] + MDI_LOADING[1] * mdi[1] + 3.5 * ses + 1.5 * size + 8.0 * z(&mut rng);

        let mut row: Vec<String> = vec![
            format!("{}", 1001 + id),
            SITES[rng.random_range(0..SITES.len())].into(),
            t.to_string(),
            if bw <= 2000.0 { "Lighter" } else { "Heavier" }.into(),
            race.into(),
        ];
        let x = [
            bw, f64::from(sex), mat_age, education, black, hispanic, neonatal, gest, sga_bw, sga_len, sga_head, order, marital, head,
            length, bmi,
        ];
        row.extend(x.iter().map(|v| v.to_string()));
        let hole = (rng.random::<f64>() < missing).then(|| rng.random_range(0..s.len()));
        row.extend(s.iter().enumerate().map(|(j, v)| if hole == Some(j) { String::new() } else { v.to_string() }));
        row.push(y.to_string());
        w.write_record(&row).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}
