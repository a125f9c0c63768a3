//! Exact enumeration on small discrete models: surrogate risk, its upper
//! bounds, weighted minimizers that recover the ATE and a surrogate that
//! matches the ATE while missing the CATE.
//!
//!     cargo run --release --example oracle_identities

use plugin_surrogates::data::make_rng;
use plugin_surrogates::oracle::{
    ate_matching_surrogate, exact_effects, exact_risk, exact_weighted_minimizer, risk_bound, surrogate_ate, weighted_contrasts,
    DiscreteScm, RandomModelSpec, WeightKind, WeightScheme,
};
use plugin_surrogates::scm::CaseId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for case in [CaseId::A, CaseId::B, CaseId::C, CaseId::D] {
        let m = DiscreteScm::random(&RandomModelSpec::new(case), make_rng(1, case as u64))?;
        let effects = exact_effects(&m)?;
        println!("case {}: {} x levels, {} s levels, ATE {:.4}", case.letter(), m.n_x(), m.n_s(), effects.tau_y);

        for kind in [WeightKind::Uniform, WeightKind::Wplus, WeightKind::W1, WeightKind::PxOverPxs] {
            let scheme = WeightScheme::new(kind);
            let f = exact_weighted_minimizer(&m, &scheme)?;
            println!(
                "  {kind:?}: ATE {:+.4}, risk {:.4}, w2 bound {:.4}",
                surrogate_ate(&m, &f)?,
                exact_risk(&m, &f)?,
                risk_bound(&m, &f, &WeightScheme::new(WeightKind::W2))?
            );
        }

        let delta = weighted_contrasts(&m)?;
        if let Ok((j, alpha)) = ate_matching_surrogate(effects.tau_y, &delta, 0.05) {
            let f = m.tabulate(|s| alpha * s[j]);
            println!("  {alpha:.3} * s[{j}] matches the ATE ({:.4}) with CATE risk {:.4}", surrogate_ate(&m, &f)?, exact_risk(&m, &f)?);
        }
    }
    Ok(())
}
