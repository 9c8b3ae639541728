pub mod conformance;
pub mod error;
pub mod exactdens;
pub mod expand;
pub mod montecarlo;
pub mod qmodel;
mod quad;
mod roots;
pub mod saddle;
pub mod tailcalc;

pub use error::{Error, Result};
pub use qmodel::QLaw;
pub use saddle::{psi, psi_prime, solve_saddle, SaddlePoint};
pub use tailcalc::{
    debruijn_log_density, legendre, legendre_exponent, phi, tail_estimate, LegendrePoint,
    TailEstimate,
};
pub use expand::{
    example4_expansions, logdensity_expansion_k3, salpha_expansion_k5, salpha_series,
    stirling_first_unsigned, verv_expansion, Example4Expansion, ExpansionResult, StirlingTable,
};
pub use exactdens::{asymp1_ratio, build_density_grid, exact_log_tail_z, DensityGrid};
pub use montecarlo::{empirical_mgf, gamma_case_validate, sample_perpetuity, SimConfig, SimSummary};
pub use conformance::{Conformance, CriterionOutcome, Expectations, Report};
