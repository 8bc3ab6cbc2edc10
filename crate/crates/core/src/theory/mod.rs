//! Cost regimes of lazy verification and information-theoretic error bounds.

mod bound;
mod regimes;

pub use bound::{
    bayes_error_bits_bound, channel_bound_reports, estimate_epsilon, hellman_raviv_report, total_variation,
    write_bound_reports, BoundReport, ConceptChannelModel, EpsilonEstimate, DEFAULT_BINS, EXACT_MAX_CONCEPTS, KL_FLOOR,
};
pub use regimes::{
    exact_expected_cost, expected_cost_bound, regime_classify, simulate_regimes, Regime, RegimeClass, RegimeParams,
    RegimeRow, RegimeTable, BALANCE_TOLERANCE,
};
