//! Certification mathematics: closed-form margins, the generic worst-case
//! region solver used to cross-check them, and Monte-Carlo confidence bounds.

mod bounds;
mod decision;
mod margins;
mod regions;

pub use bounds::{
    abstain_test, beta_quantile, binomial_test_p_value, clopper_pearson_lower, clopper_pearson_upper, vote_bounds,
    TestOutcome,
};
pub use decision::{
    certify_node, max_certified_rho, CertConfig, CertDecision, CertMode, MaxRho, Outcome, PreparedNode, VoteStats,
    RHO_SCAN_CAP,
};
pub use margins::{margin_exclude, margin_include, node_retention_probs, prob_all_removed, prob_all_removed_recsys};
pub use regions::{
    exclude_region_systems, include_regions, solve_split_margin, solve_worst_case_margin, LikelihoodRegions, Region,
};
