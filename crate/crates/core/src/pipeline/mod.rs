//! Monte-Carlo voting under evasion and poisoning, certified accuracy curves
//! and report output.

mod curve;
mod report;
mod votes;

pub use curve::{average_certified_radius, certified_accuracy_curve, rho_grid_cutoff, CertCurve, CurvePoint};
pub use report::{read_curve_csv, to_json_g17, write_curve_csv, write_json_g17, write_report};
pub use votes::{
    collect_votes_evasion, collect_votes_evasion_range, collect_votes_poisoning, collect_votes_poisoning_range, Threat,
    VoteProvenance, VoteTable,
};
