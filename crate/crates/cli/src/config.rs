//! Command-line flags, the optional JSON config file, and their resolution
//! into a validated run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use bismooth::attack::Strategy;
use bismooth::cert::CertMode;
use bismooth::graph::SbmConfig;
use bismooth::models::{ClassifierSpec, ModelKind};
use bismooth::recsys::InequalityForm;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bismooth",
    version,
    about = "Certified robustness of graph classifiers and recommenders against node injection",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-partition graph, its features and a split.
    GenSynth(SynthArgs),
    /// Certify a noise-trained classifier against test-time injection.
    CertifyEvasion(GraphCommandArgs),
    /// Certify classifiers retrained on every sample against training-time injection.
    CertifyPoison(GraphCommandArgs),
    /// Certify the item-similarity recommender's top-K overlap with held-out items.
    CertifyRecsys(RecsysArgs),
    /// Run heuristic injections and compare accuracy with the certificate.
    EmpiricalAttack(AttackArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Edge deletion probability.
    #[arg(long = "p-e")]
    pub p_e: Option<f64>,
    /// Node deletion probability.
    #[arg(long = "p-n")]
    pub p_n: Option<f64>,
    /// Edges per injected node; comma-separated for several curves.
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<u32>>,
    /// Number of Monte-Carlo samples.
    #[arg(long)]
    pub n: Option<u64>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// include or exclude (isolated nodes abstain).
    #[arg(long)]
    pub mode: Option<String>,
    /// Master seed for every random choice.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON file with default values for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct GraphArgs {
    /// Tab-separated edge list.
    #[arg(long)]
    pub dataset_edges: Option<PathBuf>,
    /// Node CSV: node_id,label,f_1..f_d.
    #[arg(long)]
    pub dataset_nodes: Option<PathBuf>,
    /// Split JSON with train/validation/test node lists.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// message_passing_2layer or feature_mlp.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Save the trained model (evasion only).
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphCommandArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub num_nodes: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Length of the class centroid added to unit noise.
    #[arg(long)]
    pub signal: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecsysArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Rating log: user, item, rating, timestamp (tab-separated).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Fraction of each user's earliest ratings used for training.
    #[arg(long)]
    pub split_fraction: Option<f64>,
    /// Items recommended by the smoothed recommender.
    #[arg(long)]
    pub k: Option<usize>,
    /// Items recommended by the base recommender per sample.
    #[arg(long)]
    pub k_prime: Option<usize>,
    /// proof or displayed inequality.
    #[arg(long)]
    pub form: Option<String>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Injected node counts; comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<u32>>,
    /// random or centroid_flip.
    #[arg(long)]
    pub strategy: Option<String>,
}

/// Values accepted in the `--config` JSON file. Keys mirror the long flags
/// with underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub p_e: Option<f64>,
    pub p_n: Option<f64>,
    pub tau: Option<Vec<u32>>,
    pub n: Option<u64>,
    pub alpha: Option<f64>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dataset_edges: Option<PathBuf>,
    pub dataset_nodes: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub model: Option<String>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub save_model: Option<PathBuf>,
    pub num_nodes: Option<usize>,
    pub classes: Option<usize>,
    pub p_in: Option<f64>,
    pub p_out: Option<f64>,
    pub feature_dim: Option<usize>,
    pub signal: Option<f64>,
    pub ratings: Option<PathBuf>,
    pub split_fraction: Option<f64>,
    pub k: Option<usize>,
    pub k_prime: Option<usize>,
    pub form: Option<String>,
    pub rho: Option<Vec<u32>>,
    pub strategy: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    GenSynth,
    CertifyEvasion,
    CertifyPoison,
    CertifyRecsys,
    EmpiricalAttack,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphInputs {
    pub dataset_edges: PathBuf,
    pub dataset_nodes: PathBuf,
    pub split: Option<PathBuf>,
    pub model: ClassifierSpec,
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecsysInputs {
    pub ratings: PathBuf,
    pub split_fraction: f64,
    pub k: usize,
    pub k_prime: usize,
    pub form: InequalityForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackInputs {
    pub rho: Vec<u32>,
    pub strategy: Strategy,
}

/// Fully resolved configuration; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub p_e: f64,
    pub p_n: f64,
    pub tau: Vec<u32>,
    pub n: u64,
    pub alpha: f64,
    pub mode: CertMode,
    pub seed: u64,
    // neither affects the results, so reports from different directories or
    // thread counts stay byte-identical
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphInputs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SbmConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recsys: Option<RecsysInputs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackInputs>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_named<T: std::str::FromStr<Err = bismooth::Error>>(s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: bismooth::Error| usage(e.to_string()))
}

fn probability(name: &str, p: f64) -> Result<f64, CliError> {
    if (0.0..1.0).contains(&p) {
        Ok(p)
    } else {
        Err(usage(format!("--{name} must lie in [0, 1), got {p}")))
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

impl RunConfig {
    /// Resolves flags, then the config file, then defaults.
    pub fn resolve(command: Command) -> Result<Self, CliError> {
        let (name, common) = match &command {
            Command::GenSynth(a) => (CommandName::GenSynth, &a.common),
            Command::CertifyEvasion(a) => (CommandName::CertifyEvasion, &a.common),
            Command::CertifyPoison(a) => (CommandName::CertifyPoison, &a.common),
            Command::CertifyRecsys(a) => (CommandName::CertifyRecsys, &a.common),
            Command::EmpiricalAttack(a) => (CommandName::EmpiricalAttack, &a.common),
        };
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let default_n = match name {
            CommandName::CertifyPoison => 1_000,
            CommandName::EmpiricalAttack => 10_000,
            _ => 100_000,
        };
        let p_e = probability("p-e", common.p_e.or(file.p_e).unwrap_or(0.0))?;
        let p_n = probability("p-n", common.p_n.or(file.p_n).unwrap_or(0.9))?;
        let tau = common.tau.clone().or(file.tau.clone()).unwrap_or_else(|| vec![5]);
        if tau.is_empty() || tau.contains(&0) {
            return Err(usage("--tau values must be at least 1"));
        }
        let n = common.n.or(file.n).unwrap_or(default_n);
        if n == 0 {
            return Err(usage("--n must be at least 1"));
        }
        let alpha = common.alpha.or(file.alpha).unwrap_or(0.01);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")));
        }
        let mode_text = common.mode.clone().or(file.mode.clone());
        let mode = match &mode_text {
            Some(m) => parse_named::<CertMode>(m)?,
            None => CertMode::Include,
        };
        let seed = common.seed.or(file.seed).unwrap_or(0);
        let out = common
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let threads = common.threads.or(file.threads);
        if threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        if name != CommandName::GenSynth && p_e == 0.0 && p_n == 0.0 {
            return Err(usage("at least one of --p-e, --p-n must be positive"));
        }
        if mode == CertMode::Exclude && matches!(name, CommandName::CertifyEvasion | CommandName::EmpiricalAttack) {
            return Err(usage("--mode exclude applies to poisoning runs only"));
        }

        let graph_inputs = |g: &GraphArgs| -> Result<GraphInputs, CliError> {
            let defaults = ClassifierSpec::default();
            let kind = match g.model.clone().or(file.model.clone()) {
                Some(k) => parse_named::<ModelKind>(&k)?,
                None => defaults.kind,
            };
            let model = ClassifierSpec {
                kind,
                hidden_dim: g.hidden.or(file.hidden).unwrap_or(defaults.hidden_dim),
                epochs: g.epochs.or(file.epochs).unwrap_or(defaults.epochs),
                learning_rate: g.lr.or(file.lr).unwrap_or(defaults.learning_rate),
                weight_decay: g.weight_decay.or(file.weight_decay).unwrap_or(defaults.weight_decay),
                seed,
            };
            model.validate().map_err(|e| usage(e.to_string()))?;
            Ok(GraphInputs {
                dataset_edges: required(g.dataset_edges.clone().or(file.dataset_edges.clone()), "dataset-edges")?,
                dataset_nodes: required(g.dataset_nodes.clone().or(file.dataset_nodes.clone()), "dataset-nodes")?,
                split: g.split.clone().or(file.split.clone()),
                model,
                save_model: g.save_model.clone().or(file.save_model.clone()),
            })
        };

        let mut cfg = RunConfig {
            command: name,
            p_e,
            p_n,
            tau,
            n,
            alpha,
            mode,
            seed,
            out,
            threads,
            graph: None,
            synth: None,
            recsys: None,
            attack: None,
        };
        match &command {
            Command::GenSynth(a) => {
                let d = SbmConfig::default();
                let synth = SbmConfig {
                    num_nodes: a.num_nodes.or(file.num_nodes).unwrap_or(d.num_nodes),
                    num_classes: a.classes.or(file.classes).unwrap_or(d.num_classes),
                    p_in: a.p_in.or(file.p_in).unwrap_or(d.p_in),
                    p_out: a.p_out.or(file.p_out).unwrap_or(d.p_out),
                    feature_dim: a.feature_dim.or(file.feature_dim).unwrap_or(d.feature_dim),
                    signal: a.signal.or(file.signal).unwrap_or(d.signal),
                    seed,
                };
                cfg.synth = Some(synth);
            }
            Command::CertifyEvasion(a) | Command::CertifyPoison(a) => {
                cfg.graph = Some(graph_inputs(&a.graph)?);
            }
            Command::CertifyRecsys(a) => {
                let k = a.k.or(file.k).unwrap_or(10);
                let k_prime = a.k_prime.or(file.k_prime).unwrap_or(k);
                if k == 0 || k > k_prime {
                    return Err(usage(format!("need 1 <= --k <= --k-prime, got {k} and {k_prime}")));
                }
                let split_fraction = a.split_fraction.or(file.split_fraction).unwrap_or(0.85);
                if !(split_fraction > 0.0 && split_fraction <= 1.0) {
                    return Err(usage("--split-fraction must lie in (0, 1]"));
                }
                let form = match a.form.clone().or(file.form.clone()) {
                    Some(f) => parse_named::<InequalityForm>(&f)?,
                    None => InequalityForm::Proof,
                };
                if mode_text.is_none() {
                    // isolated users always abstain in the recommender
                    cfg.mode = CertMode::Exclude;
                }
                cfg.recsys = Some(RecsysInputs {
                    ratings: required(a.ratings.clone().or(file.ratings.clone()), "ratings")?,
                    split_fraction,
                    k,
                    k_prime,
                    form,
                });
            }
            Command::EmpiricalAttack(a) => {
                cfg.graph = Some(graph_inputs(&a.graph)?);
                let strategy = match a.strategy.clone().or(file.strategy.clone()) {
                    Some(s) => parse_named::<Strategy>(&s)?,
                    None => Strategy::CentroidFlip,
                };
                cfg.attack = Some(AttackInputs {
                    rho: a.rho.clone().or(file.rho.clone()).unwrap_or_else(|| vec![1, 5, 10]),
                    strategy,
                });
            }
        }
        Ok(cfg)
    }
}
