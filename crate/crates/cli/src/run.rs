//! Subcommand runners. Every output depends only on the resolved config.

use bismooth::attack::{apply_attack, craft_injection, empirical_accuracy};
use bismooth::cert::{CertConfig, CertMode};
use bismooth::graph::{
    load_interaction_dataset, load_node_classification_dataset, read_split, write_node_classification_dataset,
    write_split, DataSplit, Graph, PerturbationBudget,
};
use bismooth::models::{train_with_noise, write_model};
use bismooth::pipeline::{
    average_certified_radius, certified_accuracy_curve, collect_votes_evasion, collect_votes_poisoning, write_json_g17,
    write_report, CertCurve, VoteTable,
};
use bismooth::recsys::{certified_precision_curve, collect_item_votes, write_recsys_report};
use bismooth::smoothing::{derive_sample_seed, SmoothingParams};
use serde_json::{json, Value};
use std::fs;

use crate::config::{CommandName, GraphInputs, RunConfig};
use crate::CliError;

const SPLIT_SALT: u64 = 0x5b11_7000_0000_0001;
const ATTACK_SALT: u64 = 0xa77a_c4ed_5eed_0001;
const TRAIN_PER_CLASS: usize = 20;
const VAL_PER_CLASS: usize = 20;

/// Runs the configured command and returns the stdout summary.
pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.out.display())))?;
    match cfg.command {
        CommandName::GenSynth => gen_synth(cfg),
        CommandName::CertifyEvasion | CommandName::CertifyPoison => certify_graph(cfg),
        CommandName::CertifyRecsys => certify_recsys(cfg),
        CommandName::EmpiricalAttack => empirical_attack(cfg),
    }
}

fn params(cfg: &RunConfig) -> Result<SmoothingParams, CliError> {
    let p = SmoothingParams::new(cfg.p_e, cfg.p_n)?;
    if cfg.command != CommandName::GenSynth {
        p.validate_for_certification()?;
    }
    Ok(p)
}

fn metadata(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn progress(msg: &str) {
    eprintln!("[bismooth] {msg}");
}

fn gen_synth(cfg: &RunConfig) -> Result<Value, CliError> {
    let synth = cfg.synth.as_ref().expect("gen-synth config");
    let (graph, split) = synth.generate()?;
    let (edges, nodes, split_path) = (
        cfg.out.join("edges.tsv"),
        cfg.out.join("nodes.csv"),
        cfg.out.join("split.json"),
    );
    write_node_classification_dataset(&graph, &edges, &nodes)?;
    write_split(&split, &split_path)?;
    write_json_g17(&json!({ "metadata": metadata(cfg) }), &cfg.out.join("report.json"))?;
    progress(&format!(
        "wrote {} nodes, {} edges",
        graph.num_nodes(),
        graph.num_edges()
    ));
    Ok(json!({
        "command": "gen-synth",
        "num_nodes": graph.num_nodes(),
        "num_edges": graph.num_edges(),
        "edges": edges,
        "nodes": nodes,
        "split": split_path,
    }))
}

struct LoadedGraph {
    graph: Graph,
    split: DataSplit,
    /// Labeled test nodes.
    eval: Vec<usize>,
}

fn load_graph(cfg: &RunConfig, g: &GraphInputs) -> Result<LoadedGraph, CliError> {
    let graph = load_node_classification_dataset(&g.dataset_edges, &g.dataset_nodes)?;
    let split = match &g.split {
        Some(p) => read_split(p, graph.num_nodes())?,
        None => {
            let train_val = DataSplit::per_class(graph.labels(), TRAIN_PER_CLASS, VAL_PER_CLASS, cfg.seed ^ SPLIT_SALT);
            let mut used = vec![false; graph.num_nodes()];
            for &v in train_val.train.iter().chain(&train_val.validation) {
                used[v] = true;
            }
            let test = (0..graph.num_nodes()).filter(|&v| !used[v]).collect();
            DataSplit::new(train_val.train, train_val.validation, test, graph.num_nodes())?
        }
    };
    let eval: Vec<usize> = split
        .test
        .iter()
        .copied()
        .filter(|&v| graph.labels()[v].is_some())
        .collect();
    if eval.is_empty() {
        return Err(CliError::Runtime("the test split has no labeled nodes".into()));
    }
    progress(&format!(
        "loaded {} nodes, {} edges, {} classes; {} train / {} test",
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_classes(),
        split.train.len(),
        eval.len()
    ));
    Ok(LoadedGraph { graph, split, eval })
}

fn curves_for(
    cfg: &RunConfig,
    table: &VoteTable,
    data: &LoadedGraph,
    params: &SmoothingParams,
) -> Result<Vec<CertCurve>, CliError> {
    let config = CertConfig::new(cfg.alpha, data.graph.num_classes(), cfg.mode)?;
    let degrees = data.graph.degrees();
    let degrees = (cfg.mode == CertMode::Exclude).then_some(degrees.as_slice());
    cfg.tau
        .iter()
        .map(|&tau| {
            Ok(certified_accuracy_curve(
                table,
                data.graph.labels(),
                &data.eval,
                params,
                tau,
                &config,
                degrees,
            )?)
        })
        .collect()
}

fn curve_summary(curves: &[CertCurve]) -> Vec<Value> {
    curves
        .iter()
        .map(|c| {
            json!({
                "tau": c.tau,
                "clean_accuracy": c.clean_accuracy,
                "acr": average_certified_radius(c),
                "max_rho": c.points.last().map_or(0, |p| p.rho),
            })
        })
        .collect()
}

fn certify_graph(cfg: &RunConfig) -> Result<Value, CliError> {
    let g = cfg.graph.as_ref().expect("graph config");
    let params = params(cfg)?;
    let data = load_graph(cfg, g)?;
    let table = if cfg.command == CommandName::CertifyEvasion {
        progress("training with noise");
        let model = train_with_noise(&g.model, &data.graph, &data.split, &params)?;
        if let Some(p) = &g.save_model {
            write_model(&model, p)?;
        }
        progress(&format!("collecting {} smoothed votes", cfg.n));
        collect_votes_evasion(&model, &data.graph, cfg.n, &params, cfg.seed)?
    } else {
        progress(&format!(
            "training {} models on smoothed graphs ({} mode)",
            cfg.n, cfg.mode
        ));
        collect_votes_poisoning(&g.model, &data.graph, &data.split, cfg.n, &params, cfg.mode, cfg.seed)?
    };
    let curves = curves_for(cfg, &table, &data, &params)?;
    write_report(&curves, &metadata(cfg), &cfg.out)?;
    Ok(json!({
        "command": cfg.command,
        "report": cfg.out.join("report.json"),
        "curves": curve_summary(&curves),
    }))
}

fn certify_recsys(cfg: &RunConfig) -> Result<Value, CliError> {
    let r = cfg.recsys.as_ref().expect("recsys config");
    let params = params(cfg)?;
    let data = load_interaction_dataset(&r.ratings, r.split_fraction)?;
    let users: Vec<usize> = (0..data.train.num_users())
        .filter(|&u| !data.held_out[u].is_empty())
        .collect();
    if users.is_empty() {
        return Err(CliError::Runtime("no user has held-out items".into()));
    }
    progress(&format!(
        "loaded {} users, {} items, {} ratings; {} users evaluated",
        data.train.num_users(),
        data.train.num_items(),
        data.num_records,
        users.len()
    ));
    progress(&format!("collecting {} smoothed recommendation lists", cfg.n));
    let table = collect_item_votes(&data.train, cfg.n, &params, r.k_prime, cfg.seed)?;
    let degrees = data.train.degrees();
    let curves = cfg
        .tau
        .iter()
        .map(|&tau| {
            certified_precision_curve(
                &table,
                &data.held_out,
                &users,
                &degrees,
                r.k,
                &params,
                tau,
                cfg.alpha,
                r.form,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_recsys_report(&curves, &metadata(cfg), &cfg.out)?;
    let summary: Vec<Value> = curves
        .iter()
        .map(|c| {
            json!({
                "tau": c.tau,
                "clean_precision": c.clean_precision,
                "clean_recall": c.clean_recall,
                "max_rho": c.points.iter().filter(|p| p.certified_precision > 0.0).map(|p| p.rho).max(),
            })
        })
        .collect();
    Ok(json!({
        "command": cfg.command,
        "report": cfg.out.join("report.json"),
        "curves": summary,
    }))
}

fn certified_at(curve: &CertCurve, rho: u32) -> f64 {
    curve
        .points
        .iter()
        .find(|p| p.rho == rho)
        .map_or(0.0, |p| p.certified_accuracy)
}

fn empirical_attack(cfg: &RunConfig) -> Result<Value, CliError> {
    let g = cfg.graph.as_ref().expect("graph config");
    let a = cfg.attack.as_ref().expect("attack config");
    let params = params(cfg)?;
    let data = load_graph(cfg, g)?;
    progress("training with noise");
    let model = train_with_noise(&g.model, &data.graph, &data.split, &params)?;
    progress(&format!("collecting {} smoothed votes on the clean graph", cfg.n));
    let clean = collect_votes_evasion(&model, &data.graph, cfg.n, &params, cfg.seed)?;
    let curves = curves_for(cfg, &clean, &data, &params)?;
    write_report(&curves, &metadata(cfg), &cfg.out)?;

    let mut rows = Vec::new();
    let mut attack_index = 0;
    for curve in &curves {
        for &rho in &a.rho {
            let budget = PerturbationBudget::new(rho, curve.tau)?;
            let plan = craft_injection(
                &data.graph,
                &budget,
                a.strategy,
                Some(&data.eval),
                derive_sample_seed(cfg.seed ^ ATTACK_SALT, attack_index),
            )?;
            attack_index += 1;
            let plan_name = format!("plan_tau{}_rho{}.json", curve.tau, rho);
            write_json_g17(
                &serde_json::to_value(&plan).expect("plan serializes"),
                &cfg.out.join(&plan_name),
            )?;
            let attacked_graph = apply_attack(&data.graph, &plan)?;
            progress(&format!("attack tau={} rho={}: collecting votes", curve.tau, rho));
            let attacked = collect_votes_evasion(&model, &attacked_graph, cfg.n, &params, cfg.seed)?;
            let (clean_acc, attacked_acc) = empirical_accuracy(&clean, &attacked, data.graph.labels(), &data.eval)?;
            rows.push(json!({
                "tau": curve.tau,
                "rho": rho,
                "strategy": a.strategy,
                "clean_accuracy": clean_acc,
                "attacked_accuracy": attacked_acc,
                "certified_accuracy": certified_at(curve, rho),
                "plan": plan_name,
            }));
        }
    }
    let sound = rows
        .iter()
        .all(|r| r["attacked_accuracy"].as_f64() >= r["certified_accuracy"].as_f64());
    let report = json!({ "metadata": metadata(cfg), "attacks": rows.clone(), "sound": sound });
    write_json_g17(&report, &cfg.out.join("attack_report.json"))?;
    Ok(json!({
        "command": cfg.command,
        "report": cfg.out.join("attack_report.json"),
        "attacks": rows,
        "sound": sound,
    }))
}
