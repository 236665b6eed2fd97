//! Item-similarity recommender, its smoothed top-K wrapper and the
//! certificate on the overlap between recommendations and held-out items.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cert::{clopper_pearson_lower, clopper_pearson_upper, prob_all_removed_recsys, RHO_SCAN_CAP};
use crate::error::{Error, Result};
use crate::graph::{InteractionMatrix, PerturbationBudget};
use crate::numfmt::format_g17;
use crate::pipeline::write_json_g17;
use crate::smoothing::{derive_sample_seed, sample_smoothed_ratings, SmoothingParams};

/// Co-occurrence counts and Jaccard similarity between items.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSimilarityModel {
    num_items: usize,
    item_counts: Vec<u32>,
    cooccurrence: Vec<u32>,
}

impl ItemSimilarityModel {
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn item_count(&self, i: usize) -> u32 {
        self.item_counts[i]
    }

    pub fn cooccurrence(&self, i: usize, j: usize) -> u32 {
        self.cooccurrence[i * self.num_items + j]
    }

    /// `c_ij / (c_i + c_j - c_ij)`, zero when neither item was rated.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        let cij = self.cooccurrence(i, j);
        let denom = self.item_counts[i] + self.item_counts[j] - cij;
        if denom == 0 {
            0.0
        } else {
            cij as f64 / denom as f64
        }
    }
}

pub fn build_similarity(matrix: &InteractionMatrix) -> ItemSimilarityModel {
    let m = matrix.num_items();
    let mut item_counts = vec![0u32; m];
    let mut cooccurrence = vec![0u32; m * m];
    for u in 0..matrix.num_users() {
        let items = matrix.user_items(u);
        for &i in items {
            item_counts[i as usize] += 1;
            let row = &mut cooccurrence[i as usize * m..(i as usize + 1) * m];
            for &j in items {
                row[j as usize] += 1;
            }
        }
    }
    ItemSimilarityModel {
        num_items: m,
        item_counts,
        cooccurrence,
    }
}

/// Up to `k_prime` items outside `history`, ranked by summed similarity to
/// the history (ties by ascending id). Items with zero score are never
/// recommended, so an empty history yields an empty list.
pub fn recommend_topk(model: &ItemSimilarityModel, history: &[u32], k_prime: usize) -> Vec<u32> {
    if history.is_empty() || k_prime == 0 {
        return Vec::new();
    }
    let mut scores = vec![0.0f64; model.num_items];
    for &j in history {
        for (i, s) in scores.iter_mut().enumerate() {
            *s += model.similarity(i, j as usize);
        }
    }
    for &j in history {
        scores[j as usize] = 0.0;
    }
    let mut ranked: Vec<u32> = (0..model.num_items as u32)
        .filter(|&i| scores[i as usize] > 0.0)
        .collect();
    ranked.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    ranked.truncate(k_prime);
    ranked
}

/// What produced an item vote table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemVoteProvenance {
    pub params: SmoothingParams,
    pub master_seed: u64,
    pub k_prime: usize,
}

/// Per (user, item): samples in which the item was recommended; per user:
/// samples in which the user was isolated and abstained.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemVoteTable {
    num_items: usize,
    counts: Vec<u64>,
    abstains: Vec<u64>,
    samples: u64,
    pub provenance: ItemVoteProvenance,
}

impl ItemVoteTable {
    pub fn new(num_users: usize, num_items: usize, provenance: ItemVoteProvenance) -> Self {
        ItemVoteTable {
            num_items,
            counts: vec![0; num_users * num_items],
            abstains: vec![0; num_users],
            samples: 0,
            provenance,
        }
    }

    pub fn num_users(&self) -> usize {
        self.abstains.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_samples(&self) -> u64 {
        self.samples
    }

    pub fn k_prime(&self) -> usize {
        self.provenance.k_prime
    }

    pub fn counts(&self, user: usize) -> &[u64] {
        &self.counts[user * self.num_items..(user + 1) * self.num_items]
    }

    pub fn count(&self, user: usize, item: usize) -> u64 {
        self.counts[user * self.num_items + item]
    }

    pub fn abstain_count(&self, user: usize) -> u64 {
        self.abstains[user]
    }

    /// Records one sample: `None` for an abstaining user, else its list.
    pub fn add_sample(&mut self, recommendations: &[Option<Vec<u32>>]) -> Result<()> {
        if recommendations.len() != self.num_users() {
            return Err(Error::Dimension {
                expected: self.num_users(),
                actual: recommendations.len(),
                context: "users per sample",
            });
        }
        for (u, rec) in recommendations.iter().enumerate() {
            match rec {
                None => self.abstains[u] += 1,
                Some(items) => {
                    if items.len() > self.k_prime() {
                        return Err(Error::param(format!("user {u} received more than K' items")));
                    }
                    for &i in items {
                        if i as usize >= self.num_items {
                            return Err(Error::Range {
                                index: i as usize,
                                limit: self.num_items,
                                context: "recommended item",
                            });
                        }
                        self.counts[u * self.num_items + i as usize] += 1;
                    }
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ItemVoteTable) -> Result<()> {
        if other.counts.len() != self.counts.len() || other.num_items != self.num_items {
            return Err(Error::Dimension {
                expected: self.counts.len(),
                actual: other.counts.len(),
                context: "item vote table shape",
            });
        }
        if other.provenance != self.provenance {
            return Err(Error::param("cannot merge item vote tables from different experiments"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.abstains.iter_mut().zip(&other.abstains) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }

    /// Top-`k` items of the smoothed recommender: the `k` most frequently
    /// recommended items (ties by id), excluding items never recommended.
    pub fn smoothed_topk(&self, user: usize, k: usize) -> Vec<u32> {
        let counts = self.counts(user);
        let mut items: Vec<u32> = (0..self.num_items as u32).filter(|&i| counts[i as usize] > 0).collect();
        items.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        items.truncate(k);
        items
    }
}

/// Smoothed-recommender votes over `n` samples of the rating matrix.
pub fn collect_item_votes(
    matrix: &InteractionMatrix,
    n: u64,
    params: &SmoothingParams,
    k_prime: usize,
    master_seed: u64,
) -> Result<ItemVoteTable> {
    collect_item_votes_range(matrix, 0..n, params, k_prime, master_seed)
}

pub fn collect_item_votes_range(
    matrix: &InteractionMatrix,
    range: Range<u64>,
    params: &SmoothingParams,
    k_prime: usize,
    master_seed: u64,
) -> Result<ItemVoteTable> {
    if range.start >= range.end {
        return Err(Error::param("need at least one sample"));
    }
    if k_prime == 0 {
        return Err(Error::param("K' must be at least 1"));
    }
    let provenance = ItemVoteProvenance {
        params: *params,
        master_seed,
        k_prime,
    };
    let empty = || ItemVoteTable::new(matrix.num_users(), matrix.num_items(), provenance);
    range
        .into_par_iter()
        .try_fold(empty, |mut table, i| {
            let (sample, _) = sample_smoothed_ratings(matrix, params, derive_sample_seed(master_seed, i));
            let model = build_similarity(&sample);
            let recs: Vec<Option<Vec<u32>>> = (0..sample.num_users())
                .map(|u| {
                    let history = sample.user_items(u);
                    if history.is_empty() {
                        None
                    } else {
                        Some(recommend_topk(&model, history, k_prime))
                    }
                })
                .collect();
            table.add_sample(&recs)?;
            Ok(table)
        })
        .try_reduce(empty, |mut a, b| {
            a.merge(&b)?;
            Ok(a)
        })
}

/// Which side of the overlap inequality multiplies the candidate bound sum
/// by the all-removed probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InequalityForm {
    /// `p_hat * p_r - min_c (p_hat * sum_{H_c} upper + K'(1 - p_hat)(1 - p0)) / c`.
    #[default]
    Proof,
    /// `p_hat * p_r - min_c (sum_{H_c} upper + K'(1 - p_hat)(1 - p0)) / c`.
    Displayed,
}

impl FromStr for InequalityForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proof" => Ok(InequalityForm::Proof),
            "displayed" => Ok(InequalityForm::Displayed),
            other => Err(Error::param(format!("unknown inequality form {other:?}"))),
        }
    }
}

/// Radius-independent part of one user's overlap certificate: for each
/// overlap `r`, the lower bound `p_r` and the ascending upper bounds of the
/// candidate items.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOverlapBounds {
    per_r: Vec<(f64, Vec<f64>)>,
    k_prime: usize,
}

impl UserOverlapBounds {
    /// Builds the bounds from arbitrary per-item bound functions, each called
    /// with `(item, level)`. Candidates are ranked by upper bound with ties
    /// broken by item id.
    pub fn from_bound_fns(
        ground_truth: &[u32],
        num_items: usize,
        k: usize,
        k_prime: usize,
        alpha: f64,
        mut lower: impl FnMut(u32, f64) -> f64,
        mut upper: impl FnMut(u32, f64) -> f64,
    ) -> Result<Self> {
        if k == 0 || k > k_prime {
            return Err(Error::param(format!("need 1 <= K <= K', got K={k}, K'={k_prime}")));
        }
        let mut in_truth = vec![false; num_items];
        for &i in ground_truth {
            *in_truth.get_mut(i as usize).ok_or(Error::Range {
                index: i as usize,
                limit: num_items,
                context: "ground-truth item",
            })? = true;
        }
        let others: Vec<u32> = (0..num_items as u32).filter(|&i| !in_truth[i as usize]).collect();
        let mut per_r = Vec::new();
        for r in 1..=k.min(ground_truth.len()) {
            let candidates = k - r + 1;
            let level = alpha / (ground_truth.len() + candidates) as f64;
            let mut lows: Vec<f64> = ground_truth.iter().map(|&i| lower(i, level)).collect();
            lows.sort_by(|a, b| b.total_cmp(a));
            let mut ups: Vec<(f64, u32)> = others.iter().map(|&i| (upper(i, level), i)).collect();
            ups.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            ups.truncate(candidates);
            let mut ups: Vec<f64> = ups.into_iter().map(|x| x.0).collect();
            ups.sort_by(f64::total_cmp);
            per_r.push((lows[r - 1], ups));
        }
        Ok(UserOverlapBounds { per_r, k_prime })
    }

    /// Clopper-Pearson bounds from a vote table.
    pub fn from_table(table: &ItemVoteTable, user: usize, ground_truth: &[u32], k: usize, alpha: f64) -> Result<Self> {
        if user >= table.num_users() {
            return Err(Error::Range {
                index: user,
                limit: table.num_users(),
                context: "user",
            });
        }
        let n = table.num_samples();
        let counts = table.counts(user);
        let mut lo_cache: HashMap<(u64, u64), f64> = HashMap::new();
        let mut up_cache: HashMap<(u64, u64), f64> = HashMap::new();
        Self::from_bound_fns(
            ground_truth,
            table.num_items(),
            k,
            table.k_prime(),
            alpha,
            |i, level| {
                let c = counts[i as usize];
                *lo_cache
                    .entry((c, level.to_bits()))
                    .or_insert_with(|| clopper_pearson_lower(c, n, level))
            },
            |i, level| {
                let c = counts[i as usize];
                *up_cache
                    .entry((c, level.to_bits()))
                    .or_insert_with(|| clopper_pearson_upper(c, n, level))
            },
        )
    }

    /// Largest certified overlap given the all-removed probability and the
    /// user's isolation probability.
    pub fn max_overlap(&self, p_hat: f64, p0: f64, form: InequalityForm) -> usize {
        let noise = self.k_prime as f64 * (1.0 - p_hat) * (1.0 - p0);
        let mut best = 0;
        for (idx, (p_r, ups)) in self.per_r.iter().enumerate() {
            let mut threshold = if ups.is_empty() { 0.0 } else { f64::INFINITY };
            let mut sum = 0.0;
            for (c, &u) in ups.iter().enumerate() {
                sum += u;
                let mass = match form {
                    InequalityForm::Proof => p_hat * sum,
                    InequalityForm::Displayed => sum,
                };
                threshold = threshold.min((mass + noise) / (c + 1) as f64);
            }
            if p_hat * p_r - threshold > 0.0 {
                best = idx + 1;
            }
        }
        best
    }
}

/// Probability that a user with `d` ratings is isolated in a sample.
pub fn user_isolation_prob(params: &SmoothingParams, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::param("user has no ratings"));
    }
    Ok(params.p_n + (1.0 - params.p_n) * params.p_e.powf(d as f64))
}

/// Largest `r` such that at least `r` of the smoothed top-`k` items are
/// guaranteed to be in `ground_truth` under every perturbation in `budget`.
#[allow(clippy::too_many_arguments)]
pub fn certify_user_overlap(
    table: &ItemVoteTable,
    user: usize,
    ground_truth: &[u32],
    k: usize,
    params: &SmoothingParams,
    budget: &PerturbationBudget,
    d_u: usize,
    alpha: f64,
    form: InequalityForm,
) -> Result<usize> {
    let p0 = user_isolation_prob(params, d_u)?;
    let bounds = UserOverlapBounds::from_table(table, user, ground_truth, k, alpha)?;
    Ok(bounds.max_overlap(prob_all_removed_recsys(params, budget.tau, budget.rho), p0, form))
}

/// Mean of `r / K` and `r / |I_u|` over `users`.
#[allow(clippy::too_many_arguments)]
pub fn certified_precision_recall(
    table: &ItemVoteTable,
    ground_truths: &[Vec<u32>],
    users: &[usize],
    degrees: &[usize],
    k: usize,
    params: &SmoothingParams,
    budget: &PerturbationBudget,
    alpha: f64,
    form: InequalityForm,
) -> Result<(f64, f64)> {
    let p_hat = prob_all_removed_recsys(params, budget.tau, budget.rho);
    let mut rs = Vec::with_capacity(users.len());
    for &u in users {
        let gt = nonempty_truth(ground_truths, u)?;
        let b = UserOverlapBounds::from_table(table, u, gt, k, alpha)?;
        rs.push((
            b.max_overlap(p_hat, user_isolation_prob(params, degrees[u])?, form),
            gt.len(),
        ));
    }
    Ok(mean_precision_recall(&rs, k))
}

fn nonempty_truth(ground_truths: &[Vec<u32>], u: usize) -> Result<&[u32]> {
    match ground_truths.get(u) {
        Some(gt) if !gt.is_empty() => Ok(gt),
        _ => Err(Error::param(format!("user {u} has no ground-truth items"))),
    }
}

fn mean_precision_recall(rs: &[(usize, usize)], k: usize) -> (f64, f64) {
    if rs.is_empty() {
        return (0.0, 0.0);
    }
    let n = rs.len() as f64;
    let p = rs.iter().map(|&(r, _)| r as f64 / k as f64).sum::<f64>() / n;
    let rc = rs.iter().map(|&(r, g)| r as f64 / g as f64).sum::<f64>() / n;
    (p, rc)
}

/// Precision and recall of the smoothed top-`k` lists themselves.
pub fn clean_precision_recall(
    table: &ItemVoteTable,
    ground_truths: &[Vec<u32>],
    users: &[usize],
    k: usize,
) -> Result<(f64, f64)> {
    let mut rs = Vec::with_capacity(users.len());
    for &u in users {
        let gt = nonempty_truth(ground_truths, u)?;
        let hits = table.smoothed_topk(u, k).iter().filter(|i| gt.contains(i)).count();
        rs.push((hits, gt.len()));
    }
    Ok(mean_precision_recall(&rs, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecsysPoint {
    pub rho: u32,
    pub certified_precision: f64,
    pub certified_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecsysCurve {
    pub tau: u32,
    pub k: usize,
    pub points: Vec<RecsysPoint>,
    pub clean_precision: f64,
    pub clean_recall: f64,
}

/// Radius from which no user can be certified: the certificate needs
/// `p_hat > K' m / (K + K' m)` with `m = (1 - p_n)(1 - p_e^d_max)` the
/// smallest possible `1 - p0` among the users.
pub fn recsys_rho_cutoff(params: &SmoothingParams, tau: u32, k: usize, k_prime: usize, d_max: usize) -> u32 {
    let m = (1.0 - params.p_n) * (1.0 - params.p_e.powf(d_max as f64));
    let bar = k_prime as f64 * m / (k as f64 + k_prime as f64 * m);
    let mut rho = 0;
    while rho < RHO_SCAN_CAP && prob_all_removed_recsys(params, tau, rho) > bar {
        rho += 1;
    }
    rho
}

/// Certified precision and recall from `rho = 0` until both reach zero
/// (or the radius cutoff).
#[allow(clippy::too_many_arguments)]
pub fn certified_precision_curve(
    table: &ItemVoteTable,
    ground_truths: &[Vec<u32>],
    users: &[usize],
    degrees: &[usize],
    k: usize,
    params: &SmoothingParams,
    tau: u32,
    alpha: f64,
    form: InequalityForm,
) -> Result<RecsysCurve> {
    if users.is_empty() {
        return Err(Error::param("no users to evaluate"));
    }
    let mut prepared = Vec::with_capacity(users.len());
    let mut d_max = 0;
    for &u in users {
        let gt = nonempty_truth(ground_truths, u)?;
        let d = *degrees.get(u).ok_or(Error::Range {
            index: u,
            limit: degrees.len(),
            context: "user degree",
        })?;
        d_max = d_max.max(d);
        prepared.push((
            UserOverlapBounds::from_table(table, u, gt, k, alpha)?,
            user_isolation_prob(params, d)?,
            gt.len(),
        ));
    }
    let cutoff = recsys_rho_cutoff(params, tau, k, table.k_prime(), d_max);
    let mut points = Vec::new();
    for rho in 0..=cutoff {
        let p_hat = prob_all_removed_recsys(params, tau, rho);
        let rs: Vec<(usize, usize)> = prepared
            .iter()
            .map(|(b, p0, g)| (b.max_overlap(p_hat, *p0, form), *g))
            .collect();
        let (p, r) = mean_precision_recall(&rs, k);
        points.push(RecsysPoint {
            rho,
            certified_precision: p,
            certified_recall: r,
        });
        if p == 0.0 {
            break;
        }
    }
    let (clean_precision, clean_recall) = clean_precision_recall(table, ground_truths, users, k)?;
    Ok(RecsysCurve {
        tau,
        k,
        points,
        clean_precision,
        clean_recall,
    })
}

pub fn write_recsys_curve_csv(curve: &RecsysCurve, path: &Path) -> Result<()> {
    let mut body = String::from("rho,certified_precision,certified_recall\n");
    for p in &curve.points {
        let _ = writeln!(
            body,
            "{},{},{}",
            p.rho,
            format_g17(p.certified_precision),
            format_g17(p.certified_recall)
        );
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes `recsys_curve_tau<tau>.csv` per curve and `report.json`.
pub fn write_recsys_report(curves: &[RecsysCurve], metadata: &Value, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for curve in curves {
        let name = format!("recsys_curve_tau{}.csv", curve.tau);
        let path = out_dir.join(&name);
        write_recsys_curve_csv(curve, &path)?;
        written.push(path);
        let mut s = Map::new();
        s.insert("tau".into(), curve.tau.into());
        s.insert("k".into(), curve.k.into());
        s.insert("clean_precision".into(), curve.clean_precision.into());
        s.insert("clean_recall".into(), curve.clean_recall.into());
        s.insert("max_rho".into(), curve.points.last().map_or(0, |p| p.rho).into());
        s.insert("csv".into(), name.into());
        summaries.push(Value::Object(s));
    }
    let mut report = Map::new();
    report.insert("metadata".into(), metadata.clone());
    report.insert("curves".into(), Value::Array(summaries));
    let path = out_dir.join("report.json");
    write_json_g17(&Value::Object(report), &path)?;
    written.push(path);
    Ok(written)
}
