//! User-item interaction matrices and the MovieLens `u.data` loader.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Binary user-item interaction matrix stored row-wise (one sorted item list
/// per user).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_items: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl InteractionMatrix {
    /// Builds a matrix from `(user, item)` pairs. Pairs must be unique and in
    /// range.
    pub fn new(num_users: usize, num_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); num_users];
        for &(u, i) in pairs {
            if u >= num_users {
                return Err(Error::Range {
                    index: u,
                    limit: num_users,
                    context: "user id",
                });
            }
            if i >= num_items {
                return Err(Error::Range {
                    index: i,
                    limit: num_items,
                    context: "item id",
                });
            }
            rows[u].push(i as u32);
        }
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::param(format!("duplicate interaction ({u}, {})", w[0])));
            }
        }
        Ok(Self::from_sorted_rows(num_items, rows))
    }

    pub(crate) fn from_sorted_rows(num_items: usize, rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut items = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows {
            items.extend_from_slice(&row);
            offsets.push(items.len());
        }
        InteractionMatrix {
            num_items,
            offsets,
            items,
        }
    }

    pub(crate) fn from_parts(num_items: usize, offsets: Vec<usize>, items: Vec<u32>) -> Self {
        InteractionMatrix {
            num_items,
            offsets,
            items,
        }
    }

    pub fn num_users(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_interactions(&self) -> usize {
        self.items.len()
    }

    /// Sorted items the user interacted with.
    #[inline]
    pub fn user_items(&self, user: usize) -> &[u32] {
        &self.items[self.offsets[user]..self.offsets[user + 1]]
    }

    /// Number of interactions of `user`.
    pub fn degree(&self, user: usize) -> usize {
        self.offsets[user + 1] - self.offsets[user]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_users()).map(|u| self.degree(u)).collect()
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.user_items(user).binary_search(&(item as u32)).is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_users()).flat_map(move |u| self.user_items(u).iter().map(move |&i| (u, i as usize)))
    }
}

/// A rating log split per user into training interactions and held-out
/// ground-truth items.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    pub train: InteractionMatrix,
    /// Held-out items per user, sorted.
    pub held_out: Vec<Vec<u32>>,
    /// Raw user id of each dense user index.
    pub user_ids: Vec<u64>,
    /// Raw item id of each dense item index.
    pub item_ids: Vec<u64>,
    pub num_records: usize,
}

/// Loads a tab-separated `user<TAB>item<TAB>rating<TAB>timestamp` log.
///
/// Raw ids are mapped to dense indices in ascending order. Every record is an
/// interaction regardless of its rating. Per user, the earliest
/// `floor(split_fraction * d)` records (at least one) by timestamp, ties by
/// item id, go to training and the rest are held out; users with fewer than
/// two records are kept wholly in training.
pub fn load_interaction_dataset(path: &Path, split_fraction: f64) -> Result<InteractionDataset> {
    if !(split_fraction > 0.0 && split_fraction <= 1.0) {
        return Err(Error::param(format!("split fraction {split_fraction} not in (0, 1]")));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<(u64, u64, u64)> = Vec::new();
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let int = |s: &str, what: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::parse(path, lineno, format!("bad {what} {s:?}")))
        };
        let user = int(fields[0], "user id")?;
        let item = int(fields[1], "item id")?;
        fields[2]
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::parse(path, lineno, format!("bad rating {:?}", fields[2])))?;
        let ts = int(fields[3], "timestamp")?;
        if !seen.insert((user, item)) {
            return Err(Error::parse(
                path,
                lineno,
                format!("repeated rating of item {item} by user {user}"),
            ));
        }
        records.push((user, item, ts));
    }

    let user_ids: Vec<u64> = records
        .iter()
        .map(|r| r.0)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let item_ids: Vec<u64> = records
        .iter()
        .map(|r| r.1)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let item_index: BTreeMap<u64, u32> = item_ids.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();
    let user_index: BTreeMap<u64, usize> = user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut per_user: Vec<Vec<(u64, u32)>> = vec![Vec::new(); user_ids.len()];
    for &(u, i, ts) in &records {
        per_user[user_index[&u]].push((ts, item_index[&i]));
    }
    let mut train_rows = Vec::with_capacity(per_user.len());
    let mut held_out = Vec::with_capacity(per_user.len());
    for mut history in per_user {
        history.sort_unstable();
        let d = history.len();
        let n_train = if d < 2 {
            d
        } else {
            ((split_fraction * d as f64 + 1e-9).floor() as usize).clamp(1, d)
        };
        let mut train: Vec<u32> = history[..n_train].iter().map(|r| r.1).collect();
        let mut rest: Vec<u32> = history[n_train..].iter().map(|r| r.1).collect();
        train.sort_unstable();
        rest.sort_unstable();
        train_rows.push(train);
        held_out.push(rest);
    }
    Ok(InteractionDataset {
        train: InteractionMatrix::from_sorted_rows(item_ids.len(), train_rows),
        held_out,
        user_ids,
        item_ids,
        num_records: records.len(),
    })
}
