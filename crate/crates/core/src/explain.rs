//! Counterfactual search over a user's own interactions.
//!
//! Both searches work on an additive estimated model: after removing a set
//! `S`, the score of item `j` is taken to be `yhat_j - sum_{z in S} I(z, yhat_j)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::influence::{InfluenceConfig, Method, UserInfluences};
use crate::models::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Remove points by influence on the top-1 until any candidate overtakes it.
    Greedy,
    /// Run a greedy search per candidate on the pairwise score gap; keep the smallest.
    IterativeGreedy,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Greedy => "greedy",
            Algorithm::IterativeGreedy => "iterative_greedy",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" | "fia" => Ok(Algorithm::Greedy),
            "iterative_greedy" | "iterative" | "accent" => Ok(Algorithm::IterativeGreedy),
            other => Err(Error::Config(format!("unknown search algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Size of the top-K pool (the top-1 plus K-1 candidates).
    pub k: usize,
    pub algorithm: Algorithm,
    /// Cap on the removal set; `None` means |I_u|.
    #[serde(default)]
    pub max_removals: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig::new(5, Algorithm::IterativeGreedy)
    }
}

impl SearchConfig {
    pub fn new(k: usize, algorithm: Algorithm) -> Self {
        SearchConfig {
            k,
            algorithm,
            max_removals: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "K = {} leaves no candidate besides the top-1 (need K >= 2)",
                self.k
            )));
        }
        if self.max_removals == Some(0) {
            return Err(Error::Config("max_removals must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Found,
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub user: usize,
    pub rec: usize,
    pub rec_star: Option<usize>,
    /// Interaction positions, in removal order.
    pub removed: Vec<usize>,
    pub estimated_diff_trace: Vec<f64>,
    pub status: Status,
}

impl Explanation {
    fn exhausted(user: usize, rec: usize, removed: Vec<usize>, trace: Vec<f64>) -> Self {
        Explanation {
            user,
            rec,
            rec_star: None,
            removed,
            estimated_diff_trace: trace,
            status: Status::Exhausted,
        }
    }

    pub fn is_found(&self) -> bool {
        self.status == Status::Found
    }
}

/// Pool indices `1..min(k, items)` of the table, i.e. the candidates.
fn pool(table: &UserInfluences, k: usize) -> std::ops::Range<usize> {
    1..k.min(table.items.len())
}

fn cap(table: &UserInfluences, cfg: &SearchConfig) -> usize {
    cfg.max_removals
        .unwrap_or(table.positions.len())
        .min(table.positions.len())
}

/// Indices into `table.positions` sorted by `key` descending, ties by position.
fn order_by(table: &UserInfluences, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..table.positions.len()).collect();
    idx.sort_by(|&a, &b| {
        key(b)
            .total_cmp(&key(a))
            .then(table.positions[a].cmp(&table.positions[b]))
    });
    idx
}

/// Greedy search on `I(z, yhat_rec)`.
pub fn greedy_explain(table: &UserInfluences, cfg: &SearchConfig) -> Result<Explanation> {
    cfg.validate()?;
    if table.positions.is_empty() {
        return Err(Error::Precondition(format!(
            "user {} has no interactions",
            table.user
        )));
    }
    let rec = table.items[0];
    let cands = pool(table, cfg.k);
    let mut est = table.base_scores.clone();
    let mut removed = Vec::new();
    let mut trace = Vec::new();
    for i in order_by(table, |i| table.scores[i][0])
        .into_iter()
        .take(cap(table, cfg))
    {
        for (e, s) in est.iter_mut().zip(&table.scores[i]) {
            *e -= s;
        }
        removed.push(table.positions[i]);
        // best candidate: highest estimate, ties by ascending item id
        let best = cands.clone().max_by(|&a, &b| {
            est[a]
                .total_cmp(&est[b])
                .then(table.items[b].cmp(&table.items[a]))
        });
        let Some(best) = best else {
            break;
        };
        trace.push(est[0] - est[best]);
        if est[best] > est[0] {
            return Ok(Explanation {
                user: table.user,
                rec,
                rec_star: Some(table.items[best]),
                removed,
                estimated_diff_trace: trace,
                status: Status::Found,
            });
        }
    }
    Ok(Explanation::exhausted(table.user, rec, removed, trace))
}

/// Outcome of the per-candidate greedy pass.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRun {
    pub item: usize,
    pub removed: Vec<usize>,
    pub trace: Vec<f64>,
    pub succeeded: bool,
}

/// Greedy pass for candidate `j` (an index into `table.items`): remove points
/// with positive pairwise influence, largest first, until the gap turns negative.
pub fn candidate_run(table: &UserInfluences, j: usize, max_removals: usize) -> CandidateRun {
    let pair = |i: usize| table.scores[i][0] - table.scores[i][j];
    let mut diff = table.base_scores[0] - table.base_scores[j];
    let mut removed = Vec::new();
    let mut trace = Vec::new();
    for i in order_by(table, pair) {
        if diff < 0.0 || removed.len() == max_removals {
            break;
        }
        let step = pair(i);
        if step <= 0.0 {
            break;
        }
        diff -= step;
        removed.push(table.positions[i]);
        trace.push(diff);
    }
    CandidateRun {
        item: table.items[j],
        removed,
        trace,
        succeeded: diff < 0.0,
    }
}

/// Iterative greedy search over every candidate in the top-K pool.
pub fn iterative_greedy_explain(table: &UserInfluences, cfg: &SearchConfig) -> Result<Explanation> {
    cfg.validate()?;
    if table.positions.is_empty() {
        return Err(Error::Precondition(format!(
            "user {} has no interactions",
            table.user
        )));
    }
    let cands = pool(table, cfg.k);
    if cands.is_empty() {
        return Err(Error::Precondition(format!(
            "user {} has an empty candidate pool",
            table.user
        )));
    }
    let limit = cap(table, cfg);
    let best = cands
        .map(|j| candidate_run(table, j, limit))
        .filter(|r| r.succeeded)
        .min_by(|a, b| {
            a.removed
                .len()
                .cmp(&b.removed.len())
                // larger margin wins: more negative final gap first
                .then(a.trace.last().unwrap().total_cmp(b.trace.last().unwrap()))
                .then(a.item.cmp(&b.item))
        });
    let rec = table.items[0];
    Ok(match best {
        Some(run) => Explanation {
            user: table.user,
            rec,
            rec_star: Some(run.item),
            removed: run.removed,
            estimated_diff_trace: run.trace,
            status: Status::Found,
        },
        None => Explanation::exhausted(table.user, rec, Vec::new(), Vec::new()),
    })
}

pub fn explain_with(table: &UserInfluences, cfg: &SearchConfig) -> Result<Explanation> {
    match cfg.algorithm {
        Algorithm::Greedy => greedy_explain(table, cfg),
        Algorithm::IterativeGreedy => iterative_greedy_explain(table, cfg),
    }
}

/// Influence table for user `u` over the top-`k` pool of the current model.
pub fn user_influences(
    params: &ModelParams,
    ds: &Dataset,
    u: usize,
    k: usize,
    cfg: &InfluenceConfig,
) -> Result<UserInfluences> {
    let top = params.top_k(u, ds, k)?;
    let items: Vec<usize> = top.iter().map(|p| p.item).collect();
    UserInfluences::estimate(params, ds, u, &items, cfg)
}

/// JSON-lines record of one explanation, with removed points as (user, item) pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub user: usize,
    pub rec: usize,
    pub rec_star: Option<usize>,
    pub removed: Vec<RemovedPair>,
    pub algorithm: Algorithm,
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    pub status: Status,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedPair {
    pub user: usize,
    pub item: usize,
}

impl ExplanationRecord {
    pub fn new(
        ds: &Dataset,
        e: &Explanation,
        algorithm: Algorithm,
        method: Method,
        k: usize,
    ) -> Self {
        ExplanationRecord {
            user: e.user,
            rec: e.rec,
            rec_star: e.rec_star,
            removed: e
                .removed
                .iter()
                .map(|&p| {
                    let z = ds.interaction(p);
                    RemovedPair {
                        user: z.user,
                        item: z.item,
                    }
                })
                .collect(),
            algorithm,
            method,
            k,
            status: e.status,
        }
    }

    /// Rebuilds the explanation against `ds` (trace is not stored in records).
    pub fn to_explanation(&self, ds: &Dataset) -> Result<Explanation> {
        let removed = self
            .removed
            .iter()
            .map(|pair| {
                if pair.user >= ds.num_users() {
                    return Err(Error::OutOfRange {
                        what: "user",
                        index: pair.user,
                        limit: ds.num_users(),
                    });
                }
                ds.user_positions(pair.user)
                    .iter()
                    .copied()
                    .find(|&p| ds.interaction(p).item == pair.item)
                    .ok_or_else(|| {
                        Error::Precondition(format!(
                            "({}, {}) is not a training interaction",
                            pair.user, pair.item
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Explanation {
            user: self.user,
            rec: self.rec,
            rec_star: self.rec_star,
            removed,
            estimated_diff_trace: Vec::new(),
            status: self.status,
        })
    }
}
