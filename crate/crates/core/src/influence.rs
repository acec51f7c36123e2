//! Estimating a score after deleting one training interaction.
//!
//! Two estimators are available:
//!
//! * **gradient-based**: one damped Newton step on a parameter block,
//!   `theta_hat = theta + (1/n) (H + lambda I)^-1 grad L(z, theta)`, where `H`
//!   is the average loss Hessian over the interactions that touch the block;
//!   the estimate is a full forward pass at `theta_hat`.
//! * **data-based**: continue SGD from the trained parameters on the data with
//!   `z` deleted, then run a forward pass.
//!
//! The influence of `z` on a score is `I(z, yhat) = yhat - yhat^{-z}`.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{continue_training, ModelParams, TrainConfig};

/// Condition estimate above which a damped block is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientBased,
    DataBased,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::GradientBased => "gradient",
            Method::DataBased => "data",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" | "gradient_based" => Ok(Method::GradientBased),
            "data" | "data_based" => Ok(Method::DataBased),
            other => Err(Error::Config(format!("unknown influence method `{other}`"))),
        }
    }
}

/// Parameters the Newton step is allowed to move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamScope {
    /// The target user's own parameters.
    #[default]
    UserBlock,
    /// The user's parameters plus those of every item the user rated.
    UserAndItemsBlock,
}

/// The `n` in the `1/n` step factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NConvention {
    /// Total number of training interactions.
    GlobalN,
    /// Number of interactions touching the block.
    #[default]
    UserN,
}

/// How `damping` is turned into the ridge `lambda`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingMode {
    /// `lambda = damping`.
    Absolute,
    /// `lambda = damping * mean(diag(H))`.
    #[default]
    RelativeToMeanDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceConfig {
    pub method: Method,
    #[serde(default)]
    pub param_scope: ParamScope,
    pub damping: f64,
    #[serde(default)]
    pub damping_mode: DampingMode,
    #[serde(default)]
    pub n_convention: NConvention,
    /// Data-based only.
    pub t2_epochs: usize,
    pub continuation_lr: f64,
    pub continuation_batch_size: usize,
    pub seed: u64,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        InfluenceConfig {
            method: Method::GradientBased,
            param_scope: ParamScope::UserBlock,
            damping: 1e-3,
            damping_mode: DampingMode::RelativeToMeanDiagonal,
            n_convention: NConvention::UserN,
            t2_epochs: 1,
            continuation_lr: TrainConfig::default().lr,
            continuation_batch_size: TrainConfig::default().batch_size,
            seed: TrainConfig::default().seed,
        }
    }
}

impl InfluenceConfig {
    pub fn gradient_based() -> Self {
        Self::default()
    }

    /// Data-based estimation continuing with the optimizer settings used to train.
    pub fn data_based(train: &TrainConfig) -> Self {
        InfluenceConfig {
            method: Method::DataBased,
            t2_epochs: 1,
            continuation_lr: train.lr,
            continuation_batch_size: train.batch_size,
            seed: train.seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.damping.is_nan() || self.damping < 0.0 || !self.damping.is_finite() {
            return Err(Error::Config("damping must be a finite number >= 0".into()));
        }
        if self.method == Method::DataBased {
            if self.t2_epochs == 0 {
                return Err(Error::Precondition(
                    "data-based estimation needs t2_epochs >= 1".into(),
                ));
            }
            if self.continuation_batch_size == 0
                || self.continuation_lr.is_nan()
                || self.continuation_lr < 0.0
            {
                return Err(Error::Config(
                    "continuation needs batch size >= 1 and lr >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `I(z, yhat_{u,v})` for one removed interaction and one target pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEstimate {
    /// Interaction position of the removed point.
    pub z: usize,
    pub user: usize,
    pub item: usize,
    pub method: Method,
    pub i_score: f64,
    pub y_minus_z: f64,
}

impl InfluenceEstimate {
    fn new(z: usize, user: usize, item: usize, method: Method, y: f64, y_minus_z: f64) -> Self {
        InfluenceEstimate {
            z,
            user,
            item,
            method,
            i_score: y - y_minus_z,
            y_minus_z,
        }
    }
}

/// Influence of `z` on the score difference `yhat_v - yhat_w`.
pub fn pair_influence(est_v: &InfluenceEstimate, est_w: &InfluenceEstimate) -> Result<f64> {
    if est_v.z != est_w.z || est_v.user != est_w.user || est_v.method != est_w.method {
        return Err(Error::Precondition(format!(
            "pair influence needs one removed point, user and method; got z {} / {}",
            est_v.z, est_w.z
        )));
    }
    Ok(est_v.i_score - est_w.i_score)
}

/// Parameter block for one user plus the interactions whose loss depends on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub user: usize,
    pub coords: Vec<usize>,
    pub touching: Vec<usize>,
}

impl Block {
    pub fn new(params: &ModelParams, ds: &Dataset, u: usize, scope: ParamScope) -> Result<Self> {
        if u >= ds.num_users() {
            return Err(Error::OutOfRange {
                what: "user",
                index: u,
                limit: ds.num_users(),
            });
        }
        let mut coords = params.user_coords(u);
        let mut touching = ds.user_positions(u).to_vec();
        if scope == ParamScope::UserAndItemsBlock {
            let per_item = ds.per_item();
            for v in ds.user_items(u) {
                coords.extend(params.item_coords(v));
                touching.extend(&per_item[v]);
            }
            touching.sort_unstable();
            touching.dedup();
        }
        Ok(Block {
            user: u,
            coords,
            touching,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    fn index(&self) -> HashMap<usize, usize> {
        self.coords
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect()
    }
}

/// Loss gradient of interaction `pos` restricted to `block`.
pub fn block_gradient(
    params: &ModelParams,
    ds: &Dataset,
    block: &Block,
    pos: usize,
) -> Result<DVector<f64>> {
    let z = ds.interaction(pos);
    let sd = params.score_derivatives(z.user, z.item)?;
    let r = sd.score - params.rating_scale().target(z.rating);
    let index = block.index();
    let mut g = DVector::zeros(block.dim());
    for (k, c) in sd.coords.iter().enumerate() {
        if let Some(&i) = index.get(c) {
            g[i] += 2.0 * r * sd.grad[k];
        }
    }
    Ok(g)
}

/// Average of `grad^2 L` over the interactions touching the block, undamped.
///
/// Only the upper triangle is accumulated; the lower one is mirrored so the
/// result is exactly symmetric.
pub fn block_hessian_average(
    params: &ModelParams,
    ds: &Dataset,
    block: &Block,
) -> Result<DMatrix<f64>> {
    let p = block.dim();
    let index = block.index();
    let mut h = DMatrix::<f64>::zeros(p, p);
    let scale = params.rating_scale();
    for &pos in &block.touching {
        let z = ds.interaction(pos);
        let sd = params.score_derivatives(z.user, z.item)?;
        let r = sd.score - scale.target(z.rating);
        let local: Vec<(usize, usize)> = sd
            .coords
            .iter()
            .enumerate()
            .filter_map(|(k, c)| index.get(c).map(|&i| (k, i)))
            .collect();
        let m = sd.coords.len();
        for &(ka, ia) in &local {
            for &(kb, ib) in &local {
                if ib < ia {
                    continue;
                }
                // d2L = 2 (g g^T + r d2yhat)
                h[(ia, ib)] += 2.0 * (sd.grad[ka] * sd.grad[kb] + r * sd.hess[ka * m + kb]);
            }
        }
    }
    let count = block.touching.len().max(1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = h[(i, j)] / count;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Resolved ridge for a given undamped average Hessian.
pub fn resolve_damping(h: &DMatrix<f64>, cfg: &InfluenceConfig) -> f64 {
    match cfg.damping_mode {
        DampingMode::Absolute => cfg.damping,
        DampingMode::RelativeToMeanDiagonal => {
            let p = h.nrows().max(1) as f64;
            cfg.damping * (h.diagonal().sum() / p).abs()
        }
    }
}

/// Ratio of largest to smallest absolute eigenvalue.
pub fn condition_estimate(h: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(h.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|x| x.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `H + lambda I` for user `u`'s block; errors when numerically singular.
pub fn hessian_block(
    params: &ModelParams,
    ds: &Dataset,
    u: usize,
    cfg: &InfluenceConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let block = Block::new(params, ds, u, cfg.param_scope)?;
    damped_hessian(params, ds, &block, cfg)
}

fn damped_hessian(
    params: &ModelParams,
    ds: &Dataset,
    block: &Block,
    cfg: &InfluenceConfig,
) -> Result<DMatrix<f64>> {
    let mut h = block_hessian_average(params, ds, block)?;
    let lambda = resolve_damping(&h, cfg);
    for i in 0..h.nrows() {
        h[(i, i)] += lambda;
    }
    let condition = condition_estimate(&h);
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    Ok(h)
}

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(h: DMatrix<f64>) -> Self {
        match h.clone().cholesky() {
            Some(c) => Factor::Cholesky(c),
            None => Factor::Lu(h.lu()),
        }
    }

    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Factor::Cholesky(c) => Ok(c.solve(b)),
            Factor::Lu(lu) => lu.solve(b).ok_or(Error::Singular {
                condition: f64::INFINITY,
            }),
        }
    }
}

/// Gradient-based estimator for one user: factorizes the damped block once
/// and prices any of the user's interactions against it.
pub struct GradientEstimator<'a> {
    params: &'a ModelParams,
    ds: &'a Dataset,
    block: Block,
    factor: Factor,
    n: f64,
}

impl<'a> GradientEstimator<'a> {
    pub fn new(
        params: &'a ModelParams,
        ds: &'a Dataset,
        u: usize,
        cfg: &InfluenceConfig,
    ) -> Result<Self> {
        let block = Block::new(params, ds, u, cfg.param_scope)?;
        Self::with_block(params, ds, block, cfg)
    }

    /// Estimator over an explicit block.
    pub fn with_block(
        params: &'a ModelParams,
        ds: &'a Dataset,
        block: Block,
        cfg: &InfluenceConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let h = damped_hessian(params, ds, &block, cfg)?;
        let n = match cfg.n_convention {
            NConvention::GlobalN => ds.len(),
            NConvention::UserN => block.touching.len(),
        } as f64;
        Ok(GradientEstimator {
            params,
            ds,
            block,
            factor: Factor::new(h),
            n,
        })
    }

    pub fn block(&self) -> &Block {
        &self.block
    }

    /// `(1/n) (H + lambda I)^-1 grad_block L(z)`.
    pub fn block_update(&self, pos: usize) -> Result<DVector<f64>> {
        let g = block_gradient(self.params, self.ds, &self.block, pos)?;
        Ok(self.factor.solve(&g)? / self.n)
    }

    /// Copy of the parameters with the block moved by [`block_update`](Self::block_update).
    pub fn perturbed(&self, pos: usize) -> Result<ModelParams> {
        let delta = self.block_update(pos)?;
        let mut out = self.params.clone();
        let vals = out.values_mut();
        for (k, &c) in self.block.coords.iter().enumerate() {
            vals[c] += delta[k];
        }
        Ok(out)
    }

    /// Scores of `(u, item)` under the perturbed parameters, for each item.
    /// Uses `work` (a copy of the trained parameters) as scratch and restores it.
    pub fn scores_after_removal(
        &self,
        pos: usize,
        items: &[usize],
        work: &mut ModelParams,
    ) -> Result<Vec<f64>> {
        let delta = self.block_update(pos)?;
        let saved: Vec<f64> = self
            .block
            .coords
            .iter()
            .map(|&c| work.values()[c])
            .collect();
        {
            let vals = work.values_mut();
            for (k, &c) in self.block.coords.iter().enumerate() {
                vals[c] += delta[k];
            }
        }
        let mut scorer = work.scorer();
        let out = items
            .iter()
            .map(|&v| scorer.score(self.block.user, v))
            .collect();
        let vals = work.values_mut();
        for (k, &c) in self.block.coords.iter().enumerate() {
            vals[c] = saved[k];
        }
        Ok(out)
    }
}

fn check_membership(ds: &Dataset, pos: usize, user: usize) -> Result<()> {
    if pos >= ds.len() {
        return Err(Error::OutOfRange {
            what: "interaction",
            index: pos,
            limit: ds.len(),
        });
    }
    if ds.interaction(pos).user != user {
        return Err(Error::Precondition(format!(
            "interaction {pos} belongs to user {}, not target user {user}",
            ds.interaction(pos).user
        )));
    }
    Ok(())
}

/// Parameters after removing interaction `pos` under the gradient-based estimate.
pub fn perturbed_params(
    params: &ModelParams,
    ds: &Dataset,
    pos: usize,
    cfg: &InfluenceConfig,
) -> Result<ModelParams> {
    if pos >= ds.len() {
        return Err(Error::OutOfRange {
            what: "interaction",
            index: pos,
            limit: ds.len(),
        });
    }
    let u = ds.interaction(pos).user;
    GradientEstimator::new(params, ds, u, cfg)?.perturbed(pos)
}

/// Data-based estimate: continue training without `pos`, return the new parameters.
pub fn continued_params(
    params: &ModelParams,
    ds: &Dataset,
    pos: usize,
    cfg: &InfluenceConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    let mut out = params.clone();
    continue_training(
        &mut out,
        ds,
        &[pos],
        cfg.t2_epochs,
        cfg.continuation_lr,
        cfg.continuation_batch_size,
        cfg.seed,
    )?;
    Ok(out)
}

/// `I(z, yhat_{u,v})` for `z` at position `pos` and target `(u, v)`.
pub fn score_after_removal(
    params: &ModelParams,
    ds: &Dataset,
    pos: usize,
    target: (usize, usize),
    cfg: &InfluenceConfig,
) -> Result<InfluenceEstimate> {
    let (u, v) = target;
    check_membership(ds, pos, u)?;
    let y = params.forward(u, v)?;
    let after = match cfg.method {
        Method::GradientBased => perturbed_params(params, ds, pos, cfg)?,
        Method::DataBased => continued_params(params, ds, pos, cfg)?,
    };
    Ok(InfluenceEstimate::new(
        pos,
        u,
        v,
        cfg.method,
        y,
        after.forward(u, v)?,
    ))
}

/// Influence of each of a user's interactions on a fixed list of target items.
///
/// `items[0]` is the current top-1; `scores[i][j]` is `I(z_i, yhat_{u, items[j]})`
/// for `z_i = positions[i]`, and `after[i][j]` the matching `yhat^{-z_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserInfluences {
    pub user: usize,
    pub method: Method,
    pub items: Vec<usize>,
    pub base_scores: Vec<f64>,
    pub positions: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
    pub after: Vec<Vec<f64>>,
}

impl UserInfluences {
    /// Builds the table from individual estimates (any order).
    pub fn from_estimates(
        user: usize,
        items: Vec<usize>,
        base_scores: Vec<f64>,
        estimates: &[InfluenceEstimate],
    ) -> Result<Self> {
        let mut positions: Vec<usize> = estimates.iter().map(|e| e.z).collect();
        positions.sort_unstable();
        positions.dedup();
        let method = estimates
            .first()
            .map(|e| e.method)
            .ok_or_else(|| Error::Empty("no influence estimates".into()))?;
        let mut scores = vec![vec![f64::NAN; items.len()]; positions.len()];
        let mut after = scores.clone();
        for e in estimates {
            if e.user != user || e.method != method {
                return Err(Error::Precondition("estimates mix users or methods".into()));
            }
            let i = positions.binary_search(&e.z).unwrap();
            let j = items.iter().position(|&v| v == e.item).ok_or_else(|| {
                Error::Precondition(format!("item {} not in target list", e.item))
            })?;
            scores[i][j] = e.i_score;
            after[i][j] = e.y_minus_z;
        }
        if scores.iter().flatten().any(|x| x.is_nan()) {
            return Err(Error::Precondition(
                "estimates do not cover every (z, item)".into(),
            ));
        }
        Ok(UserInfluences {
            user,
            method,
            items,
            base_scores,
            positions,
            scores,
            after,
        })
    }

    /// Estimates every `(z, item)` influence for `z` in I_u.
    pub fn estimate(
        params: &ModelParams,
        ds: &Dataset,
        user: usize,
        items: &[usize],
        cfg: &InfluenceConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let positions = ds.user_positions(user).to_vec();
        if positions.is_empty() {
            return Err(Error::Precondition(format!(
                "user {user} has no interactions"
            )));
        }
        let mut scorer = params.scorer();
        let base_scores: Vec<f64> = items.iter().map(|&v| scorer.score(user, v)).collect();
        drop(scorer);
        let after: Vec<Vec<f64>> = match cfg.method {
            Method::GradientBased => {
                let est = GradientEstimator::new(params, ds, user, cfg)?;
                let mut work = params.clone();
                positions
                    .iter()
                    .map(|&pos| est.scores_after_removal(pos, items, &mut work))
                    .collect::<Result<_>>()?
            }
            Method::DataBased => positions
                .iter()
                .map(|&pos| {
                    let p = continued_params(params, ds, pos, cfg)?;
                    let mut s = p.scorer();
                    Ok(items.iter().map(|&v| s.score(user, v)).collect())
                })
                .collect::<Result<_>>()?,
        };
        let scores = after
            .iter()
            .map(|row| base_scores.iter().zip(row).map(|(y, ym)| y - ym).collect())
            .collect();
        Ok(UserInfluences {
            user,
            method: cfg.method,
            items: items.to_vec(),
            base_scores,
            positions,
            scores,
            after,
        })
    }

    pub fn estimates(&self) -> Vec<InfluenceEstimate> {
        let mut out = Vec::with_capacity(self.positions.len() * self.items.len());
        for (i, &z) in self.positions.iter().enumerate() {
            for (j, &v) in self.items.iter().enumerate() {
                out.push(InfluenceEstimate {
                    z,
                    user: self.user,
                    item: v,
                    method: self.method,
                    i_score: self.scores[i][j],
                    y_minus_z: self.after[i][j],
                });
            }
        }
        out
    }
}

/// Audit dump: `z_user,z_item,target_item,method,i_score,y_minus_z`.
pub fn influence_csv(ds: &Dataset, estimates: &[InfluenceEstimate]) -> String {
    let mut out = String::from("z_user,z_item,target_item,method,i_score,y_minus_z\n");
    for e in estimates {
        let z = ds.interaction(e.z);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            z.user, z.item, e.item, e.method, e.i_score, e.y_minus_z
        );
    }
    out
}
