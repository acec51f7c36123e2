//! Base recommenders (NCF and FM) with analytic gradients, SGD training and ranking.

mod checkpoint;
mod fm;
pub(crate) mod linalg;
mod ncf;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Interaction};
use crate::error::{Error, Result};
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use train::{continue_training, train, train_excluding, Trained};

use fm::FmLayout;
use ncf::NcfLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ncf,
    Fm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ncf => "ncf",
            ModelKind::Fm => "fm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ncf" => Ok(ModelKind::Ncf),
            "fm" => Ok(ModelKind::Fm),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Scale in which the model predicts and the loss is measured.
///
/// `Unit` maps ratings to [0, 1] by `(y - 1) / 4`; NCF then ends in a sigmoid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingScale {
    Raw,
    #[default]
    Unit,
}

impl RatingScale {
    pub fn target(self, rating: f64) -> f64 {
        match self {
            RatingScale::Raw => rating,
            RatingScale::Unit => (rating - 1.0) / 4.0,
        }
    }
}

impl FromStr for RatingScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(RatingScale::Raw),
            "unit" => Ok(RatingScale::Unit),
            other => Err(Error::Config(format!("unknown rating scale `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// NCF hidden widths; `None` means `[2d, d]`.
    #[serde(default)]
    pub hidden_widths: Option<Vec<usize>>,
    #[serde(default)]
    pub rating_scale: RatingScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 32,
            lr: 0.05,
            epochs: 20,
            batch_size: 32,
            seed: 1,
            hidden_widths: None,
            rating_scale: RatingScale::Unit,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be >= 1".into()));
        }
        if self.lr.is_nan() || self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(
                "lr must be a finite non-negative number".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(h) = &self.hidden_widths {
            if h.contains(&0) {
                return Err(Error::Config("hidden widths must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.hidden_widths
            .clone()
            .unwrap_or_else(|| vec![2 * self.d, self.d])
    }
}

/// Shape and identity of a parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_kind: ModelKind,
    pub d: usize,
    pub hidden_widths: Vec<usize>,
    pub num_users: usize,
    pub num_items: usize,
    pub seed: u64,
    pub rating_scale: RatingScale,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, num_users: usize, num_items: usize, cfg: &TrainConfig) -> Self {
        ModelSpec {
            model_kind: kind,
            d: cfg.d,
            hidden_widths: match kind {
                ModelKind::Ncf => cfg.hidden(),
                ModelKind::Fm => Vec::new(),
            },
            num_users,
            num_items,
            seed: cfg.seed,
            rating_scale: cfg.rating_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Layout {
    Ncf(NcfLayout),
    Fm(FmLayout),
}

impl Layout {
    fn new(spec: &ModelSpec) -> Self {
        match spec.model_kind {
            ModelKind::Ncf => Layout::Ncf(NcfLayout::new(
                spec.num_users,
                spec.num_items,
                spec.d,
                &spec.hidden_widths,
            )),
            ModelKind::Fm => Layout::Fm(FmLayout::new(spec.num_users, spec.num_items, spec.d)),
        }
    }

    fn len(&self) -> usize {
        match self {
            Layout::Ncf(l) => l.len,
            Layout::Fm(l) => l.len,
        }
    }
}

/// Ranked recommendation entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item: usize,
    pub score: f64,
}

/// First and second derivatives of the predicted score with respect to the
/// per-user and per-item parameters of one (user, item) pair.
#[derive(Clone, Debug)]
pub struct ScoreDerivatives {
    pub score: f64,
    /// Flat parameter indices the remaining fields refer to.
    pub coords: Vec<usize>,
    pub grad: Vec<f64>,
    /// Row-major `coords.len() x coords.len()`.
    pub hess: Vec<f64>,
}

/// Trainable parameters of either model, stored as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layout: Layout,
    values: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ModelParams {
    /// All-zero parameters of the given shape.
    pub fn zeroed(spec: ModelSpec) -> Self {
        let layout = Layout::new(&spec);
        let values = vec![0.0; layout.len()];
        ModelParams {
            spec,
            layout,
            values,
        }
    }

    /// Seeded initialization: embeddings uniform in `±1/sqrt(d)`, MLP weights
    /// uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(kind: ModelKind, ds: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = ModelSpec::new(kind, ds.num_users(), ds.num_items(), cfg);
        let mut params = Self::zeroed(spec);
        let mut rng = seed::rng(cfg.seed, seed::stage::INIT);
        let emb = 1.0 / (cfg.d as f64).sqrt();
        let layout = params.layout.clone();
        match &layout {
            Layout::Ncf(l) => {
                for x in &mut params.values[..l.dense_start()] {
                    *x = rng.gen_range(-emb..=emb);
                }
                for layer in &l.layers {
                    let bound = 1.0 / (layer.fan_in as f64).sqrt();
                    for x in &mut params.values[layer.w..layer.b] {
                        *x = rng.gen_range(-bound..=bound);
                    }
                }
            }
            Layout::Fm(l) => {
                for x in &mut params.values[l.v_user..] {
                    *x = rng.gen_range(-emb..=emb);
                }
            }
        }
        Ok(params)
    }

    pub fn from_values(spec: ModelSpec, values: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(&spec);
        if layout.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} values, found {}",
                layout.len(),
                values.len()
            )));
        }
        Ok(ModelParams {
            spec,
            layout,
            values,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.model_kind
    }

    pub fn rating_scale(&self) -> RatingScale {
        self.spec.rating_scale
    }

    pub fn num_users(&self) -> usize {
        self.spec.num_users
    }

    pub fn num_items(&self) -> usize {
        self.spec.num_items
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Parameters owned by user `u` (NCF: embedding row; FM: bias then factors).
    pub fn user_coords(&self, u: usize) -> Vec<usize> {
        match &self.layout {
            Layout::Ncf(l) => (l.user_row(u)..l.user_row(u) + l.d).collect(),
            Layout::Fm(l) => std::iter::once(l.b_user + u)
                .chain(l.user_row(u)..l.user_row(u) + l.d)
                .collect(),
        }
    }

    /// Parameters owned by item `v`.
    pub fn item_coords(&self, v: usize) -> Vec<usize> {
        match &self.layout {
            Layout::Ncf(l) => (l.item_row(v)..l.item_row(v) + l.d).collect(),
            Layout::Fm(l) => std::iter::once(l.b_item + v)
                .chain(l.item_row(v)..l.item_row(v) + l.d)
                .collect(),
        }
    }

    fn check_ids(&self, u: usize, v: usize) -> Result<()> {
        if u >= self.spec.num_users {
            return Err(Error::OutOfRange {
                what: "user",
                index: u,
                limit: self.spec.num_users,
            });
        }
        if v >= self.spec.num_items {
            return Err(Error::OutOfRange {
                what: "item",
                index: v,
                limit: self.spec.num_items,
            });
        }
        Ok(())
    }

    /// Predicted score for (u, v) in the model's rating scale.
    pub fn forward(&self, u: usize, v: usize) -> Result<f64> {
        self.check_ids(u, v)?;
        Ok(self.scorer().score(u, v))
    }

    pub fn scorer(&self) -> Scorer<'_> {
        Scorer {
            params: self,
            scratch: match &self.layout {
                Layout::Ncf(l) => Some(ncf::Scratch::new(l)),
                Layout::Fm(_) => None,
            },
            input_grad: vec![0.0; 2 * self.spec.d],
        }
    }

    /// Squared error `(yhat - y)^2` and its gradient over every parameter.
    pub fn loss_and_grad(&self, z: &Interaction) -> Result<(f64, Vec<f64>)> {
        self.check_ids(z.user, z.item)?;
        let mut grad = vec![0.0; self.len()];
        let mut scorer = self.scorer();
        let loss = scorer.accumulate(
            z.user,
            z.item,
            self.rating_scale().target(z.rating),
            1.0,
            &mut grad,
        );
        Ok((loss, grad))
    }

    /// Derivatives of the score with respect to the user/item parameters of (u, v).
    ///
    /// NCF: the MLP is piecewise linear in its input, so the second derivative
    /// of the score is `sigmoid''(s) g g^T` on the unit scale (zero on raw),
    /// with `g = ds/d[e_u; e_v]`. FM: the only curvature is the bilinear
    /// coupling between the user and item factors.
    pub fn score_derivatives(&self, u: usize, v: usize) -> Result<ScoreDerivatives> {
        self.check_ids(u, v)?;
        let out = match &self.layout {
            Layout::Ncf(l) => {
                let d = l.d;
                let mut scratch = ncf::Scratch::new(l);
                let s = ncf::forward(&self.values, l, u, v, &mut scratch);
                let mut g = vec![0.0; 2 * d];
                ncf::backward(&self.values, l, &mut scratch, 1.0, None, &mut g);
                let coords: Vec<usize> = (l.user_row(u)..l.user_row(u) + d)
                    .chain(l.item_row(v)..l.item_row(v) + d)
                    .collect();
                let m = 2 * d;
                let mut hess = vec![0.0; m * m];
                let score = match self.rating_scale() {
                    RatingScale::Raw => s,
                    RatingScale::Unit => {
                        let y = sigmoid(s);
                        let d1 = y * (1.0 - y);
                        let d2 = d1 * (1.0 - 2.0 * y);
                        for i in 0..m {
                            for j in 0..m {
                                hess[i * m + j] = d2 * g[i] * g[j];
                            }
                        }
                        for gi in g.iter_mut() {
                            *gi *= d1;
                        }
                        y
                    }
                };
                ScoreDerivatives {
                    score,
                    coords,
                    grad: g,
                    hess,
                }
            }
            Layout::Fm(l) => {
                let d = l.d;
                let (ur, vr) = (l.user_row(u), l.item_row(v));
                let mut coords = vec![0, l.b_user + u, l.b_item + v];
                coords.extend(ur..ur + d);
                coords.extend(vr..vr + d);
                let mut grad = vec![1.0, 1.0, 1.0];
                grad.extend_from_slice(&self.values[vr..vr + d]);
                grad.extend_from_slice(&self.values[ur..ur + d]);
                let m = 3 + 2 * d;
                let mut hess = vec![0.0; m * m];
                for k in 0..d {
                    hess[(3 + k) * m + 3 + d + k] = 1.0;
                    hess[(3 + d + k) * m + 3 + k] = 1.0;
                }
                ScoreDerivatives {
                    score: fm::score(&self.values, l, u, v),
                    coords,
                    grad,
                    hess,
                }
            }
        };
        Ok(out)
    }

    /// Scores for every item for user `u`.
    pub fn scores_for_user(&self, u: usize) -> Result<Vec<f64>> {
        self.check_ids(u, 0)?;
        let mut scorer = self.scorer();
        Ok((0..self.num_items()).map(|v| scorer.score(u, v)).collect())
    }

    /// Items not in I_u ranked by score (descending; ties by ascending item id).
    pub fn top_k(&self, u: usize, ds: &Dataset, k: usize) -> Result<Vec<Prediction>> {
        if u >= ds.num_users() {
            return Err(Error::OutOfRange {
                what: "user",
                index: u,
                limit: ds.num_users(),
            });
        }
        self.top_k_excluding(u, &ds.interacted_mask(u), k)
    }

    /// Like [`top_k`](Self::top_k) with an explicit per-item exclusion mask.
    pub fn top_k_excluding(
        &self,
        u: usize,
        excluded: &[bool],
        k: usize,
    ) -> Result<Vec<Prediction>> {
        if k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        let scores = self.scores_for_user(u)?;
        let mut ranked: Vec<Prediction> = scores
            .into_iter()
            .enumerate()
            .filter(|(v, _)| !excluded.get(*v).copied().unwrap_or(false))
            .map(|(item, score)| Prediction { item, score })
            .collect();
        if ranked.is_empty() {
            return Err(Error::Precondition(format!(
                "user {u} has no uninteracted items"
            )));
        }
        ranked.sort_by(rank_order);
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Mean squared error over `ds` in the model's rating scale.
    pub fn mse(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Empty("mse over an empty dataset".into()));
        }
        let scale = self.rating_scale();
        let mut scorer = self.scorer();
        let mut total = 0.0;
        for z in ds.interactions() {
            self.check_ids(z.user, z.item)?;
            let r = scorer.score(z.user, z.item) - scale.target(z.rating);
            total += r * r;
        }
        Ok(total / ds.len() as f64)
    }
}

/// Descending score, then ascending item id.
pub fn rank_order(a: &Prediction, b: &Prediction) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
}

/// Reusable evaluation context (holds NCF activations).
pub struct Scorer<'a> {
    params: &'a ModelParams,
    scratch: Option<ncf::Scratch>,
    input_grad: Vec<f64>,
}

impl Scorer<'_> {
    /// Unchecked score; ids must be in range.
    pub fn score(&mut self, u: usize, v: usize) -> f64 {
        let p = self.params;
        match &p.layout {
            Layout::Ncf(l) => {
                let s = ncf::forward(&p.values, l, u, v, self.scratch.as_mut().unwrap());
                match p.rating_scale() {
                    RatingScale::Raw => s,
                    RatingScale::Unit => sigmoid(s),
                }
            }
            Layout::Fm(l) => fm::score(&p.values, l, u, v),
        }
    }

    /// Adds `weight * dL/dtheta` for `L = (yhat - target)^2` into `grad`; returns `L`.
    pub(crate) fn accumulate(
        &mut self,
        u: usize,
        v: usize,
        target: f64,
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        let p = self.params;
        match &p.layout {
            Layout::Ncf(l) => {
                let scratch = self.scratch.as_mut().unwrap();
                let s = ncf::forward(&p.values, l, u, v, scratch);
                let (yhat, dyds) = match p.rating_scale() {
                    RatingScale::Raw => (s, 1.0),
                    RatingScale::Unit => {
                        let y = sigmoid(s);
                        (y, y * (1.0 - y))
                    }
                };
                let r = yhat - target;
                let ig = &mut self.input_grad;
                ncf::backward(
                    &p.values,
                    l,
                    scratch,
                    weight * 2.0 * r * dyds,
                    Some(grad),
                    ig,
                );
                ncf::scatter_input_grad(grad, l, u, v, ig);
                r * r
            }
            Layout::Fm(l) => {
                let r = fm::score(&p.values, l, u, v) - target;
                fm::accumulate_grad(&p.values, l, u, v, weight * 2.0 * r, grad);
                r * r
            }
        }
    }
}
