//! Mini-batch SGD.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{Layout, ModelKind, ModelParams, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Trained parameters plus the per-epoch mean training loss.
#[derive(Clone, Debug)]
pub struct Trained {
    pub params: ModelParams,
    /// Mean squared error over each epoch's samples, measured before each batch update.
    pub trace: Vec<f64>,
}

/// Trains from a fresh seeded initialization. Shuffling draws from the
/// `shuffle` stage of `cfg.seed`.
pub fn train(kind: ModelKind, ds: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    train_excluding(kind, ds, &[], cfg)
}

/// Trains from scratch as [`train`] would, but skips the `excluded` positions.
///
/// The epoch order is the shuffle of every position in `ds` with the excluded
/// ones filtered out, so a retrain without a few points sees the remaining
/// points in the same relative order as the original run.
pub fn train_excluding(
    kind: ModelKind,
    ds: &Dataset,
    excluded: &[usize],
    cfg: &TrainConfig,
) -> Result<Trained> {
    let mut params = ModelParams::init(kind, ds, cfg)?;
    let skip = skip_mask(ds, excluded)?;
    if skip.iter().all(|&s| s) {
        return Err(Error::Empty("nothing left to train on".into()));
    }
    let mut rng = seed::rng(cfg.seed, seed::stage::SHUFFLE);
    let trace = Sgd::new(&params).run(
        &mut params,
        ds,
        &skip,
        cfg.epochs,
        cfg.lr,
        cfg.batch_size,
        &mut rng,
    )?;
    Ok(Trained { params, trace })
}

fn skip_mask(ds: &Dataset, excluded: &[usize]) -> Result<Vec<bool>> {
    let mut skip = vec![false; ds.len()];
    for &p in excluded {
        if p >= ds.len() {
            return Err(Error::OutOfRange {
                what: "interaction",
                index: p,
                limit: ds.len(),
            });
        }
        skip[p] = true;
    }
    Ok(skip)
}

/// Continues SGD from `params` over `ds` minus the `excluded` positions.
/// Shuffling draws from the `continue` stage of `seed`.
pub fn continue_training(
    params: &mut ModelParams,
    ds: &Dataset,
    excluded: &[usize],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Err(Error::Config(
            "continuation needs at least one epoch".into(),
        ));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let skip = skip_mask(ds, excluded)?;
    if skip.iter().all(|&s| s) {
        return Err(Error::Empty("nothing left to train on".into()));
    }
    let mut rng = seed::rng(seed, seed::stage::CONTINUE);
    Sgd::new(params).run(params, ds, &skip, epochs, lr, batch_size, &mut rng)
}

/// Gradient buffer that tracks which sparse rows a batch touched.
struct Sgd {
    grad: Vec<f64>,
    touched: Vec<(usize, usize)>,
    dense: std::ops::Range<usize>,
}

impl Sgd {
    fn new(params: &ModelParams) -> Self {
        let dense = match &params.layout {
            Layout::Ncf(l) => l.dense_start()..l.len,
            Layout::Fm(_) => 0..1,
        };
        Sgd {
            grad: vec![0.0; params.len()],
            touched: Vec::new(),
            dense,
        }
    }

    fn touch(&mut self, params: &ModelParams, u: usize, v: usize) {
        match &params.layout {
            Layout::Ncf(l) => {
                self.touched.push((l.user_row(u), l.d));
                self.touched.push((l.item_row(v), l.d));
            }
            Layout::Fm(l) => {
                self.touched.push((l.b_user + u, 1));
                self.touched.push((l.b_item + v, 1));
                self.touched.push((l.user_row(u), l.d));
                self.touched.push((l.item_row(v), l.d));
            }
        }
    }

    /// `theta -= lr * grad` on touched coordinates; zeroes them afterwards so
    /// rows touched twice in one batch are applied once.
    fn apply(&mut self, values: &mut [f64], lr: f64) {
        for &(start, len) in &self.touched {
            for (p, g) in values[start..start + len]
                .iter_mut()
                .zip(&mut self.grad[start..start + len])
            {
                *p -= lr * *g;
                *g = 0.0;
            }
        }
        self.touched.clear();
        let dense = self.dense.clone();
        for (p, g) in values[dense.clone()].iter_mut().zip(&mut self.grad[dense]) {
            *p -= lr * *g;
            *g = 0.0;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        mut self,
        params: &mut ModelParams,
        ds: &Dataset,
        skip: &[bool],
        epochs: usize,
        lr: f64,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let scale = params.rating_scale();
        let mut all: Vec<usize> = (0..ds.len()).collect();
        let mut order = Vec::with_capacity(ds.len());
        let mut trace = Vec::with_capacity(epochs);
        for epoch in 1..=epochs {
            all.shuffle(rng);
            order.clear();
            order.extend(all.iter().copied().filter(|&p| !skip[p]));
            let mut total = 0.0;
            for batch in order.chunks(batch_size) {
                let weight = 1.0 / batch.len() as f64;
                {
                    let mut grad = std::mem::take(&mut self.grad);
                    let mut scorer = params.scorer();
                    for &pos in batch {
                        let z = ds.interaction(pos);
                        let loss = scorer.accumulate(
                            z.user,
                            z.item,
                            scale.target(z.rating),
                            weight,
                            &mut grad,
                        );
                        if !loss.is_finite() {
                            return Err(Error::Divergence { epoch });
                        }
                        total += loss;
                    }
                    self.grad = grad;
                }
                for &pos in batch {
                    let z = ds.interaction(pos);
                    self.touch(params, z.user, z.item);
                }
                self.apply(&mut params.values, lr);
            }
            let mean = total / order.len() as f64;
            if !mean.is_finite() || !params.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            trace.push(mean);
        }
        Ok(trace)
    }
}
