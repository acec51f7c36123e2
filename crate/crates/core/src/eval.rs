//! Verification by retraining, explanation metrics, and the embedding sweep.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{self, Algorithm, Explanation, ExplanationRecord, SearchConfig, Status};
use crate::influence::{InfluenceConfig, UserInfluences};
use crate::models::{train, train_excluding, ModelKind, ModelParams, TrainConfig};
use crate::seed;

/// Samples `n` users uniformly without replacement among users with at least
/// one interaction and at least one uninteracted item. Output is sorted.
pub fn sample_users(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = (0..ds.num_users())
        .filter(|&u| {
            let m = ds.user_positions(u).len();
            m > 0 && m < ds.num_items()
        })
        .collect();
    if n > eligible.len() {
        return Err(Error::Config(format!(
            "cannot sample {n} users, only {} are eligible",
            eligible.len()
        )));
    }
    let mut rng = seed::rng(seed, seed::stage::SAMPLE);
    let mut out: Vec<usize> = index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    out.sort_unstable();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifiedExplanation {
    pub explanation: Explanation,
    pub actual_new_top1: Option<usize>,
    pub success: bool,
    /// The verification retrain diverged; counted as a failure.
    pub diverged: bool,
}

/// Retrains without `removed` (same seed and settings) and returns the new
/// top-1 for `u`. Items `u` interacted with originally, including the removed
/// ones, are not candidates.
pub fn retrained_top1(
    kind: ModelKind,
    ds: &Dataset,
    cfg: &TrainConfig,
    u: usize,
    removed: &[usize],
) -> Result<usize> {
    for &p in removed {
        if p >= ds.len() || ds.interaction(p).user != u {
            return Err(Error::Precondition(format!(
                "position {p} is not an interaction of user {u}"
            )));
        }
    }
    let params = train_excluding(kind, ds, removed, cfg)?.params;
    let top = params.top_k_excluding(u, &ds.interacted_mask(u), 1)?;
    Ok(top[0].item)
}

fn verified(expl: &Explanation, outcome: Result<usize>) -> Result<VerifiedExplanation> {
    match outcome {
        Ok(top) => Ok(VerifiedExplanation {
            explanation: expl.clone(),
            actual_new_top1: Some(top),
            success: expl.rec_star == Some(top),
            diverged: false,
        }),
        Err(Error::Divergence { .. }) => Ok(VerifiedExplanation {
            explanation: expl.clone(),
            actual_new_top1: None,
            success: false,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

/// Checks a found explanation by retraining from scratch without its removal set.
pub fn retrain_verify(
    kind: ModelKind,
    ds: &Dataset,
    expl: &Explanation,
    cfg: &TrainConfig,
) -> Result<VerifiedExplanation> {
    if expl.status != Status::Found {
        return Err(Error::Precondition(
            "only found explanations can be verified".into(),
        ));
    }
    verified(
        expl,
        retrained_top1(kind, ds, cfg, expl.user, &expl.removed),
    )
}

/// Explanation success percentage over `attempted` users.
pub fn esp(results: &[VerifiedExplanation], attempted: usize) -> Result<f64> {
    if attempted == 0 {
        return Err(Error::Config("ESP over zero attempted users".into()));
    }
    let hits = results.iter().filter(|r| r.success).count();
    if hits > attempted {
        return Err(Error::Precondition(format!(
            "{hits} successes out of {attempted} attempts"
        )));
    }
    Ok(100.0 * hits as f64 / attempted as f64)
}

/// Average removal-set size over successful explanations; `None` without any.
pub fn aes(results: &[VerifiedExplanation]) -> Option<f64> {
    let sizes: Vec<usize> = results
        .iter()
        .filter(|r| r.success)
        .map(|r| r.explanation.removed.len())
        .collect();
    if sizes.is_empty() {
        None
    } else {
        Some(sizes.iter().sum::<usize>() as f64 / sizes.len() as f64)
    }
}

/// One explainer: base model, influence estimation and search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub label: String,
    pub model_kind: ModelKind,
    pub train: TrainConfig,
    pub influence: InfluenceConfig,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub max_removals: Option<usize>,
}

impl ExplainerConfig {
    /// NCF, gradient-based influence, iterative greedy search.
    pub fn accent(train: TrainConfig) -> Self {
        ExplainerConfig {
            label: "ACCENT".into(),
            model_kind: ModelKind::Ncf,
            influence: InfluenceConfig::gradient_based(),
            train,
            algorithm: Algorithm::IterativeGreedy,
            max_removals: None,
        }
    }

    /// NCF, gradient-based influence, greedy search.
    pub fn fia(train: TrainConfig) -> Self {
        ExplainerConfig {
            label: "FIA".into(),
            algorithm: Algorithm::Greedy,
            ..Self::accent(train)
        }
    }

    /// FM, data-based influence, iterative greedy search.
    pub fn db_fm(train: TrainConfig) -> Self {
        ExplainerConfig {
            label: "DB-FM".into(),
            model_kind: ModelKind::Fm,
            influence: InfluenceConfig::data_based(&train),
            train,
            algorithm: Algorithm::IterativeGreedy,
            max_removals: None,
        }
    }

    /// Copy with every seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.train.seed = seed;
        c.influence.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.influence.validate()?;
        if self.max_removals == Some(0) {
            return Err(Error::Config("max_removals must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_users: usize,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_users: 100,
            ks: vec![5],
            seeds: vec![1],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "K list and seed list must be non-empty".into(),
            ));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k < 2) {
            return Err(Error::Config(format!(
                "K = {k} leaves no candidate (need K >= 2)"
            )));
        }
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-user, per-K outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub seed: u64,
    pub user: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Absent when the search could not run for this user.
    pub record: Option<ExplanationRecord>,
    pub actual_new_top1: Option<usize>,
    pub success: bool,
    pub diverged: bool,
    /// Why the search could not run (counted as a failure).
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    #[serde(rename = "K")]
    pub k: usize,
    pub attempted: usize,
    pub successes: usize,
    pub esp: f64,
    pub aes: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub mse: f64,
    pub users: Vec<usize>,
    pub per_k: Vec<KSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub explainer: String,
    pub config: ExplainerConfig,
    /// Mean training MSE over seeds.
    pub mse: f64,
    /// ESP and AES averaged over seeds (AES over seeds that had successes).
    pub per_k: Vec<KSummary>,
    pub num_users_sampled: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    pub outcomes: Vec<UserOutcome>,
}

impl ExperimentReport {
    pub fn summary(&self, k: usize) -> Option<&KSummary> {
        self.per_k.iter().find(|s| s.k == k)
    }
}

/// Report CSV: `explainer,K,esp,aes,mse`, AES empty when absent.
pub fn report_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("explainer,K,esp,aes,mse\n");
    for r in reports {
        for s in &r.per_k {
            let aes = s.aes.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.explainer, s.k, s.esp, aes, r.mse);
        }
    }
    out
}

/// Shared state for one seed: trained base models and cached verification retrains.
struct Session<'a> {
    ds: &'a Dataset,
    models: Vec<(ModelKind, TrainConfig, ModelParams, f64)>,
    retrains: HashMap<(usize, usize, Vec<usize>), std::result::Result<usize, String>>,
}

impl<'a> Session<'a> {
    fn new(ds: &'a Dataset) -> Self {
        Session {
            ds,
            models: Vec::new(),
            retrains: HashMap::new(),
        }
    }

    fn model(&mut self, kind: ModelKind, cfg: &TrainConfig) -> Result<usize> {
        if let Some(i) = self.models.iter().position(|m| m.0 == kind && &m.1 == cfg) {
            return Ok(i);
        }
        let params = train(kind, self.ds, cfg)?.params;
        let mse = params.mse(self.ds)?;
        self.models.push((kind, cfg.clone(), params, mse));
        Ok(self.models.len() - 1)
    }

    /// Runs every missing retrain, then answers from the cache.
    fn verify_all(&mut self, model: usize, requests: &[(usize, Vec<usize>)]) {
        let (kind, cfg) = (self.models[model].0, self.models[model].1.clone());
        let mut todo: Vec<(usize, Vec<usize>)> = Vec::new();
        for (u, removed) in requests {
            let mut key = removed.clone();
            key.sort_unstable();
            if !self.retrains.contains_key(&(model, *u, key.clone()))
                && !todo.contains(&(*u, key.clone()))
            {
                todo.push((*u, key));
            }
        }
        let ds = self.ds;
        let done: Vec<_> = todo
            .into_par_iter()
            .map(|(u, key)| {
                let r = retrained_top1(kind, ds, &cfg, u, &key).map_err(|e| e.to_string());
                ((model, u, key), r)
            })
            .collect();
        self.retrains.extend(done);
    }

    fn lookup(
        &self,
        model: usize,
        u: usize,
        removed: &[usize],
    ) -> &std::result::Result<usize, String> {
        let mut key = removed.to_vec();
        key.sort_unstable();
        &self.retrains[&(model, u, key)]
    }
}

/// Runs every explainer over the same sampled users for each seed.
pub fn run_experiment(
    ds: &Dataset,
    explainers: &[ExplainerConfig],
    eval: &EvalConfig,
) -> Result<Vec<ExperimentReport>> {
    eval.validate()?;
    for e in explainers {
        e.validate()?;
    }
    let kmax = *eval.ks.iter().max().unwrap();
    let mut reports: Vec<ExperimentReport> = explainers
        .iter()
        .map(|e| ExperimentReport {
            explainer: e.label.clone(),
            config: e.clone(),
            mse: 0.0,
            per_k: Vec::new(),
            num_users_sampled: eval.n_users,
            seeds: eval.seeds.clone(),
            runs: Vec::new(),
            outcomes: Vec::new(),
        })
        .collect();

    for &s in &eval.seeds {
        let users = sample_users(ds, eval.n_users, s)?;
        let mut session = Session::new(ds);
        for (report, base) in reports.iter_mut().zip(explainers) {
            let ex = base.with_seed(s);
            let m = session.model(ex.model_kind, &ex.train)?;
            let params = &session.models[m].2;
            let tables: Vec<std::result::Result<UserInfluences, String>> = users
                .par_iter()
                .map(|&u| explain::user_influences(params, ds, u, kmax, &ex.influence))
                .collect::<Vec<_>>()
                .into_iter()
                .map(|t| match t {
                    Ok(t) => Ok(Ok(t)),
                    Err(e) => recoverable(e).map(Err),
                })
                .collect::<Result<_>>()?;

            // (K, user, explanation or the reason the search could not run)
            let mut rows: Vec<(usize, usize, std::result::Result<Explanation, String>)> =
                Vec::new();
            for &k in &eval.ks {
                let scfg = SearchConfig {
                    k,
                    algorithm: ex.algorithm,
                    max_removals: ex.max_removals,
                };
                for (&u, table) in users.iter().zip(&tables) {
                    let e = match table {
                        Ok(t) => match explain::explain_with(t, &scfg) {
                            Ok(x) => Ok(x),
                            Err(e) => Err(recoverable(e)?),
                        },
                        Err(msg) => Err(msg.clone()),
                    };
                    rows.push((k, u, e));
                }
            }
            let requests: Vec<(usize, Vec<usize>)> = rows
                .iter()
                .filter_map(|(_, _, e)| e.as_ref().ok())
                .filter(|e| e.is_found())
                .map(|e| (e.user, e.removed.clone()))
                .collect();
            session.verify_all(m, &requests);

            let mut per_k = Vec::new();
            for &k in &eval.ks {
                let mut verified = Vec::new();
                for (_, u, e) in rows.iter().filter(|r| r.0 == k) {
                    let outcome = match e {
                        Ok(expl) => {
                            let (top, diverged) = if expl.is_found() {
                                match session.lookup(m, *u, &expl.removed) {
                                    Ok(t) => (Some(*t), false),
                                    Err(_) => (None, true),
                                }
                            } else {
                                (None, false)
                            };
                            let v = VerifiedExplanation {
                                explanation: expl.clone(),
                                actual_new_top1: top,
                                success: expl.is_found() && top.is_some() && top == expl.rec_star,
                                diverged,
                            };
                            let o = UserOutcome {
                                seed: s,
                                user: *u,
                                k,
                                record: Some(ExplanationRecord::new(
                                    ds,
                                    expl,
                                    ex.algorithm,
                                    ex.influence.method,
                                    k,
                                )),
                                actual_new_top1: top,
                                success: v.success,
                                diverged,
                                error: None,
                            };
                            verified.push(v);
                            o
                        }
                        Err(msg) => UserOutcome {
                            seed: s,
                            user: *u,
                            k,
                            record: None,
                            actual_new_top1: None,
                            success: false,
                            diverged: false,
                            error: Some(msg.clone()),
                        },
                    };
                    report.outcomes.push(outcome);
                }
                per_k.push(KSummary {
                    k,
                    attempted: users.len(),
                    successes: verified.iter().filter(|v| v.success).count(),
                    esp: esp(&verified, users.len())?,
                    aes: aes(&verified),
                });
            }
            report.runs.push(SeedRun {
                seed: s,
                mse: session.models[m].3,
                users: users.clone(),
                per_k,
            });
        }
    }

    for r in &mut reports {
        let n = r.runs.len() as f64;
        r.mse = r.runs.iter().map(|x| x.mse).sum::<f64>() / n;
        r.per_k = eval
            .ks
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let rows: Vec<&KSummary> = r.runs.iter().map(|x| &x.per_k[i]).collect();
                let aes: Vec<f64> = rows.iter().filter_map(|x| x.aes).collect();
                KSummary {
                    k,
                    attempted: rows.iter().map(|x| x.attempted).sum(),
                    successes: rows.iter().map(|x| x.successes).sum(),
                    esp: rows.iter().map(|x| x.esp).sum::<f64>() / n,
                    aes: (!aes.is_empty()).then(|| aes.iter().sum::<f64>() / aes.len() as f64),
                }
            })
            .collect();
    }
    Ok(reports)
}

/// Per-user search failures (ill-conditioned block, empty candidate pool)
/// become failed attempts; anything else aborts the experiment.
/// Verifies stored explanation records against `ds` with the explainer's
/// training settings. `on_outcome` sees each outcome as soon as it is known.
pub fn evaluate_records(
    ds: &Dataset,
    explainer: &ExplainerConfig,
    records: &[ExplanationRecord],
    mut on_outcome: impl FnMut(&UserOutcome) -> Result<()>,
) -> Result<ExperimentReport> {
    explainer.validate()?;
    if records.is_empty() {
        return Err(Error::Empty("no explanation records".into()));
    }
    let seed = explainer.train.seed;
    let mut session = Session::new(ds);
    let m = session.model(explainer.model_kind, &explainer.train)?;
    let mut ks: Vec<usize> = records.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut outcomes = Vec::with_capacity(records.len());
    let mut verified: Vec<(usize, VerifiedExplanation)> = Vec::new();
    for rec in records {
        let expl = rec.to_explanation(ds)?;
        let mut outcome = UserOutcome {
            seed,
            user: rec.user,
            k: rec.k,
            record: Some(rec.clone()),
            actual_new_top1: None,
            success: false,
            diverged: false,
            error: None,
        };
        if expl.is_found() {
            session.verify_all(m, &[(expl.user, expl.removed.clone())]);
            match session.lookup(m, expl.user, &expl.removed) {
                Ok(t) => outcome.actual_new_top1 = Some(*t),
                Err(_) => outcome.diverged = true,
            }
            outcome.success =
                outcome.actual_new_top1.is_some() && outcome.actual_new_top1 == expl.rec_star;
        }
        verified.push((
            rec.k,
            VerifiedExplanation {
                explanation: expl,
                actual_new_top1: outcome.actual_new_top1,
                success: outcome.success,
                diverged: outcome.diverged,
            },
        ));
        on_outcome(&outcome)?;
        outcomes.push(outcome);
    }
    let mut per_k = Vec::new();
    for &k in &ks {
        let vs: Vec<VerifiedExplanation> = verified
            .iter()
            .filter(|v| v.0 == k)
            .map(|v| v.1.clone())
            .collect();
        per_k.push(KSummary {
            k,
            attempted: vs.len(),
            successes: vs.iter().filter(|v| v.success).count(),
            esp: esp(&vs, vs.len())?,
            aes: aes(&vs),
        });
    }
    let mut users: Vec<usize> = records.iter().map(|r| r.user).collect();
    users.sort_unstable();
    users.dedup();
    let mse = session.models[m].3;
    Ok(ExperimentReport {
        explainer: explainer.label.clone(),
        config: explainer.clone(),
        mse,
        per_k: per_k.clone(),
        num_users_sampled: users.len(),
        seeds: vec![seed],
        runs: vec![SeedRun {
            seed,
            mse,
            users,
            per_k,
        }],
        outcomes,
    })
}

fn recoverable(e: Error) -> Result<String> {
    match e {
        Error::Singular { .. } | Error::Precondition(_) => Ok(e.to_string()),
        other => Err(other),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub mse: f64,
    /// Absent when the sweep ran without explanation users.
    pub esp: Option<f64>,
    pub aes: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub n_users: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// Pearson correlation of training MSE with ESP and with AES across dims.
    pub corr_mse_esp: Option<f64>,
    pub corr_mse_aes: Option<f64>,
}

/// Trains the explainer's model at each embedding size, then explains and
/// verifies `n_users` sampled users at pool size `k` (`n_users = 0` skips that part).
pub fn sweep_embedding(
    ds: &Dataset,
    dims: &[usize],
    base: &ExplainerConfig,
    k: usize,
    n_users: usize,
    seed: u64,
) -> Result<SweepReport> {
    if dims.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one embedding size".into(),
        ));
    }
    if let Some(&bad) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::Config(format!(
            "embedding size must be >= 1, got {bad}"
        )));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let mut ex = base.with_seed(seed);
        ex.train.d = d;
        let row = if n_users == 0 {
            ex.validate()?;
            let params = train(ex.model_kind, ds, &ex.train)?.params;
            SweepRow {
                d,
                mse: params.mse(ds)?,
                esp: None,
                aes: None,
            }
        } else {
            let eval = EvalConfig {
                n_users,
                ks: vec![k],
                seeds: vec![seed],
            };
            let r = run_experiment(ds, &[ex], &eval)?.remove(0);
            SweepRow {
                d,
                mse: r.mse,
                esp: Some(r.per_k[0].esp),
                aes: r.per_k[0].aes,
            }
        };
        rows.push(row);
    }
    let pairs = |f: fn(&SweepRow) -> Option<f64>| -> (Vec<f64>, Vec<f64>) {
        rows.iter().filter_map(|r| f(r).map(|y| (r.mse, y))).unzip()
    };
    let (x1, y1) = pairs(|r| r.esp);
    let (x2, y2) = pairs(|r| r.aes);
    Ok(SweepReport {
        k,
        n_users,
        seed,
        corr_mse_esp: pearson(&x1, &y1),
        corr_mse_aes: pearson(&x2, &y2),
        rows,
    })
}

/// Pearson correlation; `None` with fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Sweep CSV: `d,mse,esp,aes`.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("d,mse,esp,aes\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{}", r.d, r.mse, opt(r.esp), opt(r.aes));
    }
    out
}

/// Two-panel line chart: training MSE vs d and ESP vs d.
pub fn sweep_svg(report: &SweepReport) -> String {
    const W: f64 = 320.0;
    const H: f64 = 220.0;
    const PAD: f64 = 40.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        2.0 * W,
        H
    );
    let ds: Vec<f64> = report.rows.iter().map(|r| r.d as f64).collect();
    let panels: [(&str, Vec<Option<f64>>); 2] = [
        (
            "training MSE",
            report.rows.iter().map(|r| Some(r.mse)).collect(),
        ),
        ("ESP (%)", report.rows.iter().map(|r| r.esp).collect()),
    ];
    for (i, (title, ys)) in panels.iter().enumerate() {
        let x0 = i as f64 * W;
        let _ = writeln!(
            svg,
            "  <rect x=\"{}\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\" stroke=\"#ccc\"/>",
            x0
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"16\" text-anchor=\"middle\">{title} vs d</text>",
            x0 + W / 2.0
        );
        let pts: Vec<(f64, f64)> = ds
            .iter()
            .zip(ys)
            .filter_map(|(&d, y)| y.map(|y| (d, y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                (l.min(x), h.max(x))
            });
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (dlo, dhi) = span(&mut pts.iter().map(|p| p.0));
        let (ylo, yhi) = span(&mut pts.iter().map(|p| p.1));
        let px = |d: f64| x0 + PAD + (d - dlo) / (dhi - dlo) * (W - 2.0 * PAD);
        let py = |y: f64| H - PAD - (y - ylo) / (yhi - ylo) * (H - 2.0 * PAD);
        let line: Vec<String> = pts
            .iter()
            .map(|&(d, y)| format!("{:.1},{:.1}", px(d), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>",
            line.join(" ")
        );
        for &(d, y) in &pts {
            let _ = writeln!(
                svg,
                "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#1f77b4\"/>\n  <text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{d}</text>",
                px(d),
                py(y),
                px(d),
                H - PAD + 16.0
            );
        }
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{:.1}\">{:.4}</text>\n  <text x=\"{}\" y=\"{:.1}\">{:.4}</text>",
            x0 + 4.0,
            py(yhi) - 4.0,
            yhi,
            x0 + 4.0,
            py(ylo) + 12.0,
            ylo
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests;
