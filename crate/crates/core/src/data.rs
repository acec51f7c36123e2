//! Rating logs: ingestion, filtering, canonical CSV and synthetic generators.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

/// One observed (user, item, rating) record, using dense ids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// An indexed interaction log.
///
/// Dense ids are assigned in ascending order of external id, so `user_ids`
/// and `item_ids` (dense -> external) are sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    per_user: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "users        {}", self.users)?;
        writeln!(f, "items        {}", self.items)?;
        writeln!(f, "interactions {}", self.interactions)?;
        write!(f, "density      {:.6}", self.density)
    }
}

/// A record keyed by external ids, before densification.
#[derive(Clone, Copy, Debug)]
struct RawRecord {
    user: u64,
    item: u64,
    rating: f64,
    timestamp: Option<i64>,
}

impl Dataset {
    /// Builds a dataset whose external ids equal the dense ids `0..num_users` / `0..num_items`.
    pub fn from_dense(
        num_users: usize,
        num_items: usize,
        interactions: Vec<Interaction>,
    ) -> Result<Self> {
        for (pos, z) in interactions.iter().enumerate() {
            if z.user >= num_users {
                return Err(Error::OutOfRange {
                    what: "user",
                    index: z.user,
                    limit: num_users,
                });
            }
            if z.item >= num_items {
                return Err(Error::OutOfRange {
                    what: "item",
                    index: z.item,
                    limit: num_items,
                });
            }
            if !(MIN_RATING..=MAX_RATING).contains(&z.rating) {
                return Err(Error::Parse {
                    line: pos + 1,
                    message: format!("rating {} outside [1, 5]", z.rating),
                });
            }
        }
        let interactions = dedup_keep_last(interactions, num_items);
        let mut ds = Dataset {
            interactions,
            user_ids: (0..num_users as u64).collect(),
            item_ids: (0..num_items as u64).collect(),
            per_user: Vec::new(),
        };
        ds.rebuild_adjacency();
        Ok(ds)
    }

    fn from_raw(records: Vec<RawRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("no interactions".into()));
        }
        let mut user_ids: Vec<u64> = records.iter().map(|r| r.user).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        let mut item_ids: Vec<u64> = records.iter().map(|r| r.item).collect();
        item_ids.sort_unstable();
        item_ids.dedup();
        let interactions = records
            .iter()
            .map(|r| Interaction {
                user: user_ids.binary_search(&r.user).unwrap(),
                item: item_ids.binary_search(&r.item).unwrap(),
                rating: r.rating,
                timestamp: r.timestamp,
            })
            .collect();
        let interactions = dedup_keep_last(interactions, item_ids.len());
        let mut ds = Dataset {
            interactions,
            user_ids,
            item_ids,
            per_user: Vec::new(),
        };
        ds.rebuild_adjacency();
        Ok(ds)
    }

    fn rebuild_adjacency(&mut self) {
        let mut per_user = vec![Vec::new(); self.user_ids.len()];
        for (pos, z) in self.interactions.iter().enumerate() {
            per_user[z.user].push(pos);
        }
        self.per_user = per_user;
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn interaction(&self, pos: usize) -> &Interaction {
        &self.interactions[pos]
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Interaction positions of user `u` (the set I_u), ascending.
    pub fn user_positions(&self, u: usize) -> &[usize] {
        &self.per_user[u]
    }

    pub fn per_user(&self) -> &[Vec<usize>] {
        &self.per_user
    }

    /// Items user `u` has rated, in interaction order.
    pub fn user_items(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.per_user[u].iter().map(|&p| self.interactions[p].item)
    }

    /// Per-item flag: has user `u` interacted with it.
    pub fn interacted_mask(&self, u: usize) -> Vec<bool> {
        let mut mask = vec![false; self.num_items()];
        for v in self.user_items(u) {
            mask[v] = true;
        }
        mask
    }

    /// Interaction positions per item.
    pub fn per_item(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_items()];
        for (pos, z) in self.interactions.iter().enumerate() {
            out[z.item].push(pos);
        }
        out
    }

    pub fn user_external_id(&self, u: usize) -> u64 {
        self.user_ids[u]
    }

    pub fn item_external_id(&self, v: usize) -> u64 {
        self.item_ids[v]
    }

    pub fn user_dense_id(&self, external: u64) -> Option<usize> {
        self.user_ids.binary_search(&external).ok()
    }

    pub fn item_dense_id(&self, external: u64) -> Option<usize> {
        self.item_ids.binary_search(&external).ok()
    }

    pub fn density(&self) -> f64 {
        let cells = self.num_users() as f64 * self.num_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.len() as f64 / cells
        }
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.num_users(),
            items: self.num_items(),
            interactions: self.len(),
            density: self.density(),
        }
    }

    /// Same id space with the given interaction positions deleted.
    pub fn without(&self, removed: &[usize]) -> Dataset {
        let mut drop = vec![false; self.len()];
        for &p in removed {
            drop[p] = true;
        }
        let interactions = self
            .interactions
            .iter()
            .zip(&drop)
            .filter(|(_, &d)| !d)
            .map(|(z, _)| *z)
            .collect();
        let mut ds = Dataset {
            interactions,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            per_user: Vec::new(),
        };
        ds.rebuild_adjacency();
        ds
    }

    /// Drops users with fewer than `min_actions` interactions, then items left
    /// without interactions, and re-densifies both id spaces.
    pub fn filter_min_actions(&self, min_actions: usize) -> Result<Dataset> {
        let keep_user: Vec<bool> = self
            .per_user
            .iter()
            .map(|p| p.len() >= min_actions)
            .collect();
        let mut item_count = vec![0usize; self.num_items()];
        for z in self.interactions.iter().filter(|z| keep_user[z.user]) {
            item_count[z.item] += 1;
        }
        let user_map = remap(&keep_user);
        let item_map = remap(&item_count.iter().map(|&c| c > 0).collect::<Vec<_>>());
        let interactions: Vec<Interaction> = self
            .interactions
            .iter()
            .filter(|z| keep_user[z.user])
            .map(|z| Interaction {
                user: user_map[z.user].unwrap(),
                item: item_map[z.item].unwrap(),
                ..*z
            })
            .collect();
        if interactions.is_empty() {
            return Err(Error::Exhausted);
        }
        let user_ids = kept(&self.user_ids, &user_map);
        let item_ids = kept(&self.item_ids, &item_map);
        let mut ds = Dataset {
            interactions,
            user_ids,
            item_ids,
            per_user: Vec::new(),
        };
        ds.rebuild_adjacency();
        Ok(ds)
    }

    /// Canonical CSV: header `user,item,rating,timestamp`, dense ids, one row per interaction.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        out.push_str("user,item,rating,timestamp\n");
        for z in &self.interactions {
            let _ = write!(out, "{},{},{},", z.user, z.item, z.rating);
            if let Some(ts) = z.timestamp {
                let _ = write!(out, "{ts}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "user,item,rating,timestamp" => {}
            Some(_) => {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header `user,item,rating,timestamp`".into(),
                })
            }
            None => return Err(Error::Empty("csv has no header".into())),
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            records.push(parse_record(&fields, idx + 1, true)?);
        }
        Self::from_raw(records)
    }
}

fn remap(keep: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    keep.iter()
        .map(|&k| {
            k.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn kept(ids: &[u64], map: &[Option<usize>]) -> Vec<u64> {
    ids.iter()
        .zip(map)
        .filter_map(|(&id, m)| m.map(|_| id))
        .collect()
}

/// Removes earlier duplicates of each (user, item) pair; the last record wins
/// and stays at its own position.
fn dedup_keep_last(interactions: Vec<Interaction>, num_items: usize) -> Vec<Interaction> {
    let mut seen = std::collections::HashSet::with_capacity(interactions.len());
    let mut keep = vec![false; interactions.len()];
    for (pos, z) in interactions.iter().enumerate().rev() {
        keep[pos] = seen.insert(z.user * num_items + z.item);
    }
    interactions
        .into_iter()
        .zip(keep)
        .filter_map(|(z, k)| k.then_some(z))
        .collect()
}

fn parse_record(fields: &[&str], line: usize, optional_ts: bool) -> Result<RawRecord> {
    let err = |message: String| Error::Parse { line, message };
    if fields.len() != 4 {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    }
    let user: u64 = fields[0]
        .trim()
        .parse()
        .map_err(|_| err(format!("user id `{}` is not an integer", fields[0])))?;
    let item: u64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| err(format!("item id `{}` is not an integer", fields[1])))?;
    let rating: f64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| err(format!("rating `{}` is not a number", fields[2])))?;
    if !(MIN_RATING..=MAX_RATING).contains(&rating) {
        return Err(err(format!("rating {rating} outside [1, 5]")));
    }
    let ts = fields[3].trim();
    let timestamp = if ts.is_empty() && optional_ts {
        None
    } else {
        Some(
            ts.parse::<i64>()
                .map_err(|_| err(format!("timestamp `{ts}` is not an integer")))?,
        )
    };
    Ok(RawRecord {
        user,
        item,
        rating,
        timestamp,
    })
}

/// Parses the MovieLens `u.data` format: `user<TAB>item<TAB>rating<TAB>timestamp`.
pub fn parse_movielens(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_movielens_str(&text)
}

pub fn parse_movielens_str(text: &str) -> Result<Dataset> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        records.push(parse_record(&fields, idx + 1, false)?);
    }
    if records.is_empty() {
        return Err(Error::Empty("movielens file has no records".into()));
    }
    Dataset::from_raw(records)
}

/// Low-rank synthetic rating generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub density: f64,
    pub num_latent_causes: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 1200,
            num_items: 1200,
            density: 0.0631,
            num_latent_causes: 8,
            noise_std: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!(
                "density {} not in (0, 1]",
                self.density
            )));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if self.num_latent_causes == 0 {
            return Err(Error::Config("num_latent_causes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ratings are `3 + 2 (a_u . b_v) / k + noise` clipped to [1, 5], with factors
/// uniform in [-1, 1]^k. Exactly `round(density * users * items)` cells are
/// observed, drawn without replacement; rows are ordered by (user, item).
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let cells = cfg.num_users * cfg.num_items;
    let count = (cfg.density * cells as f64).round() as usize;
    if count == 0 {
        return Err(Error::Config(
            "configuration yields zero interactions".into(),
        ));
    }
    let k = cfg.num_latent_causes;
    let mut rng = seed::rng(cfg.seed, seed::stage::SYNTH);
    let user_f: Vec<f64> = (0..cfg.num_users * k)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let item_f: Vec<f64> = (0..cfg.num_items * k)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let mut chosen = index::sample(&mut rng, cells, count).into_vec();
    chosen.sort_unstable();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let interactions = chosen
        .into_iter()
        .map(|cell| {
            let (u, v) = (cell / cfg.num_items, cell % cfg.num_items);
            let dot: f64 = (0..k).map(|j| user_f[u * k + j] * item_f[v * k + j]).sum();
            let eps = if cfg.noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            Interaction {
                user: u,
                item: v,
                rating: (3.0 + 2.0 * dot / k as f64 + eps).clamp(MIN_RATING, MAX_RATING),
                timestamp: None,
            }
        })
        .collect();
    Dataset::from_dense(cfg.num_users, cfg.num_items, interactions)
}

/// Generator for instances with a planted explanation.
///
/// Ratings follow `3 + c_v + 2 a_u b_v` (a rank-one interaction term plus an
/// item offset). The catalog holds a driver item and its twin (`b = 1`), a
/// broadly liked item (`b = 0`, `c = offset`), pin items (`b = ±pin_factor`) and
/// regular items (`|b| <= regular_factor`). A planted user rates the driver 5
/// and every pin 3, so the driver alone lifts the twin above the liked item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub population_users: usize,
    pub regular_items: usize,
    pub pin_items: usize,
    /// Magnitude of the pin items' interaction factor.
    pub pin_factor: f64,
    /// Bound on the regular items' interaction factor.
    pub regular_factor: f64,
    pub population_density: f64,
    pub planted_users: usize,
    pub liked_offset: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            population_users: 200,
            regular_items: 40,
            pin_items: 20,
            pin_factor: 0.3,
            regular_factor: 0.2,
            population_density: 0.4,
            planted_users: 20,
            liked_offset: 0.6,
            noise_std: 0.1,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedUser {
    pub user: usize,
    /// Position of the driver interaction.
    pub driver: usize,
    /// Item expected on top while the driver is present.
    pub twin_item: usize,
    /// Item expected on top once the driver is removed.
    pub liked_item: usize,
}

pub const DRIVER_ITEM: usize = 0;
pub const TWIN_ITEM: usize = 1;
pub const LIKED_ITEM: usize = 2;
const FIRST_PIN: usize = 3;

pub fn synth_planted(cfg: &PlantedConfig) -> Result<(Dataset, Vec<PlantedUser>)> {
    if cfg.pin_items < 2 || !cfg.pin_items.is_multiple_of(2) {
        return Err(Error::Config(
            "pin_items must be an even number >= 2".into(),
        ));
    }
    if !(cfg.population_density > 0.0 && cfg.population_density <= 1.0) {
        return Err(Error::Config("population_density not in (0, 1]".into()));
    }
    let mut rng = seed::rng(cfg.seed, seed::stage::SYNTH);
    let num_items = FIRST_PIN + cfg.pin_items + cfg.regular_items;
    let mut factor = vec![0.0; num_items];
    let mut offset = vec![0.0; num_items];
    factor[DRIVER_ITEM] = 1.0;
    factor[TWIN_ITEM] = 1.0;
    offset[LIKED_ITEM] = cfg.liked_offset;
    for p in 0..cfg.pin_items {
        factor[FIRST_PIN + p] = if p % 2 == 0 {
            cfg.pin_factor
        } else {
            -cfg.pin_factor
        };
    }
    for b in factor.iter_mut().skip(FIRST_PIN + cfg.pin_items) {
        *b = rng.gen_range(-cfg.regular_factor..=cfg.regular_factor);
    }
    let noise =
        Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut interactions = Vec::new();
    for u in 0..cfg.population_users {
        let a: f64 = rng.gen_range(-1.0..=1.0);
        for v in 0..num_items {
            if rng.gen::<f64>() < cfg.population_density {
                let eps = if cfg.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                interactions.push(Interaction {
                    user: u,
                    item: v,
                    rating: (3.0 + offset[v] + 2.0 * a * factor[v] + eps)
                        .clamp(MIN_RATING, MAX_RATING),
                    timestamp: None,
                });
            }
        }
    }
    let mut planted = Vec::with_capacity(cfg.planted_users);
    for k in 0..cfg.planted_users {
        let u = cfg.population_users + k;
        let driver = interactions.len();
        let pins = (FIRST_PIN..FIRST_PIN + cfg.pin_items).map(|v| (v, 3.0));
        for (item, rating) in std::iter::once((DRIVER_ITEM, 5.0)).chain(pins) {
            interactions.push(Interaction {
                user: u,
                item,
                rating,
                timestamp: None,
            });
        }
        planted.push(PlantedUser {
            user: u,
            driver,
            twin_item: TWIN_ITEM,
            liked_item: LIKED_ITEM,
        });
    }
    let ds = Dataset::from_dense(
        cfg.population_users + cfg.planted_users,
        num_items,
        interactions,
    )?;
    Ok((ds, planted))
}
