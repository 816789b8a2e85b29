//! Synthetic causal world.
//!
//! Actions induce human-object relations `(object category, predicate)`
//! through fixed causal rules. Scene state is cumulative: a relation induced
//! by any action performed so far stays in the scene. Each snapshot drops
//! induced relations independently and adds Poisson spurious ones, then
//! renders features from per-category prototypes. Because the generative
//! model is known, the exact posterior over past actions given the observed
//! relations can be enumerated ([`Oracle`]).

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::{
    build_abduction_dataset, group_by_video, AbductionExample, ActionSet, EmbeddingTable, ObjectObservation, Setup, SnapshotRecord,
    Vocabulary, HUMAN_CATEGORY,
};
use crate::seed::{derive_seed, rng};

/// Largest action vocabulary the oracle will enumerate (2^16 subsets).
pub const ORACLE_MAX_ACTIONS: usize = 16;

pub type RelationKey = (usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldOverrides {
    pub n_objects: Option<usize>,
    pub n_predicates: Option<usize>,
    pub n_actions: Option<usize>,
    pub p_action: Option<f64>,
    pub noise_drop: Option<f64>,
    pub noise_spurious: Option<f64>,
    pub feature_noise_sigma: Option<f64>,
    pub d_raw: Option<usize>,
    pub t_max: Option<usize>,
    /// Upper bound on rules per action beyond the private one.
    pub max_extra_rules: Option<usize>,
}

impl WorldOverrides {
    /// No drop, no spurious relations, no feature noise.
    pub fn noiseless() -> Self {
        WorldOverrides {
            noise_drop: Some(0.0),
            noise_spurious: Some(0.0),
            feature_noise_sigma: Some(0.0),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    pub human: Vec<f64>,
    pub objects: Vec<Vec<f64>>,
    pub predicates: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_objects: usize,
    pub n_predicates: usize,
    pub n_actions: usize,
    /// Per action, the relations it induces.
    pub causal_rules: Vec<Vec<RelationKey>>,
    /// Per-action probability of being performed in a given snapshot.
    pub p_action: Vec<f64>,
    pub noise_drop: f64,
    /// Expected number of spurious relations per snapshot.
    pub noise_spurious: f64,
    pub feature_noise_sigma: f64,
    pub d_raw: usize,
    pub t_max: usize,
    pub noiseless: bool,
    pub prototypes: Prototypes,
}

pub fn generate_world(seed: u64, o: &WorldOverrides) -> Result<WorldSpec> {
    let n_objects = o.n_objects.unwrap_or(10);
    let n_predicates = o.n_predicates.unwrap_or(6);
    let n_actions = o.n_actions.unwrap_or(8);
    let p_action = o.p_action.unwrap_or(0.35);
    let noise_drop = o.noise_drop.unwrap_or(0.1);
    let noise_spurious = o.noise_spurious.unwrap_or(0.5);
    let sigma = o.feature_noise_sigma.unwrap_or(0.1);
    let d_raw = o.d_raw.unwrap_or(32);
    let t_max = o.t_max.unwrap_or(4);
    let max_extra = o.max_extra_rules.unwrap_or(2);

    let cfg = |m: String| Err(Error::Config(m));
    if n_objects == 0 || n_predicates == 0 || n_actions == 0 || d_raw == 0 {
        return cfg("world sizes must be positive".into());
    }
    if !(p_action > 0.0 && p_action <= 1.0) {
        return cfg(format!("p_action {p_action} must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&noise_drop) {
        return cfg(format!("noise_drop {noise_drop} must lie in [0, 1]"));
    }
    if !(noise_spurious >= 0.0 && noise_spurious.is_finite()) || !(sigma >= 0.0 && sigma.is_finite()) {
        return cfg("noise_spurious and feature_noise_sigma must be finite and non-negative".into());
    }
    if t_max < 2 {
        return cfg(format!("t_max {t_max} must be at least 2"));
    }
    let n_pairs = n_objects * n_predicates;
    if n_actions > n_pairs {
        return cfg(format!(
            "{n_actions} actions need distinct private relations but only {n_pairs} (category, predicate) pairs exist"
        ));
    }

    let mut rng = rng(seed);
    let mut pairs: Vec<RelationKey> = (0..n_objects).flat_map(|c| (0..n_predicates).map(move |p| (c, p))).collect();
    pairs.shuffle(&mut rng);
    let (private, shared) = pairs.split_at(n_actions);
    let causal_rules = private
        .iter()
        .map(|&own| {
            let mut rules = BTreeSet::from([own]);
            if !shared.is_empty() {
                let extra = rng.random_range(0..=max_extra);
                for _ in 0..extra {
                    rules.insert(shared[rng.random_range(0..shared.len())]);
                }
            }
            rules.into_iter().collect()
        })
        .collect();

    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let prototypes = Prototypes {
        human: gauss(d_raw),
        objects: (0..n_objects).map(|_| gauss(d_raw)).collect(),
        predicates: (0..n_predicates).map(|_| gauss(d_raw)).collect(),
    };

    Ok(WorldSpec {
        seed,
        n_objects,
        n_predicates,
        n_actions,
        causal_rules,
        p_action: vec![p_action; n_actions],
        noise_drop,
        noise_spurious,
        feature_noise_sigma: sigma,
        d_raw,
        t_max,
        noiseless: noise_drop == 0.0 && noise_spurious == 0.0 && sigma == 0.0,
        prototypes,
    })
}

impl WorldSpec {
    pub fn n_pairs(&self) -> usize {
        self.n_objects * self.n_predicates
    }

    pub fn pair_index(&self, (c, p): RelationKey) -> usize {
        c * self.n_predicates + p
    }

    /// Union of the rules of every action in `actions`.
    pub fn induced(&self, actions: &ActionSet) -> BTreeSet<RelationKey> {
        actions
            .indices()
            .into_iter()
            .flat_map(|a| self.causal_rules[a].iter().copied())
            .collect()
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary {
            objects: (0..self.n_objects).map(|i| format!("object_{i}")).collect(),
            actions: (0..self.n_actions).map(|i| format!("action_{i}")).collect(),
            predicates: (0..self.n_predicates).map(|i| format!("predicate_{i}")).collect(),
        }
    }

    /// One-hot table over the object vocabulary plus the human row.
    pub fn onehot_embeddings(&self) -> EmbeddingTable {
        let mut names = self.vocabulary().objects;
        names.push(HUMAN_CATEGORY.to_string());
        EmbeddingTable::one_hot(&names)
    }

    /// Random unit-vector table (harder, less aligned with categories).
    pub fn random_embeddings(&self, dim: usize, seed: u64) -> EmbeddingTable {
        let mut names = self.vocabulary().objects;
        names.push(HUMAN_CATEGORY.to_string());
        EmbeddingTable::random(&names, dim, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSnapshot {
    /// Actions performed at this snapshot (`𝒜_t`).
    pub actions: ActionSet,
    /// `𝒜_0 ∪ … ∪ 𝒜_t`
    pub cumulative: ActionSet,
    /// Observed relations (after drop and spurious noise).
    pub relations: BTreeSet<RelationKey>,
    pub record: SnapshotRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub video_id: String,
    pub snapshots: Vec<EpisodeSnapshot>,
}

impl Episode {
    pub fn records(&self) -> Vec<SnapshotRecord> {
        self.snapshots.iter().map(|s| s.record.clone()).collect()
    }
}

fn sample_actions<R: Rng>(world: &WorldSpec, rng: &mut R) -> ActionSet {
    let mut s = ActionSet::empty(world.n_actions);
    for (a, &p) in world.p_action.iter().enumerate() {
        if rng.random::<f64>() < p {
            s.insert(a);
        }
    }
    s
}

fn observe<R: Rng>(world: &WorldSpec, induced: &BTreeSet<RelationKey>, rng: &mut R) -> BTreeSet<RelationKey> {
    let mut obs: BTreeSet<RelationKey> = induced
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= world.noise_drop)
        .collect();
    if world.noise_spurious > 0.0 {
        let candidates: Vec<RelationKey> = (0..world.n_objects)
            .flat_map(|c| (0..world.n_predicates).map(move |p| (c, p)))
            .filter(|k| !induced.contains(k))
            .collect();
        if !candidates.is_empty() {
            let count = Poisson::new(world.noise_spurious).expect("rate checked positive").sample(rng) as usize;
            for _ in 0..count {
                obs.insert(candidates[rng.random_range(0..candidates.len())]);
            }
        }
    }
    obs
}

/// Sample one video of `t_count` snapshots.
///
/// The first snapshot is conditioned on at least one action, and every
/// snapshot is conditioned on a non-empty observation (noise is redrawn);
/// [`Oracle`] accounts for both.
pub fn generate_episode(world: &WorldSpec, video_id: &str, seed: u64, t_count: usize) -> Result<Episode> {
    if t_count < 2 {
        return Err(Error::Parameter(format!("episodes need at least 2 snapshots, got {t_count}")));
    }
    let mut rng = rng(seed);
    let sigma = world.feature_noise_sigma;
    let noisy = |proto: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        proto
            .iter()
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let protos = &world.prototypes;

    let mut cumulative = ActionSet::empty(world.n_actions);
    let mut snapshots = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut actions = sample_actions(world, &mut rng);
        while t == 0 && actions.is_empty() {
            actions = sample_actions(world, &mut rng);
        }
        cumulative.union_with(&actions);
        let induced = world.induced(&cumulative);
        let mut relations = observe(world, &induced, &mut rng);
        while relations.is_empty() {
            relations = observe(world, &induced, &mut rng);
        }

        let human_feature = noisy(&protos.human, &mut rng);
        let mut order: Vec<RelationKey> = relations.iter().copied().collect();
        order.shuffle(&mut rng);
        let objects = order
            .into_iter()
            .map(|(c, p)| {
                let feature = noisy(&protos.objects[c], &mut rng);
                let mixed: Vec<f64> = protos
                    .human
                    .iter()
                    .zip(&protos.objects[c])
                    .zip(&protos.predicates[p])
                    .map(|((h, o), q)| 0.5 * (h + o) + q)
                    .collect();
                ObjectObservation {
                    category: c,
                    feature,
                    union: noisy(&mixed, &mut rng),
                    predicate: Some(p),
                }
            })
            .collect();
        let record = SnapshotRecord {
            video_id: video_id.to_string(),
            snapshot_index: t,
            human_feature,
            objects,
            actions: actions.indices(),
        };
        snapshots.push(EpisodeSnapshot {
            actions,
            cumulative: cumulative.clone(),
            relations,
            record,
        });
    }
    Ok(Episode {
        video_id: video_id.to_string(),
        snapshots,
    })
}

/// `count` episodes with ids `{prefix}{i:05}`; episode `i` uses
/// `derive_seed(master_seed, i)` and a length uniform in `2..=t_max`.
pub fn generate_episodes(world: &WorldSpec, master_seed: u64, count: usize, prefix: &str) -> Result<Vec<Episode>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let t_count = rng(seed ^ 0x5eed).random_range(2..=world.t_max);
            generate_episode(world, &format!("{prefix}{i:05}"), seed, t_count)
        })
        .collect()
}

/// A world with its train and test episodes, all derived from one seed.
#[derive(Clone, Debug)]
pub struct SyntheticSplits {
    pub world: WorldSpec,
    pub train: Vec<Episode>,
    pub test: Vec<Episode>,
}

impl SyntheticSplits {
    /// World from `seed`; train and test episodes from `derive_seed(seed, 1)`
    /// and `derive_seed(seed, 2)`, with ids `train…` and `test…`.
    pub fn generate(seed: u64, o: &WorldOverrides, n_train: usize, n_test: usize) -> Result<Self> {
        if n_train == 0 || n_test == 0 {
            return Err(Error::Config("empty dataset requested".into()));
        }
        let world = generate_world(seed, o)?;
        let train = generate_episodes(&world, derive_seed(seed, 1), n_train, "train")?;
        let test = generate_episodes(&world, derive_seed(seed, 2), n_test, "test")?;
        Ok(SyntheticSplits { world, train, test })
    }

    pub fn records(episodes: &[Episode]) -> Vec<SnapshotRecord> {
        episodes.iter().flat_map(Episode::records).collect()
    }

    pub fn dataset(&self, episodes: &[Episode], setup: Setup) -> Result<Vec<AbductionExample>> {
        build_abduction_dataset(&group_by_video(Self::records(episodes)), setup, self.world.n_actions)
    }
}

/// Brute-force Bayes posterior over cumulative action sets.
pub struct Oracle<'w> {
    world: &'w WorldSpec,
    words: usize,
    /// Induced relation bitmask for every action subset, `words` u64 each.
    induced: Vec<u64>,
    induced_count: Vec<u32>,
}

impl<'w> Oracle<'w> {
    pub fn new(world: &'w WorldSpec) -> Result<Self> {
        let k = world.n_actions;
        if k > ORACLE_MAX_ACTIONS {
            return Err(Error::Tractability(k));
        }
        let words = world.n_pairs().div_ceil(64);
        let n_subsets = 1usize << k;
        let mut induced = vec![0u64; n_subsets * words];
        for a in 0..k {
            for &key in &world.causal_rules[a] {
                let bit = world.pair_index(key);
                induced[(1 << a) * words + bit / 64] |= 1 << (bit % 64);
            }
        }
        for s in 1..n_subsets {
            let low = s & s.wrapping_neg();
            if low == s {
                continue;
            }
            let rest = s ^ low;
            for w in 0..words {
                induced[s * words + w] = induced[rest * words + w] | induced[low * words + w];
            }
        }
        let induced_count = (0..n_subsets)
            .map(|s| induced[s * words..(s + 1) * words].iter().map(|w| w.count_ones()).sum())
            .collect();
        Ok(Oracle {
            world,
            words,
            induced,
            induced_count,
        })
    }

    /// Prior of the cumulative set after snapshot `t`, conditioned on the
    /// first snapshot containing at least one action.
    fn prior(&self, subset: usize, t: usize) -> f64 {
        let p = &self.world.p_action;
        let covered = |m: i32| -> f64 {
            p.iter()
                .enumerate()
                .map(|(a, &pa)| {
                    let none = (1.0 - pa).powi(m);
                    if subset >> a & 1 == 1 {
                        1.0 - none
                    } else {
                        none
                    }
                })
                .product()
        };
        let first_empty: f64 = p.iter().map(|pa| 1.0 - pa).product();
        let m = t as i32 + 1;
        (covered(m) - first_empty * covered(m - 1)) / (1.0 - first_empty)
    }

    /// Likelihood of the observation mask, conditioned on it being non-empty.
    fn likelihood(&self, subset: usize, obs: &[u64], obs_count: u32) -> f64 {
        let w = self.world;
        let ind = &self.induced[subset * self.words..(subset + 1) * self.words];
        let kept: u32 = ind.iter().zip(obs).map(|(a, b)| (a & b).count_ones()).sum();
        let n_induced = self.induced_count[subset];
        let spurious = obs_count - kept;
        let free = w.n_pairs() as u32 - n_induced;
        let q = if free == 0 {
            0.0
        } else {
            1.0 - (-w.noise_spurious / free as f64).exp()
        };
        let lik = (1.0 - w.noise_drop).powi(kept as i32)
            * w.noise_drop.powi((n_induced - kept) as i32)
            * q.powi(spurious as i32)
            * (1.0 - q).powi((free - spurious) as i32);
        let p_empty = w.noise_drop.powi(n_induced as i32) * (1.0 - q).powi(free as i32);
        if p_empty >= 1.0 {
            0.0
        } else {
            lik / (1.0 - p_empty)
        }
    }

    /// Normalized posterior over all `2^K` subsets (bit `a` of the index = action `a`).
    pub fn joint(&self, observed: &BTreeSet<RelationKey>, t: usize) -> Result<Vec<f64>> {
        let mut obs = vec![0u64; self.words];
        for &key in observed {
            if key.0 >= self.world.n_objects || key.1 >= self.world.n_predicates {
                return Err(Error::Data(format!("relation {key:?} outside the world vocabulary")));
            }
            let bit = self.world.pair_index(key);
            obs[bit / 64] |= 1 << (bit % 64);
        }
        let obs_count = observed.len() as u32;
        let mut joint: Vec<f64> = (0..1usize << self.world.n_actions)
            .map(|s| self.prior(s, t) * self.likelihood(s, &obs, obs_count))
            .collect();
        let total: f64 = joint.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numeric(format!("oracle evidence for {observed:?} at t={t}")));
        }
        joint.iter_mut().for_each(|v| *v /= total);
        Ok(joint)
    }

    /// Per-action posterior marginals.
    pub fn posterior(&self, observed: &BTreeSet<RelationKey>, t: usize) -> Result<Vec<f64>> {
        let joint = self.joint(observed, t)?;
        let k = self.world.n_actions;
        let mut marg = vec![0.0; k];
        for (s, p) in joint.iter().enumerate() {
            for (a, m) in marg.iter_mut().enumerate() {
                if s >> a & 1 == 1 {
                    *m += p;
                }
            }
        }
        Ok(marg.into_iter().map(|m| m.clamp(0.0, 1.0)).collect())
    }
}

/// Marginal posterior of each action given the relations observed at snapshot `t`.
pub fn oracle_posterior(world: &WorldSpec, observed: &BTreeSet<RelationKey>, t: usize) -> Result<Vec<f64>> {
    Oracle::new(world)?.posterior(observed, t)
}

/// Oracle scores and cumulative labels for every snapshot of `episodes`.
pub fn oracle_scores(world: &WorldSpec, episodes: &[Episode]) -> Result<(Vec<Vec<f64>>, Vec<ActionSet>)> {
    let oracle = Oracle::new(world)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for ep in episodes {
        for (t, s) in ep.snapshots.iter().enumerate() {
            scores.push(oracle.posterior(&s.relations, t)?);
            labels.push(s.cumulative.clone());
        }
    }
    Ok((scores, labels))
}

/// mAP (percent) of the oracle's marginals against the true cumulative action sets.
pub fn oracle_map(world: &WorldSpec, episodes: &[Episode]) -> Result<f64> {
    let (scores, labels) = oracle_scores(world, episodes)?;
    crate::eval::mean_ap(&scores, &labels)
}
