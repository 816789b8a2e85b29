//! Snapshots, human-object relations and abduction datasets.
//!
//! A snapshot holds one human feature and a list of observed objects, each
//! with its own feature and the feature of the human-object union region.
//! Every object yields one relation `r = [x_h, x_o, x_u, y_h, y_o]`: the
//! three projected visual slots followed by the human and object word
//! embeddings. The predicate of a relation is never shown to a model.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::ParamStore;
use crate::tensor::Tensor2;

/// Vocabulary row used for the human's semantic embedding.
pub const HUMAN_CATEGORY: &str = "person";

/// Fixed-width set of action classes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionSet(FixedBitSet);

impl ActionSet {
    pub fn empty(width: usize) -> Self {
        ActionSet(FixedBitSet::with_capacity(width))
    }

    pub fn from_indices(width: usize, indices: &[usize]) -> Result<Self> {
        let mut s = ActionSet::empty(width);
        for &i in indices {
            if i >= width {
                return Err(Error::Data(format!("action index {i} out of range for {width} actions")));
            }
            s.0.insert(i);
        }
        Ok(s)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(i)
    }

    pub fn insert(&mut self, i: usize) {
        self.0.insert(i);
    }

    pub fn union_with(&mut self, other: &ActionSet) {
        self.0.union_with(&other.0);
    }

    pub fn is_subset(&self, other: &ActionSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn count(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.width()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.ones().collect()
    }

    /// 0/1 indicator vector.
    pub fn to_labels(&self) -> Vec<bool> {
        (0..self.width()).map(|i| self.contains(i)).collect()
    }
}

/// A human-object relation triplet `⟨h, p, o⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub human_id: usize,
    pub object_id: usize,
    pub object_category: usize,
    /// Synthetic ground truth only; models never read it.
    pub predicate: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectObservation {
    #[serde(rename = "cat")]
    pub category: usize,
    #[serde(rename = "feat")]
    pub feature: Vec<f64>,
    pub union: Vec<f64>,
    #[serde(rename = "pred", default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<usize>,
}

/// One line of the dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRecord {
    pub video_id: String,
    #[serde(rename = "t")]
    pub snapshot_index: usize,
    #[serde(rename = "human")]
    pub human_feature: Vec<f64>,
    pub objects: Vec<ObjectObservation>,
    /// Actions performed in this snapshot (`𝒜_t`), as class indices.
    pub actions: Vec<usize>,
}

impl SnapshotRecord {
    pub fn relations(&self) -> Vec<Relation> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| Relation {
                human_id: 0,
                object_id: i + 1,
                object_category: o.category,
                predicate: o.predicate,
            })
            .collect()
    }

    pub fn categories(&self) -> Vec<usize> {
        self.objects.iter().map(|o| o.category).collect()
    }

    pub fn action_set(&self, n_actions: usize) -> Result<ActionSet> {
        ActionSet::from_indices(n_actions, &self.actions)
    }

    /// Check shape invariants against the expected raw feature width.
    pub fn validate(&self, d_raw: usize, n_objects: usize, n_actions: usize) -> Result<()> {
        let ctx = |what: &str| format!("video `{}` t={}: {what}", self.video_id, self.snapshot_index);
        if self.objects.is_empty() {
            return Err(Error::Data(ctx("snapshot has no objects")));
        }
        if self.human_feature.len() != d_raw {
            return Err(Error::Data(ctx(&format!("human feature has {} dims, expected {d_raw}", self.human_feature.len()))));
        }
        for o in &self.objects {
            if o.feature.len() != d_raw || o.union.len() != d_raw {
                return Err(Error::Data(ctx("object feature width mismatch")));
            }
            if o.category >= n_objects {
                return Err(Error::Vocabulary(format!("object category index {}", o.category)));
            }
        }
        let all_finite = self
            .human_feature
            .iter()
            .chain(self.objects.iter().flat_map(|o| o.feature.iter().chain(&o.union)))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Numeric(ctx("feature")));
        }
        self.action_set(n_actions).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub objects: Vec<String>,
    pub actions: Vec<String>,
    pub predicates: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    Pretrained,
    SyntheticOnehot,
    SyntheticRandom,
}

/// One line of an embedding file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingEntry {
    pub name: String,
    pub vec: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub source: EmbeddingSource,
}

impl EmbeddingTable {
    pub fn from_entries(entries: Vec<EmbeddingEntry>, source: EmbeddingSource) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.vec.len());
        if dim == 0 {
            return Err(Error::Data("embedding table is empty".into()));
        }
        if let Some(bad) = entries.iter().find(|e| e.vec.len() != dim) {
            return Err(Error::Data(format!("embedding `{}` has {} dims, expected {dim}", bad.name, bad.vec.len())));
        }
        let (vocab, vectors) = entries.into_iter().map(|e| (e.name, e.vec)).unzip();
        Ok(EmbeddingTable { vocab, vectors, source })
    }

    /// `names[i]` gets the i-th unit vector.
    pub fn one_hot(names: &[String]) -> Self {
        let n = names.len();
        let vectors = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        EmbeddingTable {
            vocab: names.to_vec(),
            vectors,
            source: EmbeddingSource::SyntheticOnehot,
        }
    }

    /// Unit-norm Gaussian directions.
    pub fn random(names: &[String], dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = names
            .iter()
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        EmbeddingTable {
            vocab: names.to_vec(),
            vectors,
            source: EmbeddingSource::SyntheticRandom,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn row(&self, name: &str) -> Result<&[f64]> {
        self.vocab
            .iter()
            .position(|n| n == name)
            .map(|i| self.vectors[i].as_slice())
            .ok_or_else(|| Error::Vocabulary(name.to_string()))
    }

    pub fn entries(&self) -> Vec<EmbeddingEntry> {
        self.vocab
            .iter()
            .zip(&self.vectors)
            .map(|(name, vec)| EmbeddingEntry {
                name: name.clone(),
                vec: vec.clone(),
            })
            .collect()
    }
}

/// Embedding rows resolved per object category index.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticLookup {
    pub human: Vec<f64>,
    pub objects: Vec<Vec<f64>>,
}

impl SemanticLookup {
    pub fn new(vocab: &Vocabulary, table: &EmbeddingTable) -> Result<Self> {
        let index: HashMap<&str, usize> = table.vocab.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let get = |name: &str| {
            index
                .get(name)
                .map(|&i| table.vectors[i].clone())
                .ok_or_else(|| Error::Vocabulary(name.to_string()))
        };
        Ok(SemanticLookup {
            human: get(HUMAN_CATEGORY)?,
            objects: vocab.objects.iter().map(|n| get(n)).collect::<Result<_>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.human.len()
    }
}

/// Raw (pre-projection) inputs of one snapshot, laid out as matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationSet {
    /// 1 × D_raw
    pub human: Tensor2,
    /// n × D_raw
    pub objects: Tensor2,
    /// n × D_raw
    pub unions: Tensor2,
    /// 1 × d_emb (zeros when semantics are disabled)
    pub sem_human: Tensor2,
    /// n × d_emb
    pub sem_objects: Tensor2,
    pub categories: Vec<usize>,
}

impl RelationSet {
    pub fn from_snapshot(s: &SnapshotRecord, lookup: &SemanticLookup, use_semantics: bool) -> Result<Self> {
        if s.objects.is_empty() {
            return Err(Error::EmptySet { op: "RelationSet::from_snapshot" });
        }
        let d_emb = lookup.dim();
        let n = s.objects.len();
        let human = Tensor2::row_vector(&s.human_feature)?;
        let objects = Tensor2::from_rows(&s.objects.iter().map(|o| o.feature.as_slice()).collect::<Vec<_>>())?;
        let unions = Tensor2::from_rows(&s.objects.iter().map(|o| o.union.as_slice()).collect::<Vec<_>>())?;
        if objects.cols() != human.cols() || unions.cols() != human.cols() {
            return Err(Error::dims("RelationSet", &human.shape(), &objects.shape()));
        }
        let (sem_human, sem_objects) = if use_semantics {
            let rows = s
                .objects
                .iter()
                .map(|o| {
                    lookup
                        .objects
                        .get(o.category)
                        .map(Vec::as_slice)
                        .ok_or_else(|| Error::Vocabulary(format!("object category index {}", o.category)))
                })
                .collect::<Result<Vec<_>>>()?;
            (Tensor2::row_vector(&lookup.human)?, Tensor2::from_rows(&rows)?)
        } else {
            (Tensor2::zeros(1, d_emb), Tensor2::zeros(n, d_emb))
        };
        Ok(RelationSet {
            human,
            objects,
            unions,
            sem_human,
            sem_objects,
            categories: s.categories(),
        })
    }

    /// Standard-normal features and semantic rows, for property checks.
    pub fn random<R: Rng>(n: usize, d_raw: usize, d_emb: usize, rng: &mut R) -> RelationSet {
        let mut gauss = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            Tensor2::from_raw(rows, cols, data)
        };
        RelationSet {
            human: gauss(1, d_raw),
            objects: gauss(n, d_raw),
            unions: gauss(n, d_raw),
            sem_human: gauss(1, d_emb),
            sem_objects: gauss(n, d_emb),
            categories: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.objects.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reorder relations; `perm[k]` is the source row of output row `k`.
    pub fn permuted(&self, perm: &[usize]) -> RelationSet {
        RelationSet {
            human: self.human.clone(),
            objects: self.objects.select_rows(perm),
            unions: self.unions.select_rows(perm),
            sem_human: self.sem_human.clone(),
            sem_objects: self.sem_objects.select_rows(perm),
            categories: perm.iter().map(|&i| self.categories[i]).collect(),
        }
    }
}

/// `raw · w + b` for a single feature vector.
pub fn project_visual(raw: &[f64], w: &Tensor2, b: &Tensor2) -> Result<Vec<f64>> {
    if raw.len() != w.rows() {
        return Err(Error::dims("project_visual", &[raw.len()], &w.shape()));
    }
    let x = Tensor2::row_vector(raw)?;
    Ok(crate::diffmath::linear(&x, w, b)?.into_data())
}

/// Projected visual slots plus the (fixed) semantic rows of one snapshot.
#[derive(Clone, Debug)]
pub struct EncodedSet {
    pub xh: Tensor2,
    pub xo: Tensor2,
    pub xu: Tensor2,
    pub yh: Tensor2,
    pub yo: Tensor2,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.xo.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `n × (3·d_vis + 2·d_emb)` matrix whose rows are the relations `r`.
    pub fn relation_matrix(&self) -> Tensor2 {
        let n = self.len();
        let xh = self.xh.broadcast_rows(n).expect("xh is a row");
        let yh = self.yh.broadcast_rows(n).expect("yh is a row");
        Tensor2::hcat(&[&xh, &self.xo, &self.xu, &yh, &self.yo]).expect("rows agree")
    }

    /// Object slot extended with its embedding: `[x_o, y_o]`.
    pub fn object_slot(&self) -> Tensor2 {
        Tensor2::hcat(&[&self.xo, &self.yo]).expect("rows agree")
    }

    /// Human slot extended with its embedding: `[x_h, y_h]`.
    pub fn human_slot(&self) -> Tensor2 {
        Tensor2::hcat(&[&self.xh, &self.yh]).expect("single row")
    }
}

/// Gradients with respect to the projected visual slots.
pub struct EncodedGrads {
    pub xh: Tensor2,
    pub xo: Tensor2,
    pub xu: Tensor2,
}

impl EncodedGrads {
    pub fn zeros(enc: &EncodedSet) -> Self {
        EncodedGrads {
            xh: Tensor2::zeros(1, enc.xh.cols()),
            xo: Tensor2::zeros(enc.xo.rows(), enc.xo.cols()),
            xu: Tensor2::zeros(enc.xu.rows(), enc.xu.cols()),
        }
    }

    /// Add the gradient of [`EncodedSet::relation_matrix`].
    pub fn add_relation_grad(&mut self, d_vis: usize, d_emb: usize, d_r: &Tensor2) {
        let parts = d_r
            .split_cols(&[d_vis, d_vis, d_vis, d_emb, d_emb])
            .expect("relation gradient width");
        self.xh.add_assign(&parts[0].sum_rows()).expect("xh");
        self.xo.add_assign(&parts[1]).expect("xo");
        self.xu.add_assign(&parts[2]).expect("xu");
    }

    /// Add the gradient of [`EncodedSet::object_slot`].
    pub fn add_object_slot_grad(&mut self, d_vis: usize, d_emb: usize, d_slot: &Tensor2) {
        let parts = d_slot.split_cols(&[d_vis, d_emb]).expect("object slot width");
        self.xo.add_assign(&parts[0]).expect("xo");
    }

    /// Add the gradient of [`EncodedSet::human_slot`], summing over rows if broadcast.
    pub fn add_human_slot_grad(&mut self, d_vis: usize, d_emb: usize, d_slot: &Tensor2) {
        let parts = d_slot.split_cols(&[d_vis, d_emb]).expect("human slot width");
        self.xh.add_assign(&parts[0].sum_rows()).expect("xh");
    }
}

/// Three separate learned linear maps, one per visual slot.
#[derive(Clone, Debug)]
pub struct RelationEncoder {
    pub human: Linear,
    pub object: Linear,
    pub union: Linear,
    pub d_vis: usize,
    pub d_emb: usize,
}

impl RelationEncoder {
    pub fn new<R: Rng>(ps: &mut ParamStore, d_raw: usize, d_vis: usize, d_emb: usize, rng: &mut R) -> Result<Self> {
        Ok(RelationEncoder {
            human: Linear::new(ps, "proj.human", d_raw, d_vis, rng)?,
            object: Linear::new(ps, "proj.object", d_raw, d_vis, rng)?,
            union: Linear::new(ps, "proj.union", d_raw, d_vis, rng)?,
            d_vis,
            d_emb,
        })
    }

    pub fn param_count(d_raw: usize, d_vis: usize) -> usize {
        3 * Linear::param_count(d_raw, d_vis)
    }

    pub fn relation_dim(&self) -> usize {
        3 * self.d_vis + 2 * self.d_emb
    }

    pub fn forward(&self, ps: &ParamStore, set: &RelationSet) -> Result<EncodedSet> {
        if set.is_empty() {
            return Err(Error::EmptySet { op: "RelationEncoder::forward" });
        }
        if set.sem_human.cols() != self.d_emb {
            return Err(Error::dims("RelationEncoder(semantics)", &[self.d_emb], &set.sem_human.shape()));
        }
        Ok(EncodedSet {
            xh: self.human.forward(ps, &set.human)?,
            xo: self.object.forward(ps, &set.objects)?,
            xu: self.union.forward(ps, &set.unions)?,
            yh: set.sem_human.clone(),
            yo: set.sem_objects.clone(),
        })
    }

    pub fn backward(&self, ps: &mut ParamStore, set: &RelationSet, grads: &EncodedGrads) {
        self.human.backward(ps, &set.human, &grads.xh);
        self.object.backward(ps, &set.objects, &grads.xo);
        self.union.backward(ps, &set.unions, &grads.xu);
    }
}

/// Materialized relation representation `r = [x_v, y_s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationFeature {
    /// `[x_h, x_o, x_u]`
    pub x_v: Vec<f64>,
    /// `[y_h, y_o]`
    pub y_s: Vec<f64>,
    pub r: Vec<f64>,
}

pub fn build_relation_features(
    snapshot: &SnapshotRecord,
    lookup: &SemanticLookup,
    encoder: &RelationEncoder,
    ps: &ParamStore,
    use_semantics: bool,
) -> Result<Vec<RelationFeature>> {
    let set = RelationSet::from_snapshot(snapshot, lookup, use_semantics)?;
    let enc = encoder.forward(ps, &set)?;
    let rm = enc.relation_matrix();
    let split = 3 * encoder.d_vis;
    Ok((0..rm.rows())
        .map(|i| {
            let r = rm.row(i).to_vec();
            RelationFeature {
                x_v: r[..split].to_vec(),
                y_s: r[split..].to_vec(),
                r,
            }
        })
        .collect())
}

/// How ground-truth past actions are assembled for snapshot `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    /// `𝒜_0 ∪ … ∪ 𝒜_t`
    #[default]
    AllPast,
    /// `𝒜_{t−1} ∪ 𝒜_t`
    LastTwo,
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setup::AllPast => "all_past",
            Setup::LastTwo => "last_two",
        })
    }
}

impl std::str::FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_past" => Ok(Setup::AllPast),
            "last_two" => Ok(Setup::LastTwo),
            other => Err(Error::Config(format!("unknown setup `{other}` (all_past | last_two)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbductionExample {
    pub video_id: String,
    pub snapshot_index: usize,
    pub snapshot: SnapshotRecord,
    pub target: ActionSet,
    pub is_last_snapshot: bool,
}

/// Group records by `video_id` (first-appearance order) and sort each video by `t`.
pub fn group_by_video(records: Vec<SnapshotRecord>) -> Vec<Vec<SnapshotRecord>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<SnapshotRecord>> = HashMap::new();
    for r in records {
        if !groups.contains_key(&r.video_id) {
            order.push(r.video_id.clone());
        }
        groups.entry(r.video_id.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let mut v = groups.remove(&id).unwrap_or_default();
            v.sort_by_key(|s| s.snapshot_index);
            v
        })
        .collect()
}

/// Build `𝒟 = ∪_i {ℛ_i, 𝒜_i}` under the given label setup.
///
/// Single-snapshot videos are dropped. Under [`Setup::LastTwo`] the first
/// snapshot of a video has no predecessor and is skipped. Examples whose
/// target would be empty are skipped as well; the final surviving example of
/// every video carries `is_last_snapshot`.
pub fn build_abduction_dataset(videos: &[Vec<SnapshotRecord>], setup: Setup, n_actions: usize) -> Result<Vec<AbductionExample>> {
    let mut out = Vec::new();
    for video in videos {
        if video.len() < 2 {
            continue;
        }
        if video.windows(2).any(|w| w[0].snapshot_index >= w[1].snapshot_index) {
            return Err(Error::Data(format!(
                "video `{}`: snapshot indices must be strictly increasing",
                video[0].video_id
            )));
        }
        let per_step = video.iter().map(|s| s.action_set(n_actions)).collect::<Result<Vec<_>>>()?;
        let start = out.len();
        let mut cumulative = ActionSet::empty(n_actions);
        for (t, s) in video.iter().enumerate() {
            cumulative.union_with(&per_step[t]);
            let target = match setup {
                Setup::AllPast => cumulative.clone(),
                Setup::LastTwo => {
                    if t == 0 {
                        continue;
                    }
                    let mut pair = per_step[t - 1].clone();
                    pair.union_with(&per_step[t]);
                    pair
                }
            };
            if target.is_empty() {
                continue;
            }
            out.push(AbductionExample {
                video_id: s.video_id.clone(),
                snapshot_index: s.snapshot_index,
                snapshot: s.clone(),
                target,
                is_last_snapshot: false,
            });
        }
        if out.len() > start {
            if let Some(last) = out.last_mut() {
                last.is_last_snapshot = true;
            }
        }
    }
    Ok(out)
}

pub fn filter_last_snapshots(ds: &[AbductionExample]) -> Vec<AbductionExample> {
    ds.iter().filter(|e| e.is_last_snapshot).cloned().collect()
}

/// Group examples of consecutive equal `video_id` into per-video batches.
pub fn batches_by_video(ds: &[AbductionExample]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=ds.len() {
        if i == ds.len() || ds[i].video_id != ds[start].video_id {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(video: &str, t: usize, cats: &[usize], actions: &[usize]) -> SnapshotRecord {
        SnapshotRecord {
            video_id: video.to_string(),
            snapshot_index: t,
            human_feature: vec![0.5; 4],
            objects: cats
                .iter()
                .map(|&c| ObjectObservation {
                    category: c,
                    feature: vec![c as f64; 4],
                    union: vec![1.0; 4],
                    predicate: None,
                })
                .collect(),
            actions: actions.to_vec(),
        }
    }

    fn targets(ds: &[AbductionExample]) -> Vec<Vec<usize>> {
        ds.iter().map(|e| e.target.indices()).collect()
    }

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary {
            objects: (0..n).map(|i| format!("obj{i}")).collect(),
            actions: vec!["a0".into()],
            predicates: vec!["p0".into()],
        }
    }

    fn lookup(n: usize) -> SemanticLookup {
        let mut names = vocab(n).objects;
        names.push(HUMAN_CATEGORY.into());
        SemanticLookup::new(&vocab(n), &EmbeddingTable::one_hot(&names)).unwrap()
    }

    #[test]
    fn all_past_targets_are_cumulative() {
        let video = vec![snap("v", 0, &[0], &[1]), snap("v", 1, &[0], &[2]), snap("v", 2, &[0], &[3])];
        let ds = build_abduction_dataset(&[video], Setup::AllPast, 4).unwrap();
        assert_eq!(targets(&ds), vec![vec![1], vec![1, 2], vec![1, 2, 3]]);
        assert!(ds.windows(2).all(|w| w[0].target.is_subset(&w[1].target)));
        assert_eq!(ds.iter().map(|e| e.is_last_snapshot).collect::<Vec<_>>(), [false, false, true]);
    }

    #[test]
    fn last_two_targets_are_pairwise() {
        let video = vec![snap("v", 0, &[0], &[1]), snap("v", 1, &[0], &[2]), snap("v", 2, &[0], &[3])];
        let ds = build_abduction_dataset(&[video], Setup::LastTwo, 4).unwrap();
        assert_eq!(targets(&ds), vec![vec![1, 2], vec![2, 3]]);
        assert_eq!(ds.iter().map(|e| e.snapshot_index).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn single_snapshot_videos_are_dropped() {
        let ds = build_abduction_dataset(&[vec![snap("solo", 0, &[0], &[0])]], Setup::AllPast, 2).unwrap();
        assert!(ds.is_empty());
        assert!(build_abduction_dataset(&[], Setup::LastTwo, 2).unwrap().is_empty());
    }

    #[test]
    fn unsorted_video_is_rejected() {
        let video = vec![snap("v", 1, &[0], &[0]), snap("v", 0, &[0], &[0])];
        assert!(matches!(
            build_abduction_dataset(&[video], Setup::AllPast, 2),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn last_snapshot_filter_keeps_one_per_video() {
        let videos: Vec<_> = (0..5)
            .map(|v| (0..3).map(|t| snap(&format!("v{v}"), t, &[0], &[t % 2])).collect())
            .collect();
        let ds = build_abduction_dataset(&videos, Setup::AllPast, 2).unwrap();
        assert_eq!(filter_last_snapshots(&ds).len(), 5);
        assert!(filter_last_snapshots(&[]).is_empty());

        let mut mixed = videos.clone();
        mixed.push(vec![snap("short", 0, &[0], &[0])]);
        mixed.push((0..6).map(|t| snap("long", t, &[0], &[0])).collect());
        let ds = build_abduction_dataset(&mixed, Setup::AllPast, 2).unwrap();
        assert_eq!(filter_last_snapshots(&ds).len(), 6);
    }

    #[test]
    fn grouping_restores_video_order() {
        let recs = vec![snap("b", 1, &[0], &[0]), snap("a", 0, &[0], &[0]), snap("b", 0, &[0], &[0])];
        let groups = group_by_video(recs);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0][0].video_id, "b");
        assert_eq!(groups[0].iter().map(|s| s.snapshot_index).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn project_visual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamStore::new();
        let lin = Linear::new(&mut ps, "p", 2048, 512, &mut rng).unwrap();
        let raw = vec![0.1; 2048];
        assert_eq!(project_visual(&raw, ps.value(lin.w), ps.value(lin.b)).unwrap().len(), 512);

        let eye = Tensor2::from_vec(4, 4, (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        let x = [1.0, -2.0, 3.0, 0.5];
        assert_eq!(project_visual(&x, &eye, &Tensor2::zeros(1, 4)).unwrap(), x);
        let bias = Tensor2::row_vector(&[1.0, 1.0]).unwrap();
        assert_eq!(project_visual(&[3.0, 4.0], &Tensor2::zeros(2, 2), &bias).unwrap(), [1.0, 1.0]);
        assert!(project_visual(&[1.0], &eye, &Tensor2::zeros(1, 4)).is_err());
    }

    #[test]
    fn relation_feature_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new();
        let lk = lookup(3);
        let enc = RelationEncoder::new(&mut ps, 4, 5, lk.dim(), &mut rng).unwrap();
        let s = snap("v", 0, &[0, 2, 1], &[0]);
        let on = build_relation_features(&s, &lk, &enc, &ps, true).unwrap();
        let off = build_relation_features(&s, &lk, &enc, &ps, false).unwrap();
        assert_eq!(on.len(), 3);
        for (a, b) in on.iter().zip(&off) {
            assert_eq!(a.r.len(), 3 * 5 + 2 * lk.dim());
            assert_eq!(a.x_v, b.x_v);
            assert!(b.r[15..].iter().all(|&v| v == 0.0));
            assert_eq!(a.y_s.len(), 2 * lk.dim());
        }
        // second object is category 2: its embedding is the unit vector e_2
        assert_eq!(on[1].y_s[lk.dim() + 2], 1.0);
    }

    #[test]
    fn real_feature_dimensions() {
        // d_vis = 512, d_emb = 200
        let names: Vec<String> = vec!["cup".into(), HUMAN_CATEGORY.into()];
        let table = EmbeddingTable::random(&names, 200, 0);
        let vocab = Vocabulary {
            objects: vec!["cup".into()],
            actions: vec!["drink".into()],
            predicates: vec![],
        };
        let lk = SemanticLookup::new(&vocab, &table).unwrap();
        let mut ps = ParamStore::new();
        let enc = RelationEncoder::new(&mut ps, 16, 512, lk.dim(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(enc.relation_dim(), 1936);
    }

    #[test]
    fn unknown_category_is_named() {
        let vocab = Vocabulary {
            objects: vec!["cup".into(), "broom".into()],
            actions: vec![],
            predicates: vec![],
        };
        let table = EmbeddingTable::one_hot(&["cup".into(), HUMAN_CATEGORY.into()]);
        let err = SemanticLookup::new(&vocab, &table).unwrap_err();
        assert!(err.to_string().contains("broom"));
    }

    #[test]
    fn snapshot_json_shape() {
        let s = snap("v1", 2, &[1], &[0, 3]);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["t"], 2);
        assert_eq!(json["objects"][0]["cat"], 1);
        assert!(json["objects"][0].get("pred").is_none());
        let back: SnapshotRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SnapshotRecord>(r#"{"video_id":"x","t":0,"human":[],"objects":[],"actions":[],"extra":1}"#).is_err());
    }
}
