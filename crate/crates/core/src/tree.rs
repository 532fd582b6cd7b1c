//! Axis-aligned CART decision trees and random forests.
//!
//! Splits are chosen greedily by class-weighted Gini gain over midpoints
//! between consecutive distinct feature values. Missing cells are routed by
//! a per-node default direction learned at training time: both directions
//! are evaluated and the one giving the larger gain is kept. Leaves store
//! raw class counts and predict Laplace-smoothed frequencies.
//!
//! Models serialize to an index-linked JSON document (see [`ModelDoc`]).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mix_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Gains at or below this are treated as "no improvement".
const MIN_GAIN: f64 = 1e-12;

/// A feature vector with explicit missing cells.
pub type FeatureRow = Vec<Option<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    /// Every row weighs 1.
    Uniform,
    /// Weights inversely proportional to class frequency.
    Balanced,
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub class_weights: ClassWeights,
    /// Class arity; inferred as `max(label) + 1` when absent.
    #[serde(default)]
    pub n_classes: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 8, min_leaf: 20, class_weights: ClassWeights::Balanced, n_classes: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// `ceil(sqrt(d))` candidate features per split.
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubsample {
    fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            FeatureSubsample::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            FeatureSubsample::All => n_features,
            FeatureSubsample::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub class_weights: ClassWeights,
    #[serde(default)]
    pub n_classes: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 10,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            class_weights: ClassWeights::Balanced,
            n_classes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, missing_left: bool, left: usize, right: usize },
    Leaf { counts: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    n_classes: usize,
    feature_names: Vec<String>,
    seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
    feature_names: Vec<String>,
    oob_estimate: Option<f64>,
    seed: u64,
}

/// Laplace-smoothed class frequencies: `(count + 1) / (n + classes)`.
pub fn laplace(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    let denom = (n + counts.len() as u64) as f64;
    counts.iter().map(|c| (*c + 1) as f64 / denom).collect()
}

fn check_arity(row: &[Option<f64>], n_features: usize) -> Result<()> {
    if row.len() != n_features {
        return Err(Error::Schema(format!("feature vector has {} cells, model expects {n_features}", row.len())));
    }
    Ok(())
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf that `row` lands in.
    pub fn leaf_index(&self, row: &[Option<f64>]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split { feature, threshold, missing_left, left, right } => {
                    i = match row[*feature] {
                        Some(v) if v <= *threshold => *left,
                        Some(_) => *right,
                        None if *missing_left => *left,
                        None => *right,
                    };
                }
            }
        }
    }

    pub fn predict_proba(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        check_arity(row, self.n_features())?;
        match &self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { counts } => Ok(laplace(counts)),
            TreeNode::Split { .. } => unreachable!("leaf_index always stops at a leaf"),
        }
    }
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn oob_estimate(&self) -> Option<f64> {
        self.oob_estimate
    }

    /// Unweighted mean of the member trees' probability vectors.
    pub fn predict_proba(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        check_arity(row, self.feature_names.len())?;
        let mut acc = vec![0.0; self.n_classes];
        for tree in &self.trees {
            let TreeNode::Leaf { counts } = &tree.nodes[tree.leaf_index(row)] else { unreachable!() };
            for (a, p) in acc.iter_mut().zip(laplace(counts)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Either model family behind one prediction interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Tree(DecisionTree),
    Forest(RandomForest),
}

impl Classifier {
    pub fn predict_proba(&self, row: &[Option<f64>]) -> Result<Vec<f64>> {
        match self {
            Classifier::Tree(t) => t.predict_proba(row),
            Classifier::Forest(f) => f.predict_proba(row),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Classifier::Tree(t) => t.n_classes,
            Classifier::Forest(f) => f.n_classes,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            Classifier::Tree(t) => &t.feature_names,
            Classifier::Forest(f) => &f.feature_names,
        }
    }
}

// ---------------------------------------------------------------------------
// Training

struct TrainingData {
    /// Column-major values; NaN marks a missing cell.
    columns: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    class_weight: Vec<f64>,
}

impl TrainingData {
    fn new(
        rows: &[FeatureRow],
        labels: &[usize],
        n_features: usize,
        n_classes: Option<usize>,
        weights: &ClassWeights,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Train("no training rows".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Train(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if rows.len() < 2 {
            return Err(Error::Train("need at least two training rows".into()));
        }
        let max_label = *labels.iter().max().expect("nonempty");
        let n_classes = n_classes.unwrap_or(max_label + 1);
        if max_label >= n_classes {
            return Err(Error::Train(format!("label {max_label} out of range for {n_classes} classes")));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); n_features];
        for row in rows {
            check_arity(row, n_features)?;
            for (col, cell) in columns.iter_mut().zip(row) {
                match cell {
                    Some(v) if v.is_nan() => return Err(Error::Train("NaN is not a valid feature value".into())),
                    Some(v) => col.push(*v),
                    None => col.push(f64::NAN),
                }
            }
        }
        let mut freq = vec![0usize; n_classes];
        for l in labels {
            freq[*l] += 1;
        }
        let class_weight = match weights {
            ClassWeights::Uniform => vec![1.0; n_classes],
            ClassWeights::Balanced => {
                let realized = freq.iter().filter(|f| **f > 0).count() as f64;
                freq.iter().map(|f| if *f == 0 { 0.0 } else { labels.len() as f64 / (realized * *f as f64) }).collect()
            }
            ClassWeights::Custom(w) => {
                if w.len() != n_classes || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Config("custom class weights must be n_classes nonnegative reals".into()));
                }
                w.clone()
            }
        };
        Ok(Self { columns, labels: labels.to_vec(), n_classes, class_weight })
    }
}

struct Grower<'a> {
    data: &'a TrainingData,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, usize)>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    gain: f64,
}

/// `W * gini(w)` for a class-weight vector, i.e. `W - sum(w_k^2) / W`.
fn impurity_mass(w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    total - w.iter().map(|x| x * x).sum::<f64>() / total
}

impl<'a> Grower<'a> {
    fn grow(&mut self, idx: Vec<u32>, depth: usize) -> usize {
        let k = self.data.n_classes;
        let mut counts = vec![0u64; k];
        let mut weights = vec![0.0; k];
        for &i in &idx {
            let y = self.data.labels[i as usize];
            counts[y] += 1;
            weights[y] += self.data.class_weight[y];
        }
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        let node_id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts: counts.clone() });
        if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return node_id;
        }
        let Some(best) = self.best_split(&idx, &weights) else {
            return node_id;
        };
        let col = &self.data.columns[best.feature];
        let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = idx.iter().partition(|&&i| {
            let v = col[i as usize];
            if v.is_nan() {
                best.missing_left
            } else {
                v <= best.threshold
            }
        });
        drop(idx);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[node_id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            missing_left: best.missing_left,
            left,
            right,
        };
        node_id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.columns.len();
        if self.mtry >= d {
            return (0..d).collect();
        }
        let mut feats = sample(&mut self.rng, d, self.mtry).into_vec();
        feats.sort_unstable();
        feats
    }

    fn best_split(&mut self, idx: &[u32], parent_w: &[f64]) -> Option<Candidate> {
        let k = self.data.n_classes;
        let cw = &self.data.class_weight;
        let total_w: f64 = parent_w.iter().sum();
        if total_w <= 0.0 {
            return None;
        }
        let parent_mass = impurity_mass(parent_w);
        let min_leaf = self.min_leaf.max(1);
        let mut best: Option<Candidate> = None;

        for f in self.candidate_features() {
            let col = &self.data.columns[f];
            self.buf.clear();
            let mut miss_w = vec![0.0; k];
            let mut miss_n = 0usize;
            for &i in idx {
                let v = col[i as usize];
                let y = self.data.labels[i as usize];
                if v.is_nan() {
                    miss_w[y] += cw[y];
                    miss_n += 1;
                } else {
                    self.buf.push((v, y));
                }
            }
            if self.buf.len() < 2 {
                continue;
            }
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut present_w = vec![0.0; k];
            for (_, y) in &self.buf {
                present_w[*y] += cw[*y];
            }
            let n_present = self.buf.len();
            let mut left_w = vec![0.0; k];
            let mut right_w = vec![0.0; k];
            let mut with_miss = vec![0.0; k];
            for j in 0..n_present - 1 {
                let (v, y) = self.buf[j];
                left_w[y] += cw[y];
                let next = self.buf[j + 1].0;
                if v == next {
                    continue;
                }
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                let n_left = j + 1;
                let n_right = n_present - n_left;
                for c in 0..k {
                    right_w[c] = present_w[c] - left_w[c];
                }
                // Missing cells to the left, then to the right. Without
                // missing cells both options coincide and only one is scored.
                let options: &[bool] = if miss_n == 0 { &[true] } else { &[true, false] };
                for &missing_left in options {
                    let (nl, nr) = if missing_left { (n_left + miss_n, n_right) } else { (n_left, n_right + miss_n) };
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    for c in 0..k {
                        with_miss[c] = miss_w[c] + if missing_left { left_w[c] } else { right_w[c] };
                    }
                    let mass = if missing_left {
                        impurity_mass(&with_miss) + impurity_mass(&right_w)
                    } else {
                        impurity_mass(&left_w) + impurity_mass(&with_miss)
                    };
                    let gain = (parent_mass - mass) / total_w;
                    let better = match &best {
                        None => gain > MIN_GAIN,
                        Some(b) => gain > b.gain + MIN_GAIN,
                    };
                    if better {
                        let missing_left = if miss_n == 0 { n_left >= n_right } else { missing_left };
                        best = Some(Candidate { feature: f, threshold, missing_left, gain });
                    }
                }
            }
        }
        best
    }
}

fn grow_tree(
    data: &TrainingData,
    idx: Vec<u32>,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    seed: u64,
) -> Vec<TreeNode> {
    let mut grower = Grower {
        data,
        max_depth,
        min_leaf,
        mtry,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
        buf: Vec::with_capacity(idx.len()),
    };
    grower.grow(idx, 0);
    grower.nodes
}

pub fn train_decision_tree(
    rows: &[FeatureRow],
    labels: &[usize],
    feature_names: &[String],
    cfg: &TreeConfig,
    seed: u64,
) -> Result<DecisionTree> {
    let data = TrainingData::new(rows, labels, feature_names.len(), cfg.n_classes, &cfg.class_weights)?;
    let idx: Vec<u32> = (0..rows.len() as u32).collect();
    let nodes = grow_tree(&data, idx, cfg.max_depth, cfg.min_leaf, feature_names.len(), seed);
    Ok(DecisionTree { nodes, n_classes: data.n_classes, feature_names: feature_names.to_vec(), seed })
}

pub fn train_random_forest(
    rows: &[FeatureRow],
    labels: &[usize],
    feature_names: &[String],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<RandomForest> {
    if cfg.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let data = TrainingData::new(rows, labels, feature_names.len(), cfg.n_classes, &cfg.class_weights)?;
    let n = rows.len();
    let mtry = cfg.feature_subsample.resolve(feature_names.len());

    let grown: Vec<(Vec<TreeNode>, Vec<bool>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = mix_seed(seed, t as u64);
            let mut in_bag = vec![!cfg.bootstrap; n];
            let idx: Vec<u32> = if cfg.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tree_seed, 0xb007));
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i as u32
                    })
                    .collect()
            } else {
                (0..n as u32).collect()
            };
            (grow_tree(&data, idx, cfg.max_depth, cfg.min_leaf, mtry, tree_seed), in_bag)
        })
        .collect();

    let trees: Vec<DecisionTree> = grown
        .iter()
        .enumerate()
        .map(|(t, (nodes, _))| DecisionTree {
            nodes: nodes.clone(),
            n_classes: data.n_classes,
            feature_names: feature_names.to_vec(),
            seed: mix_seed(seed, t as u64),
        })
        .collect();

    let oob_estimate = if cfg.bootstrap {
        let mut correct = 0usize;
        let mut scored = 0usize;
        for (i, row) in rows.iter().enumerate() {
            let mut acc = vec![0.0; data.n_classes];
            let mut votes = 0;
            for (tree, (_, in_bag)) in trees.iter().zip(&grown) {
                if in_bag[i] {
                    continue;
                }
                let p = tree.predict_proba(row)?;
                acc.iter_mut().zip(p).for_each(|(a, p)| *a += p);
                votes += 1;
            }
            if votes > 0 {
                scored += 1;
                if argmax(&acc) == labels[i] {
                    correct += 1;
                }
            }
        }
        (scored > 0).then(|| correct as f64 / scored as f64)
    } else {
        None
    };

    Ok(RandomForest { trees, n_classes: data.n_classes, feature_names: feature_names.to_vec(), oob_estimate, seed })
}

/// Index of the largest element; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Serialization

/// Serialized node. Children are indices into the same node array and
/// always point forward, so the format needs no recursion.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeDoc {
    Split { f: usize, v: f64, mleft: bool, l: usize, r: usize },
    Leaf { counts: Vec<u64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeDoc {
    pub nodes: Vec<NodeDoc>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    pub kind: String,
    pub n_classes: usize,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trees: Option<Vec<TreeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_estimate: Option<f64>,
    pub seed: u64,
}

fn nodes_to_doc(nodes: &[TreeNode]) -> Vec<NodeDoc> {
    nodes
        .iter()
        .map(|n| match n {
            TreeNode::Split { feature, threshold, missing_left, left, right } => {
                NodeDoc::Split { f: *feature, v: *threshold, mleft: *missing_left, l: *left, r: *right }
            }
            TreeNode::Leaf { counts } => NodeDoc::Leaf { counts: counts.clone() },
        })
        .collect()
}

fn nodes_from_doc(docs: &[NodeDoc], n_classes: usize, n_features: usize) -> Result<Vec<TreeNode>> {
    let bad = |msg: String| Error::ModelBundle(format!("invalid tree: {msg}"));
    if docs.is_empty() {
        return Err(bad("no nodes".into()));
    }
    let mut referenced = vec![false; docs.len()];
    let mut nodes = Vec::with_capacity(docs.len());
    for (i, d) in docs.iter().enumerate() {
        nodes.push(match d {
            NodeDoc::Split { f, v, mleft, l, r } => {
                if *f >= n_features {
                    return Err(bad(format!("node {i} splits on feature {f} of {n_features}")));
                }
                if !v.is_finite() {
                    return Err(bad(format!("node {i} has a non-finite threshold")));
                }
                for c in [*l, *r] {
                    if c <= i || c >= docs.len() || referenced[c] {
                        return Err(bad(format!("node {i} has an invalid child {c}")));
                    }
                    referenced[c] = true;
                }
                if l == r {
                    return Err(bad(format!("node {i} has identical children")));
                }
                TreeNode::Split { feature: *f, threshold: *v, missing_left: *mleft, left: *l, right: *r }
            }
            NodeDoc::Leaf { counts } => {
                if counts.len() != n_classes {
                    return Err(bad(format!("leaf {i} has {} counts for {n_classes} classes", counts.len())));
                }
                if counts.iter().sum::<u64>() == 0 {
                    return Err(bad(format!("leaf {i} is empty")));
                }
                TreeNode::Leaf { counts: counts.clone() }
            }
        });
    }
    if referenced.iter().skip(1).any(|r| !r) {
        return Err(bad("unreachable nodes".into()));
    }
    Ok(nodes)
}

impl Classifier {
    pub fn to_doc(&self) -> ModelDoc {
        match self {
            Classifier::Tree(t) => ModelDoc {
                version: MODEL_FORMAT_VERSION,
                kind: "tree".into(),
                n_classes: t.n_classes,
                features: t.feature_names.clone(),
                nodes: Some(nodes_to_doc(&t.nodes)),
                trees: None,
                oob_estimate: None,
                seed: t.seed,
            },
            Classifier::Forest(f) => ModelDoc {
                version: MODEL_FORMAT_VERSION,
                kind: "forest".into(),
                n_classes: f.n_classes,
                features: f.feature_names.clone(),
                nodes: None,
                trees: Some(f.trees.iter().map(|t| TreeDoc { nodes: nodes_to_doc(&t.nodes), seed: t.seed }).collect()),
                oob_estimate: f.oob_estimate,
                seed: f.seed,
            },
        }
    }

    pub fn from_doc(doc: ModelDoc) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelBundle(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                doc.version
            )));
        }
        if doc.n_classes == 0 {
            return Err(Error::ModelBundle("model has zero classes".into()));
        }
        let d = doc.features.len();
        match doc.kind.as_str() {
            "tree" => {
                let nodes = doc.nodes.ok_or_else(|| Error::ModelBundle("tree without nodes".into()))?;
                Ok(Classifier::Tree(DecisionTree {
                    nodes: nodes_from_doc(&nodes, doc.n_classes, d)?,
                    n_classes: doc.n_classes,
                    feature_names: doc.features,
                    seed: doc.seed,
                }))
            }
            "forest" => {
                let docs = doc.trees.ok_or_else(|| Error::ModelBundle("forest without trees".into()))?;
                if docs.is_empty() {
                    return Err(Error::ModelBundle("forest has no trees".into()));
                }
                let trees = docs
                    .iter()
                    .map(|t| {
                        Ok(DecisionTree {
                            nodes: nodes_from_doc(&t.nodes, doc.n_classes, d)?,
                            n_classes: doc.n_classes,
                            feature_names: doc.features.clone(),
                            seed: t.seed,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Classifier::Forest(RandomForest {
                    trees,
                    n_classes: doc.n_classes,
                    feature_names: doc.features,
                    oob_estimate: doc.oob_estimate,
                    seed: doc.seed,
                }))
            }
            other => Err(Error::ModelBundle(format!("unknown model kind `{other}`"))),
        }
    }
}

pub fn serialize_model(model: &Classifier) -> Vec<u8> {
    serde_json::to_vec(&model.to_doc()).expect("model serialization is infallible")
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Classifier> {
    if bytes.is_empty() {
        return Err(Error::ModelBundle("empty model document".into()));
    }
    let doc: ModelDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::ModelBundle(format!("malformed model document: {e}")))?;
    Classifier::from_doc(doc)
}
