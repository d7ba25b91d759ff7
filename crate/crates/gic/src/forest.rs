//! Bagged CART decision trees whose output is the fraction of trees voting
//! for the positive class.

use std::io::{Read, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledDataset};
use crate::error::{check_len, GicError, Result};

/// A black-box scoring function over full feature vectors.
///
/// Implementations must be deterministic and return values in `[0, 1]`.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    /// Probability of the positive class. `x` has length `n_features()`.
    fn predict_probability(&self, x: &[f64]) -> f64;

    /// Worst attainable objective value.
    fn omega(&self) -> f64 {
        1.0
    }
}

/// Classifier returning the same probability everywhere.
#[derive(Clone, Debug)]
pub struct ConstantClassifier {
    pub p: usize,
    pub value: f64,
}

impl Classifier for ConstantClassifier {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict_probability(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` descends into `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
    },
}

/// Axis-aligned binary tree stored as a flat node list; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Builds a tree from explicit nodes, checking child links and split
    /// indices against `p`.
    pub fn from_nodes(nodes: Vec<Node>, p: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(GicError::InvalidSpec("tree has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            {
                if feature >= p
                    || left >= nodes.len()
                    || right >= nodes.len()
                    || left <= i
                    || right <= i
                {
                    return Err(GicError::InvalidSpec(format!("malformed split node {i}")));
                }
                if !threshold.is_finite() {
                    return Err(GicError::NonFinite("tree threshold"));
                }
            }
        }
        Ok(Self { nodes })
    }

    /// A single-split tree: `x[feature] <= threshold` votes `le`, otherwise `gt`.
    pub fn stump(feature: usize, threshold: f64, le: Label, gt: Label) -> Self {
        Self {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { label: le },
                Node::Leaf { label: gt },
            ],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { label } => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features considered per split; `None` means `ceil(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    p: usize,
    params: ForestParams,
    trees: Vec<Tree>,
}

const FOREST_FORMAT: &str = "gic-forest";
const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    p: usize,
    n_trees: usize,
    seed: u64,
    max_depth: usize,
    features_per_split: Option<usize>,
    trees: Vec<Tree>,
}

impl Forest {
    pub fn from_trees(p: usize, trees: Vec<Tree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(GicError::DegenerateTraining(
                "forest needs at least one tree".into(),
            ));
        }
        for tree in &trees {
            Tree::from_nodes(tree.nodes.clone(), p)?;
        }
        let params = ForestParams {
            n_trees: trees.len(),
            max_depth: trees.iter().map(Tree::depth).max().unwrap_or(0),
            features_per_split: None,
            seed: 0,
        };
        Ok(Self { p, params, trees })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn positive_votes(&self, x: &[f64]) -> usize {
        self.trees
            .iter()
            .filter(|t| t.predict(x) == Label::Positive)
            .count()
    }

    /// Proportion of trees voting for the positive class.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len("forest input", self.p, x.len())?;
        Ok(self.vote_share(x))
    }

    #[inline]
    fn vote_share(&self, x: &[f64]) -> f64 {
        self.positive_votes(x) as f64 / self.trees.len() as f64
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let file = ForestFile {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            p: self.p,
            n_trees: self.trees.len(),
            seed: self.params.seed,
            max_depth: self.params.max_depth,
            features_per_split: self.params.features_per_split,
            trees: self.trees.clone(),
        };
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let file: ForestFile = serde_json::from_reader(r)?;
        if file.format != FOREST_FORMAT || file.version != FOREST_VERSION {
            return Err(GicError::Config(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        check_len("forest tree count", file.n_trees, file.trees.len())?;
        let mut forest = Self::from_trees(file.p, file.trees)?;
        forest.params = ForestParams {
            n_trees: file.n_trees,
            max_depth: file.max_depth,
            features_per_split: file.features_per_split,
            seed: file.seed,
        };
        Ok(forest)
    }
}

impl Classifier for Forest {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict_probability(&self, x: &[f64]) -> f64 {
        self.vote_share(x)
    }
}

/// Trains a random forest: each tree is a CART/Gini tree grown on a bootstrap
/// sample of size `n`, choosing among a random feature subset at every split.
pub fn train_forest(data: &LabeledDataset, params: &ForestParams) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(GicError::DegenerateTraining(
            "n_trees must be positive".into(),
        ));
    }
    if data.n() < 2 {
        return Err(GicError::DegenerateTraining(format!(
            "need at least 2 instances, got {}",
            data.n()
        )));
    }
    if data.count(Label::Positive) == 0 || data.count(Label::Negative) == 0 {
        return Err(GicError::DegenerateTraining(
            "both classes must be present".into(),
        ));
    }
    let p = data.p();
    if p == 0 {
        return Err(GicError::DegenerateTraining("no features".into()));
    }
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = data.n();
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut builder = TreeBuilder {
            data,
            mtry,
            max_depth: params.max_depth,
            nodes: Vec::new(),
            rng: &mut rng,
        };
        builder.grow(sample, 0);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(Forest {
        p,
        params: ForestParams {
            features_per_split: Some(mtry),
            ..*params
        },
        trees,
    })
}

struct TreeBuilder<'a, R: Rng> {
    data: &'a LabeledDataset,
    mtry: usize,
    max_depth: usize,
    nodes: Vec<Node>,
    rng: &'a mut R,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let q = pos as f64 / total as f64;
    2.0 * q * (1.0 - q)
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let pos = samples
            .iter()
            .filter(|&&i| self.data.label(i) == Label::Positive)
            .count();
        // Ties go to the benign class.
        let majority = if 2 * pos > samples.len() {
            Label::Positive
        } else {
            Label::Negative
        };
        self.nodes.push(Node::Leaf { label: majority });

        if depth >= self.max_depth || pos == 0 || pos == samples.len() {
            return id;
        }
        let Some(split) = self.best_split(&samples, pos) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.data.row(i)[split.feature] <= split.threshold);
        let left_id = self.grow(left, depth + 1);
        let right_id = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
        };
        id
    }

    fn best_split(&mut self, samples: &[usize], pos: usize) -> Option<SplitChoice> {
        let n = samples.len();
        let parent = gini(pos, n);
        let features = index::sample(self.rng, self.data.p(), self.mtry);
        let mut best: Option<SplitChoice> = None;
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
        for feature in features.iter() {
            sorted.clear();
            sorted.extend(samples.iter().map(|&i| {
                (
                    self.data.row(i)[feature],
                    self.data.label(i) == Label::Positive,
                )
            }));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 1..n {
                if sorted[k - 1].1 {
                    left_pos += 1;
                }
                let (lo, hi) = (sorted[k - 1].0, sorted[k].0);
                if lo == hi {
                    continue;
                }
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(pos - left_pos, n - k))
                    / n as f64;
                if impurity < parent - 1e-12
                    && best.as_ref().is_none_or(|b| impurity < b.impurity)
                {
                    let mut threshold = 0.5 * (lo + hi);
                    // Guard against the midpoint rounding onto the upper value.
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitChoice {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}
