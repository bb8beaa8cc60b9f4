//! Binary regression trees (CART): SSE-reduction splits, weakest-link
//! cost-complexity pruning, prediction and Graphviz export.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, FeatureId, FeatureMatrix, FeatureValues, Result};

/// Two candidate gains closer than this fraction of the parent SSE are a
/// tie; a gain below it counts as no improvement.
pub const GAIN_TOLERANCE: f64 = 1e-10;

/// Growth and pruning controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    /// Nodes with fewer rows are not split.
    pub min_split: usize,
    /// Minimum rows in each child of a split.
    pub min_leaf: usize,
    /// Complexity parameter used by [`prune_tree`].
    pub cp: f64,
    pub max_depth: usize,
    /// Number of features drawn at random at each node (forest mode).
    pub feature_subsample: Option<usize>,
}

impl Default for GrowParams {
    fn default() -> Self {
        Self {
            min_split: 20,
            min_leaf: 7,
            cp: 0.01,
            max_depth: 30,
            feature_subsample: None,
        }
    }
}

impl GrowParams {
    /// Unpruned forest member drawing `mtry` candidate features per node.
    pub fn forest(mtry: usize) -> Self {
        Self {
            min_split: 10,
            min_leaf: 5,
            cp: 0.0,
            max_depth: 30,
            feature_subsample: Some(mtry),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_leaf < 1 {
            return Err(Error::InvalidParams("min_leaf must be at least 1".into()));
        }
        if 2 * self.min_leaf > self.min_split {
            return Err(Error::InvalidParams(format!(
                "min_split ({}) must be at least twice min_leaf ({})",
                self.min_split, self.min_leaf
            )));
        }
        if self.cp.is_nan() || self.cp < 0.0 {
            return Err(Error::InvalidParams("cp must be non-negative".into()));
        }
        if self.feature_subsample == Some(0) {
            return Err(Error::InvalidParams("feature subsample must be at least 1".into()));
        }
        Ok(())
    }
}

/// A chosen split: rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub feature: FeatureId,
    pub threshold: f64,
    /// SSE(parent) − SSE(left) − SSE(right).
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub feature: FeatureId,
    pub threshold: f64,
    pub gain: f64,
    pub left: usize,
    pub right: usize,
}

/// A tree node. Every node keeps the mean, row count and SSE of the
/// training rows routed to it; internal nodes also carry their split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub value: f64,
    pub count: usize,
    pub sse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<NodeSplit>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// Fitted regression tree, stored as a pre-order node arena rooted at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    params: GrowParams,
    features: Vec<FeatureId>,
    n_train: usize,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn params(&self) -> &GrowParams {
        &self.params
    }

    /// Features the tree was allowed to split on.
    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    /// Training rows (with multiplicity) seen at the root.
    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Share of training rows routed to `node`.
    pub fn fraction(&self, node: usize) -> f64 {
        self.nodes[node].count as f64 / self.n_train as f64
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Index of the leaf that `value_of` routes to.
    pub fn route(&self, mut value_of: impl FnMut(FeatureId) -> Result<f64>) -> Result<usize> {
        let mut idx = 0;
        while let Some(split) = &self.nodes[idx].split {
            idx = if value_of(split.feature)? <= split.threshold {
                split.left
            } else {
                split.right
            };
        }
        Ok(idx)
    }

    pub fn predict_one(&self, x: &FeatureValues) -> Result<f64> {
        predict_tree(self, x)
    }

    /// Batch prediction over the rows of `x`.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let mut pos = [usize::MAX; FeatureId::COUNT];
        for f in self.used_features() {
            pos[f.index()] = x.position(f).ok_or(Error::MissingFeature(f))?;
        }
        Ok((0..x.n_rows())
            .map(|i| self.predict_row(|f| x.column_at(pos[f.index()])[i]))
            .collect())
    }

    /// Infallible routing for callers that already resolved every feature.
    pub(crate) fn predict_row(&self, mut value_of: impl FnMut(FeatureId) -> f64) -> f64 {
        let mut idx = 0;
        while let Some(split) = &self.nodes[idx].split {
            idx = if value_of(split.feature) <= split.threshold {
                split.left
            } else {
                split.right
            };
        }
        self.nodes[idx].value
    }

    pub fn used_features(&self) -> BTreeSet<FeatureId> {
        used_features(self)
    }

    /// Sum of leaf SSEs, i.e. the training SSE of the tree.
    pub fn training_sse(&self) -> f64 {
        self.leaves().map(|n| n.sse).sum()
    }
}

struct NodeData {
    mean: f64,
    sse: f64,
    constant: bool,
}

fn node_data(rows: &[usize], y: &[f64]) -> NodeData {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let sse = rows.iter().map(|&r| (y[r] - mean) * (y[r] - mean)).sum();
    let first = y[rows[0]];
    NodeData {
        mean,
        sse,
        constant: rows.iter().all(|&r| y[r] == first),
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Searches `positions` (matrix column positions, already in FeatureId
/// order) for the split with the largest SSE reduction.
fn search_split(
    rows: &[usize],
    x: &FeatureMatrix,
    y: &[f64],
    positions: &[usize],
    params: &GrowParams,
    node: &NodeData,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<(usize, f64, f64)> {
    let n = rows.len();
    if n < params.min_split || n < 2 * params.min_leaf || node.constant {
        return None;
    }
    let tol = GAIN_TOLERANCE * node.sse;
    let mut best: Option<(usize, f64, f64)> = None;
    let mut best_gain = tol;
    for &pos in positions {
        let col = x.column_at(pos);
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (col[r], y[r] - node.mean)));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = scratch.iter().map(|p| p.1).sum();
        let parent_term = total * total / n as f64;
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += scratch[i].1;
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < params.min_leaf {
                continue;
            }
            if n_right < params.min_leaf {
                break;
            }
            if scratch[i].0 == scratch[i + 1].0 {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64
                - parent_term;
            if gain > best_gain + if best.is_some() { tol } else { 0.0 } {
                best_gain = gain;
                best = Some((pos, midpoint(scratch[i].0, scratch[i + 1].0), gain));
            }
        }
    }
    best
}

fn sorted_positions(x: &FeatureMatrix, features: &[FeatureId]) -> Result<Vec<usize>> {
    let mut ids = features.to_vec();
    ids.sort_unstable();
    ids.dedup();
    x.positions_of(&ids)
}

/// Best SSE-reducing split of `rows` over `candidates`, or `None` when no
/// admissible split reduces SSE. Ties go to the smaller FeatureId, then the
/// smaller threshold.
pub fn best_split(
    rows: &[usize],
    x: &FeatureMatrix,
    y: &[f64],
    candidates: &[FeatureId],
    params: &GrowParams,
) -> Result<Option<SplitSpec>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let positions = sorted_positions(x, candidates)?;
    let node = node_data(rows, y);
    let mut scratch = Vec::with_capacity(rows.len());
    Ok(
        search_split(rows, x, y, &positions, params, &node, &mut scratch).map(|(pos, threshold, gain)| {
            SplitSpec {
                feature: x.features()[pos],
                threshold,
                gain,
            }
        }),
    )
}

struct Grower<'a, R> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: GrowParams,
    positions: Vec<usize>,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
    candidates: Vec<usize>,
}

impl<R: Rng> Grower<'_, R> {
    fn draw_candidates(&mut self) {
        self.candidates.clear();
        self.candidates.extend_from_slice(&self.positions);
        let p = self.candidates.len();
        if let (Some(m), Some(rng)) = (self.params.feature_subsample, self.rng.as_deref_mut()) {
            if m < p {
                for i in 0..m {
                    let j = rng.random_range(i..p);
                    self.candidates.swap(i, j);
                }
                self.candidates.truncate(m);
                let ids = self.x.features();
                self.candidates.sort_unstable_by_key(|&pos| ids[pos]);
            }
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let data = node_data(&rows, self.y);
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value: data.mean,
            count: rows.len(),
            sse: data.sse,
            split: None,
        });
        if rows.len() < self.params.min_split || depth >= self.params.max_depth || data.constant {
            return idx;
        }
        self.draw_candidates();
        let found = search_split(
            &rows,
            self.x,
            self.y,
            &self.candidates,
            &self.params,
            &data,
            &mut self.scratch,
        );
        let Some((pos, threshold, gain)) = found else {
            return idx;
        };
        let col = self.x.column_at(pos);
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| col[r] <= threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[idx].split = Some(NodeSplit {
            feature: self.x.features()[pos],
            threshold,
            gain,
            left: l,
            right: r,
        });
        idx
    }
}

fn grow_impl<R: Rng>(
    rows: &[usize],
    x: &FeatureMatrix,
    y: &[f64],
    params: &GrowParams,
    rng: Option<&mut R>,
) -> Result<Tree> {
    params.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= y.len()) {
        return Err(Error::InvalidParams(format!("row index {bad} out of range")));
    }
    let mut features = x.features().to_vec();
    features.sort_unstable();
    let mut grower = Grower {
        x,
        y,
        params: *params,
        positions: x.positions_of(&features)?,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
        candidates: Vec::new(),
    };
    grower.grow(rows.to_vec(), 0);
    Ok(Tree {
        nodes: grower.nodes,
        params: *params,
        features,
        n_train: rows.len(),
    })
}

/// Grows a tree on `rows` (duplicates allowed) considering every feature at
/// every node. Fails if `params` asks for feature subsampling; use
/// [`grow_tree_with_rng`] for that.
pub fn grow_tree(rows: &[usize], x: &FeatureMatrix, y: &[f64], params: &GrowParams) -> Result<Tree> {
    if matches!(params.feature_subsample, Some(m) if m < x.n_features()) {
        return Err(Error::InvalidParams(
            "feature subsampling needs a random stream".into(),
        ));
    }
    grow_impl::<rand_chacha::ChaCha8Rng>(rows, x, y, params, None)
}

/// Grows a tree, drawing per-node candidate features from `rng` when
/// `params.feature_subsample` is set.
pub fn grow_tree_with_rng(
    rows: &[usize],
    x: &FeatureMatrix,
    y: &[f64],
    params: &GrowParams,
    rng: &mut impl Rng,
) -> Result<Tree> {
    grow_impl(rows, x, y, params, Some(rng))
}

/// Weakest-link pruning: while some internal node's per-split improvement
/// (SSE(node) − SSE(its leaves)) / ((leaves − 1) · SSE(root)) is below
/// `cp`, collapse the node with the smallest such value.
pub fn prune_tree(tree: &Tree, cp: f64) -> Tree {
    let root_sse = tree.nodes[0].sse;
    let mut collapsed = vec![false; tree.nodes.len()];
    if root_sse > 0.0 {
        loop {
            let mut best: Option<(f64, usize)> = None;
            subtree_scan(tree, 0, &collapsed, root_sse, &mut best);
            match best {
                Some((g, idx)) if g < cp => collapsed[idx] = true,
                _ => break,
            }
        }
    }
    let mut nodes = Vec::new();
    copy_pruned(tree, 0, &collapsed, &mut nodes);
    Tree {
        nodes,
        params: GrowParams { cp, ..tree.params },
        features: tree.features.clone(),
        n_train: tree.n_train,
    }
}

/// Returns (leaf SSE sum, leaf count) of the active subtree at `idx`, and
/// records the internal node with the smallest per-split improvement.
fn subtree_scan(
    tree: &Tree,
    idx: usize,
    collapsed: &[bool],
    root_sse: f64,
    best: &mut Option<(f64, usize)>,
) -> (f64, usize) {
    let node = &tree.nodes[idx];
    match &node.split {
        Some(split) if !collapsed[idx] => {
            let (ls, ll) = subtree_scan(tree, split.left, collapsed, root_sse, best);
            let (rs, rl) = subtree_scan(tree, split.right, collapsed, root_sse, best);
            let (sse, leaves) = (ls + rs, ll + rl);
            let g = (node.sse - sse) / ((leaves - 1) as f64 * root_sse);
            if best.is_none_or(|(b, _)| g < b) {
                *best = Some((g, idx));
            }
            (sse, leaves)
        }
        _ => (node.sse, 1),
    }
}

fn copy_pruned(tree: &Tree, idx: usize, collapsed: &[bool], out: &mut Vec<Node>) -> usize {
    let node = &tree.nodes[idx];
    let new_idx = out.len();
    out.push(Node {
        split: None,
        ..node.clone()
    });
    if let Some(split) = &node.split {
        if !collapsed[idx] {
            let l = copy_pruned(tree, split.left, collapsed, out);
            let r = copy_pruned(tree, split.right, collapsed, out);
            out[new_idx].split = Some(NodeSplit {
                left: l,
                right: r,
                ..split.clone()
            });
        }
    }
    new_idx
}

/// Routes `x` to a leaf and returns its prediction.
pub fn predict_tree(tree: &Tree, x: &FeatureValues) -> Result<f64> {
    let leaf = tree.route(|f| x.require(f))?;
    Ok(tree.nodes[leaf].value)
}

/// Features referenced by at least one internal node.
pub fn used_features(tree: &Tree) -> BTreeSet<FeatureId> {
    tree.nodes
        .iter()
        .filter_map(|n| n.split.as_ref().map(|s| s.feature))
        .collect()
}

/// Graphviz rendering. Each node shows its prediction and share of the
/// training rows; internal nodes also show their split.
pub fn export_dot(tree: &Tree) -> String {
    let mut out = String::from("digraph tree {\n  node [shape=box, fontname=\"helvetica\"];\n");
    for (i, node) in tree.nodes.iter().enumerate() {
        let mut value = format!("{:.3}", node.value);
        if value == "-0.000" {
            value.remove(0);
        }
        let mut label = format!("{value}\\n{:.1}%", 100.0 * tree.fraction(i));
        if let Some(s) = &node.split {
            let _ = write!(label, "\\n{} ≤ {:.3}", s.feature, s.threshold);
        }
        let _ = writeln!(out, "  n{i} [label=\"{label}\"];");
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        if let Some(s) = &node.split {
            let _ = writeln!(out, "  n{i} -> n{} [label=\"yes\"];", s.left);
            let _ = writeln!(out, "  n{i} -> n{} [label=\"no\"];", s.right);
        }
    }
    out.push_str("}\n");
    out
}
