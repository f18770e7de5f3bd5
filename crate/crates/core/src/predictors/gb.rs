//! Gradient boosting with squared loss over regression trees grown with
//! exact greedy variance-reduction splits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree stored in a flat vector; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn new(nodes: Vec<TreeNode>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            match *n {
                TreeNode::Leaf(v) if !v.is_finite() => {
                    return Err(Error::Format("non-finite leaf value".into()))
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    // children always follow their parent, which rules out cycles
                    if feature >= n_features
                        || !threshold.is_finite()
                        || left <= i
                        || right <= i
                        || left >= nodes.len()
                        || right >= nodes.len()
                    {
                        return Err(Error::Format(format!("invalid split node {i}")));
                    }
                }
                _ => {}
            }
        }
        Ok(Self { nodes })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

/// Row-major feature matrix with every column's sample order precomputed.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub x: Vec<f64>,
    sorted: Vec<Vec<u32>>,
}

impl FeatureMatrix {
    pub fn new(x: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if x.len() != rows * cols || cols == 0 {
            return Err(Error::Shape(format!(
                "feature matrix {rows}x{cols} got {} values",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("features must be finite".into()));
        }
        let sorted = (0..cols)
            .map(|f| {
                let mut idx: Vec<u32> = (0..rows as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[a as usize * cols + f]
                        .total_cmp(&x[b as usize * cols + f])
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            x,
            sorted,
        })
    }

    pub fn get(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.cols + f]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Threshold strictly between two distinct sorted values.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

struct Building {
    sum: f64,
    count: usize,
    split: Option<(SplitChoice, usize, usize)>,
}

const DONE: u32 = u32::MAX;

/// Grows one tree level by level. Each level makes one pass over every
/// presorted column, scanning all open nodes at once.
pub fn fit_tree(
    m: &FeatureMatrix,
    r: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> Result<RegressionTree> {
    if r.len() != m.rows {
        return Err(Error::Shape(
            "residual length differs from the sample count".into(),
        ));
    }
    if m.rows < 2 {
        return Err(Error::InsufficientHistory(format!(
            "a regression tree needs at least 2 samples, got {}",
            m.rows
        )));
    }
    let min_leaf = min_leaf.max(1);
    let mut nodes = vec![Building {
        sum: r.iter().sum(),
        count: m.rows,
        split: None,
    }];
    let mut node_of = vec![0u32; m.rows];
    let mut open: Vec<usize> = vec![0];
    for _ in 0..max_depth {
        open.retain(|&n| nodes[n].count >= 2 * min_leaf);
        if open.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &n) in open.iter().enumerate() {
            slot[n] = s;
        }
        let mut best: Vec<Option<SplitChoice>> = vec![None; open.len()];
        let mut left_n = vec![0usize; open.len()];
        let mut left_s = vec![0.0f64; open.len()];
        let mut last = vec![f64::NAN; open.len()];
        for f in 0..m.cols {
            left_n.fill(0);
            left_s.fill(0.0);
            last.fill(f64::NAN);
            for &i in &m.sorted[f] {
                let i = i as usize;
                let nd = node_of[i];
                if nd == DONE || slot[nd as usize] == usize::MAX {
                    continue;
                }
                let s = slot[nd as usize];
                let v = m.get(i, f);
                let (n, total) = (nodes[nd as usize].count, nodes[nd as usize].sum);
                if left_n[s] >= min_leaf && n - left_n[s] >= min_leaf && v > last[s] {
                    let (ln, rn) = (left_n[s] as f64, (n - left_n[s]) as f64);
                    let rs = total - left_s[s];
                    let gain = left_s[s] * left_s[s] / ln + rs * rs / rn - total * total / n as f64;
                    if best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(SplitChoice {
                            feature: f,
                            threshold: midpoint(last[s], v),
                            gain,
                        });
                    }
                }
                left_n[s] += 1;
                left_s[s] += r[i];
                last[s] = v;
            }
        }
        let mut next = Vec::new();
        for (s, &n) in open.iter().enumerate() {
            if let Some(b) = best[s].filter(|b| b.gain > 0.0) {
                let l = nodes.len();
                nodes.push(Building {
                    sum: 0.0,
                    count: 0,
                    split: None,
                });
                nodes.push(Building {
                    sum: 0.0,
                    count: 0,
                    split: None,
                });
                nodes[n].split = Some((b, l, l + 1));
                next.extend([l, l + 1]);
            }
        }
        for i in 0..m.rows {
            let nd = node_of[i];
            if nd == DONE {
                continue;
            }
            match nodes[nd as usize].split {
                Some((b, l, rt)) => {
                    let c = if m.get(i, b.feature) <= b.threshold {
                        l
                    } else {
                        rt
                    };
                    node_of[i] = c as u32;
                    nodes[c].sum += r[i];
                    nodes[c].count += 1;
                }
                None => node_of[i] = DONE,
            }
        }
        open = next;
    }
    let out = nodes
        .iter()
        .map(|b| match b.split {
            Some((c, l, r)) => TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: r,
            },
            None => TreeNode::Leaf(b.sum / b.count as f64),
        })
        .collect();
    RegressionTree::new(out, m.cols)
}

/// `F(x) = init + learning_rate · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl GbModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

/// Boosts `n_trees` stages on squared loss. Also returns the training MSE
/// after each stage.
pub fn fit_gb(
    m: &FeatureMatrix,
    y: &[f64],
    n_trees: usize,
    max_depth: usize,
    learning_rate: f64,
    min_leaf: usize,
) -> Result<(GbModel, Vec<f64>)> {
    if y.len() != m.rows {
        return Err(Error::Shape(
            "target length differs from the sample count".into(),
        ));
    }
    if m.rows < 2 {
        return Err(Error::InsufficientHistory(format!(
            "boosting needs at least 2 samples, got {}",
            m.rows
        )));
    }
    let init = y.iter().sum::<f64>() / y.len() as f64;
    let mut f = vec![init; y.len()];
    let mut trees = Vec::with_capacity(n_trees);
    let mut losses = Vec::with_capacity(n_trees);
    let mut resid = vec![0.0; y.len()];
    for _ in 0..n_trees {
        for ((r, yv), fv) in resid.iter_mut().zip(y).zip(&f) {
            *r = yv - fv;
        }
        let tree = fit_tree(m, &resid, max_depth, min_leaf)?;
        for (i, fv) in f.iter_mut().enumerate() {
            *fv += learning_rate * tree.predict(m.row(i));
        }
        losses.push(f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64);
        trees.push(tree);
    }
    Ok((
        GbModel {
            init,
            learning_rate,
            trees,
        },
        losses,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best single split by scanning every distinct midpoint of every feature
    /// and recomputing both sides' squared error from scratch.
    fn brute_force_split(x: &[Vec<f64>], y: &[f64], min_leaf: usize) -> (usize, f64) {
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
        };
        let mut best = (f64::INFINITY, 0, 0.0);
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = midpoint(w[0], w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| x[i][f] <= thr);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let lv: Vec<f64> = l.iter().map(|&i| y[i]).collect();
                let rv: Vec<f64> = r.iter().map(|&i| y[i]).collect();
                let e = sse(&lv) + sse(&rv);
                if e < best.0 - 1e-9 {
                    best = (e, f, thr);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn first_split_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let n = 60;
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            let step = rng.random_range(2.0..8.0);
            let y: Vec<f64> = x
                .iter()
                .map(|r| if r[1] > step { 5.0 } else { 1.0 } + rng.random_range(-0.3..0.3))
                .collect();
            let m = FeatureMatrix::new(x.concat(), n, 3).unwrap();
            let (model, _) = fit_gb(&m, &y, 1, 1, 0.1, 2).unwrap();
            let (feature, threshold) = brute_force_split(&x, &y, 2);
            match model.trees[0].nodes[0] {
                TreeNode::Split {
                    feature: f,
                    threshold: t,
                    ..
                } => assert_eq!((f, t), (feature, threshold)),
                _ => panic!("no split"),
            }
            assert_eq!(feature, 1);
        }
    }

    #[test]
    fn depth_zero_predicts_mean() {
        let m = FeatureMatrix::new(vec![1.0, 2.0, 3.0, 4.0], 4, 1).unwrap();
        let y = [1.0, 2.0, 4.0, 9.0];
        let (model, _) = fit_gb(&m, &y, 1, 0, 1.0, 2).unwrap();
        assert_eq!(model.predict(&[7.0]), 4.0);
    }

    #[test]
    fn training_loss_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 300;
        let x: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (3.0 * x[i * 4]).sin() + x[i * 4 + 1] * x[i * 4 + 2] + rng.random_range(-0.1..0.1)
            })
            .collect();
        let m = FeatureMatrix::new(x, n, 4).unwrap();
        let (model, losses) = fit_gb(&m, &y, 200, 5, 0.1, 2).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(model.trees.iter().all(|t| t.depth() <= 5));
        assert!(losses[199] < 0.1 * losses[0]);
    }

    #[test]
    fn leaves_respect_minimum_size() {
        let m = FeatureMatrix::new((0..5).map(f64::from).collect(), 5, 1).unwrap();
        let t = fit_tree(&m, &[0.0, 10.0, 0.0, 0.0, 0.0], 5, 2).unwrap();
        let mut counts = vec![0; t.nodes.len()];
        for i in 0..5 {
            let mut n = 0;
            while let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = t.nodes[n]
            {
                n = if m.get(i, feature) <= threshold {
                    left
                } else {
                    right
                };
            }
            counts[n] += 1;
        }
        assert!(counts
            .iter()
            .zip(&t.nodes)
            .all(|(c, n)| !matches!(n, TreeNode::Leaf(_)) || *c >= 2));
        assert!(fit_tree(&FeatureMatrix::new(vec![1.0], 1, 1).unwrap(), &[1.0], 3, 1).is_err());
    }
}
