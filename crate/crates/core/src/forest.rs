//! CART random forests used by the imputer.
//!
//! Split search runs over at most [`MAX_THRESHOLDS`] candidate cut points per
//! feature (observed quantiles, or every distinct value when there are fewer),
//! which keeps a tree at `O(depth * n * mtry)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::par;
use crate::rng;

pub const MAX_THRESHOLDS: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Variance reduction, leaf = mean.
    Regression,
    /// Gini impurity on 0/1 labels, leaf = majority class.
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    /// Nodes with at most this many rows are not split further.
    pub min_leaf: usize,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf(f64),
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    pub task: Task,
    trees: Vec<Tree>,
}

/// Column-major binned copy of the predictor matrix.
struct Binned {
    n: usize,
    codes: Vec<u8>,
    cuts: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: &[f64], n: usize, p: usize) -> Self {
        let mut codes = vec![0u8; n * p];
        let mut cuts = Vec::with_capacity(p);
        for j in 0..p {
            let mut col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
            col.sort_by(f64::total_cmp);
            col.dedup();
            // cut k sends values <= cut[k] left; the last distinct value is never a cut
            let c: Vec<f64> = if col.len() <= MAX_THRESHOLDS + 1 {
                col[..col.len().saturating_sub(1)].to_vec()
            } else {
                let mut c: Vec<f64> = (1..=MAX_THRESHOLDS)
                    .map(|k| col[k * (col.len() - 1) / (MAX_THRESHOLDS + 1)])
                    .collect();
                c.dedup();
                c
            };
            for i in 0..n {
                let v = x[i * p + j];
                codes[j * n + i] = c.partition_point(|&t| t < v) as u8;
            }
            cuts.push(c);
        }
        Binned { n, codes, cuts }
    }

    fn code(&self, j: usize, i: usize) -> usize {
        self.codes[j * self.n + i] as usize
    }
}

struct Builder<'a> {
    b: &'a Binned,
    y: &'a [f64],
    task: Task,
    params: ForestParams,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let s: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let m = s / idx.len() as f64;
        match self.task {
            Task::Regression => m,
            Task::Classification => (m > 0.5) as u8 as f64,
        }
    }

    /// Best (feature, bin) by maximal `sum^2 / n` summed over the two sides,
    /// which is equivalent to minimal SSE (regression) or weighted Gini.
    fn best_split(&self, idx: &[usize], features: &[usize], pairs: &mut Vec<(u8, f64)>) -> Option<(usize, usize, f64)> {
        let n = idx.len() as f64;
        let parent = self.side_score(idx.iter().map(|&i| self.y[i]).sum(), n);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut count = [0usize; MAX_THRESHOLDS + 1];
        let mut sum = [0f64; MAX_THRESHOLDS + 1];
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        for &j in features {
            let nb = self.b.cuts[j].len();
            if nb == 0 {
                continue;
            }
            let mut consider = |nl: usize, sl: f64, k: usize| {
                let nr = idx.len() - nl;
                if nl == 0 || nr == 0 {
                    return;
                }
                let score = self.side_score(sl, nl as f64) + self.side_score(total - sl, nr as f64);
                if score > parent + 1e-12 * (1.0 + parent.abs()) && best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((j, k, score));
                }
            };
            if idx.len() < nb {
                // small node: sort its codes rather than scan every bin
                pairs.clear();
                pairs.extend(idx.iter().map(|&i| (self.b.code(j, i) as u8, self.y[i])));
                pairs.sort_unstable_by_key(|p| p.0);
                let (mut nl, mut sl) = (0usize, 0.0);
                for w in 0..pairs.len() - 1 {
                    nl += 1;
                    sl += pairs[w].1;
                    if pairs[w + 1].0 != pairs[w].0 {
                        consider(nl, sl, pairs[w].0 as usize);
                    }
                }
                continue;
            }
            count[..=nb].fill(0);
            sum[..=nb].fill(0.0);
            for &i in idx {
                let c = self.b.code(j, i);
                count[c] += 1;
                sum[c] += self.y[i];
            }
            let (mut nl, mut sl) = (0usize, 0.0);
            for k in 0..nb {
                nl += count[k];
                sl += sum[k];
                if count[k] > 0 {
                    consider(nl, sl, k);
                }
            }
        }
        best
    }

    fn side_score(&self, s: f64, n: f64) -> f64 {
        match self.task {
            Task::Regression => s * s / n,
            // class counts c1 = s, c0 = n - s
            Task::Classification => (s * s + (n - s) * (n - s)) / n,
        }
    }

    fn build(&self, mut idx: Vec<usize>, rng: &mut rng::Rng) -> Tree {
        let p = self.b.cuts.len();
        let mtry = self.params.mtry.clamp(1, p.max(1));
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, 0usize, idx.len())];
        let mut features: Vec<usize> = (0..p).collect();
        let mut pairs = Vec::new();
        let mut right: Vec<usize> = Vec::new();
        while let Some((at, lo, hi)) = stack.pop() {
            let slice = &mut idx[lo..hi];
            let pure = slice.iter().all(|&i| self.y[i] == self.y[slice[0]]);
            let split = if pure || slice.len() <= self.params.min_leaf.max(1) || p == 0 {
                None
            } else {
                // partial Fisher-Yates: the first mtry entries are the draw
                for a in 0..mtry {
                    let b = rng.gen_range(a..p);
                    features.swap(a, b);
                }
                self.best_split(slice, &features[..mtry], &mut pairs)
            };
            let Some((j, k, _)) = split else {
                nodes[at] = Node::Leaf(self.leaf_value(slice));
                continue;
            };
            // stable partition: codes <= k go left
            right.clear();
            let mut n_left = 0;
            for r in 0..slice.len() {
                let i = slice[r];
                if self.b.code(j, i) <= k {
                    slice[n_left] = i;
                    n_left += 1;
                } else {
                    right.push(i);
                }
            }
            slice[n_left..].copy_from_slice(&right);
            let mid = lo + n_left;
            let l = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[at] = Node::Split {
                feature: j as u32,
                threshold: self.b.cuts[j][k],
                left: l as u32,
                right: l as u32 + 1,
            };
            stack.push((l + 1, mid, hi));
            stack.push((l, lo, mid));
        }
        Tree { nodes }
    }
}

impl Forest {
    /// Fits `params.n_trees` trees on bootstrap samples of the rows of the
    /// row-major `n x p` matrix `x`. Tree `t` draws from `substream(seed, t)`.
    pub fn fit(x: &[f64], n: usize, p: usize, y: &[f64], task: Task, params: ForestParams, seed: u64) -> Forest {
        assert_eq!(x.len(), n * p);
        assert_eq!(y.len(), n);
        assert!(n > 0);
        let binned = Binned::new(x, n, p);
        let builder = Builder {
            b: &binned,
            y,
            task,
            params,
        };
        let trees = par::map_indexed(params.n_trees, |t| {
            let mut r = rng::rng(rng::substream(seed, t as u64));
            let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
            builder.build(idx, &mut r)
        });
        Forest { task, trees }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let m = self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64;
        match self.task {
            Task::Regression => m,
            Task::Classification => (m > 0.5) as u8 as f64,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}
