//! Graph convolution over road neighbourhoods: per-link time convolutions
//! alternating with neighbourhood concatenation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::CONTEXT_LEN;
use crate::nn::{mse_loss, Activation, Conv1DLayer, DenseLayer, Param};
use crate::predictors::train::Network;

pub const BRANCH_NAMES: [&str; 3] = ["n", "d", "w"];

/// Static dimensions of a graph model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcnnLayout {
    pub n_links: usize,
    /// `2k + 1`
    pub rows: usize,
    /// Input time lengths of the recent, daily and weekly branches.
    pub t_in: [usize; 3],
    pub branches: [Vec<usize>; 3],
    pub common: Vec<usize>,
    pub h: usize,
}

/// One entry of a shape trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeStage {
    pub name: String,
    pub shape: Vec<usize>,
}

impl GcnnLayout {
    /// Time length after each branch convolution, per branch.
    fn branch_lengths(&self) -> Result<[Vec<usize>; 3]> {
        let mut out: [Vec<usize>; 3] = Default::default();
        for b in 0..3 {
            let mut t = self.t_in[b];
            for (l, &w) in self.branches[b].iter().enumerate() {
                if w == 0 || w > t {
                    return Err(Error::Config(format!(
                        "branch {} layer {}: kernel width {w} does not fit time length {t}",
                        BRANCH_NAMES[b],
                        l + 1
                    )));
                }
                t = t - w + 1;
                out[b].push(t);
            }
        }
        Ok(out)
    }

    /// Shape-inference dry run; fails if any time length would drop below 1.
    pub fn trace(&self) -> Result<Vec<ShapeStage>> {
        if self.n_links == 0 || self.rows == 0 || self.h == 0 {
            return Err(Error::Config(
                "graph model dimensions must be positive".into(),
            ));
        }
        let b = self.branches[0].len();
        if b == 0 || self.branches.iter().any(|s| s.len() != b) || self.common.is_empty() {
            return Err(Error::Config(
                "branch schedules must be nonempty and equally long, common nonempty".into(),
            ));
        }
        let (n, r) = (self.n_links, self.rows);
        let mut st = Vec::new();
        let stage = |name: String, shape: Vec<usize>| ShapeStage { name, shape };
        for (bi, name) in BRANCH_NAMES.iter().enumerate() {
            st.push(stage(format!("input {name}"), vec![n, r, self.t_in[bi]]));
        }
        let lens = self.branch_lengths()?;
        for (bi, name) in BRANCH_NAMES.iter().enumerate() {
            for (l, &t) in lens[bi].iter().enumerate() {
                st.push(stage(format!("{name} conv {}", l + 1), vec![n, t]));
                st.push(stage(format!("{name} concat {}", l + 1), vec![n, r, t]));
            }
        }
        let mut t: usize = lens.iter().map(|v| v[v.len() - 1]).sum();
        st.push(stage("join".into(), vec![n, r, t]));
        for (l, &w) in self.common.iter().enumerate() {
            if w == 0 || w > t {
                return Err(Error::Config(format!(
                    "common layer {}: kernel width {w} does not fit time length {t}",
                    l + 1
                )));
            }
            t = t - w + 1;
            st.push(stage(format!("common conv {}", l + 1), vec![n, t]));
            if l + 1 < self.common.len() {
                st.push(stage(format!("common concat {}", l + 1), vec![n, r, t]));
            }
        }
        st.push(stage("with context".into(), vec![n, t + CONTEXT_LEN]));
        st.push(stage("output".into(), vec![n, self.h]));
        Ok(st)
    }

    /// Per-link feature length after the last convolution.
    pub fn h_prime(&self) -> Result<usize> {
        let tr = self.trace()?;
        Ok(tr[tr.len() - 2].shape[1] - CONTEXT_LEN)
    }

    pub fn input_len(&self) -> usize {
        self.n_links * (self.rows * self.t_in.iter().sum::<usize>() + CONTEXT_LEN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnnNet {
    pub layout: GcnnLayout,
    /// Source link index of each block row, `N x rows`; row 0 is the link itself.
    pub nbr: Vec<usize>,
    pub branches: [Vec<Conv1DLayer>; 3],
    pub common: Vec<Conv1DLayer>,
    pub head: DenseLayer,
}

struct SampleCache {
    branch_x: [Vec<Vec<f64>>; 3],
    branch_y: [Vec<Vec<f64>>; 3],
    common_x: Vec<Vec<f64>>,
    common_y: Vec<Vec<f64>>,
    head_in: Vec<f64>,
    out: Vec<f64>,
}

impl GcnnNet {
    pub fn new<R: Rng>(
        rng: &mut R,
        layout: GcnnLayout,
        nbr: Vec<usize>,
        per_link_first: bool,
    ) -> Result<Self> {
        let hp = layout.h_prime()?;
        let (n, r) = (layout.n_links, layout.rows);
        let mut branches: [Vec<Conv1DLayer>; 3] = Default::default();
        for b in 0..3 {
            for (l, &w) in layout.branches[b].iter().enumerate() {
                branches[b].push(Conv1DLayer::new(rng, n, r, w, per_link_first && l == 0)?);
            }
        }
        let common = layout
            .common
            .iter()
            .map(|&w| Conv1DLayer::new(rng, n, r, w, false))
            .collect::<Result<_>>()?;
        let head = DenseLayer::new(rng, hp + CONTEXT_LEN, layout.h, Activation::Identity);
        Self::from_parts(layout, nbr, branches, common, head)
    }

    pub fn from_parts(
        layout: GcnnLayout,
        nbr: Vec<usize>,
        branches: [Vec<Conv1DLayer>; 3],
        common: Vec<Conv1DLayer>,
        head: DenseLayer,
    ) -> Result<Self> {
        let hp = layout.h_prime()?;
        let (n, r) = (layout.n_links, layout.rows);
        if nbr.len() != n * r || nbr.iter().any(|&i| i >= n) {
            return Err(Error::Shape(
                "neighbour table does not match the layout".into(),
            ));
        }
        let conv_ok = |c: &Conv1DLayer, w: usize| c.channels == n && c.height == r && c.width == w;
        for b in 0..3 {
            if branches[b].len() != layout.branches[b].len()
                || branches[b]
                    .iter()
                    .zip(&layout.branches[b])
                    .any(|(c, &w)| !conv_ok(c, w))
            {
                return Err(Error::Shape(format!(
                    "branch {} layers do not match the layout",
                    BRANCH_NAMES[b]
                )));
            }
        }
        if common.len() != layout.common.len()
            || common
                .iter()
                .zip(&layout.common)
                .any(|(c, &w)| !conv_ok(c, w))
        {
            return Err(Error::Shape("common layers do not match the layout".into()));
        }
        if head.d_in != hp + CONTEXT_LEN || head.d_out != layout.h {
            return Err(Error::Shape(
                "output layer does not match the layout".into(),
            ));
        }
        Ok(Self {
            layout,
            nbr,
            branches,
            common,
            head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.branches
            .iter()
            .flatten()
            .chain(&self.common)
            .map(|c| c.param_count())
            .sum::<usize>()
            + self.head.param_count()
    }

    fn gather(&self, y: &[f64], t: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nbr.len() * t);
        for &src in &self.nbr {
            out.extend_from_slice(&y[src * t..(src + 1) * t]);
        }
        out
    }

    fn scatter(&self, dx: &[f64], t: usize) -> Vec<f64> {
        let mut dy = vec![0.0; self.layout.n_links * t];
        for (row, &src) in self.nbr.iter().enumerate() {
            for (a, b) in dy[src * t..(src + 1) * t]
                .iter_mut()
                .zip(&dx[row * t..(row + 1) * t])
            {
                *a += b;
            }
        }
        dy
    }

    fn forward_sample(&self, x: &[f64]) -> Result<SampleCache> {
        let lay = &self.layout;
        let (n, r) = (lay.n_links, lay.rows);
        if x.len() != lay.input_len() {
            return Err(Error::Shape(format!(
                "graph input has {} values, expected {}",
                x.len(),
                lay.input_len()
            )));
        }
        let mut offset = 0;
        let mut branch_x: [Vec<Vec<f64>>; 3] = Default::default();
        let mut branch_y: [Vec<Vec<f64>>; 3] = Default::default();
        let mut last_len = [0usize; 3];
        for b in 0..3 {
            let mut t = lay.t_in[b];
            let mut cur = x[offset..offset + n * r * t].to_vec();
            offset += n * r * t;
            for (l, conv) in self.branches[b].iter().enumerate() {
                let y = conv.forward(&cur, t)?;
                t = conv.output_len(t);
                branch_x[b].push(cur);
                cur = if l + 1 < self.branches[b].len() {
                    self.gather(&y, t)
                } else {
                    Vec::new()
                };
                branch_y[b].push(y);
            }
            last_len[b] = t;
        }
        let total: usize = last_len.iter().sum();
        let mut joined = Vec::with_capacity(n * total);
        for i in 0..n {
            for b in 0..3 {
                let y = &branch_y[b][branch_y[b].len() - 1];
                joined.extend_from_slice(&y[i * last_len[b]..(i + 1) * last_len[b]]);
            }
        }
        let mut t = total;
        let mut cur = self.gather(&joined, t);
        let mut common_x = Vec::with_capacity(self.common.len());
        let mut common_y = Vec::with_capacity(self.common.len());
        for (l, conv) in self.common.iter().enumerate() {
            let y = conv.forward(&cur, t)?;
            t = conv.output_len(t);
            common_x.push(cur);
            cur = if l + 1 < self.common.len() {
                self.gather(&y, t)
            } else {
                Vec::new()
            };
            common_y.push(y);
        }
        let ctx = &x[offset..offset + n * CONTEXT_LEN];
        let last = &common_y[common_y.len() - 1];
        let mut head_in = Vec::with_capacity(n * (t + CONTEXT_LEN));
        for i in 0..n {
            head_in.extend_from_slice(&last[i * t..(i + 1) * t]);
            head_in.extend_from_slice(&ctx[i * CONTEXT_LEN..(i + 1) * CONTEXT_LEN]);
        }
        let out = self.head.forward(&head_in, n)?;
        Ok(SampleCache {
            branch_x,
            branch_y,
            common_x,
            common_y,
            head_in,
            out,
        })
    }

    fn backward_sample(&mut self, c: &SampleCache, dout: &[f64]) -> Result<()> {
        let n = self.layout.n_links;
        let dhead = self.head.backward(&c.head_in, &c.out, dout, n)?;
        let hp = self.head.d_in - CONTEXT_LEN;
        let mut dy: Vec<f64> = Vec::with_capacity(n * hp);
        for i in 0..n {
            dy.extend_from_slice(&dhead[i * (hp + CONTEXT_LEN)..i * (hp + CONTEXT_LEN) + hp]);
        }
        // common layers, last to first
        let mut t_out = hp;
        for l in (0..self.common.len()).rev() {
            let t_in = t_out + self.common[l].width - 1;
            let dx = self.common[l].backward(&c.common_x[l], &c.common_y[l], &dy, t_in);
            dy = self.scatter(&dx, t_in);
            t_out = t_in;
        }
        // split the joined gradient back into the branches
        let lens: Vec<usize> = (0..3)
            .map(|b| c.branch_y[b][c.branch_y[b].len() - 1].len() / n)
            .collect();
        let total: usize = lens.iter().sum();
        let mut dbranch: Vec<Vec<f64>> = lens.iter().map(|&t| Vec::with_capacity(n * t)).collect();
        for i in 0..n {
            let mut off = i * total;
            for b in 0..3 {
                dbranch[b].extend_from_slice(&dy[off..off + lens[b]]);
                off += lens[b];
            }
        }
        for (b, mut dy) in dbranch.into_iter().enumerate() {
            let mut t_out = lens[b];
            for l in (0..self.branches[b].len()).rev() {
                let t_in = t_out + self.branches[b][l].width - 1;
                let dx =
                    self.branches[b][l].backward(&c.branch_x[b][l], &c.branch_y[b][l], &dy, t_in);
                if l > 0 {
                    dy = self.scatter(&dx, t_in);
                }
                t_out = t_in;
            }
        }
        Ok(())
    }
}

impl Network for GcnnNet {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        for b in self.branches.iter_mut() {
            for c in b.iter_mut() {
                v.extend(c.params_mut());
            }
        }
        for c in self.common.iter_mut() {
            v.extend(c.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let d = self.layout.input_len();
        if x.len() != batch * d {
            return Err(Error::Shape(format!(
                "graph batch has {} values, expected {batch} x {d}",
                x.len()
            )));
        }
        let mut out = Vec::with_capacity(batch * self.layout.n_links * self.layout.h);
        for s in 0..batch {
            out.extend(self.forward_sample(&x[s * d..(s + 1) * d])?.out);
        }
        Ok(out)
    }

    fn accumulate(&mut self, x: &[f64], y: &[f64], batch: usize) -> Result<f64> {
        let d = self.layout.input_len();
        let o = self.layout.n_links * self.layout.h;
        if x.len() != batch * d || y.len() != batch * o {
            return Err(Error::Shape("graph batch sizes".into()));
        }
        let mut loss = 0.0;
        for s in 0..batch {
            let cache = self.forward_sample(&x[s * d..(s + 1) * d])?;
            let (l, mut g) = mse_loss(&cache.out, &y[s * o..(s + 1) * o])?;
            for v in &mut g {
                *v /= batch as f64;
            }
            loss += l;
            self.backward_sample(&cache, &g)?;
        }
        Ok(loss / batch as f64)
    }
}

/// Links whose inputs can reach link `i`'s output: the neighbour relation
/// applied once per concatenation (including the input assembly).
pub fn receptive_field(nbr: &[usize], rows: usize, i: usize, concatenations: usize) -> Vec<bool> {
    let n = nbr.len() / rows;
    let mut reach = vec![false; n];
    reach[i] = true;
    for _ in 0..concatenations {
        let mut next = reach.clone();
        for j in 0..n {
            if reach[j] {
                for &src in &nbr[j * rows..(j + 1) * rows] {
                    next[src] = true;
                }
            }
        }
        reach = next;
    }
    reach
}
