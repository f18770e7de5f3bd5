//! Training examples built directly from standardised series.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::features::{context, origins_in, WindowParams, CONTEXT_LEN};
use crate::predictors::train::{Samples, Scaler};
use crate::roadnet::{LinkId, SeriesSet};

/// Standardised copies of some link series plus per-step calendar context.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub links: Vec<LinkId>,
    pub z: Vec<Vec<f64>>,
    pub ctx: Vec<[f64; CONTEXT_LEN]>,
}

impl Standardized {
    pub fn new(set: &SeriesSet, links: &[LinkId], scaler: &Scaler) -> Result<Self> {
        Self::per_link(set, links, &vec![*scaler; links.len()])
    }

    /// Standardises each link with its own scaler.
    pub fn per_link(set: &SeriesSet, links: &[LinkId], scalers: &[Scaler]) -> Result<Self> {
        if scalers.len() != links.len() {
            return Err(Error::Shape(format!(
                "{} scalers for {} links",
                scalers.len(),
                links.len()
            )));
        }
        let z = links
            .iter()
            .zip(scalers)
            .map(|(&l, s)| Ok(set.values(l)?.iter().map(|v| s.apply(*v)).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let ctx = (0..set.axis().count())
            .map(|t| context(set.axis(), t))
            .collect::<Result<_>>()?;
        Ok(Self {
            links: links.to_vec(),
            z,
            ctx,
        })
    }

    /// Appends `[x_w, x_d, x_n]` of link index `li` at origin `t`.
    pub fn push_windows(&self, li: usize, t: usize, p: &WindowParams, out: &mut Vec<f64>) {
        let spans = p
            .spans(t)
            .expect("origin validated when the sample list was built");
        for (start, len) in spans {
            out.extend_from_slice(&self.z[li][start..start + len]);
        }
    }
}

/// Training scaler over the values of `links` inside `range`.
pub fn fit_scaler(set: &SeriesSet, links: &[LinkId], range: &Range<usize>) -> Result<Scaler> {
    let mut vals = Vec::new();
    for &l in links {
        vals.extend_from_slice(&set.values(l)?[range.clone()]);
    }
    Scaler::fit(&vals)
}

/// Origins in `range` with `min_history` earlier steps and `h` later steps inside the range, thinned by `stride`.
pub fn strided_origins(
    range: &Range<usize>,
    min_history: usize,
    h: usize,
    stride: usize,
) -> Result<Vec<usize>> {
    let start = range.start.max(min_history);
    let end = range.end.saturating_sub(h);
    if start >= end {
        return Err(Error::InsufficientHistory(format!(
            "no origin in {range:?} has {min_history} steps of history and {h} future steps"
        )));
    }
    Ok((start..end).step_by(stride.max(1)).collect())
}

/// Window inputs `[x_w, x_d, x_n, context]` for (link, origin) pairs.
pub struct WindowSamples<'a> {
    pub data: &'a Standardized,
    pub params: WindowParams,
    pub h: usize,
    /// (link index into `data`, origin)
    pub entries: Vec<(usize, usize)>,
}

impl<'a> WindowSamples<'a> {
    pub fn new(
        data: &'a Standardized,
        params: WindowParams,
        h: usize,
        link_idx: &[usize],
        range: &Range<usize>,
        stride: usize,
    ) -> Result<Self> {
        let origins = origins_in(range, &params, h)?;
        let mut entries = Vec::new();
        for t in origins.step_by(stride.max(1)) {
            for &li in link_idx {
                entries.push((li, t));
            }
        }
        Ok(Self {
            data,
            params,
            h,
            entries,
        })
    }
}

impl Samples for WindowSamples<'_> {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn in_dim(&self) -> usize {
        self.params.input_len()
    }

    fn out_dim(&self) -> usize {
        self.h
    }

    fn fill(&self, i: usize, x: &mut Vec<f64>, y: &mut Vec<f64>) {
        let (li, t) = self.entries[i];
        self.data.push_windows(li, t, &self.params, x);
        x.extend_from_slice(&self.data.ctx[t]);
        y.extend_from_slice(&self.data.z[li][t + 1..t + 1 + self.h]);
    }
}

/// Sequences of `(speed, context)` for the recurrent model.
pub struct SequenceSamples<'a> {
    pub data: &'a Standardized,
    pub seq_len: usize,
    pub h: usize,
    pub entries: Vec<(usize, usize)>,
}

impl<'a> SequenceSamples<'a> {
    pub fn new(
        data: &'a Standardized,
        seq_len: usize,
        h: usize,
        li: usize,
        range: &Range<usize>,
        stride: usize,
    ) -> Result<Self> {
        let origins = strided_origins(range, seq_len - 1, h, stride)?;
        Ok(Self {
            data,
            seq_len,
            h,
            entries: origins.into_iter().map(|t| (li, t)).collect(),
        })
    }
}

pub const SEQ_FEATURES: usize = 1 + CONTEXT_LEN;

/// Appends a row-major `len x 5` sequence of speeds with their context.
pub fn push_sequence(values: &[f64], ctx: &[[f64; CONTEXT_LEN]], out: &mut Vec<f64>) {
    for (v, c) in values.iter().zip(ctx) {
        out.push(*v);
        out.extend_from_slice(c);
    }
}

impl Samples for SequenceSamples<'_> {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn in_dim(&self) -> usize {
        self.seq_len * SEQ_FEATURES
    }

    fn out_dim(&self) -> usize {
        self.h
    }

    fn fill(&self, i: usize, x: &mut Vec<f64>, y: &mut Vec<f64>) {
        let (li, t) = self.entries[i];
        let z = &self.data.z[li];
        let from = t + 1 - self.seq_len;
        push_sequence(&z[from..=t], &self.data.ctx[from..=t], x);
        y.extend_from_slice(&z[t + 1..t + 1 + self.h]);
    }
}

/// Whole-network examples for the graph model: gathered branch blocks, then
/// per-link context; targets are `N x h`.
pub struct GraphSamples<'a> {
    pub data: &'a Standardized,
    pub params: WindowParams,
    pub h: usize,
    /// Row link indices per link, `N x rows`.
    pub nbr: &'a [usize],
    pub rows: usize,
    pub origins: Vec<usize>,
}

impl Samples for GraphSamples<'_> {
    fn len(&self) -> usize {
        self.origins.len()
    }

    fn in_dim(&self) -> usize {
        self.data.links.len() * (self.rows * self.params.speed_len() + CONTEXT_LEN)
    }

    fn out_dim(&self) -> usize {
        self.data.links.len() * self.h
    }

    fn fill(&self, i: usize, x: &mut Vec<f64>, y: &mut Vec<f64>) {
        let t = self.origins[i];
        let n = self.data.links.len();
        let [w, d, r] = self
            .params
            .spans(t)
            .expect("origin validated when the sample list was built");
        for (start, len) in [r, d, w] {
            for li in 0..n {
                for &src in &self.nbr[li * self.rows..(li + 1) * self.rows] {
                    x.extend_from_slice(&self.data.z[src][start..start + len]);
                }
            }
        }
        for _ in 0..n {
            x.extend_from_slice(&self.data.ctx[t]);
        }
        for li in 0..n {
            y.extend_from_slice(&self.data.z[li][t + 1..t + 1 + self.h]);
        }
    }
}
