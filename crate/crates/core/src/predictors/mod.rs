//! The eight forecasting methods behind one fit/predict contract.

mod ar;
mod baseline;
mod gb;
mod graphconv;
mod mlp;
mod neural;
mod params;
mod recurrent;
mod samples;
mod store;
mod train;

pub use ar::{fit_ar, ArModel};
pub use baseline::{fit_baseline, week_slot, BaselineModel};
pub use gb::{fit_gb, fit_tree, FeatureMatrix, GbModel, RegressionTree, SplitChoice, TreeNode};
pub use graphconv::{receptive_field, GcnnLayout, GcnnNet, ShapeStage, BRANCH_NAMES};
pub use mlp::Mlp;
pub use neural::{
    fit_gcnn, fit_lstm, fit_window_mlp, gcnn_layout, graph_input, neighbour_table, FitData,
    GcnnModel, ScaledLstm, ScaledMlp,
};
pub use params::{ArParams, GbParams, GcnnParams, LstmParams, MethodParams, MlpParams, Training};
pub use recurrent::LstmNet;
pub use samples::{
    fit_scaler, push_sequence, strided_origins, GraphSamples, SequenceSamples, Standardized,
    WindowSamples, SEQ_FEATURES,
};
pub use store::MODEL_MAGIC;
pub use train::{fit_network, mean_step_rmse, Network, Samples, Scaler, TrainReport};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{History, SeriesSource};
use crate::roadnet::{LinkId, RoadGraph, SeriesSet};
use crate::wavelet::ClusterAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Baseline,
    Ar,
    Gb,
    Mlp,
    Lstm,
    Bmlp,
    Cmlp,
    Gcnn,
}

/// How the number of trained models grows with the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelCountClass {
    /// One per link.
    PerLink,
    /// One per link and horizon step.
    PerLinkStep,
    /// One per cluster.
    PerCluster,
    /// One for the whole network.
    Single,
}

impl fmt::Display for ModelCountClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelCountClass::PerLink => "O(N)",
            ModelCountClass::PerLinkStep => "O(Nh)",
            ModelCountClass::PerCluster => "O(C)",
            ModelCountClass::Single => "O(1)",
        })
    }
}

impl MethodKind {
    /// Report order.
    pub const ALL: [MethodKind; 8] = [
        MethodKind::Baseline,
        MethodKind::Ar,
        MethodKind::Gb,
        MethodKind::Mlp,
        MethodKind::Lstm,
        MethodKind::Bmlp,
        MethodKind::Cmlp,
        MethodKind::Gcnn,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Baseline => "baseline",
            MethodKind::Ar => "ar",
            MethodKind::Gb => "gb",
            MethodKind::Mlp => "mlp",
            MethodKind::Lstm => "lstm",
            MethodKind::Bmlp => "bmlp",
            MethodKind::Cmlp => "cmlp",
            MethodKind::Gcnn => "gcnn",
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Baseline => "Baseline",
            MethodKind::Ar => "AR",
            MethodKind::Gb => "GB",
            MethodKind::Mlp => "MLP",
            MethodKind::Lstm => "LSTM",
            MethodKind::Bmlp => "B-MLP",
            MethodKind::Cmlp => "C-MLP",
            MethodKind::Gcnn => "GCNN",
        }
    }

    pub fn order(self) -> usize {
        Self::ALL.iter().position(|m| *m == self).expect("listed")
    }

    pub fn count_class(self) -> ModelCountClass {
        match self {
            MethodKind::Baseline | MethodKind::Ar | MethodKind::Mlp | MethodKind::Lstm => {
                ModelCountClass::PerLink
            }
            MethodKind::Gb => ModelCountClass::PerLinkStep,
            MethodKind::Cmlp => ModelCountClass::PerCluster,
            MethodKind::Bmlp | MethodKind::Gcnn => ModelCountClass::Single,
        }
    }

    fn tag(self) -> u8 {
        self.order() as u8
    }

    fn from_tag(t: u8) -> Result<Self> {
        Self::ALL
            .get(t as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown method tag {t}")))
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<MethodKind>> {
    let mut out: Vec<MethodKind> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Baseline(BTreeMap<LinkId, BaselineModel>),
    Ar(BTreeMap<LinkId, ArModel>),
    /// One model per horizon step for each link; inputs are the last `lags` values.
    Gb {
        lags: usize,
        models: BTreeMap<LinkId, Vec<GbModel>>,
    },
    Mlp(BTreeMap<LinkId, ScaledMlp>),
    Lstm(BTreeMap<LinkId, ScaledLstm>),
    /// One network shared by every link.
    Bmlp(ScaledMlp),
    Cmlp {
        assignment: BTreeMap<LinkId, usize>,
        models: Vec<ScaledMlp>,
    },
    Gcnn(GcnnModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub method: MethodKind,
    pub h: usize,
    pub body: ModelBody,
    /// Wall-clock training seconds of each model; not serialised.
    pub fit_seconds: Vec<f64>,
}

pub struct FitInput<'a> {
    pub set: &'a SeriesSet,
    pub graph: Option<&'a RoadGraph>,
    pub clusters: Option<&'a ClusterAssignment>,
    pub train: Range<usize>,
    /// Validation origins for early stopping.
    pub val: Option<Range<usize>>,
    /// Links to fit per-link models for; empty means every link of the set.
    pub links: Vec<LinkId>,
    pub seed: u64,
}

/// Derived seed of a link-scoped fit.
pub fn link_seed(seed: u64, link: LinkId) -> u64 {
    seed ^ link.0
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

fn per_link<T: Send>(
    links: &[LinkId],
    f: impl Fn(LinkId) -> Result<T> + Sync,
) -> Result<(BTreeMap<LinkId, T>, Vec<f64>)> {
    let fitted: Vec<(LinkId, T, f64)> = links
        .par_iter()
        .map(|&l| timed(|| f(l)).map(|(m, s)| (l, m, s)))
        .collect::<Result<_>>()?;
    let secs = fitted.iter().map(|x| x.2).collect();
    Ok((fitted.into_iter().map(|(l, m, _)| (l, m)).collect(), secs))
}

/// GB design for one link: rows of the last `lags` values at each origin, and the
/// target values `h` steps ahead (`targets[k][row]`).
fn gb_design(
    values: &[f64],
    origins: &[usize],
    lags: usize,
    h: usize,
) -> Result<(FeatureMatrix, Vec<Vec<f64>>)> {
    let mut x = Vec::with_capacity(origins.len() * lags);
    let mut y = vec![Vec::with_capacity(origins.len()); h];
    for &t in origins {
        x.extend_from_slice(&values[t + 1 - lags..=t]);
        for (k, col) in y.iter_mut().enumerate() {
            col.push(values[t + 1 + k]);
        }
    }
    Ok((FeatureMatrix::new(x, origins.len(), lags)?, y))
}

pub fn fit(method: MethodKind, params: &MethodParams, input: &FitInput) -> Result<FittedModel> {
    params.validate()?;
    let set = input.set;
    let h = params.h;
    let links = if input.links.is_empty() {
        set.link_ids()
    } else {
        input.links.clone()
    };
    for &l in &links {
        set.get(l)?;
    }
    if input.train.end > set.axis().count() || input.train.is_empty() {
        return Err(Error::Validation(format!(
            "training range {:?} is outside the series",
            input.train
        )));
    }
    let data = FitData {
        set,
        train: input.train.clone(),
        val: input.val.clone(),
        h,
    };
    let seed = input.seed;
    let (body, fit_seconds) = match method {
        MethodKind::Baseline => {
            let (m, s) = per_link(&links, |l| {
                fit_baseline(set.values(l)?, set.axis(), &input.train)
            })?;
            (ModelBody::Baseline(m), s)
        }
        MethodKind::Ar => {
            let (m, s) = per_link(&links, |l| {
                fit_ar(
                    &set.values(l)?[input.train.clone()],
                    params.ar.p,
                    params.ar.ridge,
                )
            })?;
            (ModelBody::Ar(m), s)
        }
        MethodKind::Gb => {
            let g = &params.gb;
            let (m, s) = per_link(&links, |l| {
                let values = set.values(l)?;
                let origins = strided_origins(&input.train, g.lags - 1, h, g.train_stride)?;
                let (x, y) = gb_design(values, &origins, g.lags, h)?;
                y.iter()
                    .map(|col| {
                        fit_gb(
                            &x,
                            col,
                            g.n_trees,
                            g.max_depth,
                            g.learning_rate,
                            g.min_samples_leaf,
                        )
                        .map(|r| r.0)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            // one timing entry per (link, step) model
            let s = s
                .iter()
                .flat_map(|v| std::iter::repeat_n(v / h as f64, h))
                .collect();
            (
                ModelBody::Gb {
                    lags: g.lags,
                    models: m,
                },
                s,
            )
        }
        MethodKind::Mlp => {
            let (m, s) = per_link(&links, |l| {
                Ok(fit_window_mlp(&data, &[l], &params.mlp, link_seed(seed, l))?.0)
            })?;
            (ModelBody::Mlp(m), s)
        }
        MethodKind::Lstm => {
            let (m, s) = per_link(&links, |l| {
                Ok(fit_lstm(&data, l, &params.lstm, link_seed(seed, l))?.0)
            })?;
            (ModelBody::Lstm(m), s)
        }
        MethodKind::Bmlp => {
            let all = set.link_ids();
            let (m, s) = timed(|| Ok(fit_window_mlp(&data, &all, &params.bmlp, seed)?.0))?;
            (ModelBody::Bmlp(m), vec![s])
        }
        MethodKind::Cmlp => {
            let clusters = input.clusters.ok_or_else(|| {
                Error::Config("the cluster-wise MLP needs a cluster assignment".into())
            })?;
            let missing: Vec<LinkId> = links
                .iter()
                .copied()
                .filter(|l| clusters.cluster_of(*l).is_err())
                .collect();
            if !missing.is_empty() {
                return Err(Error::UnknownLinks(missing));
            }
            let fitted: Vec<(ScaledMlp, f64)> = (0..clusters.k)
                .into_par_iter()
                .map(|c| {
                    let members: Vec<LinkId> = clusters
                        .members(c)
                        .into_iter()
                        .filter(|l| set.get(*l).is_ok())
                        .collect();
                    if members.is_empty() {
                        return Err(Error::Validation(format!(
                            "cluster {c} has no links in the series set"
                        )));
                    }
                    timed(|| Ok(fit_window_mlp(&data, &members, &params.cmlp, seed ^ c as u64)?.0))
                })
                .collect::<Result<_>>()?;
            let secs = fitted.iter().map(|f| f.1).collect();
            let assignment = clusters
                .assignment
                .iter()
                .filter(|(l, _)| set.get(**l).is_ok())
                .map(|(l, c)| (*l, *c))
                .collect();
            (
                ModelBody::Cmlp {
                    assignment,
                    models: fitted.into_iter().map(|f| f.0).collect(),
                },
                secs,
            )
        }
        MethodKind::Gcnn => {
            let graph = input
                .graph
                .ok_or_else(|| Error::Config("the graph model needs a road graph".into()))?;
            let (m, s) = timed(|| Ok(fit_gcnn(&data, graph, &params.gcnn, seed)?.0))?;
            (ModelBody::Gcnn(m), vec![s])
        }
    };
    Ok(FittedModel {
        method,
        h,
        body,
        fit_seconds,
    })
}

/// A series view paired with the origin to forecast from.
pub type Origin<'a> = (&'a (dyn SeriesSource + Sync), usize);

fn unknown(links: impl IntoIterator<Item = LinkId>) -> Error {
    Error::UnknownLinks(links.into_iter().collect())
}

fn lookup<'m, T>(map: &'m BTreeMap<LinkId, T>, links: &[LinkId]) -> Result<Vec<&'m T>> {
    let missing: Vec<LinkId> = links
        .iter()
        .copied()
        .filter(|l| !map.contains_key(l))
        .collect();
    if !missing.is_empty() {
        return Err(unknown(missing));
    }
    Ok(links.iter().map(|l| &map[l]).collect())
}

impl FittedModel {
    pub fn model_count(&self) -> usize {
        match &self.body {
            ModelBody::Baseline(m) => m.len(),
            ModelBody::Ar(m) => m.len(),
            ModelBody::Gb { models, .. } => models.values().map(Vec::len).sum(),
            ModelBody::Mlp(m) => m.len(),
            ModelBody::Lstm(m) => m.len(),
            ModelBody::Bmlp(_) | ModelBody::Gcnn(_) => 1,
            ModelBody::Cmlp { models, .. } => models.len(),
        }
    }

    /// Links this model can forecast; `None` means any link of the input.
    pub fn links(&self) -> Option<Vec<LinkId>> {
        match &self.body {
            ModelBody::Baseline(m) => Some(m.keys().copied().collect()),
            ModelBody::Ar(m) => Some(m.keys().copied().collect()),
            ModelBody::Gb { models, .. } => Some(models.keys().copied().collect()),
            ModelBody::Mlp(m) => Some(m.keys().copied().collect()),
            ModelBody::Lstm(m) => Some(m.keys().copied().collect()),
            ModelBody::Bmlp(_) => None,
            ModelBody::Cmlp { assignment, .. } => Some(assignment.keys().copied().collect()),
            ModelBody::Gcnn(g) => Some(g.links.clone()),
        }
    }

    /// Forecasts for one origin, `[link][step]`.
    pub fn predict(
        &self,
        src: &(dyn SeriesSource + Sync),
        t: usize,
        links: &[LinkId],
    ) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .predict_many(&[(src, t)], links)?
            .pop()
            .expect("one origin"))
    }

    /// Forecasts at each origin of `set`, reading only data up to that origin.
    pub fn predict_origins(
        &self,
        set: &SeriesSet,
        origins: &[usize],
        links: &[LinkId],
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let hist = origins
            .iter()
            .map(|&t| History::new(set, t))
            .collect::<Result<Vec<_>>>()?;
        let at: Vec<Origin> = hist
            .iter()
            .map(|h| (h as &(dyn SeriesSource + Sync), h.origin()))
            .collect();
        self.predict_many(&at, links)
    }

    /// Forecasts `[origin][link][step]`.
    pub fn predict_many(&self, at: &[Origin], links: &[LinkId]) -> Result<Vec<Vec<Vec<f64>>>> {
        let h = self.h;
        let per_link: Vec<Vec<Vec<f64>>> = match &self.body {
            ModelBody::Baseline(m) => {
                let ms = lookup(m, links)?;
                ms.par_iter()
                    .map(|b| {
                        at.iter()
                            .map(|&(src, t)| b.predict(src.axis(), t, h))
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            ModelBody::Ar(m) => {
                let ms = lookup(m, links)?;
                links
                    .par_iter()
                    .zip(ms)
                    .map(|(&l, a)| {
                        at.iter()
                            .map(|&(src, t)| {
                                let p = a.order();
                                if t + 1 < p {
                                    return Err(Error::InsufficientHistory(format!(
                                        "origin {t} has fewer than {p} past steps"
                                    )));
                                }
                                a.predict(src.window(l, t + 1 - p, p)?, h)
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            ModelBody::Gb { lags, models } => {
                let ms = lookup(models, links)?;
                links
                    .par_iter()
                    .zip(ms)
                    .map(|(&l, steps)| {
                        at.iter()
                            .map(|&(src, t)| {
                                if t + 1 < *lags {
                                    return Err(Error::InsufficientHistory(format!(
                                        "origin {t} has fewer than {lags} past steps"
                                    )));
                                }
                                let x = src.window(l, t + 1 - lags, *lags)?;
                                Ok(steps.iter().map(|g| g.predict(x)).collect())
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            ModelBody::Mlp(m) => {
                let ms = lookup(m, links)?;
                links
                    .par_iter()
                    .zip(ms)
                    .map(|(&l, net)| net.predict(l, at))
                    .collect::<Result<_>>()?
            }
            ModelBody::Lstm(m) => {
                let ms = lookup(m, links)?;
                links
                    .par_iter()
                    .zip(ms)
                    .map(|(&l, net)| net.predict(l, at))
                    .collect::<Result<_>>()?
            }
            ModelBody::Bmlp(net) => links
                .par_iter()
                .map(|&l| net.predict(l, at))
                .collect::<Result<_>>()?,
            ModelBody::Cmlp { assignment, models } => {
                let cs = lookup(assignment, links)?;
                links
                    .par_iter()
                    .zip(cs)
                    .map(|(&l, &c)| models[c].predict(l, at))
                    .collect::<Result<_>>()?
            }
            ModelBody::Gcnn(g) => {
                let pos: BTreeMap<LinkId, usize> =
                    g.links.iter().enumerate().map(|(i, l)| (*l, i)).collect();
                let idx = lookup(&pos, links)?;
                let all = g.predict_all(at)?;
                return Ok(all
                    .into_iter()
                    .map(|o| idx.iter().map(|&&i| o[i].clone()).collect())
                    .collect());
            }
        };
        let mut out = vec![Vec::with_capacity(links.len()); at.len()];
        for series in per_link {
            for (o, v) in series.into_iter().enumerate() {
                out[o].push(v);
            }
        }
        if out.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!(
                "{} produced a non-finite forecast",
                self.method.label()
            )));
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        store::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        store::decode(bytes)
    }

    /// Writes the model file and returns its size in bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        let b = self.to_bytes();
        std::fs::write(path, &b)?;
        Ok(b.len() as u64)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
