//! Fitting and scoring of the neural predictors on top of the shared
//! training loop.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{
    build_windows, context, neighbor_sets_within, origins_in, SeriesSource, WindowParams,
};
use crate::predictors::graphconv::{GcnnLayout, GcnnNet};
use crate::predictors::mlp::Mlp;
use crate::predictors::params::{GcnnParams, LstmParams, MlpParams};
use crate::predictors::recurrent::LstmNet;
use crate::predictors::samples::{
    fit_scaler, push_sequence, GraphSamples, SequenceSamples, Standardized, WindowSamples,
    SEQ_FEATURES,
};
use crate::predictors::train::{fit_network, Network, Scaler, TrainReport};
use crate::roadnet::{LinkId, RoadGraph, SeriesSet};

/// Checks that a network produced finite values and maps them back to km/h.
fn unscale(scaler: &Scaler, z: Vec<f64>) -> Result<Vec<f64>> {
    let out: Vec<f64> = z.into_iter().map(|v| scaler.invert(v)).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(
            "model produced a non-finite forecast".into(),
        ));
    }
    Ok(out)
}

/// A window MLP together with the standardisation it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMlp {
    pub scaler: Scaler,
    pub windows: WindowParams,
    pub net: Mlp,
}

impl ScaledMlp {
    /// Forecasts for `link` at each (source, origin) pair.
    pub fn predict(
        &self,
        link: LinkId,
        at: &[(&(dyn SeriesSource + Sync), usize)],
    ) -> Result<Vec<Vec<f64>>> {
        let h = self.net.d_out();
        let mut x = Vec::with_capacity(at.len() * self.windows.input_len());
        for &(src, t) in at {
            let fv = build_windows(src, link, t, &self.windows)?;
            let start = x.len();
            fv.write_input(&mut x);
            let speeds = self.windows.speed_len();
            for v in &mut x[start..start + speeds] {
                *v = self.scaler.apply(*v);
            }
        }
        let z = self.net.forward(&x, at.len())?;
        let out = unscale(&self.scaler, z)?;
        Ok(out.chunks(h).map(|c| c.to_vec()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLstm {
    pub scaler: Scaler,
    pub net: LstmNet,
}

impl ScaledLstm {
    pub fn predict(
        &self,
        link: LinkId,
        at: &[(&(dyn SeriesSource + Sync), usize)],
    ) -> Result<Vec<Vec<f64>>> {
        let s = self.net.seq_len;
        let h = self.net.head.d_out;
        let mut x = Vec::with_capacity(at.len() * s * SEQ_FEATURES);
        for &(src, t) in at {
            if t + 1 < s {
                return Err(Error::InsufficientHistory(format!(
                    "origin {t} has fewer than {s} past steps"
                )));
            }
            let from = t + 1 - s;
            let z: Vec<f64> = src
                .window(link, from, s)?
                .iter()
                .map(|v| self.scaler.apply(*v))
                .collect();
            let ctx = (from..=t)
                .map(|i| context(src.axis(), i))
                .collect::<Result<Vec<_>>>()?;
            push_sequence(&z, &ctx, &mut x);
        }
        let z = self.net.forward(&x, at.len())?;
        let out = unscale(&self.scaler, z)?;
        Ok(out.chunks(h).map(|c| c.to_vec()).collect())
    }
}

/// Whole-network graph model.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnnModel {
    pub links: Vec<LinkId>,
    pub windows: WindowParams,
    /// One scaler per entry of `links`.
    pub scalers: Vec<Scaler>,
    pub net: GcnnNet,
}

/// Assembles one graph input at origin `t`, in the layout of [`GraphSamples`].
pub fn graph_input(
    src: &dyn SeriesSource,
    links: &[LinkId],
    nbr: &[usize],
    rows: usize,
    windows: &WindowParams,
    scalers: &[Scaler],
    t: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    let [w, d, r] = windows.spans(t)?;
    let n = links.len();
    let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (start, len) in [r, d, w] {
        blocks.clear();
        for (&l, s) in links.iter().zip(scalers) {
            blocks.push(
                src.window(l, start, len)?
                    .iter()
                    .map(|v| s.apply(*v))
                    .collect(),
            );
        }
        for li in 0..n {
            for &s in &nbr[li * rows..(li + 1) * rows] {
                out.extend_from_slice(&blocks[s]);
            }
        }
    }
    let ctx = context(src.axis(), t)?;
    for _ in 0..n {
        out.extend_from_slice(&ctx);
    }
    Ok(())
}

impl GcnnModel {
    /// Forecasts for every model link at each (source, origin) pair, `[origin][link][step]`.
    pub fn predict_all(
        &self,
        at: &[(&(dyn SeriesSource + Sync), usize)],
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let lay = &self.net.layout;
        let mut out = Vec::with_capacity(at.len());
        for chunk in at.chunks(32) {
            let mut x = Vec::with_capacity(chunk.len() * lay.input_len());
            for &(src, t) in chunk {
                graph_input(
                    src,
                    &self.links,
                    &self.net.nbr,
                    lay.rows,
                    &self.windows,
                    &self.scalers,
                    t,
                    &mut x,
                )?;
            }
            let z = self.net.forward(&x, chunk.len())?;
            for sample in z.chunks(lay.n_links * lay.h) {
                let per_link = sample
                    .chunks(lay.h)
                    .zip(&self.scalers)
                    .map(|(c, s)| unscale(s, c.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                out.push(per_link);
            }
        }
        Ok(out)
    }
}

/// Data shared by every fit: the series, the training range and an optional validation range.
pub struct FitData<'a> {
    pub set: &'a SeriesSet,
    pub train: Range<usize>,
    pub val: Option<Range<usize>>,
    pub h: usize,
}

/// Trains a window MLP on the pooled samples of `links`.
pub fn fit_window_mlp(
    data: &FitData,
    links: &[LinkId],
    p: &MlpParams,
    seed: u64,
) -> Result<(ScaledMlp, TrainReport)> {
    p.validate()?;
    let windows = p.windows()?;
    let scaler = fit_scaler(data.set, links, &data.train)?;
    let z = Standardized::new(data.set, links, &scaler)?;
    let idx: Vec<usize> = (0..links.len()).collect();
    let train = WindowSamples::new(&z, windows, data.h, &idx, &data.train, p.train_stride)?;
    let val = data
        .val
        .as_ref()
        .map(|r| WindowSamples::new(&z, windows, data.h, &idx, r, 1))
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(&mut rng, windows.input_len(), p.hidden, p.layers, data.h)?;
    let report = fit_network(
        &mut net,
        &train,
        val.as_ref(),
        &p.training().to_config(seed),
        data.h,
        scaler.std,
    )?;
    Ok((
        ScaledMlp {
            scaler,
            windows,
            net,
        },
        report,
    ))
}

pub fn fit_lstm(
    data: &FitData,
    link: LinkId,
    p: &LstmParams,
    seed: u64,
) -> Result<(ScaledLstm, TrainReport)> {
    p.validate()?;
    let scaler = fit_scaler(data.set, &[link], &data.train)?;
    let z = Standardized::new(data.set, &[link], &scaler)?;
    let train = SequenceSamples::new(&z, p.seq_len, data.h, 0, &data.train, p.train_stride)?;
    let val = data
        .val
        .as_ref()
        .map(|r| SequenceSamples::new(&z, p.seq_len, data.h, 0, r, 1))
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = LstmNet::new(
        &mut rng,
        p.seq_len,
        SEQ_FEATURES,
        p.hidden,
        p.layers,
        data.h,
    )?;
    let report = fit_network(
        &mut net,
        &train,
        val.as_ref(),
        &p.training().to_config(seed),
        data.h,
        scaler.std,
    )?;
    Ok((ScaledLstm { scaler, net }, report))
}

/// Neighbour table for `links` (row 0 = the link itself), as indices into `links`.
pub fn neighbour_table(graph: &RoadGraph, links: &[LinkId], k: usize) -> Result<Vec<usize>> {
    let allowed: BTreeSet<LinkId> = links.iter().copied().collect();
    let missing: Vec<LinkId> = links
        .iter()
        .copied()
        .filter(|l| !graph.contains(*l))
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnknownLinks(missing));
    }
    let sets = neighbor_sets_within(graph, k, &allowed);
    let pos: BTreeMap<LinkId, usize> = links.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let mut table = Vec::with_capacity(links.len() * (2 * k + 1));
    for l in links {
        for r in sets[l].rows() {
            table.push(pos[&r]);
        }
    }
    Ok(table)
}

pub fn gcnn_layout(p: &GcnnParams, n_links: usize, h: usize) -> Result<GcnnLayout> {
    let w = p.windows()?;
    let layout = GcnnLayout {
        n_links,
        rows: 2 * p.k + 1,
        t_in: [w.w_n, 2 * w.w_d, 2 * w.w_w],
        branches: [
            p.schedule_n.clone(),
            p.schedule_d.clone(),
            p.schedule_w.clone(),
        ],
        common: p.schedule_common.clone(),
        h,
    };
    layout.trace()?;
    Ok(layout)
}

pub fn fit_gcnn(
    data: &FitData,
    graph: &RoadGraph,
    p: &GcnnParams,
    seed: u64,
) -> Result<(GcnnModel, TrainReport)> {
    p.validate()?;
    let links = data.set.link_ids();
    let windows = p.windows()?;
    let layout = gcnn_layout(p, links.len(), data.h)?;
    log::info!(
        "graph model per-link feature length after convolutions: {}",
        layout.h_prime()?
    );
    let nbr = neighbour_table(graph, &links, p.k)?;
    let scalers = links
        .iter()
        .map(|l| fit_scaler(data.set, &[*l], &data.train))
        .collect::<Result<Vec<_>>>()?;
    let z = Standardized::per_link(data.set, &links, &scalers)?;
    // validation RMSE is reported in units of the average link spread
    let unit = scalers.iter().map(|s| s.std).sum::<f64>() / scalers.len() as f64;
    let samples = |r: &Range<usize>, stride: usize| -> Result<GraphSamples> {
        Ok(GraphSamples {
            data: &z,
            params: windows,
            h: data.h,
            nbr: &nbr,
            rows: layout.rows,
            origins: origins_in(r, &windows, data.h)?
                .step_by(stride.max(1))
                .collect(),
        })
    };
    let train = samples(&data.train, p.train_stride)?;
    let val = data.val.as_ref().map(|r| samples(r, 1)).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = GcnnNet::new(&mut rng, layout, nbr.clone(), p.per_link_first)?;
    let report = fit_network(
        &mut net,
        &train,
        val.as_ref(),
        &p.training().to_config(seed),
        data.h,
        unit,
    )?;
    Ok((
        GcnnModel {
            links,
            windows,
            scalers,
            net,
        },
        report,
    ))
}
