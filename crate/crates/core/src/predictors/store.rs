//! `TFMD1` model files: magic, method tag, horizon, then the method body.
//! Every layer is stored with its dimensions and re-validated on load.

use std::collections::BTreeMap;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::features::WindowParams;
use crate::nn::{Activation, Conv1DLayer, DenseLayer, LstmLayer};
use crate::predictors::graphconv::{GcnnLayout, GcnnNet};
use crate::predictors::{
    ArModel, BaselineModel, FittedModel, GbModel, GcnnModel, LstmNet, MethodKind, Mlp, ModelBody,
    RegressionTree, ScaledLstm, ScaledMlp, Scaler, TreeNode,
};
use crate::roadnet::LinkId;

pub const MODEL_MAGIC: &[u8] = b"TFMD1";

/// Dimensions above this are treated as corrupt.
const MAX_DIM: usize = 1 << 24;

fn dim(r: &mut Reader) -> Result<usize> {
    let v = r.usize()?;
    if v > MAX_DIM {
        return Err(Error::Format(format!("dimension {v} is implausibly large")));
    }
    Ok(v)
}

fn corrupt(e: Error) -> Error {
    match e {
        Error::Format(_) => e,
        other => Error::Format(other.to_string()),
    }
}

fn put_scaler(w: &mut Writer, s: &Scaler) {
    w.f64(s.mean);
    w.f64(s.std);
}

fn get_scaler(r: &mut Reader) -> Result<Scaler> {
    let s = Scaler {
        mean: r.f64()?,
        std: r.f64()?,
    };
    if !s.mean.is_finite() || !(s.std > 0.0 && s.std.is_finite()) {
        return Err(Error::Format("invalid scaler".into()));
    }
    Ok(s)
}

fn put_windows(w: &mut Writer, p: &WindowParams) {
    for v in [p.w_n, p.w_d, p.w_w] {
        w.usize(v);
    }
}

fn get_windows(r: &mut Reader) -> Result<WindowParams> {
    WindowParams::new(dim(r)?, dim(r)?, dim(r)?).map_err(corrupt)
}

fn put_dense(w: &mut Writer, l: &DenseLayer) {
    w.usize(l.d_in);
    w.usize(l.d_out);
    w.u8(l.activation.tag());
    w.f64s(&l.w.value);
    w.f64s(&l.b.value);
}

fn get_dense(r: &mut Reader) -> Result<DenseLayer> {
    let (d_in, d_out) = (dim(r)?, dim(r)?);
    let act = Activation::from_tag(r.u8()?)?;
    let n = d_in
        .checked_mul(d_out)
        .ok_or_else(|| Error::Format("dense size overflows".into()))?;
    let wv = r.f64s(n)?;
    let bv = r.f64s(d_out)?;
    DenseLayer::from_parts(d_in, d_out, wv, bv, act).map_err(corrupt)
}

fn put_mlp(w: &mut Writer, m: &ScaledMlp) {
    put_scaler(w, &m.scaler);
    put_windows(w, &m.windows);
    w.usize(m.net.layers.len());
    for l in &m.net.layers {
        put_dense(w, l);
    }
}

fn get_mlp(r: &mut Reader, h: usize) -> Result<ScaledMlp> {
    let scaler = get_scaler(r)?;
    let windows = get_windows(r)?;
    let n = r.count(17)?;
    let layers = (0..n).map(|_| get_dense(r)).collect::<Result<Vec<_>>>()?;
    let net = Mlp::from_layers(layers).map_err(corrupt)?;
    if net.d_in() != windows.input_len() || net.d_out() != h {
        return Err(Error::Format(
            "network dimensions do not match its windows".into(),
        ));
    }
    Ok(ScaledMlp {
        scaler,
        windows,
        net,
    })
}

fn put_lstm(w: &mut Writer, m: &ScaledLstm) {
    put_scaler(w, &m.scaler);
    w.usize(m.net.seq_len);
    w.usize(m.net.input);
    w.usize(m.net.layers.len());
    for l in &m.net.layers {
        w.usize(l.input);
        w.usize(l.hidden);
        w.f64s(&l.w.value);
        w.f64s(&l.u.value);
        w.f64s(&l.b.value);
    }
    put_dense(w, &m.net.head);
}

fn get_lstm(r: &mut Reader, h: usize) -> Result<ScaledLstm> {
    let scaler = get_scaler(r)?;
    let (seq_len, input) = (dim(r)?, dim(r)?);
    let n = r.count(16)?;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, hd) = (dim(r)?, dim(r)?);
        let g = 4 * hd;
        let wv = r.f64s(i * g)?;
        let uv = r.f64s(hd * g)?;
        let bv = r.f64s(g)?;
        layers.push(LstmLayer::from_parts(i, hd, wv, uv, bv).map_err(corrupt)?);
    }
    let head = get_dense(r)?;
    let net = LstmNet::from_parts(seq_len, input, layers, head).map_err(corrupt)?;
    if net.head.d_out != h || input != crate::predictors::SEQ_FEATURES {
        return Err(Error::Format(
            "recurrent network dimensions do not match".into(),
        ));
    }
    Ok(ScaledLstm { scaler, net })
}

fn put_conv(w: &mut Writer, c: &Conv1DLayer) {
    w.u8(c.per_channel as u8);
    w.f64s(&c.kernel.value);
    w.f64s(&c.bias.value);
}

fn get_conv(r: &mut Reader, channels: usize, height: usize, width: usize) -> Result<Conv1DLayer> {
    let per_channel = match r.u8()? {
        0 => false,
        1 => true,
        t => return Err(Error::Format(format!("bad kernel sharing flag {t}"))),
    };
    let nk = if per_channel { channels } else { 1 };
    let k = r.f64s(nk * height * width)?;
    let b = r.f64s(nk)?;
    Conv1DLayer::from_parts(channels, height, width, per_channel, k, b).map_err(corrupt)
}

fn put_gcnn(w: &mut Writer, g: &GcnnModel) {
    let lay = &g.net.layout;
    put_windows(w, &g.windows);
    w.usize(lay.n_links);
    w.usize(lay.rows);
    for (l, s) in g.links.iter().zip(&g.scalers) {
        w.u64(l.0);
        put_scaler(w, s);
    }
    for &i in &g.net.nbr {
        w.u32(i as u32);
    }
    for s in &lay.branches {
        w.usize_vec(s);
    }
    w.usize_vec(&lay.common);
    for c in g.net.branches.iter().flatten().chain(&g.net.common) {
        put_conv(w, c);
    }
    put_dense(w, &g.net.head);
}

fn get_gcnn(r: &mut Reader, h: usize) -> Result<GcnnModel> {
    let windows = get_windows(r)?;
    let n = dim(r)?;
    let rows = dim(r)?;
    r.check_room(n, 24)?;
    let mut links = Vec::with_capacity(n);
    let mut scalers = Vec::with_capacity(n);
    for _ in 0..n {
        links.push(LinkId(r.u64()?));
        scalers.push(get_scaler(r)?);
    }
    let cells = n
        .checked_mul(rows)
        .ok_or_else(|| Error::Format("neighbour table size overflows".into()))?;
    r.check_room(cells, 4)?;
    let nbr: Vec<usize> = (0..cells)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let mut schedules: Vec<Vec<usize>> = Vec::with_capacity(4);
    for _ in 0..4 {
        let s = r.usize_vec()?;
        if s.len() > 64 || s.iter().any(|&v| v > MAX_DIM) {
            return Err(Error::Format("implausible kernel schedule".into()));
        }
        schedules.push(s);
    }
    let common = schedules.pop().expect("four schedules");
    let layout = GcnnLayout {
        n_links: n,
        rows,
        t_in: [windows.w_n, 2 * windows.w_d, 2 * windows.w_w],
        branches: [
            schedules[0].clone(),
            schedules[1].clone(),
            schedules[2].clone(),
        ],
        common,
        h,
    };
    layout.trace().map_err(corrupt)?;
    let mut branches: [Vec<Conv1DLayer>; 3] = Default::default();
    for b in 0..3 {
        for &width in &layout.branches[b] {
            branches[b].push(get_conv(r, n, rows, width)?);
        }
    }
    let common = layout
        .common
        .iter()
        .map(|&w| get_conv(r, n, rows, w))
        .collect::<Result<Vec<_>>>()?;
    let head = get_dense(r)?;
    let net = GcnnNet::from_parts(layout, nbr, branches, common, head).map_err(corrupt)?;
    Ok(GcnnModel {
        links,
        windows,
        scalers,
        net,
    })
}

fn put_map<T>(w: &mut Writer, m: &BTreeMap<LinkId, T>, mut f: impl FnMut(&mut Writer, &T)) {
    w.usize(m.len());
    for (l, v) in m {
        w.u64(l.0);
        f(w, v);
    }
}

fn get_map<T>(
    r: &mut Reader,
    min_item: usize,
    mut f: impl FnMut(&mut Reader) -> Result<T>,
) -> Result<BTreeMap<LinkId, T>> {
    let n = r.count(8 + min_item)?;
    let mut m = BTreeMap::new();
    for _ in 0..n {
        let l = LinkId(r.u64()?);
        let v = f(r)?;
        if m.insert(l, v).is_some() {
            return Err(Error::Format(format!("link {l} stored twice")));
        }
    }
    Ok(m)
}

fn put_tree(w: &mut Writer, t: &RegressionTree) {
    w.usize(t.nodes.len());
    for n in &t.nodes {
        match *n {
            TreeNode::Leaf(v) => {
                w.u8(0);
                w.f64(v);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(1);
                w.u32(feature as u32);
                w.f64(threshold);
                w.u32(left as u32);
                w.u32(right as u32);
            }
        }
    }
}

fn get_tree(r: &mut Reader, n_features: usize) -> Result<RegressionTree> {
    let n = r.count(9)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => TreeNode::Leaf(r.f64()?),
            1 => TreeNode::Split {
                feature: r.u32()? as usize,
                threshold: r.f64()?,
                left: r.u32()? as usize,
                right: r.u32()? as usize,
            },
            t => return Err(Error::Format(format!("unknown tree node tag {t}"))),
        });
    }
    RegressionTree::new(nodes, n_features)
}

pub(crate) fn encode(m: &FittedModel) -> Vec<u8> {
    let mut w = Writer::with_magic(MODEL_MAGIC);
    w.u8(m.method.tag());
    w.usize(m.h);
    match &m.body {
        ModelBody::Baseline(map) => put_map(&mut w, map, |w, b| w.f64s(&b.profile)),
        ModelBody::Ar(map) => put_map(&mut w, map, |w, a| {
            w.f64(a.intercept);
            w.f64_vec(&a.coef);
        }),
        ModelBody::Gb { lags, models } => {
            w.usize(*lags);
            put_map(&mut w, models, |w, steps| {
                for g in steps {
                    w.f64(g.init);
                    w.f64(g.learning_rate);
                    w.usize(g.trees.len());
                    for t in &g.trees {
                        put_tree(w, t);
                    }
                }
            });
        }
        ModelBody::Mlp(map) => put_map(&mut w, map, put_mlp),
        ModelBody::Lstm(map) => put_map(&mut w, map, put_lstm),
        ModelBody::Bmlp(net) => put_mlp(&mut w, net),
        ModelBody::Cmlp { assignment, models } => {
            put_map(&mut w, assignment, |w, c| w.usize(*c));
            w.usize(models.len());
            for net in models {
                put_mlp(&mut w, net);
            }
        }
        ModelBody::Gcnn(g) => put_gcnn(&mut w, g),
    }
    w.into_inner()
}

pub(crate) fn decode(bytes: &[u8]) -> Result<FittedModel> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MODEL_MAGIC)?;
    let method = MethodKind::from_tag(r.u8()?)?;
    let h = dim(&mut r)?;
    if h == 0 {
        return Err(Error::Format("horizon must be positive".into()));
    }
    let rd = &mut r;
    let body = match method {
        MethodKind::Baseline => ModelBody::Baseline(get_map(rd, 8 * 672, |r| {
            BaselineModel::new(r.f64s(crate::roadnet::STEPS_PER_WEEK)?).map_err(corrupt)
        })?),
        MethodKind::Ar => ModelBody::Ar(get_map(rd, 16, |r| {
            let intercept = r.f64()?;
            let coef = r.f64_vec()?;
            ArModel::new(intercept, coef).map_err(corrupt)
        })?),
        MethodKind::Gb => {
            let lags = dim(rd)?;
            if lags == 0 {
                return Err(Error::Format("GB needs at least one lag".into()));
            }
            let models = get_map(rd, 24 * h, |r| {
                (0..h)
                    .map(|_| {
                        let init = r.f64()?;
                        let learning_rate = r.f64()?;
                        let n = r.count(9)?;
                        let trees = (0..n).map(|_| get_tree(r, lags)).collect::<Result<_>>()?;
                        if !init.is_finite() || !learning_rate.is_finite() {
                            return Err(Error::Format("non-finite boosting constants".into()));
                        }
                        Ok(GbModel {
                            init,
                            learning_rate,
                            trees,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            ModelBody::Gb { lags, models }
        }
        MethodKind::Mlp => ModelBody::Mlp(get_map(rd, 48, |r| get_mlp(r, h))?),
        MethodKind::Lstm => ModelBody::Lstm(get_map(rd, 48, |r| get_lstm(r, h))?),
        MethodKind::Bmlp => ModelBody::Bmlp(get_mlp(rd, h)?),
        MethodKind::Cmlp => {
            let assignment = get_map(rd, 8, |r| r.usize())?;
            let n = rd.count(48)?;
            let models = (0..n).map(|_| get_mlp(rd, h)).collect::<Result<Vec<_>>>()?;
            if assignment.values().any(|&c| c >= n) {
                return Err(Error::Format("cluster index without a model".into()));
            }
            ModelBody::Cmlp { assignment, models }
        }
        MethodKind::Gcnn => ModelBody::Gcnn(get_gcnn(rd, h)?),
    };
    r.finish()?;
    Ok(FittedModel {
        method,
        h,
        body,
        fit_seconds: Vec::new(),
    })
}
