use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::neighbors::NeighborSet;
use crate::features::windows::{
    build_windows, FeatureVector, SeriesSource, WindowParams, CONTEXT_LEN,
};
use crate::nn::Tensor;
use crate::roadnet::LinkId;

/// Graph-structured inputs for all links at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnnTensorBatch {
    pub links: Vec<LinkId>,
    /// `N x (2k+1) x w_n`
    pub t_n: Tensor,
    /// `N x (2k+1) x 2·w_d`
    pub t_d: Tensor,
    /// `N x (2k+1) x 2·w_w`
    pub t_w: Tensor,
    /// `N x 4`
    pub context: Tensor,
}

impl GcnnTensorBatch {
    /// Flattened payload `[t_n, t_d, t_w, context]`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.t_n.data());
        out.extend_from_slice(self.t_d.data());
        out.extend_from_slice(self.t_w.data());
        out.extend_from_slice(self.context.data());
    }
}

/// Number of rows in each link's block for neighbourhood size `k`.
pub fn block_rows(k: usize) -> usize {
    2 * k + 1
}

pub fn gcnn_payload_len(n_links: usize, k: usize, params: &WindowParams) -> usize {
    n_links * (block_rows(k) * params.speed_len() + CONTEXT_LEN)
}

/// Assembles the tensors for `links` (in the given order) at origin `t`.
pub fn build_gcnn_tensors<S: SeriesSource + ?Sized>(
    src: &S,
    neighbors: &BTreeMap<LinkId, NeighborSet>,
    links: &[LinkId],
    t: usize,
    params: &WindowParams,
) -> Result<GcnnTensorBatch> {
    let mut cache: BTreeMap<LinkId, FeatureVector> = BTreeMap::new();
    let mut fetch = |id: LinkId| -> Result<FeatureVector> {
        if let Some(f) = cache.get(&id) {
            return Ok(f.clone());
        }
        let f = build_windows(src, id, t, params)?;
        cache.insert(id, f.clone());
        Ok(f)
    };
    let first = links.first().and_then(|l| neighbors.get(l));
    let rows = first.map(|s| s.rows().len()).unwrap_or(1);
    let n = links.len();
    let (mut tn, mut td, mut tw, mut ctx) = (
        Vec::with_capacity(n * rows * params.w_n),
        Vec::with_capacity(n * rows * 2 * params.w_d),
        Vec::with_capacity(n * rows * 2 * params.w_w),
        Vec::with_capacity(n * CONTEXT_LEN),
    );
    for &id in links {
        let set = neighbors
            .get(&id)
            .ok_or_else(|| Error::UnknownLinks(vec![id]))?;
        let row_ids = set.rows();
        if row_ids.len() != rows {
            return Err(Error::Shape(format!(
                "link {id} has {} neighbour rows, expected {rows}",
                row_ids.len()
            )));
        }
        let mut own_context = None;
        for r in row_ids {
            let f = fetch(r)?;
            tn.extend_from_slice(&f.x_n);
            td.extend_from_slice(&f.x_d);
            tw.extend_from_slice(&f.x_w);
            own_context.get_or_insert(f.context);
        }
        ctx.extend_from_slice(&own_context.expect("block has at least one row"));
    }
    Ok(GcnnTensorBatch {
        links: links.to_vec(),
        t_n: Tensor::new(vec![n, rows, params.w_n], tn)?,
        t_d: Tensor::new(vec![n, rows, 2 * params.w_d], td)?,
        t_w: Tensor::new(vec![n, rows, 2 * params.w_w], tw)?,
        context: Tensor::new(vec![n, CONTEXT_LEN], ctx)?,
    })
}
