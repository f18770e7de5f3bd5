//! Windowed feature vectors, calendar context, road neighbourhoods and the
//! graph-structured input tensors.
//!
//! All features for an origin `t` are read through a [`History`] view that
//! rejects any step after `t`, so a feature can never see the future.

mod dataset;
mod gcnn;
mod neighbors;
mod windows;

pub use dataset::{
    build_dataset, build_gcnn_dataset, origins_in, DatasetKind, SupervisedDataset, TargetScope,
};
pub use gcnn::{block_rows, build_gcnn_tensors, gcnn_payload_len, GcnnTensorBatch};
pub use neighbors::{neighbor_sets, neighbor_sets_within, NeighborSet};
pub use windows::{
    build_windows, context, FeatureVector, History, SeriesSource, WindowParams, CONTEXT_LEN,
};
