//! Wavelet relative-energy features of link series and K-means clustering
//! of links on those features.

mod dwt;
mod kmeans;

pub use dwt::{analysis_step, db6_high, dwt_db6, Pyramid, DB6_LOW};
pub use kmeans::{
    kmeans, kmeans_restarts, select_k, silhouette, KMeans, KSelection, DEFAULT_MAX_ITER,
    DEFAULT_RESTARTS, DEFAULT_TOL,
};

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::roadnet::{LinkId, SeriesSet};

/// Input length fed to the transform: the largest power of two within one week.
pub const WAVELET_LEN: usize = 512;
/// Decomposition depth on [`WAVELET_LEN`] samples.
pub const WAVELET_LEVELS: usize = 9;
/// Number of lowest-frequency energies used as clustering features.
pub const SELECTED_FEATURES: usize = 3;

/// Zero mean, unit sample standard deviation.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Degenerate(
            "standardising needs at least two values".into(),
        ));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) || !sd.is_finite() {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFeatures {
    pub link_id: LinkId,
    /// Share of detail energy per scale, coarsest first.
    pub rel: Vec<f64>,
    /// The [`SELECTED_FEATURES`] coarsest entries of `rel`.
    pub selected: Vec<f64>,
}

/// Relative detail energies of a pyramid (approximation excluded).
pub fn relative_energies(link_id: LinkId, p: &Pyramid) -> Result<WaveletFeatures> {
    let e: Vec<f64> = p
        .details
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum())
        .collect();
    let total: f64 = e.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(format!(
            "link {link_id} has no detail energy"
        )));
    }
    let rel: Vec<f64> = e.iter().map(|v| v / total).collect();
    let selected = rel.iter().take(SELECTED_FEATURES).copied().collect();
    Ok(WaveletFeatures {
        link_id,
        rel,
        selected,
    })
}

/// Features of one series: first [`WAVELET_LEN`] values, standardised, db6 over [`WAVELET_LEVELS`] levels.
pub fn series_features(link_id: LinkId, values: &[f64]) -> Result<WaveletFeatures> {
    if values.len() < WAVELET_LEN {
        return Err(Error::InsufficientHistory(format!(
            "wavelet features need {WAVELET_LEN} values, link {link_id} has {}",
            values.len()
        )));
    }
    let z = standardize(&values[..WAVELET_LEN])?;
    relative_energies(link_id, &dwt_db6(&z, WAVELET_LEVELS)?)
}

/// Features for every link over the steps in `range` (typically the validation week).
pub fn link_features(set: &SeriesSet, range: Range<usize>) -> Result<Vec<WaveletFeatures>> {
    if range.end > set.axis().count() || range.start > range.end {
        return Err(Error::OutOfRange {
            index: range.end,
            count: set.axis().count(),
        });
    }
    set.iter()
        .map(|s| series_features(s.link_id, &s.values[range.clone()]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    pub assignment: BTreeMap<LinkId, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<LinkId> {
        self.assignment
            .iter()
            .filter(|(_, c)| **c == cluster)
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn cluster_of(&self, link: LinkId) -> Result<usize> {
        self.assignment
            .get(&link)
            .copied()
            .ok_or_else(|| Error::UnknownLinks(vec![link]))
    }

    /// Assignment without centroids, as read back from a `link_id,cluster` file.
    pub fn from_labels(assignment: BTreeMap<LinkId, usize>) -> Result<Self> {
        let k = assignment.values().max().map(|m| m + 1).unwrap_or(0);
        if k == 0 {
            return Err(Error::Validation("cluster assignment is empty".into()));
        }
        for c in 0..k {
            if !assignment.values().any(|v| *v == c) {
                return Err(Error::Validation(format!("cluster {c} has no members")));
            }
        }
        Ok(Self {
            k,
            assignment,
            centroids: vec![],
            inertia: f64::NAN,
        })
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["link_id", "cluster"])?;
        for (l, c) in &self.assignment {
            w.write_record([l.0.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["link_id", "cluster"] {
            return Err(Error::Validation(
                "cluster file header must be link_id,cluster".into(),
            ));
        }
        let mut assignment = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<u64> {
                rec.get(j)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::Validation(format!("cluster file row {}: bad field {j}", i + 2))
                    })
            };
            let (l, c) = (LinkId(parse(0)?), parse(1)?);
            if c > 1 << 20 {
                return Err(Error::Validation(format!(
                    "cluster index {c} is implausibly large"
                )));
            }
            if assignment.insert(l, c as usize).is_some() {
                return Err(Error::Validation(format!(
                    "link {l} appears twice in cluster file"
                )));
            }
        }
        Self::from_labels(assignment)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Writes `K,inertia,silhouette` rows (silhouette empty for K = 1).
pub fn write_curves<W: Write>(writer: W, sel: &KSelection) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["K", "inertia", "silhouette"])?;
    for (k, inertia, s) in &sel.curve {
        let s = if s.is_nan() {
            String::new()
        } else {
            format!("{s}")
        };
        w.write_record([k.to_string(), format!("{inertia}"), s])?;
    }
    w.flush()?;
    Ok(())
}

/// Clusters links on their selected wavelet features with K chosen by
/// [`select_k`] (k_max is capped below the number of links).
pub fn cluster_links(
    features: &[WaveletFeatures],
    k_max: usize,
    seed: u64,
) -> Result<(ClusterAssignment, KSelection)> {
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.selected.clone()).collect();
    let cap = k_max.min(points.len().saturating_sub(1));
    let sel = select_k(&points, cap, seed)?;
    let assignment = assign(features, sel.k, seed)?;
    Ok((assignment, sel))
}

/// Clusters links into exactly `k` groups.
pub fn assign(features: &[WaveletFeatures], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.selected.clone()).collect();
    let run = kmeans_restarts(
        &points,
        k,
        seed.wrapping_add(k as u64),
        DEFAULT_MAX_ITER,
        DEFAULT_TOL,
        DEFAULT_RESTARTS,
    )?;
    let assignment = features
        .iter()
        .zip(&run.labels)
        .map(|(f, &c)| (f.link_id, c))
        .collect();
    Ok(ClusterAssignment {
        k,
        assignment,
        centroids: run.centroids,
        inertia: run.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn standardize_basics() {
        let z = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        let again = standardize(&z).unwrap();
        assert!(z.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(standardize(&[4.0; 10]).is_err());
    }

    #[test]
    fn single_scale_and_sum() {
        let p = Pyramid {
            details: vec![vec![0.0], vec![0.0, 3.0], vec![0.0; 4]],
            approximation: vec![9.0],
        };
        let f = relative_energies(LinkId(1), &p).unwrap();
        assert_eq!(f.rel, vec![0.0, 1.0, 0.0]);
        let zero = Pyramid {
            details: vec![vec![0.0]],
            approximation: vec![1.0],
        };
        assert!(relative_energies(LinkId(1), &zero).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..512).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = series_features(LinkId(2), &x).unwrap();
        assert!((f.rel.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(f.rel.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(f.selected, f.rel[..3].to_vec());
    }

    #[test]
    fn coarse_sinusoid_concentrates_in_coarse_scales() {
        // one cycle over the window, phased to line up with the coarsest wavelet
        let x: Vec<f64> = (0..512)
            .map(|i| (2.0 * PI * i as f64 / 512.0 + PI / 4.0).sin())
            .collect();
        let f = series_features(LinkId(3), &x).unwrap();
        assert!(f.rel[0] > 0.9, "{:?}", f.rel);
        // any phase keeps nearly all energy in the two coarsest scales
        let x: Vec<f64> = (0..512)
            .map(|i| (2.0 * PI * i as f64 / 512.0).sin())
            .collect();
        let f = series_features(LinkId(3), &x).unwrap();
        assert!(f.rel[0] + f.rel[1] > 0.99, "{:?}", f.rel);
    }

    #[test]
    fn cluster_csv_round_trip() {
        let a =
            ClusterAssignment::from_labels([(LinkId(3), 1), (LinkId(5), 0)].into_iter().collect())
                .unwrap();
        let mut buf = Vec::new();
        a.to_csv_writer(&mut buf).unwrap();
        let b = ClusterAssignment::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(b.assignment, a.assignment);
        assert!(
            ClusterAssignment::from_csv_reader("link_id,cluster\n1,0\n2,2\n".as_bytes()).is_err()
        );
    }
}
