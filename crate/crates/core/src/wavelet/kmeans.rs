use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Independent k-means++ restarts per K; the lowest-inertia run is kept.
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map(|p| p.len()).unwrap_or(0);
    if dim == 0 {
        return Err(Error::Validation("no points to cluster".into()));
    }
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Validation(
            "points must be finite and share one dimension".into(),
        ));
    }
    Ok(dim)
}

/// Nearest centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist2(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            inertia += d;
        }
        history.push(inertia);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // an empty cluster takes the point farthest from its centroid
                let far = (0..points.len())
                    .map(|i| (i, dist2(&points[i], &centroids[labels[i]])))
                    .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                centroids[c] = points[far].clone();
                labels[far] = c;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if prev - inertia < tol {
            break;
        }
        prev = inertia;
    }
    // final assignment against the final centroids
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        inertia += d;
    }
    history.push(inertia);
    // centroids as exact member means
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(&labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    KMeans {
        labels,
        centroids,
        inertia,
        history,
    }
}

/// Lloyd's algorithm from one k-means++ seeding.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeans> {
    kmeans_restarts(points, k, seed, max_iter, tol, 1)
}

/// Best of `restarts` k-means++ runs drawn from one seeded stream.
pub fn kmeans_restarts(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    restarts: usize,
) -> Result<KMeans> {
    check_points(points)?;
    if k == 0 || k > points.len() {
        return Err(Error::Validation(format!(
            "K = {k} must be in 1..={}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, max_iter, tol);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette with Euclidean distance; singletons score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_points(points)?;
    if labels.len() != points.len() {
        return Err(Error::Shape("one label per point required".into()));
    }
    let k = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|s| **s > 0).count() < 2 {
        return Err(Error::Validation(
            "silhouette needs at least two nonempty clusters".into(),
        ));
    }
    let n = points.len();
    let mut any_distance = false;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                let d = dist2(&points[i], &points[j]).sqrt();
                any_distance |= d > 0.0;
                sums[labels[j]] += d;
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    if !any_distance {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    /// The K at the largest second difference of inertia.
    pub elbow: usize,
    /// `(K, inertia, silhouette)` for K = 1..=k_max; silhouette is NaN at K = 1.
    pub curve: Vec<(usize, f64, f64)>,
}

/// Runs k-means for K = 1..=k_max (seed `seed + K`) and picks the K with the
/// best silhouette among those at or past the elbow.
pub fn select_k(points: &[Vec<f64>], k_max: usize, seed: u64) -> Result<KSelection> {
    check_points(points)?;
    if k_max < 2 || points.len() <= k_max {
        return Err(Error::Validation(format!(
            "k_max = {k_max} needs at least 2 and fewer than the {} points",
            points.len()
        )));
    }
    let mut curve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let run = kmeans_restarts(
            points,
            k,
            seed.wrapping_add(k as u64),
            DEFAULT_MAX_ITER,
            DEFAULT_TOL,
            DEFAULT_RESTARTS,
        )?;
        let s = if k == 1 {
            f64::NAN
        } else {
            silhouette(points, &run.labels)?
        };
        log::debug!("k-means K={k} inertia={:.6} silhouette={s:.4}", run.inertia);
        curve.push((k, run.inertia, s));
    }
    let elbow = if k_max == 2 {
        2
    } else {
        (2..k_max)
            .map(|k| (k, curve[k - 2].1 - 2.0 * curve[k - 1].1 + curve[k].1))
            .fold((2, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b })
            .0
    };
    let k = (elbow..=k_max)
        .map(|k| (k, curve[k - 1].2))
        .fold(
            (elbow, f64::NEG_INFINITY),
            |b, x| if x.1 > b.1 { x } else { b },
        )
        .0;
    log::info!("selected K = {k} (elbow at {elbow})");
    Ok(KSelection { k, elbow, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(
        centers: &[Vec<f64>],
        per: usize,
        std: f64,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, std).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(center.iter().map(|v| v + noise.sample(&mut rng)).collect());
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn separates_two_clouds() {
        let (pts, truth) = blobs(&[vec![0.0, 0.0], vec![10.0, 10.0]], 20, 0.5, 1);
        let r = kmeans(&pts, 2, 3, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let flip = r.labels[0] != truth[0];
        for (l, t) in r.labels.iter().zip(&truth) {
            assert_eq!(*l, if flip { 1 - t } else { *t });
        }
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        // assignment is a fixed point of the returned centroids
        for (p, &l) in pts.iter().zip(&r.labels) {
            assert_eq!(nearest(p, &r.centroids).0, l);
        }
    }

    #[test]
    fn one_cluster_per_point_has_zero_inertia() {
        let (pts, _) = blobs(&[vec![0.0, 0.0]], 7, 1.0, 2);
        let r = kmeans(&pts, 7, 0, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(r.inertia < 1e-20);
        assert!(kmeans(&pts, 8, 0, 10, 1e-6).is_err());
        assert!(kmeans(&pts, 0, 0, 10, 1e-6).is_err());
    }

    fn brute_silhouette(pts: &[Vec<f64>], labels: &[usize]) -> f64 {
        let d = |a: &Vec<f64>, b: &Vec<f64>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let k = labels.iter().max().unwrap() + 1;
        let mut total = 0.0;
        for i in 0..pts.len() {
            let mut mean = vec![(0.0, 0usize); k];
            for j in 0..pts.len() {
                if j != i {
                    mean[labels[j]].0 += d(&pts[i], &pts[j]);
                    mean[labels[j]].1 += 1;
                }
            }
            if mean[labels[i]].1 == 0 {
                continue;
            }
            let a = mean[labels[i]].0 / mean[labels[i]].1 as f64;
            let b = (0..k)
                .filter(|c| *c != labels[i])
                .map(|c| mean[c].0 / mean[c].1 as f64)
                .fold(f64::MAX, f64::min);
            total += (b - a) / a.max(b);
        }
        total / pts.len() as f64
    }

    #[test]
    fn silhouette_of_separated_and_random_labels() {
        let (pts, truth) = blobs(&[vec![0.0, 0.0], vec![50.0, 0.0]], 25, 1.0, 4);
        let s = silhouette(&pts, &truth).unwrap();
        assert!(s > 0.9);
        assert!((s - brute_silhouette(&pts, &truth)).abs() < 1e-12);

        let (cloud, _) = blobs(&[vec![0.0, 0.0]], 400, 1.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let labels: Vec<usize> = (0..400).map(|_| rng.random_range(0..2)).collect();
        assert!(silhouette(&cloud, &labels).unwrap().abs() < 0.1);

        let same = vec![vec![1.0, 1.0]; 4];
        assert!(matches!(
            silhouette(&same, &[0, 0, 1, 1]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn select_k_on_two_blobs() {
        let (pts, _) = blobs(&[vec![0.0, 0.0, 0.0], vec![20.0, 0.0, 0.0]], 30, 1.0, 8);
        assert_eq!(select_k(&pts, 10, 1).unwrap().k, 2);
    }

    #[test]
    fn select_k_finds_nine_blobs() {
        let mut centers = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                centers.push(vec![
                    i as f64 * 12.0,
                    j as f64 * 12.0,
                    ((i + j) % 3) as f64 * 12.0,
                ]);
            }
        }
        let (pts, _) = blobs(&centers, 25, 1.0, 9);
        let sel = select_k(&pts, 20, 7).unwrap();
        assert_eq!(sel.k, 9, "curve {:?}", sel.curve);
        assert_eq!(
            format!("{sel:?}"),
            format!("{:?}", select_k(&pts, 20, 7).unwrap())
        );
    }
}
