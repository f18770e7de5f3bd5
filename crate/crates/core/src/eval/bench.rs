use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    count_class_label, evaluation_origins, rmse_h, sample_links, split, to_forecasts, EvalReport,
    Forecasts, MethodResult, SplitSpec,
};
use crate::features::SeriesSource;
use crate::predictors::{fit, FitInput, FittedModel, MethodKind, MethodParams};
use crate::roadnet::{LinkId, RoadGraph, SeriesSet, TimeAxis};
use crate::wavelet::{cluster_links, link_features, ClusterAssignment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: SplitSpec,
    /// Links scored per method; capped at the number of links in the set.
    pub n_links: usize,
    /// Largest cluster count tried when a cluster assignment has to be computed.
    pub k_max: usize,
    /// Horizon step shown in the plot outputs.
    pub plot_step: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            n_links: 50,
            k_max: 10,
            plot_step: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub report: EvalReport,
    pub origins: Vec<usize>,
    pub forecasts: BTreeMap<MethodKind, Forecasts>,
    pub clusters: Option<ClusterAssignment>,
    pub plot_step: usize,
}

/// Trains every method on the training weeks (validation week for early
/// stopping) and scores the sampled links over the test week.
pub fn benchmark(
    methods: &[MethodKind],
    set: &SeriesSet,
    graph: Option<&RoadGraph>,
    clusters: Option<&ClusterAssignment>,
    params: &MethodParams,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<BenchmarkOutput> {
    params.validate()?;
    if cfg.plot_step == 0 || cfg.plot_step > params.h {
        return Err(Error::Config(format!(
            "plot_step must lie in 1..={}",
            params.h
        )));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let sp = split(set, &cfg.split)?;
    let n = cfg.n_links.min(set.len());
    if n < cfg.n_links {
        log::warn!("sampling all {n} links; {} were requested", cfg.n_links);
    }
    let sampled = sample_links(set, n, seed)?;
    let origins = evaluation_origins(&sp.test, params.h)?;
    let computed;
    let clusters = match (clusters, methods.contains(&MethodKind::Cmlp)) {
        (Some(c), _) => Some(c),
        (None, true) => {
            let feats = link_features(set, sp.train.clone())?;
            let (assign, sel) = cluster_links(&feats, cfg.k_max.min(feats.len()), seed)?;
            log::info!(
                "clustered {} links into K = {} (elbow {})",
                feats.len(),
                sel.k,
                sel.elbow
            );
            computed = assign;
            Some(&computed)
        }
        (None, false) => None,
    };
    let mut results = Vec::new();
    let mut forecasts = BTreeMap::new();
    for &m in &methods {
        log::info!("fitting {}", m.label());
        let model = fit(
            m,
            params,
            &FitInput {
                set,
                graph,
                clusters,
                train: sp.train.clone(),
                val: (!sp.val.is_empty()).then(|| sp.val.clone()),
                links: sampled.clone(),
                seed,
            },
        )?;
        let preds = model.predict_origins(set, &origins, &sampled)?;
        let table = to_forecasts(&origins, &sampled, preds);
        let r = rmse_h(&table, set, &sampled, &origins, params.h)?;
        let count = model.model_count();
        let bytes = model.to_bytes().len();
        let secs: f64 = model.fit_seconds.iter().sum();
        log::info!(
            "{}: mean RMSE {:.3} km/h over {} models",
            m.label(),
            r.iter().sum::<f64>() / r.len() as f64,
            count
        );
        results.push(MethodResult {
            method: m,
            label: m.label().to_string(),
            rmse_h: r,
            train_time_s: secs / count as f64,
            size_bytes: bytes as f64 / count as f64,
            model_count: count,
            model_count_class: count_class_label(m.count_class()),
        });
        forecasts.insert(m, table);
    }
    let report = EvalReport {
        seed,
        h: params.h,
        split: sp,
        sampled_links: sampled,
        test_origins: origins.len(),
        results,
    };
    Ok(BenchmarkOutput {
        report,
        origins,
        forecasts,
        clusters: clusters.cloned(),
        plot_step: cfg.plot_step,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: usize,
    pub params: MethodParams,
    /// (grid index, mean validation RMSE, model file bytes)
    pub trace: Vec<(usize, f64, usize)>,
}

/// Exhaustive search scored by the mean over horizon steps of the validation
/// RMSE on `links`. Ties go to the smaller model, then to the earlier point.
pub fn grid_search(
    method: MethodKind,
    grid: &[MethodParams],
    input: &FitInput,
    links: &[LinkId],
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let val = input
        .val
        .clone()
        .ok_or_else(|| Error::Config("grid search needs a validation range".into()))?;
    let mut trace = Vec::with_capacity(grid.len());
    for (i, p) in grid.iter().enumerate() {
        let model = fit(method, p, input)?;
        let origins = evaluation_origins(&val, p.h)?;
        let preds = model.predict_origins(input.set, &origins, links)?;
        let r = rmse_h(
            &to_forecasts(&origins, links, preds),
            input.set,
            links,
            &origins,
            p.h,
        )?;
        let score = r.iter().sum::<f64>() / r.len() as f64;
        let size = model.to_bytes().len();
        log::info!(
            "grid {} point {i}: validation RMSE {score:.4}, {size} bytes",
            method.label()
        );
        trace.push((i, score, size));
    }
    let best = trace
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
        .expect("nonempty grid")
        .0;
    Ok(GridOutcome {
        best,
        params: grid[best].clone(),
        trace,
    })
}

/// A series view that records the latest step any window touched.
struct Recorder<'a> {
    set: &'a SeriesSet,
    last: AtomicUsize,
    reads: AtomicUsize,
}

impl SeriesSource for Recorder<'_> {
    fn axis(&self) -> &TimeAxis {
        self.set.axis()
    }

    fn link_ids(&self) -> Vec<LinkId> {
        self.set.link_ids()
    }

    fn window(&self, link: LinkId, start: usize, len: usize) -> Result<&[f64]> {
        if len > 0 {
            self.last.fetch_max(start + len - 1, Ordering::Relaxed);
        }
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.set.window(link, start, len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeakageAudit {
    pub origins: usize,
    pub reads: usize,
}

/// Scores `model` at each origin through an unguarded, recording view of
/// `set` and fails if any read reaches past the origin.
pub fn audit_leakage(
    model: &FittedModel,
    set: &SeriesSet,
    origins: &[usize],
    links: &[LinkId],
) -> Result<LeakageAudit> {
    let mut reads = 0;
    for &t in origins {
        let rec = Recorder {
            set,
            last: AtomicUsize::new(0),
            reads: AtomicUsize::new(0),
        };
        model.predict_many(&[(&rec, t)], links)?;
        let last = rec.last.load(Ordering::Relaxed);
        if last > t {
            return Err(Error::Leakage {
                requested: last,
                origin: t,
            });
        }
        reads += rec.reads.load(Ordering::Relaxed);
    }
    Ok(LeakageAudit {
        origins: origins.len(),
        reads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::write_report;
    use crate::pipeline::{generate_synthetic, GraphKind, SynthSpec};
    use crate::predictors::{ArParams, GbParams, GcnnParams, LstmParams, MlpParams};

    fn world(noise: f64, waves: f64) -> (RoadGraph, SeriesSet) {
        let spec = SynthSpec {
            n_links: 6,
            n_weeks: 5,
            graph_kind: GraphKind::Ring,
            noise_std: noise,
            wave_rate: waves,
            ..SynthSpec::default()
        };
        let syn = generate_synthetic(&spec).unwrap();
        (
            syn.graph,
            syn.truth.clean_set(&spec.axis().unwrap()).unwrap(),
        )
    }

    fn cfg() -> EvalConfig {
        EvalConfig {
            split: SplitSpec {
                train_weeks: 3,
                val_weeks: 1,
                test_weeks: 1,
            },
            n_links: 4,
            k_max: 3,
            plot_step: 2,
        }
    }

    fn fast() -> MethodParams {
        let mlp = MlpParams {
            hidden: 8,
            layers: 3,
            epochs: 2,
            train_stride: 8,
            ..MlpParams::link_default()
        };
        MethodParams {
            h: 12,
            ar: ArParams::default(),
            gb: GbParams {
                n_trees: 5,
                train_stride: 8,
                ..GbParams::default()
            },
            mlp: mlp.clone(),
            lstm: LstmParams {
                hidden: 4,
                layers: 1,
                epochs: 1,
                train_stride: 32,
                ..LstmParams::default()
            },
            bmlp: mlp.clone(),
            cmlp: MlpParams { w_n: 16, ..mlp },
            gcnn: GcnnParams {
                k: 1,
                epochs: 1,
                train_stride: 32,
                batch_size: 16,
                ..GcnnParams::default()
            },
        }
    }

    #[test]
    fn baseline_is_exact_on_periodic_data() {
        let (graph, set) = world(0.0, 0.0);
        let out = benchmark(
            &[MethodKind::Baseline],
            &set,
            Some(&graph),
            None,
            &fast(),
            &cfg(),
            1,
        )
        .unwrap();
        assert_eq!(out.report.test_origins, 660);
        for v in &out.report.results[0].rmse_h {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn rows_follow_method_order_and_files_are_stable() {
        let (graph, set) = world(1.0, 0.001);
        let methods = [
            MethodKind::Gcnn,
            MethodKind::Ar,
            MethodKind::Baseline,
            MethodKind::Cmlp,
            MethodKind::Mlp,
        ];
        let a = benchmark(&methods, &set, Some(&graph), None, &fast(), &cfg(), 3).unwrap();
        let labels: Vec<&str> = a.report.results.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["Baseline", "AR", "MLP", "C-MLP", "GCNN"]);
        let classes: Vec<&str> = a
            .report
            .results
            .iter()
            .map(|r| r.model_count_class.as_str())
            .collect();
        assert_eq!(classes, ["O(N)", "O(N)", "O(N)", "O(C)", "O(1)"]);
        let b = benchmark(&methods, &set, Some(&graph), None, &fast(), &cfg(), 3).unwrap();
        for (x, y) in a.report.results.iter().zip(&b.report.results) {
            assert_eq!(
                (&x.rmse_h, x.size_bytes, x.model_count),
                (&y.rmse_h, y.size_bytes, y.model_count)
            );
        }
        assert_eq!(a.forecasts, b.forecasts);
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(dir.path(), &a, &set).unwrap();
        let csv = std::fs::read_to_string(&files.csv).unwrap();
        assert!(csv.starts_with("method,h1,h2,h3,h4,h5,h6,h7,h8,h9,h10,h11,h12,train_time_s,size_bytes,model_count_class\n"));
        assert_eq!(files.predictions.len(), 5);
        let preds = std::fs::read_to_string(&files.predictions[0]).unwrap();
        assert_eq!(preds.lines().count(), 1 + 4 * 660 * 12);
        assert!(preds.starts_with("link_id,origin_time,h,predicted_kmh\n"));
        assert!(std::fs::read_to_string(files.svg.unwrap())
            .unwrap()
            .contains("<polyline"));
    }

    fn ar_input(set: &SeriesSet) -> FitInput<'_> {
        FitInput {
            set,
            graph: None,
            clusters: None,
            train: 0..3 * 672,
            val: Some(3 * 672..4 * 672),
            links: set.link_ids(),
            seed: 0,
        }
    }

    #[test]
    fn grid_search_picks_the_dominating_point() {
        let (_, set) = world(0.5, 0.0);
        let links = set.link_ids();
        let input = ar_input(&set);
        let point = |p: usize| MethodParams {
            ar: ArParams {
                p,
                ..ArParams::default()
            },
            ..fast()
        };
        // one lag cannot follow the daily shape as well as a day's worth of lags
        let grid = vec![point(1), point(96), point(2)];
        let a = grid_search(MethodKind::Ar, &grid, &input, &links).unwrap();
        assert_eq!(a.best, 1);
        assert_eq!(a.trace.len(), 3);
        assert_eq!(
            a,
            grid_search(MethodKind::Ar, &grid, &input, &links).unwrap()
        );
        assert_eq!(
            grid_search(MethodKind::Ar, &grid[..1], &input, &links)
                .unwrap()
                .best,
            0
        );
        assert!(grid_search(MethodKind::Ar, &[], &input, &links).is_err());
    }

    #[test]
    fn forecasts_never_read_past_the_origin() {
        let (graph, set) = world(1.0, 0.001);
        let sp = split(&set, &cfg().split).unwrap();
        let origins = evaluation_origins(&sp.test, 12).unwrap();
        let links = set.link_ids();
        for m in MethodKind::ALL {
            let model = fit(
                m,
                &fast(),
                &FitInput {
                    set: &set,
                    graph: Some(&graph),
                    clusters: Some(
                        &ClusterAssignment::from_labels(links.iter().map(|l| (*l, 0)).collect())
                            .unwrap(),
                    ),
                    train: sp.train.clone(),
                    val: None,
                    links: links.clone(),
                    seed: 1,
                },
            )
            .unwrap();
            let audit = audit_leakage(&model, &set, &origins, &links).unwrap();
            assert_eq!(audit.origins, 660);
            assert!(audit.reads > 0 || m == MethodKind::Baseline);
        }
    }
}
