use trafficast_core::eval::{evaluation_origins, rmse_h, split, to_forecasts, SplitSpec};
use trafficast_core::pipeline::{generate_synthetic, GraphKind, SynthSpec};
use trafficast_core::predictors::{fit, FitInput, LstmParams, MethodKind, MethodParams, MlpParams};
use trafficast_core::roadnet::{LinkId, RoadGraph, SeriesSet, SpeedSeries, TimeAxis};
use trafficast_core::wavelet::ClusterAssignment;

fn clean_world(n_links: usize, weeks: usize) -> (RoadGraph, SeriesSet) {
    let spec = SynthSpec {
        n_links,
        n_weeks: weeks,
        graph_kind: GraphKind::Ring,
        noise_std: 0.0,
        wave_rate: 0.0,
        missing_rate: 0.0,
        default_rate: 0.0,
        jitter_seconds: 0,
        seed: 4,
        ..SynthSpec::default()
    };
    let syn = generate_synthetic(&spec).unwrap();
    let set = syn.truth.clean_set(&spec.axis().unwrap()).unwrap();
    (syn.graph, set)
}

fn test_rmse(
    model: &trafficast_core::predictors::FittedModel,
    set: &SeriesSet,
    test: &std::ops::Range<usize>,
    links: &[LinkId],
    h: usize,
) -> Vec<f64> {
    let origins = evaluation_origins(test, h).unwrap();
    let preds = model.predict_origins(set, &origins, links).unwrap();
    rmse_h(
        &to_forecasts(&origins, links, preds),
        set,
        links,
        &origins,
        h,
    )
    .unwrap()
}

#[test]
fn lstm_reproduces_a_noiseless_repeat_week() {
    let (graph, set) = clean_world(2, 5);
    let s = split(
        &set,
        &SplitSpec {
            train_weeks: 3,
            val_weeks: 1,
            test_weeks: 1,
        },
    )
    .unwrap();
    let params = MethodParams {
        lstm: LstmParams {
            hidden: 16,
            layers: 1,
            epochs: 30,
            patience: 5,
            train_stride: 1,
            ..LstmParams::default()
        },
        ..MethodParams::default()
    };
    let link = LinkId(1);
    let input = FitInput {
        set: &set,
        graph: Some(&graph),
        clusters: None,
        train: s.train.clone(),
        val: Some(s.val.clone()),
        links: vec![link],
        seed: 9,
    };
    let model = fit(MethodKind::Lstm, &params, &input).unwrap();
    let rmse = test_rmse(&model, &set, &s.test, &[link], params.h);
    let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
    assert!(mean < 0.5, "mean test RMSE {mean:.3} ({rmse:?})");
}

/// Two groups of links sharing a daily profile and marginal variance: one
/// with persistent AR(1) deviations, one with white-noise deviations.
fn two_process_set(seed: u64) -> SeriesSet {
    use chrono::{TimeZone, Utc};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let n = 5 * 672;
    let axis = TimeAxis::new(Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap(), n).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (phi, marginal) = (0.95, 4.0);
    let persistent = Normal::new(0.0, marginal * (1.0 - phi * phi as f64).sqrt()).unwrap();
    let white = Normal::new(0.0, marginal).unwrap();
    let series = (0..6u64).map(|i| {
        let mut e = 0.0;
        let values = (0..n)
            .map(|t| {
                e = if i < 3 {
                    phi * e + persistent.sample(&mut rng)
                } else {
                    white.sample(&mut rng)
                };
                let day = (2.0 * std::f64::consts::PI * t as f64 / 96.0).sin();
                50.0 + 10.0 * day + e
            })
            .collect();
        SpeedSeries::observed(LinkId(i + 1), values)
    });
    SeriesSet::new(axis, series).unwrap()
}

#[test]
fn clusters_beat_one_pooled_model_on_distinct_processes() {
    let params = MethodParams {
        cmlp: MlpParams {
            hidden: 24,
            layers: 3,
            train_stride: 2,
            ..MlpParams::cluster_default()
        },
        ..MethodParams::default()
    };
    let truth =
        ClusterAssignment::from_labels((1..=6).map(|i| (LinkId(i), usize::from(i > 3))).collect())
            .unwrap();
    let pooled = ClusterAssignment::from_labels((1..=6).map(|i| (LinkId(i), 0)).collect()).unwrap();
    for seed in 1..=3 {
        let set = two_process_set(seed);
        let s = split(
            &set,
            &SplitSpec {
                train_weeks: 3,
                val_weeks: 1,
                test_weeks: 1,
            },
        )
        .unwrap();
        let links = set.link_ids();
        let score = |clusters: &ClusterAssignment| {
            let input = FitInput {
                set: &set,
                graph: None,
                clusters: Some(clusters),
                train: s.train.clone(),
                val: Some(s.val.clone()),
                links: vec![],
                seed,
            };
            let model = fit(MethodKind::Cmlp, &params, &input).unwrap();
            assert_eq!(model.model_count(), clusters.k);
            let r = test_rmse(&model, &set, &s.val, &links, params.h);
            r.iter().sum::<f64>() / r.len() as f64
        };
        let (by_cluster, single) = (score(&truth), score(&pooled));
        assert!(
            by_cluster <= single,
            "seed {seed}: clustered {by_cluster:.3} vs pooled {single:.3}"
        );
    }
}
