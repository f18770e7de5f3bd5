use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use trafficast_core::pipeline::{
    axis_for, generate_synthetic, ingest_reader, preprocess, write_observations, PreprocessConfig,
    RawObservation, SynthSpec,
};
use trafficast_core::roadnet::{LinkId, RoadGraph};

#[test]
fn noiseless_feed_survives_csv_and_preprocessing_exactly() {
    let spec = SynthSpec {
        n_links: 8,
        n_weeks: 3,
        noise_std: 0.0,
        missing_rate: 0.0,
        default_rate: 0.0,
        jitter_seconds: 0,
        seed: 21,
        ..SynthSpec::default()
    };
    let syn = generate_synthetic(&spec).unwrap();

    let mut graph_csv = Vec::new();
    syn.graph.to_csv_writer(&mut graph_csv).unwrap();
    let graph = RoadGraph::from_csv_reader(&graph_csv[..]).unwrap();
    let mut obs_csv = Vec::new();
    write_observations(&mut obs_csv, &syn.observations).unwrap();
    let ingested = ingest_reader(&obs_csv[..]).unwrap();
    assert_eq!(ingested.malformed, 0);
    assert_eq!(ingested.observations, syn.observations);

    let axis = axis_for(&ingested.observations).unwrap();
    assert_eq!(axis, spec.axis().unwrap());
    let (set, report) = preprocess(
        &graph,
        &ingested.observations,
        &axis,
        &PreprocessConfig::default(),
    )
    .unwrap();
    assert!(report.coverage.dropped.is_empty());
    assert_eq!(report.coverage.kept, 8);
    let clean = syn.truth.clean_set(&axis).unwrap();
    for l in clean.link_ids() {
        let (got, want) = (set.values(l).unwrap(), clean.values(l).unwrap());
        let worst = got
            .iter()
            .zip(want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "link {l}: max deviation {worst}");
    }
}

fn observation() -> impl Strategy<Value = RawObservation> {
    (1u64..50, 0i64..4 * 7 * 86_400, 0.5f64..150.0).prop_map(|(l, s, v)| RawObservation {
        link_id: LinkId(l),
        timestamp: Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap()
            + chrono::Duration::seconds(s),
        speed_kmh: v,
    })
}

proptest! {
    #[test]
    fn observation_csv_round_trips(obs in prop::collection::vec(observation(), 0..64)) {
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        let back = ingest_reader(&buf[..]).unwrap();
        prop_assert_eq!(back.malformed, 0);
        prop_assert_eq!(back.observations, obs);
    }
}
