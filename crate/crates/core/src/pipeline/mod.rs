//! Raw feed ingestion, cleaning, regularisation and synthetic data.
//!
//! The cleaning order is fixed: default-speed removal, regularisation onto the
//! 15-minute grid, coverage filtering on the pre-fill masks, then gap filling.

mod acf;
mod clean;
mod ingest;
mod resample;
mod synth;

pub use acf::{acf, autocorrelation};
pub use clean::{remove_default_speeds, DefaultSpeedRemoval, DEFAULT_MIN_RUN};
pub use ingest::{
    format_utc, ingest_csv, ingest_reader, parse_utc, write_observations, Ingested, RawObservation,
    MAX_MALFORMED_FRACTION, OBSERVATION_HEADER,
};
pub use resample::{
    fill_missing, filter_coverage, regularize, CoverageReport, INTERPOLATION_REACH_SECONDS,
};
pub use synth::{generate_synthetic, GraphKind, GroundTruth, SynthSpec, Synthetic, WaveEvent};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roadnet::{RoadGraph, SeriesSet, SpeedSeries, TimeAxis, STEP_SECONDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Minimum run length of identical free-flow readings treated as placeholders.
    pub default_min_run: usize,
    /// Links with at least this missing share are dropped.
    pub coverage_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            default_min_run: DEFAULT_MIN_RUN,
            coverage_threshold: 0.20,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessReport {
    pub defaults_removed: usize,
    pub coverage: CoverageReport,
}

/// The smallest axis covering all readings, starting at the 15-minute boundary at or before the first one.
pub fn axis_for(obs: &[RawObservation]) -> Result<TimeAxis> {
    let first = obs.iter().map(|o| o.timestamp).min();
    let last = obs.iter().map(|o| o.timestamp).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::Validation(
            "no observations to derive a time axis from".into(),
        ));
    };
    let start_secs = first.timestamp().div_euclid(STEP_SECONDS) * STEP_SECONDS;
    let start: DateTime<Utc> = DateTime::from_timestamp(start_secs, 0)
        .ok_or_else(|| Error::Validation("first timestamp out of range".into()))?;
    let count = ((last.timestamp() - start_secs) / STEP_SECONDS) as usize + 1;
    TimeAxis::new(start, count)
}

/// Runs the full cleaning chain. Graph links without any reading enter as
/// fully missing series and are removed by the coverage filter.
pub fn preprocess(
    graph: &RoadGraph,
    obs: &[RawObservation],
    axis: &TimeAxis,
    config: &PreprocessConfig,
) -> Result<(SeriesSet, PreprocessReport)> {
    let removal = remove_default_speeds(obs, graph, config.default_min_run)?;
    let regular = regularize(&removal.kept, axis)?;
    let mut series: Vec<SpeedSeries> = regular.iter().cloned().collect();
    for l in graph.links() {
        if regular.get(l.link_id).is_err() {
            series.push(SpeedSeries {
                link_id: l.link_id,
                values: vec![f64::NAN; axis.count()],
                mask: vec![false; axis.count()],
            });
        }
    }
    let regular = SeriesSet::new(*axis, series)?;
    let (covered, coverage) = filter_coverage(&regular, config.coverage_threshold)?;
    let filled = fill_missing(&covered)?;
    Ok((
        filled,
        PreprocessReport {
            defaults_removed: removal.removed.len(),
            coverage,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_defaults_are_found_without_false_removals() {
        let spec = SynthSpec {
            n_links: 20,
            n_weeks: 3,
            default_rate: 0.004,
            ..SynthSpec::default()
        };
        let syn = generate_synthetic(&spec).unwrap();
        let removal =
            remove_default_speeds(&syn.observations, &syn.graph, DEFAULT_MIN_RUN).unwrap();
        let axis = spec.axis().unwrap();
        let pos = |id| syn.truth.links.iter().position(|l| *l == id).unwrap();
        let injected: usize = syn
            .truth
            .default_injected
            .iter()
            .flatten()
            .filter(|b| **b)
            .count();
        assert!(injected > 100);
        let mut true_removed = 0;
        for o in &removal.removed {
            let t = ((o.timestamp - axis.start()).num_seconds() / STEP_SECONDS) as usize;
            assert!(
                syn.truth.default_injected[pos(o.link_id)][t],
                "false removal at {t}"
            );
            true_removed += 1;
        }
        assert!(
            true_removed as f64 >= 0.95 * injected as f64,
            "{true_removed}/{injected}"
        );
    }

    #[test]
    fn pipeline_output_is_filled_and_covered() {
        let spec = SynthSpec {
            n_links: 8,
            n_weeks: 3,
            missing_rate: 0.05,
            ..SynthSpec::default()
        };
        let syn = generate_synthetic(&spec).unwrap();
        let axis = axis_for(&syn.observations).unwrap();
        assert_eq!(axis, spec.axis().unwrap());
        let (set, report) = preprocess(
            &syn.graph,
            &syn.observations,
            &axis,
            &PreprocessConfig::default(),
        )
        .unwrap();
        assert_eq!(set.len() + report.coverage.dropped.len(), 8);
        for s in set.iter() {
            assert!(s.values.iter().all(|v| v.is_finite()));
            assert!(s.missing_fraction() < 0.20);
        }
    }

    #[test]
    fn synthetic_traffic_is_daily_correlated() {
        let spec = SynthSpec {
            n_links: 4,
            n_weeks: 3,
            ..SynthSpec::default()
        };
        let syn = generate_synthetic(&spec).unwrap();
        let axis = spec.axis().unwrap();
        let (set, _) = preprocess(
            &syn.graph,
            &syn.observations,
            &axis,
            &PreprocessConfig::default(),
        )
        .unwrap();
        for s in set.iter() {
            let r = autocorrelation(s, 96).unwrap();
            assert!(r[96] > 0.5, "link {} acf(96) = {}", s.link_id, r[96]);
        }
    }
}
