//! Synthetic road network and speed feed generator.
//!
//! Speeds are built from a weekly-periodic profile (morning and evening rush
//! dips, attenuated on weekends) plus congestion waves that start at random
//! links and spill back upstream at a fixed propagation speed, plus Gaussian
//! noise. Missing readings and runs of default (free-flow) placeholders are
//! then injected into the emitted observations. [`GroundTruth`] keeps the
//! clean values and every injection position.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::RawObservation;
use crate::roadnet::{
    Direction, LinkId, LinkRecord, NodeId, RoadGraph, SeriesSet, SpeedSeries, TimeAxis,
    STEPS_PER_DAY, STEPS_PER_WEEK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Grid,
    Ring,
    RandomPlanar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_links: usize,
    pub graph_kind: GraphKind,
    pub n_weeks: usize,
    /// First grid point; must sit on a 15-minute boundary.
    pub start: DateTime<Utc>,
    /// Peak rush-hour speed loss as a fraction of free-flow speed.
    pub daily_amplitude: f64,
    /// Fraction of the rush-hour dips removed on Saturdays and Sundays.
    pub weekly_amplitude: f64,
    /// Probability per link and step that a congestion wave starts there.
    pub wave_rate: f64,
    /// Upstream propagation speed of a wave, km/h.
    pub wave_speed_kmh: f64,
    /// Fractional speed drop at the wave origin.
    pub wave_amplitude: f64,
    pub wave_duration_steps: usize,
    /// Distance over which a wave's depth decays by a factor e, metres.
    pub wave_decay_m: f64,
    pub noise_std: f64,
    pub missing_rate: f64,
    /// Probability per link and step that a run of default speeds starts.
    pub default_rate: f64,
    /// Readings arrive up to this many seconds after their grid point.
    pub jitter_seconds: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_links: 60,
            graph_kind: GraphKind::Grid,
            n_weeks: 14,
            start: Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap(),
            daily_amplitude: 0.35,
            weekly_amplitude: 0.6,
            wave_rate: 0.0005,
            wave_speed_kmh: 1.0,
            wave_amplitude: 0.45,
            wave_duration_steps: 8,
            wave_decay_m: 1500.0,
            noise_std: 1.5,
            missing_rate: 0.02,
            default_rate: 0.001,
            jitter_seconds: 120,
            seed: 7,
        }
    }
}

/// Depth below which a spreading wave is no longer applied.
const WAVE_CUTOFF: f64 = 0.02;
/// Lengths of injected default-speed runs, inclusive.
const DEFAULT_RUN: (usize, usize) = (4, 8);
const GRID_SPACING_M: f64 = 400.0;
const FREE_FLOW_CLASSES: [f64; 3] = [30.0, 50.0, 70.0];

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("daily_amplitude", self.daily_amplitude),
            ("weekly_amplitude", self.weekly_amplitude),
            ("wave_rate", self.wave_rate),
            ("wave_amplitude", self.wave_amplitude),
            ("missing_rate", self.missing_rate),
            ("default_rate", self.default_rate),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.n_weeks < 3 {
            return Err(Error::Validation(format!(
                "n_weeks = {} but at least 3 are needed",
                self.n_weeks
            )));
        }
        if self.n_links == 0 {
            return Err(Error::Validation("n_links must be positive".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Validation(format!(
                "noise_std = {} must be >= 0",
                self.noise_std
            )));
        }
        if !(self.wave_speed_kmh.is_finite() && self.wave_speed_kmh > 0.0) {
            return Err(Error::Validation("wave_speed_kmh must be positive".into()));
        }
        if !(self.wave_decay_m.is_finite() && self.wave_decay_m > 0.0) {
            return Err(Error::Validation("wave_decay_m must be positive".into()));
        }
        if self.jitter_seconds >= 900 {
            return Err(Error::Validation(
                "jitter_seconds must be below one step (900 s)".into(),
            ));
        }
        TimeAxis::new(self.start, 1)?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.n_weeks * STEPS_PER_WEEK
    }

    pub fn axis(&self) -> Result<TimeAxis> {
        TimeAxis::new(self.start, self.steps())
    }

    /// Steps a wave needs to travel `distance_m` upstream.
    pub fn wave_delay_steps(&self, distance_m: f64) -> usize {
        let metres_per_step = self.wave_speed_kmh * 1000.0 / 4.0;
        (distance_m / metres_per_step).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveEvent {
    pub link_id: LinkId,
    pub start: usize,
    pub depth: f64,
}

/// Clean speeds and injection flags, indexed like `graph.links()` then by time step.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub links: Vec<LinkId>,
    pub clean: Vec<Vec<f64>>,
    pub default_injected: Vec<Vec<bool>>,
    pub missing_injected: Vec<Vec<bool>>,
    pub waves: Vec<WaveEvent>,
}

#[derive(Serialize)]
struct GroundTruthRow {
    link_id: LinkId,
    time_index: usize,
    clean_speed: f64,
    was_default_injected: bool,
    was_missing_injected: bool,
}

impl GroundTruth {
    /// The clean speeds as a fully observed series set.
    pub fn clean_set(&self, axis: &TimeAxis) -> Result<SeriesSet> {
        SeriesSet::new(
            *axis,
            self.links
                .iter()
                .zip(&self.clean)
                .map(|(l, v)| SpeedSeries::observed(*l, v.clone())),
        )
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for (i, link) in self.links.iter().enumerate() {
            for t in 0..self.clean[i].len() {
                w.serialize(GroundTruthRow {
                    link_id: *link,
                    time_index: t,
                    clean_speed: self.clean[i][t],
                    was_default_injected: self.default_injected[i][t],
                    was_missing_injected: self.missing_injected[i][t],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub graph: RoadGraph,
    pub observations: Vec<RawObservation>,
    pub truth: GroundTruth,
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let graph = match spec.graph_kind {
        GraphKind::Ring => ring_graph(spec.n_links, &mut rng)?,
        GraphKind::Grid => grid_graph(spec.n_links, &mut rng)?,
        GraphKind::RandomPlanar => planar_graph(spec.n_links, &mut rng)?,
    };
    let axis = spec.axis()?;
    let steps = axis.count();
    let n = graph.len();

    // Weekly profile per link.
    let mut clean: Vec<Vec<f64>> = Vec::with_capacity(n);
    for l in graph.links() {
        let severity = rng.random_range(0.6..1.4);
        let shift = rng.random_range(-2.0..2.0);
        let mut week = Vec::with_capacity(STEPS_PER_WEEK);
        for t in 0..STEPS_PER_WEEK {
            let (day, slot) = (t / STEPS_PER_DAY, (t % STEPS_PER_DAY) as f64);
            let weekend = day == 0 || day == 6;
            let dips = bump(slot, 32.0 + shift, 4.0) + 0.8 * bump(slot, 70.0 + shift, 5.0);
            let scale = if weekend {
                1.0 - spec.weekly_amplitude
            } else {
                1.0
            };
            week.push(
                0.9 * l.free_flow_kmh
                    - spec.daily_amplitude * l.free_flow_kmh * severity * dips * scale,
            );
        }
        clean.push((0..steps).map(|t| week[t % STEPS_PER_WEEK]).collect());
    }

    // Congestion waves spilling back upstream.
    let max_dist = spec.wave_decay_m * (1.0 / WAVE_CUTOFF).ln();
    let reach: Vec<Vec<(usize, f64)>> = graph
        .links()
        .iter()
        .map(|l| {
            let mut r = vec![(l.link_id, 0.0)];
            r.extend(graph.reach(l.link_id, Direction::Upstream, usize::MAX, max_dist));
            r.into_iter()
                .map(|(id, d)| (position(&graph, id), d))
                .collect()
        })
        .collect();
    let mut depth = vec![vec![0.0f64; steps]; n];
    let mut waves = Vec::new();
    if spec.wave_rate > 0.0 && spec.wave_amplitude > 0.0 {
        for t in 0..steps {
            for (i, l) in graph.links().iter().enumerate() {
                if !rng.random_bool(spec.wave_rate) {
                    continue;
                }
                let a = spec.wave_amplitude * rng.random_range(0.5..1.0);
                waves.push(WaveEvent {
                    link_id: l.link_id,
                    start: t,
                    depth: a,
                });
                for &(j, dist) in &reach[i] {
                    let d = a * (-dist / spec.wave_decay_m).exp();
                    if d < WAVE_CUTOFF * a {
                        continue;
                    }
                    let begin = t + spec.wave_delay_steps(dist);
                    let end = (begin + spec.wave_duration_steps).min(steps);
                    for slot in depth[j].iter_mut().take(end).skip(begin) {
                        *slot = slot.max(d);
                    }
                }
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;
    for (i, series) in clean.iter_mut().enumerate() {
        for (t, v) in series.iter_mut().enumerate() {
            *v *= 1.0 - depth[i][t];
            if spec.noise_std > 0.0 {
                *v += noise.sample(&mut rng);
            }
            *v = v.max(0.5);
        }
    }

    // Emitted feed with injected gaps and placeholders.
    let mut observations = Vec::with_capacity(n * steps);
    let mut default_injected = vec![vec![false; steps]; n];
    let mut missing_injected = vec![vec![false; steps]; n];
    for (i, l) in graph.links().iter().enumerate() {
        let mut default_left = 0usize;
        for t in 0..steps {
            if default_left == 0 && spec.default_rate > 0.0 && rng.random_bool(spec.default_rate) {
                default_left = rng.random_range(DEFAULT_RUN.0..=DEFAULT_RUN.1);
            }
            let is_default = default_left > 0;
            default_left = default_left.saturating_sub(1);
            if spec.missing_rate > 0.0 && rng.random_bool(spec.missing_rate) {
                missing_injected[i][t] = true;
                continue;
            }
            let jitter = if spec.jitter_seconds > 0 {
                rng.random_range(0..=spec.jitter_seconds)
            } else {
                0
            };
            let speed = if is_default {
                default_injected[i][t] = true;
                l.free_flow_kmh
            } else {
                clean[i][t]
            };
            observations.push(RawObservation {
                link_id: l.link_id,
                timestamp: axis.timestamp(t)? + Duration::seconds(jitter as i64),
                speed_kmh: speed,
            });
        }
    }

    let truth = GroundTruth {
        links: graph.links().iter().map(|l| l.link_id).collect(),
        clean,
        default_injected,
        missing_injected,
        waves,
    };
    Ok(Synthetic {
        graph,
        observations,
        truth,
    })
}

fn position(graph: &RoadGraph, id: LinkId) -> usize {
    graph
        .links()
        .iter()
        .position(|l| l.link_id == id)
        .expect("link from the same graph")
}

/// Gaussian bump on the circular day, in slots.
fn bump(slot: f64, centre: f64, width: f64) -> f64 {
    let day = STEPS_PER_DAY as f64;
    let mut d = (slot - centre).rem_euclid(day);
    if d > day / 2.0 {
        d -= day;
    }
    (-0.5 * (d / width).powi(2)).exp()
}

fn link(id: usize, from: usize, to: usize, length_m: f64, free_flow_kmh: f64) -> LinkRecord {
    LinkRecord {
        link_id: LinkId(id as u64 + 1),
        from_node: NodeId(from as u64),
        to_node: NodeId(to as u64),
        length_m,
        free_flow_kmh,
    }
}

fn free_flow(rng: &mut ChaCha8Rng) -> f64 {
    FREE_FLOW_CLASSES[rng.random_range(0..FREE_FLOW_CLASSES.len())]
}

fn ring_graph(n: usize, rng: &mut ChaCha8Rng) -> Result<RoadGraph> {
    let links = (0..n)
        .map(|i| {
            let len = rng.random_range(200.0..800.0);
            link(i, i, (i + 1) % n, len, free_flow(rng))
        })
        .collect();
    RoadGraph::new(links)
}

/// Undirected edges of an s x s lattice, ordered so that truncation keeps a
/// compact, connected corner of the grid.
fn lattice_edges(s: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..s {
        for c in 0..s {
            let node = r * s + c;
            if c + 1 < s {
                edges.push((node, node + 1));
            }
            if r + 1 < s {
                edges.push((node, node + s));
            }
        }
    }
    edges.sort_by_key(|&(a, b)| {
        let ring = |v: usize| (v / s).max(v % s);
        (ring(a).max(ring(b)), a, b)
    });
    edges
}

fn grid_graph(n: usize, rng: &mut ChaCha8Rng) -> Result<RoadGraph> {
    let mut s = 2;
    while 4 * s * (s - 1) < n {
        s += 1;
    }
    let mut links = Vec::with_capacity(n);
    'outer: for (a, b) in lattice_edges(s) {
        let ff = free_flow(rng);
        for (from, to) in [(a, b), (b, a)] {
            if links.len() == n {
                break 'outer;
            }
            links.push(link(links.len(), from, to, GRID_SPACING_M, ff));
        }
    }
    RoadGraph::new(links)
}

/// Jittered lattice with a random subset of its edges and cell diagonals.
/// Node jitter stays below a third of the spacing, so edges never cross.
fn planar_graph(n: usize, rng: &mut ChaCha8Rng) -> Result<RoadGraph> {
    let mut s = 2;
    while 2 * (2 * s * (s - 1) + (s - 1) * (s - 1)) < n + n / 3 {
        s += 1;
    }
    let pos: Vec<(f64, f64)> = (0..s * s)
        .map(|v| {
            let (r, c) = ((v / s) as f64, (v % s) as f64);
            (
                c + rng.random_range(-0.3..0.3),
                r + rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    let mut edges = lattice_edges(s);
    for r in 0..s - 1 {
        for c in 0..s - 1 {
            let v = r * s + c;
            if rng.random_bool(0.5) {
                edges.push((v, v + s + 1));
            } else {
                edges.push((v + 1, v + s));
            }
        }
    }
    edges.shuffle(rng);
    let mut links = Vec::with_capacity(n);
    'outer: for (a, b) in edges {
        let ff = free_flow(rng);
        let (dx, dy) = (pos[a].0 - pos[b].0, pos[a].1 - pos[b].1);
        let len = (dx * dx + dy * dy).sqrt() * GRID_SPACING_M;
        for (from, to) in [(a, b), (b, a)] {
            if links.len() == n {
                break 'outer;
            }
            links.push(link(links.len(), from, to, len, ff));
        }
    }
    RoadGraph::new(links)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(kind: GraphKind) -> SynthSpec {
        SynthSpec {
            n_links: 12,
            graph_kind: kind,
            n_weeks: 3,
            wave_rate: 0.0,
            noise_std: 0.0,
            missing_rate: 0.0,
            default_rate: 0.0,
            jitter_seconds: 0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_series_is_weekly_periodic() {
        let syn = generate_synthetic(&quiet(GraphKind::Grid)).unwrap();
        for series in &syn.truth.clean {
            for t in STEPS_PER_WEEK..series.len() {
                assert_eq!(series[t], series[t - STEPS_PER_WEEK]);
            }
        }
        assert_eq!(syn.observations.len(), 12 * 3 * STEPS_PER_WEEK);
    }

    #[test]
    fn same_seed_same_output() {
        let spec = SynthSpec {
            n_links: 10,
            n_weeks: 3,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.graph.links(), b.graph.links());
        assert_eq!(a.truth.clean, b.truth.clean);
    }

    #[test]
    fn graph_kinds_have_requested_size() {
        for kind in [GraphKind::Grid, GraphKind::Ring, GraphKind::RandomPlanar] {
            for n in [1usize, 7, 60] {
                let spec = SynthSpec {
                    n_links: n,
                    ..quiet(kind)
                };
                let syn = generate_synthetic(&spec).unwrap();
                assert_eq!(syn.graph.len(), n, "{kind:?} {n}");
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_synthetic(&SynthSpec {
            missing_rate: 1.5,
            ..SynthSpec::default()
        })
        .is_err());
        assert!(generate_synthetic(&SynthSpec {
            n_weeks: 2,
            ..SynthSpec::default()
        })
        .is_err());
    }

    #[test]
    fn wave_reaches_upstream_neighbour_after_travel_time() {
        let spec = SynthSpec {
            n_links: 30,
            graph_kind: GraphKind::Ring,
            daily_amplitude: 0.0,
            wave_rate: 0.0001,
            wave_speed_kmh: 0.8,
            wave_duration_steps: 3,
            ..quiet(GraphKind::Ring)
        };
        let syn = generate_synthetic(&spec).unwrap();
        let base = |i: usize| 0.9 * syn.graph.links()[i].free_flow_kmh;
        let mut checked = 0;
        for w in &syn.truth.waves {
            let a = position(&syn.graph, w.link_id);
            // on a ring the single upstream link has index a - 1
            let up = (a + spec.n_links - 1) % spec.n_links;
            let delay = spec.wave_delay_steps(syn.graph.links()[up].length_m);
            let quiet_before = syn
                .truth
                .waves
                .iter()
                .all(|o| o == w || o.start + 100 < w.start || o.start > w.start + 100);
            if !quiet_before || w.start + delay + 1 >= spec.steps() || w.start + delay == 0 {
                continue;
            }
            let series = &syn.truth.clean[up];
            assert!(
                series[w.start + delay] < base(up) - 1e-9,
                "dip expected at t + {delay}"
            );
            assert_eq!(series[w.start + delay - 1], base(up));
            checked += 1;
        }
        assert!(checked > 0);
    }
}
