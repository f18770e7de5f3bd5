use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use log::warn;

use crate::error::{Error, Result};
use crate::roadnet::{LinkId, SPEED_CEILING_KMH};

pub const OBSERVATION_HEADER: [&str; 3] = ["segment_id", "timestamp_utc", "speed_kmh"];

/// Share of malformed rows above which ingestion fails.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

/// One raw speed reading; timestamps need not be on the 15-minute grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawObservation {
    pub link_id: LinkId,
    pub timestamp: DateTime<Utc>,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub observations: Vec<RawObservation>,
    pub rows: usize,
    pub malformed: usize,
    pub warnings: Vec<String>,
}

/// Parses `2018-10-21T00:00:00Z`, `2018-10-21T00:00Z` and other RFC 3339 forms ending in `Z`.
pub fn parse_utc(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if !s.ends_with('Z') {
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%MZ")
        .ok()
        .map(|n| n.and_utc())
}

pub fn format_utc(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn parse_row(record: &csv::StringRecord) -> Option<RawObservation> {
    if record.len() != 3 {
        return None;
    }
    let link_id = record[0].trim().parse::<u64>().ok()?;
    let timestamp = parse_utc(&record[1])?;
    let speed_kmh = record[2].trim().parse::<f64>().ok()?;
    if !speed_kmh.is_finite() || !(0.0..=SPEED_CEILING_KMH).contains(&speed_kmh) {
        return None;
    }
    Some(RawObservation {
        link_id: LinkId(link_id),
        timestamp,
        speed_kmh,
    })
}

/// Reads an observations CSV, keeping file order and counting rejected rows.
pub fn ingest_reader<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut out = Ingested::default();
    match records.next() {
        None => {
            out.warnings.push("observation file is empty".into());
            warn!("observation file is empty");
            return Ok(out);
        }
        Some(header) => {
            let header = header?;
            if header.iter().map(str::trim).collect::<Vec<_>>() != OBSERVATION_HEADER {
                return Err(Error::Validation(format!(
                    "observation header must be `{}`",
                    OBSERVATION_HEADER.join(",")
                )));
            }
        }
    }
    for record in records {
        out.rows += 1;
        match record.ok().as_ref().and_then(parse_row) {
            Some(obs) => out.observations.push(obs),
            None => out.malformed += 1,
        }
    }
    if out.rows == 0 {
        out.warnings
            .push("observation file has no data rows".into());
        warn!("observation file has no data rows");
    }
    if out.malformed > 0 {
        let msg = format!(
            "{} of {} rows malformed and skipped",
            out.malformed, out.rows
        );
        warn!("{msg}");
        out.warnings.push(msg);
    }
    if out.rows > 0 && out.malformed as f64 / out.rows as f64 > MAX_MALFORMED_FRACTION {
        return Err(Error::Validation(format!(
            "{} of {} observation rows are malformed (limit {:.0}%)",
            out.malformed,
            out.rows,
            MAX_MALFORMED_FRACTION * 100.0
        )));
    }
    Ok(out)
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    ingest_reader(std::fs::File::open(path)?)
}

pub fn write_observations<W: Write>(writer: W, obs: &[RawObservation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(OBSERVATION_HEADER)?;
    for o in obs {
        w.write_record([
            o.link_id.to_string(),
            format_utc(o.timestamp),
            o.speed_kmh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "segment_id,timestamp_utc,speed_kmh\n";

    #[test]
    fn well_formed_rows_in_order() {
        let body = format!(
            "{HEADER}5,2018-07-22T00:07:00Z,20\n5,2018-07-22T00:22:00Z,30.5\n3,2018-07-22T00:00Z,12\n"
        );
        let got = ingest_reader(body.as_bytes()).unwrap();
        assert_eq!(got.observations.len(), 3);
        assert_eq!(got.malformed, 0);
        assert_eq!(got.observations[1].speed_kmh, 30.5);
        assert_eq!(got.observations[2].link_id, LinkId(3));
    }

    #[test]
    fn negative_speed_is_counted_and_rejected() {
        let mut body = String::from(HEADER);
        for i in 0..200 {
            body.push_str(&format!("1,2018-07-22T00:{:02}:00Z,10\n", i % 60));
        }
        body.push_str("1,2018-07-22T01:00:00Z,-3\n");
        let got = ingest_reader(body.as_bytes()).unwrap();
        assert_eq!(got.malformed, 1);
        assert_eq!(got.observations.len(), 200);
    }

    #[test]
    fn too_many_malformed_rows_fail() {
        let body = format!("{HEADER}1,2018-07-22T00:00:00Z,10\nx,y,z\n");
        assert!(matches!(
            ingest_reader(body.as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn empty_file_warns() {
        let got = ingest_reader("".as_bytes()).unwrap();
        assert!(got.observations.is_empty());
        assert_eq!(got.warnings.len(), 1);
    }

    #[test]
    fn timestamps_require_z() {
        assert!(parse_utc("2018-07-22T00:00:00+02:00").is_none());
        assert!(parse_utc("2018-07-22T00:00:00Z").is_some());
        assert_eq!(
            parse_utc("2018-10-21T00:00Z"),
            parse_utc("2018-10-21T00:00:00Z")
        );
    }

    #[test]
    fn write_then_read() {
        let obs = vec![RawObservation {
            link_id: LinkId(9),
            timestamp: parse_utc("2018-07-22T00:15:00Z").unwrap(),
            speed_kmh: 1.0 / 3.0,
        }];
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        let back = ingest_reader(buf.as_slice()).unwrap();
        assert_eq!(back.observations, obs);
    }
}
