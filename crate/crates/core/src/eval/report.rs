use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::BenchmarkOutput;
use crate::pipeline::format_utc;
use crate::roadnet::SeriesSet;

pub const REPORT_CSV_HEADER_PREFIX: &str = "method";

/// Paths written by [`write_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub markdown: PathBuf,
    pub csv: PathBuf,
    pub json: PathBuf,
    pub predictions: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn markdown(out: &BenchmarkOutput) -> String {
    let r = &out.report;
    let mut s = String::new();
    let _ = writeln!(s, "# Benchmark\n");
    let _ = writeln!(
        s,
        "Seed {}, {} sampled links, {} test origins, horizon {} steps.\n",
        r.seed,
        r.sampled_links.len(),
        r.test_origins,
        r.h
    );
    let _ = writeln!(s, "## RMSE (km/h) per horizon step\n");
    let _ = write!(s, "| Method |");
    for k in 1..=r.h {
        let _ = write!(s, " h{k} |");
    }
    let _ = write!(s, "\n|---|");
    for _ in 0..r.h {
        let _ = write!(s, "---:|");
    }
    s.push('\n');
    for m in &r.results {
        let _ = write!(s, "| {} |", m.label);
        for v in &m.rmse_h {
            let _ = write!(s, " {v:.3} |");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\n## Training cost\n");
    let _ = writeln!(
        s,
        "| Method | Train time per model (s) | Size per model (bytes) | Models | # of models |"
    );
    let _ = writeln!(s, "|---|---:|---:|---:|---|");
    for m in &r.results {
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.0} | {} | {} |",
            m.label, m.train_time_s, m.size_bytes, m.model_count, m.model_count_class
        );
    }
    s
}

fn svg_chart(title: &str, times: &[String], lines: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 900.0;
    const H: f64 = 360.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 9] = [
        "#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
        "#17becf",
    ];
    let all = lines.iter().flat_map(|l| l.1.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    };
    let n = times.len().max(2);
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="14">{title}</text>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="gray"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="gray"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="5" y="{:.1}" font-family="sans-serif" font-size="10">{hi:.0}</text>"#,
        y(hi) + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="5" y="{:.1}" font-family="sans-serif" font-size="10">{lo:.0}</text>"#,
        y(lo)
    );
    if let (Some(first), Some(last)) = (times.first(), times.last()) {
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{:.1}" font-family="sans-serif" font-size="10">{first}</text>"#,
            H - PAD + 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{last}</text>"#,
            W - PAD,
            H - PAD + 15.0
        );
    }
    for (j, (name, vals)) in lines.iter().enumerate() {
        let c = COLORS[j % COLORS.len()];
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.1},{:.1}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{c}">{name}</text>"#,
            W - PAD + 5.0,
            PAD + 14.0 * j as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the Markdown and CSV tables, `report.json`, one prediction CSV per
/// method and plot data for the first sampled link.
pub fn write_report(
    dir: impl AsRef<Path>,
    out: &BenchmarkOutput,
    set: &SeriesSet,
) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let r = &out.report;
    let axis = set.axis();
    let mut files = ReportFiles {
        markdown: dir.join("report.md"),
        csv: dir.join("report.csv"),
        json: dir.join("report.json"),
        ..Default::default()
    };
    fs::write(&files.markdown, markdown(out))?;

    let mut w = csv_writer(&files.csv)?;
    let mut header = vec![REPORT_CSV_HEADER_PREFIX.to_string()];
    header.extend((1..=r.h).map(|k| format!("h{k}")));
    header.extend(["train_time_s", "size_bytes", "model_count_class"].map(String::from));
    w.write_record(&header)?;
    for m in &r.results {
        let mut row = vec![m.label.clone()];
        row.extend(m.rmse_h.iter().map(|v| v.to_string()));
        row.push(m.train_time_s.to_string());
        row.push(m.size_bytes.to_string());
        row.push(m.model_count_class.clone());
        w.write_record(&row)?;
    }
    w.flush()?;

    let json = serde_json::to_string_pretty(r).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&files.json, json + "\n")?;

    let stamps: Vec<String> = out
        .origins
        .iter()
        .map(|&t| axis.timestamp(t).map(format_utc))
        .collect::<Result<_>>()?;
    for (m, table) in &out.forecasts {
        let path = dir.join(format!("predictions_{}.csv", m.name()));
        let mut w = csv_writer(&path)?;
        w.write_record(["link_id", "origin_time", "h", "predicted_kmh"])?;
        for &l in &r.sampled_links {
            for (&t, stamp) in out.origins.iter().zip(&stamps) {
                let p = &table[&(l, t)];
                for (k, v) in p.iter().enumerate() {
                    w.write_record([
                        l.to_string(),
                        stamp.clone(),
                        (k + 1).to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        files.predictions.push(path);
    }

    if let Some(&link) = r.sampled_links.first() {
        let k = out.plot_step;
        let truth = set.values(link)?;
        let times: Vec<String> = out
            .origins
            .iter()
            .map(|&t| axis.timestamp(t + k).map(format_utc))
            .collect::<Result<_>>()?;
        let truth_line: Vec<f64> = out.origins.iter().map(|&t| truth[t + k]).collect();
        let mut lines = vec![("truth".to_string(), truth_line.clone())];
        for (m, table) in &out.forecasts {
            let pred: Vec<f64> = out
                .origins
                .iter()
                .map(|&t| table[&(link, t)][k - 1])
                .collect();
            let path = dir.join(format!("plot_{}.csv", m.name()));
            let mut w = csv_writer(&path)?;
            w.write_record(["time", "truth", "predicted"])?;
            for ((ts, tv), pv) in times.iter().zip(&truth_line).zip(&pred) {
                w.write_record([ts.clone(), tv.to_string(), pv.to_string()])?;
            }
            w.flush()?;
            files.plots.push(path);
            lines.push((m.label().to_string(), pred));
        }
        let svg = dir.join("plot.svg");
        fs::write(
            &svg,
            svg_chart(
                &format!("Link {link}, {k}-step-ahead forecasts"),
                &times,
                &lines,
            ),
        )?;
        files.svg = Some(svg);
    }
    Ok(files)
}
