//! Experiment files: per-run and aggregate CSVs, plot data, SVG chart and
//! metadata. Everything is written in a fixed order so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{loglog_slope, ExperimentConfig, ExperimentResult, SlopeFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub mean_regret: f64,
    pub stderr: f64,
    pub replications: usize,
    pub oracle_gain: f64,
    pub seed_base: u64,
}

#[derive(Serialize)]
struct RunRow<'a> {
    algorithm: &'a str,
    replication: usize,
    #[serde(rename = "T")]
    t: usize,
    regret: f64,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    algorithm: &'a str,
    #[serde(rename = "T")]
    t: usize,
    log_t: f64,
    mean_regret: f64,
    log_mean_regret: Option<f64>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    oracle: crate::harness::OracleReport,
    memoryless_gain: f64,
    slopes: BTreeMap<&'a str, Option<SlopeFit>>,
    failures: &'a [crate::harness::ReplicationFailure],
    note: &'static str,
}

pub(crate) fn aggregate_rows(
    config: &ExperimentConfig,
    result: &ExperimentResult,
) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for c in &result.curves {
        for (h, &t) in c.horizons.iter().enumerate() {
            rows.push(AggregateRow {
                algorithm: c.algorithm.name().to_string(),
                t,
                mean_regret: c.mean(h),
                stderr: c.stderr(h),
                replications: c.regret.len(),
                oracle_gain: c.oracle_gain,
                seed_base: config.base_seed,
            });
        }
    }
    rows
}

pub(crate) fn write_all(config: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    let dir = &result.output_dir;
    std::fs::create_dir_all(dir)?;

    let mut runs = csv::Writer::from_path(dir.join("runs.csv"))?;
    for c in &result.curves {
        for (rep, regret) in c.replications.iter().zip(&c.regret) {
            for (&t, &r) in c.horizons.iter().zip(regret) {
                runs.serialize(RunRow {
                    algorithm: c.algorithm.name(),
                    replication: *rep,
                    t,
                    regret: r,
                })?;
            }
        }
    }
    runs.flush()?;

    let mut agg = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    for row in aggregate_rows(config, result) {
        agg.serialize(row)?;
    }
    agg.flush()?;

    let mut plot = csv::Writer::from_path(dir.join("plot.csv"))?;
    let mut slopes = BTreeMap::new();
    for c in &result.curves {
        for (h, &t) in c.horizons.iter().enumerate() {
            let m = c.mean(h);
            plot.serialize(PlotRow {
                algorithm: c.algorithm.name(),
                t,
                log_t: (t as f64).ln(),
                mean_regret: m,
                log_mean_regret: (m > 0.0).then(|| m.ln()),
            })?;
        }
        slopes.insert(c.algorithm.name(), loglog_slope(&c.points()).ok());
    }
    plot.flush()?;

    let series: Vec<(String, Vec<(f64, f64)>)> = result
        .curves
        .iter()
        .map(|c| (c.algorithm.name().to_string(), c.points()))
        .collect();
    std::fs::write(dir.join("regret.svg"), svg_chart(&series))?;

    let meta = Metadata {
        config,
        oracle: result.oracle,
        memoryless_gain: result.memoryless_gain,
        slopes,
        failures: &result.failures,
        note: "all horizons of a replication are read off one trajectory",
    };
    std::fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(())
}

/// Parses an aggregate CSV.
pub fn read_aggregate<R: Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<AggregateRow>, _>>()?;
    Ok(rows)
}

pub fn read_aggregate_file(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    read_aggregate(std::fs::File::open(path)?)
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Log-log line chart of positive points, one polyline per series.
pub fn svg_chart(series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let logs: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter())
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.log10(), p.1.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if logs.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = logs.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = logs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">log10 T</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">log10 mean regret</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0)
            .map(|p| format!("{:.2},{:.2}", sx(p.0.log10()), sy(p.1.log10())))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13" fill="{color}">{name}</text>"#,
            pad + 10.0,
            pad + 16.0 * (k as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_round_trip() {
        let text = "algorithm,T,mean_regret,stderr,replications,oracle_gain,seed_base\n\
                    seeu,100,12.5,1.25,30,3.1,7\n";
        let rows = read_aggregate(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].t, 100);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&rows[0]).unwrap();
        assert_eq!(String::from_utf8(w.into_inner().unwrap()).unwrap(), text);
    }

    #[test]
    fn chart_has_one_line_per_series() {
        let s = vec![
            ("a".to_string(), vec![(10.0, 1.0), (100.0, 5.0)]),
            ("b".to_string(), vec![(10.0, 2.0), (100.0, 20.0)]),
        ];
        let svg = svg_chart(&s);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }
}
