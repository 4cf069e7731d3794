//! Report files for a campaign: CSV tables and a static SVG chart.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::campaign::CampaignResult;
use crate::metrics::{accuracy_exact, dominance_exact, incon_by_round_exact, percent_2dp, syn_hard_k, syn_soft_k, MetricError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report style {0:?} (expected summary_table, round_series or dominance_table)")]
    UnknownStyle(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStyle {
    SummaryTable,
    RoundSeries,
    DominanceTable,
}

impl ReportStyle {
    pub const ALL: [ReportStyle; 3] = [ReportStyle::SummaryTable, ReportStyle::RoundSeries, ReportStyle::DominanceTable];

    pub fn name(self) -> &'static str {
        match self {
            ReportStyle::SummaryTable => "summary_table",
            ReportStyle::RoundSeries => "round_series",
            ReportStyle::DominanceTable => "dominance_table",
        }
    }
}

impl FromStr for ReportStyle {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportStyle::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| ReportError::UnknownStyle(s.to_string()))
    }
}

fn status(c: &CampaignResult) -> &'static str {
    if c.partial() {
        "partial"
    } else {
        "done"
    }
}

/// Header and one row: each participant's accuracy, Syn-Soft, Syn-Hard and
/// the debate's accuracy, as percentages.
pub fn summary_table(c: &CampaignResult) -> Result<String, ReportError> {
    let ds = c.completed_dataset();
    let sets = c.initial_predictions();
    let mut header = vec!["dataset".to_string()];
    let mut row = vec![c.dataset.name.clone()];
    for p in &sets {
        header.push(format!("{}_accuracy", p.model_id));
        row.push(percent_2dp(accuracy_exact(p, &ds)?));
    }
    header.extend(["syn_soft", "syn_hard", "ford", "status"].map(String::from));
    row.push(percent_2dp(syn_soft_k(&sets, &ds)?));
    row.push(percent_2dp(syn_hard_k(&sets, &ds)?));
    row.push(percent_2dp(accuracy_exact(&c.ford_predictions(), &ds)?));
    row.push(status(c).to_string());
    Ok(format!("{}\n{}\n", header.join(","), row.join(",")))
}

/// Stance disagreement after each round, 0 being the initial answers.
pub fn round_series_csv(c: &CampaignResult) -> Result<String, ReportError> {
    let series = incon_by_round_exact(&c.histories(), c.max_rounds)?;
    let mut out = String::from("round,incon\n");
    for (r, v) in series.iter().enumerate() {
        writeln!(out, "{r},{}", percent_2dp(*v)).unwrap();
    }
    Ok(out)
}

/// Line chart of percentages against round.
pub fn round_series_svg(points: &[(usize, f64)], title: &str) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (56.0, 16.0, 32.0, 44.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let max_round = points.iter().map(|p| p.0).max().unwrap_or(0).max(1) as f64;
    let x = |r: usize| left + pw * r as f64 / max_round;
    let y = |v: f64| top + ph * (1.0 - v / 100.0);
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title)).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + ph, left + pw, top + ph).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph).unwrap();
    for pct in [0u32, 25, 50, 75, 100] {
        let yy = y(pct as f64);
        writeln!(s, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{pct}</text>"#, left - 6.0, yy + 3.0).unwrap();
    }
    for &(r, _) in points {
        writeln!(s, r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{r}</text>"#, x(r), top + ph + 14.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">round</text>"#, left + pw / 2.0, h - 8.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">INCON (%)</text>"#, top + ph / 2.0, top + ph / 2.0).unwrap();
    let pts: Vec<String> = points.iter().map(|&(r, v)| format!("{:.2},{:.2}", x(r), y(v))).collect();
    writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, pts.join(" ")).unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per participant, the share of debated examples concluded on its initial stance.
pub fn dominance_table(c: &CampaignResult) -> Result<String, ReportError> {
    let dom = dominance_exact(&c.outcomes())?;
    let mut out = String::from("participant,dominance,status\n");
    for id in &c.roster {
        let v = dom.get(id).copied().unwrap_or_default();
        writeln!(out, "{id},{},{}", percent_2dp(v), status(c)).unwrap();
    }
    Ok(out)
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf, ReportError> {
    std::fs::write(&path, body).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes one report style into `dir`, returning the files written.
pub fn emit_report(c: &CampaignResult, style: ReportStyle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    Ok(match style {
        ReportStyle::SummaryTable => vec![write(dir.join("summary_table.csv"), &summary_table(c)?)?],
        ReportStyle::RoundSeries => {
            let csv = round_series_csv(c)?;
            let exact = incon_by_round_exact(&c.histories(), c.max_rounds)?;
            let points: Vec<(usize, f64)> =
                exact.iter().enumerate().map(|(r, v)| (r, percent_2dp(*v).parse().expect("decimal"))).collect();
            let title = format!("{}: disagreement by round", c.dataset.name);
            vec![
                write(dir.join("round_series.csv"), &csv)?,
                write(dir.join("round_series.svg"), &round_series_svg(&points, &title))?,
            ]
        }
        ReportStyle::DominanceTable => vec![write(dir.join("dominance_table.csv"), &dominance_table(c)?)?],
    })
}
