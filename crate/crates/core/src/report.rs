//! Result tables, training-curve logs and SVG charts.

use crate::bench::{EvalCell, EvalMatrix, EvalRecord};
use crate::coevo::GenerationMetrics;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no results for layout `{0}`")]
    NoResults(String),
    #[error("missing result for method `{method}` with partner `{partner}`")]
    Incomplete { method: String, partner: String },
}

pub const RESULTS_HEADER: [&str; 6] = ["layout", "partner", "method", "seed", "mean", "std"];

fn to_string(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// One row per (layout, partner, method, seed); the header is always written.
pub fn results_csv(records: &[EvalRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for r in records {
        w.serialize(r).expect("in-memory write");
    }
    to_string(w)
}

pub fn parse_results_csv(text: &str) -> Result<Vec<EvalRecord>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<EvalRecord>, _>>()?)
}

/// Rebuilds the matrix of one layout from per-seed records. Pooling assumes
/// every seed ran the same number of episodes. Rows and columns keep their
/// first-seen order.
pub fn matrix_from_records(layout: &str, records: &[EvalRecord]) -> Result<EvalMatrix, ReportError> {
    let rows: Vec<&EvalRecord> = records.iter().filter(|r| r.layout == layout).collect();
    if rows.is_empty() {
        return Err(ReportError::NoResults(layout.to_string()));
    }
    let mut methods: Vec<String> = Vec::new();
    let mut partners: Vec<String> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !partners.contains(&r.partner) {
            partners.push(r.partner.clone());
        }
    }
    let mut cells = Vec::with_capacity(methods.len());
    for m in &methods {
        let mut row = Vec::with_capacity(partners.len());
        for p in &partners {
            let group: Vec<&&EvalRecord> = rows.iter().filter(|r| &r.method == m && &r.partner == p).collect();
            if group.is_empty() {
                return Err(ReportError::Incomplete { method: m.clone(), partner: p.clone() });
            }
            let n = group.len() as f64;
            let mean = group.iter().map(|r| r.mean).sum::<f64>() / n;
            let second = group.iter().map(|r| r.std * r.std + r.mean * r.mean).sum::<f64>() / n;
            row.push(EvalCell { mean, std: (second - mean * mean).max(0.0).sqrt() });
        }
        cells.push(row);
    }
    Ok(EvalMatrix {
        layout: layout.to_string(),
        methods,
        partners,
        cells,
        records: rows.into_iter().cloned().collect(),
    })
}

/// Per-generation training log.
pub fn metrics_csv(metrics: &[GenerationMetrics]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "generation",
        "mean_reward",
        "agent_diversity",
        "partner_diversity",
        "archive_size",
        "added",
        "replaced",
        "rejected",
        "env_steps",
    ])
    .expect("in-memory write");
    for m in metrics {
        w.serialize(m).expect("in-memory write");
    }
    to_string(w)
}

/// Mean training curve of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub method: String,
    /// `(generation, mean reward)`
    pub points: Vec<(f64, f64)>,
}

/// Average of the per-seed reward curves, cut to the shortest run.
pub fn mean_curve(method: &str, runs: &[Vec<GenerationMetrics>]) -> Curve {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let points = (0..len)
        .map(|g| {
            let mean = runs.iter().map(|r| r[g].mean_reward).sum::<f64>() / runs.len() as f64;
            (runs[0][g].generation as f64, mean)
        })
        .collect();
    Curve { method: method.to_string(), points }
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["method", "generation", "mean_reward"]).expect("in-memory write");
    for c in curves {
        for (g, r) in &c.points {
            w.serialize((&c.method, g, r)).expect("in-memory write");
        }
    }
    to_string(w)
}

const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static line chart, one polyline per curve, with axes and a legend.
pub fn curves_svg(title: &str, curves: &[Curve]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let mut line = |t: String| {
        s.push_str(&t);
        s.push('\n');
    };
    line(format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#));
    line(format!(r#"<rect width="{w}" height="{h}" fill="white"/>"#));
    line(format!(
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        (w - right + left) / 2.0,
        escape(title)
    ));
    line(format!(
        r#"<g stroke="black" stroke-width="1"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        h - bottom,
        w - right,
        h - bottom,
        h - bottom
    ));
    for i in 0..=4 {
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        line(format!(
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{fy:.0}</text>"#,
            left - 6.0,
            sy(fy) + 4.0
        ));
        line(format!(
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{fx:.0}</text>"#,
            sx(fx),
            h - bottom + 16.0
        ));
    }
    line(format!(
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">generation</text>"#,
        (w - right + left) / 2.0,
        h - 12.0
    ));
    line(format!(
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">mean reward</text>"#,
        (h - bottom + top) / 2.0,
        (h - bottom + top) / 2.0
    ));
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = c.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        line(format!(
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        ));
        let ly = top + 16.0 * i as f64;
        line(format!(
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 36.0,
            ly + 4.0,
            escape(&c.method)
        ));
    }
    line("</svg>".to_string());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, partner: &str, seed: u64, mean: f64, std: f64) -> EvalRecord {
        EvalRecord { layout: "cr".into(), partner: partner.into(), method: method.into(), seed, mean, std }
    }

    #[test]
    fn empty_results_give_header_only() {
        assert_eq!(results_csv(&[]), "layout,partner,method,seed,mean,std\n");
    }

    #[test]
    fn results_round_trip() {
        let rs = vec![rec("maze", "scripted (human-proxy substitute)", 1000, 130.4, 19.0), rec("sp", "x, y", 2000, 0.1, 0.0)];
        assert_eq!(parse_results_csv(&results_csv(&rs)).unwrap(), rs);
    }

    #[test]
    fn pooled_cell_matches_direct_pooling() {
        // Seeds with returns [10, 30] and [50, 50].
        let rs = vec![rec("m", "p", 1, 20.0, 10.0), rec("m", "p", 2, 50.0, 0.0)];
        let m = matrix_from_records("cr", &rs).unwrap();
        let all = [10.0f64, 30.0, 50.0, 50.0];
        let mean = all.iter().sum::<f64>() / 4.0;
        let std = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((m.cells[0][0].mean - mean).abs() < 1e-12);
        assert!((m.cells[0][0].std - std).abs() < 1e-12);
    }

    #[test]
    fn single_cell_table() {
        let m = matrix_from_records("cr", &[rec("maze", "random", 1000, 130.4, 19.0)]).unwrap();
        assert!(m.render_table().contains("130.4 ± 19.0"));
    }

    #[test]
    fn missing_cell_is_an_error() {
        let rs = vec![rec("a", "p", 1, 1.0, 0.0), rec("b", "q", 1, 1.0, 0.0)];
        assert!(matches!(matrix_from_records("cr", &rs), Err(ReportError::Incomplete { .. })));
    }

    #[test]
    fn two_curves_two_polylines() {
        let c = |m: &str| Curve { method: m.into(), points: vec![(1.0, 0.0), (2.0, 20.0), (3.0, 15.0)] };
        let svg = curves_svg("fc", &[c("sp"), c("v-maze")]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn mean_curve_averages_seeds() {
        let m = |g, r| GenerationMetrics { generation: g, mean_reward: r, ..Default::default() };
        let c = mean_curve("sp", &[vec![m(1, 0.0), m(2, 20.0)], vec![m(1, 10.0), m(2, 40.0), m(3, 60.0)]]);
        assert_eq!(c.points, vec![(1.0, 5.0), (2.0, 30.0)]);
        assert_eq!(curves_csv(&[c]), "method,generation,mean_reward\nsp,1.0,5.0\nsp,2.0,30.0\n");
    }

    #[test]
    fn metrics_header_matches_fields() {
        let text = metrics_csv(&[GenerationMetrics::default()]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), lines.next().unwrap().split(',').count());
    }
}
