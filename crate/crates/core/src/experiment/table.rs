//! CSV and SVG output.
//!
//! Every CSV starts with the line `# langevin-perturb v1`, then a header row. Numbers use
//! Rust's shortest round-trip formatting, missing values are empty fields and lines end
//! in `\n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matkit::Matrix;

pub const CSV_MAGIC: &str = "# langevin-perturb v1";

pub const SWEEP_COLUMNS: [&str; 8] = [
    "gamma",
    "mu",
    "nu",
    "replications",
    "estimator_mean",
    "estimator_std",
    "analytic_sigma2",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Failed => "failed",
        }
    }
}

/// One `(γ, μ)` grid point. `replications` counts the trajectories that finished.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
    pub replications: usize,
    pub estimator_mean: Option<f64>,
    pub estimator_std: Option<f64>,
    pub analytic_sigma2: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("csv line {line}: {msg}"))
}

fn parse_num(line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| csv_err(line, format!("'{s}' is not a number")))
}

fn parse_opt(line: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_num(line, s).map(Some)
    }
}

impl SweepTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.status == RowStatus::Failed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_MAGIC}\n{}\n", SWEEP_COLUMNS.join(","));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.gamma,
                r.mu,
                r.nu,
                r.replications,
                opt(r.estimator_mean),
                opt(r.estimator_std),
                opt(r.analytic_sigma2),
                r.status.as_str()
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        if lines.next() != Some(CSV_MAGIC) {
            return Err(csv_err(1, "missing version line"));
        }
        if lines.next() != Some(SWEEP_COLUMNS.join(",").as_str()) {
            return Err(csv_err(2, "unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 3;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != SWEEP_COLUMNS.len() {
                return Err(csv_err(n, format!("expected {} fields", SWEEP_COLUMNS.len())));
            }
            rows.push(SweepRow {
                gamma: parse_num(n, f[0])?,
                mu: parse_num(n, f[1])?,
                nu: parse_num(n, f[2])?,
                replications: f[3].parse().map_err(|_| csv_err(n, "bad replication count"))?,
                estimator_mean: parse_opt(n, f[4])?,
                estimator_std: parse_opt(n, f[5])?,
                analytic_sigma2: parse_opt(n, f[6])?,
                status: match f[7] {
                    "ok" => RowStatus::Ok,
                    "failed" => RowStatus::Failed,
                    s => return Err(csv_err(n, format!("unknown status '{s}'"))),
                },
            });
        }
        Ok(Self { rows })
    }

    /// Polyline chart of `estimator_std` (or `analytic_sigma2` when no estimate exists)
    /// against μ, one series per γ.
    pub fn to_svg(&self) -> String {
        let mut series: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
        for r in &self.rows {
            let Some(y) = r.estimator_std.or(r.analytic_sigma2) else {
                continue;
            };
            match series.iter_mut().find(|s| s.0 == r.gamma) {
                Some(s) => s.1.push((r.mu, y)),
                None => series.push((r.gamma, vec![(r.mu, y)])),
            }
        }
        let pts = || series.iter().flat_map(|s| s.1.iter());
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            pts().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (x0, x1) = bounds(|p| p.0);
        let (y0, y1) = bounds(|p| p.1);
        let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let sx = |x: f64| pad + (x - x0) / span(x0, x1) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - y0) / span(y0, y1) * (h - 2.0 * pad);
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
        let _ = writeln!(
            out,
            r#"<rect width="{w}" height="{h}" fill="white"/><line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
            h - pad,
            w - pad
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">mu</text>"#, w / 2.0, h - 15.0);
        for (i, (gamma, s)) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = s.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">gamma={gamma}</text>"#,
                w - pad - 90.0,
                pad + 15.0 * i as f64
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// CSV with a fixed header and rows of already-formatted cells.
pub fn simple_csv(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("{CSV_MAGIC}\n{}\n", columns.join(","));
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Named matrices, each as a `# name` line followed by its rows.
pub fn matrix_blocks_to_csv(blocks: &[(&str, &Matrix)]) -> String {
    let mut out = format!("{CSV_MAGIC}\n");
    for (name, m) in blocks {
        let _ = writeln!(out, "# {name}");
        for row in m.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn matrix_blocks_from_csv(text: &str) -> Result<BTreeMap<String, Matrix>> {
    let mut lines = text.split('\n').enumerate();
    if lines.next().map(|p| p.1) != Some(CSV_MAGIC) {
        return Err(csv_err(1, "missing version line"));
    }
    let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("# ") {
            blocks.push((name.to_string(), Vec::new()));
            continue;
        }
        let Some(block) = blocks.last_mut() else {
            return Err(csv_err(i + 1, "row before any block name"));
        };
        let row = line.split(',').map(|s| parse_num(i + 1, s)).collect::<Result<Vec<_>>>()?;
        block.1.push(row);
    }
    let mut out = BTreeMap::new();
    for (name, rows) in blocks {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("block '{name}' is not square")));
        }
        out.insert(name, Matrix::from_fn(n, n, |i, j| rows[i][j]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(gamma: f64, mu: f64, mean: Option<f64>, status: RowStatus) -> SweepRow {
        SweepRow {
            gamma,
            mu,
            nu: -mu,
            replications: 3,
            estimator_mean: mean,
            estimator_std: mean.map(f64::abs),
            analytic_sigma2: None,
            status,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = SweepTable::default().to_csv();
        assert_eq!(
            csv,
            "# langevin-perturb v1\ngamma,mu,nu,replications,estimator_mean,estimator_std,analytic_sigma2,status\n"
        );
        assert_eq!(SweepTable::from_csv(&csv).unwrap(), SweepTable::default());
    }

    #[test]
    fn decimal_point_and_missing_fields() {
        let t = SweepTable {
            rows: vec![row(0.5, 1e-20, None, RowStatus::Failed)],
        };
        let csv = t.to_csv();
        assert!(csv.ends_with("0.5,0.00000000000000000001,-0.00000000000000000001,3,,,,failed\n"));
        assert_eq!(SweepTable::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn svg_has_one_series_per_gamma() {
        let t = SweepTable {
            rows: vec![
                row(0.1, 0.0, Some(1.0), RowStatus::Ok),
                row(0.1, 1.0, Some(0.5), RowStatus::Ok),
                row(1.0, 0.0, Some(2.0), RowStatus::Ok),
            ],
        };
        let svg = t.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("gamma=0.1"));
    }

    #[test]
    fn matrix_blocks_round_trip() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.1, -0.1, 0.0]);
        let b = Matrix::from_row_slice(1, 1, &[3.5]);
        let text = matrix_blocks_to_csv(&[("J1", &a), ("S", &b)]);
        let back = matrix_blocks_from_csv(&text).unwrap();
        assert_eq!(back["J1"], a);
        assert_eq!(back["S"], b);
    }

    proptest! {
        #[test]
        fn csv_round_trip(vals in proptest::collection::vec((-1e6..1e6f64, -1e3..1e3f64, proptest::option::of(-1e9..1e9f64), any::<bool>()), 0..12)) {
            let t = SweepTable {
                rows: vals
                    .iter()
                    .map(|&(g, m, mean, ok)| row(g, m, mean, if ok { RowStatus::Ok } else { RowStatus::Failed }))
                    .collect(),
            };
            prop_assert_eq!(SweepTable::from_csv(&t.to_csv()).unwrap(), t);
        }
    }
}
