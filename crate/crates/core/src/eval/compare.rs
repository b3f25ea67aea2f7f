//! Method x k comparison grid, with text, JSON and SVG output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_eval, EvalError, EvalOptions, EvalReport, McqaItem};
use crate::ingest::CorpusIndex;
use crate::providers::{LlmProvider, Providers};
use crate::retrieval::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<Method>,
    pub k_values: Vec<usize>,
    /// Row-major over `methods` x `k_values`.
    pub reports: Vec<EvalReport>,
}

/// Evaluate every method at every k.
#[allow(clippy::too_many_arguments)]
pub fn compare_methods(
    index: &CorpusIndex,
    providers: &Providers,
    generator: &dyn LlmProvider,
    items: &[McqaItem],
    methods: &[Method],
    k_values: &[usize],
    runs: usize,
    opts: &EvalOptions,
) -> Result<Comparison, EvalError> {
    if methods.is_empty() || k_values.is_empty() {
        return Err(EvalError::InvalidArgument("need at least one method and one k".into()));
    }
    let mut reports = Vec::with_capacity(methods.len() * k_values.len());
    for &m in methods {
        for &k in k_values {
            reports.push(run_eval(index, providers, generator, items, m, k, runs, opts)?);
        }
    }
    Ok(Comparison {
        methods: methods.to_vec(),
        k_values: k_values.to_vec(),
        reports,
    })
}

impl Comparison {
    pub fn cell(&self, method_idx: usize, k_idx: usize) -> &EvalReport {
        &self.reports[method_idx * self.k_values.len() + k_idx]
    }

    /// Mean accuracy (%) with standard deviation, one row per method.
    /// Cells with failed items carry the failure count in brackets.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "method");
        for k in &self.k_values {
            let _ = write!(out, " | {:>18}", format!("k={k}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(8 + self.k_values.len() * 21));
        out.push('\n');
        for (mi, m) in self.methods.iter().enumerate() {
            let _ = write!(out, "{:<8}", m.as_str());
            for ki in 0..self.k_values.len() {
                let r = self.cell(mi, ki);
                let d = &r.diagnostics;
                let failures = d.retrieval_failures + d.generation_failures + d.unparseable_replies;
                let mut cell = format!("{:.2} (±{:.2})", r.mean_accuracy * 100.0, r.std_dev * 100.0);
                if failures > 0 {
                    let _ = write!(cell, " [{failures}]");
                }
                let _ = write!(out, " | {cell:>18}");
            }
            out.push('\n');
        }
        out
    }

    /// Accuracy against k, one line per method, with ±1 std error bars.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const LEFT: f64 = 60.0;
        const RIGHT: f64 = 140.0;
        const TOP: f64 = 30.0;
        const BOTTOM: f64 = 50.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let n = self.k_values.len();
        let x = |i: usize| {
            if n == 1 {
                LEFT + pw / 2.0
            } else {
                LEFT + pw * i as f64 / (n - 1) as f64
            }
        };
        let y = |acc: f64| TOP + ph * (1.0 - acc.clamp(0.0, 1.0));

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        for tick in 0..=5 {
            let acc = tick as f64 / 5.0;
            let ty = y(acc);
            let _ = writeln!(
                s,
                "<line x1=\"{LEFT}\" y1=\"{ty:.1}\" x2=\"{:.1}\" y2=\"{ty:.1}\" stroke=\"#ddd\"/>",
                LEFT + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"#,
                LEFT - 6.0,
                ty + 4.0,
                acc * 100.0
            );
        }
        for (i, k) in self.k_values.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
                x(i),
                TOP + ph + 18.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">k</text>"#,
            LEFT + pw / 2.0,
            H - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">accuracy (%)</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0
        );
        for (mi, m) in self.methods.iter().enumerate() {
            let color = COLORS[mi % COLORS.len()];
            let points: Vec<String> = (0..n)
                .map(|ki| format!("{:.1},{:.1}", x(ki), y(self.cell(mi, ki).mean_accuracy)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                points.join(" ")
            );
            for ki in 0..n {
                let r = self.cell(mi, ki);
                let (cx, cy) = (x(ki), y(r.mean_accuracy));
                if r.std_dev > 0.0 {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
                        y(r.mean_accuracy + r.std_dev),
                        y(r.mean_accuracy - r.std_dev)
                    );
                }
                let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3.5" fill="{color}"/>"#);
            }
            let ly = TOP + 10.0 + 20.0 * mi as f64;
            let lx = LEFT + pw + 20.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, m.as_str());
        }
        s.push_str("</svg>\n");
        s
    }
}
