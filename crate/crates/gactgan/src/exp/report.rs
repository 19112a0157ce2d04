//! Risk-utility map emission: CSV rows and a small SVG scatter with the
//! front polyline.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One aggregated configuration on the risk-utility map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuRow {
    pub config: String,
    pub loss: String,
    /// Covariance rank; empty for the point-estimate baseline.
    pub k: Option<usize>,
    /// Covariance scale; empty for the point-estimate baseline.
    pub alpha: Option<f64>,
    pub s_samples: usize,
    pub utility: f64,
    pub risk: f64,
    pub selection_score: f64,
    pub pareto: bool,
    pub cutoff_pass: bool,
}

pub fn write_ru_map_csv(path: &Path, rows: &[RuRow]) -> Result<()> {
    let mut out = String::from("config,loss,K,alpha,S,U,R,SS,pareto,cutoff_pass\n");
    for r in rows {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.config,
            r.loss,
            k,
            alpha,
            r.s_samples,
            r.utility,
            r.risk,
            r.selection_score,
            r.pareto,
            r.cutoff_pass
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Minimal scatter of (risk, utility) with the Pareto members joined by a
/// polyline.
pub fn write_ru_map_svg(path: &Path, rows: &[RuRow]) -> Result<()> {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 50.0);
    let px = |r: f64| ml + r.clamp(0.0, 1.0) * (w - ml - mr);
    let py = |u: f64| h - mb - u.clamp(0.0, 1.0) * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#333\"/>\n",
        w - ml - mr,
        h - mt - mb
    ));
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{v:.1}</text>\n",
            px(v),
            h - mb + 16.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            ml - 6.0,
            py(v) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">risk</text>\n",
        ml + (w - ml - mr) / 2.0,
        h - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">utility</text>\n",
        mt + (h - mt - mb) / 2.0,
        mt + (h - mt - mb) / 2.0
    ));

    let mut front: Vec<&RuRow> = rows.iter().filter(|r| r.pareto).collect();
    front.sort_by(|a, b| a.risk.partial_cmp(&b.risk).unwrap());
    if front.len() > 1 {
        let pts: Vec<String> = front
            .iter()
            .map(|r| format!("{},{}", px(r.risk), py(r.utility)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#7b2d8b\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    for r in rows {
        let color = if r.loss == "wasserstein" { "#1f77b4" } else { "#d62728" };
        let stroke = if r.pareto { "#7b2d8b" } else { "none" };
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{color}\" stroke=\"{stroke}\" stroke-width=\"2\"><title>{} U={:.3} R={:.3}</title></circle>\n",
            px(r.risk),
            py(r.utility),
            r.config,
            r.utility,
            r.risk
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
