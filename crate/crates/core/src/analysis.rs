//! Document-level entailment analysis: per-document α (fraction of
//! hypotheses whose predicted state matches the constructed one) and β (the
//! fraction of documents with α = 1).

use serde::{Deserialize, Serialize};

pub use crate::biae::predicted_hypothesis_states;
use crate::error::{Error, Result};
use crate::weak_labels::{EntailmentLabels, EntailmentState};

pub fn alpha(predicted: &[EntailmentState], constructed: &[EntailmentState]) -> Result<f64> {
    if predicted.len() != constructed.len() {
        return Err(Error::validation("alpha needs one constructed state per predicted state"));
    }
    if predicted.is_empty() {
        return Err(Error::validation("alpha of a document without hypotheses is undefined"));
    }
    let hits = predicted.iter().zip(constructed).filter(|(p, c)| p == c).count();
    Ok(hits as f64 / predicted.len() as f64)
}

pub fn beta(alphas: &[f64]) -> Result<f64> {
    if alphas.is_empty() {
        return Err(Error::validation("beta of an empty subset is undefined"));
    }
    Ok(alphas.iter().filter(|&&a| a == 1.0).count() as f64 / alphas.len() as f64)
}

/// Constructed state of each hypothesis from the weak pair labels: any
/// CONTRADICTION wins, then ENTAILMENT, otherwise NEUTRAL.
pub fn constructed_hypothesis_states(m: usize, labels: &EntailmentLabels) -> Vec<EntailmentState> {
    let mut states = vec![EntailmentState::Neutral; m];
    for pair in &labels.pairs {
        if pair.hypothesis >= m {
            continue;
        }
        let slot = &mut states[pair.hypothesis];
        match pair.state {
            EntailmentState::Contradiction => *slot = EntailmentState::Contradiction,
            EntailmentState::Entailment if *slot == EntailmentState::Neutral => *slot = EntailmentState::Entailment,
            _ => {}
        }
    }
    states
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub count: usize,
    pub beta: f64,
    pub mean_alpha: f64,
    pub variance_alpha: f64,
    /// First, second and third quartiles (linear interpolation).
    pub quartiles: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentAnalysis {
    pub alpha_per_document: Vec<f64>,
    pub summary: AlphaSummary,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl EntailmentAnalysis {
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        let beta = beta(&alphas)?;
        let n = alphas.len() as f64;
        let mean = alphas.iter().sum::<f64>() / n;
        let variance = alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = alphas.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            summary: AlphaSummary {
                count: alphas.len(),
                beta,
                mean_alpha: mean,
                variance_alpha: variance,
                quartiles: [quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75)],
            },
            alpha_per_document: alphas,
        })
    }
}

/// Counts per bin over [0, 1]; the last bin is closed.
pub fn histogram(alphas: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &a in alphas {
        let b = ((a.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Side-by-side α histograms for two partitions as a standalone SVG.
pub fn histogram_svg(series: &[(&str, &[f64])], bins: usize) -> String {
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 320.0;
    const MARGIN: f64 = 40.0;
    const COLORS: [&str; 4] = ["#2f6db5", "#d1495b", "#3c9d5d", "#8c6bb1"];
    let densities: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, alphas)| {
            let total = alphas.len().max(1) as f64;
            histogram(alphas, bins).into_iter().map(|c| c as f64 / total).collect()
        })
        .collect();
    let peak = densities.iter().flatten().copied().fold(0.0, f64::max).max(1e-9);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / bins as f64;
    let bar = slot / (series.len().max(1) as f64 + 0.5);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"black\"/>\n",
        y = HEIGHT - MARGIN,
        x2 = WIDTH - MARGIN
    ));
    for (s, dens) in densities.iter().enumerate() {
        for (b, &v) in dens.iter().enumerate() {
            let h = v / peak * plot_h;
            let x = MARGIN + b as f64 * slot + s as f64 * bar;
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{bar:.2}\" height=\"{h:.2}\" fill=\"{}\" opacity=\"0.8\"/>\n",
                HEIGHT - MARGIN - h,
                COLORS[s % COLORS.len()]
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n",
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * s as f64,
            COLORS[s % COLORS.len()],
            series[s].0
        ));
    }
    for b in 0..=bins {
        let x = MARGIN + b as f64 * slot;
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{:.1}</text>\n",
            HEIGHT - MARGIN + 14.0,
            b as f64 / bins as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
