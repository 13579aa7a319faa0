//! Static SVG line plots regenerated purely from logged metrics.

use std::fmt::Write;

use super::{EvalReport, StepMetrics};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFile {
    pub name: &'static str,
    pub svg: String,
}

struct Series {
    label: &'static str,
    points: Vec<(f64, f64)>,
}

/// Trailing moving average over `window` points.
fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn per_update(metrics: &[StepMetrics], window: usize, f: impl Fn(&StepMetrics) -> f64) -> Vec<(f64, f64)> {
    let raw: Vec<f64> = metrics.iter().map(f).collect();
    metrics
        .iter()
        .map(|m| m.update_index as f64)
        .zip(smooth(&raw, window))
        .collect()
}

fn line_plot(title: &str, y_label: &str, smoothing: usize, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, "<title>{title}</title>");
    let _ = writeln!(svg, "<desc>smoothing window: {smoothing} updates</desc>");
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">update</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{}" text-anchor="middle">{x0}</text>"#,
        bottom + 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{right}" y="{}" text-anchor="middle">{x1}</text>"#,
        bottom + 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.3}</text>"#,
        left - 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#,
        left - 4.0,
        top + 4.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !s.points.is_empty() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            right, s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Accuracy, entropy, length and regime-count plots against update index.
pub fn render_plots(metrics: &[StepMetrics], evals: &[EvalReport], smoothing: usize) -> Vec<PlotFile> {
    let evals_at = |f: fn(&EvalReport) -> f64| -> Vec<(f64, f64)> {
        evals.iter().map(|e| (e.update_index as f64, f(e))).collect()
    };
    let accuracy = line_plot(
        "Accuracy",
        "accuracy",
        smoothing,
        &[
            Series {
                label: "train",
                points: per_update(metrics, smoothing, |m| m.train_accuracy),
            },
            Series {
                label: "sampled",
                points: per_update(metrics, smoothing, |m| m.sampled_accuracy),
            },
            Series {
                label: "eval avg@k",
                points: evals_at(|e| e.avg_at_k),
            },
        ],
    );
    let entropy = line_plot(
        "Token entropy",
        "nats",
        smoothing,
        &[
            Series {
                label: "train",
                points: per_update(metrics, smoothing, |m| m.mean_token_entropy),
            },
            Series {
                label: "eval",
                points: evals_at(|e| e.mean_entropy),
            },
        ],
    );
    let length = line_plot(
        "Response length",
        "tokens",
        smoothing,
        &[
            Series {
                label: "train",
                points: per_update(metrics, smoothing, |m| m.mean_response_length),
            },
            Series {
                label: "eval",
                points: evals_at(|e| e.mean_length),
            },
        ],
    );
    let regimes = line_plot(
        "Regime token counts",
        "tokens",
        smoothing,
        &[
            Series {
                label: "R1 amplify, A>0",
                points: per_update(metrics, smoothing, |m| m.regime_counts.r1_amp_pos as f64),
            },
            Series {
                label: "R2 suppress, A>0",
                points: per_update(metrics, smoothing, |m| m.regime_counts.r2_sup_pos as f64),
            },
            Series {
                label: "R3 amplify, A<0",
                points: per_update(metrics, smoothing, |m| m.regime_counts.r3_amp_neg as f64),
            },
            Series {
                label: "R4 suppress, A<0",
                points: per_update(metrics, smoothing, |m| m.regime_counts.r4_sup_neg as f64),
            },
        ],
    );
    vec![
        PlotFile {
            name: "accuracy.svg",
            svg: accuracy,
        },
        PlotFile {
            name: "entropy.svg",
            svg: entropy,
        },
        PlotFile {
            name: "length.svg",
            svg: length,
        },
        PlotFile {
            name: "regimes.svg",
            svg: regimes,
        },
    ]
}
