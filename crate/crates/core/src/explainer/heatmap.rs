use std::fmt::Write;

use crate::numerics::Tensor;

const CELL: usize = 14;
const LABEL_WIDTH: usize = 60;
const TOP: usize = 28;

/// White at zero, blue for negative and red for positive, saturating at `+-scale`.
fn color(value: f64, scale: f64) -> (u8, u8, u8) {
    let s = if scale > 0.0 { (value / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |v: f64| (255.0 * (1.0 - v.abs())).round() as u8;
    if s >= 0.0 {
        (255, fade(s), fade(s))
    } else {
        (fade(s), fade(s), 255)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG heatmap of a `[p, t]` contribution matrix, one row per feature.
pub fn contributions_svg(contributions: &Tensor, feature_names: &[String], title: &str) -> String {
    let (p, t) = (contributions.shape()[0], contributions.shape()[1]);
    let scale = contributions.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let width = LABEL_WIDTH + t * CELL + 10;
    let height = TOP + p * CELL + 10;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{LABEL_WIDTH}" y="14">{} (max |c| = {scale:.3e})</text>"#, escape(title));
    for (i, row) in contributions.data().chunks(t).enumerate() {
        let y = TOP + i * CELL;
        let name = feature_names.get(i).map_or_else(|| format!("{}", i + 1), |s| escape(s));
        let _ = writeln!(svg, r#"<text x="2" y="{}">{name}</text>"#, y + CELL - 3);
        for (j, &v) in row.iter().enumerate() {
            let (r, g, b) = color(v, scale);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({r},{g},{b})"><title>{v:.4e}</title></rect>"#,
                LABEL_WIDTH + j * CELL
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
