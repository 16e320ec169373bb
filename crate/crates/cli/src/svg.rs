//! Static scatter plots written as plain SVG text.

use std::fmt::Write;

use replikit::Point;

const SIZE: f64 = 440.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// The first two coordinates of the ball [-1/2, 1/2]^2 mapped onto the canvas.
fn project(x: &[f64]) -> (f64, f64) {
    let span = SIZE - 2.0 * MARGIN;
    let a = x.first().copied().unwrap_or(0.0);
    let b = x.get(1).copied().unwrap_or(0.0);
    (MARGIN + (a + 0.5) * span, MARGIN + (0.5 - b) * span)
}

/// Samples colored by label and one cross per center. `metadata` is
/// embedded verbatim (escaped) so the figure carries its own config.
pub fn scatter(points: &[Point], labels: &[usize], centers: &[Point], metadata: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(s, "<metadata>{}</metadata>", escape(metadata)).unwrap();
    writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    let (cx, cy) = project(&[0.0, 0.0]);
    writeln!(
        s,
        r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="none" stroke="#dddddd"/>"##,
        (SIZE - 2.0 * MARGIN) / 2.0
    )
    .unwrap();
    s.push_str("<g class=\"samples\">\n");
    for (x, &l) in points.iter().zip(labels) {
        let (px, py) = project(x);
        writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.8" fill="{}"/>"#, PALETTE[l % PALETTE.len()]).unwrap();
    }
    s.push_str("</g>\n");
    for (j, c) in centers.iter().enumerate() {
        let (px, py) = project(c);
        writeln!(
            s,
            r##"<path class="center" data-label="{j}" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="#000000" stroke-width="3"/>"##,
            px - 7.0,
            py - 7.0,
            px + 7.0,
            py + 7.0,
            px - 7.0,
            py + 7.0,
            px + 7.0,
            py - 7.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
