//! Deterministic 2-D scatter plots as SVG text.

use std::fmt::Write;

use ndarray::ArrayView2;

pub const POSITIVE_COLOR: &str = "#2166ac";
pub const NEGATIVE_COLOR: &str = "#b2182b";
const UNLABELED_COLOR: &str = "#404040";
/// Used when a label has more than two levels.
const EXTRA_COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Binary labels use the two fixed colors (id 1 blue, id 0 red).
pub fn label_color(id: u32, n_levels: usize) -> &'static str {
    if n_levels <= 2 {
        if id == 1 {
            POSITIVE_COLOR
        } else {
            NEGATIVE_COLOR
        }
    } else {
        EXTRA_COLORS[id as usize % EXTRA_COLORS.len()]
    }
}

pub struct ScatterLabels<'a> {
    pub ids: &'a [u32],
    pub levels: &'a [String],
}

/// Column 0 against column 1 (or against zero for 1-D embeddings).
pub fn scatter(coords: ArrayView2<f64>, labels: Option<ScatterLabels<'_>>, x_label: &str, y_label: &str, title: &str) -> String {
    let n = coords.nrows();
    let y_of = |i: usize| if coords.ncols() > 1 { coords[[i, 1]] } else { 0.0 };
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            (-1.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&mut (0..n).map(|i| coords[[i, 0]]));
    let (y0, y1) = range(&mut (0..n).map(y_of));
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (v, anchor_x) in [(x0, MARGIN), (x1, WIDTH - MARGIN)] {
        let _ = writeln!(
            s,
            r#"<text x="{anchor_x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:.2}</text>"#,
            HEIGHT - MARGIN + 14.0
        );
    }
    for (v, anchor_y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor_y}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.2}</text>"#,
            MARGIN - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    let _ = writeln!(s, "<g>");
    for i in 0..n {
        let color = match &labels {
            Some(l) => label_color(l.ids[i], l.levels.len()),
            None => UNLABELED_COLOR,
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#,
            px(coords[[i, 0]]),
            py(y_of(i))
        );
    }
    let _ = writeln!(s, "</g>");
    if let Some(l) = &labels {
        for (id, level) in l.levels.iter().enumerate() {
            let y = MARGIN + 14.0 * id as f64 + 10.0;
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="4" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                WIDTH - MARGIN + 10.0,
                y,
                label_color(id as u32, l.levels.len()),
                WIDTH - MARGIN + 18.0,
                y + 4.0,
                escape(level)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
