//! Minimal hand-written SVG: dB learning curves and 2D heatmaps.

use std::fmt::Write;

use nalgebra::DMatrix;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 1500;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Curve<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round step for roughly `target` ticks over `span`.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = (span / target).max(f64::MIN_POSITIVE);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// Curves of dB values against the iteration index. Non-finite values are
/// skipped; long curves are decimated.
pub fn learning_curves(title: &str, y_label: &str, curves: &[Curve<'_>]) -> String {
    let len = curves.iter().map(|c| c.values.len()).max().unwrap_or(0).max(2);
    let finite = curves.iter().flat_map(|c| c.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let step = tick_step(hi - lo, 6.0);
    lo = (lo / step).floor() * step;
    hi = (hi / step).ceil() * step;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |i: f64| LEFT + pw * i / (len - 1) as f64;
    let y = |v: f64| TOP + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title)).unwrap();
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    for j in 0..=((hi - lo) / step).round() as usize {
        let v = lo + j as f64 * step;
        let yy = y(v);
        writeln!(s, r##"<line x1="{LEFT}" x2="{}" y1="{yy:.2}" y2="{yy:.2}" stroke="#ddd"/>"##, LEFT + pw).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.decimals$}</text>"#, LEFT - 6.0, yy + 4.0).unwrap();
    }
    let xstep = tick_step((len - 1) as f64, 6.0).max(1.0);
    for j in 0..=((len - 1) as f64 / xstep).floor() as usize {
        let t = j as f64 * xstep;
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#, x(t), H - BOTTOM + 18.0).unwrap();
    }
    writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#, LEFT + pw / 2.0, H - 12.0).unwrap();
    writeln!(s, r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#, TOP + ph / 2.0, escape(y_label)).unwrap();

    for (c_idx, c) in curves.iter().enumerate() {
        let color = PALETTE[c_idx % PALETTE.len()];
        let stride = c.values.len().div_ceil(MAX_POINTS).max(1);
        let mut path = String::new();
        let mut pen_up = true;
        for (i, &val) in c.values.iter().enumerate() {
            if i % stride != 0 && i + 1 != c.values.len() {
                continue;
            }
            if !val.is_finite() {
                pen_up = true;
                continue;
            }
            let cmd = if pen_up { 'M' } else { 'L' };
            write!(path, "{cmd}{:.2},{:.2} ", x(i as f64), y(val)).unwrap();
            pen_up = false;
        }
        let dash = if c.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, path.trim_end()).unwrap();
        let ly = TOP + 14.0 + 18.0 * c_idx as f64;
        let lx = W - RIGHT + 12.0;
        writeln!(s, r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 24.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(c.label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Sequential palette, dark purple at 0 to yellow at 1.
fn colour(t: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let j = STOPS.iter().position(|(p, _)| *p >= t).unwrap_or(4).max(1);
    let (p0, c0) = STOPS[j - 1];
    let (p1, c1) = STOPS[j];
    let f = (t - p0) / (p1 - p0);
    let c: Vec<u8> = (0..3).map(|i| (c0[i] + f * (c1[i] - c0[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of `grid[(a, b)]`, `a` along x and `b` along y (upwards).
pub fn heatmap(title: &str, grid: &DMatrix<f64>, unit: &str) -> String {
    let (nx, ny) = grid.shape();
    let finite = grid.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi.max(lo + 1e-12)) } else { (0.0, 1.0) };
    let side = 360.0;
    let cw = side / nx.max(1) as f64;
    let ch = side / ny.max(1) as f64;
    let (x0, y0) = (50.0, 50.0);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="560" height="460" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="560" height="460" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="15">{}</text>"#, x0 + side / 2.0, escape(title)).unwrap();
    for a in 0..nx {
        for b in 0..ny {
            let v = grid[(a, b)];
            let fill = if v.is_finite() { colour((v - lo) / (hi - lo)) } else { "#999999".into() };
            let px = x0 + a as f64 * cw;
            let py = y0 + (ny - 1 - b) as f64 * ch;
            writeln!(s, r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{fill}"><title>({}, {}): {v}</title></rect>"#, cw + 0.3, ch + 0.3, a + 1, b + 1).unwrap();
        }
    }
    let bar_x = x0 + side + 30.0;
    for j in 0..50 {
        let t = 1.0 - j as f64 / 49.0;
        writeln!(s, r#"<rect x="{bar_x}" y="{:.2}" width="20" height="{:.2}" fill="{}"/>"#, y0 + side * j as f64 / 50.0, side / 50.0 + 0.3, colour(t)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}">{hi:.3} {}</text>"#, bar_x + 26.0, y0 + 8.0, escape(unit)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}">{lo:.3} {}</text>"#, bar_x + 26.0, y0 + side, escape(unit)).unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(10.0, 5.0), 2.0);
        assert_eq!(tick_step(30_000.0, 6.0), 5000.0);
        assert_eq!(tick_step(0.7, 6.0), 0.2);
    }

    #[test]
    fn palette_endpoints() {
        assert_eq!(colour(0.0), "#440154");
        assert_eq!(colour(1.0), "#fde725");
        assert_eq!(colour(f64::NAN), "#440154");
    }

    #[test]
    fn chart_skips_non_finite_values() {
        let v = [1.0, f64::NEG_INFINITY, 3.0, 2.0];
        let svg = learning_curves("t", "dB", &[Curve { label: "a<b", values: &v, dashed: true }]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches(" M").count() + svg.matches("\"M").count(), 2);
    }

    #[test]
    fn heatmap_has_one_cell_per_node() {
        let g = DMatrix::from_fn(3, 2, |a, b| (a + b) as f64);
        let svg = heatmap("h", &g, "dB");
        assert_eq!(svg.matches("<title>").count(), 6);
    }
}
