//! Minimal SVG 1.1 output: grayscale heatmaps of 2-D fields and bar charts.

use std::fmt::Write;

use hardycap_core::geometry::GridDomain;

const PIXELS: f64 = 512.0;
const MARGIN: f64 = 40.0;
const SCALE_WIDTH: f64 = 24.0;

fn gray(t: f64) -> u8 {
    (255.0 * (1.0 - t.clamp(0.0, 1.0))).round() as u8
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Heatmap of `values` over the inside cells of a 2-D domain (one rect per
/// cell; outside cells are left blank) with a vertical color scale.
/// Returns `None` for 3-D domains.
pub fn heatmap(domain: &GridDomain, values: &[f64], title: &str) -> Option<String> {
    if domain.dim() != 2 {
        return None;
    }
    let ext = domain.extent();
    let (nx, ny) = (ext[0] as f64, ext[1] as f64);
    let px = PIXELS / nx.max(ny);
    let (w, hgt) = (nx * px, ny * px);
    let finite = domain
        .inside_cells()
        .iter()
        .map(|&c| values[c])
        .filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };

    let total_w = w + 3.0 * MARGIN + SCALE_WIDTH;
    let total_h = hgt + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total_w:.0}" height="{total_h:.0}" shape-rendering="crispEdges">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}" font-size="14" font-family="sans-serif">{}</text>"#,
        MARGIN * 0.6,
        escape(title)
    )
    .unwrap();
    writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{w:.2}" height="{hgt:.2}" fill="none" stroke="black"/>"#).unwrap();
    for &c in domain.inside_cells() {
        let [i, j, _] = domain.coords(c);
        let v = values[c];
        let g = if v.is_finite() {
            gray((v - lo) / span)
        } else {
            0
        };
        // row 0 at the bottom
        let x = MARGIN + i as f64 * px;
        let y = MARGIN + (ny - 1.0 - j as f64) * px;
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{px:.3}" height="{px:.3}" fill="rgb({g},{g},{g})"/>"#
        )
        .unwrap();
    }
    let sx = 2.0 * MARGIN + w;
    let steps = 32;
    let sh = hgt / steps as f64;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let g = gray(t);
        writeln!(
            s,
            r#"<rect x="{sx:.2}" y="{:.2}" width="{SCALE_WIDTH}" height="{sh:.3}" fill="rgb({g},{g},{g})"/>"#,
            MARGIN + k as f64 * sh
        )
        .unwrap();
    }
    writeln!(s, r#"<rect x="{sx:.2}" y="{MARGIN}" width="{SCALE_WIDTH}" height="{hgt:.2}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{sx:.2}" y="{:.1}" font-size="11" font-family="sans-serif">{hi:.4e}</text>"#,
        MARGIN - 4.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{sx:.2}" y="{:.1}" font-size="11" font-family="sans-serif">{lo:.4e}</text>"#,
        MARGIN + hgt + 14.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    Some(s)
}

/// Vertical bar chart; non-finite values are drawn as full-height hatched
/// bars.
pub fn bar_chart(labels: &[String], values: &[f64], title: &str) -> String {
    let n = values.len().max(1) as f64;
    let w = PIXELS;
    let hgt = 0.6 * PIXELS;
    let top = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    let bw = w / n;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}">"#,
        w + 2.0 * MARGIN,
        hgt + 3.0 * MARGIN
    )
    .unwrap();
    s.push_str(r#"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse"><path d="M0,6 L6,0" stroke="black"/></pattern></defs>"#);
    s.push('\n');
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}" font-size="14" font-family="sans-serif">{}</text>"#,
        MARGIN * 0.6,
        escape(title)
    )
    .unwrap();
    let base = MARGIN + hgt;
    for (k, &v) in values.iter().enumerate() {
        let x = MARGIN + k as f64 * bw;
        let (bh, fill) = if v.is_finite() {
            (hgt * (v.max(0.0) / top), "rgb(96,96,96)")
        } else {
            (hgt, "url(#hatch)")
        };
        writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            x + 0.1 * bw,
            base - bh,
            0.8 * bw
        )
        .unwrap();
        if let Some(l) = labels.get(k) {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" font-family="sans-serif" transform="rotate(60 {:.2} {:.2})">{}</text>"#,
                x + 0.3 * bw,
                base + 10.0,
                x + 0.3 * bw,
                base + 10.0,
                escape(l)
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="black"/>"#,
        MARGIN + w
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="4" y="{:.1}" font-size="11" font-family="sans-serif">{top:.4}</text>"#,
        MARGIN + 4.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use hardycap_core::geometry::{build_domain, ShapeSpec};

    #[test]
    fn heatmap_has_one_rect_per_inside_cell() {
        let d = build_domain(
            &ShapeSpec::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            0.25,
            0.0,
        )
        .unwrap();
        let s = heatmap(&d, d.distances(), "d <x>").unwrap();
        assert!(s.starts_with("<svg"));
        assert!(s.contains("d &lt;x&gt;"));
        let rects = s.matches("<rect").count();
        // inside cells + frame + 32 scale steps + scale frame
        assert_eq!(rects, d.inside_cells().len() + 34);
    }

    #[test]
    fn bar_chart_marks_infinite_bars() {
        let s = bar_chart(&["a".into(), "b".into()], &[1.0, f64::INFINITY], "r");
        assert!(s.contains("url(#hatch)"));
        assert!(s.ends_with("</svg>\n"));
    }
}
