//! SVG figures of FA grids and boundary polygons.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::FaGrid;
use crate::scalar::Scalar;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 90.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
const TICKS: usize = 5;

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Display value of a DFC in [0, 1]: `log2(1 + dfc)`, also in [0, 1].
pub fn display_transform(dfc: f64) -> f64 {
    (1.0 + dfc.clamp(0.0, 1.0)).log2()
}

fn color(t: f64) -> String {
    let x = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let k = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Plot frame mapping data ranges onto the drawing area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(svg: &mut String, f: &Frame) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g id="axes" data-p-min="{}" data-p-max="{}" data-q-min="{}" data-q-max="{}">"#,
        f.x.0, f.x.1, f.y.0, f.y.1
    );
}

fn axes(svg: &mut String, f: &Frame) {
    let (x0, x1, y0, y1) = (f.px(f.x.0), f.px(f.x.1), f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(
        svg,
        r#"<rect x="{x0:.3}" y="{y1:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for k in 0..TICKS {
        let t = k as f64 / (TICKS - 1) as f64;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (xp, yp) = (f.px(xv), f.py(yv));
        let _ = writeln!(svg, r#"<line x1="{xp:.3}" y1="{y0:.3}" x2="{xp:.3}" y2="{:.3}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{xp:.3}" y="{:.3}" text-anchor="middle">{xv:.3}</text>"#, y0 + 18.0);
        let _ = writeln!(svg, r#"<line x1="{:.3}" y1="{yp:.3}" x2="{x0:.3}" y2="{yp:.3}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{yv:.3}</text>"#, x0 - 8.0, yp + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">P PCC (MW)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.3}" text-anchor="middle" transform="rotate(-90 20 {:.3})">Q PCC (MVAr)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(svg, "</g>");
}

fn colorbar(svg: &mut String) {
    let x = WIDTH - MARGIN_R + 20.0;
    let (top, bottom) = (MARGIN_T, HEIGHT - MARGIN_B);
    let steps = 32;
    let h = (bottom - top) / steps as f64;
    let _ = writeln!(svg, r#"<g id="colorbar">"#);
    for k in 0..steps {
        let t = (k as f64 + 0.5) / steps as f64;
        let y = bottom - (k + 1) as f64 * h;
        let _ = writeln!(svg, r#"<rect x="{x:.3}" y="{y:.3}" width="14" height="{:.3}" fill="{}"/>"#, h + 0.5, color(t));
    }
    for (label, y) in [("1", bottom), ("1.41", (top + bottom) / 2.0), ("2", top)] {
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}">{label}</text>"#, x + 18.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}">1+DFC</text>"#, x - 4.0, top - 10.0);
    let _ = writeln!(svg, "</g>");
}

/// Heatmap of a DFC grid. Axis ranges are the outer cell edges.
pub fn fa_svg<T: Scalar>(grid: &FaGrid<T>) -> Result<String> {
    if grid.p.len == 0 || grid.q.len == 0 {
        return Err(Error::Contract("cannot draw an empty grid".into()));
    }
    let (sp, sq) = (grid.p.step.as_f64(), grid.q.step.as_f64());
    let f = Frame {
        x: (grid.p.start.as_f64() - sp / 2.0, grid.p.end().as_f64() + sp / 2.0),
        y: (grid.q.start.as_f64() - sq / 2.0, grid.q.end().as_f64() + sq / 2.0),
    };
    let max = grid.max().as_f64();
    let mut svg = String::new();
    header(&mut svg, &f);
    let _ = writeln!(svg, r#"<g id="cells">"#);
    let (w, h) = (f.px(f.x.0 + sp) - f.px(f.x.0), f.py(f.y.0) - f.py(f.y.0 + sq));
    for i in 0..grid.p.len {
        for j in 0..grid.q.len {
            let v = grid.get(i, j).as_f64();
            if v <= 0.0 {
                continue;
            }
            let dfc = if max > 0.0 { v / max } else { 0.0 };
            let x = f.px(grid.p.center(i).as_f64() - sp / 2.0);
            let y = f.py(grid.q.center(j).as_f64() + sq / 2.0);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="{}"/>"#,
                color(display_transform(dfc))
            );
        }
    }
    let _ = writeln!(svg, "</g>");
    axes(&mut svg, &f);
    colorbar(&mut svg);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Closed boundary polygon through ordered points, with the base PCC marked.
pub fn polygon_svg(points: &[(f64, f64)], base: (f64, f64)) -> Result<String> {
    if points.len() < 3 {
        return Err(Error::Contract(format!("a boundary needs at least 3 points, got {}", points.len())));
    }
    let span = |sel: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(sel).chain([sel(&base)]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(sel).chain([sel(&base)]).fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-6);
        (lo - pad, hi + pad)
    };
    let f = Frame { x: span(|p| p.0), y: span(|p| p.1) };
    let mut svg = String::new();
    header(&mut svg, &f);
    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.3},{:.3}", f.px(x), f.py(y))).collect();
    let _ = writeln!(
        svg,
        "<polygon id=\"boundary\" points=\"{}\" fill=\"{}\" fill-opacity=\"0.35\" stroke=\"{}\"/>",
        path.join(" "),
        color(0.5),
        color(0.0)
    );
    for &(x, y) in points {
        let _ = writeln!(svg, r#"<circle cx="{:.3}" cy="{:.3}" r="2.5" fill="black"/>"#, f.px(x), f.py(y));
    }
    let _ = writeln!(
        svg,
        r#"<circle id="base" cx="{:.3}" cy="{:.3}" r="4" fill="red"/>"#,
        f.px(base.0),
        f.py(base.1)
    );
    axes(&mut svg, &f);
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(svg: &str, path: &Path) -> Result<()> {
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
