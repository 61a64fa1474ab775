//! Top-down SVG map of a segmentation.

use std::collections::HashMap;
use std::fmt::Write;

use treeseg_core::io::{parse_wkt_polygon, PointRow, TreeRow};
use treeseg_core::{Point2, Result};

const PALETTE: [&str; 12] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#1f78b4",
    "#b2df8a", "#fb9a99", "#cab2d6", "#ff7f00",
];
const NOISE: &str = "#9a9a9a";
const WIDTH: f64 = 800.0;
const MARGIN: f64 = 20.0;
const LEGEND_H: f64 = 60.0;

fn colour_slot(tree_id: u32) -> usize {
    (tree_id.max(1) as usize - 1) % PALETTE.len()
}

struct View {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl View {
    fn fit(coords: impl Iterator<Item = (f64, f64)>) -> (Self, f64) {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (x, y) in coords {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-6);
        let scale = (WIDTH - 2.0 * MARGIN) / span;
        let height = (y1 - y0) * scale + 2.0 * MARGIN;
        (View { x0, y1, scale }, height)
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN + (x - self.x0) * self.scale,
            MARGIN + (self.y1 - y) * self.scale,
        )
    }
}

/// SVG 1.1 document: member points coloured by tree, hull outlines, apex
/// marks and a legend. Noise crowns are drawn in gray.
pub fn render_svg(trees: &[TreeRow], points: &[PointRow]) -> Result<String> {
    let hulls: Vec<Vec<Point2>> = trees
        .iter()
        .map(|t| parse_wkt_polygon(&t.hull_wkt))
        .collect::<Result<_>>()?;
    let noise: HashMap<u32, bool> = trees.iter().map(|t| (t.tree_id, t.is_noise)).collect();

    let coords = points
        .iter()
        .map(|p| (p.x, p.y))
        .chain(hulls.iter().flatten().map(|v| (v.x, v.y)))
        .chain(trees.iter().map(|t| (t.apex_x, t.apex_y)));
    let (view, plot_h) = View::fit(coords);
    let height = plot_h + LEGEND_H;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    s.push_str("<style>\n");
    s.push_str(".pt{stroke:none} .hull{fill-opacity:0.25;stroke-width:1.5} .apex{stroke:#000;stroke-width:1.5}\n");
    s.push_str(".unassigned{fill:#dddddd}\n");
    let _ = writeln!(s, ".noise{{fill:{NOISE};stroke:{NOISE}}}");
    for (k, c) in PALETTE.iter().enumerate() {
        let _ = writeln!(s, ".c{k}{{fill:{c};stroke:{c}}}");
    }
    s.push_str("</style>\n");
    s.push_str(r##"<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>"##);
    s.push('\n');

    let r = 0.5 * (view.scale * 0.2).clamp(0.6, 4.0);
    s.push_str("<g id=\"points\">\n");
    for p in points {
        let class = match p.tree_id {
            None => "unassigned".to_string(),
            Some(t) if noise.get(&t).copied().unwrap_or(false) => "noise".to_string(),
            Some(t) => format!("c{}", colour_slot(t)),
        };
        let (x, y) = view.px(p.x, p.y);
        let _ = writeln!(
            s,
            r#"<circle class="pt {class}" cx="{x:.2}" cy="{y:.2}" r="{r:.2}"/>"#
        );
    }
    s.push_str("</g>\n<g id=\"crowns\">\n");
    for (t, hull) in trees.iter().zip(&hulls) {
        let class = if t.is_noise {
            "noise".to_string()
        } else {
            format!("c{}", colour_slot(t.tree_id))
        };
        let list: Vec<String> = hull
            .iter()
            .map(|v| {
                let (x, y) = view.px(v.x, v.y);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let tag = if hull.len() >= 3 {
            "polygon"
        } else {
            "polyline"
        };
        let _ = writeln!(
            s,
            r#"<{tag} class="hull {class}" data-tree="{}" points="{}"/>"#,
            t.tree_id,
            list.join(" ")
        );
    }
    s.push_str("</g>\n<g id=\"apexes\">\n");
    for t in trees {
        let (x, y) = view.px(t.apex_x, t.apex_y);
        let _ = writeln!(
            s,
            r#"<path class="apex" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}"/>"#,
            x - 4.0,
            y,
            x + 4.0,
            y,
            x,
            y - 4.0,
            x,
            y + 4.0
        );
    }
    s.push_str("</g>\n");

    let ly = plot_h + 15.0;
    let n_noise = trees.iter().filter(|t| t.is_noise).count();
    let _ = writeln!(
        s,
        r#"<g id="legend" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect class="c0" x="{MARGIN}" y="{ly:.0}" width="12" height="12"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}">crowns ({})</text>"#,
        MARGIN + 18.0,
        ly + 10.0,
        trees.len() - n_noise
    );
    let _ = writeln!(
        s,
        r#"<rect class="noise" x="{:.0}" y="{ly:.0}" width="12" height="12"/>"#,
        MARGIN + 140.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}">noise ({n_noise})</text>"#,
        MARGIN + 158.0,
        ly + 10.0
    );
    let _ = writeln!(
        s,
        r#"<path class="apex" d="M{:.0},{:.0}h10M{:.0},{:.0}v10"/>"#,
        MARGIN + 260.0,
        ly + 6.0,
        MARGIN + 265.0,
        ly + 1.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}">apex</text>"#,
        MARGIN + 278.0,
        ly + 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.0}">scale 1 m = {:.2} px; {} surface points</text>"#,
        ly + 32.0,
        view.scale,
        points.len()
    );
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}
