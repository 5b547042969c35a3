//! SVG rendering of layouts: macros as orange rectangles, standard cells as
//! blue points over the die outline.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bookshelf::Netlist;
use crate::geom::{Point, Rect};
use crate::metrics::{self, PlacementSnapshot, CONGESTION_BINS};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("cell `{0}` has no position")]
    UnplacedCell(String),
    #[error("canvas must be at least 64 px, got {0}")]
    CanvasTooSmall(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub canvas_px: u32,
    pub macro_fill: String,
    pub fixed_macro_fill: String,
    pub std_color: String,
    /// Standard-cell marker radius in px.
    pub std_radius: f64,
    pub stroke_width: f64,
    pub congestion_overlay: bool,
    /// Above this many standard cells, draw density shading under 1-px points.
    pub dense_threshold: usize,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            canvas_px: 800,
            macro_fill: "#f5a623".into(),
            fixed_macro_fill: "#b36b00".into(),
            std_color: "#1f77b4".into(),
            std_radius: 1.5,
            stroke_width: 1.0,
            congestion_overlay: false,
            dense_threshold: 50_000,
        }
    }
}

/// Die-to-canvas affine map with uniform scale, letterboxing and y flipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanvasMap {
    pub die: Rect,
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl CanvasMap {
    pub fn new(die: Rect, canvas: f64) -> Self {
        let scale = (canvas / die.w).min(canvas / die.h);
        Self {
            die,
            scale,
            offset_x: 0.5 * (canvas - die.w * scale),
            offset_y: 0.5 * (canvas - die.h * scale),
        }
    }

    pub fn map(&self, p: Point) -> Point {
        Point::new(
            self.offset_x + (p.x - self.die.x) * self.scale,
            self.offset_y + (self.die.y1() - p.y) * self.scale,
        )
    }

    /// Canvas rectangle `(x, y, w, h)` with `(x, y)` the top-left corner.
    pub fn map_rect(&self, r: &Rect) -> (f64, f64, f64, f64) {
        let tl = self.map(Point::new(r.x, r.y1()));
        (tl.x, tl.y, r.w * self.scale, r.h * self.scale)
    }
}

fn box_path(x: f64, y: f64, w: f64, h: f64) -> String {
    format!("M{x:.3} {y:.3}h{w:.3}v{h:.3}h{:.3}Z", -w)
}

/// Render `snapshot` as an SVG 1.1 document.
///
/// Every macro gets one `<rect>`; standard cells are `<circle>` markers and
/// the die outline and shading are `<path>` elements, so rect count equals
/// the number of macros.
pub fn render_svg(snapshot: &PlacementSnapshot, netlist: &Netlist, style: &RenderStyle) -> Result<String, RenderError> {
    if style.canvas_px < 64 {
        return Err(RenderError::CanvasTooSmall(style.canvas_px));
    }
    let canvas = style.canvas_px as f64;
    let map = CanvasMap::new(netlist.die, canvas);
    let position = |i: usize| {
        snapshot
            .get(i)
            .ok_or_else(|| RenderError::UnplacedCell(netlist.cells[i].name.clone()))
    };
    let macros = netlist.macros();
    let std_cells = netlist.movable_standard_cells();

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        style.canvas_px
    );
    let _ = writeln!(svg, "<title>{}</title>", xml_escape(&netlist.name));
    let (dx, dy, dw, dh) = map.map_rect(&netlist.die);
    let _ = writeln!(
        svg,
        r##"<path class="die" d="{}" fill="#ffffff" stroke="#000000" stroke-width="{}"/>"##,
        box_path(dx, dy, dw, dh),
        style.stroke_width
    );

    let dense = std_cells.len() > style.dense_threshold;
    if dense {
        shade_density(&mut svg, snapshot, netlist, &std_cells, &map, style)?;
    }
    if style.congestion_overlay {
        if let Ok(grid) = metrics::congestion_grid(snapshot, netlist) {
            let max = grid.demand.iter().cloned().fold(0.0, f64::max);
            if max > 0.0 {
                let _ = writeln!(svg, r#"<g class="congestion">"#);
                heat(&mut svg, &grid.demand, max, netlist.die, &map, "#d62728", 0.6);
                let _ = writeln!(svg, "</g>");
            }
        }
    }

    let _ = writeln!(svg, r#"<g class="std-cells" fill="{}">"#, style.std_color);
    let radius = if dense { 0.5 } else { style.std_radius };
    for &c in &std_cells {
        let p = map.map(position(c)?);
        let _ = writeln!(svg, r#"<circle cx="{:.3}" cy="{:.3}" r="{radius}"/>"#, p.x, p.y);
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r##"<g class="macros" stroke="#000000" stroke-width="{}">"##, style.stroke_width);
    for &c in &macros {
        let cell = &netlist.cells[c];
        let (x, y, w, h) = map.map_rect(&cell.rect_at(position(c)?));
        let fill = if cell.movable { &style.macro_fill } else { &style.fixed_macro_fill };
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="{fill}"><title>{}</title></rect>"#,
            xml_escape(&cell.name)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn shade_density(
    svg: &mut String,
    snapshot: &PlacementSnapshot,
    netlist: &Netlist,
    cells: &[usize],
    map: &CanvasMap,
    style: &RenderStyle,
) -> Result<(), RenderError> {
    let n = CONGESTION_BINS * 2;
    let die = netlist.die;
    let mut area = ndarray::Array2::<f64>::zeros((n, n));
    for &c in cells {
        let p = snapshot
            .get(c)
            .ok_or_else(|| RenderError::UnplacedCell(netlist.cells[c].name.clone()))?;
        let ix = (((p.x - die.x) / die.w * n as f64) as usize).min(n - 1);
        let iy = (((p.y - die.y) / die.h * n as f64) as usize).min(n - 1);
        area[[ix, iy]] += netlist.cells[c].area();
    }
    let max = area.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        let _ = writeln!(svg, r#"<g class="density">"#);
        heat(svg, &area, max, die, map, &style.std_color, 0.5);
        let _ = writeln!(svg, "</g>");
    }
    Ok(())
}

/// Bins of `values` (indexed `[ix, iy]`) as translucent boxes.
fn heat(svg: &mut String, values: &ndarray::Array2<f64>, max: f64, die: Rect, map: &CanvasMap, color: &str, peak: f64) {
    let (nx, ny) = values.dim();
    let (bw, bh) = (die.w / nx as f64, die.h / ny as f64);
    for ((ix, iy), &v) in values.indexed_iter() {
        if v <= 0.0 {
            continue;
        }
        let r = Rect::new(die.x + ix as f64 * bw, die.y + iy as f64 * bh, bw, bh);
        let (x, y, w, h) = map.map_rect(&r);
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="{color}" fill-opacity="{:.3}"/>"#,
            box_path(x, y, w, h),
            peak * v / max
        );
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_letterboxes_wide_die() {
        let m = CanvasMap::new(Rect::new(0.0, 0.0, 200.0, 100.0), 100.0);
        assert_eq!(m.scale, 0.5);
        assert_eq!(m.map(Point::new(0.0, 0.0)), Point::new(0.0, 75.0));
        assert_eq!(m.map(Point::new(200.0, 100.0)), Point::new(100.0, 25.0));
        assert_eq!(m.map(Point::new(100.0, 50.0)), Point::new(50.0, 50.0));
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(xml_escape("a<b&\"c\">"), "a&lt;b&amp;&quot;c&quot;&gt;");
    }
}
