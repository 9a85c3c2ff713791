//! Static SVG emission for two-panel trajectory plots: states over the X and
//! X_0 outlines, inputs over the U outline. Only two-dimensional state and
//! input spaces are drawn.

use nalgebra::DVector;
use neurodp::HPolytope;

const PANEL: f64 = 360.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x_off: f64,
    min: (f64, f64),
    scale: f64,
}

impl Frame {
    fn fit(x_off: f64, lo: &DVector<f64>, hi: &DVector<f64>) -> Self {
        let w = hi[0] - lo[0];
        let h = hi[1] - lo[1];
        let scale = (PANEL - 2.0 * MARGIN) / w.max(h).max(1e-9);
        Frame { x_off, min: (lo[0], lo[1]), scale }
    }

    fn map(&self, p: &DVector<f64>) -> (f64, f64) {
        (
            self.x_off + MARGIN + (p[0] - self.min.0) * self.scale,
            PANEL - MARGIN - (p[1] - self.min.1) * self.scale,
        )
    }
}

fn polygon_path(frame: &Frame, set: &HPolytope) -> Option<String> {
    let verts = set.enumerate_vertices().ok()?;
    if verts.len() < 2 {
        return None;
    }
    let mut d = String::new();
    for (i, v) in verts.vertices().iter().enumerate() {
        let (x, y) = frame.map(v);
        d.push_str(if i == 0 { "M" } else { "L" });
        d.push_str(&format!("{x:.2},{y:.2} "));
    }
    d.push('Z');
    Some(d)
}

fn polyline(frame: &Frame, pts: &[DVector<f64>]) -> String {
    pts.iter()
        .map(|p| {
            let (x, y) = frame.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the state panel (X solid, X_0 dashed, state sequence) next to the
/// input panel (U dashed, input sequence). Returns `None` when either space
/// is not two-dimensional.
pub fn trajectory_svg(
    x_set: &HPolytope,
    x0_set: &HPolytope,
    u_set: &HPolytope,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
) -> Option<String> {
    if x_set.dim() != 2 || u_set.dim() != 2 {
        return None;
    }
    let (xlo, xhi) = x_set.bounding_box().ok()?;
    let (ulo, uhi) = u_set.bounding_box().ok()?;
    let pad = |lo: &DVector<f64>, hi: &DVector<f64>| {
        let m = 0.08 * (hi - lo).amax();
        (lo.map(|v| v - m), hi.map(|v| v + m))
    };
    let (xlo, xhi) = pad(&xlo, &xhi);
    let (ulo, uhi) = pad(&ulo, &uhi);

    let left = Frame::fit(0.0, &xlo, &xhi);
    let right = Frame::fit(PANEL, &ulo, &uhi);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        2.0 * PANEL,
        PANEL,
        2.0 * PANEL,
        PANEL
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    if let Some(d) = polygon_path(&left, x_set) {
        svg.push_str(&format!("<path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n"));
    }
    if let Some(d) = polygon_path(&left, x0_set) {
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n"
        ));
    }
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"royalblue\" stroke-width=\"1.5\"/>\n",
        polyline(&left, states)
    ));
    for (i, s) in states.iter().enumerate() {
        let (x, y) = left.map(s);
        let fill = if i == 0 { "crimson" } else { "royalblue" };
        svg.push_str(&format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{fill}\"/>\n"));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">states (X solid, X_0 dashed)</text>\n",
        MARGIN
    ));

    if let Some(d) = polygon_path(&right, u_set) {
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n"
        ));
    }
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"seagreen\" stroke-width=\"1.5\"/>\n",
        polyline(&right, inputs)
    ));
    for u in inputs {
        let (x, y) = right.map(u);
        svg.push_str(&format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"seagreen\"/>\n"));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">inputs (U dashed)</text>\n",
        PANEL + MARGIN
    ));

    svg.push_str("</svg>\n");
    Some(svg)
}
