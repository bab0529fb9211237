//! Deterministic standalone SVG scatter plots: region outline, feasible
//! points and generated points as two series.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::SampleSet;
use crate::regions::{AxisBox, Region, RegionKind};
use crate::scalar::Real;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 56.0;
const FEASIBLE_COLOR: &str = "#d9c49a";
const GENERATED_COLOR: &str = "#3b6fb5";
const OUTLINE_COLOR: &str = "#444444";

/// Traces the boundary of a union of axis-aligned 2-D boxes as closed loops
/// (counter-clockwise around the interior), with collinear vertices merged.
pub fn union_outline<F: Real>(boxes: &[AxisBox<F>]) -> Vec<Vec<(F, F)>> {
    if boxes.is_empty() || boxes[0].dim() != 2 {
        return Vec::new();
    }
    let mut xs: Vec<F> = boxes
        .iter()
        .flat_map(|b| [b.lower[0], b.upper[0]])
        .collect();
    let mut ys: Vec<F> = boxes
        .iter()
        .flat_map(|b| [b.lower[1], b.upper[1]])
        .collect();
    let dedup = |v: &mut Vec<F>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
    };
    dedup(&mut xs);
    dedup(&mut ys);
    let nx = xs.len() - 1;
    let ny = ys.len() - 1;
    let two = F::from_f64_c(2.0);
    let inside = |i: isize, j: isize| -> bool {
        if i < 0 || j < 0 || i as usize >= nx || j as usize >= ny {
            return false;
        }
        let (i, j) = (i as usize, j as usize);
        let cx = (xs[i] + xs[i + 1]) / two;
        let cy = (ys[j] + ys[j + 1]) / two;
        boxes.iter().any(|b| b.contains(&[cx, cy]))
    };
    // directed boundary edges, interior on the left (CCW loops)
    let mut edges: Vec<((F, F), (F, F))> = Vec::new();
    for i in 0..nx as isize {
        for j in 0..ny as isize {
            if !inside(i, j) {
                continue;
            }
            let (iu, ju) = (i as usize, j as usize);
            if !inside(i, j - 1) {
                edges.push(((xs[iu], ys[ju]), (xs[iu + 1], ys[ju])));
            }
            if !inside(i, j + 1) {
                edges.push(((xs[iu + 1], ys[ju + 1]), (xs[iu], ys[ju + 1])));
            }
            if !inside(i - 1, j) {
                edges.push(((xs[iu], ys[ju + 1]), (xs[iu], ys[ju])));
            }
            if !inside(i + 1, j) {
                edges.push(((xs[iu + 1], ys[ju]), (xs[iu + 1], ys[ju + 1])));
            }
        }
    }
    // chain edges into loops; coordinates come from the compressed axes so
    // bitwise equality is exact
    let mut loops = Vec::new();
    let mut remaining = edges;
    while let Some(first) = remaining.pop() {
        let mut path = vec![first.0, first.1];
        loop {
            let tail = *path.last().unwrap();
            if tail == path[0] {
                break;
            }
            let pos = remaining
                .iter()
                .position(|e| e.0 == tail)
                .expect("open boundary chain");
            let e = remaining.swap_remove(pos);
            path.push(e.1);
        }
        path.pop(); // drop the closing duplicate
        loops.push(merge_collinear(path));
    }
    loops.sort_by(|a, b| {
        a[0].0
            .partial_cmp(&b[0].0)
            .unwrap()
            .then(a[0].1.partial_cmp(&b[0].1).unwrap())
    });
    loops
}

fn merge_collinear<F: Real>(path: Vec<(F, F)>) -> Vec<(F, F)> {
    let n = path.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let prev = path[(k + n - 1) % n];
        let cur = path[k];
        let next = path[(k + 1) % n];
        let collinear = (prev.0 == cur.0 && cur.0 == next.0) || (prev.1 == cur.1 && cur.1 == next.1);
        if !collinear {
            out.push(cur);
        }
    }
    out
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        // svg y grows downward
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the scatter as an SVG string; byte-identical for identical input.
pub fn render_svg_scatter<F: Real>(
    feasible: &SampleSet<F>,
    generated: &SampleSet<F>,
    region: &Region<F>,
) -> Result<String> {
    if region.dimension() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "scatter plots require 2-D points, region is {}-D",
            region.dimension()
        )));
    }
    let bb = region.bounding_box();
    let pad = 0.08 * (bb.upper[0] - bb.lower[0]).to_f64_c().max(1.0);
    let mut frame = Frame {
        x0: bb.lower[0].to_f64_c() - pad,
        x1: bb.upper[0].to_f64_c() + pad,
        y0: bb.lower[1].to_f64_c() - pad,
        y1: bb.upper[1].to_f64_c() + pad,
    };
    for set in [feasible, generated] {
        for row in set.points.iter_rows() {
            frame.x0 = frame.x0.min(row[0].to_f64_c() - pad);
            frame.x1 = frame.x1.max(row[0].to_f64_c() + pad);
            frame.y0 = frame.y0.min(row[1].to_f64_c() - pad);
            frame.y1 = frame.y1.max(row[1].to_f64_c() + pad);
        }
    }

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    if let RegionKind::UnionOfBoxes(boxes) = region.kind() {
        for outline in union_outline(boxes) {
            let mut d = String::new();
            for (k, (x, y)) in outline.iter().enumerate() {
                let cmd = if k == 0 { 'M' } else { 'L' };
                d.push_str(&format!(
                    "{cmd}{} {} ",
                    fmt(frame.sx(x.to_f64_c())),
                    fmt(frame.sy(y.to_f64_c()))
                ));
            }
            d.push('Z');
            svg.push_str(&format!(
                "<path d=\"{d}\" fill=\"none\" stroke=\"{OUTLINE_COLOR}\" stroke-width=\"1.5\"/>\n"
            ));
        }
    }

    let mut series = |set: &SampleSet<F>, color: &str, label: &str| {
        svg.push_str(&format!("<g fill=\"{color}\" data-series=\"{label}\">\n"));
        for row in set.points.iter_rows() {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2\"/>\n",
                fmt(frame.sx(row[0].to_f64_c())),
                fmt(frame.sy(row[1].to_f64_c()))
            ));
        }
        svg.push_str("</g>\n");
    };
    series(feasible, FEASIBLE_COLOR, "feasible");
    series(generated, GENERATED_COLOR, "generated");

    // axes and legend
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">x1</text>\n",
        fmt(WIDTH / 2.0),
        fmt(HEIGHT - 14.0)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">x2</text>\n",
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0)
    ));
    svg.push_str(&format!(
        "<circle cx=\"{m}\" cy=\"20\" r=\"4\" fill=\"{FEASIBLE_COLOR}\"/>\
<text x=\"{t1}\" y=\"24\" font-size=\"12\">feasible</text>\
<circle cx=\"{m2}\" cy=\"20\" r=\"4\" fill=\"{GENERATED_COLOR}\"/>\
<text x=\"{t2}\" y=\"24\" font-size=\"12\">generated</text>\n",
        m = fmt(MARGIN),
        t1 = fmt(MARGIN + 10.0),
        m2 = fmt(MARGIN + 90.0),
        t2 = fmt(MARGIN + 100.0),
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the scatter SVG to `path`.
pub fn emit_svg_scatter<F: Real>(
    feasible: &SampleSet<F>,
    generated: &SampleSet<F>,
    region: &Region<F>,
    path: &Path,
) -> Result<()> {
    let svg = render_svg_scatter(feasible, generated, region)?;
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix2;
    use crate::objectives::make_quadratic;
    use crate::regions::ToyDoseSpec;

    fn sample_set(points: Vec<Vec<f64>>) -> SampleSet<f64> {
        let region = Region::l_shape();
        let obj = make_quadratic::<f64>();
        SampleSet::from_points(Matrix2::from_rows(&points).unwrap(), &obj, &region).unwrap()
    }

    fn empty_set() -> SampleSet<f64> {
        SampleSet {
            points: Matrix2::zeros(0, 2),
            objective_values: vec![],
            feasibility_flags: vec![],
        }
    }

    #[test]
    fn l_shape_outline_has_six_vertices() {
        let region = Region::<f64>::l_shape();
        let loops = union_outline(region.boxes().unwrap());
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 6, "outline: {:?}", loops[0]);
        // all L-shape corner points present
        for corner in [
            (-1.0, 9.0),
            (-1.0, 17.0),
            (17.0, 17.0),
            (17.0, -1.0),
            (9.0, -1.0),
            (9.0, 9.0),
        ] {
            assert!(loops[0].contains(&corner), "missing {corner:?}");
        }
    }

    #[test]
    fn single_box_outline_is_a_rectangle() {
        let b = AxisBox::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let loops = union_outline(&[b]);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 4);
    }

    #[test]
    fn empty_generated_series_still_renders() {
        let region = Region::l_shape();
        let feas = sample_set(vec![vec![5.0, 11.0], vec![10.0, 3.0]]);
        let svg = render_svg_scatter(&feas, &empty_set(), &region).unwrap();
        assert!(svg.contains("data-series=\"feasible\""));
        assert!(svg.contains("data-series=\"generated\""));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn identical_input_gives_byte_identical_output() {
        let region = Region::l_shape();
        let feas = sample_set(vec![vec![5.0, 11.0], vec![12.0, 12.0]]);
        let gen = sample_set(vec![vec![4.9, 11.2]]);
        let a = render_svg_scatter(&feas, &gen, &region).unwrap();
        let b = render_svg_scatter(&feas, &gen, &region).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_2d_region_is_unsupported() {
        let spec = ToyDoseSpec::<f64>::default_16();
        let region = Region::toy_dose(spec).unwrap();
        let res = render_svg_scatter(&empty_set(), &empty_set(), &region);
        assert!(matches!(res, Err(Error::UnsupportedDimension(_))));
    }
}
