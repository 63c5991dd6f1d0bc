//! SVG figures comparing a predicted density with a reference.

use std::fs;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::reference::ReferenceField;

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Data(format!("plotting failed: {e:?}"))
}

fn value_range<'a>(fields: impl Iterator<Item = &'a ReferenceField>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for f in fields {
        for v in f.rho.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    (lo, hi)
}

/// Writes `path`: a line plot per snapshot for 1D fields, heat maps with a
/// color bar for 2D fields. Nothing is written on error.
pub fn plot_fields(pred: &ReferenceField, reference: Option<&ReferenceField>, path: &Path) -> Result<()> {
    if pred.is_empty() || pred.rho.is_empty() {
        return Err(Error::Data("nothing to plot".into()));
    }
    if let Some(r) = reference {
        if r.dimension() != pred.dimension() {
            return Err(Error::Data("prediction and reference dimensions differ".into()));
        }
        for &t in &pred.times {
            r.snapshot_index(t)?;
        }
    }
    let mut svg = String::new();
    if pred.dimension() == 1 {
        line_plot(pred, reference, &mut svg)?;
    } else {
        heat_maps(pred, reference, &mut svg)?;
    }
    fs::write(path, svg)?;
    Ok(())
}

fn line_plot(pred: &ReferenceField, reference: Option<&ReferenceField>, svg: &mut String) -> Result<()> {
    let root = SVGBackend::with_string(svg, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let (lo, hi) = value_range(std::iter::once(pred).chain(reference));
    let pad = 0.05 * (hi - lo);
    let (x0, x1) = (pred.x[0], pred.x[pred.x.len() - 1]);
    let caption = if reference.is_some() { "Ref v.s. MA-APNNs" } else { "MA-APNNs" };
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 24))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (lo - pad)..(hi + pad))
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("x")
        .y_desc("rho")
        .draw()
        .map_err(draw_err)?;
    for (k, &t) in pred.times.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        if let Some(r) = reference {
            let j = r.snapshot_index(t)?;
            chart
                .draw_series(LineSeries::new(
                    r.x.iter().copied().zip(r.rho[j].iter().copied()),
                    color.stroke_width(2),
                ))
                .map_err(draw_err)?
                .label(format!("Ref t={t}"))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .draw_series(DashedLineSeries::new(
                pred.x.iter().copied().zip(pred.rho[k].iter().copied()),
                6,
                4,
                color.stroke_width(2),
            ))
            .map_err(draw_err)?
            .label(format!("MA-APNNs t={t}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 8, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

fn heat_maps(pred: &ReferenceField, reference: Option<&ReferenceField>, svg: &mut String) -> Result<()> {
    let ys = pred.y.as_ref().expect("2D field");
    let cols = if reference.is_some() { 2 } else { 1 };
    let rows = pred.times.len();
    let (cell_w, cell_h) = (360u32, 340u32);
    let root = SVGBackend::with_string(svg, (cols as u32 * cell_w + 110, rows as u32 * cell_h)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let (maps, bar) = root.split_horizontally(cols as u32 * cell_w);
    let (lo, hi) = value_range(std::iter::once(pred).chain(reference));
    let cmap = ViridisRGB;
    let panels = maps.split_evenly((rows, cols));
    let (x0, x1) = (pred.x[0], pred.x[pred.x.len() - 1]);
    let (y0, y1) = (ys[0], ys[ys.len() - 1]);
    let hx = if pred.x.len() > 1 { (x1 - x0) / (pred.x.len() - 1) as f64 } else { 1.0 };
    let hy = if ys.len() > 1 { (y1 - y0) / (ys.len() - 1) as f64 } else { 1.0 };
    for (k, &t) in pred.times.iter().enumerate() {
        let mut sources: Vec<(&str, &ReferenceField, usize)> = Vec::new();
        if let Some(r) = reference {
            if r.x != pred.x || r.y != pred.y {
                return Err(Error::Data("2D prediction and reference grids differ".into()));
            }
            sources.push(("Ref", r, r.snapshot_index(t)?));
        }
        sources.push(("MA-APNNs", pred, k));
        for (c, (name, field, j)) in sources.into_iter().enumerate() {
            let area = &panels[k * cols + c];
            let mut chart = ChartBuilder::on(area)
                .caption(format!("{name}, t={t}"), ("sans-serif", 18))
                .margin(8)
                .x_label_area_size(30)
                .y_label_area_size(40)
                .build_cartesian_2d((x0 - hx / 2.0)..(x1 + hx / 2.0), (y0 - hy / 2.0)..(y1 + hy / 2.0))
                .map_err(draw_err)?;
            chart.configure_mesh().disable_mesh().draw().map_err(draw_err)?;
            let pts = field.points();
            chart
                .draw_series(pts.iter().zip(&field.rho[j]).map(|(p, &v)| {
                    let color = cmap.get_color_normalized(v, lo, hi);
                    Rectangle::new(
                        [(p[0] - hx / 2.0, p[1] - hy / 2.0), (p[0] + hx / 2.0, p[1] + hy / 2.0)],
                        color.filled(),
                    )
                }))
                .map_err(draw_err)?;
        }
    }
    // Scalar color bar.
    let mut chart = ChartBuilder::on(&bar)
        .margin(20)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..1.0, lo..hi)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .disable_x_axis()
        .y_desc("rho")
        .draw()
        .map_err(draw_err)?;
    let steps = 64;
    let dv = (hi - lo) / steps as f64;
    chart
        .draw_series((0..steps).map(|i| {
            let v = lo + (i as f64 + 0.5) * dv;
            Rectangle::new(
                [(0.0, lo + i as f64 * dv), (1.0, lo + (i + 1) as f64 * dv)],
                cmap.get_color_normalized(v, lo, hi).filled(),
            )
        }))
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::ReferenceMeta;

    fn field(y: Option<Vec<f64>>) -> ReferenceField {
        let x = vec![0.25, 0.75];
        let n = x.len() * y.as_ref().map_or(1, |y| y.len());
        ReferenceField {
            meta: ReferenceMeta {
                problem: "p".into(),
                scheme: "s".into(),
                grid: "g".into(),
            },
            times: vec![0.5],
            x,
            y,
            rho: vec![(0..n).map(|i| i as f64).collect()],
        }
    }

    #[test]
    fn identical_curves_show_both_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let f = field(None);
        plot_fields(&f, Some(&f), &path).unwrap();
        let s = fs::read_to_string(&path).unwrap();
        assert!(s.starts_with("<svg"));
        assert!(s.contains("Ref t=0.5") && s.contains("MA-APNNs t=0.5"));
    }

    #[test]
    fn heat_map_has_color_bar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.svg");
        let f = field(Some(vec![0.25, 0.75]));
        plot_fields(&f, Some(&f), &path).unwrap();
        let s = fs::read_to_string(&path).unwrap();
        // 2 panels × 4 cells plus the 64 bar segments.
        assert!(s.matches("<rect").count() >= 8 + 64, "{}", s.matches("<rect").count());
        assert!(s.contains("rho"));
    }

    #[test]
    fn empty_field_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.svg");
        let mut f = field(None);
        f.rho.clear();
        assert!(plot_fields(&f, None, &path).is_err());
        assert!(!path.exists());
    }
}
