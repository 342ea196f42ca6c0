//! Curve plots. The SVG carries the title, axes and legend; the PNG is the
//! same chart without text, since no font is bundled for rasterizing.

use std::path::Path;

use anyhow::anyhow;
use plotters::coord::Shift;
use plotters::prelude::*;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// Lines with the same group share a color (here: client count).
    pub group: usize,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn bounds(series: &[Series]) -> Option<((f64, f64), (f64, f64))> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if pts.is_empty() {
        return None;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-3);
    Some(((x0, x1), (y0 - pad, y1 + pad)))
}

fn draw<DB: DrawingBackend>(
    root: DrawingArea<DB, Shift>,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    text: bool,
) -> anyhow::Result<()>
where
    DB::ErrorType: 'static,
{
    let err = |e: DrawingAreaErrorKind<DB::ErrorType>| anyhow!("plot: {e:?}");
    root.fill(&WHITE).map_err(err)?;
    let Some(((x0, x1), (y0, y1))) = bounds(series) else { return Err(anyhow!("nothing to plot")) };
    let mut groups: Vec<usize> = series.iter().map(|s| s.group).collect();
    groups.sort_unstable();
    groups.dedup();
    let color = |g: usize| PALETTE[groups.iter().position(|&h| h == g).unwrap_or(0) % PALETTE.len()];

    let mut builder = ChartBuilder::on(&root);
    builder.margin(16);
    if text {
        builder.caption(title, ("sans-serif", 22)).x_label_area_size(40).y_label_area_size(60);
    }
    let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1).map_err(err)?;
    if text {
        chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(err)?;
    } else {
        chart.plotting_area().draw(&Rectangle::new([(x0, y0), (x1, y1)], BLACK.stroke_width(1))).map_err(err)?;
    }
    for s in series {
        let c = color(s.group);
        let line = chart.draw_series(LineSeries::new(s.points.iter().copied(), c.stroke_width(2))).map_err(err)?;
        if text {
            line.label(format!("{} ({} client{})", s.label, s.group, if s.group == 1 { "" } else { "s" }))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
        }
    }
    if text {
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(err)?;
    }
    root.present().map_err(err)?;
    Ok(())
}

/// Write `<stem>.svg` and `<stem>.png` into `dir`.
pub fn line_plot(dir: &Path, stem: &str, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> anyhow::Result<()> {
    let svg = dir.join(format!("{stem}.svg"));
    draw(SVGBackend::new(&svg, (800, 500)).into_drawing_area(), title, x_label, y_label, series, true)?;
    let png = dir.join(format!("{stem}.png"));
    draw(BitMapBackend::new(&png, (800, 500)).into_drawing_area(), title, x_label, y_label, series, false)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let s = vec![
            Series { label: "cl-10".into(), group: 1, points: vec![(1.0, 0.5), (2.0, 0.6)] },
            Series { label: "fl-9".into(), group: 9, points: vec![(1.0, 0.4), (2.0, 0.7)] },
        ];
        line_plot(dir.path(), "iou", "Test IoU", "epoch", "IoU", &s).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("iou.svg")).unwrap();
        assert!(svg.contains("fl-9 (9 clients)"));
        assert!(std::fs::metadata(dir.path().join("iou.png")).unwrap().len() > 0);
        assert!(line_plot(dir.path(), "none", "", "", "", &[]).is_err());
    }
}
