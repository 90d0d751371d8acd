//! Per-epoch metric curves as SVG plus the CSV they are drawn from.

use std::path::Path;

use plotters::prelude::*;

use classforget_core::eval::{MetricTriple, MetricsReport};
use classforget_core::io_util::write_atomic;
use classforget_core::{Error, Result};

pub const SERIES: [&str; 3] = ["FA_e", "FPA_e", "CA_ne"];

fn values(m: &MetricTriple) -> [f64; 3] {
    [m.fa_e, m.fpa_e, m.ca_ne]
}

/// Renders the three curves of `curve` (epoch 0 is the starting model) to
/// an SVG document. `caption` is printed under the title.
pub fn render_curves(curve: &[MetricTriple], title: &str, caption: &str) -> Result<String> {
    if curve.is_empty() {
        return Err(Error::InsufficientData("no per-epoch metrics to plot".into()));
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        let fail = |e: &dyn std::fmt::Display| Error::Config(format!("plot: {e}"));
        root.fill(&WHITE).map_err(|e| fail(&e))?;
        let (head, body) = root.split_vertically(56);
        head.draw(&Text::new(title.to_string(), (12, 8), ("sans-serif", 20)))
            .map_err(|e| fail(&e))?;
        head.draw(&Text::new(caption.to_string(), (12, 34), ("sans-serif", 12)))
            .map_err(|e| fail(&e))?;
        let last = (curve.len() - 1).max(1) as f64;
        let mut chart = ChartBuilder::on(&body)
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..last, 0.0..100.0)
            .map_err(|e| fail(&e))?;
        chart
            .configure_mesh()
            .x_desc("epoch")
            .y_desc("accuracy (%)")
            .draw()
            .map_err(|e| fail(&e))?;
        let colors = [RED, BLUE, GREEN];
        for (k, name) in SERIES.iter().enumerate() {
            let color = colors[k];
            chart
                .draw_series(LineSeries::new(
                    curve.iter().enumerate().map(|(e, m)| (e as f64, values(m)[k])),
                    color.stroke_width(2),
                ))
                .map_err(|e| fail(&e))?
                .label(*name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| fail(&e))?;
        root.present().map_err(|e| fail(&e))?;
    }
    Ok(svg)
}

/// Writes `<stem>.svg` and `<stem>.csv` for the report's per-epoch curve.
pub fn write_curves(report: &MetricsReport, dir: &Path, stem: &str) -> Result<()> {
    let caption = format!(
        "config {} seed {}",
        report.meta.get("config_hash").map_or("-", String::as_str),
        report.meta.get("seed").map_or("-", String::as_str)
    );
    let svg = render_curves(&report.per_epoch, &format!("{} during unlearning", report.method), &caption)?;
    write_atomic(&dir.join(format!("{stem}.svg")), svg.as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.csv")), report.epochs_csv().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_names_all_three_series() {
        let curve = vec![
            MetricTriple {
                fa_e: 90.0,
                fpa_e: 80.0,
                ca_ne: 85.0,
            },
            MetricTriple {
                fa_e: 0.0,
                fpa_e: 50.0,
                ca_ne: 84.0,
            },
        ];
        let svg = render_curves(&curve, "t", "config abc seed 1").unwrap();
        for s in SERIES {
            assert!(svg.contains(s), "{s} missing");
        }
        assert!(svg.contains("config abc seed 1"));
        assert!(render_curves(&[], "t", "c").is_err());
    }
}
