//! SVG rendering of booklet analysis results.

use plotters::prelude::*;

use crate::booklet::{IssueReport, ThreeWayLabel};

#[derive(Debug, thiserror::Error)]
#[error("plot rendering failed: {0}")]
pub struct PlotError(String);

fn err<E: std::fmt::Display>(e: E) -> PlotError {
    PlotError(e.to_string())
}

fn group_label(g: &crate::booklet::IssueSummary) -> String {
    match g.language {
        Some(l) => format!("{} {}", g.issue.display_name(), l.code()),
        None => g.issue.display_name().to_string(),
    }
}

const WIDTH: u32 = 720;
const HEIGHT: u32 = 480;

/// Printed under every box plot.
pub const WHISKER_NOTE: &str =
    "Whiskers: most extreme values within 1.5 IQR of the box; dots lie beyond. Red line: median.";

/// Box plot of favor probabilities per group. Whiskers span 1.5 IQR; outliers are dots.
pub fn box_plot_svg(report: &IssueReport, title: &str) -> Result<String, PlotError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let n = report.groups.len().max(1);
        let labels: Vec<String> = report.groups.iter().map(group_label).collect();
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .margin_bottom(30)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(-0.5f64..n as f64 - 0.5, 0f64..1f64)
            .map_err(err)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(n)
            .x_label_formatter(&|x| {
                let i = x.round() as usize;
                if *x >= 0.0 && (x - i as f64).abs() < 1e-9 {
                    labels.get(i).cloned().unwrap_or_default()
                } else {
                    String::new()
                }
            })
            .y_desc("probability of FAVOR")
            .draw()
            .map_err(err)?;

        for (i, g) in report.groups.iter().enumerate() {
            let b = &g.box_stats;
            let c = i as f64;
            let (l, r) = (c - 0.25, c + 0.25);
            let blue = RGBColor(70, 110, 170);
            chart
                .draw_series(std::iter::once(Rectangle::new(
                    [(l, b.q1), (r, b.q3)],
                    blue.mix(0.3).filled(),
                )))
                .map_err(err)?;
            chart
                .draw_series(std::iter::once(Rectangle::new(
                    [(l, b.q1), (r, b.q3)],
                    blue,
                )))
                .map_err(err)?;
            chart
                .draw_series(std::iter::once(PathElement::new(
                    vec![(l, b.median), (r, b.median)],
                    RED.stroke_width(2),
                )))
                .map_err(err)?;
            let whiskers = [
                vec![(c, b.q3), (c, b.whisker_high)],
                vec![(c, b.q1), (c, b.whisker_low)],
                vec![(c - 0.1, b.whisker_high), (c + 0.1, b.whisker_high)],
                vec![(c - 0.1, b.whisker_low), (c + 0.1, b.whisker_low)],
            ];
            chart
                .draw_series(whiskers.into_iter().map(|p| PathElement::new(p, BLACK)))
                .map_err(err)?;
            chart
                .draw_series(
                    b.outliers
                        .iter()
                        .map(|&y| Circle::new((c, y), 3, BLACK.filled())),
                )
                .map_err(err)?;
        }
        root.draw(&Text::new(
            WHISKER_NOTE,
            (12, HEIGHT as i32 - 22),
            ("sans-serif", 12),
        ))
        .map_err(err)?;
        root.present().map_err(err)?;
    }
    Ok(svg)
}

fn label_color(l: ThreeWayLabel) -> RGBColor {
    match l {
        ThreeWayLabel::For => RGBColor(76, 153, 76),
        ThreeWayLabel::Neutral => RGBColor(190, 190, 190),
        ThreeWayLabel::Against => RGBColor(200, 70, 60),
    }
}

/// Horizontal stacked bars of the FOR / NEUTRAL / AGAINST shares per group.
pub fn stacked_bar_svg(report: &IssueReport, title: &str) -> Result<String, PlotError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let n = report.groups.len().max(1);
        let labels: Vec<String> = report.groups.iter().map(group_label).collect();
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(80)
            .build_cartesian_2d(0f64..100f64, -0.5f64..n as f64 - 0.5)
            .map_err(err)?;
        chart
            .configure_mesh()
            .disable_y_mesh()
            .y_labels(n)
            .y_label_formatter(&|y| {
                let i = y.round() as usize;
                if *y >= 0.0 && (y - i as f64).abs() < 1e-9 {
                    labels.get(i).cloned().unwrap_or_default()
                } else {
                    String::new()
                }
            })
            .x_desc("percent of statements")
            .draw()
            .map_err(err)?;

        let order = [
            ThreeWayLabel::For,
            ThreeWayLabel::Neutral,
            ThreeWayLabel::Against,
        ];
        for (i, g) in report.groups.iter().enumerate() {
            let mut start = 0.0;
            for l in order {
                let w = g.label_percent.get(&l).copied().unwrap_or(0.0);
                let (b, t) = (i as f64 - 0.3, i as f64 + 0.3);
                chart
                    .draw_series(std::iter::once(Rectangle::new(
                        [(start, b), (start + w, t)],
                        label_color(l).filled(),
                    )))
                    .map_err(err)?;
                start += w;
            }
        }
        for l in order {
            chart
                .draw_series(std::iter::empty::<Rectangle<(f64, f64)>>())
                .map_err(err)?
                .label(l.as_str())
                .legend(move |(x, y)| {
                    Rectangle::new([(x, y - 5), (x + 10, y + 5)], label_color(l).filled())
                });
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
        root.present().map_err(err)?;
    }
    Ok(svg)
}
