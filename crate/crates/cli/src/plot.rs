//! Static SVG charts for `--plot`.

use std::path::Path;

use anyhow::{anyhow, Result};
use geoadapt_core::curation::HISTOGRAM_BINS;
use geoadapt_core::rewards::{coord_reward, RewardParams};
use plotters::prelude::*;

type TierCurve<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

fn draw_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plot: {e:?}")
}

/// Bar chart of accepted records per L_opt bin.
pub fn l_opt_histogram(path: &Path, counts: &[u64; HISTOGRAM_BINS]) -> Result<()> {
    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let top = counts.iter().copied().max().unwrap_or(0).max(1);
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .caption("L_opt distribution", ("sans-serif", 20))
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..1.0, 0u64..top + top / 10 + 1)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_desc("L_opt")
        .y_desc("records")
        .draw()
        .map_err(draw_err)?;
    // explicit bars in bin order; the built-in histogram series iterates a hash map
    let width = 1.0 / HISTOGRAM_BINS as f64;
    chart
        .draw_series(counts.iter().enumerate().map(|(i, &c)| {
            let x0 = i as f64 * width;
            Rectangle::new([(x0 + 0.005, 0), (x0 + width - 0.005, c)], BLUE.filled())
        }))
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

/// Hierarchical geo reward against distance for the three match tiers.
pub fn reward_surface(path: &Path, params: &RewardParams) -> Result<()> {
    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let max_d = 5.0 * params.sigma;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .caption("Geo reward vs. distance", ("sans-serif", 20))
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..max_d, 0.0..1.05)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("distance (km)")
        .y_desc("reward")
        .draw()
        .map_err(draw_err)?;

    let xs: Vec<f64> = (0..=200).map(|i| max_d * i as f64 / 200.0).collect();
    let tiers: [(&str, RGBColor, TierCurve); 3] = [
        (
            "country + city",
            GREEN,
            Box::new(|d| params.lambda1 + params.lambda2 * coord_reward(d, params.sigma)),
        ),
        (
            "country only",
            BLUE,
            Box::new(|d| params.lambda1 * coord_reward(d, params.sigma)),
        ),
        ("wrong country", RED, Box::new(|_| 0.0)),
    ];
    for (label, color, f) in tiers {
        chart
            .draw_series(LineSeries::new(xs.iter().map(|&d| (d, f(d))), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}
