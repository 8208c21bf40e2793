//! Static SVG figures: price with trading actions above portfolio value,
//! and per-episode performance curves.

use std::path::Path;

use plotters::prelude::*;

use crate::env::{Action, Trajectory};
use crate::error::{Error, Result};

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.05).max(hi.abs() * 1e-6).max(1e-9);
    lo - pad..hi + pad
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Two panels: closing price with long/short entries, and portfolio value.
pub fn plot_trajectory(trajectory: &Trajectory, path: &Path) -> Result<()> {
    if trajectory.steps.is_empty() {
        return Err(Error::Plot("empty trajectory".into()));
    }
    let mut prices: Vec<f64> = trajectory.steps.iter().map(|s| s.price).collect();
    prices.push(trajectory.final_price);
    let values = trajectory.values();
    let mut dates: Vec<String> = trajectory
        .steps
        .iter()
        .map(|s| s.date.to_string())
        .collect();
    dates.push(trajectory.final_date.to_string());
    let n = prices.len() as f64;
    let label = |x: &f64| {
        dates
            .get(x.round().max(0.0) as usize)
            .cloned()
            .unwrap_or_default()
    };

    let root = SVGBackend::new(path, (1200, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (top, bottom) = root.split_vertically(400);

    let (lo, hi) = bounds(prices.iter().copied());
    let mut chart = ChartBuilder::on(&top)
        .caption(
            format!("{}: price and actions", trajectory.instrument),
            ("sans-serif", 20),
        )
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..n, padded(lo, hi))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_labels(6)
        .x_label_formatter(&label)
        .y_desc("price")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            prices.iter().enumerate().map(|(i, &p)| (i as f64, p)),
            &BLUE,
        ))
        .map_err(plot_err)?
        .label("close")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], BLUE));
    let mut previous = None;
    let mut longs = Vec::new();
    let mut shorts = Vec::new();
    for (i, s) in trajectory.steps.iter().enumerate() {
        if previous != Some(s.action) {
            match s.action {
                Action::Long => longs.push((i as f64, s.price)),
                Action::Short => shorts.push((i as f64, s.price)),
            }
        }
        previous = Some(s.action);
    }
    chart
        .draw_series(
            longs
                .iter()
                .map(|&p| TriangleMarker::new(p, 6, GREEN.filled())),
        )
        .map_err(plot_err)?
        .label("long")
        .legend(|(x, y)| TriangleMarker::new((x + 7, y), 6, GREEN.filled()));
    chart
        .draw_series(
            shorts
                .iter()
                .map(|&p| Cross::new(p, 5, RED.stroke_width(2))),
        )
        .map_err(plot_err)?
        .label("short")
        .legend(|(x, y)| Cross::new((x + 7, y), 5, RED.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;

    let (lo, hi) = bounds(values.iter().copied());
    let mut chart = ChartBuilder::on(&bottom)
        .caption("portfolio value", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..n, padded(lo, hi))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_labels(6)
        .x_label_formatter(&label)
        .y_desc("value")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            values.iter().enumerate().map(|(i, &v)| (i as f64, v)),
            &BLACK,
        ))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// One named curve: per-episode mean and optional spread.
pub struct Curve<'a> {
    pub name: &'a str,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
}

/// Sharpe ratio against episode; a dashed band of one standard deviation
/// around each mean where available.
pub fn plot_curves(title: &str, curves: &[Curve<'_>], path: &Path) -> Result<()> {
    let episodes = curves.iter().map(|c| c.mean.len()).max().unwrap_or(0);
    if episodes == 0 {
        return Err(Error::Plot("no episodes to plot".into()));
    }
    let all = curves.iter().flat_map(|c| {
        c.mean
            .iter()
            .zip(c.sd.iter().chain(std::iter::repeat(&None)))
            .flat_map(|(m, s)| {
                let m = m.unwrap_or(f64::NAN);
                let s = s.unwrap_or(0.0);
                [m - s, m + s]
            })
    });
    let (lo, hi) = bounds(all);
    let (lo, hi) = if lo.is_finite() {
        (lo, hi)
    } else {
        (-1.0, 1.0)
    };
    let root = SVGBackend::new(path, (1000, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .build_cartesian_2d(1.0..(episodes.max(2)) as f64, padded(lo, hi))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("episode")
        .y_desc("Sharpe ratio")
        .draw()
        .map_err(plot_err)?;
    let palette = [BLUE, RED, GREEN, MAGENTA, CYAN];
    for (k, c) in curves.iter().enumerate() {
        let color = palette[k % palette.len()];
        let points = |f: &dyn Fn(usize, f64) -> f64| -> Vec<(f64, f64)> {
            c.mean
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.map(|m| ((i + 1) as f64, f(i, m))))
                .collect()
        };
        chart
            .draw_series(LineSeries::new(points(&|_, m| m), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(c.name)
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 15, y)], color.stroke_width(2))
            });
        if c.sd.iter().any(Option::is_some) {
            let sd = |i: usize| c.sd.get(i).copied().flatten().unwrap_or(0.0);
            for sign in [-1.0, 1.0] {
                chart
                    .draw_series(DashedLineSeries::new(
                        points(&|i, m| m + sign * sd(i)),
                        4,
                        3,
                        color.mix(0.5).stroke_width(1),
                    ))
                    .map_err(plot_err)?;
            }
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_trajectory, Decision, EnvConfig, TradingEnv};
    use crate::market_data::synthetic::{bars_from_closes, sine_closes};
    use crate::market_data::FeatureConfig;

    #[test]
    fn writes_svg_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = bars_from_closes("SINE", &sine_closes(80, 20.0, 0.1));
        let cfg = EnvConfig {
            features: FeatureConfig {
                tau: 5,
                filter_window: 2,
            },
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::from_series(&s, cfg).unwrap();
        let mut flip = |d: &Decision<'_>| {
            if d.t % 7 < 3 {
                Action::Long
            } else {
                Action::Short
            }
        };
        let traj = run_trajectory(&mut env, &mut flip, false)
            .unwrap()
            .trajectory;
        let p = dir.path().join("t.svg");
        plot_trajectory(&traj, &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("<svg"));

        let c = dir.path().join("c.svg");
        let curves = [Curve {
            name: "test",
            mean: vec![Some(0.1), None, Some(0.5)],
            sd: vec![Some(0.05), None, None],
        }];
        plot_curves("curves", &curves, &c).unwrap();
        assert!(std::fs::read_to_string(&c).unwrap().contains("</svg>"));
    }
}
