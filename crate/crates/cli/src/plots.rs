//! Static SVG line plots of a finished run.

use std::io;
use std::path::Path;

use noir_core::scenario::Scenario;
use noir_core::sweep::SweepState;
use plotters::prelude::*;

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn plot(path: &Path, title: &str, y_label: &str, t: &[f64], series: &[(String, Vec<f64>)]) -> io::Result<()> {
    let to_io = |e: DrawingAreaErrorKind<_>| io::Error::other(e.to_string());
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.05).max(1e-6);

    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(to_io)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(t[0]..*t.last().unwrap(), (lo - pad)..(hi + pad))
        .map_err(to_io)?;
    chart.configure_mesh().x_desc("t").y_desc(y_label).draw().map_err(to_io)?;
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(t.iter().copied().zip(values.iter().copied()), color.stroke_width(2)))
            .map_err(to_io)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    if series.len() > 1 {
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(to_io)?;
    }
    root.present().map_err(to_io)
}

pub fn write_all(dir: &Path, s: &Scenario, state: &SweepState, z_net: &[f64]) -> io::Result<()> {
    let t: Vec<f64> = (0..state.grid.points()).map(|k| state.grid.time(k)).collect();
    let inflows: Vec<(String, Vec<f64>)> = s
        .graph
        .inlets()
        .enumerate()
        .map(|(j, road)| (format!("u_{road}"), state.u.iter().map(|u| u[j]).collect()))
        .collect();
    plot(&dir.join("inflows.svg"), "Inlet inflows", "u", &t, &inflows)?;
    plot(&dir.join("z_net.svg"), "Net outlet outflow", "z_net", &t, &[("z_net".into(), z_net.to_vec())])?;
    let densities: Vec<(String, Vec<f64>)> = s
        .graph
        .interior()
        .enumerate()
        .map(|(i, road)| (format!("x_{road}"), state.x.iter().map(|x| x[i]).collect()))
        .collect();
    plot(&dir.join("densities.svg"), "Interior densities", "x", &t, &densities)
}
