//! Static SVG scatter plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gbtrsc::dataio::DataMatrix;

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("cannot plot {0}-dimensional data (need 2 or 3)")]
    UnsupportedDim(usize),
    #[error("no labels to plot")]
    EmptyLabels,
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Render `x` (first two axes) coloured by `labels`.
pub fn render_svg(x: &DataMatrix, labels: &[usize]) -> Result<String, PlotError> {
    if labels.is_empty() {
        return Err(PlotError::EmptyLabels);
    }
    match x.d() {
        2 => {}
        3 => eprintln!("warning: 3-D input, plotting the first two axes"),
        d => return Err(PlotError::UnsupportedDim(d)),
    }
    if x.n() != labels.len() {
        return Err(PlotError::LengthMismatch {
            points: x.n(),
            labels: labels.len(),
        });
    }

    let bounds = |axis: usize| {
        x.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r[axis]), hi.max(r[axis]))
        })
    };
    let (x_lo, x_hi) = bounds(0);
    let (y_lo, y_hi) = bounds(1);
    let span = (x_hi - x_lo).max(y_hi - y_lo);
    let scale = if span > 0.0 { (SIZE - 2.0 * MARGIN) / span } else { 0.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 600 600" width="600" height="600">"#
    );
    let _ = writeln!(svg, r#"<rect width="600" height="600" fill="white"/>"#);
    for (r, &l) in x.rows().zip(labels) {
        let cx = MARGIN + (r[0] - x_lo) * scale;
        // SVG y grows downwards
        let cy = SIZE - MARGIN - (r[1] - y_lo) * scale;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2" fill="{}"/>"#,
            PALETTE[l % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(x: &DataMatrix, labels: &[usize], path: &Path) -> Result<(), PlotError> {
    let svg = render_svg(x, labels)?;
    fs::write(path, svg).map_err(|source| PlotError::Io {
        path: path.display().to_string(),
        source,
    })
}
