//! Minimal self-contained SVG writer for log-log convergence plots.

/// One curve: a label and (x, y) samples with positive coordinates.
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn decades(lo: f64, hi: f64) -> Vec<i32> {
    let lo = lo.log10().floor() as i32;
    let hi = hi.log10().ceil() as i32;
    (lo..=hi).collect()
}

/// Renders curves on log-log axes. Non-finite and non-positive points
/// are skipped.
pub fn loglog_plot(title: &str, x_label: &str, y_label: &str, curves: &[Curve]) -> String {
    let (width, height) = (760.0, 520.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let finite: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|c| c.points.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    let (x_min, x_max) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    let (y_min, y_max) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    if finite.is_empty() {
        return format!("<svg xmlns=\"http://www.w3.org/2000/svg\"><text x=\"10\" y=\"20\">{title}: no data</text></svg>");
    }

    let x_decades = decades(x_min, x_max);
    let y_decades = decades(y_min, y_max);
    let (lx0, lx1) = (*x_decades.first().unwrap() as f64, *x_decades.last().unwrap() as f64);
    let (ly0, ly1) = (*y_decades.first().unwrap() as f64, *y_decades.last().unwrap() as f64);
    let sx = |x: f64| left + (x.log10() - lx0) / (lx1 - lx0).max(1e-9) * plot_w;
    let sy = |y: f64| top + (ly1 - y.log10()) / (ly1 - ly0).max(1e-9) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        left + plot_w / 2.0
    ));

    for d in &x_decades {
        let x = sx(10f64.powi(*d));
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{top}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            top + plot_h
        ));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">1e{d}</text>\n",
            top + plot_h + 16.0
        ));
    }
    for d in &y_decades {
        let y = sy(10f64.powi(*d));
        out.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            left + plot_w
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{d}</text>\n",
            left - 6.0,
            y + 4.0
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        left + plot_w / 2.0,
        height - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    ));

    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = curve
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        if path.is_empty() {
            continue;
        }
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            path.join(" ")
        ));
        let ly = top + 18.0 + 16.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            left + plot_w - 130.0,
            left + plot_w - 104.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            left + plot_w - 98.0,
            ly + 4.0,
            curve.label
        ));
    }
    out.push_str("</svg>\n");
    out
}
