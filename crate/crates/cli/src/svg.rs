//! Minimal SVG line plots for run output: the interpolants over the curve
//! parameter and the accepted step sizes on a log scale.

use ristep::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (x - self.x_min) / (self.x_max - self.x_min).max(1e-300);
        let sy = (y - self.y_min) / (self.y_max - self.y_min).max(1e-300);
        (
            MARGIN + sx * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN - sy * (HEIGHT - 2.0 * MARGIN),
        )
    }
}

fn polyline(frame: &Frame, pts: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| {
            let (px, py) = frame.map(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn chrome(frame: &Frame, title: &str, x_label: &str, legend: &[(&str, &str)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<rect x=\"{m}\" y=\"{m}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#333\"/>\n",
        m = MARGIN,
        w = WIDTH - 2.0 * MARGIN,
        h = HEIGHT - 2.0 * MARGIN
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{:.4}</text>\n",
        6.0,
        HEIGHT - MARGIN,
        frame.y_min
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{:.4}</text>\n",
        6.0,
        MARGIN + 4.0,
        frame.y_max
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{:.3}</text>\n",
        MARGIN,
        HEIGHT - MARGIN + 16.0,
        frame.x_min
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        frame.x_max
    ));
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = MARGIN + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{xt}\" y=\"{yt}\" font-size=\"12\">{name}</text>\n",
            x = MARGIN + 8.0,
            x2 = MARGIN + 34.0,
            xt = MARGIN + 40.0,
            yt = y + 4.0
        ));
    }
    out
}

fn document(body: String) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n{body}</svg>\n"
    )
}

/// Affine interpolants over the curve parameter: physical time plus either
/// the scalar state or its norm.
pub fn trajectory_plot(traj: &Trajectory, metric: &ristep::DiagonalMetric) -> String {
    let scalar = traj.dim() == 1;
    let t_pts: Vec<(f64, f64)> = traj.records().iter().map(|r| (r.s, r.t)).collect();
    let z_pts: Vec<(f64, f64)> = traj
        .records()
        .iter()
        .map(|r| {
            let y = if scalar { r.z[0] } else { metric.norm_v(&r.z) };
            (r.s, y)
        })
        .collect();
    let ys = t_pts.iter().chain(&z_pts).map(|&(_, y)| y);
    let y_min = ys.clone().fold(f64::INFINITY, f64::min);
    let y_max = ys.fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (y_max - y_min).max(1e-12);
    let frame = Frame {
        x_min: 0.0,
        x_max: traj.s_last(),
        y_min: y_min - pad,
        y_max: y_max + pad,
    };
    let z_label = if scalar { "state" } else { "state norm" };
    let mut body = chrome(
        &frame,
        "affine interpolants",
        "curve parameter s",
        &[("physical time", "#c0392b"), (z_label, "#2457a8")],
    );
    body.push_str(&polyline(&frame, &t_pts, "#c0392b"));
    body.push_str(&polyline(&frame, &z_pts, "#2457a8"));
    document(body)
}

/// Accepted step sizes against the curve parameter, log10 vertical axis.
pub fn step_size_plot(traj: &Trajectory) -> String {
    let pts: Vec<(f64, f64)> = traj.records()[1..]
        .iter()
        .map(|r| (r.s, r.tau.log10()))
        .collect();
    let y_min = pts.iter().map(|&(_, y)| y).fold(f64::INFINITY, f64::min);
    let y_max = pts.iter().map(|&(_, y)| y).fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame {
        x_min: 0.0,
        x_max: traj.s_last(),
        y_min: y_min - 0.2,
        y_max: y_max + 0.2,
    };
    let mut body = chrome(
        &frame,
        "accepted step sizes (log10)",
        "curve parameter s",
        &[("log10 tau", "#1b7837")],
    );
    body.push_str(&polyline(&frame, &pts, "#1b7837"));
    document(body)
}
