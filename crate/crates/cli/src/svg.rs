//! Static SVG rendering of envelopes: observed series, quantile band,
//! mean prediction and the policy-change rule, written directly as path
//! elements so the output is a deterministic plain-text artifact.

use its_core::inference::Envelope;

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 48.0;

struct Scale {
    t_min: f64,
    t_max: f64,
    v_min: f64,
    v_max: f64,
}

impl Scale {
    fn x(&self, t: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (t - self.t_min) / (self.t_max - self.t_min).max(1e-12) * w
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + (1.0 - (v - self.v_min) / (self.v_max - self.v_min).max(1e-12)) * h
    }
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target.max(1) as f64;
    let mag = 10f64.powf(raw.abs().max(1e-12).log10().floor());
    let norm = raw / mag;
    let factor = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * mag
}

fn tick_label(value: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{value:.0}")
    } else {
        let decimals = (-step.log10().floor()) as usize;
        format!("{value:.*}", decimals)
    }
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    if points.is_empty() {
        return String::new();
    }
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!("<polyline points=\"{}\" {} />\n", coords.join(" "), style)
}

/// Renders an envelope. The layout: observed series across the whole
/// range, filled band plus mean prediction over the simulated range, a
/// vertical rule at the policy change, and a smoothed overlay when the
/// envelope carries smoothed columns.
pub fn envelope_svg(envelope: &Envelope, t0: i64, title: &str) -> String {
    let rows = &envelope.rows;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut see = |v: Option<f64>| {
        if let Some(x) = v {
            v_min = v_min.min(x);
            v_max = v_max.max(x);
        }
    };
    for r in rows {
        see(r.observed);
        see(r.lower);
        see(r.upper);
        see(r.mean_prediction);
        see(r.smoothed_observed);
        see(r.smoothed_lower);
        see(r.smoothed_upper);
    }
    if !v_min.is_finite() {
        v_min = 0.0;
        v_max = 1.0;
    }
    if v_max - v_min < 1e-9 {
        v_max += 0.5;
        v_min -= 0.5;
    }
    let pad = 0.06 * (v_max - v_min);
    let scale = Scale {
        t_min: rows.first().map(|r| r.time as f64).unwrap_or(0.0),
        t_max: rows.last().map(|r| r.time as f64).unwrap_or(1.0),
        v_min: v_min - pad,
        v_max: v_max + pad,
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"white\" />\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));

    // Axes and ticks.
    let axis_style = "stroke=\"#444444\" stroke-width=\"1\" fill=\"none\"";
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" {axis_style} />\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" {axis_style} />\n"
    ));

    let x_step = nice_step(scale.t_max - scale.t_min, 8).max(1.0);
    let mut tick = (scale.t_min / x_step).ceil() * x_step;
    while tick <= scale.t_max + 1e-9 {
        let x = scale.x(tick);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" {axis_style} />\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y0 + 18.0,
            tick_label(tick, x_step)
        ));
        tick += x_step;
    }
    let y_step = nice_step(scale.v_max - scale.v_min, 6);
    let mut tick = (scale.v_min / y_step).ceil() * y_step;
    while tick <= scale.v_max + 1e-9 {
        let y = scale.y(tick);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{x0:.2}\" y2=\"{y:.2}\" {axis_style} />\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x0 - 8.0,
            y + 4.0,
            tick_label(tick, y_step)
        ));
        tick += y_step;
    }

    // Filled band over the simulated range.
    let band: Vec<(i64, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.time, r.lower?, r.upper?)))
        .collect();
    if band.len() > 1 {
        let mut pts: Vec<(f64, f64)> = band
            .iter()
            .map(|(t, _, u)| (scale.x(*t as f64), scale.y(*u)))
            .collect();
        pts.extend(
            band.iter()
                .rev()
                .map(|(t, l, _)| (scale.x(*t as f64), scale.y(*l))),
        );
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.55\" stroke=\"none\" />\n",
            coords.join(" ")
        ));
    }

    // Smoothed band overlay.
    let smoothed_band: Vec<(i64, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.time, r.smoothed_lower?, r.smoothed_upper?)))
        .collect();
    if smoothed_band.len() > 1 {
        let mut pts: Vec<(f64, f64)> = smoothed_band
            .iter()
            .map(|(t, _, u)| (scale.x(*t as f64), scale.y(*u)))
            .collect();
        pts.extend(
            smoothed_band
                .iter()
                .rev()
                .map(|(t, l, _)| (scale.x(*t as f64), scale.y(*l))),
        );
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"#3182bd\" fill-opacity=\"0.35\" stroke=\"none\" />\n",
            coords.join(" ")
        ));
    }

    // Policy-change rule halfway between t0 and the first post month.
    let xr = scale.x(t0 as f64 + 0.5);
    svg.push_str(&format!(
        "<line x1=\"{xr:.2}\" y1=\"{y1:.2}\" x2=\"{xr:.2}\" y2=\"{y0:.2}\" stroke=\"#777777\" stroke-width=\"1\" stroke-dasharray=\"5,4\" />\n"
    ));

    // Mean prediction.
    let mean_pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((scale.x(r.time as f64), scale.y(r.mean_prediction?))))
        .collect();
    svg.push_str(&polyline(
        &mean_pts,
        "fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\" stroke-dasharray=\"7,3\"",
    ));

    // Smoothed observed trend.
    let smoothed_obs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((scale.x(r.time as f64), scale.y(r.smoothed_observed?))))
        .collect();
    svg.push_str(&polyline(
        &smoothed_obs,
        "fill=\"none\" stroke=\"#cb181d\" stroke-width=\"2\"",
    ));

    // Observed series with point markers.
    let observed: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((scale.x(r.time as f64), scale.y(r.observed?))))
        .collect();
    svg.push_str(&polyline(
        &observed,
        "fill=\"none\" stroke=\"#222222\" stroke-width=\"1.2\"",
    ));
    for (x, y) in &observed {
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.2\" fill=\"#222222\" />\n"
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
