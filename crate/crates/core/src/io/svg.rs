//! Energy-profile scatter plots as standalone SVG 1.1.

use std::fmt::Write as _;
use std::path::Path;

use super::report::GroupResult;
use super::{write_text, IoError};
use crate::profile::{OutlierReport, OutlierTier, ProblemProfile, ProfilePoint};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn tier_color(tier: OutlierTier) -> &'static str {
    match tier {
        OutlierTier::None => "#4a6fa5",
        OutlierTier::Low => "#e0a800",
        OutlierTier::Medium => "#e06c00",
        OutlierTier::High => "#c0001a",
    }
}

/// Tick step of the form {1, 2, 5} × 10^k giving roughly `target` ticks.
pub fn nice_step(max: f64, target: usize) -> f64 {
    if !(max.is_finite() && max > 0.0) {
        return 1.0;
    }
    let raw = max / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn decimals(step: f64) -> usize {
    if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders points, the fitted origin line, the ±2σe band and ±σc error bars
/// on every point that is at least a low outlier.
pub fn render_scatter_svg(
    title: &str,
    points: &[ProfilePoint],
    profile: &ProblemProfile,
    outliers: &OutlierReport,
) -> String {
    let t_max = points.iter().map(|p| p.t).fold(0.0, f64::max);
    let c_top = points
        .iter()
        .map(|p| p.c + p.c_sd)
        .chain(std::iter::once(profile.slope_a * t_max + 2.0 * profile.sigma_e))
        .fold(0.0, f64::max);
    let xs = nice_step(t_max, 6);
    let ys = nice_step(c_top, 6);
    let x_end = (t_max / xs).ceil().max(1.0) * xs;
    let y_end = (c_top / ys).ceil().max(1.0) * ys;

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + t / x_end * pw;
    let py = |c: f64| TOP + ph - c.clamp(-y_end, 2.0 * y_end) / y_end * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath></defs>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // axes and ticks
    let xd = decimals(xs);
    let yd = decimals(ys);
    let mut k = 0.0;
    while k <= x_end + xs * 1e-9 {
        let x = px(k);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{TOP}" stroke="#eeeeee"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{k:.xd$}</text>"##,
            TOP + ph,
            TOP + ph + 16.0
        );
        k += xs;
    }
    let mut k = 0.0;
    while k <= y_end + ys * 1e-9 {
        let y = py(k);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eeeeee"/><text x="{:.2}" y="{:.2}" text-anchor="end">{k:.yd$}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        k += ys;
    }
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">CPU time (ms)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">Energy (J)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    // fit and band
    let a = profile.slope_a;
    let band = 2.0 * profile.sigma_e;
    let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
    for off in [band, -band] {
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="5,4"/>"##,
            px(0.0),
            py(off),
            px(x_end),
            py(a * x_end + off)
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#222222" stroke-width="1.5"/>"##,
        px(0.0),
        py(0.0),
        px(x_end),
        py(a * x_end)
    );

    for p in points {
        let tier = outliers.get(&p.solution_id).map_or(OutlierTier::None, |e| e.tier);
        let color = tier_color(tier);
        let (x, y) = (px(p.t), py(p.c));
        if tier != OutlierTier::None {
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                py(p.c + p.c_sd),
                py(p.c - p.c_sd)
            );
        }
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"><title>{} t={:.3} ms c={:.4} J {}</title></circle>"#,
            escape(&p.solution_id),
            p.t,
            p.c,
            tier.as_str()
        );
    }
    let _ = writeln!(s, "</g>");
    let rho = profile
        .spearman
        .map(|r| format!("{r:.3}"))
        .unwrap_or_else(|| "n/a".into());
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">a = {:.6} J/ms, σe = {:.4} J, ρ = {rho}, n = {}</text>"#,
        LEFT + 8.0,
        TOP + 14.0,
        a,
        profile.sigma_e,
        profile.n
    );
    s.push_str("</svg>\n");
    s
}

pub fn emit_scatter_svg(group: &GroupResult, path: &Path) -> Result<(), IoError> {
    let title = format!("{} on {} ({})", group.problem_id, group.machine, group.config_tag);
    write_text(
        path,
        &render_scatter_svg(&title, &group.points, &group.profile, &group.outliers),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{classify_outliers, fit_ols_origin};

    #[test]
    fn ticks() {
        assert_eq!(nice_step(1000.0, 5), 200.0);
        assert_eq!(nice_step(9.0, 6), 2.0);
        assert!((nice_step(0.07, 6) - 0.02).abs() < 1e-15);
        assert_eq!(nice_step(0.0, 6), 1.0);
        assert_eq!(decimals(0.02), 2);
        assert_eq!(decimals(200.0), 0);
    }

    #[test]
    fn svg_contains_parts() {
        let mut points: Vec<ProfilePoint> = (1..=8)
            .map(|i| ProfilePoint::new(format!("s{i}"), 100.0 * i as f64, i as f64, 1.0, 0.05))
            .collect();
        points[4].c = 9.0;
        let prof = fit_ols_origin(&points).unwrap();
        let out = classify_outliers(&points, &prof);
        let svg = render_scatter_svg("1068 <x>", &points, &prof, &out);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains(r#"version="1.1""#));
        assert_eq!(svg.matches("<circle").count(), 8);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("1068 &lt;x&gt;"));
        assert!(svg.contains("CPU time (ms)") && svg.contains("Energy (J)"));
        assert_eq!(svg, render_scatter_svg("1068 <x>", &points, &prof, &out));
    }
}
