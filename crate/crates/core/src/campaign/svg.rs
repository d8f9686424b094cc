use std::fmt::Write as _;

use crate::curve_ref::ReferencedCurve;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;

fn x_of(theta: f64) -> f64 {
    M + theta / 360.0 * (W - 2.0 * M)
}

fn y_of(v: f64) -> f64 {
    H - M - v / 5.0 * (H - 2.0 * M)
}

/// Referenced I×I and Q×I curves on a θ_M / volts plot.
pub fn plot_referenced(title: &str, curves: &[(&ReferencedCurve, &str)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    for k in 0..=8 {
        let th = 45.0 * k as f64;
        let x = x_of(th);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{th}</text>"##,
            y_of(0.0),
            y_of(5.0),
            y_of(0.0) + 16.0
        );
    }
    for v in 0..=5 {
        let y = y_of(v as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v}</text>"##,
            x_of(0.0),
            x_of(360.0),
            x_of(0.0) - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">θM (deg)</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">Vd (V)</text>"#, H / 2.0, H / 2.0);
    for (i, (c, color)) in curves.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = c.theta_m_axis.iter().copied().zip(c.volts.iter().copied()).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|(t, v)| format!("{:.2},{:.2}", x_of(*t), y_of(*v))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let ly = 40.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{}">{}</text>"#,
            W - M - 70.0,
            W - M - 50.0,
            W - M - 45.0,
            ly + 4.0,
            c.mode
        );
    }
    s.push_str("</svg>\n");
    s
}
