//! Minimal static SVG charts. Output depends only on the inputs.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 130.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 110.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, esc(title));
    s
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn axes(s: &mut String, lo: f64, hi: f64, y_label: &str) -> impl Fn(f64) -> f64 {
    let plot_h = H - PAD_T - PAD_B;
    let y = move |v: f64| PAD_T + plot_h * (1.0 - (v - lo) / (hi - lo));
    let _ = writeln!(
        s,
        r##"<line x1="{PAD_L}" y1="{PAD_T}" x2="{PAD_L}" y2="{}" stroke="#333"/>"##,
        H - PAD_B
    );
    let _ = writeln!(
        s,
        r##"<line x1="{PAD_L}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#333"/>"##,
        y(0.0f64.clamp(lo, hi)),
        W - PAD_R
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            PAD_L - 4.0,
            y(v) + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    y
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Vertical bars, one per label.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut s = header(title);
    let (lo, hi) = range(bars.iter().map(|b| b.1));
    let y = axes(&mut s, lo, hi, y_label);
    let n = bars.len().max(1) as f64;
    let slot = (W - PAD_L - PAD_R) / n;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = PAD_L + slot * i as f64 + slot * 0.1;
        let (top, bottom) = (y(v.max(0.0)), y(v.min(0.0)));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            slot * 0.8,
            (bottom - top).max(0.0),
            PALETTE[0]
        );
        if bars.len() <= 40 {
            let lx = x + slot * 0.4;
            let ly = H - PAD_B + 12.0;
            let _ = writeln!(
                s,
                r#"<text x="{lx:.2}" y="{ly:.2}" transform="rotate(40 {lx:.2} {ly:.2})" font-size="9">{}</text>"#,
                esc(label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Polylines over a shared x axis of `x_labels`.
pub fn line_chart(title: &str, y_label: &str, x_labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let mut s = header(title);
    let (lo, hi) = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let y = axes(&mut s, lo, hi, y_label);
    let n = x_labels.len().max(2) as f64;
    let x = |i: usize| PAD_L + (W - PAD_L - PAD_R) * i as f64 / (n - 1.0);
    let every = (x_labels.len() / 24).max(1);
    for (i, label) in x_labels.iter().enumerate().step_by(every) {
        let lx = x(i);
        let ly = H - PAD_B + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" transform="rotate(40 {lx:.2} {ly:.2})" font-size="9">{}</text>"#,
            esc(label)
        );
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            W - PAD_R + 10.0,
            PAD_T + 12.0 * (k as f64 + 1.0),
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
