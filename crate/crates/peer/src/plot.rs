//! Static SVG figures: Kaplan-Meier strata, calibration and secondary
//! outcomes. Output depends only on the inputs, so reruns are byte-identical.

use std::fmt::Write as _;

use peer_core::calibration::CalibrationReport;
use peer_core::evaluation::SecondaryRow;
use peer_core::km::KmCurve;
use peer_core::nomogram::nice_ticks;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 4] = ["#c0392b", "#2c7fb8", "#27ae60", "#8e44ad"];

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear map of data coordinates onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    fn open(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
        let (bx, by) = (self.px(self.x0), self.py(self.y0));
        let _ = writeln!(
            out,
            r#"<path d="M{} {}H{}M{} {}V{}" stroke="black" fill="none"/>"#,
            num(bx),
            num(by),
            num(self.px(self.x1)),
            num(bx),
            num(by),
            num(self.py(self.y1))
        );
        for t in nice_ticks(self.x0, self.x1, 6) {
            let x = self.px(t);
            let _ = writeln!(
                out,
                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
                num(x),
                num(by),
                num(by + 5.0),
                num(by + 18.0),
                num(t)
            );
        }
        for t in nice_ticks(self.y0, self.y1, 5) {
            let y = self.py(t);
            let _ = writeln!(
                out,
                r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"#,
                num(bx - 5.0),
                num(y),
                num(bx),
                num(bx - 8.0),
                num(y + 4.0),
                num(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num((LEFT + W - RIGHT) / 2.0),
            num(H - 14.0),
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            num((TOP + H - BOTTOM) / 2.0),
            escape(ylabel)
        );
    }
}

fn legend(out: &mut String, labels: &[String]) {
    for (k, label) in labels.iter().enumerate() {
        let y = TOP + 8.0 + 18.0 * k as f64;
        let x = W - RIGHT - 150.0;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            num(x),
            num(y),
            PALETTE[k % PALETTE.len()],
            num(x + 18.0),
            num(y + 10.0),
            escape(label)
        );
    }
}

/// Step curves with shaded 95% bands, one per `(label, curve)`.
pub fn km_svg(title: &str, curves: &[(&str, &KmCurve)]) -> String {
    let tmax = curves.iter().map(|(_, c)| c.max_time).fold(0.0, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: if tmax > 0.0 { tmax } else { 1.0 },
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    f.open(&mut out, title, "Days", "Survival probability");
    for (k, (_, c)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        // knots: (start of step, S, low, high)
        let mut knots = vec![(0.0, 1.0, 1.0, 1.0)];
        for i in 0..c.times.len() {
            knots.push((c.times[i], c.surv[i], c.ci_low[i], c.ci_high[i]));
        }
        let end = c.max_time;
        let mut upper = String::new();
        let mut lower = Vec::new();
        let mut line = String::new();
        for (i, &(t, s, lo, hi)) in knots.iter().enumerate() {
            let next = knots.get(i + 1).map_or(end, |k| k.0);
            let (x0, x1) = (num(f.px(t)), num(f.px(next)));
            let _ = write!(upper, "{}{x0} {}L{x1} {}", if i == 0 { "M" } else { "L" }, num(f.py(hi)), num(f.py(hi)));
            lower.push(format!("L{x1} {}L{x0} {}", num(f.py(lo)), num(f.py(lo))));
            let _ = write!(line, "{}{x0} {}L{x1} {}", if i == 0 { "M" } else { "L" }, num(f.py(s)), num(f.py(s)));
        }
        lower.reverse();
        let _ = writeln!(out, r#"<path d="{upper}{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, lower.concat());
        let _ = writeln!(out, r#"<path d="{line}" fill="none" stroke="{color}" stroke-width="2"/>"#);
    }
    let labels: Vec<String> = curves.iter().map(|(l, _)| l.to_string()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Observed against predicted survival per risk group, with the identity
/// line and bootstrap intervals.
pub fn calibration_svg(title: &str, report: &CalibrationReport) -> String {
    let mut lo: f64 = 1.0;
    let mut hi: f64 = 0.0;
    for g in &report.groups {
        for v in [g.predicted, g.observed, g.ci_low, g.ci_high] {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let lo = (lo * 10.0).floor() / 10.0;
    let hi = ((hi * 10.0).ceil() / 10.0).max(lo + 0.1);
    let f = Frame {
        x0: lo,
        x1: hi,
        y0: lo,
        y1: hi,
    };
    let mut out = String::new();
    f.open(
        &mut out,
        title,
        &format!("Predicted survival at day {}", num(report.horizon)),
        "Observed survival (Kaplan-Meier)",
    );
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="4 4"/>"##,
        num(f.px(lo)),
        num(f.py(lo)),
        num(f.px(hi)),
        num(f.py(hi))
    );
    let mut trace = String::new();
    for (k, g) in report.groups.iter().enumerate() {
        let (x, y) = (num(f.px(g.predicted)), num(f.py(g.observed)));
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{}"/>"#,
            num(f.py(g.ci_low)),
            num(f.py(g.ci_high)),
            PALETTE[0]
        );
        let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="4" fill="{}"/>"#, PALETTE[0]);
        let _ = write!(trace, "{}{x} {y}", if k == 0 { "M" } else { "L" });
    }
    let _ = writeln!(out, r#"<path d="{trace}" fill="none" stroke="{}"/>"#, PALETTE[0]);
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: vasopressor and ventilator proportions per stratum.
pub fn secondary_svg(title: &str, rows: &[SecondaryRow]) -> String {
    let f = Frame {
        x0: 0.0,
        x1: rows.len().max(1) as f64,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let base = f.py(0.0);
    let _ = writeln!(out, r#"<path d="M{LEFT} {0}H{1}M{LEFT} {0}V{TOP}" stroke="black" fill="none"/>"#, num(base), num(W - RIGHT));
    for t in nice_ticks(0.0, 1.0, 5) {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{1}" x2="{LEFT}" y2="{1}" stroke="black"/><text x="{2}" y="{3}" text-anchor="end">{4}</text>"#,
            LEFT - 5.0,
            num(y),
            LEFT - 8.0,
            num(y + 4.0),
            num(t)
        );
    }
    let slot = f.px(1.0) - f.px(0.0);
    for (k, r) in rows.iter().enumerate() {
        let x = f.px(k as f64);
        for (b, v) in [r.vasopressor, r.ventilator].into_iter().enumerate() {
            let bx = x + slot * (0.2 + 0.3 * b as f64);
            match v {
                Some(v) => {
                    let _ = writeln!(
                        out,
                        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                        num(bx),
                        num(f.py(v)),
                        num(slot * 0.28),
                        num(base - f.py(v)),
                        PALETTE[b],
                        num(bx + slot * 0.14),
                        num(f.py(v) - 4.0),
                        num(v)
                    );
                }
                None => {
                    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">n/a</text>"#, num(bx + slot * 0.14), num(base - 4.0));
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{:?} risk (n={})</text>"#,
            num(x + slot / 2.0),
            num(base + 18.0),
            r.stratum,
            r.n
        );
    }
    legend(&mut out, &["Vasopressor".to_string(), "Ventilator".to_string()]);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use peer_core::km::kaplan_meier;

    #[test]
    fn km_plot_is_deterministic_and_closed() {
        let c = kaplan_meier(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]).unwrap();
        let a = km_svg("t", &[("High", &c), ("Low", &c)]);
        assert_eq!(a, km_svg("t", &[("High", &c), ("Low", &c)]));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("stroke-width=\"2\"").count(), 2);
    }
}
