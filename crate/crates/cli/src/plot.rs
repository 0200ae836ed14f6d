//! Standalone SVG plots: sample scatter over density and reward contours, and
//! line charts. Every input comes from persisted event logs.

use std::fmt::Write as _;

use evosearch_core::{GaussianMixture, RewardFn};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;
const GRID: usize = 140;

pub fn method_color(name: &str) -> &'static str {
    match name {
        "evosearch" => "#c0392b",
        "best_of_n" => "#2471a3",
        "particle_sampling" => "#d4a017",
        _ => "#555555",
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (SIZE - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        SIZE - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (SIZE - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="13">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, x_ticks: &[(f64, String)]) {
    let (l, r, b, t) = (MARGIN, SIZE - MARGIN, SIZE - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r##"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        r - l,
        b - t
    );
    for (v, label) in x_ticks {
        let x = f.px(*v);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{:.1}" stroke="#333"/>"##,
            b + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            b + 16.0
        );
    }
    for v in ticks(f.y.0, f.y.1) {
        let y = f.py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#333"/>"##,
            l - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(ylabel)
    );
}

type Segment = ((f64, f64), (f64, f64));

/// Marching squares over a row-major `n x n` grid sampled on `[lo, hi]^2`.
fn contour(values: &[f64], n: usize, lo: f64, hi: f64, level: f64) -> Vec<Segment> {
    let d = (hi - lo) / (n - 1) as f64;
    let at = |i: usize, j: usize| values[j * n + i];
    let lerp = |a: f64, b: f64| {
        if (b - a).abs() < 1e-300 {
            0.5
        } else {
            (level - a) / (b - a)
        }
    };
    let mut segs = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (x0, y0) = (lo + i as f64 * d, lo + j as f64 * d);
            let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            if c.iter().any(|v| !v.is_finite()) {
                continue;
            }
            // edge crossing points: bottom, right, top, left
            let e = [
                (x0 + lerp(c[0], c[1]) * d, y0),
                (x0 + d, y0 + lerp(c[1], c[2]) * d),
                (x0 + lerp(c[3], c[2]) * d, y0 + d),
                (x0, y0 + lerp(c[0], c[3]) * d),
            ];
            let case = c
                .iter()
                .enumerate()
                .fold(0, |acc, (k, v)| acc | (usize::from(*v > level) << k));
            let pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                5 => &[(3, 2), (0, 1)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                10 => &[(3, 0), (1, 2)],
                _ => &[],
            };
            segs.extend(pairs.iter().map(|&(a, b)| (e[a], e[b])));
        }
    }
    segs
}

fn draw_segments(out: &mut String, f: &Frame, segs: &[Segment], style: &str) {
    if segs.is_empty() {
        return;
    }
    let mut d = String::new();
    for ((ax, ay), (bx, by)) in segs {
        let _ = write!(
            d,
            "M{:.2} {:.2}L{:.2} {:.2}",
            f.px(*ax),
            f.py(*ay),
            f.px(*bx),
            f.py(*by)
        );
    }
    let _ = writeln!(out, r#"<path d="{d}" fill="none" {style}/>"#);
}

/// Marginal of the mixture over the first two coordinates.
fn planar(model: &GaussianMixture) -> Option<GaussianMixture> {
    if model.dim() < 2 {
        return None;
    }
    let means = (0..model.num_components())
        .map(|i| model.mean(i)[..2].to_vec())
        .collect();
    GaussianMixture::new(model.weights().to_vec(), means, model.variances().to_vec()).ok()
}

/// Samples (first two coordinates) over log-density contours of the model
/// and the reward's high-value locus.
pub fn scatter_svg(
    model: &GaussianMixture,
    reward: &RewardFn,
    groups: &[(String, Vec<[f64; 2]>)],
    title: &str,
) -> String {
    let mut extent: f64 = 1.0;
    for i in 0..model.num_components() {
        let reach = model.variances()[i].sqrt() * 3.0;
        for c in model.mean(i).iter().take(2) {
            extent = extent.max(c.abs() + reach);
        }
    }
    if let RewardFn::Circle { radius } | RewardFn::RadialBand { radius, .. } = reward {
        extent = extent.max(radius * 1.15);
    }
    for (_, pts) in groups {
        for p in pts {
            extent = extent.max(p[0].abs()).max(p[1].abs());
        }
    }
    let extent = (extent * 1.05 * 10.0).ceil() / 10.0;
    let frame = Frame {
        x: (-extent, extent),
        y: (-extent, extent),
    };
    let mut out = String::new();
    header(&mut out, title);
    let xt: Vec<(f64, String)> = ticks(-extent, extent)
        .into_iter()
        .map(|v| (v, tick_label(v)))
        .collect();
    axes(&mut out, &frame, "x0", "x1", &xt);

    let coords: Vec<f64> = (0..GRID)
        .map(|i| -extent + 2.0 * extent * i as f64 / (GRID - 1) as f64)
        .collect();
    if let Some(p) = planar(model) {
        let logp: Vec<f64> = coords
            .iter()
            .flat_map(|&y| coords.iter().map(move |&x| (x, y)))
            .map(|(x, y)| p.log_density(&[x, y]))
            .collect();
        let top = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for drop in [0.5, 2.0, 4.5] {
            let segs = contour(&logp, GRID, -extent, extent, top - drop);
            draw_segments(
                &mut out,
                &frame,
                &segs,
                r##"stroke="#7f8c8d" stroke-width="0.8""##,
            );
        }
    }

    match reward {
        RewardFn::Circle { radius } => {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#27ae60" stroke-width="1.5" stroke-dasharray="5 3"/>"##,
                frame.px(0.0),
                frame.py(0.0),
                frame.px(*radius) - frame.px(0.0)
            );
        }
        RewardFn::RadialBand { center, radius, .. } if center.len() >= 2 => {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#27ae60" stroke-width="1.5" stroke-dasharray="5 3"/>"##,
                frame.px(center[0]),
                frame.py(center[1]),
                frame.px(*radius) - frame.px(0.0)
            );
        }
        _ if model.dim() == 2 => {
            let r: Vec<f64> = coords
                .iter()
                .flat_map(|&y| coords.iter().map(move |&x| (x, y)))
                .map(|(x, y)| reward.evaluate(&[x, y]))
                .collect();
            let finite = r.iter().copied().filter(|v| v.is_finite());
            let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if hi > lo {
                let segs = contour(&r, GRID, -extent, extent, hi - 0.1 * (hi - lo));
                draw_segments(
                    &mut out,
                    &frame,
                    &segs,
                    r##"stroke="#27ae60" stroke-width="1.2" stroke-dasharray="5 3""##,
                );
            }
        }
        _ => {}
    }

    for (name, pts) in groups {
        let color = method_color(name);
        for p in pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{color}" fill-opacity="0.75"/>"#,
                frame.px(p[0]),
                frame.py(p[1])
            );
        }
    }
    legend(&mut out, groups.iter().map(|g| g.0.as_str()));
    out.push_str("</svg>\n");
    out
}

fn legend<'a>(out: &mut String, names: impl Iterator<Item = &'a str>) {
    for (k, name) in names.enumerate() {
        let y = MARGIN + 14.0 + 15.0 * k as f64;
        let x = SIZE - MARGIN - 120.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{}"/>"#,
            y - 9.0,
            method_color(name)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}">{}</text>"#,
            x + 14.0,
            escape(name)
        );
    }
}

/// Step-free line chart of several named series. With `log_x`, x values
/// must be positive.
pub fn line_chart_svg(
    series: &[(String, Vec<(f64, f64)>)],
    title: &str,
    xlabel: &str,
    ylabel: &str,
    log_x: bool,
) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts = series
        .iter()
        .flat_map(|s| s.1.iter())
        .filter(|p| p.1.is_finite());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        xlo = xlo.min(tx(x));
        xhi = xhi.max(tx(x));
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    if !xlo.is_finite() {
        (xlo, xhi, ylo, yhi) = (0.0, 1.0, 0.0, 1.0);
    }
    if xhi - xlo < 1e-12 {
        xlo -= 0.5;
        xhi += 0.5;
    }
    let pad = ((yhi - ylo) * 0.08).max(1e-3);
    let frame = Frame {
        x: (xlo, xhi),
        y: (ylo - pad, yhi + pad),
    };
    let mut out = String::new();
    header(&mut out, title);
    let xt: Vec<(f64, String)> = if log_x {
        (xlo.floor() as i32..=xhi.ceil() as i32)
            .map(f64::from)
            .filter(|e| *e >= xlo - 1e-9 && *e <= xhi + 1e-9)
            .map(|e| (e, tick_label(10f64.powf(e))))
            .collect()
    } else {
        ticks(xlo, xhi)
            .into_iter()
            .map(|v| (v, tick_label(v)))
            .collect()
    };
    axes(&mut out, &frame, xlabel, ylabel, &xt);
    for (name, s) in series {
        let color = method_color(name);
        let finite: Vec<&(f64, f64)> = s.iter().filter(|p| p.1.is_finite()).collect();
        let mut d = String::new();
        for (k, (x, y)) in finite.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2} {:.2}",
                if k == 0 { "M" } else { "L" },
                frame.px(tx(*x)),
                frame.py(*y)
            );
        }
        if finite.len() > 1 {
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.6"/>"#
            );
        }
        // markers only where they stay legible
        let marked = if finite.len() <= 30 { &finite[..] } else { &[] };
        for (x, y) in marked {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                frame.px(tx(*x)),
                frame.py(*y)
            );
        }
    }
    legend(&mut out, series.iter().map(|s| s.0.as_str()));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover_the_range() {
        let t = ticks(0.0, 1.0);
        let want = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        assert_eq!(t.len(), want.len());
        assert!(t.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
        let t = ticks(-2.3, 2.3);
        assert!(t.contains(&0.0) && t.len() >= 4);
        assert!(t.iter().all(|v| (-2.3..=2.3).contains(v)));
    }

    #[test]
    fn contour_of_a_cone_is_a_closed_ring() {
        let n = 41;
        let vals: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k % n, k / n);
                let (x, y) = (-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64);
                (x * x + y * y).sqrt()
            })
            .collect();
        let segs = contour(&vals, n, -2.0, 2.0, 1.0);
        assert!(segs.len() > 40);
        for ((ax, ay), (bx, by)) in segs {
            assert!(((ax * ax + ay * ay).sqrt() - 1.0).abs() < 0.02);
            assert!(((bx * bx + by * by).sqrt() - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn scatter_is_deterministic_svg() {
        let m = GaussianMixture::ring(8, 1.0, 0.04).unwrap();
        let groups = vec![("evosearch".to_string(), vec![[1.0, 0.5], [-0.3, 1.9]])];
        let a = scatter_svg(&m, &RewardFn::Circle { radius: 2.0 }, &groups, "t");
        let b = scatter_svg(&m, &RewardFn::Circle { radius: 2.0 }, &groups, "t");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("fill-opacity").count(), 2);
    }
}
