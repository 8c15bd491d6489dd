//! Hand-rolled SVG figures. All coordinates go through one `{:.6}`
//! formatter, so identical inputs give identical bytes on every platform.

use crate::blockslide::ABlockLayout;
use crate::error::Result;
use crate::report::{HPatternFigure, MollifyFigure, SpeedRow, TowerFigure};

const PALETTE: [&str; 12] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c",
    "#dc7ec0", "#797979", "#d5bb67", "#82c6e2", "#2e5f8a", "#b55d60",
];

fn fnum(v: f64) -> String {
    format!("{v:.6}")
}

struct Svg {
    w: f64,
    h: f64,
    body: String,
}

impl Svg {
    fn new(w: f64, h: f64) -> Svg {
        Svg {
            w,
            h,
            body: String::new(),
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
            fnum(x),
            fnum(y),
            fnum(w),
            fnum(h),
            fill
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
            fnum(x1),
            fnum(y1),
            fnum(x2),
            fnum(y2),
            stroke,
            fnum(width)
        ));
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", fnum(*x), fnum(*y)))
            .collect();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
            pts.join(" "),
            stroke,
            fnum(width)
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"sans-serif\">{}</text>\n",
            fnum(x),
            fnum(y),
            fnum(size),
            content
        ));
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
             viewBox=\"0 0 {} {}\">\n<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n{}</svg>\n",
            fnum(self.w),
            fnum(self.h),
            fnum(self.w),
            fnum(self.h),
            fnum(self.w),
            fnum(self.h),
            self.body
        )
    }
}

/// Action of the block conjugator on one fundamental sector: two copies of
/// the natural grid, cells colored by their x₂ band before and after.
/// Block-adjacent source bands land block-adjacent, advancing by r per
/// sector, which is the structure the original drawing shows.
pub fn h_pattern_svg(fig: &HPatternFigure) -> Result<String> {
    let layout = ABlockLayout::new(2, fig.l, fig.q)?;
    let x1_cells = layout.x1_den;
    let x2_cells = fig.l;
    let pane = 360.0;
    let gap = 40.0;
    let top = 24.0;
    let mut svg = Svg::new(2.0 * pane + 3.0 * gap, pane + top + 40.0);
    let cw = pane / x1_cells as f64;
    let ch = pane / x2_cells as f64;
    svg.text(gap, 16.0, 12.0, "source (colored by x2 band)");
    svg.text(pane + 2.0 * gap, 16.0, 12.0, "image under the conjugator");
    for x1 in 0..x1_cells {
        for x2 in 0..x2_cells {
            let color = PALETTE[(x2 % x2_cells) as usize % PALETTE.len()];
            // source pane
            svg.rect(
                gap + x1 as f64 * cw,
                top + (x2_cells - 1 - x2) as f64 * ch,
                cw,
                ch,
                color,
            );
            let digits = layout.decode_x1(x1);
            let (digits2, j2) = layout.h_image(&digits, x2, fig.p, fig.r);
            svg.rect(
                pane + 2.0 * gap + layout.encode_x1(&digits2) as f64 * cw,
                top + (x2_cells - 1 - j2) as f64 * ch,
                cw,
                ch,
                color,
            );
        }
    }
    // sector boundaries at multiples of 1/q
    for s in 0..=fig.q {
        let x = pane * s as f64 / fig.q as f64;
        svg.line(gap + x, top, gap + x, top + pane, "black", 0.8);
        svg.line(
            pane + 2.0 * gap + x,
            top,
            pane + 2.0 * gap + x,
            top + pane,
            "black",
            0.8,
        );
    }
    svg.text(
        gap,
        top + pane + 24.0,
        12.0,
        &format!("l={} p={} q={} r={}", fig.l, fig.p, fig.q, fig.r),
    );
    Ok(svg.finish())
}

/// The two tower bases on the x₁ axis with their level ladders: stripes of
/// tower 1 (height m) and tower 2 (height m+1) at their exact offsets, with
/// each level translated by α_{n+1}.
pub fn tower_svg(fig: &TowerFigure) -> String {
    let w = 720.0;
    let axis = 620.0;
    let left = 60.0;
    let row = 26.0;
    let heights = fig.m + 1;
    let h = 80.0 + heights as f64 * row;
    let mut svg = Svg::new(w, h);
    svg.text(left, 18.0, 12.0, &format!("tower bases, q={} m={}", fig.q, fig.m));
    for (level, y0) in (0..heights).map(|lv| (lv, h - 30.0 - lv as f64 * row)) {
        svg.line(left, y0, left + axis, y0, "#cccccc", 0.5);
        svg.text(left - 44.0, y0 + 4.0, 10.0, &format!("T^{level}"));
        for (idx, offsets) in [&fig.base1_offsets, &fig.base2_offsets].into_iter().enumerate() {
            if idx == 0 && level >= fig.m {
                continue; // tower 1 stops at height m
            }
            let color = PALETTE[idx];
            for (_, off) in offsets {
                let x = (off + level as f64 * fig.alpha_next).rem_euclid(1.0);
                svg.rect(
                    left + x * axis,
                    y0 - row * 0.72,
                    fig.stripe_width * axis,
                    row * 0.64,
                    color,
                );
            }
        }
    }
    svg.text(
        left,
        h - 6.0,
        10.0,
        "blue: height-m tower, orange: height-(m+1) tower; x1 from 0 to 1",
    );
    svg.finish()
}

/// Speed-of-approximation curves across stages, tower pair and cyclic.
pub fn speed_svg(rows: &[SpeedRow]) -> String {
    let w = 520.0;
    let h = 360.0;
    let left = 70.0;
    let bottom = h - 50.0;
    let top = 30.0;
    let mut svg = Svg::new(w, h);
    let max = rows
        .iter()
        .flat_map(|r| [r.eta_total_f64, r.cyclic_total_f64])
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let step = if rows.len() > 1 {
        (w - left - 30.0) / (rows.len() - 1) as f64
    } else {
        0.0
    };
    let scale = |v: f64| bottom - (bottom - top) * v / (max * 1.05);
    for (series, color, label) in [
        (
            rows.iter().map(|r| r.eta_total_f64).collect::<Vec<_>>(),
            PALETTE[0],
            "tower pair",
        ),
        (
            rows.iter().map(|r| r.cyclic_total_f64).collect::<Vec<_>>(),
            PALETTE[1],
            "cyclic",
        ),
    ] {
        let pts: Vec<(f64, f64)> = series
            .iter()
            .enumerate()
            .map(|(i, v)| (left + i as f64 * step, scale(*v)))
            .collect();
        svg.polyline(&pts, color, 1.6);
        if let Some((x, y)) = pts.last() {
            svg.text(x + 4.0, *y, 10.0, label);
        }
    }
    svg.line(left, bottom, w - 20.0, bottom, "black", 1.0);
    svg.line(left, bottom, left, top, "black", 1.0);
    for (i, r) in rows.iter().enumerate() {
        svg.text(
            left + i as f64 * step - 8.0,
            bottom + 16.0,
            10.0,
            &format!("stage {}", r.stage),
        );
    }
    svg.text(left, 18.0, 12.0, "speed bounds per stage (lower is faster)");
    svg.finish()
}

/// Fejér spectral density over one circle turn.
pub fn spectral_svg(density: &[(f64, f64)]) -> String {
    let w = 520.0;
    let h = 320.0;
    let left = 60.0;
    let bottom = h - 40.0;
    let top = 30.0;
    let mut svg = Svg::new(w, h);
    let max = density.iter().map(|(_, v)| *v).fold(0.0f64, f64::max).max(1e-12);
    let pts: Vec<(f64, f64)> = density
        .iter()
        .map(|(t, v)| {
            (
                left + t * (w - left - 20.0),
                bottom - (bottom - top) * v / (max * 1.05),
            )
        })
        .collect();
    svg.polyline(&pts, PALETTE[4], 1.4);
    svg.line(left, bottom, w - 20.0, bottom, "black", 1.0);
    svg.line(left, bottom, left, top, "black", 1.0);
    svg.text(left, 18.0, 12.0, "Fejer spectral density estimate");
    svg.text(w - 60.0, bottom + 16.0, 10.0, "theta");
    svg.finish()
}

/// A step function and its smoothing, with the bad-set collars shaded.
pub fn mollify_svg(fig: &MollifyFigure) -> String {
    let w = 560.0;
    let h = 340.0;
    let left = 50.0;
    let bottom = h - 40.0;
    let top = 30.0;
    let mut svg = Svg::new(w, h);
    let lo = fig
        .values
        .iter()
        .chain(fig.curve.iter().map(|(_, v)| v))
        .fold(f64::INFINITY, |a, b| a.min(*b));
    let hi = fig
        .values
        .iter()
        .chain(fig.curve.iter().map(|(_, v)| v))
        .fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let span = (hi - lo).max(1e-9);
    let sx = |x: f64| left + x * (w - left - 20.0);
    let sy = |v: f64| bottom - (bottom - top) * (v - lo) / (span * 1.05);
    // collars around the jump lattice
    let half = fig.delta / (2.0 * fig.den as f64);
    for j in 0..=fig.den {
        let c = j as f64 / fig.den as f64;
        let x0 = (c - half).max(0.0);
        let x1 = (c + half).min(1.0);
        svg.rect(sx(x0), top, sx(x1) - sx(x0), bottom - top, "#f3d9d9");
    }
    // the step itself
    for (j, v) in fig.values.iter().enumerate() {
        let x0 = j as f64 / fig.den as f64;
        let x1 = (j + 1) as f64 / fig.den as f64;
        svg.line(sx(x0), sy(*v), sx(x1), sy(*v), PALETTE[7], 1.2);
    }
    let pts: Vec<(f64, f64)> = fig.curve.iter().map(|(x, v)| (sx(*x), sy(*v))).collect();
    svg.polyline(&pts, PALETTE[0], 1.4);
    svg.line(left, bottom, w - 20.0, bottom, "black", 1.0);
    svg.text(left, 18.0, 12.0, "step function and its smoothing; shaded: bad set");
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use num_traits::ToPrimitive;

    #[test]
    fn h_pattern_is_deterministic_and_structural() {
        let fig = HPatternFigure {
            l: 6,
            p: 1,
            q: 3,
            r: 1,
        };
        let a = h_pattern_svg(&fig).unwrap();
        let b = h_pattern_svg(&fig).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        // background plus one source and one image rect per natural-grid cell
        let rects = a.matches("<rect").count();
        assert_eq!(rects, 1 + 2 * (648 * 6) as usize);
    }

    #[test]
    fn tower_offsets_drawn_where_computed() {
        // stage (3,5,1,10): stripes of the height-m tower start at
        // mod1(i·m·α') + 1/(2q) + δ/(2 l^d q²)
        let q = 5u64;
        let m = 3u64;
        let alpha_next = rat(91, 250);
        let inset = rat(1, 10) / rat(2 * 100 * 25, 1);
        let offset_m = rat(1, 2 * 5);
        let mut base1 = Vec::new();
        for i in 0..q - 1 {
            let left = crate::rational::mod1(
                &(rat(i as i64 * m as i64, 1) * &alpha_next + &offset_m + &inset),
            );
            base1.push((left.to_string(), left.to_f64().unwrap()));
        }
        let fig = TowerFigure {
            q,
            m,
            base1_offsets: base1.clone(),
            base2_offsets: vec![("0".into(), 0.0)],
            stripe_width: 1.0 / 10.0,
            alpha_next: alpha_next.to_f64().unwrap(),
        };
        let svg = tower_svg(&fig);
        // the first stripe's x position appears verbatim in the file
        let x = 60.0 + base1[0].1 * 620.0;
        assert!(svg.contains(&format!("x=\"{x:.6}\"")));
        assert_eq!(svg, tower_svg(&fig));
    }

    #[test]
    fn curve_figures_render() {
        let rows = vec![
            SpeedRow {
                stage: 1,
                eta_total: "11/10".into(),
                eta_total_f64: 1.1,
                cyclic_total: "20".into(),
                cyclic_total_f64: 20.0,
            },
            SpeedRow {
                stage: 2,
                eta_total: "1/2".into(),
                eta_total_f64: 0.5,
                cyclic_total: "10".into(),
                cyclic_total_f64: 10.0,
            },
        ];
        let s = speed_svg(&rows);
        assert!(s.contains("polyline"));
        let d: Vec<(f64, f64)> = (0..64)
            .map(|i| (i as f64 / 64.0, 1.0 + (i as f64 * 0.3).sin()))
            .collect();
        assert!(spectral_svg(&d).contains("polyline"));
        let fig = MollifyFigure {
            den: 4,
            values: vec![0.0, 0.5, 0.25, 0.5],
            curve: (0..128)
                .map(|i| (i as f64 / 128.0, 0.3))
                .collect(),
            delta: 0.2,
        };
        assert!(mollify_svg(&fig).contains("rect"));
    }
}
