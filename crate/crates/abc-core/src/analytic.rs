//! Entire realizations of slide words and the strip geometry around them.
//!
//! A slide word acts by x_target += f(x_read) with piecewise-constant f. The
//! analytic counterpart replaces each f by its heat-kernel smoothing and
//! keeps the composition structure: an `AnalyticTorusMap` is an ordered
//! stack of elementary atoms, either a smoothed slide or a rigid
//! translation. Inverses are structural (reverse the stack, flip signs), so
//! a map composed with its inverse telescopes term by term and the roundtrip
//! error is pure floating-point noise rather than an approximation error.
//!
//! The bad set E of a built conjugator is deterministic geometry, not a
//! measurement: around every piece boundary of every slide we carve a collar
//! wide enough to cover both the mollifier's own transition zone and the
//! drift a point can accumulate from the earlier slides' approximation
//! errors. Outside E the displacement of the analytic map matches the exact
//! word to the requested ε by a short triangle-inequality argument, and the
//! collar measures sum below the requested δ by construction.

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::blockslide::SlideWord;
use crate::error::{AbcError, Result};
use crate::mollify::{mollify_step, MollifiedStep};
use crate::rational::Rational;

/// One smoothed slide: x_target += sign · s(x_read), with the collar
/// half-width used for bad-set membership.
#[derive(Clone, Debug)]
pub struct AnalyticSlide {
    pub label: String,
    pub target: usize,
    pub read: usize,
    pub sign: f64,
    /// Half-width, in x units, of the protected collar around each piece
    /// boundary of the underlying step.
    pub collar: f64,
    pub step: Arc<MollifiedStep>,
}

#[derive(Clone, Debug)]
pub enum AnalyticAtom {
    Slide(AnalyticSlide),
    /// Rigid translation; carries no error and no bad set.
    Shift(Vec<f64>),
}

/// An entire torus map as an ordered atom stack, applied left to right.
/// Lifts have the form x + f(x) with ℤ^d-periodic displacement, so
/// evaluation never reduces coordinates mod 1; distances do.
#[derive(Clone, Debug, Default)]
pub struct AnalyticTorusMap {
    pub d: usize,
    pub atoms: Vec<AnalyticAtom>,
}

impl AnalyticTorusMap {
    pub fn identity(d: usize) -> Self {
        AnalyticTorusMap { d, atoms: Vec::new() }
    }

    /// The rotation φ^α, translating x₁ only.
    pub fn rotation_x1(d: usize, alpha: f64) -> Self {
        let mut shift = vec![0.0; d];
        shift[0] = alpha;
        AnalyticTorusMap {
            d,
            atoms: vec![AnalyticAtom::Shift(shift)],
        }
    }

    /// Composition: self first, then `other`.
    pub fn then(&self, other: &AnalyticTorusMap) -> Self {
        assert_eq!(self.d, other.d, "composing maps of different dimension");
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        AnalyticTorusMap { d: self.d, atoms }
    }

    pub fn inverse(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .rev()
            .map(|a| match a {
                AnalyticAtom::Slide(s) => AnalyticAtom::Slide(AnalyticSlide {
                    label: format!("{}^-1", s.label),
                    sign: -s.sign,
                    ..s.clone()
                }),
                AnalyticAtom::Shift(v) => {
                    AnalyticAtom::Shift(v.iter().map(|c| -c).collect())
                }
            })
            .collect();
        AnalyticTorusMap { d: self.d, atoms }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_flagged(x).0
    }

    /// Evaluate and report whether any slide read its argument inside the
    /// collar of one of its piece boundaries (membership in E).
    pub fn eval_flagged(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let mut v = x.to_vec();
        let mut flagged = false;
        for atom in &self.atoms {
            match atom {
                AnalyticAtom::Slide(s) => {
                    let arg = v[s.read];
                    if near_boundary(arg, s.step.target.den, s.collar) {
                        flagged = true;
                    }
                    v[s.target] += s.sign * s.step.eval(arg);
                }
                AnalyticAtom::Shift(t) => {
                    for (c, dt) in v.iter_mut().zip(t) {
                        *c += dt;
                    }
                }
            }
        }
        (v, flagged)
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut v = z.to_vec();
        for atom in &self.atoms {
            match atom {
                AnalyticAtom::Slide(s) => {
                    let w = s.step.eval_complex(v[s.read]);
                    v[s.target] += w * s.sign;
                }
                AnalyticAtom::Shift(t) => {
                    for (c, dt) in v.iter_mut().zip(t) {
                        *c += Complex64::new(*dt, 0.0);
                    }
                }
            }
        }
        v
    }

    /// Jacobian by the chain rule. Every slide contributes I + s'·E_{t,r}
    /// (unit triangular), a shift contributes I, so the product has exact
    /// determinant 1 in real arithmetic.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut j = identity_matrix(d);
        let mut v = x.to_vec();
        for atom in &self.atoms {
            match atom {
                AnalyticAtom::Slide(s) => {
                    let c = s.sign * s.step.deriv(v[s.read]);
                    // row_target += c · row_read, the product (I + cE)·J
                    for col in 0..d {
                        j[s.target][col] += c * j[s.read][col];
                    }
                    v[s.target] += s.sign * s.step.eval(v[s.read]);
                }
                AnalyticAtom::Shift(t) => {
                    for (c, dt) in v.iter_mut().zip(t) {
                        *c += dt;
                    }
                }
            }
        }
        j
    }

    /// Widen every slide collar by `extra`. A stack built from several
    /// words needs slack for the drift the other words contribute before a
    /// slide reads its coordinate.
    pub fn widen_collars(&mut self, extra: f64) {
        for a in &mut self.atoms {
            if let AnalyticAtom::Slide(s) = a {
                s.collar += extra;
            }
        }
    }

    /// Count of smoothed slides (shift atoms carry no modes).
    pub fn slide_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| matches!(a, AnalyticAtom::Slide(_)))
            .count()
    }
}

fn identity_matrix(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn near_boundary(x: f64, den: u64, collar: f64) -> bool {
    let t = x.rem_euclid(1.0) * den as f64;
    (t - t.round()).abs() < collar * den as f64
}

/// Determinant by LU elimination with partial pivoting.
pub fn det_lu(mat: &[Vec<f64>]) -> f64 {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    det
}

/// Torus distance of two reals: length of the short arc.
pub fn torus_dist(a: f64, b: f64) -> f64 {
    let t = (a - b).rem_euclid(1.0);
    t.min(1.0 - t)
}

/// Smooth a slide word into an analytic map that stays within `eps` of the
/// exact word outside a bad set of measure < `delta`, and commutes with
/// φ^{1/q} structurally.
///
/// Budgets: slide i gets ε_i = ε/2s and a δ share weighted by its boundary
/// count, δ_i = (δ/8)(1/s + den_i/Σden). The weighting keeps collar widths
/// comparable across slides, so a word mixing coarse and fine steps does not
/// burn its measure budget on the coarse ones while the fine ones go
/// needle-sharp. The bad-set collar of a slide is twice its mollifier collar
/// plus ε/2 of drift slack, so a point outside E reads every step on the
/// piece the exact orbit reads, and the errors add up to at most ε/2. The
/// collar measures total at most δ/2 + ε·Σ den_i, and the build refuses
/// budgets where that exceeds δ.
pub fn build_h_analytic(
    word: &SlideWord,
    q: u64,
    eps: f64,
    delta: f64,
) -> Result<AnalyticTorusMap> {
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(AbcError::Parameter(format!(
            "analytic build needs eps > 0 and delta in (0,1), got {eps}, {delta}"
        )));
    }
    let d = word
        .slides
        .iter()
        .map(|s| s.target.max(s.read) + 1)
        .max()
        .unwrap_or(2)
        .max(2);

    // Constant slides become rigid shifts; only genuine steps need smoothing.
    let mut smoothed = Vec::new();
    let mut den_sum = 0.0;
    for slide in &word.slides {
        if slide.f.min_value() == slide.f.max_value() {
            continue;
        }
        den_sum += slide.f.den as f64;
        smoothed.push(slide);
    }
    let s = smoothed.len().max(1);
    if eps * den_sum > delta / 2.0 {
        return Err(AbcError::MollifyRange {
            requested_eps: eps,
            requested_delta: delta,
            achievable_eps: delta / (2.0 * den_sum),
            achievable_delta: (2.0 * eps * den_sum).min(1.0),
        });
    }

    let eps_slide = eps / (2.0 * s as f64);
    let mut atoms = Vec::with_capacity(word.slides.len());
    for slide in &word.slides {
        let c = slide.f.min_value();
        if c == slide.f.max_value() {
            let cf = c.to_f64().unwrap();
            if cf != 0.0 {
                let mut t = vec![0.0; d];
                t[slide.target] = cf;
                atoms.push(AnalyticAtom::Shift(t));
            }
            continue;
        }
        let (period, _) = slide.f.structural_period();
        if slide.read == 0 && period % q != 0 {
            return Err(AbcError::Parameter(format!(
                "slide {} reads x₁ but its step has period 1/{period}, which \
                 does not refine 1/{q}; the word does not commute with φ^(1/{q})",
                slide.label
            )));
        }
        let delta_slide =
            delta / 8.0 * (1.0 / s as f64 + slide.f.den as f64 / den_sum);
        let step = mollify_step(&slide.f, period, eps_slide, delta_slide)?;
        let collar = delta_slide / slide.f.den as f64 + eps / 2.0;
        atoms.push(AnalyticAtom::Slide(AnalyticSlide {
            label: slide.label.clone(),
            target: slide.target,
            read: slide.read,
            sign: 1.0,
            collar,
            step: Arc::new(step),
        }));
    }
    Ok(AnalyticTorusMap { d, atoms })
}

/// Sampled comparison of an analytic map against its exact slide word.
#[derive(Debug, Clone)]
pub struct ClosenessReport {
    pub samples: u64,
    pub eps: f64,
    pub delta: f64,
    /// Fraction of samples that landed in the bad set E.
    pub bad_fraction: f64,
    /// Sup of the displacement difference outside E.
    pub worst_good_error: f64,
    /// Sup over all samples, bad ones included.
    pub worst_error: f64,
}

impl ClosenessReport {
    pub fn passes(&self) -> bool {
        self.worst_good_error < self.eps && self.bad_fraction < self.delta
    }
}

/// Monte-Carlo closeness report: exact word on rational points against the
/// analytic map on their float images.
pub fn closeness_report(
    map: &AnalyticTorusMap,
    word: &SlideWord,
    eps: f64,
    delta: f64,
    samples: usize,
    seed: u64,
) -> ClosenessReport {
    const DEN: i64 = 1 << 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0u64;
    let mut worst_good = 0.0f64;
    let mut worst_all = 0.0f64;
    for _ in 0..samples {
        let exact: Vec<Rational> = (0..map.d)
            .map(|_| Rational::new(rng.gen_range(0..DEN).into(), DEN.into()))
            .collect();
        let x: Vec<f64> = exact.iter().map(|v| v.to_f64().unwrap()).collect();
        let image_exact = apply_word_exact(word, &exact);
        let (image, flagged) = map.eval_flagged(&x);
        let err = image
            .iter()
            .zip(&image_exact)
            .map(|(a, b)| torus_dist(*a, b.to_f64().unwrap()))
            .fold(0.0, f64::max);
        worst_all = worst_all.max(err);
        if flagged {
            bad += 1;
        } else {
            worst_good = worst_good.max(err);
        }
    }
    ClosenessReport {
        samples: samples as u64,
        eps,
        delta,
        bad_fraction: bad as f64 / samples as f64,
        worst_good_error: worst_good,
        worst_error: worst_all,
    }
}

/// Exact action of a slide word on a rational point.
pub fn apply_word_exact(word: &SlideWord, x: &[Rational]) -> Vec<Rational> {
    let mut v = x.to_vec();
    for s in &word.slides {
        let add = s.f.value_at(&v[s.read]);
        v[s.target] += add;
    }
    v
}

/// Sup over sampled points of the commutation defect
/// ‖h(x + e₁/q) − (h(x) + e₁/q)‖ on the torus.
pub fn commutation_residual(
    map: &AnalyticTorusMap,
    q: u64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..map.d).map(|_| rng.gen()).collect();
        let mut shifted = x.clone();
        shifted[0] += 1.0 / q as f64;
        let a = map.eval(&shifted);
        let mut b = map.eval(&x);
        b[0] += 1.0 / q as f64;
        for (u, w) in a.iter().zip(&b) {
            worst = worst.max(torus_dist(*u, *w));
        }
    }
    worst
}

/// Sampled sup of |∂F_i/∂x_j| over the real torus.
pub fn derivative_norm(map: &AnalyticTorusMap, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..map.d).map(|_| rng.gen()).collect();
        for row in map.jacobian(&x) {
            for e in row {
                worst = worst.max(e.abs());
            }
        }
    }
    worst
}

/// Sampled estimate of d̃_ρ(f, g) = max_i inf_n ‖f_i − g_i + n‖_ρ: boundary
/// points carry Im = ±ρ in every coordinate, the integer representative is
/// chosen per coordinate to minimize the sampled sup. Overflow inside either
/// map propagates as +∞.
pub fn d_tilde_rho(
    f: &AnalyticTorusMap,
    g: &AnalyticTorusMap,
    rho: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    assert_eq!(f.d, g.d, "metric needs maps of one dimension");
    let d = f.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs: Vec<Vec<Complex64>> = vec![Vec::new(); d];
    for _ in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
        for pattern in 0..(1u32 << d) {
            let z: Vec<Complex64> = x
                .iter()
                .enumerate()
                .map(|(i, &re)| {
                    let sign = if pattern >> i & 1 == 0 { 1.0 } else { -1.0 };
                    Complex64::new(re, sign * rho)
                })
                .collect();
            let fz = f.eval_complex(&z);
            let gz = g.eval_complex(&z);
            for i in 0..d {
                let diff = fz[i] - gz[i];
                if !diff.re.is_finite() || !diff.im.is_finite() {
                    return f64::INFINITY;
                }
                diffs[i].push(diff);
            }
        }
    }
    let mut worst = 0.0f64;
    for coord in &diffs {
        let mut candidates: Vec<i64> = coord.iter().map(|c| c.re.round() as i64).collect();
        candidates.push(0);
        candidates.sort_unstable();
        candidates.dedup();
        let best = candidates
            .iter()
            .map(|&n| {
                coord
                    .iter()
                    .map(|c| (c - Complex64::new(n as f64, 0.0)).norm())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    worst
}

/// The symmetric metric d_ρ(f, g) = max(d̃_ρ(f,g), d̃_ρ(f⁻¹,g⁻¹)).
pub fn d_rho(
    f: &AnalyticTorusMap,
    g: &AnalyticTorusMap,
    rho: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let forward = d_tilde_rho(f, g, rho, samples, seed);
    if forward.is_infinite() {
        return forward;
    }
    forward.max(d_tilde_rho(&f.inverse(), &g.inverse(), rho, samples, seed))
}
