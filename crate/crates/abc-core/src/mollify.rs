//! Real-analytic stand-ins for exact step functions.
//!
//! The exact construction slides blocks by piecewise-constant amounts. The
//! analytic one replaces each step profile by a periodic heat-kernel
//! smoothing: on the Fourier side every coefficient is damped by
//! e^{−2π²σ²f²}, which makes the result entire in the argument. Two facts
//! drive the design here.
//!
//! * If the target repeats every 1/N (its kN pieces carry values that repeat
//!   with period k), only frequencies divisible by N carry energy. We store
//!   the modes of the reduced k-piece profile u with s̃(x) = u(frac(N·x)) and
//!   evaluate through that reduction, so the 1/N-periodicity of the smoothed
//!   function is structural rather than a numerical accident.
//! * A Gaussian of width σ at distance u from a jump of height Δ leaves an
//!   error ≤ (Δ/2)·e^{−u²/(2σ²)}. Solving for the requested budget gives the
//!   kernel width σ = u/√(2·ln(2B/ε)) with u = δ/(2·kN) and B the value
//!   spread. Outside the bad set F, the union of kN intervals of length
//!   δ/(kN) centred on the piece boundaries i/(kN) (the one at 0 wraps, so
//!   it appears split as [0, δ/(2kN)] ∪ [1 − δ/(2kN), 1)), the smoothed
//!   function then tracks the step to within ε.
//!
//! Evaluation reduces mode phases exactly: the reduced argument y is split
//! into a 26-bit head and a tail (Veltkamp splitting), so m·y mod 1 is
//! computed without the m-fold growth of rounding error that a naive product
//! would give. That keeps the periodicity residual near machine precision
//! even with tens of thousands of modes.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{AbcError, Result};
use crate::stepfn::StepFunction;
use num_traits::ToPrimitive;

const TWO_PI: f64 = 2.0 * PI;

/// Per-term truncation threshold: modes whose damped size falls below
/// e^{−36} ≈ 2.3·10⁻¹⁶ are dropped. Summed against the 1/m coefficient
/// decay this keeps the discarded tail under 1e−14 for unit-size profiles.
const TAIL_LOG: f64 = 36.0;

/// Storage covers every strip on which an f64 can still represent the
/// value: the peak log-magnitude on the strip Im = ±ρ is ρ²/(2σ²), and
/// beyond e^709 evaluation overflows anyway, so modes are kept out to the
/// cutoff for ρ_cap = σ·√(2·750).
const RHO_CAP_LOG: f64 = 750.0;

/// Hard ceiling on stored modes (keeps one mollifier under ~32 MB). A
/// request that needs more is reported as out of range together with the
/// sharpest parameters this implementation can honour.
const MODE_CAP: usize = 2_000_000;

/// Smallest x-frequency cutoff that pushes per-term size below e^{−TAIL_LOG}
/// on the strip Im = ±ρ: solves 2π²σ²f² − 2πρf = TAIL_LOG for f.
fn frequency_cutoff(sigma: f64, rho: f64) -> f64 {
    let a = 2.0 * PI * PI * sigma * sigma;
    let b = TWO_PI * rho;
    (b + (b * b + 4.0 * a * TAIL_LOG).sqrt()) / (2.0 * a)
}

/// A heat-kernel smoothing of a step function, entire in the argument and
/// exactly 1/n-periodic by construction.
#[derive(Clone)]
pub struct MollifiedStep {
    /// The step being approximated, on its full kN-piece grid.
    pub target: StepFunction,
    /// Period divisor: the function repeats under x → x + 1/n.
    pub n: u64,
    /// Pieces per period of the reduced profile.
    pub k: u64,
    /// Kernel width, in x units.
    pub sigma: f64,
    /// Proximity budget outside the bad set.
    pub eps: f64,
    /// Total measure of the bad set F.
    pub delta: f64,
    /// Mean of the profile (the surviving zero mode).
    c0: f64,
    /// Cosine and sine coefficients of the reduced profile, index m−1 for
    /// mode m (an x-frequency of m·n). Stored undamped; the Gaussian weight
    /// is applied at evaluation time.
    coef_a: Vec<f64>,
    coef_b: Vec<f64>,
    /// Modes needed on the real axis (≤ stored count).
    real_modes: usize,
}

impl std::fmt::Debug for MollifiedStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MollifiedStep")
            .field("pieces", &self.target.den)
            .field("n", &self.n)
            .field("sigma", &self.sigma)
            .field("eps", &self.eps)
            .field("delta", &self.delta)
            .field("stored_modes", &self.coef_a.len())
            .finish()
    }
}

/// Smooth `step` into an entire function that is 1/n-periodic, stays within
/// `eps` of the step outside a bad set of measure `delta`, and never leaves
/// the hull of the step values by more than the truncation slack.
///
/// Fails with a parameter error when `step` is not actually 1/n-periodic or
/// the budgets are not in (0, 1) × (0, 1), and with a range error when the
/// requested sharpness needs more Fourier modes than the mode ceiling, in
/// which case the achievable budgets are reported.
pub fn mollify_step(step: &StepFunction, n: u64, eps: f64, delta: f64) -> Result<MollifiedStep> {
    if n == 0 || step.den % n != 0 {
        return Err(AbcError::Parameter(format!(
            "period divisor n={n} does not divide the {}-piece grid",
            step.den
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) || !(delta > 0.0 && delta < 1.0) {
        return Err(AbcError::Parameter(format!(
            "mollification budgets need eps > 0 and 0 < delta < 1, got eps={eps}, delta={delta}"
        )));
    }
    let k = step.den / n;
    let pieces = step.den as usize;
    for j in 0..pieces {
        if step.values[j] != step.values[(j + k as usize) % pieces] {
            return Err(AbcError::Parameter(format!(
                "step is not 1/{n}-periodic: pieces {j} and {} differ",
                (j + k as usize) % pieces
            )));
        }
    }

    let profile: Vec<f64> = step.values[..k as usize]
        .iter()
        .map(|v| v.to_f64().expect("step value fits in f64"))
        .collect();
    let spread = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let c0 = profile.iter().sum::<f64>() / k as f64;

    // Half-width of the protected collar around each piece boundary.
    let u = delta / (2.0 * step.den as f64);

    if spread == 0.0 {
        // Constant profiles mollify to themselves; σ is immaterial.
        return Ok(MollifiedStep {
            target: step.clone(),
            n,
            k,
            sigma: u,
            eps,
            delta,
            c0,
            coef_a: Vec::new(),
            coef_b: Vec::new(),
            real_modes: 0,
        });
    }

    // Gaussian tail at distance u must sit below ε/(2B); for ε ≥ 2B any
    // width works because the smoothed value never leaves the value hull.
    let log_ratio = (2.0 * spread / eps).ln();
    let sigma = if log_ratio <= 0.0 {
        u
    } else {
        u / (2.0 * log_ratio).sqrt()
    };

    let rho_cap = sigma * (2.0 * RHO_CAP_LOG).sqrt();
    let store_modes = (frequency_cutoff(sigma, rho_cap) / n as f64).ceil() as usize;
    let real_modes = (frequency_cutoff(sigma, 0.0) / n as f64).ceil() as usize;
    if store_modes > MODE_CAP {
        // Report the sharpest budgets the ceiling admits: σ_min comes from
        // inverting the cutoff at the cap, then δ scales linearly with σ at
        // fixed ε, and ε comes back through the Gaussian tail at fixed δ.
        let sigma_min = frequency_cutoff(1.0, rho_cap / sigma) / (MODE_CAP as f64 * n as f64);
        let achievable_delta = if log_ratio <= 0.0 {
            delta * sigma_min / sigma
        } else {
            2.0 * step.den as f64 * sigma_min * (2.0 * log_ratio).sqrt()
        };
        let achievable_eps = 2.0 * spread * (-(u / sigma_min).powi(2) / 2.0).exp();
        return Err(AbcError::MollifyRange {
            requested_eps: eps,
            requested_delta: delta,
            achievable_eps: achievable_eps.max(eps),
            achievable_delta: achievable_delta.max(delta),
        });
    }

    // Exact Fourier coefficients of the k-piece profile. The phases live on
    // the 1/k grid, so a sine/cosine table over that grid evaluates every
    // coefficient without fresh trigonometry: for mode m,
    //   a_m = (1/πm) Σ_j v_j (sin 2π·m(j+1)/k − sin 2π·mj/k),
    //   b_m = (1/πm) Σ_j v_j (cos 2π·mj/k − cos 2π·m(j+1)/k).
    let ku = k as usize;
    let mut sin_t = vec![0.0f64; ku];
    let mut cos_t = vec![0.0f64; ku];
    for (r, (s, c)) in sin_t.iter_mut().zip(cos_t.iter_mut()).enumerate() {
        let (sv, cv) = (TWO_PI * r as f64 / k as f64).sin_cos();
        *s = sv;
        *c = cv;
    }
    let mut coef_a = Vec::with_capacity(store_modes);
    let mut coef_b = Vec::with_capacity(store_modes);
    for m in 1..=store_modes {
        let step_r = m % ku;
        let mut r = 0usize;
        let mut sa = 0.0f64;
        let mut sb = 0.0f64;
        for &v in &profile {
            let r_next = if r + step_r >= ku { r + step_r - ku } else { r + step_r };
            sa += v * (sin_t[r_next] - sin_t[r]);
            sb += v * (cos_t[r] - cos_t[r_next]);
            r = r_next;
        }
        let scale = 1.0 / (PI * m as f64);
        coef_a.push(sa * scale);
        coef_b.push(sb * scale);
    }

    Ok(MollifiedStep {
        target: step.clone(),
        n,
        k,
        sigma,
        eps,
        delta,
        c0,
        coef_a,
        coef_b,
        real_modes,
    })
}

/// m·y mod 1 with rounding error independent of m. `y_hi` carries the top
/// 26 bits of y, so m·y_hi is exact for m < 2²⁶ and its fractional part
/// loses nothing; only the tiny m·y_lo product rounds.
#[inline]
fn reduced_phase(m: f64, y_hi: f64, y_lo: f64) -> f64 {
    let t = m * y_hi;
    (t - t.floor()) + m * y_lo
}

#[inline]
fn veltkamp_split(y: f64) -> (f64, f64) {
    let c = 134_217_729.0 * y; // 2²⁷ + 1
    let hi = c - (c - y);
    (hi, y - hi)
}

impl MollifiedStep {
    /// Gaussian damping of the stored mode m (an x-frequency of m·n).
    #[inline]
    fn weight_exponent(&self, m: usize) -> f64 {
        let f = (m as u64 * self.n) as f64;
        -2.0 * PI * PI * self.sigma * self.sigma * f * f
    }

    /// Value at a real argument.
    pub fn eval(&self, x: f64) -> f64 {
        let y = (self.n as f64 * x).rem_euclid(1.0);
        let (y_hi, y_lo) = veltkamp_split(y);
        let mut acc = self.c0;
        for m in 1..=self.real_modes.min(self.coef_a.len()) {
            let w = self.weight_exponent(m).exp();
            let (s, c) = (TWO_PI * reduced_phase(m as f64, y_hi, y_lo)).sin_cos();
            acc += w * (self.coef_a[m - 1] * c + self.coef_b[m - 1] * s);
        }
        acc
    }

    /// Derivative at a real argument.
    pub fn deriv(&self, x: f64) -> f64 {
        let y = (self.n as f64 * x).rem_euclid(1.0);
        let (y_hi, y_lo) = veltkamp_split(y);
        let mut acc = 0.0;
        for m in 1..=self.real_modes.min(self.coef_a.len()) {
            let w = self.weight_exponent(m).exp();
            let f = (m as u64 * self.n) as f64;
            let (s, c) = (TWO_PI * reduced_phase(m as f64, y_hi, y_lo)).sin_cos();
            acc += w * TWO_PI * f * (self.coef_b[m - 1] * c - self.coef_a[m - 1] * s);
        }
        acc
    }

    /// Value at a complex argument. Returns ∞ when the result exceeds the
    /// f64 range (the function is entire, but its size on a strip grows like
    /// e^{ρ²/(2σ²)} and can leave the representable range on wide strips).
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.complex_sum(z, false)
    }

    /// Derivative at a complex argument, with the same overflow convention.
    pub fn deriv_complex(&self, z: Complex64) -> Complex64 {
        self.complex_sum(z, true)
    }

    fn complex_sum(&self, z: Complex64, derivative: bool) -> Complex64 {
        let xi = z.im;
        let y = (self.n as f64 * z.re).rem_euclid(1.0);
        let (y_hi, y_lo) = veltkamp_split(y);
        let mut acc = Complex64::new(if derivative { 0.0 } else { self.c0 }, 0.0);
        let needed = (frequency_cutoff(self.sigma, xi.abs()) / self.n as f64).ceil() as usize;
        for m in 1..=needed.min(self.coef_a.len()) {
            let a = self.coef_a[m - 1];
            let b = self.coef_b[m - 1];
            let size = a.abs() + b.abs();
            if size == 0.0 {
                continue;
            }
            let f = (m as u64 * self.n) as f64;
            let g = self.weight_exponent(m);
            let grow = TWO_PI * f * xi.abs();
            let factor = if derivative { TWO_PI * f } else { 1.0 };
            if g + grow + (size * factor).ln() > 709.0 {
                return Complex64::new(f64::INFINITY, 0.0);
            }
            // Damped hyperbolics, assembled in the exponent to dodge the
            // overflow of cosh alone: w·cosh = (e^{g+|t|} + e^{g−|t|})/2.
            let half_plus = 0.5 * (g + grow).exp();
            let half_minus = 0.5 * (g - grow).exp();
            let ch = half_plus + half_minus;
            let sh = (half_plus - half_minus) * xi.signum();
            let (sr, cr) = (TWO_PI * reduced_phase(m as f64, y_hi, y_lo)).sin_cos();
            let cos_z = Complex64::new(cr * ch, -sr * sh);
            let sin_z = Complex64::new(sr * ch, cr * sh);
            acc += if derivative {
                (sin_z * (-a) + cos_z * b) * (TWO_PI * f)
            } else {
                cos_z * a + sin_z * b
            };
        }
        acc
    }

    /// Upper bound, in log space, for sup |s| on the strip |Im z| ≤ ρ.
    /// Never overflows: the answer is the logarithm itself.
    pub fn strip_log_bound(&self, rho: f64) -> f64 {
        let mut terms = Vec::with_capacity(self.coef_a.len() + 1);
        if self.c0 != 0.0 {
            terms.push(self.c0.abs().ln());
        }
        for m in 1..=self.coef_a.len() {
            let size = self.coef_a[m - 1].abs() + self.coef_b[m - 1].abs();
            if size == 0.0 {
                continue;
            }
            let f = (m as u64 * self.n) as f64;
            terms.push(self.weight_exponent(m) + TWO_PI * f * rho + size.ln());
        }
        logsumexp(&terms)
    }

    /// Same bound for the derivative (each mode scales by 2πf).
    pub fn deriv_strip_log_bound(&self, rho: f64) -> f64 {
        let mut terms = Vec::with_capacity(self.coef_a.len());
        for m in 1..=self.coef_a.len() {
            let size = self.coef_a[m - 1].abs() + self.coef_b[m - 1].abs();
            if size == 0.0 {
                continue;
            }
            let f = (m as u64 * self.n) as f64;
            terms.push(self.weight_exponent(m) + TWO_PI * f * rho + (size * TWO_PI * f).ln());
        }
        logsumexp(&terms)
    }

    /// The smoothed value never leaves the hull of the step values by more
    /// than the truncation slack (convolution with a probability density).
    pub fn hull_bound(&self) -> f64 {
        let hi = self
            .target
            .values
            .iter()
            .map(|v| v.to_f64().unwrap().abs())
            .fold(0.0, f64::max);
        hi + 1e-13
    }

    /// Whether x lies in the bad set F: within δ/(2·kN) of a piece boundary.
    pub fn in_bad_set(&self, x: f64) -> bool {
        let t = x.rem_euclid(1.0) * self.target.den as f64;
        (t - t.round()).abs() < self.delta / 2.0
    }

    /// The bad set as explicit intervals in [0, 1), the wrap-around collar
    /// at 0 split into its two halves. Total length is δ.
    pub fn bad_intervals(&self) -> Vec<(f64, f64)> {
        let den = self.target.den as f64;
        let half = self.delta / (2.0 * den);
        let mut out = vec![(0.0, half)];
        for i in 1..self.target.den {
            let c = i as f64 / den;
            out.push((c - half, c + half));
        }
        out.push((1.0 - half, 1.0));
        out
    }

    /// Stored mode count (for size reporting).
    pub fn mode_count(&self) -> usize {
        self.coef_a.len()
    }
}

/// log(Σ e^{t}) over the given log-space terms, −∞ for an empty list.
pub fn logsumexp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Sup of |f| over the boundary lines Im z = ±ρ, sampled at `samples`
/// midpoints per unit period. By the maximum principle the sup over the
/// closed strip is attained on the boundary, so this is a lower estimate of
/// the strip norm that converges as the sampling refines. Overflow inside
/// `f` propagates as +∞.
pub fn strip_norm<F: Fn(Complex64) -> Complex64>(f: F, rho: f64, samples: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..samples {
        let x = (i as f64 + 0.5) / samples as f64;
        for sign in [1.0, -1.0] {
            let v = f(Complex64::new(x, sign * rho)).norm();
            if !v.is_finite() {
                return f64::INFINITY;
            }
            best = best.max(v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_level() -> StepFunction {
        StepFunction::new(2, vec![rat(0, 1), rat(1, 2)]).unwrap()
    }

    #[test]
    fn constant_profile_mollifies_exactly() {
        let c = StepFunction::new(3, vec![rat(2, 3); 3]).unwrap();
        let m = mollify_step(&c, 3, 1e-6, 0.05).unwrap();
        assert_eq!(m.mode_count(), 0);
        for x in [0.0, 0.123, 0.5, 0.987] {
            assert_eq!(m.eval(x), 2.0 / 3.0);
            assert_eq!(m.deriv(x), 0.0);
        }
        let z = Complex64::new(0.3, 0.7);
        assert_eq!(m.eval_complex(z), Complex64::new(2.0 / 3.0, 0.0));
        let norm = strip_norm(|z| m.eval_complex(z), 0.2, 64);
        assert!((norm - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_level_step_meets_its_proximity_budget() {
        let eps = 1e-3;
        let delta = 0.1;
        let m = mollify_step(&two_level(), 1, eps, delta).unwrap();
        // σ = (δ/4)/√(2 ln(2·(1/2)/ε)) for this profile
        let expect = 0.025 / (2.0 * 1000.0f64.ln()).sqrt();
        assert!((m.sigma - expect).abs() < 1e-12 * expect);

        let mut worst_good = 0.0f64;
        let mut worst_all = 0.0f64;
        for i in 0..10_000 {
            let x = (i as f64 + 0.5) / 10_000.0;
            let err = (m.eval(x) - m.target.value_at(&rat(2 * i + 1, 20_000)).to_f64().unwrap())
                .abs();
            worst_all = worst_all.max(err);
            if !m.in_bad_set(x) {
                worst_good = worst_good.max(err);
            }
            assert!(m.eval(x).abs() <= m.hull_bound());
        }
        assert!(worst_good < eps, "good-set error {worst_good} over budget");
        assert!(worst_all > eps, "smoothing should be visible at the jumps");

        let total: f64 = m.bad_intervals().iter().map(|(a, b)| b - a).sum();
        assert!((total - delta).abs() < 1e-15);
    }

    #[test]
    fn periodicity_residual_stays_below_1e12() {
        // 12 pieces whose values repeat every 3, so the function has period 1/4.
        let vals = vec![rat(1, 10), rat(7, 10), rat(2, 5)];
        let step = StepFunction::new(
            12,
            (0..12).map(|j| vals[j % 3].clone()).collect(),
        )
        .unwrap();
        let m = mollify_step(&step, 4, 1e-3, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x: f64 = rng.gen();
            for j in [1.0, 2.0] {
                worst = worst.max((m.eval(x + j / 4.0) - m.eval(x)).abs());
            }
        }
        assert!(worst < 1e-12, "periodicity residual {worst}");

        // On a strip the value sweeps many orders of magnitude along x, so
        // the shift defect is measured against the strip's scale, not the
        // local value.
        let pairs: Vec<(Complex64, Complex64)> = (0..100)
            .map(|_| {
                let z = Complex64::new(rng.gen::<f64>(), 0.04 * (rng.gen::<f64>() - 0.5));
                (
                    m.eval_complex(z),
                    m.eval_complex(z + Complex64::new(0.25, 0.0)),
                )
            })
            .collect();
        let scale = pairs.iter().map(|(b, _)| b.norm()).fold(1.0, f64::max);
        let worst_c = pairs
            .iter()
            .map(|(b, s)| (s - b).norm())
            .fold(0.0, f64::max)
            / scale;
        assert!(worst_c < 1e-10, "complex periodicity residual {worst_c}");
    }

    #[test]
    fn strip_norm_oracles() {
        // sup over Im = ±0.1 of |sin 2πz| is cosh(0.2π)
        let norm = strip_norm(|z| (z * TWO_PI).sin(), 0.1, 512);
        let exact = (0.2 * PI).cosh();
        assert!((norm - exact).abs() < 0.01 * exact, "got {norm}, want {exact}");

        let m = mollify_step(&two_level(), 1, 1e-3, 0.1).unwrap();
        let n1 = strip_norm(|z| m.eval_complex(z), 0.01, 200);
        let n2 = strip_norm(|z| m.eval_complex(z), 0.02, 200);
        let n3 = strip_norm(|z| m.eval_complex(z), 0.05, 200);
        assert!(n1.is_finite() && n2.is_finite() && n3.is_finite());
        assert!(n1 <= n2 && n2 <= n3, "strip norms must grow with ρ");
        assert!(n1 >= 0.5 - 1e-3, "strip norm dominates the real-axis sup");

        // a log-space certificate stays finite even where sampling overflows
        let sharp = mollify_step(&two_level(), 1, 1e-6, 0.05).unwrap();
        assert!(strip_norm(|z| sharp.eval_complex(z), 0.1, 50).is_infinite());
        let lb = sharp.strip_log_bound(0.1);
        assert!(lb.is_finite() && lb > 709.0);
        // and where both are finite the bound dominates the sample
        assert!(m.strip_log_bound(0.02) >= n2.ln() - 1e-9);
    }

    #[test]
    fn out_of_range_requests_report_achievable_budgets() {
        let err = mollify_step(&two_level(), 1, 1e-12, 1e-6).unwrap_err();
        match err {
            AbcError::MollifyRange {
                requested_eps,
                requested_delta,
                achievable_eps,
                achievable_delta,
            } => {
                assert_eq!(requested_eps, 1e-12);
                assert_eq!(requested_delta, 1e-6);
                assert!(achievable_eps > requested_eps || achievable_delta > requested_delta);
            }
            other => panic!("expected a range error, got {other:?}"),
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let m = mollify_step(&two_level(), 1, 1e-2, 0.2).unwrap();
        // points a kernel width or two from the jumps, where s' is alive
        let h = 1e-5;
        for x in [0.485, 0.5, 0.52, 0.97] {
            let fd = (m.eval(x + h) - m.eval(x - h)) / (2.0 * h);
            let an = m.deriv(x);
            assert!(
                (fd - an).abs() <= 1e-4 * (1.0 + an.abs()),
                "at x={x}: fd={fd}, analytic={an}"
            );
        }
        // complex derivative agrees on the real axis
        let z = Complex64::new(0.37, 0.0);
        assert!((m.deriv_complex(z).re - m.deriv(0.37)).abs() < 1e-10);
        assert!(m.deriv_complex(z).im.abs() < 1e-12);
    }

    #[test]
    fn randomized_profiles_meet_their_budgets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..6 {
            let k = rng.gen_range(1..=4u64);
            let n = rng.gen_range(1..=4u64);
            let profile: Vec<Rational> =
                (0..k).map(|_| rat(rng.gen_range(0..64), 64)).collect();
            let step = StepFunction::new(
                k * n,
                (0..k * n).map(|j| profile[(j % k) as usize].clone()).collect(),
            )
            .unwrap();
            let eps = 10f64.powf(rng.gen_range(-4.0..-2.0));
            let delta = rng.gen_range(0.1..0.3);
            let m = mollify_step(&step, n, eps, delta).unwrap();

            let mut worst_good = 0.0f64;
            for i in 0..2000 {
                let x = (i as f64 + 0.5) / 2000.0;
                if m.in_bad_set(x) {
                    continue;
                }
                let err = (m.eval(x) - m.target.value_at(&rat(2 * i + 1, 4000)).to_f64().unwrap())
                    .abs();
                worst_good = worst_good.max(err);
            }
            assert!(worst_good < eps, "case {case}: error {worst_good} over {eps}");

            let mut worst_p = 0.0f64;
            for _ in 0..200 {
                let x: f64 = rng.gen();
                worst_p = worst_p.max((m.eval(x + 1.0 / n as f64) - m.eval(x)).abs());
            }
            assert!(worst_p < 1e-12, "case {case}: periodicity {worst_p}");
        }
    }

    #[test]
    fn logsumexp_matches_direct_sums() {
        let direct = ((-3.0f64).exp() + 0.5f64.exp() + 2.0f64.exp()).ln();
        assert!((logsumexp(&[-3.0, 0.5, 2.0]) - direct).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        // huge terms stay in log space
        let big = logsumexp(&[1000.0, 1000.0]);
        assert!((big - (1000.0 + 2.0f64.ln())).abs() < 1e-12);
    }
}
