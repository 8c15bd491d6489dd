//! Block addresses, the combinatorial conjugator 𝔥, and its slide words.
//!
//! The x₁ circle at a stage splits into 2 l^d q² cells. Each cell has a
//! mixed-radix address (a, b, c, t₁..t_{d−2}, e, f) with
//!
//!   digit   radix     stride
//!   a       q         2 l^d q
//!   b       2q        l^d
//!   c       l/(2q)    2 l^{d−1} q
//!   t_i     l         2 l^{d−1−i} q
//!   e       2q        l
//!   f       l         1
//!
//! and the A-block A_{a,b,c,t,e,f} is that x₁ cell crossed with the x₂
//! circle. Writing j for the x₂ cell on the l-grid, the conjugator acts by
//!
//!   𝔥: (a, b, c, t, e, f; j) ↦ ((a + e·sh(e)) mod q, e, c, t, b, j; f),
//!
//! sh(e) = r for e < q and r + p otherwise, translating each little box
//! rigidly. `h_formula_permutation` realizes this on any compatible grid.
//!
//! The same map factors into thirteen coordinate slides (four digit
//! rotations and one shift) when l = 2q, which is what the analytic side
//! mollifies; `h_slide_word` builds that word and the tests check it agrees
//! with the formula cell for cell.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::error::{AbcError, Result};
use crate::grid::{CellPermutation, GridSpec, DEFAULT_CELL_BUDGET};
use crate::params::StageParams;
use crate::rational::{rem_euclid, Rational};
use crate::stepfn::{psi1, psi2, psi3, StepFunction};

/// Mixed-radix layout of the x₁ block address for given (d, l, q).
#[derive(Debug, Clone)]
pub struct ABlockLayout {
    pub d: u32,
    pub l: u64,
    pub q: u64,
    /// Digit order a, b, c, t₁..t_{d−2}, e, f.
    pub radices: Vec<u64>,
    pub strides: Vec<u64>,
    pub x1_den: u64,
}

fn checked_pow(l: u64, e: u32) -> Result<u64> {
    l.checked_pow(e)
        .ok_or_else(|| AbcError::Parameter(format!("l^{e} overflows u64 for l={l}")))
}

impl ABlockLayout {
    pub fn new(d: u32, l: u64, q: u64) -> Result<ABlockLayout> {
        if d < 2 || l == 0 || q == 0 {
            return Err(AbcError::Parameter(
                "block layout needs d >= 2 and l, q >= 1".into(),
            ));
        }
        if l % (2 * q) != 0 {
            return Err(AbcError::Parameter(format!(
                "block layout needs 2q | l, got l={l}, q={q}"
            )));
        }
        let ld = checked_pow(l, d)?;
        let x1_den = 2u64
            .checked_mul(ld)
            .and_then(|v| v.checked_mul(q))
            .and_then(|v| v.checked_mul(q))
            .ok_or_else(|| AbcError::Parameter("x1 block denominator overflows u64".into()))?;
        let mut radices = vec![q, 2 * q, l / (2 * q)];
        let mut strides = vec![2 * ld * q, ld, 2 * checked_pow(l, d - 1)? * q];
        for i in 1..=(d - 2) {
            radices.push(l);
            strides.push(2 * checked_pow(l, d - 1 - i)? * q);
        }
        radices.push(2 * q);
        strides.push(l);
        radices.push(l);
        strides.push(1);
        // each stride is the next digit's stride times its radix
        debug_assert!(strides
            .windows(2)
            .zip(radices.iter().skip(1))
            .all(|(w, &r)| w[0] == w[1] * r));
        debug_assert_eq!(strides[0] * radices[0], x1_den);
        Ok(ABlockLayout {
            d,
            l,
            q,
            radices,
            strides,
            x1_den,
        })
    }

    pub fn digit_count(&self) -> usize {
        self.radices.len()
    }

    pub fn e_slot(&self) -> usize {
        self.digit_count() - 2
    }

    pub fn decode_x1(&self, cell: u64) -> Vec<u64> {
        let mut rem = cell;
        self.strides
            .iter()
            .map(|&s| {
                let digit = rem / s;
                rem %= s;
                digit
            })
            .collect()
    }

    pub fn encode_x1(&self, digits: &[u64]) -> u64 {
        digits
            .iter()
            .zip(&self.strides)
            .map(|(&d, &s)| d * s)
            .sum()
    }

    pub fn sh(&self, e: u64, p: u64, r: u64) -> u64 {
        if e < self.q {
            r
        } else {
            r + p
        }
    }

    /// Image of (digits; j) under 𝔥 with twist data (p, r).
    pub fn h_image(&self, digits: &[u64], j: u64, p: u64, r: u64) -> (Vec<u64>, u64) {
        let es = self.e_slot();
        let e = digits[es];
        let mut out = digits.to_vec();
        out[0] = (digits[0] + e * self.sh(e, p, r)) % self.q;
        out[1] = e;
        out[es] = digits[1];
        out[es + 1] = j;
        (out, digits[es + 1])
    }
}

/// The coarsest grid 𝔥 lives on: x₁ into 2 l^d q² cells, x₂ into l, the
/// remaining coordinates untouched.
pub fn h_natural_grid(d: u32, l: u64, q: u64) -> Result<GridSpec> {
    let layout = ABlockLayout::new(d, l, q)?;
    let mut dens = vec![layout.x1_den, l];
    dens.extend(std::iter::repeat(1).take(d as usize - 2));
    GridSpec::new(dens, DEFAULT_CELL_BUDGET)
}

/// 𝔥_{l,p,q,r} as a cell permutation of `grid`. Needs 2 l^d q² | dens[0]
/// and l | dens[1]; finer cells ride along rigidly.
pub fn h_formula_permutation(
    grid: &GridSpec,
    l: u64,
    p: u64,
    q: u64,
    r: u64,
) -> Result<CellPermutation> {
    let d = grid.d() as u32;
    let layout = ABlockLayout::new(d, l, q)?;
    let d1 = grid.dens[0];
    let d2 = grid.dens[1];
    if d1 % layout.x1_den != 0 || d2 % l != 0 {
        return Err(AbcError::GridIncompatible(format!(
            "grid {:?} does not refine the block grid {} x {}",
            grid.dens, layout.x1_den, l
        )));
    }
    let sub1 = d1 / layout.x1_den;
    let sub2 = d2 / l;
    CellPermutation::from_fn(grid.clone(), |cell| {
        let mut coords = grid.decode(cell);
        let (c1, o1) = (coords[0] / sub1, coords[0] % sub1);
        let (j, o2) = (coords[1] / sub2, coords[1] % sub2);
        let digits = layout.decode_x1(c1);
        let (digits2, j2) = layout.h_image(&digits, j, p, r);
        coords[0] = layout.encode_x1(&digits2) * sub1 + o1;
        coords[1] = j2 * sub2 + o2;
        grid.index(&coords)
    })
}

/// One coordinate slide x_target ↦ x_target + f(x_read).
#[derive(Debug, Clone)]
pub struct Slide {
    pub label: String,
    pub target: usize,
    pub read: usize,
    pub f: StepFunction,
}

impl Slide {
    pub fn new(label: impl Into<String>, target: usize, read: usize, f: StepFunction) -> Slide {
        Slide {
            label: label.into(),
            target,
            read,
            f,
        }
    }

    pub fn inverse(&self) -> Slide {
        Slide {
            label: format!("{}^-1", self.label),
            target: self.target,
            read: self.read,
            f: self.f.negate(),
        }
    }

    /// Exact action on a grid. Fails when f is not constant on read cells
    /// or some value is not a whole number of target cells.
    pub fn permutation(&self, grid: &GridSpec) -> Result<CellPermutation> {
        if self.target == self.read || self.target >= grid.d() || self.read >= grid.d() {
            return Err(AbcError::Parameter(format!(
                "slide {} has bad axes target={} read={}",
                self.label, self.target, self.read
            )));
        }
        let dr = grid.dens[self.read];
        let dt = grid.dens[self.target];
        if dr % self.f.den != 0 {
            return Err(AbcError::GridIncompatible(format!(
                "slide {}: step denominator {} does not divide read grid {}",
                self.label, self.f.den, dr
            )));
        }
        let rep = (dr / self.f.den) as usize;
        let dt_big = BigInt::from(dt);
        let mut shift = vec![0u64; dr as usize];
        for (piece, v) in self.f.values.iter().enumerate() {
            let scaled = v * &dt_big;
            if !scaled.is_integer() {
                return Err(AbcError::GridIncompatible(format!(
                    "slide {}: value {} is not integral on target grid {}",
                    self.label, v, dt
                )));
            }
            let s = rem_euclid(&scaled.to_integer(), &dt_big)
                .to_u64()
                .expect("reduced shift fits u64");
            for k in 0..rep {
                shift[piece * rep + k] = s;
            }
        }
        let (target, read) = (self.target, self.read);
        CellPermutation::from_fn(grid.clone(), |cell| {
            let mut coords = grid.decode(cell);
            let s = shift[coords[read] as usize];
            coords[target] = (coords[target] + s) % dt;
            grid.index(&coords)
        })
    }
}

/// A finite slide word, applied left to right.
#[derive(Debug, Clone, Default)]
pub struct SlideWord {
    pub slides: Vec<Slide>,
}

impl SlideWord {
    pub fn concat(words: Vec<SlideWord>) -> SlideWord {
        SlideWord {
            slides: words.into_iter().flat_map(|w| w.slides).collect(),
        }
    }

    pub fn inverse(&self) -> SlideWord {
        SlideWord {
            slides: self.slides.iter().rev().map(Slide::inverse).collect(),
        }
    }

    pub fn permutation(&self, grid: &GridSpec) -> Result<CellPermutation> {
        let mut perm = CellPermutation::identity(grid.clone());
        for s in &self.slides {
            perm = perm.then(&s.permutation(grid)?);
        }
        Ok(perm)
    }
}

fn rat_u64(num: u64, den: u64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Digit rotation at x₁ slot stride σ against the x₂ digit, for l = 2q.
/// Net effect on the radix-l pair (s; J): (s; J) ↦ ((−J) mod l; s); the
/// carries of the first and third slide cancel exactly.
pub fn rot_word(d: u32, l: u64, q: u64, sigma: u64, tag: &str) -> Result<SlideWord> {
    let layout = ABlockLayout::new(d, l, q)?;
    let den = layout.x1_den;
    let g1 = StepFunction::from_fn(l, |j| {
        if j == 0 {
            Rational::zero()
        } else {
            rat_u64((l - j) * sigma, den)
        }
    })?;
    let g2 = StepFunction::from_fn(den / sigma, |p| rat_u64(p % l, l))?;
    let g3 = StepFunction::from_fn(l, |j| -rat_u64(j * sigma, den))?;
    Ok(SlideWord {
        slides: vec![
            Slide::new(format!("{tag}.up"), 0, 1, g1),
            Slide::new(format!("{tag}.swap"), 1, 0, g2),
            Slide::new(format!("{tag}.down"), 0, 1, g3),
        ],
    })
}

/// The a-digit shift: x₁ += ((J·sh(J)) mod q)/q read off the x₂ digit.
pub fn ashift_slide(l: u64, p: u64, q: u64, r: u64) -> Result<Slide> {
    if l != 2 * q {
        return Err(AbcError::Parameter("ashift slide needs l = 2q".into()));
    }
    let f = StepFunction::from_fn(l, |j| {
        let sh = if j < q { r } else { r + p };
        rat_u64((j * sh) % q, q)
    })?;
    Ok(Slide::new("ashift", 0, 1, f))
}

/// The thirteen-slide realization of 𝔥_{l,p,q,r}. Only exists for l = 2q:
/// the rotations cycle a radix-l x₁ digit against the radix-l x₂ digit, and
/// the b and e slots carry radix 2q, so the two radices must agree.
pub fn h_slide_word(d: u32, l: u64, p: u64, q: u64, r: u64) -> Result<SlideWord> {
    if l != 2 * q {
        return Err(AbcError::Parameter(format!(
            "slide realization of the conjugator needs l = 2q (slot radix 2q \
             must equal the x2 radix l); got l={l}, q={q}"
        )));
    }
    let ld = checked_pow(l, d)?;
    Ok(SlideWord::concat(vec![
        rot_word(d, l, q, l, "rot_e")?,
        SlideWord {
            slides: vec![ashift_slide(l, p, q, r)?],
        },
        rot_word(d, l, q, ld, "rot_b")?.inverse(),
        rot_word(d, l, q, l, "rot_e2")?,
        rot_word(d, l, q, 1, "rot_f")?,
    ]))
}

/// 𝔤_{i,l,q} as three slides: x₁ += ψ¹(x_i), x_i += ψ²(x₁), x₁ −= ψ³(x_i).
pub fn g_word(d: u32, i: u32, l: u64, q: u64) -> Result<SlideWord> {
    let axis = (i - 1) as usize;
    Ok(SlideWord {
        slides: vec![
            Slide::new(format!("g{i}.lift"), 0, axis, psi1(d, i, l, q)?),
            Slide::new(format!("g{i}.spread"), axis, 0, psi2(d, i, l, q)?),
            Slide::new(format!("g{i}.drop"), 0, axis, psi3(d, i, l, q)?.negate()),
        ],
    })
}

/// 𝔤₂ ∘ … ∘ 𝔤_d (rightmost applied first): carries 𝒢_{l,q} onto 𝒯_{l^d q}.
pub fn compose_g_word(d: u32, l: u64, q: u64) -> Result<SlideWord> {
    let mut words = Vec::new();
    for i in (2..=d).rev() {
        words.push(g_word(d, i, l, q)?);
    }
    Ok(SlideWord::concat(words))
}

/// 𝔤₃ ∘ … ∘ 𝔤_d, the part of the stage conjugator below 𝔥 (empty for d=2).
pub fn stage_g_word(d: u32, l: u64, q: u64) -> Result<SlideWord> {
    let mut words = Vec::new();
    for i in (3..=d).rev() {
        words.push(g_word(d, i, l, q)?);
    }
    Ok(SlideWord::concat(words))
}

/// Full slide word of the stage conjugator h = 𝔥 ∘ 𝔤₃ ∘ … ∘ 𝔤_d.
/// Slide form requires l = 2q.
pub fn stage_slide_word(d: u32, l: u64, p: u64, q: u64, r: u64) -> Result<SlideWord> {
    Ok(SlideWord::concat(vec![
        stage_g_word(d, l, q)?,
        h_slide_word(d, l, p, q, r)?,
    ]))
}

/// Outcome of sweeping the block return identities over all cells.
#[derive(Debug, Clone)]
pub struct ConjugacyReport {
    pub d: u32,
    pub l: u64,
    pub p: u64,
    pub q: u64,
    pub r: u64,
    pub tau1: Rational,
    pub tau2: Rational,
    /// Cells with b < q−1 and e < q−1, checked against φ^{τ₁}.
    pub checked_tau1: u64,
    /// Cells with q ≤ b < 2q−1 and q ≤ e < 2q−1, checked against φ^{τ₂}.
    pub checked_tau2: u64,
    /// Boundary cells reported but deliberately not asserted.
    pub skipped_boundary: u64,
    pub failures: u64,
}

impl ConjugacyReport {
    pub fn all_hold(&self) -> bool {
        self.failures == 0
    }
}

/// Sweep φ^{τ}∘𝔥 = 𝔥∘(e ↦ e+1) over every block of the natural grid.
///
/// τ₁ = r/q + 1/(2q²) drives blocks with b, e < q−1; τ₂ = (r+p)/q + 1/(2q²)
/// drives blocks with q ≤ b, e < 2q−1. Blocks on the e- or b-boundary wrap
/// around and are counted as skipped.
pub fn verify_conjugacy(d: u32, l: u64, p: u64, q: u64, r: u64) -> Result<ConjugacyReport> {
    let layout = ABlockLayout::new(d, l, q)?;
    let grid = h_natural_grid(d, l, q)?;
    let h = h_formula_permutation(&grid, l, p, q, r)?;
    let tau1 = rat_u64(r, q) + rat_u64(1, 2 * q * q);
    let tau2 = rat_u64(r + p, q) + rat_u64(1, 2 * q * q);
    let phi1 = grid.coordinate_translation(0, &tau1)?;
    let phi2 = grid.coordinate_translation(0, &tau2)?;
    let es = layout.e_slot();
    let e_stride = layout.strides[es];
    let mut report = ConjugacyReport {
        d,
        l,
        p,
        q,
        r,
        tau1,
        tau2,
        checked_tau1: 0,
        checked_tau2: 0,
        skipped_boundary: 0,
        failures: 0,
    };
    let mut coords = vec![0u64; d as usize];
    for i1 in 0..layout.x1_den {
        let digits = layout.decode_x1(i1);
        let (b, e) = (digits[1], digits[es]);
        let phi = if b < q.saturating_sub(1) && e < q.saturating_sub(1) {
            Some((&phi1, &mut report.checked_tau1))
        } else if (q..2 * q - 1).contains(&b) && (q..2 * q - 1).contains(&e) {
            Some((&phi2, &mut report.checked_tau2))
        } else {
            None
        };
        match phi {
            None => report.skipped_boundary += l,
            Some((phi, counter)) => {
                for j in 0..l {
                    coords.iter_mut().for_each(|v| *v = 0);
                    coords[0] = i1;
                    coords[1] = j;
                    let cell = grid.index(&coords);
                    coords[0] = i1 + e_stride;
                    let shifted = grid.index(&coords);
                    let lhs = phi.apply_cell(h.apply_cell(cell));
                    let rhs = h.apply_cell(shifted);
                    *counter += 1;
                    if lhs != rhs {
                        report.failures += 1;
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Stage-level wrapper: first confirms τ₁ ≡ m·α' and τ₂ ≡ (m+1)·α' − 1/q'
/// modulo 1, then sweeps the block identities for the stage's (l, p, q, r).
pub fn verify_conjugacy_for_stage(params: &StageParams) -> Result<ConjugacyReport> {
    let ids = crate::params::check_return_identities(params);
    if !ids.all_hold() {
        return Err(AbcError::Parameter(
            "stage return identities fail before any block sweep".into(),
        ));
    }
    let small = |v: &BigInt, name: &str| -> Result<u64> {
        v.to_u64().ok_or_else(|| {
            AbcError::Parameter(format!("{name} too large for a block sweep"))
        })
    };
    verify_conjugacy(
        params.d,
        small(&params.l, "l")?,
        small(&params.p, "p")?,
        small(&params.q, "q")?,
        small(&params.r, "r")?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{EpsilonVariant, StageParams};
    use crate::partitions::{h_image_a_function, r_partition, t_partition};
    use crate::rational::rat;

    fn box_set(
        grid: &GridSpec,
        part: &crate::partitions::Partition,
        atom: usize,
    ) -> crate::grid::CellSet {
        let mut cells = Vec::new();
        for b in &part.atoms[atom].boxes {
            cells.extend(grid.box_cells(&b.corners).unwrap().cells);
        }
        crate::grid::CellSet::from_unsorted(cells)
    }

    #[test]
    fn layout_strides_cover_everything() {
        for (d, l, q) in [(2, 6, 3), (2, 2, 1), (3, 4, 2), (4, 2, 1)] {
            let layout = ABlockLayout::new(d, l, q).unwrap();
            assert_eq!(
                layout.radices.iter().product::<u64>(),
                layout.x1_den,
                "radices at d={d} l={l} q={q}"
            );
            for cell in 0..layout.x1_den {
                assert_eq!(layout.encode_x1(&layout.decode_x1(cell)), cell);
            }
        }
        assert!(ABlockLayout::new(2, 5, 3).is_err());
    }

    #[test]
    fn h_oracle_cell_8_to_255() {
        // d=2, l=6, q=3, p=1, r=1: block (a,b,c,e,f) = (0,0,0,1,2), j=3
        let grid = h_natural_grid(2, 6, 3).unwrap();
        let h = h_formula_permutation(&grid, 6, 1, 3, 1).unwrap();
        let src = grid.index(&[8, 3]);
        let dst = grid.index(&[255, 2]);
        assert_eq!(h.apply_cell(src), dst);
    }

    #[test]
    fn h_commutes_with_sector_rotation() {
        let grid = h_natural_grid(2, 6, 3).unwrap();
        let h = h_formula_permutation(&grid, 6, 1, 3, 1).unwrap();
        let phi_q = grid.coordinate_translation(0, &rat(1, 3)).unwrap();
        assert!(h.commutes_with(&phi_q));
    }

    #[test]
    fn g_net_primitive_oracle() {
        // d=2, l=2, q=1 on the 4 x 2 grid: (i1, i2) atom -> x1 stripe
        let grid = GridSpec::new(vec![4, 2], DEFAULT_CELL_BUDGET).unwrap();
        let g = g_word(2, 2, 2, 1).unwrap().permutation(&grid).unwrap();
        let coarse = crate::partitions::g_partition(2, 1, 2).unwrap();
        let fine = t_partition(4, 2).unwrap();
        let expect = [((0, 0), 0), ((1, 0), 2), ((0, 1), 1), ((1, 1), 3)];
        for ((i1, i2), stripe) in expect {
            let atom = coarse
                .locate(&[rat(i1, 2), rat(i2, 2)])
                .unwrap();
            let img = g.apply_to_set(&box_set(&grid, &coarse, atom));
            assert_eq!(img, box_set(&grid, &fine, stripe as usize));
        }
    }

    #[test]
    fn compose_g_lands_on_fine_sectors() {
        // d=3, l=2, q=1: 𝒢_{l,q} atoms map bijectively onto 𝒯_{l^d q} atoms
        let grid = GridSpec::new(vec![8, 2, 2], DEFAULT_CELL_BUDGET).unwrap();
        let g = compose_g_word(3, 2, 1).unwrap().permutation(&grid).unwrap();
        let coarse = crate::partitions::g_partition(2, 1, 3).unwrap();
        let fine = t_partition(8, 3).unwrap();
        let mut seen = vec![false; 8];
        for atom in 0..coarse.atoms.len() {
            let img = g.apply_to_set(&box_set(&grid, &coarse, atom));
            let hit = (0..8)
                .find(|&s| img == box_set(&grid, &fine, s))
                .expect("image is a fine sector");
            assert!(!seen[hit]);
            seen[hit] = true;
        }
        // the whole word also respects the q-sector rotation
        let phi_q = grid.coordinate_translation(0, &rat(1, 1)).unwrap();
        assert!(g.commutes_with(&phi_q));
    }

    #[test]
    fn slide_word_matches_formula() {
        for (d, l, q, p, r) in [
            (2, 2, 1, 1, 0),
            (2, 6, 3, 1, 0),
            (2, 6, 3, 1, 1),
            (2, 6, 3, 1, 2),
            (3, 2, 1, 1, 0),
            (3, 4, 2, 1, 1),
        ] {
            let grid = h_natural_grid(d, l, q).unwrap();
            let word = h_slide_word(d, l, p, q, r).unwrap();
            let via_slides = word.permutation(&grid).unwrap();
            let via_formula = h_formula_permutation(&grid, l, p, q, r).unwrap();
            assert_eq!(
                via_slides.map, via_formula.map,
                "mismatch at d={d} l={l} q={q} p={p} r={r}"
            );
            // and the word undoes itself
            let inv = word.inverse().permutation(&grid).unwrap();
            assert!(via_slides.then(&inv).is_identity());
        }
    }

    #[test]
    fn slide_word_matches_formula_on_refined_grid() {
        let grid = GridSpec::new(vec![2 * 648, 12], DEFAULT_CELL_BUDGET).unwrap();
        let word = h_slide_word(2, 6, 1, 3, 1).unwrap();
        let via_slides = word.permutation(&grid).unwrap();
        let via_formula = h_formula_permutation(&grid, 6, 1, 3, 1).unwrap();
        assert_eq!(via_slides.map, via_formula.map);
    }

    #[test]
    fn slide_form_requires_matching_radices() {
        let err = h_slide_word(2, 4, 1, 1, 0).unwrap_err();
        assert!(err.to_string().contains("l = 2q"));
    }

    #[test]
    fn block_images_tile_intervals() {
        // union over f and j of one (a,b,c,e) block's image is an x1
        // interval of l cells crossed with the full x2 circle
        let (d, l, q, p, r) = (2, 6u64, 3u64, 1, 1);
        let grid = h_natural_grid(d, l, q).unwrap();
        let layout = ABlockLayout::new(d, l, q).unwrap();
        let h = h_formula_permutation(&grid, l, p, q, r).unwrap();
        let (a, b, c, e) = (1u64, 4u64, 0u64, 2u64);
        let mut src = Vec::new();
        for f in 0..l {
            let i1 = layout.encode_x1(&[a, b, c, e, f]);
            for j in 0..l {
                src.push(grid.index(&[i1, j]));
            }
        }
        let img = h.apply_to_set(&crate::grid::CellSet::from_unsorted(src));
        let sh = layout.sh(e, p, r);
        let base = layout.encode_x1(&[(a + e * sh) % q, e, c, b, 0]);
        let mut expect = Vec::new();
        for off in 0..l {
            for j in 0..l {
                expect.push(grid.index(&[base + off, j]));
            }
        }
        assert_eq!(img, crate::grid::CellSet::from_unsorted(expect));
    }

    #[test]
    fn h_sends_sectors_to_interlaced_unions() {
        // 𝔥(𝒯_q) is the ℛ family built from the block a-function, with k = l
        let (d, l, q, p, r) = (2u32, 6u64, 3u64, 1u64, 1u64);
        let grid = h_natural_grid(d, l, q).unwrap();
        let h = h_formula_permutation(&grid, l, p, q, r).unwrap();
        let sectors = t_partition(q, d).unwrap();
        let a_fn = h_image_a_function(l, p, q, r).unwrap();
        let interlaced = r_partition(&a_fn, q, d).unwrap();
        for atom in 0..q as usize {
            let img = h.apply_to_set(&box_set(&grid, &sectors, atom));
            assert_eq!(img, box_set(&grid, &interlaced, atom));
        }
    }

    #[test]
    fn conjugacy_sweep_small_cases() {
        for r in [0, 1, 2] {
            let rep = verify_conjugacy(2, 6, 1, 3, r).unwrap();
            assert!(rep.all_hold(), "failures at r={r}");
            assert!(rep.checked_tau1 > 0);
            assert!(rep.checked_tau2 > 0);
            assert_eq!(
                rep.checked_tau1 + rep.checked_tau2 + rep.skipped_boundary,
                648 * 6
            );
        }
        // q = 1 has no interior pairs at all
        let rep = verify_conjugacy(2, 2, 1, 1, 0).unwrap();
        assert_eq!(rep.checked_tau1 + rep.checked_tau2, 0);
        assert!(rep.all_hold());
    }

    #[test]
    fn conjugacy_sweep_larger_q() {
        let rep = verify_conjugacy(2, 10, 3, 5, 2).unwrap();
        assert!(rep.all_hold());
        assert!(rep.checked_tau1 > 0 && rep.checked_tau2 > 0);
    }

    #[test]
    fn stage_wrapper_runs_first_chain_stage() {
        let params = StageParams::new(
            1,
            2,
            0.1,
            BigInt::from(3),
            BigInt::from(5),
            BigInt::from(1),
            BigInt::from(10),
            EpsilonVariant::Strict12d,
        )
        .unwrap();
        let rep = verify_conjugacy_for_stage(&params).unwrap();
        assert!(rep.all_hold());
        assert_eq!(rep.q, 5);
        // m = kl/2 = 5, so r = m·p mod q = 15 mod 5 = 0
        assert_eq!(rep.r, 0);
    }
}
