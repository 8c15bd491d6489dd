//! Exact mode: every stage map as a permutation of one common product grid.
//!
//! A stage with data (n, d, p, q, k, l) gets the grid
//!
//!   D₁ = lcm(2 n l^d q³, k l q²),   D₂ = 2 l n q,   D_j = l n q (j ≥ 3),
//!
//! which is fine enough for the block conjugator (2 l^d q² | D₁), the next
//! rotation (q_{n+1} = k l q² | D₁), and the tower bases with their inset
//! margin δ/(2 l^d q²) = 1/(2 n l^d q³). For a chain the per-stage grids are
//! merged by componentwise lcm; the cell budget turns the astronomically
//! fine grids of deep stages into a clean error instead of an attempt.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;

use crate::analytic::{
    build_h_analytic, commutation_residual, d_rho, AnalyticTorusMap,
};
use crate::blockslide::{h_formula_permutation, stage_g_word, stage_slide_word, SlideWord};
use crate::error::{AbcError, Result};
use crate::grid::{CellPermutation, CellSet, GridSpec};
use crate::params::{ParamSchedule, StageParams};
use crate::rational::{mod1, Rational};

pub fn small_u64(v: &BigInt, name: &str) -> Result<u64> {
    v.to_u64().ok_or_else(|| {
        AbcError::Parameter(format!("{name} = {v} exceeds the exact-mode range"))
    })
}

/// Per-coordinate denominators of one stage's exact grid.
pub fn stage_dens(params: &StageParams) -> Result<Vec<u64>> {
    let d = params.d;
    let n = params.n as u64;
    let l = small_u64(&params.l, "l")?;
    let q = small_u64(&params.q, "q")?;
    let k = small_u64(&params.k, "k")?;
    let ld = l
        .checked_pow(d)
        .ok_or_else(|| AbcError::Parameter(format!("l^{d} overflows the exact grid")))?;
    let a = 2u64
        .checked_mul(n)
        .and_then(|v| v.checked_mul(ld))
        .and_then(|v| v.checked_mul(q))
        .and_then(|v| v.checked_mul(q))
        .and_then(|v| v.checked_mul(q));
    let b = k
        .checked_mul(l)
        .and_then(|v| v.checked_mul(q))
        .and_then(|v| v.checked_mul(q));
    let d1 = match (a, b) {
        (Some(a), Some(b)) => a.checked_mul(b / a.gcd(&b)),
        _ => None,
    }
    .ok_or_else(|| AbcError::Parameter("exact grid denominator overflows u64".into()))?;
    let d2 = 2 * l * n * q;
    let mut dens = vec![d1, d2];
    dens.extend(std::iter::repeat(l * n * q).take(d as usize - 2));
    Ok(dens)
}

/// Componentwise lcm of the stage grids for stages 1..=upto.
pub fn chain_grid(schedule: &ParamSchedule, upto: usize, budget: u128) -> Result<GridSpec> {
    if upto == 0 || upto > schedule.stages.len() {
        return Err(AbcError::Parameter(format!(
            "chain grid asked for stage {upto} of a {}-stage schedule",
            schedule.stages.len()
        )));
    }
    let mut dens = stage_dens(&schedule.stages[0])?;
    for stage in &schedule.stages[1..upto] {
        let next = stage_dens(stage)?;
        for (a, b) in dens.iter_mut().zip(next) {
            *a = a
                .checked_mul(b / a.gcd(&b))
                .ok_or_else(|| AbcError::Parameter("chain grid lcm overflows u64".into()))?;
        }
    }
    GridSpec::new(dens, budget)
}

/// h_n on `grid`: the block conjugator over the folded coordinates,
/// h_n = 𝔥 ∘ 𝔤₃ ∘ … ∘ 𝔤_d.
pub fn stage_h_permutation(grid: &GridSpec, params: &StageParams) -> Result<CellPermutation> {
    let l = small_u64(&params.l, "l")?;
    let q = small_u64(&params.q, "q")?;
    let p = small_u64(&params.p, "p")?;
    let r = small_u64(&params.r, "r")?;
    let word = stage_g_word(params.d, l, q)?;
    let g_perm = word.permutation(grid)?;
    let h_perm = h_formula_permutation(grid, l, p, q, r)?;
    Ok(g_perm.then(&h_perm))
}

/// The exact realization of T_n = H_n⁻¹ ∘ φ^{α_{n+1}} ∘ H_n on a common grid.
#[derive(Debug)]
pub struct ExactChain {
    pub grid: GridSpec,
    /// Conjugators h_1 .. h_n in stage order.
    pub stage_hs: Vec<CellPermutation>,
    /// H_n = h_n ∘ … ∘ h_1.
    pub big_h: CellPermutation,
    pub big_h_inv: CellPermutation,
    pub alpha_next: Rational,
    pub phi_alpha_next: CellPermutation,
    pub t: CellPermutation,
    /// q_{n+1}, the order of T_n on the grid.
    pub next_q: BigInt,
    pub next_p: BigInt,
}

pub fn build_exact_chain(
    schedule: &ParamSchedule,
    upto: usize,
    budget: u128,
) -> Result<ExactChain> {
    let grid = chain_grid(schedule, upto, budget)?;
    let mut stage_hs = Vec::with_capacity(upto);
    let mut big_h = CellPermutation::identity(grid.clone());
    for stage in &schedule.stages[..upto] {
        let h = stage_h_permutation(&grid, stage)?;
        big_h = big_h.then(&h);
        stage_hs.push(h);
    }
    let last = &schedule.stages[upto - 1];
    let alpha_next = mod1(&last.alpha_next());
    let phi_alpha_next = grid.phi(&alpha_next)?;
    let big_h_inv = big_h.inverse();
    let t = big_h.then(&phi_alpha_next).then(&big_h_inv);
    Ok(ExactChain {
        grid,
        stage_hs,
        big_h,
        big_h_inv,
        alpha_next,
        phi_alpha_next,
        t,
        next_q: last.q_next.clone(),
        next_p: last.p_next.clone(),
    })
}

impl ExactChain {
    /// Forward orbit of a cell under T_n, starting at the cell itself.
    pub fn orbit(&self, cell: u32, steps: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut c = cell;
        out.push(c);
        for _ in 0..steps {
            c = self.t.apply_cell(c);
            out.push(c);
        }
        out
    }

    /// T_n^k as a permutation (k small; repeated composition).
    pub fn t_power(&self, k: u64) -> CellPermutation {
        let mut p = CellPermutation::identity(self.grid.clone());
        for _ in 0..k {
            p = p.then(&self.t);
        }
        p
    }

    /// Pullback H_n⁻¹(S) of a cell set.
    pub fn pullback(&self, set: &CellSet) -> CellSet {
        self.big_h_inv.apply_to_set(set)
    }

    /// Distinct T_n cycle lengths with multiplicity (cells per length).
    pub fn cycle_spectrum(&self) -> std::collections::BTreeMap<u64, u64> {
        self.t.cycle_lengths()
    }
}

/// One stage's smoothed conjugator with its budgets and the sampled
/// commutation certificate against φ^{1/q_n}.
pub struct AnalyticStage {
    pub n: u32,
    pub q: u64,
    /// Exact slide-word model of h_n; empty for the degenerate l = 1 stage.
    pub word: SlideWord,
    pub h: AnalyticTorusMap,
    pub eps: f64,
    pub delta: f64,
    pub commutation: f64,
}

/// T_n = H_n⁻¹ ∘ φ^{α_{n+1}} ∘ H_n in analytic mode. H_n stays an
/// evaluation stack applied atom by atom; it is never collapsed into a
/// single closed form, so no representation error compounds across stages.
pub struct AnalyticChain {
    pub d: usize,
    pub stages: Vec<AnalyticStage>,
    pub big_h: AnalyticTorusMap,
    pub alpha_next: Rational,
    pub t: AnalyticTorusMap,
    /// Displacement budget T is built to meet outside its bad set.
    pub eps: f64,
    pub delta: f64,
}

/// Build the analytic stage stack through stage `upto` (0 gives the bare
/// rotation T₀ = φ^{α₁}).
///
/// Stage j receives the geometric budget share (ε/2^j, δ/2^j); its
/// conjugator is built at (ε_j/2, δ_j/3) so that the doubled appearance in
/// T (once in H, once in H⁻¹) still lands inside the stage share. Slide
/// realizations exist for l = 2q; l = 1 yields the identity conjugator and
/// a pure rotation stage. Every slide collar in T is widened by ε/2, the
/// worst drift the rest of the stack can feed into a read coordinate.
pub fn build_analytic_chain(
    schedule: &ParamSchedule,
    upto: usize,
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<AnalyticChain> {
    let d = schedule.d as usize;
    let mut stages = Vec::with_capacity(upto);
    let mut big_h = AnalyticTorusMap::identity(d);
    for (idx, params) in schedule.stages[..upto].iter().enumerate() {
        let j = idx as u32 + 1;
        let l = small_u64(&params.l, "l")?;
        let q = small_u64(&params.q, "q")?;
        let share = 0.5f64.powi(j as i32);
        let (eps_j, delta_j) = (eps * share, delta * share);
        let word = if l == 1 {
            SlideWord { slides: Vec::new() }
        } else {
            let p = small_u64(&params.p, "p")?;
            let r = small_u64(&params.r, "r")?;
            stage_slide_word(params.d, l, p, q, r)?
        };
        let mut h = build_h_analytic(&word, q, eps_j / 2.0, delta_j / 3.0)?;
        h.d = d;
        let commutation = commutation_residual(&h, q, 64, seed ^ j as u64);
        big_h = big_h.then(&h);
        stages.push(AnalyticStage {
            n: params.n,
            q,
            word,
            h,
            eps: eps_j,
            delta: delta_j,
            commutation,
        });
    }
    // upto = 0 is the chain before any conjugation: the seed rotation α₁,
    // regardless of how many stages the schedule itself carries
    let alpha_next = match schedule.stages[..upto].last() {
        Some(last) => mod1(&last.alpha_next()),
        None => mod1(&Rational::new(
            schedule.seed_p.clone(),
            schedule.seed_q.clone(),
        )),
    };
    let rot = AnalyticTorusMap::rotation_x1(d, alpha_next.to_f64().unwrap());
    let mut t = big_h.then(&rot).then(&big_h.inverse());
    t.widen_collars(eps / 2.0);
    Ok(AnalyticChain {
        d,
        stages,
        big_h,
        alpha_next,
        t,
        eps,
        delta,
    })
}

impl AnalyticChain {
    /// Forward orbit of a point under T_n, coordinates reduced mod 1
    /// between steps; the flag reports whether any step grazed the bad set.
    pub fn orbit(&self, x: &[f64], steps: usize) -> (Vec<Vec<f64>>, bool) {
        let mut cur: Vec<f64> = x.iter().map(|c| c.rem_euclid(1.0)).collect();
        let mut out = vec![cur.clone()];
        let mut flagged = false;
        for _ in 0..steps {
            let (y, f) = self.t.eval_flagged(&cur);
            flagged |= f;
            cur = y.into_iter().map(|c| c.rem_euclid(1.0)).collect();
            out.push(cur.clone());
        }
        (out, flagged)
    }
}

/// Outcome of the doubling search for k_n, with the sampling certificate.
#[derive(Debug, Clone)]
pub struct KChoice {
    pub k: BigInt,
    pub doublings: u32,
    /// α_{n+1} − α_n = 1/(k l q_n²) for the chosen k.
    pub gap: Rational,
    pub rho: f64,
    pub samples: usize,
    pub sampled_drho: f64,
    pub met: bool,
}

/// Doubling search for the smallest k with sampled d_ρ(T_n, T_{n−1})
/// below the budget, given the chain built so far and the candidate l.
///
/// An infinite budget is met by k = 1 outright, with no stage built. The
/// search starts at k = 1 (k = 2 when l is odd, since kl must stay even)
/// and doubles until the budget is met or the ceiling 2^ceiling_log2 is
/// reached; an unmet budget returns the ceiling with `met == false` rather
/// than an error, so callers can report the failed certificate. Strip
/// overflow of a sharp conjugator shows up here as sampled_drho = +∞.
#[allow(clippy::too_many_arguments)]
pub fn choose_kn(
    schedule: &ParamSchedule,
    l: &BigInt,
    rho: f64,
    eps_budget: f64,
    ceiling_log2: u32,
    build_eps: f64,
    build_delta: f64,
    samples: usize,
    seed: u64,
) -> Result<KChoice> {
    let (_, q) = schedule.pending_pq();
    if eps_budget.is_infinite() {
        return Ok(KChoice {
            k: BigInt::from(1),
            doublings: 0,
            gap: Rational::new(BigInt::from(1), l * &q * &q),
            rho,
            samples,
            sampled_drho: 0.0,
            met: true,
        });
    }
    let upto = schedule.stages.len();
    let prev = build_analytic_chain(schedule, upto, build_eps, build_delta, seed)?;
    let k0 = if l.is_even() { 1u32 } else { 2 };
    let mut last = None;
    for j in 0..=ceiling_log2 {
        let k = BigInt::from(k0) << j;
        let mut draft = schedule.clone();
        draft.extend_unchecked_leven(k.clone(), l.clone())?;
        let next =
            build_analytic_chain(&draft, upto + 1, build_eps, build_delta, seed)?;
        let sampled = d_rho(&next.t, &prev.t, rho, samples, seed);
        let choice = KChoice {
            k,
            doublings: j,
            gap: draft.stages[upto].gap(),
            rho,
            samples,
            sampled_drho: sampled,
            met: sampled < eps_budget,
        };
        if choice.met {
            return Ok(choice);
        }
        last = Some(choice);
    }
    Ok(last.expect("at least one k is always tested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::torus_dist;
    use crate::grid::DEFAULT_CELL_BUDGET;
    use crate::params::EpsilonVariant;
    use crate::partitions::t_partition;
    use crate::rational::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schedule(p: i64, q: i64, stages: &[(i64, i64)]) -> ParamSchedule {
        let mut s = ParamSchedule::new(
            BigInt::from(p),
            BigInt::from(q),
            2,
            0.1,
            EpsilonVariant::Strict12d,
        )
        .unwrap();
        for &(k, l) in stages {
            s.extend(BigInt::from(k), BigInt::from(l)).unwrap();
        }
        s
    }

    #[test]
    fn stage_grid_denominators() {
        let s = schedule(3, 5, &[(1, 10)]);
        assert_eq!(stage_dens(&s.stages[0]).unwrap(), vec![25000, 100]);
        let s = schedule(1, 3, &[(1, 6)]);
        assert_eq!(stage_dens(&s.stages[0]).unwrap(), vec![1944, 36]);
    }

    #[test]
    fn single_stage_chain_cycles_exactly() {
        // p/q = 1/3, k=1, l=6: q' = 54, p' = 19
        let s = schedule(1, 3, &[(1, 6)]);
        let chain = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(chain.next_q, BigInt::from(54));
        assert_eq!(chain.next_p, BigInt::from(19));
        let spectrum = chain.cycle_spectrum();
        assert_eq!(spectrum.len(), 1);
        assert_eq!(spectrum[&54], 1944 * 36 / 54);
        // T^{q'} = id
        assert!(chain.t_power(54).is_identity());
        assert!(!chain.t_power(27).is_identity());
    }

    #[test]
    fn conjugator_commutes_with_its_own_rotation() {
        let s = schedule(1, 3, &[(1, 6)]);
        let chain = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        let phi_alpha = chain.grid.phi(&rat(1, 3)).unwrap();
        assert!(chain.stage_hs[0].commutes_with(&phi_alpha));
    }

    #[test]
    fn t_permutes_pulled_back_sectors() {
        let s = schedule(1, 3, &[(1, 6)]);
        let chain = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        let sectors = t_partition(54, 2).unwrap();
        let sets: Vec<CellSet> = (0..54)
            .map(|i| {
                let mut cells = Vec::new();
                for b in &sectors.atoms[i].boxes {
                    cells.extend(chain.grid.box_cells(&b.corners).unwrap().cells);
                }
                chain.pullback(&CellSet::from_unsorted(cells))
            })
            .collect();
        for i in 0..54 {
            let img = chain.t.apply_to_set(&sets[i]);
            assert_eq!(img, sets[(i + 19) % 54], "sector {i}");
        }
    }

    #[test]
    fn two_stage_chain_composes_exactly() {
        // seed 1/1: stage 1 (k=1, l=2) gives p'/q' = 3/2; stage 2 (k=1, l=8)
        // gives q'' = 32, p'' = 49
        let s = schedule(1, 1, &[(1, 2), (1, 8)]);
        assert_eq!(s.stages[0].p_next, BigInt::from(3));
        assert_eq!(s.stages[0].q_next, BigInt::from(2));
        assert_eq!(s.stages[1].q_next, BigInt::from(32));
        assert_eq!(s.stages[1].p_next, BigInt::from(49));
        let chain = build_exact_chain(&s, 2, DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(chain.grid.dens, vec![2048, 64]);
        let spectrum = chain.cycle_spectrum();
        assert_eq!(spectrum.len(), 1);
        assert_eq!(spectrum[&32], 2048 * 64 / 32);
        // h_2 commutes with φ^{α_2}, the rotation it was built around
        let phi_alpha2 = chain.grid.phi(&mod1(&s.stages[0].alpha_next())).unwrap();
        assert!(chain.stage_hs[1].commutes_with(&phi_alpha2));
        // H_2 = h_2 ∘ h_1 assembled in the right order
        let manual = chain.stage_hs[0].then(&chain.stage_hs[1]);
        assert_eq!(manual.map, chain.big_h.map);
    }

    #[test]
    fn deep_stage_grid_hits_budget() {
        let mut s = schedule(1, 2, &[(1, 4)]);
        s.extend_unchecked_leven(BigInt::from(1), BigInt::from(32))
            .unwrap();
        let err = build_exact_chain(&s, 2, DEFAULT_CELL_BUDGET).unwrap_err();
        match err {
            AbcError::Budget { cells, budget } => {
                assert!(cells > budget);
            }
            other => panic!("expected a budget error, got {other}"),
        }
    }

    #[test]
    fn orbit_walks_the_rotation_upstairs() {
        let s = schedule(1, 3, &[(1, 6)]);
        let chain = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        let orbit = chain.orbit(0, 54);
        assert_eq!(orbit[0], 0);
        assert_eq!(orbit[54], 0);
        let distinct: std::collections::BTreeSet<u32> = orbit.iter().copied().collect();
        assert_eq!(distinct.len(), 54);
    }

    #[test]
    fn degenerate_chain_doubles_k_until_the_gap_fits() {
        // l = 1 gives identity conjugators and pure rotation stages, so the
        // sampled strip metric equals the rotation gap exactly
        let s = ParamSchedule::new(
            BigInt::from(1),
            BigInt::from(2),
            2,
            0.05,
            EpsilonVariant::Strict12d,
        )
        .unwrap();
        let one = BigInt::from(1);
        // stage 1 budget ε₁ = δ₁/(12·2·q₁²) = (1/2)/96 = 1/192
        let choice = choose_kn(&s, &one, 0.05, 1.0 / 192.0, 12, 1e-3, 0.3, 32, 7).unwrap();
        assert!(choice.met);
        assert_eq!(choice.k, BigInt::from(64));
        assert_eq!(choice.doublings, 5);
        assert_eq!(choice.gap, rat(1, 256));
        assert!((choice.sampled_drho - 0.00390625).abs() < 1e-15);

        // doubling k halves the gap, exactly in ℚ
        let mut doubled = s.clone();
        doubled
            .extend_unchecked_leven(BigInt::from(128), one.clone())
            .unwrap();
        assert_eq!(doubled.stages[0].gap() * rat(2, 1), choice.gap);

        // second stage on top of the chosen k
        let mut s2 = s.clone();
        s2.extend_unchecked_leven(choice.k.clone(), one.clone())
            .unwrap();
        assert!(!s2.leven_ok[0]);
        assert_eq!(s2.stages[0].q_next, BigInt::from(256));
        // ε₂ = δ₂/(12·2·q₂²) = (1/512)/(24·65536) = 1/805306368
        let eps2 = 1.0 / 805306368.0;
        let choice2 = choose_kn(&s2, &one, 0.05, eps2, 20, 1e-3, 0.3, 16, 7).unwrap();
        assert!(choice2.met);
        assert_eq!(choice2.k, BigInt::from(16384));
        assert!((choice2.sampled_drho - 2f64.powi(-30)).abs() < 1e-16);
        assert!(choice2.sampled_drho < eps2);
    }

    #[test]
    fn infinite_budget_is_met_by_the_first_k() {
        let s = ParamSchedule::new(
            BigInt::from(1),
            BigInt::from(2),
            2,
            0.05,
            EpsilonVariant::Strict12d,
        )
        .unwrap();
        let choice = choose_kn(
            &s,
            &BigInt::from(1),
            0.05,
            f64::INFINITY,
            4,
            1e-3,
            0.3,
            8,
            1,
        )
        .unwrap();
        assert!(choice.met);
        assert_eq!(choice.k, BigInt::from(1));
        assert_eq!(choice.doublings, 0);
    }

    #[test]
    fn sharp_conjugator_flags_unmet_budget() {
        // a genuine block conjugator at ρ = 0.05: the smoothing is far too
        // sharp for that strip, the metric overflows, and the search returns
        // its ceiling with the failure flag instead of pretending
        let s = ParamSchedule::new(
            BigInt::from(1),
            BigInt::from(3),
            2,
            0.05,
            EpsilonVariant::Strict12d,
        )
        .unwrap();
        let choice = choose_kn(&s, &BigInt::from(6), 0.05, 1e-3, 1, 1e-4, 0.5, 4, 3).unwrap();
        assert!(!choice.met);
        assert!(choice.sampled_drho.is_infinite());
        assert_eq!(choice.k, BigInt::from(2));
        assert_eq!(choice.doublings, 1);
    }

    #[test]
    fn cross_mode_orbits_agree_outside_the_bad_set() {
        let s = schedule(1, 3, &[(1, 6)]);
        let exact = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        let analytic = build_analytic_chain(&s, 1, 1e-4, 0.5, 41).unwrap();
        assert_eq!(analytic.alpha_next, rat(19, 54));
        assert!(analytic.stages[0].commutation < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut good = 0;
        for _ in 0..100 {
            let cell = rng.gen_range(0..exact.grid.cell_count());
            let coords = exact.grid.decode(cell);
            let x: Vec<f64> = coords
                .iter()
                .zip(&exact.grid.dens)
                .map(|(i, den)| (*i as f64 + 0.5) / *den as f64)
                .collect();
            let (img, flagged) = analytic.t.eval_flagged(&x);
            if flagged {
                continue;
            }
            good += 1;
            // every stage map is a cellwise translation on the exact grid,
            // so the image of a cell center is the image cell's center
            let icoords = exact.grid.decode(exact.t.apply_cell(cell));
            for (axis, (i, den)) in icoords.iter().zip(&exact.grid.dens).enumerate() {
                let target = (*i as f64 + 0.5) / *den as f64;
                assert!(
                    torus_dist(img[axis], target) < 1e-4,
                    "axis {axis}: {} vs {target}",
                    img[axis]
                );
            }
        }
        assert!(good >= 40, "only {good} unflagged starts");
    }
}
