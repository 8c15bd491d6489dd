//! Spectral probes of the exact stage maps: Koopman correlations, the
//! weak-limit mixture fit over tower observables, a Fejér-averaged spectral
//! density, and the κ mixing statistic.
//!
//! Everything upstream of the final least-squares division is exact. An
//! observable is either a rational vector on the grid cells or, in the common
//! indicator case, a cell set A standing for 1_A − μ(A); inner products of the
//! latter reduce to ⟨f_A, f_B⟩ = μ(A∩B) − μ(A)μ(B), so the Koopman data is
//! plain set arithmetic.

use num_traits::{ToPrimitive, Zero};

use crate::error::{AbcError, Result};
use crate::grid::{CellPermutation, CellSet, GridSpec};
use crate::intervals::IntervalSet;
use crate::rational::{rat_int, Rational};

/// ⟨f, g⟩ = (1/N) Σ f(c) g(c) over the grid cells.
pub fn inner_product(grid: &GridSpec, f: &[Rational], g: &[Rational]) -> Rational {
    assert_eq!(f.len(), grid.cell_count() as usize);
    assert_eq!(g.len(), grid.cell_count() as usize);
    let sum: Rational = f.iter().zip(g).map(|(a, b)| a * b).sum();
    sum / rat_int(grid.cell_count() as i64)
}

/// The Koopman image Uf = f ∘ T for a cell map T.
pub fn koopman_apply(t: &CellPermutation, f: &[Rational]) -> Vec<Rational> {
    assert_eq!(f.len(), t.map.len());
    t.map.iter().map(|&img| f[img as usize].clone()).collect()
}

/// ⟨f_A, f_B⟩ for the mean-zero indicators of A and B.
pub fn indicator_inner(grid: &GridSpec, a: &CellSet, b: &CellSet) -> Rational {
    a.intersection(b).measure(grid) - a.measure(grid) * b.measure(grid)
}

/// The correlation sequence c_k = ⟨U^k f_A, f_B⟩ = μ(T^{−k}A ∩ B) − μ(A)μ(B)
/// for k = 0..=kmax. `t_inv` must be the cell map of T⁻¹.
pub fn correlation_sequence(
    grid: &GridSpec,
    t_inv: &CellPermutation,
    a: &CellSet,
    b: &CellSet,
    kmax: usize,
) -> Vec<Rational> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut pre = a.clone();
    for _ in 0..=kmax {
        out.push(indicator_inner(grid, &pre, b));
        pre = t_inv.apply_to_set(&pre);
    }
    out
}

/// Least-squares fit of ⟨U^{h+1}f, g⟩ ≈ (1−r)⟨f, g⟩ + r⟨Uf, g⟩ over all
/// ordered pairs of observables, kept exact until the final conversion.
#[derive(Debug, Clone)]
pub struct WeakLimitFit {
    pub h: u64,
    pub pair_count: usize,
    pub r_exact: Rational,
    pub r: f64,
    /// 1 − Σc/Σb over the diagonal pairs (where a = ⟨Uf, f⟩ is negligible).
    pub r_same: f64,
    /// ‖c − b − r(a−b)‖ / ‖c‖ over all pairs.
    pub rel_residual: f64,
}

impl WeakLimitFit {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.r > lo && self.r < hi
    }
}

struct PairData {
    diagonal: bool,
    a: Rational,
    b: Rational,
    c: Rational,
}

fn fit_from_pairs(h: u64, pairs: Vec<PairData>) -> Result<WeakLimitFit> {
    let mut num = Rational::zero();
    let mut den = Rational::zero();
    for p in &pairs {
        let ab = &p.a - &p.b;
        num += (&p.c - &p.b) * &ab;
        den += &ab * &ab;
    }
    if den.is_zero() {
        return Err(AbcError::Parameter(
            "weak-limit fit is degenerate: ⟨Uf,g⟩ = ⟨f,g⟩ throughout".into(),
        ));
    }
    let r_exact = num / den;
    let mut same_b = Rational::zero();
    let mut same_c = Rational::zero();
    for p in pairs.iter().filter(|p| p.diagonal) {
        same_b += &p.b;
        same_c += &p.c;
    }
    if same_b.is_zero() {
        return Err(AbcError::Parameter(
            "weak-limit fit is degenerate: zero-variance observables".into(),
        ));
    }
    let r_same = rat_int(1) - same_c / same_b;
    let mut res2 = Rational::zero();
    let mut c2 = Rational::zero();
    for p in &pairs {
        let e = &p.c - &p.b - &r_exact * (&p.a - &p.b);
        res2 += &e * &e;
        c2 += &p.c * &p.c;
    }
    let rel_residual = if c2.is_zero() {
        0.0
    } else {
        (res2.to_f64().unwrap() / c2.to_f64().unwrap()).sqrt()
    };
    let r = r_exact.to_f64().unwrap();
    Ok(WeakLimitFit {
        h,
        pair_count: pairs.len(),
        r_exact,
        r,
        r_same: r_same.to_f64().unwrap(),
        rel_residual,
    })
}

/// Fit the mixture weight r from the observables' Koopman data at lag h+1.
/// `t_inv` must be the cell map of T⁻¹.
pub fn fit_weak_limit(
    grid: &GridSpec,
    t_inv: &CellPermutation,
    atoms: &[CellSet],
    h: u64,
) -> Result<WeakLimitFit> {
    if atoms.len() < 2 {
        return Err(AbcError::Parameter(
            "weak-limit fit needs at least two observables".into(),
        ));
    }
    let mut pre1 = Vec::with_capacity(atoms.len());
    let mut preh = Vec::with_capacity(atoms.len());
    for atom in atoms {
        let one = t_inv.apply_to_set(atom);
        let mut many = one.clone();
        for _ in 1..=h {
            many = t_inv.apply_to_set(&many);
        }
        pre1.push(one);
        preh.push(many);
    }
    let mut pairs = Vec::with_capacity(atoms.len() * atoms.len());
    for (i, atom) in atoms.iter().enumerate() {
        for (j, other) in atoms.iter().enumerate() {
            pairs.push(PairData {
                diagonal: i == j,
                a: indicator_inner(grid, &pre1[i], other),
                b: indicator_inner(grid, atom, other),
                c: indicator_inner(grid, &preh[i], other),
            });
        }
    }
    fit_from_pairs(h, pairs)
}

/// ⟨f_A, f_B⟩ for observables A × S, B × S with a common side box of measure
/// `sigma`: σλ(A∩B) − σ²λ(A)λ(B).
pub fn indicator_inner_1d(a: &IntervalSet, b: &IntervalSet, sigma: &Rational) -> Rational {
    sigma * a.intersection_measure(b) - sigma * sigma * a.measure() * b.measure()
}

/// The same fit computed on x₁ interval sets under the rotation by α'
/// (the upstairs form of the stage map); exact at any parameter size.
pub fn fit_weak_limit_1d(
    alpha_next: &Rational,
    sigma: &Rational,
    atoms: &[IntervalSet],
    h: u64,
) -> Result<WeakLimitFit> {
    if atoms.len() < 2 {
        return Err(AbcError::Parameter(
            "weak-limit fit needs at least two observables".into(),
        ));
    }
    let back1 = -alpha_next;
    let backh = rat_int(-((h + 1) as i64)) * alpha_next;
    let pre1: Vec<IntervalSet> = atoms.iter().map(|a| a.rotate(&back1)).collect();
    let preh: Vec<IntervalSet> = atoms.iter().map(|a| a.rotate(&backh)).collect();
    let mut pairs = Vec::with_capacity(atoms.len() * atoms.len());
    for (i, atom) in atoms.iter().enumerate() {
        for (j, other) in atoms.iter().enumerate() {
            pairs.push(PairData {
                diagonal: i == j,
                a: indicator_inner_1d(&pre1[i], other, sigma),
                b: indicator_inner_1d(atom, other, sigma),
                c: indicator_inner_1d(&preh[i], other, sigma),
            });
        }
    }
    fit_from_pairs(h, pairs)
}

/// The stability probe: fit once on all observables and once on each half of
/// an interleaved split (both halves mix tower-1 and tower-2 levels), then
/// compare the two independent r values.
#[derive(Debug, Clone)]
pub struct WeakLimitStability {
    pub all: WeakLimitFit,
    pub first: WeakLimitFit,
    pub second: WeakLimitFit,
    pub r_gap: f64,
}

fn interleave<T: Clone>(atoms: &[T]) -> (Vec<T>, Vec<T>) {
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for (i, a) in atoms.iter().enumerate() {
        if i % 2 == 0 {
            even.push(a.clone());
        } else {
            odd.push(a.clone());
        }
    }
    (even, odd)
}

pub fn weak_limit_stability(
    grid: &GridSpec,
    t_inv: &CellPermutation,
    atoms: &[CellSet],
    h: u64,
) -> Result<WeakLimitStability> {
    let (even, odd) = interleave(atoms);
    let all = fit_weak_limit(grid, t_inv, atoms, h)?;
    let first = fit_weak_limit(grid, t_inv, &even, h)?;
    let second = fit_weak_limit(grid, t_inv, &odd, h)?;
    let r_gap = (first.r - second.r).abs();
    Ok(WeakLimitStability {
        all,
        first,
        second,
        r_gap,
    })
}

pub fn weak_limit_stability_1d(
    alpha_next: &Rational,
    sigma: &Rational,
    atoms: &[IntervalSet],
    h: u64,
) -> Result<WeakLimitStability> {
    let (even, odd) = interleave(atoms);
    let all = fit_weak_limit_1d(alpha_next, sigma, atoms, h)?;
    let first = fit_weak_limit_1d(alpha_next, sigma, &even, h)?;
    let second = fit_weak_limit_1d(alpha_next, sigma, &odd, h)?;
    let r_gap = (first.r - second.r).abs();
    Ok(WeakLimitStability {
        all,
        first,
        second,
        r_gap,
    })
}

/// Fejér average of the spectral density of an autocorrelation sequence,
/// sampled on a grid of 4K angles.
#[derive(Debug, Clone)]
pub struct FejerCheck {
    pub coefficient_count: usize,
    pub grid_points: usize,
    pub c0: f64,
    pub min_density: f64,
    /// Average of the sampled density; equals c₀ up to rounding because the
    /// sampling grid is finer than twice the top frequency.
    pub mass: f64,
    pub nonnegative: bool,
    pub mass_matches_c0: bool,
}

/// ρ̂(θ) = c₀ + 2 Σ_{0<k<K} (1 − k/K) c_k cos(kθ). For a genuine correlation
/// sequence this is ≥ 0 in exact arithmetic; `tolerance` absorbs the f64
/// rounding of the sampled values.
pub fn fejer_density(corrs: &[Rational], tolerance: f64) -> FejerCheck {
    let kk = corrs.len();
    let c: Vec<f64> = corrs.iter().map(|x| x.to_f64().unwrap()).collect();
    let g = 4 * kk.max(1);
    let mut min_density = f64::INFINITY;
    let mut mass = 0.0;
    for j in 0..g {
        let theta = 2.0 * std::f64::consts::PI * (j as f64) / (g as f64);
        let mut rho = c[0];
        for (k, ck) in c.iter().enumerate().skip(1) {
            let weight = 1.0 - (k as f64) / (kk as f64);
            rho += 2.0 * weight * ck * (k as f64 * theta).cos();
        }
        min_density = min_density.min(rho);
        mass += rho;
    }
    mass /= g as f64;
    FejerCheck {
        coefficient_count: kk,
        grid_points: g,
        c0: c[0],
        min_density,
        mass,
        nonnegative: min_density >= -tolerance,
        mass_matches_c0: (mass - c[0]).abs() < 1e-8,
    }
}

/// κ = (μ(A ∩ T^k B) − μ(A∩B)) / (μ(A)μ(B) − μ(A∩B)); 0 for a map that fixes
/// the overlap pattern, 1 when the lag-k overlap looks independent. None when
/// the denominator vanishes (A, B already independent). `t` is the forward
/// cell map of T.
pub fn kappa_statistic(
    grid: &GridSpec,
    t: &CellPermutation,
    a: &CellSet,
    b: &CellSet,
    k: u64,
) -> Option<Rational> {
    let mut image = b.clone();
    for _ in 0..k {
        image = t.apply_to_set(&image);
    }
    let lagged = a.intersection(&image).measure(grid);
    let plain = a.intersection(b).measure(grid);
    let den = a.measure(grid) * b.measure(grid) - &plain;
    if den.is_zero() {
        None
    } else {
        Some((lagged - plain) / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DEFAULT_CELL_BUDGET;
    use crate::rational::{mod1, rat};
    use crate::testchains::{chain136, chain35, schedule};
    use crate::towers::{build_towers, tower_x1_stripes};

    fn small_grid() -> GridSpec {
        GridSpec::new(vec![6, 4], DEFAULT_CELL_BUDGET).unwrap()
    }

    #[test]
    fn koopman_is_unitary_exactly() {
        let grid = small_grid();
        let t = grid.phi(&rat(1, 6)).unwrap();
        let n = grid.cell_count() as i64;
        let f: Vec<Rational> = (0..n).map(|i| rat((3 * i + 1) % 7 - 3, 5)).collect();
        let g: Vec<Rational> = (0..n).map(|i| rat((5 * i + 2) % 11 - 4, 3)).collect();
        let uf = koopman_apply(&t, &f);
        let ug = koopman_apply(&t, &g);
        assert_eq!(
            inner_product(&grid, &uf, &ug),
            inner_product(&grid, &f, &g)
        );
        // and the indicator shortcut agrees with the vector inner product
        let a = grid
            .box_cells(&[(rat(0, 1), rat(1, 2)), (rat(0, 1), rat(1, 1))])
            .unwrap();
        let b = grid
            .box_cells(&[(rat(1, 6), rat(2, 3)), (rat(0, 1), rat(3, 4))])
            .unwrap();
        let vec_of = |s: &CellSet| -> Vec<Rational> {
            let mu = s.measure(&grid);
            (0..grid.cell_count() as u32)
                .map(|c| if s.contains(c) { rat(1, 1) - &mu } else { -mu.clone() })
                .collect()
        };
        assert_eq!(
            indicator_inner(&grid, &a, &b),
            inner_product(&grid, &vec_of(&a), &vec_of(&b))
        );
    }

    #[test]
    fn correlations_obey_cauchy_schwarz() {
        let grid = small_grid();
        let t_inv = grid.phi(&rat(1, 6)).unwrap().inverse();
        let a = grid
            .box_cells(&[(rat(0, 1), rat(1, 3)), (rat(1, 4), rat(3, 4))])
            .unwrap();
        let b = grid
            .box_cells(&[(rat(1, 2), rat(1, 1)), (rat(0, 1), rat(1, 2))])
            .unwrap();
        let norm2 = |s: &CellSet| indicator_inner(&grid, s, s);
        let bound2 = norm2(&a) * norm2(&b);
        for c in correlation_sequence(&grid, &t_inv, &a, &b, 12) {
            assert!(&c * &c <= bound2);
        }
    }

    #[test]
    fn kappa_oracles() {
        let grid = GridSpec::new(vec![4, 4], DEFAULT_CELL_BUDGET).unwrap();
        let a = grid
            .box_cells(&[(rat(0, 1), rat(1, 2)), (rat(0, 1), rat(1, 1))])
            .unwrap();
        // identity map: the overlap pattern never moves
        let id = CellPermutation::identity(grid.clone());
        assert_eq!(kappa_statistic(&grid, &id, &a, &a, 3), Some(rat(0, 1)));
        // quarter rotation at lag 1 decorrelates the half-strips completely
        let quarter = grid.phi(&rat(1, 4)).unwrap();
        assert_eq!(kappa_statistic(&grid, &quarter, &a, &a, 1), Some(rat(1, 1)));
        // independent sets have no overlap defect to normalize by
        let stripe = grid
            .box_cells(&[(rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 4))])
            .unwrap();
        assert_eq!(kappa_statistic(&grid, &quarter, &a, &stripe, 1), None);
    }

    #[test]
    fn weak_limit_fit_on_the_acceptance_chain() {
        let (s, chain) = chain35();
        let params = &s.stages[0];
        let towers = build_towers(params, &chain.grid).unwrap();
        let atoms = towers.eta_atoms();
        // upstairs T acts as the rotation φ^{α'}
        let t_inv = chain.grid.phi(&mod1(&-params.alpha_next())).unwrap();
        let fit = fit_weak_limit(&chain.grid, &t_inv, &atoms, towers.m).unwrap();
        assert_eq!(fit.pair_count, 36);
        assert!(fit.within(0.05, 0.95), "r = {}", fit.r);
        // at q = 5 each top return displaces 1 of q−1 = 4 stripes, so the
        // mixture model carries an intrinsic ~25% defect; these frozen values
        // are the exact outcome at this scale, not a tolerance target
        assert!((fit.r - 0.48881789137380194).abs() < 1e-12);
        assert!((fit.rel_residual - 0.6075337143926712).abs() < 1e-12);
        assert!(fit.r_same > 0.05 && fit.r_same < 0.95);

        // the interval form of the same fit reproduces the rationals exactly
        let stripes = tower_x1_stripes(params).unwrap();
        let fit1d = fit_weak_limit_1d(
            &stripes.alpha_next,
            &stripes.side_factor,
            &stripes.eta_atoms(),
            stripes.m,
        )
        .unwrap();
        assert_eq!(fit1d.r_exact, fit.r_exact);
        assert_eq!(fit1d.rel_residual, fit.rel_residual);
    }

    #[test]
    fn upstairs_and_downstairs_fits_agree() {
        let (s, chain) = chain136();
        let params = &s.stages[0];
        let towers = build_towers(params, &chain.grid).unwrap();
        let atoms = towers.eta_atoms();
        let t_inv_up = chain.grid.phi(&mod1(&-params.alpha_next())).unwrap();
        let up = fit_weak_limit(&chain.grid, &t_inv_up, &atoms, towers.m).unwrap();
        let down_atoms: Vec<CellSet> = atoms.iter().map(|a| chain.pullback(a)).collect();
        let t_inv_down = chain.t.inverse();
        let down = fit_weak_limit(&chain.grid, &t_inv_down, &down_atoms, towers.m).unwrap();
        assert_eq!(up.r_exact, down.r_exact);
        assert_eq!(up.rel_residual, down.rel_residual);
    }

    #[test]
    fn weak_limit_sharpens_on_a_wide_stage() {
        // q = 25 puts the per-return stripe defect at 1/24: the mixture model
        // must now fit tightly and stay stable across disjoint observable
        // halves. Grid-free, so the big q' = 31250 costs nothing.
        let s = schedule(7, 25, &[(1, 50)]);
        let params = &s.stages[0];
        let stripes = tower_x1_stripes(params).unwrap();
        assert_eq!(stripes.m, 25);
        // the 51 levels stay pairwise disjoint at this scale too
        let all: Vec<&IntervalSet> = stripes.levels1.iter().chain(&stripes.levels2).collect();
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                assert!(all[i].is_disjoint(all[j]), "levels {i}, {j} overlap");
            }
        }
        let atoms = stripes.eta_atoms();
        assert_eq!(atoms.len(), 26);
        let st = weak_limit_stability_1d(
            &stripes.alpha_next,
            &stripes.side_factor,
            &atoms,
            stripes.m,
        )
        .unwrap();
        assert!(st.all.within(0.05, 0.95), "r = {}", st.all.r);
        assert!(st.all.rel_residual < 0.2, "residual = {}", st.all.rel_residual);
        assert!(st.r_gap < 0.1, "gap = {}", st.r_gap);
        assert!(st.all.r_same > 0.05 && st.all.r_same < 0.95);
    }

    #[test]
    fn fejer_density_of_a_tower_observable() {
        let (s, chain) = chain136();
        let params = &s.stages[0];
        let towers = build_towers(params, &chain.grid).unwrap();
        let t_inv = chain.grid.phi(&mod1(&-params.alpha_next())).unwrap();
        let base = &towers.levels1[0];
        let corrs = correlation_sequence(&chain.grid, &t_inv, base, base, 27);
        let check = fejer_density(&corrs, 1e-9);
        assert_eq!(check.grid_points, 112);
        assert!(check.nonnegative, "min density = {}", check.min_density);
        assert!(check.mass_matches_c0);
        assert!(check.c0 > 0.0);
    }
}
