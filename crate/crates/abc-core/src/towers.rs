//! Rokhlin-style towers for a stage, built upstairs where T acts as φ^{α'}.
//!
//! The conjugated picture keeps all mass bookkeeping exact: H is a cell
//! permutation, so every measure, overlap, and symmetric difference can be
//! computed on the tilde sets and pulled back later if a cross-check wants
//! the downstairs picture.
//!
//! The tower of height h ∈ {m, m+1} has base
//!
//!   c̃₀ = ∪_{i₁<q−1} [ mod₁(i₁·h·α') + o_h + δ/(2l^dq²), +q/q' )
//!        × ∪_{i₂<2l} [ (i₂+δ)/(2l), (i₂+1−δ)/(2l) )
//!        × Π_{j≥3} ∪_{i<l} [ (i+δ)/l, (i+1−δ)/l ),
//!
//! with x₁ offsets o_m = 1/(2q) and o_{m+1} = 0, and levels φ^{iα'}(c̃₀).
//! The stripe step h·α' is the return rotation of the tower: mod 1 it equals
//! τ₁ = r/q + 1/(2q²) for h = m and τ₂ + 1/q' = (r+p)/q + 1/(2q²) + 1/q' for
//! h = m+1, so φ^{hα'} carries stripe i₁ exactly onto stripe i₁+1 and only
//! the last stripe leaves the base. Exactly this offset pairing makes all
//! 2m+1 levels pairwise disjoint; swapping the offsets (or dropping the 1/q'
//! part of the taller tower's stripe step) already produces stripe collisions
//! at small parameters. The cyclic tower has the single-interval base
//! d̃₀ = [δ/(2l^dq²), +1/q') × (same insets) and exactly q' disjoint levels.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::engine::small_u64;
use crate::error::{AbcError, Result};
use crate::grid::{CellPermutation, CellSet, GridSpec};
use crate::intervals::IntervalSet;
use crate::params::StageParams;
use crate::rational::{mod1, one_minus_two_delta_pow, rat_int, Rational};

fn ratio(num: BigInt, den: BigInt) -> Rational {
    Rational::new(num, den)
}

/// Split [start, start+width) into grid-friendly pieces after reduction
/// modulo 1.
fn wrapped_interval(start: &Rational, width: &Rational) -> Vec<(Rational, Rational)> {
    let lo = mod1(start);
    let hi = &lo + width;
    if hi <= Rational::one() {
        vec![(lo, hi)]
    } else {
        vec![
            (lo, Rational::one()),
            (Rational::zero(), hi - Rational::one()),
        ]
    }
}

/// Cross the x₁ pieces with the inset boxes of the other coordinates and
/// collect all cells.
fn collect_box_cells(
    grid: &GridSpec,
    x1_pieces: &[(Rational, Rational)],
    side_intervals: &[Vec<(Rational, Rational)>],
) -> Result<CellSet> {
    let mut cells = Vec::new();
    let mut choice = vec![0usize; side_intervals.len()];
    loop {
        for piece in x1_pieces {
            let mut corners = vec![piece.clone()];
            for (axis, sel) in choice.iter().enumerate() {
                corners.push(side_intervals[axis][*sel].clone());
            }
            cells.extend(grid.box_cells(&corners)?.cells);
        }
        let mut axis = side_intervals.len();
        loop {
            if axis == 0 {
                return Ok(CellSet::from_unsorted(cells));
            }
            axis -= 1;
            choice[axis] += 1;
            if choice[axis] < side_intervals[axis].len() {
                break;
            }
            choice[axis] = 0;
        }
        if choice.iter().all(|&c| c == 0) {
            return Ok(CellSet::from_unsorted(cells));
        }
    }
}

/// Structured numbers for one stage's towers.
pub struct TowerPair {
    pub grid: GridSpec,
    pub delta: Rational,
    pub alpha_next: Rational,
    pub m: u64,
    /// Tower 1: m levels, base first.
    pub levels1: Vec<CellSet>,
    /// Tower 2: m+1 levels, base first.
    pub levels2: Vec<CellSet>,
    /// Exact per-level measure (same for every level of both towers).
    pub level_measure: Rational,
}

fn side_insets(params: &StageParams, l: u64) -> Result<Vec<Vec<(Rational, Rational)>>> {
    let d = params.d as usize;
    let delta = &params.delta;
    if delta >= &Rational::new(BigInt::one(), BigInt::from(2)) {
        return Err(AbcError::Parameter(format!(
            "δ = {} leaves no room for the inset boxes",
            delta
        )));
    }
    let mut side = Vec::with_capacity(d - 1);
    for axis in 1..d {
        let den = if axis == 1 { 2 * l } else { l };
        let den_rat = rat_int(den as i64);
        let pieces = (0..den)
            .map(|i| {
                let i_rat = rat_int(i as i64);
                (
                    (&i_rat + delta) / &den_rat,
                    (&i_rat + (Rational::one() - delta)) / &den_rat,
                )
            })
            .collect();
        side.push(pieces);
    }
    Ok(side)
}

/// Build both speed towers on `grid` (usually the stage grid).
pub fn build_towers(params: &StageParams, grid: &GridSpec) -> Result<TowerPair> {
    let q = small_u64(&params.q, "q")?;
    let l = small_u64(&params.l, "l")?;
    let m = small_u64(&params.m, "m")?;
    if q < 2 {
        return Err(AbcError::Parameter(
            "towers need q >= 2 (q = 1 has no stripes at all)".into(),
        ));
    }
    let q_next = params.q_next.clone();
    let width = ratio(BigInt::from(q), q_next.clone());
    let x1_inset = &params.delta / (rat_int(2) * params.l_pow_d() * &params.q * &params.q);
    let side = side_insets(params, l)?;
    let alpha_next = mod1(&params.alpha_next());
    let phi = grid.phi(&alpha_next)?;

    let mut towers = Vec::new();
    for (offset, height) in [
        (ratio(BigInt::one(), BigInt::from(2 * q)), m),
        (Rational::zero(), m + 1),
    ] {
        let step = mod1(&(rat_int(height as i64) * &alpha_next));
        let mut x1_pieces = Vec::new();
        for i1 in 0..(q - 1) {
            let start = mod1(&(rat_int(i1 as i64) * &step)) + &offset + &x1_inset;
            x1_pieces.extend(wrapped_interval(&start, &width));
        }
        let base = collect_box_cells(grid, &x1_pieces, &side)?;
        let mut levels = Vec::with_capacity(height as usize);
        levels.push(base);
        for _ in 1..height {
            let prev = levels.last().unwrap();
            levels.push(phi.apply_to_set(prev));
        }
        towers.push(levels);
    }
    let levels2 = towers.pop().unwrap();
    let levels1 = towers.pop().unwrap();

    let level_measure = ratio(BigInt::from(q - 1), BigInt::one())
        * ratio(BigInt::from(q), q_next)
        * one_minus_two_delta_pow(&params.delta, params.d - 1);
    Ok(TowerPair {
        grid: grid.clone(),
        delta: params.delta.clone(),
        alpha_next,
        m,
        levels1,
        levels2,
        level_measure,
    })
}

impl TowerPair {
    /// Union of level i of tower 1 with level i of tower 2, plus the lone
    /// top level of tower 2: the m+1 paired observables.
    pub fn eta_atoms(&self) -> Vec<CellSet> {
        let mut atoms: Vec<CellSet> = self
            .levels1
            .iter()
            .zip(&self.levels2)
            .map(|(a, b)| a.union(b))
            .collect();
        atoms.push(self.levels2.last().unwrap().clone());
        atoms
    }

    pub fn all_levels(&self) -> impl Iterator<Item = &CellSet> {
        self.levels1.iter().chain(self.levels2.iter())
    }

    pub fn mass_tower1(&self) -> Rational {
        self.levels1
            .iter()
            .map(|s| s.measure(&self.grid))
            .sum()
    }

    pub fn mass_tower2(&self) -> Rational {
        self.levels2
            .iter()
            .map(|s| s.measure(&self.grid))
            .sum()
    }
}

/// The towers reduced to their x₁ stripe unions: every level is (x₁ set) ×
/// (one fixed inset box), so measures and overlaps factor through the
/// `side_factor` (1−2δ)^{d−1}. This needs no grid and therefore works at
/// parameter sizes far beyond any cell budget.
pub struct TowerStripes1D {
    pub m: u64,
    pub alpha_next: Rational,
    pub side_factor: Rational,
    pub levels1: Vec<IntervalSet>,
    pub levels2: Vec<IntervalSet>,
}

impl TowerStripes1D {
    /// The paired observables: level i of both towers joined, plus the lone
    /// top level of tower 2.
    pub fn eta_atoms(&self) -> Vec<IntervalSet> {
        let mut atoms: Vec<IntervalSet> = self
            .levels1
            .iter()
            .zip(&self.levels2)
            .map(|(a, b)| a.union(b))
            .collect();
        atoms.push(self.levels2.last().unwrap().clone());
        atoms
    }
}

pub fn tower_x1_stripes(params: &StageParams) -> Result<TowerStripes1D> {
    let q = small_u64(&params.q, "q")?;
    let m = small_u64(&params.m, "m")?;
    if q < 2 {
        return Err(AbcError::Parameter(
            "towers need q >= 2 (q = 1 has no stripes at all)".into(),
        ));
    }
    let width = ratio(BigInt::from(q), params.q_next.clone());
    let x1_inset = &params.delta / (rat_int(2) * params.l_pow_d() * &params.q * &params.q);
    let alpha_next = mod1(&params.alpha_next());
    let mut towers = Vec::new();
    for (offset, height) in [
        (ratio(BigInt::one(), BigInt::from(2 * q)), m),
        (Rational::zero(), m + 1),
    ] {
        let step = mod1(&(rat_int(height as i64) * &alpha_next));
        let mut pieces = Vec::new();
        for i1 in 0..(q - 1) {
            let start = mod1(&(rat_int(i1 as i64) * &step)) + &offset + &x1_inset;
            pieces.extend(wrapped_interval(&start, &width));
        }
        let base = IntervalSet::from_pieces(pieces);
        let mut levels = Vec::with_capacity(height as usize);
        levels.push(base);
        for _ in 1..height {
            let prev = levels.last().unwrap();
            levels.push(prev.rotate(&alpha_next));
        }
        towers.push(levels);
    }
    let levels2 = towers.pop().unwrap();
    let levels1 = towers.pop().unwrap();
    Ok(TowerStripes1D {
        m,
        alpha_next,
        side_factor: one_minus_two_delta_pow(&params.delta, params.d - 1),
        levels1,
        levels2,
    })
}

/// Weak distance Σᵢ μ(T(levels[i]) Δ levels[successor[i]]), the symmetric
/// difference convention.
pub fn weak_distance(
    grid: &GridSpec,
    levels: &[CellSet],
    map: &CellPermutation,
    successor: &[usize],
) -> Rational {
    levels
        .iter()
        .zip(successor)
        .map(|(level, &s)| {
            map.apply_to_set(level)
                .symmetric_difference(&levels[s])
                .measure(grid)
        })
        .sum()
}

/// The top-return accounting for one stage's towers.
#[derive(Debug, Clone)]
pub struct TowerSpeedCheck {
    pub interior_levels_exact: bool,
    pub sym_tower1: Rational,
    pub sym_tower2: Rational,
    pub one_sided_tower1: Rational,
    pub one_sided_tower2: Rational,
    pub total_sym: Rational,
    pub total_one_sided: Rational,
    /// 3 q_n / q_{n+1}.
    pub bound: Rational,
    pub sym_is_twice_one_sided: bool,
    pub sym_within_bound: bool,
    pub one_sided_within_bound: bool,
}

impl TowerSpeedCheck {
    pub fn passes(&self) -> bool {
        self.interior_levels_exact
            && self.sym_is_twice_one_sided
            && self.sym_within_bound
            && self.one_sided_within_bound
    }
}

/// Walk both towers one step of φ^{α'}: interior levels must land exactly on
/// their successors, the tops return to their bases up to the measured
/// defect. The weak distance of the tower pattern is exactly the sum of the
/// two top defects.
pub fn check_tower_speed(
    params: &StageParams,
    grid: &GridSpec,
    towers: &TowerPair,
) -> Result<TowerSpeedCheck> {
    let phi = grid.phi(&towers.alpha_next)?;
    let mut interior_exact = true;
    for levels in [&towers.levels1, &towers.levels2] {
        for w in levels.windows(2) {
            if phi.apply_to_set(&w[0]) != w[1] {
                interior_exact = false;
            }
        }
    }
    let defect = |levels: &Vec<CellSet>| {
        let top_image = phi.apply_to_set(levels.last().unwrap());
        let base = &levels[0];
        let sym = top_image.symmetric_difference(base).measure(grid);
        let one_sided = ratio(
            BigInt::from(top_image.difference_len(base) as u64),
            BigInt::from(grid.cell_count()),
        );
        (sym, one_sided)
    };
    let (sym1, one1) = defect(&towers.levels1);
    let (sym2, one2) = defect(&towers.levels2);
    let total_sym = &sym1 + &sym2;
    let total_one_sided = &one1 + &one2;
    let bound = ratio(BigInt::from(3u32) * &params.q, params.q_next.clone());
    Ok(TowerSpeedCheck {
        interior_levels_exact: interior_exact,
        sym_is_twice_one_sided: total_sym == rat_int(2) * &total_one_sided,
        sym_within_bound: total_sym <= bound,
        one_sided_within_bound: total_one_sided <= bound,
        sym_tower1: sym1,
        sym_tower2: sym2,
        one_sided_tower1: one1,
        one_sided_tower2: one2,
        total_sym,
        total_one_sided,
        bound,
    })
}

/// The cyclic tower: q' congruent levels of measure (1−2δ)^{d−1}/q' tiling
/// (1−2δ)^{d−1} of the torus, on which T acts with period exactly q'.
pub struct CyclicTower {
    pub levels: Vec<CellSet>,
    pub level_measure: Rational,
}

pub fn build_cyclic_tower(params: &StageParams, grid: &GridSpec) -> Result<CyclicTower> {
    let l = small_u64(&params.l, "l")?;
    let q_next = small_u64(&params.q_next, "q'")?;
    let x1_inset = &params.delta / (rat_int(2) * params.l_pow_d() * &params.q * &params.q);
    let width = ratio(BigInt::one(), BigInt::from(q_next));
    let side = side_insets(params, l)?;
    let base = collect_box_cells(grid, &wrapped_interval(&x1_inset, &width), &side)?;
    let phi = grid.phi(&mod1(&params.alpha_next()))?;
    let mut levels = Vec::with_capacity(q_next as usize);
    levels.push(base);
    for _ in 1..q_next {
        let prev = levels.last().unwrap();
        levels.push(phi.apply_to_set(prev));
    }
    let level_measure =
        one_minus_two_delta_pow(&params.delta, params.d - 1) / rat_int(q_next as i64);
    Ok(CyclicTower {
        levels,
        level_measure,
    })
}

/// The good domain G̃_n: the δ-inset of every cell of the grid with
/// x₁ split into 2 l^d q² pieces, x₂ into 2l, and x_j into l.
pub fn good_domain(params: &StageParams, grid: &GridSpec) -> Result<CellSet> {
    let l = small_u64(&params.l, "l")?;
    let block_den = small_u64(&params.block_x1_denominator(), "2 l^d q^2")?;
    let delta = &params.delta;
    let den_rat = rat_int(block_den as i64);
    let x1_pieces: Vec<(Rational, Rational)> = (0..block_den)
        .map(|i| {
            let i_rat = rat_int(i as i64);
            (
                (&i_rat + delta) / &den_rat,
                (&i_rat + (Rational::one() - delta)) / &den_rat,
            )
        })
        .collect();
    let side = side_insets(params, l)?;
    collect_box_cells(grid, &x1_pieces, &side)
}

/// Exact refinement statistics of the towers against the good domain.
#[derive(Debug, Clone)]
pub struct RefinementStats {
    /// μ(G̃_n) = (1−2δ)^d.
    pub good_mass: Rational,
    /// Every tower level meets G̃_n in exactly the fraction 1−2δ.
    pub per_level_good_fraction: Vec<Rational>,
    pub per_level_fraction_uniform: bool,
    /// Level counts against the classical thresholds 2(1−2δ)m and (1−2δ)q'.
    pub eta_levels: u64,
    pub eta_level_threshold: Rational,
    pub cyclic_levels: u64,
    pub cyclic_level_threshold: Rational,
    /// max_{i≤m} i·|α_{n+1} − α_n| and its ceiling 1/(2q²); equal at i = m.
    pub max_drift: Rational,
    pub drift_limit: Rational,
}

impl RefinementStats {
    pub fn passes(&self) -> bool {
        self.per_level_fraction_uniform
            && rat_int(self.eta_levels as i64) >= self.eta_level_threshold
            && rat_int(self.cyclic_levels as i64) >= self.cyclic_level_threshold
            && self.max_drift <= self.drift_limit
    }
}

pub fn partition_refinement_stats(
    params: &StageParams,
    grid: &GridSpec,
    towers: &TowerPair,
    cyclic: &CyclicTower,
) -> Result<RefinementStats> {
    let good = good_domain(params, grid)?;
    let good_mass = good.measure(grid);
    let expected_fraction = Rational::one() - rat_int(2) * &params.delta;
    let mut fractions = Vec::new();
    let mut uniform = true;
    for level in towers.all_levels() {
        let frac = level.intersection(&good).measure(grid) / level.measure(grid);
        if frac != expected_fraction {
            uniform = false;
        }
        fractions.push(frac);
    }
    // spot-check the cyclic tower on its base rather than all q' levels
    let base_frac =
        cyclic.levels[0].intersection(&good).measure(grid) / cyclic.levels[0].measure(grid);
    if base_frac != expected_fraction {
        uniform = false;
    }
    let m = towers.m;
    let eta_levels = 2 * m + 1;
    let eta_threshold = rat_int(2) * &expected_fraction * rat_int(m as i64);
    let cyclic_levels = cyclic.levels.len() as u64;
    let cyclic_threshold = &expected_fraction * rat_int(cyclic_levels as i64);
    let max_drift = rat_int(m as i64) * params.gap();
    let drift_limit = ratio(BigInt::one(), BigInt::from(2) * &params.q * &params.q);
    Ok(RefinementStats {
        good_mass,
        per_level_good_fraction: fractions,
        per_level_fraction_uniform: uniform,
        eta_levels,
        eta_level_threshold: eta_threshold,
        cyclic_levels,
        cyclic_level_threshold: cyclic_threshold,
        max_drift,
        drift_limit,
    })
}

/// The per-stage speed quantities and the exact algebra connecting them.
#[derive(Debug, Clone)]
pub struct StageSpeed {
    pub n: u32,
    /// 3q/q' + 40·d·δ_{n+1}, the per-step tower speed.
    pub eta_speed: Rational,
    /// m·(3q/q' + 40·d·δ_{n+1}); equals 3/(2q) + 20d/((n+1)q²) exactly.
    pub eta_total: Rational,
    pub eta_total_closed_form: Rational,
    /// q'·20·d·δ_{n+1} = 20d/(n+1), the cyclic tower's total.
    pub cyclic_total: Rational,
    pub cyclic_total_closed_form: Rational,
}

impl StageSpeed {
    pub fn identities_hold(&self) -> bool {
        self.eta_total == self.eta_total_closed_form
            && self.cyclic_total == self.cyclic_total_closed_form
    }
}

pub fn stage_speed(params: &StageParams) -> StageSpeed {
    let d = BigInt::from(params.d);
    let n1 = BigInt::from(params.n + 1);
    let delta_next = ratio(BigInt::one(), &n1 * &params.q_next);
    let three_q = ratio(BigInt::from(3u32) * &params.q, params.q_next.clone());
    let forty_d = ratio(BigInt::from(40u32) * &d, BigInt::one());
    let eta_speed = &three_q + &forty_d * &delta_next;
    let m = ratio(params.m.clone(), BigInt::one());
    let eta_total = &m * &eta_speed;
    let q2 = &params.q * &params.q;
    let eta_total_closed_form = ratio(BigInt::from(3u32), BigInt::from(2) * &params.q)
        + ratio(BigInt::from(20u32) * &d, &n1 * q2);
    let cyclic_total =
        ratio(params.q_next.clone(), BigInt::one()) * ratio(BigInt::from(20u32) * &d, BigInt::one())
            * &delta_next;
    let cyclic_total_closed_form = ratio(BigInt::from(20u32) * &d, n1);
    StageSpeed {
        n: params.n,
        eta_speed,
        eta_total,
        eta_total_closed_form,
        cyclic_total,
        cyclic_total_closed_form,
    }
}

/// Speed bounds across a whole schedule; they must fall monotonically.
pub fn speed_schedule(stages: &[StageParams]) -> Vec<StageSpeed> {
    stages.iter().map(stage_speed).collect()
}

pub fn speeds_decrease(speeds: &[StageSpeed]) -> bool {
    speeds
        .windows(2)
        .all(|w| w[1].eta_total < w[0].eta_total && w[1].cyclic_total < w[0].cyclic_total)
}
