//! Finite grids on 𝕋^d and exact cell permutations.
//!
//! A [`GridSpec`] splits coordinate i into `dens[i]` half-open intervals, so a
//! cell is a product box and the whole torus carries `Π dens[i]` cells indexed
//! in mixed radix (x₁ slowest).  Maps whose action sends grid cells to grid
//! cells rigidly become [`CellPermutation`]s; sets of cells are sorted index
//! vectors with exact rational measures.  Cell indices are `u32` and grids are
//! guarded by an explicit cell budget, so "too fine" is an error, never an
//! out-of-memory surprise.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::collections::BTreeMap;

use crate::error::{AbcError, Result};
use crate::rational::{grid_index, mod1, rem_euclid, Rational};

pub const DEFAULT_CELL_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    /// dens[0] is the x₁ subdivision; dens[i] subdivides x_{i+1}.
    pub dens: Vec<u64>,
}

impl GridSpec {
    pub fn new(dens: Vec<u64>, budget: u128) -> Result<GridSpec> {
        if dens.len() < 2 {
            return Err(AbcError::GridIncompatible(
                "grids need d >= 2 coordinates".into(),
            ));
        }
        if dens.iter().any(|&d| d == 0) {
            return Err(AbcError::GridIncompatible("zero subdivision".into()));
        }
        let cells: u128 = dens.iter().map(|&d| d as u128).product();
        if cells > budget {
            return Err(AbcError::Budget { cells, budget });
        }
        if cells > u32::MAX as u128 {
            return Err(AbcError::Budget {
                cells,
                budget: u32::MAX as u128,
            });
        }
        Ok(GridSpec { dens })
    }

    pub fn d(&self) -> usize {
        self.dens.len()
    }

    pub fn cell_count(&self) -> u32 {
        self.dens.iter().map(|&d| d as u128).product::<u128>() as u32
    }

    pub fn index(&self, coords: &[u64]) -> u32 {
        debug_assert_eq!(coords.len(), self.dens.len());
        let mut idx: u64 = 0;
        for (c, den) in coords.iter().zip(&self.dens) {
            debug_assert!(c < den);
            idx = idx * den + c;
        }
        idx as u32
    }

    pub fn decode(&self, cell: u32) -> Vec<u64> {
        let mut coords = vec![0u64; self.dens.len()];
        let mut rest = cell as u64;
        for i in (0..self.dens.len()).rev() {
            coords[i] = rest % self.dens[i];
            rest /= self.dens[i];
        }
        coords
    }

    /// Left endpoint of the cell along coordinate `axis`.
    pub fn cell_lo(&self, cell: u32, axis: usize) -> Rational {
        let c = self.decode(cell)[axis];
        Rational::new(BigInt::from(c), BigInt::from(self.dens[axis]))
    }

    /// Cell containing a point with coordinates in [0,1).
    pub fn locate(&self, point: &[Rational]) -> u32 {
        let coords: Vec<u64> = point
            .iter()
            .zip(&self.dens)
            .map(|(x, &den)| {
                let x = mod1(x);
                let scaled = x * Rational::from_integer(BigInt::from(den));
                scaled.floor().to_integer().to_u64().unwrap()
            })
            .collect();
        self.index(&coords)
    }

    /// All cells of the box Π [lo_i, hi_i); endpoints must lie on the grid and
    /// satisfy 0 ≤ lo < hi ≤ 1 coordinatewise.
    pub fn box_cells(&self, corners: &[(Rational, Rational)]) -> Result<CellSet> {
        if corners.len() != self.d() {
            return Err(AbcError::GridIncompatible(format!(
                "box has {} coordinates on a d={} grid",
                corners.len(),
                self.d()
            )));
        }
        let mut ranges: Vec<(u64, u64)> = Vec::with_capacity(self.d());
        for (axis, (lo, hi)) in corners.iter().enumerate() {
            let den = self.dens[axis];
            let lo_idx = grid_index(lo, den).ok_or_else(|| {
                AbcError::GridIncompatible(format!("box corner {lo} off the 1/{den} grid"))
            })?;
            let hi_idx = grid_index(hi, den).ok_or_else(|| {
                AbcError::GridIncompatible(format!("box corner {hi} off the 1/{den} grid"))
            })?;
            let (lo_idx, hi_idx) = (
                lo_idx.to_i64().ok_or_else(|| {
                    AbcError::GridIncompatible("box corner out of range".into())
                })?,
                hi_idx.to_i64().ok_or_else(|| {
                    AbcError::GridIncompatible("box corner out of range".into())
                })?,
            );
            if lo_idx < 0 || hi_idx <= lo_idx || hi_idx > den as i64 {
                return Err(AbcError::GridIncompatible(format!(
                    "box range [{lo_idx}, {hi_idx}) invalid on a 1/{den} grid"
                )));
            }
            ranges.push((lo_idx as u64, hi_idx as u64));
        }
        let mut cells = Vec::new();
        let mut coords: Vec<u64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            cells.push(self.index(&coords));
            for axis in (0..coords.len()).rev() {
                coords[axis] += 1;
                if coords[axis] < ranges[axis].1 {
                    continue 'outer;
                }
                coords[axis] = ranges[axis].0;
            }
            break;
        }
        Ok(CellSet::from_unsorted(cells))
    }

    /// The permutation x ↦ x + t·e_{axis+1} when t aligns with the grid.
    pub fn coordinate_translation(&self, axis: usize, t: &Rational) -> Result<CellPermutation> {
        let den = self.dens[axis];
        let shift = grid_index(t, den).ok_or_else(|| {
            AbcError::GridIncompatible(format!(
                "translation by {t} does not permute the 1/{den} cells of coordinate {}",
                axis + 1
            ))
        })?;
        let shift = rem_euclid(&shift, &BigInt::from(den)).to_u64().unwrap();
        let n = self.cell_count();
        let mut map = vec![0u32; n as usize];
        for cell in 0..n {
            let mut coords = self.decode(cell);
            coords[axis] = (coords[axis] + shift) % den;
            map[cell as usize] = self.index(&coords);
        }
        Ok(CellPermutation {
            grid: self.clone(),
            map,
        })
    }

    /// φ^t as a cell permutation: translation of x₁.
    pub fn phi(&self, t: &Rational) -> Result<CellPermutation> {
        self.coordinate_translation(0, t)
    }
}

/// A bijection of grid cells; `map[c]` is the image cell of c.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPermutation {
    pub grid: GridSpec,
    pub map: Vec<u32>,
}

impl CellPermutation {
    pub fn identity(grid: GridSpec) -> CellPermutation {
        let n = grid.cell_count();
        CellPermutation {
            grid,
            map: (0..n).collect(),
        }
    }

    /// Build from an image function on cells and verify bijectivity.
    pub fn from_fn(grid: GridSpec, f: impl Fn(u32) -> u32) -> Result<CellPermutation> {
        let n = grid.cell_count();
        let mut map = vec![0u32; n as usize];
        let mut seen = vec![false; n as usize];
        for c in 0..n {
            let img = f(c);
            if img >= n {
                return Err(AbcError::GridIncompatible(format!(
                    "cell {c} maps outside the grid (to {img})"
                )));
            }
            if seen[img as usize] {
                return Err(AbcError::GridIncompatible(format!(
                    "cell image {img} hit twice; not a bijection"
                )));
            }
            seen[img as usize] = true;
            map[c as usize] = img;
        }
        Ok(CellPermutation { grid, map })
    }

    pub fn apply_cell(&self, cell: u32) -> u32 {
        self.map[cell as usize]
    }

    /// self followed by `then`: (then ∘ self).
    pub fn then(&self, then: &CellPermutation) -> CellPermutation {
        debug_assert_eq!(self.grid, then.grid);
        let map = self.map.iter().map(|&c| then.map[c as usize]).collect();
        CellPermutation {
            grid: self.grid.clone(),
            map,
        }
    }

    pub fn inverse(&self) -> CellPermutation {
        let mut map = vec![0u32; self.map.len()];
        for (src, &dst) in self.map.iter().enumerate() {
            map[dst as usize] = src as u32;
        }
        CellPermutation {
            grid: self.grid.clone(),
            map,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &c)| i as u32 == c)
    }

    pub fn commutes_with(&self, other: &CellPermutation) -> bool {
        (0..self.map.len()).all(|c| {
            other.map[self.map[c] as usize] == self.map[other.map[c] as usize]
        })
    }

    pub fn apply_to_set(&self, set: &CellSet) -> CellSet {
        CellSet::from_unsorted(set.cells.iter().map(|&c| self.map[c as usize]).collect())
    }

    /// Cycle-length histogram (length → number of cycles of that length).
    pub fn cycle_lengths(&self) -> BTreeMap<u64, u64> {
        let n = self.map.len();
        let mut visited = vec![false; n];
        let mut hist = BTreeMap::new();
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut len = 0u64;
            let mut c = start;
            while !visited[c] {
                visited[c] = true;
                c = self.map[c] as usize;
                len += 1;
            }
            *hist.entry(len).or_insert(0) += 1;
        }
        hist
    }

    /// Length of the cycle through `cell`.
    pub fn cycle_length_of(&self, cell: u32) -> u64 {
        let mut len = 1u64;
        let mut c = self.map[cell as usize];
        while c != cell {
            c = self.map[c as usize];
            len += 1;
        }
        len
    }
}

/// A finite union of grid cells (sorted, deduplicated).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    pub cells: Vec<u32>,
}

impl CellSet {
    pub fn from_unsorted(mut cells: Vec<u32>) -> CellSet {
        cells.sort_unstable();
        cells.dedup();
        CellSet { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn measure(&self, grid: &GridSpec) -> Rational {
        Rational::new(
            BigInt::from(self.cells.len() as u64),
            BigInt::from(grid.cell_count() as u64),
        )
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut cells = Vec::with_capacity(self.cells.len() + other.cells.len());
        cells.extend_from_slice(&self.cells);
        cells.extend_from_slice(&other.cells);
        CellSet::from_unsorted(cells)
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.cells.len() && j < other.cells.len() {
            match self.cells[i].cmp(&other.cells[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.cells[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        CellSet { cells: out }
    }

    pub fn symmetric_difference(&self, other: &CellSet) -> CellSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.cells.len() || j < other.cells.len() {
            match (self.cells.get(i), other.cells.get(j)) {
                (Some(&a), Some(&b)) if a == b => {
                    i += 1;
                    j += 1;
                }
                (Some(&a), Some(&b)) if a < b => {
                    out.push(a);
                    i += 1;
                }
                (Some(_), Some(&b)) => {
                    out.push(b);
                    j += 1;
                }
                (Some(&a), None) => {
                    out.push(a);
                    i += 1;
                }
                (None, Some(&b)) => {
                    out.push(b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        CellSet { cells: out }
    }

    /// |self \ other| without materializing the difference.
    pub fn difference_len(&self, other: &CellSet) -> usize {
        self.cells.len() - self.intersection(other).cells.len()
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        self.intersection(other).cells.is_empty()
    }

    pub fn contains(&self, cell: u32) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.cells.iter().all(|&c| other.contains(c))
    }
}
