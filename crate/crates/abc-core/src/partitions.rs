//! The partition families the construction keeps permuting.
//!
//! All atoms are finite unions of half-open product boxes with rational
//! corners:
//!
//! * 𝒯_q       — x₁ split into q sectors, everything else full;
//! * 𝒢_{l,q}   — x₁ into lq pieces, x₂..x_d into l pieces each;
//! * 𝒢_{j,l,q} — x₁ into l^{d+1−j}q pieces, x₂..x_j into l pieces, rest full
//!               (𝒢_{d,l,q} = 𝒢_{l,q} and 𝒢_{1,l,q} = 𝒯_{l^d q});
//! * ℛ_{a,k,q} — atom j is φ^{j/q} of the k boxes Δ_{a(i)k+i, kq}; the k
//!               boxes are kept as given, never coalesced;
//! * 𝒮_{kq,l}  — x₁ into kq pieces and x₂ into l pieces on 𝕋².
//!
//! Translations φ^α act on a family only when α is a multiple of the family's
//! x₁ cell width; anything else is an incompatibility error.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{AbcError, Result};
use crate::rational::{grid_index, mod1, Rational};

/// Half-open product box Π [lo_i, hi_i) ⊆ 𝕋^d with 0 ≤ lo < hi ≤ 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TorusBox {
    pub corners: Vec<(Rational, Rational)>,
}

impl TorusBox {
    pub fn full_coordinate() -> (Rational, Rational) {
        (Rational::zero(), Rational::one())
    }

    pub fn measure(&self) -> Rational {
        self.corners
            .iter()
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, point: &[Rational]) -> bool {
        self.corners
            .iter()
            .zip(point)
            .all(|((lo, hi), x)| {
                let x = mod1(x);
                *lo <= x && x < *hi
            })
    }

    pub fn contained_in(&self, other: &TorusBox) -> bool {
        self.corners
            .iter()
            .zip(&other.corners)
            .all(|((lo, hi), (olo, ohi))| olo <= lo && hi <= ohi)
    }

    /// Translate x₁ by α (mod 1). Only valid when the result does not wrap
    /// through 1, which holds whenever α and the box align to a common grid.
    fn translate_x1(&self, alpha: &Rational) -> Result<TorusBox> {
        let mut corners = self.corners.clone();
        let width = &corners[0].1 - &corners[0].0;
        let lo = mod1(&(&corners[0].0 + alpha));
        let hi = &lo + &width;
        if hi > Rational::one() {
            return Err(AbcError::GridIncompatible(format!(
                "translated box [{lo}, {hi}) wraps through 1"
            )));
        }
        corners[0] = (lo, hi);
        Ok(TorusBox { corners })
    }
}

/// One atom: a disjoint union of boxes (most families use a single box).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub boxes: Vec<TorusBox>,
}

impl Atom {
    pub fn measure(&self) -> Rational {
        self.boxes.iter().map(TorusBox::measure).sum()
    }

    pub fn contains(&self, point: &[Rational]) -> bool {
        self.boxes.iter().any(|b| b.contains(point))
    }

    fn sorted_boxes(&self) -> Vec<TorusBox> {
        let mut b = self.boxes.clone();
        b.sort();
        b
    }

    /// Equal as point sets, assuming both sides keep boxes disjoint and
    /// grid-aligned (true for every family here).
    pub fn same_set(&self, other: &Atom) -> bool {
        self.sorted_boxes() == other.sorted_boxes()
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub name: String,
    pub d: u32,
    /// Width of the x₁ cells every box aligns to (1/x1_den).
    pub x1_den: u64,
    pub atoms: Vec<Atom>,
}

fn unit_interval(i: u64, den: u64) -> (Rational, Rational) {
    (
        Rational::new(BigInt::from(i), BigInt::from(den)),
        Rational::new(BigInt::from(i + 1), BigInt::from(den)),
    )
}

/// 𝒯_q on 𝕋^d.
pub fn t_partition(q: u64, d: u32) -> Result<Partition> {
    if q == 0 || d < 1 {
        return Err(AbcError::Parameter("t_partition needs q >= 1, d >= 1".into()));
    }
    let atoms = (0..q)
        .map(|i| {
            let mut corners = vec![unit_interval(i, q)];
            corners.extend((1..d).map(|_| TorusBox::full_coordinate()));
            Atom {
                boxes: vec![TorusBox { corners }],
            }
        })
        .collect();
    Ok(Partition {
        name: format!("T_{q}"),
        d,
        x1_den: q,
        atoms,
    })
}

/// 𝒢_{j,l,q} on 𝕋^d for 1 ≤ j ≤ d.
pub fn g_partition_level(j: u32, l: u64, q: u64, d: u32) -> Result<Partition> {
    if !(1..=d).contains(&j) {
        return Err(AbcError::Parameter(format!(
            "g_partition_level needs 1 <= j <= d, got j={j}, d={d}"
        )));
    }
    if l == 0 || q == 0 {
        return Err(AbcError::Parameter("g_partition_level needs l, q >= 1".into()));
    }
    let x1_den = l
        .checked_pow(d + 1 - j)
        .and_then(|v| v.checked_mul(q))
        .ok_or_else(|| AbcError::Parameter("g_partition_level x1 denominator overflow".into()))?;
    let side_coords = (j - 1) as usize;
    let mut atoms = Vec::new();
    let mut side = vec![0u64; side_coords];
    for i1 in 0..x1_den {
        loop {
            let mut corners = vec![unit_interval(i1, x1_den)];
            corners.extend(side.iter().map(|&s| unit_interval(s, l)));
            corners.extend((0..(d as usize - 1 - side_coords)).map(|_| TorusBox::full_coordinate()));
            atoms.push(Atom {
                boxes: vec![TorusBox { corners }],
            });
            // advance the side multi-index
            let mut axis = side_coords;
            loop {
                if axis == 0 {
                    side.iter_mut().for_each(|s| *s = 0);
                    break;
                }
                axis -= 1;
                side[axis] += 1;
                if side[axis] < l {
                    break;
                }
                side[axis] = 0;
            }
            if side.iter().all(|&s| s == 0) {
                break;
            }
        }
    }
    Ok(Partition {
        name: format!("G_{j},{l},{q}"),
        d,
        x1_den,
        atoms,
    })
}

/// 𝒢_{l,q} = 𝒢_{d,l,q}.
pub fn g_partition(l: u64, q: u64, d: u32) -> Result<Partition> {
    let mut p = g_partition_level(d, l, q, d)?;
    p.name = format!("G_{l},{q}");
    Ok(p)
}

/// ℛ_{a,k,q} on 𝕋^d; `a` maps {0..k−1} → {0..q−1} (zero function when empty
/// is spelled by the caller as `&vec![0; k]`).
pub fn r_partition(a: &[u64], q: u64, d: u32) -> Result<Partition> {
    let k = a.len() as u64;
    if k == 0 || q == 0 {
        return Err(AbcError::Parameter("r_partition needs k, q >= 1".into()));
    }
    if a.iter().any(|&v| v >= q) {
        return Err(AbcError::Parameter(format!(
            "r_partition a-values must lie in [0, q={q})"
        )));
    }
    let kq = k * q;
    let atoms = (0..q)
        .map(|j| {
            let boxes = (0..k)
                .map(|i| {
                    let cell = (a[i as usize] * k + i + j * k) % kq;
                    let mut corners = vec![unit_interval(cell, kq)];
                    corners.extend((1..d).map(|_| TorusBox::full_coordinate()));
                    TorusBox { corners }
                })
                .collect();
            Atom { boxes }
        })
        .collect();
    Ok(Partition {
        name: format!("R_a,{k},{q}"),
        d,
        x1_den: kq,
        atoms,
    })
}

/// 𝒮_{kq,l} on 𝕋^d (d ≥ 2): x₁ into kq pieces, x₂ into l pieces.
pub fn s_partition(kq: u64, l: u64, d: u32) -> Result<Partition> {
    if kq == 0 || l == 0 || d < 2 {
        return Err(AbcError::Parameter("s_partition needs kq, l >= 1 and d >= 2".into()));
    }
    let mut atoms = Vec::with_capacity((kq * l) as usize);
    for i in 0..kq {
        for j in 0..l {
            let mut corners = vec![unit_interval(i, kq), unit_interval(j, l)];
            corners.extend((2..d).map(|_| TorusBox::full_coordinate()));
            atoms.push(Atom {
                boxes: vec![TorusBox { corners }],
            });
        }
    }
    Ok(Partition {
        name: format!("S_{kq},{l}"),
        d,
        x1_den: kq,
        atoms,
    })
}

impl Partition {
    pub fn total_measure(&self) -> Rational {
        self.atoms.iter().map(Atom::measure).sum()
    }

    /// Index of the atom containing `point`, if any (interiors tile 𝕋^d, so
    /// this only fails for malformed partitions).
    pub fn locate(&self, point: &[Rational]) -> Option<usize> {
        self.atoms.iter().position(|a| a.contains(point))
    }

    /// The permutation of atom indices induced by φ^α, or an error when the
    /// translation is incompatible with the family's x₁ grid.
    pub fn phi_action(&self, alpha: &Rational) -> Result<Vec<usize>> {
        if grid_index(alpha, self.x1_den).is_none() {
            return Err(AbcError::GridIncompatible(format!(
                "translation by {alpha} does not permute {} (x1 grid 1/{})",
                self.name, self.x1_den
            )));
        }
        let mut perm = Vec::with_capacity(self.atoms.len());
        let mut hit = vec![false; self.atoms.len()];
        for atom in &self.atoms {
            let translated = Atom {
                boxes: atom
                    .boxes
                    .iter()
                    .map(|b| b.translate_x1(alpha))
                    .collect::<Result<_>>()?,
            };
            let lo_corner: Vec<Rational> = translated.boxes[0]
                .corners
                .iter()
                .map(|(lo, _)| lo.clone())
                .collect();
            let target = self.locate(&lo_corner).ok_or_else(|| {
                AbcError::GridIncompatible(format!(
                    "translated atom escapes the family {}",
                    self.name
                ))
            })?;
            if !translated.same_set(&self.atoms[target]) {
                return Err(AbcError::GridIncompatible(format!(
                    "φ^{alpha} shears atoms of {} instead of permuting them",
                    self.name
                )));
            }
            if hit[target] {
                return Err(AbcError::GridIncompatible(
                    "translation image is not a bijection of atoms".into(),
                ));
            }
            hit[target] = true;
            perm.push(target);
        }
        Ok(perm)
    }

    /// True when every atom of `self` sits inside a single atom of `coarser`
    /// (boxwise; sufficient for the product-box families here).
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.atoms.iter().all(|atom| {
            let corner: Vec<Rational> = atom.boxes[0]
                .corners
                .iter()
                .map(|(lo, _)| lo.clone())
                .collect();
            match coarser.locate(&corner) {
                None => false,
                Some(t) => atom.boxes.iter().all(|b| {
                    coarser.atoms[t]
                        .boxes
                        .iter()
                        .any(|cb| b.contained_in(cb))
                }),
            }
        })
    }

    /// Atom-set equality between two representations of the same partition.
    pub fn same_atoms(&self, other: &Partition) -> bool {
        if self.atoms.len() != other.atoms.len() {
            return false;
        }
        let mut mine: Vec<Vec<TorusBox>> = self.atoms.iter().map(Atom::sorted_boxes).collect();
        let mut theirs: Vec<Vec<TorusBox>> = other.atoms.iter().map(Atom::sorted_boxes).collect();
        mine.sort();
        theirs.sort();
        mine == theirs
    }
}

/// a-function and box count of the ℛ-partition that h_{l,p,q,r} maps 𝒯_q
/// onto: a(i) = (⌊2qi/l⌋ · sh(⌊2qi/l⌋)) mod q with sh(e) = r for e < q and
/// r + p for e ≥ q. Requires 2q | l.
pub fn h_image_a_function(l: u64, p: u64, q: u64, r: u64) -> Result<Vec<u64>> {
    if q == 0 || l == 0 || l % (2 * q) != 0 {
        return Err(AbcError::Parameter(format!(
            "h image a-function needs 2q | l, got l={l}, q={q}"
        )));
    }
    Ok((0..l)
        .map(|i| {
            let e = 2 * q * i / l;
            let sh = if e < q { r } else { r + p };
            (e * sh) % q
        })
        .collect())
}

/// Exact measure of the overlap of two partitions' atoms i and j, assuming
/// single-box atoms (𝒯/𝒢/𝒮 families).
pub fn box_overlap(a: &TorusBox, b: &TorusBox) -> Rational {
    a.corners
        .iter()
        .zip(&b.corners)
        .map(|((alo, ahi), (blo, bhi))| {
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if hi > lo {
                hi.clone() - lo.clone()
            } else {
                Rational::zero()
            }
        })
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    #[test]
    fn atom_counts_and_total_measure() {
        let d = 3;
        for p in [
            t_partition(5, d).unwrap(),
            g_partition(2, 3, d).unwrap(),
            g_partition_level(2, 2, 3, d).unwrap(),
            r_partition(&[0, 0], 3, d).unwrap(),
            s_partition(6, 4, d).unwrap(),
        ] {
            assert_eq!(p.total_measure(), rat_int(1), "family {}", p.name);
        }
        assert_eq!(t_partition(5, d).unwrap().atoms.len(), 5);
        // 𝒢_{j,l,q} always has l^d q atoms
        for j in 1..=d {
            assert_eq!(
                g_partition_level(j, 2, 3, d).unwrap().atoms.len(),
                2u64.pow(d) as usize * 3
            );
        }
        assert_eq!(s_partition(6, 4, d).unwrap().atoms.len(), 24);
    }

    #[test]
    fn g_level_boundary_cases_match_t() {
        // 𝒢_{1,l,q} = 𝒯_{l^d q} and 𝒢_{d,l,q} = 𝒢_{l,q}
        let (l, q, d) = (2, 3, 3);
        let g1 = g_partition_level(1, l, q, d).unwrap();
        let t = t_partition(l.pow(d) * q, d).unwrap();
        assert!(g1.same_atoms(&t));
        let gd = g_partition_level(d, l, q, d).unwrap();
        assert!(gd.same_atoms(&g_partition(l, q, d).unwrap()));
        assert!(g_partition_level(0, l, q, d).is_err());
        assert!(g_partition_level(d + 1, l, q, d).is_err());
    }

    #[test]
    fn phi_action_cycles_t3_and_rejects_half() {
        let t3 = t_partition(3, 2).unwrap();
        assert_eq!(t3.phi_action(&rat(1, 3)).unwrap(), vec![1, 2, 0]);
        assert_eq!(t3.phi_action(&rat(2, 3)).unwrap(), vec![2, 0, 1]);
        assert!(t3.phi_action(&rat(1, 2)).is_err());
    }

    #[test]
    fn phi_action_on_r_partition() {
        // a = (1, 0), k = 2, q = 3: R_j = φ^{j/3}(Δ_{2,6} ∪ Δ_{1,6})
        let r = r_partition(&[1, 0], 3, 2).unwrap();
        assert_eq!(r.atoms[0].boxes.len(), 2);
        assert_eq!(r.atoms[0].boxes[0].corners[0], (rat(2, 6), rat(3, 6)));
        assert_eq!(r.atoms[0].boxes[1].corners[0], (rat(1, 6), rat(2, 6)));
        assert_eq!(r.phi_action(&rat(1, 3)).unwrap(), vec![1, 2, 0]);
        // boxes stay uncoalesced even for the zero function
        let r0 = r_partition(&[0, 0], 3, 2).unwrap();
        assert_eq!(r0.atoms[0].boxes.len(), 2);
        // 1/6 is on the Δ-grid but shears the atoms: {0,1} → {1,2} is not in ℛ
        assert!(r0.phi_action(&rat(1, 6)).is_err());
    }

    #[test]
    fn refinement_chain() {
        let (l, q, d) = (2u64, 3u64, 2u32);
        let t_q = t_partition(q, d).unwrap();
        let t_lq = t_partition(l * q, d).unwrap();
        let g = g_partition(l, q, d).unwrap();
        assert!(t_lq.refines(&t_q));
        assert!(g.refines(&t_lq));
        assert!(g.refines(&t_q));
        assert!(!t_q.refines(&t_lq));
        // each ℛ atom is a union of k Δ-cells, so 𝒯_{kq} refines ℛ
        let r = r_partition(&[2, 0, 1], 3, d).unwrap();
        let t_kq = t_partition(9, d).unwrap();
        assert!(t_kq.refines(&r));
        assert!(r.atoms.iter().all(|a| a.boxes.len() == 3));
    }

    #[test]
    fn locate_oracles() {
        let g = g_partition(2, 1, 2).unwrap();
        // atoms: x₁ ∈ {[0,1/2), [1/2,1)} × x₂ ∈ {[0,1/2), [1/2,1)}
        let idx = g.locate(&[rat(3, 4), rat(1, 4)]).unwrap();
        let atom = &g.atoms[idx];
        assert_eq!(atom.boxes[0].corners[0], (rat(1, 2), rat_int(1)));
        assert_eq!(atom.boxes[0].corners[1], (rat(0, 1), rat(1, 2)));
    }

    #[test]
    fn h_image_a_function_oracle() {
        // l = 2q: a(i) = (i · sh(i)) mod q directly
        let a = h_image_a_function(6, 1, 3, 1).unwrap();
        // e = i for i in 0..6; sh = 1 for e < 3 and 2 for e >= 3
        assert_eq!(a, vec![0, 1, 2, 0, 2, 1]);
        assert!(h_image_a_function(6, 1, 5, 1).is_err());
    }
}
