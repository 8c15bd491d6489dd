//! Exact piecewise-constant functions on the circle.
//!
//! A `StepFunction` holds one rational value per piece of the uniform grid
//! {[j/den, (j+1)/den)}. These are the raw slide amounts before any
//! smoothing; the three ψ families below are the building blocks of the
//! 𝔤 coordinate shuffles.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{AbcError, Result};
use crate::rational::{mod1, rat_int, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFunction {
    pub den: u64,
    pub values: Vec<Rational>,
}

impl StepFunction {
    pub fn new(den: u64, values: Vec<Rational>) -> Result<Self> {
        if den == 0 || values.len() != den as usize {
            return Err(AbcError::Parameter(format!(
                "step function needs exactly den={den} values, got {}",
                values.len()
            )));
        }
        Ok(StepFunction { den, values })
    }

    pub fn zero() -> Self {
        StepFunction {
            den: 1,
            values: vec![Rational::zero()],
        }
    }

    pub fn from_fn(den: u64, f: impl Fn(u64) -> Rational) -> Result<Self> {
        Self::new(den, (0..den).map(f).collect())
    }

    /// Piece index of x on this function's grid.
    pub fn piece_of(&self, x: &Rational) -> usize {
        let x = mod1(x);
        let scaled = x * BigInt::from(self.den);
        // mod1 keeps x in [0,1) so the floor fits in usize
        scaled.to_integer().to_usize().expect("piece index fits")
    }

    pub fn value_at(&self, x: &Rational) -> Rational {
        self.values[self.piece_of(x)].clone()
    }

    pub fn negate(&self) -> Self {
        StepFunction {
            den: self.den,
            values: self.values.iter().map(|v| -v.clone()).collect(),
        }
    }

    pub fn mean(&self) -> Rational {
        let sum: Rational = self.values.iter().sum();
        sum / rat_int(self.den as i64)
    }

    pub fn min_value(&self) -> Rational {
        self.values.iter().min().unwrap().clone()
    }

    pub fn max_value(&self) -> Rational {
        self.values.iter().max().unwrap().clone()
    }

    pub fn sup_abs(&self) -> Rational {
        self.values
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap()
    }

    /// Cyclic jump list: (piece index j, values[j] − values[j−1]) for every
    /// nonzero jump at the left endpoint of piece j.
    pub fn jumps(&self) -> Vec<(u64, Rational)> {
        let n = self.den as usize;
        (0..n)
            .filter_map(|j| {
                let prev = &self.values[(j + n - 1) % n];
                let d = &self.values[j] - prev;
                if d.is_zero() {
                    None
                } else {
                    Some((j as u64, d))
                }
            })
            .collect()
    }

    /// Largest N | den with f(x + 1/N) = f(x), together with the reduced
    /// function g of denominator den/N satisfying f(x) = g(frac(N·x)).
    pub fn structural_period(&self) -> (u64, StepFunction) {
        let den = self.den;
        let mut best = 1u64;
        for s in 1..=den {
            if den % s != 0 {
                continue;
            }
            let shift = s as usize;
            let n = den as usize;
            let ok = (0..n).all(|j| self.values[j] == self.values[(j + shift) % n]);
            if ok {
                best = den / s;
                break;
            }
        }
        let reduced_den = den / best;
        let reduced = StepFunction {
            den: reduced_den,
            values: self.values[..reduced_den as usize].to_vec(),
        };
        (best, reduced)
    }

    /// Repeat the value pattern n times: result(x) = self(frac(n·x)).
    pub fn tile(&self, n: u64) -> Result<Self> {
        let den = self
            .den
            .checked_mul(n)
            .ok_or_else(|| AbcError::Parameter("tile overflows denominator".into()))?;
        let mut values = Vec::with_capacity(den as usize);
        for _ in 0..n {
            values.extend_from_slice(&self.values);
        }
        Self::new(den, values)
    }

    /// Refine to a larger denominator (must be a multiple of den).
    pub fn refine_to(&self, den: u64) -> Result<Self> {
        if den == 0 || den % self.den != 0 {
            return Err(AbcError::GridIncompatible(format!(
                "cannot refine step function of denominator {} to {}",
                self.den, den
            )));
        }
        let rep = (den / self.den) as usize;
        let mut values = Vec::with_capacity(den as usize);
        for v in &self.values {
            for _ in 0..rep {
                values.push(v.clone());
            }
        }
        Self::new(den, values)
    }

    /// Pointwise equality as functions on 𝕋 (denominators may differ).
    pub fn same_function(&self, other: &StepFunction) -> bool {
        let lcm = num_integer::lcm(self.den, other.den);
        match (self.refine_to(lcm), other.refine_to(lcm)) {
            (Ok(a), Ok(b)) => a.values == b.values,
            _ => false,
        }
    }
}

fn l_pow(l: u64, e: u32) -> Result<u64> {
    l.checked_pow(e)
        .ok_or_else(|| AbcError::Parameter(format!("l^{e} overflows for l={l}")))
}

fn check_coord(i: u32, d: u32) -> Result<()> {
    if !(2..=d).contains(&i) {
        return Err(AbcError::Parameter(format!(
            "ψ builders need coordinate 2 <= i <= d, got i={i}, d={d}"
        )));
    }
    Ok(())
}

/// ψ^{(1)} for coordinate i: denominator l, piece j carries
/// (l−j)/(l^{d+2−i} q) for j ≥ 1 and 0 for j = 0.
pub fn psi1(d: u32, i: u32, l: u64, q: u64) -> Result<StepFunction> {
    check_coord(i, d)?;
    let scale = l_pow(l, d + 2 - i)?.checked_mul(q).ok_or_else(|| {
        AbcError::Parameter("ψ¹ denominator overflow".into())
    })?;
    StepFunction::from_fn(l, |j| {
        if j == 0 {
            Rational::zero()
        } else {
            Rational::new(BigInt::from(l - j), BigInt::from(scale))
        }
    })
}

/// ψ^{(2)} for coordinate i: denominator l^{d+2−i} q, piece j carries
/// (j mod l)/l.
pub fn psi2(d: u32, i: u32, l: u64, q: u64) -> Result<StepFunction> {
    check_coord(i, d)?;
    let den = l_pow(l, d + 2 - i)?.checked_mul(q).ok_or_else(|| {
        AbcError::Parameter("ψ² denominator overflow".into())
    })?;
    StepFunction::from_fn(den, |j| {
        Rational::new(BigInt::from(j % l), BigInt::from(l))
    })
}

/// ψ^{(2)} rebuilt on the common grid 2 l^d q² (for i ≥ 3): piece j carries
/// (⌊j / (2 l^{i−2} q)⌋ mod l)/l. Pointwise identical to `psi2`.
pub fn psi2_on_common_grid(d: u32, i: u32, l: u64, q: u64) -> Result<StepFunction> {
    check_coord(i, d)?;
    if i < 3 {
        return Err(AbcError::Parameter(
            "common-grid ψ² is only stated for i >= 3".into(),
        ));
    }
    let den = 2u64
        .checked_mul(l_pow(l, d)?)
        .and_then(|v| v.checked_mul(q))
        .and_then(|v| v.checked_mul(q))
        .ok_or_else(|| AbcError::Parameter("common-grid ψ² denominator overflow".into()))?;
    let block = 2 * l_pow(l, i - 2)? * q;
    StepFunction::from_fn(den, |j| {
        Rational::new(BigInt::from((j / block) % l), BigInt::from(l))
    })
}

/// ψ^{(3)} for coordinate i: denominator l, piece j carries
/// j/(l^{d+2−i} q).
pub fn psi3(d: u32, i: u32, l: u64, q: u64) -> Result<StepFunction> {
    check_coord(i, d)?;
    let scale = l_pow(l, d + 2 - i)?.checked_mul(q).ok_or_else(|| {
        AbcError::Parameter("ψ³ denominator overflow".into())
    })?;
    StepFunction::from_fn(l, |j| Rational::new(BigInt::from(j), BigInt::from(scale)))
}
