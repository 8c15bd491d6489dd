//! Stage parameters and the exact recursion that drives the construction.
//!
//! One stage holds the rotation number α_n = p_n/q_n together with the choices
//! (k_n, l_n) made at that stage.  The next rotation number is
//!
//! ```text
//! p_{n+1} = k_n l_n q_n p_n + 1,      q_{n+1} = k_n l_n q_n²,
//! ```
//!
//! so α_{n+1} = α_n + 1/(k_n l_n q_n²).  Derived quantities: the half-width
//! m_n = q_{n+1}/(2 q_n²) = k_n l_n / 2, the sector return r_n = m_n p_n mod
//! q_n, the inset δ_n = 1/(n q_n) and the closeness target ε_n.  Everything
//! here is exact; floats never enter.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{AbcError, Result};
use crate::rational::{mod1, rat_int, rem_euclid, Rational};

/// Which ε_n formula a run uses. All three appear in the construction's
/// freedom of choice; the default is the strictest (smallest) one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonVariant {
    /// δ_n / (4 l_n^d q_n²)
    Coarse4,
    /// δ_n / (8 d l_n^d q_n²)
    EightD,
    /// δ_n / (12 d l_n^d q_n²)  (default)
    Strict12d,
}

impl Default for EpsilonVariant {
    fn default() -> Self {
        EpsilonVariant::Strict12d
    }
}

impl EpsilonVariant {
    pub fn denominator_factor(self, d: u32) -> BigInt {
        match self {
            EpsilonVariant::Coarse4 => BigInt::from(4u32),
            EpsilonVariant::EightD => BigInt::from(8 * d),
            EpsilonVariant::Strict12d => BigInt::from(12 * d),
        }
    }
}

/// All data attached to one stage of the construction.
#[derive(Debug, Clone)]
pub struct StageParams {
    pub n: u32,
    pub d: u32,
    pub rho: f64,
    pub p: BigInt,
    pub q: BigInt,
    pub k: BigInt,
    pub l: BigInt,
    /// m_n = k_n l_n / 2; the height of the first tower.
    pub m: BigInt,
    /// r_n = m_n p_n mod q_n.
    pub r: BigInt,
    /// δ_n = 1/(n q_n).
    pub delta: Rational,
    /// ε_n per the selected variant.
    pub epsilon: Rational,
    pub epsilon_variant: EpsilonVariant,
    /// p_{n+1}, q_{n+1} from the recursion (not reduced; they are coprime).
    pub p_next: BigInt,
    pub q_next: BigInt,
    /// 2 q_n | l_n, required by the block combinatorics.
    pub sector_divisible: bool,
}

impl StageParams {
    /// Build a stage from raw values. Enforces only the structural
    /// requirements (positivity, gcd(p,q)=1, k·l even); the cross-stage
    /// divisibility conditions belong to [`ParamSchedule`].
    pub fn new(
        n: u32,
        d: u32,
        rho: f64,
        p: BigInt,
        q: BigInt,
        k: BigInt,
        l: BigInt,
        variant: EpsilonVariant,
    ) -> Result<StageParams> {
        if n == 0 {
            return Err(AbcError::Parameter("stage index n starts at 1".into()));
        }
        if d < 2 {
            return Err(AbcError::Parameter(format!("dimension d={d} < 2")));
        }
        if !(rho > 0.0) {
            return Err(AbcError::Parameter(format!("strip width rho={rho} must be > 0")));
        }
        if p.is_negative() || p.is_zero() {
            return Err(AbcError::Parameter(format!("p={p} must be >= 1")));
        }
        for (name, v) in [("q", &q), ("k", &k), ("l", &l)] {
            if v.is_negative() || v.is_zero() {
                return Err(AbcError::Parameter(format!("{name}={v} must be >= 1")));
            }
        }
        if p.gcd(&q) != BigInt::one() {
            return Err(AbcError::Parameter(format!("gcd(p,q) != 1 for p={p}, q={q}")));
        }
        let kl = &k * &l;
        if kl.is_odd() {
            return Err(AbcError::Parameter(format!(
                "k*l = {kl} must be even so that m = k l / 2 is an integer"
            )));
        }
        let m = &kl / BigInt::from(2u32);
        let r = rem_euclid(&(&m * &p), &q);
        let delta = Rational::new(BigInt::one(), BigInt::from(n) * &q);
        let l_pow_d = l.pow(d);
        let epsilon = &delta
            / Rational::from_integer(variant.denominator_factor(d) * &l_pow_d * &q * &q);
        let p_next = &kl * &q * &p + BigInt::one();
        let q_next = &kl * &q * &q;
        let sector_divisible = (&l % (BigInt::from(2u32) * &q)).is_zero();
        Ok(StageParams {
            n,
            d,
            rho,
            p,
            q,
            k,
            l,
            m,
            r,
            delta,
            epsilon,
            epsilon_variant: variant,
            p_next,
            q_next,
            sector_divisible,
        })
    }

    /// α_n = p_n/q_n, kept as the raw (possibly > 1) fraction.
    pub fn alpha(&self) -> Rational {
        Rational::new(self.p.clone(), self.q.clone())
    }

    /// α_{n+1} = p_{n+1}/q_{n+1}.
    pub fn alpha_next(&self) -> Rational {
        Rational::new(self.p_next.clone(), self.q_next.clone())
    }

    /// Rotation-number gap α_{n+1} − α_n = 1/(k_n l_n q_n²).
    pub fn gap(&self) -> Rational {
        Rational::new(BigInt::one(), &self.k * &self.l * &self.q * &self.q)
    }

    /// τ₁ = r/q + 1/(2q²), the within-sector translation of φ^{m α_{n+1}}.
    pub fn tau1(&self) -> Rational {
        Rational::new(self.r.clone(), self.q.clone())
            + Rational::new(BigInt::one(), BigInt::from(2u32) * &self.q * &self.q)
    }

    /// τ₂ = (r+p)/q + 1/(2q²), the translation of φ^{(m+1)α_{n+1} − 1/q_{n+1}}.
    pub fn tau2(&self) -> Rational {
        Rational::new(&self.r + &self.p, self.q.clone())
            + Rational::new(BigInt::one(), BigInt::from(2u32) * &self.q * &self.q)
    }

    pub fn l_pow_d(&self) -> BigInt {
        self.l.pow(self.d)
    }

    /// 2 l^d q², the x₁ denominator of the block grid at this stage.
    pub fn block_x1_denominator(&self) -> BigInt {
        BigInt::from(2u32) * self.l_pow_d() * &self.q * &self.q
    }
}

/// Outcome of the exact return-time identity checks for one stage.
#[derive(Debug, Clone)]
pub struct ReturnIdentityCheck {
    /// s = (m p − r)/q, which the first identity requires to be an integer.
    pub s: Rational,
    pub s_is_integer: bool,
    /// m α_{n+1} and its predicted value s + r/q + 1/(2q²).
    pub lhs1: Rational,
    pub rhs1: Rational,
    pub identity1: bool,
    /// (m+1) α_{n+1} mod 1 and its predicted value (r+p)/q + 1/(2q²) + 1/q_{n+1} mod 1.
    pub lhs2: Rational,
    pub rhs2: Rational,
    pub identity2: bool,
}

impl ReturnIdentityCheck {
    pub fn all_hold(&self) -> bool {
        self.s_is_integer && self.identity1 && self.identity2
    }
}

/// Exact verification of the two return identities
///
/// ```text
/// m α' = s + r/q + 1/(2q²)           with s ∈ ℤ,
/// (m+1) α' ≡ (r+p)/q + 1/(2q²) + 1/q'   (mod 1).
/// ```
pub fn check_return_identities(stage: &StageParams) -> ReturnIdentityCheck {
    let alpha_next = stage.alpha_next();
    let q = Rational::from_integer(stage.q.clone());
    let m = Rational::from_integer(stage.m.clone());

    let s = (Rational::from_integer(&stage.m * &stage.p)
        - Rational::from_integer(stage.r.clone()))
        / &q;
    let s_is_integer = s.is_integer();

    let lhs1 = &m * &alpha_next;
    let rhs1 = &s + stage.tau1();
    let identity1 = lhs1 == rhs1;

    let lhs2 = mod1(&((&m + Rational::one()) * &alpha_next));
    let rhs2 = mod1(
        &(stage.tau2() + Rational::new(BigInt::one(), stage.q_next.clone())),
    );
    let identity2 = lhs2 == rhs2;

    ReturnIdentityCheck {
        s,
        s_is_integer,
        lhs1,
        rhs1,
        identity1,
        lhs2,
        rhs2,
        identity2,
    }
}

/// The derivative-growth condition l_n > d · n² · ‖DH⁻¹_{n−1}‖₀.
/// `dh_norm_bound` is a sampled sup, so the comparison is float-valued.
pub fn validate_l_condition(l: &BigInt, d: u32, n: u32, dh_norm_bound: f64) -> bool {
    let rhs = d as f64 * (n as f64) * (n as f64) * dh_norm_bound;
    // l is exact; compare through f64 only on the right-hand side's scale.
    match l.to_string().parse::<f64>() {
        Ok(lf) => lf > rhs,
        Err(_) => true, // l too large for f64 certainly exceeds any finite bound
    }
}

/// A full chain of stages grown from a seed (p₁, q₁).
#[derive(Debug, Clone)]
pub struct ParamSchedule {
    pub d: u32,
    pub rho: f64,
    pub epsilon_variant: EpsilonVariant,
    pub seed_p: BigInt,
    pub seed_q: BigInt,
    pub stages: Vec<StageParams>,
    /// Sampled ‖DH⁻¹_{n−1}‖₀ used when validating eq-l at stage n, when known.
    pub l_bound_witness: Vec<Option<f64>>,
    /// Per-stage outcome of the cross-stage divisibility 2 l_{n−1} q_n | l_n
    /// (l₀ := 1). False entries are allowed only via `extend_unchecked_leven`.
    pub leven_ok: Vec<bool>,
}

impl ParamSchedule {
    pub fn new(
        p1: BigInt,
        q1: BigInt,
        d: u32,
        rho: f64,
        variant: EpsilonVariant,
    ) -> Result<ParamSchedule> {
        if p1.is_negative() || p1.is_zero() || q1.is_negative() || q1.is_zero() {
            return Err(AbcError::Config(format!("seed p={p1}, q={q1} must be >= 1")));
        }
        if p1.gcd(&q1) != BigInt::one() {
            return Err(AbcError::Config(format!("seed gcd(p,q) != 1: p={p1}, q={q1}")));
        }
        if d < 2 {
            return Err(AbcError::Config(format!("dimension d={d} < 2")));
        }
        if !(rho > 0.0) {
            return Err(AbcError::Config(format!("rho={rho} must be > 0")));
        }
        Ok(ParamSchedule {
            d,
            rho,
            epsilon_variant: variant,
            seed_p: p1,
            seed_q: q1,
            stages: Vec::new(),
            l_bound_witness: Vec::new(),
            leven_ok: Vec::new(),
        })
    }

    /// (p, q) the next stage will start from.
    pub fn pending_pq(&self) -> (BigInt, BigInt) {
        match self.stages.last() {
            Some(s) => (s.p_next.clone(), s.q_next.clone()),
            None => (self.seed_p.clone(), self.seed_q.clone()),
        }
    }

    fn l_prev(&self) -> BigInt {
        self.stages
            .last()
            .map(|s| s.l.clone())
            .unwrap_or_else(BigInt::one)
    }

    /// Append the next stage with choices (k, l), enforcing the divisibility
    /// 2 l_{n−1} q_n | l_n (with l₀ = 1, so the first stage needs 2 q₁ | l₁).
    pub fn extend(&mut self, k: BigInt, l: BigInt) -> Result<&StageParams> {
        let modulus = BigInt::from(2u32) * self.l_prev() * self.pending_pq().1;
        if !(&l % &modulus).is_zero() {
            return Err(AbcError::Parameter(format!(
                "l = {l} violates the divisibility 2·l_prev·q = {modulus} | l at stage {}",
                self.stages.len() + 1
            )));
        }
        self.push_stage(k, l, true)
    }

    /// Append a stage even when 2 l_{n−1} q_n ∤ l_n; the violation is recorded
    /// and surfaces in reports. Used by analytic-mode experiments where the
    /// conjugator reads only x₂..x_d and the block divisibility is not needed.
    pub fn extend_unchecked_leven(&mut self, k: BigInt, l: BigInt) -> Result<&StageParams> {
        let modulus = BigInt::from(2u32) * self.l_prev() * self.pending_pq().1;
        let ok = (&l % &modulus).is_zero();
        self.push_stage(k, l, ok)
    }

    fn push_stage(&mut self, k: BigInt, l: BigInt, leven_ok: bool) -> Result<&StageParams> {
        let n = self.stages.len() as u32 + 1;
        let (p, q) = self.pending_pq();
        let stage = StageParams::new(n, self.d, self.rho, p, q, k, l, self.epsilon_variant)?;
        self.stages.push(stage);
        self.l_bound_witness.push(None);
        self.leven_ok.push(leven_ok);
        Ok(self.stages.last().unwrap())
    }

    /// Record the sampled derivative bound used for the eq-l validation.
    pub fn set_l_bound_witness(&mut self, stage_index: usize, witness: f64) {
        if let Some(slot) = self.l_bound_witness.get_mut(stage_index) {
            *slot = Some(witness);
        }
    }

    /// δ_n · n · q_n = 1 must hold identically; exposed for property tests.
    pub fn delta_identity_holds(stage: &StageParams) -> bool {
        &stage.delta * rat_int(stage.n as i64) * Rational::from_integer(stage.q.clone())
            == Rational::one()
    }
}

/// Exact check that doubling k halves the rotation gap: gap(2k) = gap(k)/2.
pub fn gap_halves_on_doubling(stage: &StageParams) -> Result<bool> {
    let doubled = StageParams::new(
        stage.n,
        stage.d,
        stage.rho,
        stage.p.clone(),
        stage.q.clone(),
        &stage.k * BigInt::from(2u32),
        stage.l.clone(),
        stage.epsilon_variant,
    )?;
    Ok(doubled.gap() * rat_int(2) == stage.gap())
}
