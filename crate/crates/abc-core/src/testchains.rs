//! Heavyweight fixtures shared across the unit-test modules, built once.

use num_bigint::BigInt;
use std::sync::OnceLock;

use crate::engine::{build_exact_chain, ExactChain};
use crate::grid::DEFAULT_CELL_BUDGET;
use crate::params::{EpsilonVariant, ParamSchedule};

pub fn schedule(p: i64, q: i64, stages: &[(i64, i64)]) -> ParamSchedule {
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

/// One stage of the acceptance chain: seed 3/5, k = 1, l = 10, grid [25000, 100].
pub fn chain35() -> &'static (ParamSchedule, ExactChain) {
    static CHAIN: OnceLock<(ParamSchedule, ExactChain)> = OnceLock::new();
    CHAIN.get_or_init(|| {
        let s = schedule(3, 5, &[(1, 10)]);
        let chain = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        (s, chain)
    })
}

/// The small cross-check chain: seed 1/3, k = 1, l = 6, grid [1944, 36].
pub fn chain136() -> &'static (ParamSchedule, ExactChain) {
    static CHAIN: OnceLock<(ParamSchedule, ExactChain)> = OnceLock::new();
    CHAIN.get_or_init(|| {
        let s = schedule(1, 3, &[(1, 6)]);
        let chain = build_exact_chain(&s, 1, DEFAULT_CELL_BUDGET).unwrap();
        (s, chain)
    })
}
