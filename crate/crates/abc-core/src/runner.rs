//! Run orchestration: the check battery behind `verify`, artifact emission
//! behind `run`, figure re-rendering behind `render`, and the stage table
//! behind `params`.
//!
//! Every check lands in the report as a [`Verdict`] carrying the inequality
//! it tested and both of its sides, so a reader can re-derive the outcome
//! without rerunning anything. Exact claims compare rationals, sampled
//! claims compare floats against pinned tolerances; nothing is rounded
//! before the comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{
    apply_word_exact, closeness_report, commutation_residual, d_rho, det_lu, torus_dist,
    AnalyticAtom, AnalyticTorusMap,
};
use crate::blockslide::verify_conjugacy_for_stage;
use crate::config::RunConfig;
use crate::engine::{build_analytic_chain, build_exact_chain, stage_dens, AnalyticChain};
use crate::error::{AbcError, Result};
use crate::grid::{CellPermutation, CellSet, GridSpec};
use crate::params::{check_return_identities, ParamSchedule, StageParams};
use crate::rational::{rat_int, Rational};
use crate::report::{
    AnalyticStageManifest, FigureData, HPatternFigure, MollifyFigure, RunReport, SpectralSummary,
    SpeedRow, StageManifest, TowerFigure, Verdict,
};
use crate::spectral::{fejer_density, indicator_inner_1d, weak_limit_stability_1d};
use crate::svg;
use crate::towers::{
    build_cyclic_tower, build_towers, check_tower_speed, partition_refinement_stats,
    speed_schedule, speeds_decrease, tower_x1_stripes, TowerStripes1D,
};

pub const TOOL: &str = "abc-lab";

/// Sampled-check tolerances, pinned once so reports and tests agree.
pub const COMMUTATION_TOL: f64 = 1e-10;
pub const VOLUME_TOL: f64 = 1e-8;
pub const ROUNDTRIP_TOL: f64 = 1e-8;
pub const FEJER_TOL: f64 = 1e-8;

/// Figure size caps: past these the drawings stop being readable and the
/// files stop being diffable, so larger stages simply omit the figure.
const H_PATTERN_CELL_CAP: u64 = 30_000;
const TOWER_FIGURE_M_CAP: u64 = 64;
const SPECTRAL_M_CAP: u64 = 512;
const SPECTRAL_Q_CAP: u64 = 4096;
const MOLLIFY_DEN_CAP: u64 = 4096;

pub struct RunOutcome {
    pub report: RunReport,
    /// Paths written, in emission order.
    pub written: Vec<PathBuf>,
}

/// Row-level artifact data that belongs in CSV tables but not in the report.
#[derive(Default)]
struct Extras {
    /// stage, sample point, displacement error, landed in the bad set.
    closeness_rows: Vec<(u32, String, f64, bool)>,
    /// stage, slide label, ρ, ln of the strip sup bound.
    strip_rows: Vec<(u32, String, f64, f64)>,
    /// stage, tower, level, piece, x₁ lo, x₁ hi (exact strings).
    tower_rows: Vec<(u32, u8, u64, usize, String, String)>,
    /// lag k, correlation as exact string and as f64.
    correlation_rows: Vec<(u64, String, f64)>,
}

/// Run every check the mode asks for and return the report alone.
pub fn verify(config: &RunConfig) -> Result<RunReport> {
    evaluate(config).map(|(report, _)| report)
}

/// `verify` plus artifacts: report.json, the CSV tables and the figures.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let (report, extras) = evaluate(config)?;
    let written = write_artifacts(&report, &extras, out_dir)?;
    Ok(RunOutcome { report, written })
}

fn evaluate(config: &RunConfig) -> Result<(RunReport, Extras)> {
    let schedule = config.schedule()?;
    let mut checks: Vec<Verdict> = Vec::new();
    let mut extras = Extras::default();
    let mut figures = FigureData {
        h_pattern: None,
        towers: None,
        speed: None,
        spectral_density: None,
        mollify: None,
    };

    let mut manifests: Vec<StageManifest> = Vec::new();
    for (i, stage) in schedule.stages.iter().enumerate() {
        param_checks(&schedule, i, stage, &mut checks);
        manifests.push(stage_manifest(&schedule, i, stage));
    }

    let speed_rows = speed_checks(&schedule, &mut checks);
    figures.speed = Some(speed_rows.clone());

    if config.mode.wants_exact() {
        exact_checks(
            config,
            &schedule,
            &mut checks,
            &mut manifests,
            &mut figures,
            &mut extras,
        )?;
    }

    let spectral = spectral_checks(&schedule, &mut checks, &mut extras)?;
    if let Some(s) = &spectral {
        figures.spectral_density = Some(s.density.clone());
    }
    if figures.towers.is_none() {
        figures.towers = tower_figure(&schedule);
    }

    if config.mode.wants_analytic() {
        analytic_checks(
            config,
            &schedule,
            &mut checks,
            &mut manifests,
            &mut figures,
            &mut extras,
        )?;
    }

    let passed = checks.iter().all(|v| v.passed);
    let report = RunReport {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: config.mode.to_string(),
        seed: config.seed,
        passed,
        config: config.clone(),
        stages: manifests,
        checks,
        speed: Some(speed_rows),
        spectral,
        figures,
    };
    Ok((report, extras))
}

/// Exact parameter-level checks; independent of mode and of any grid.
fn param_checks(
    schedule: &ParamSchedule,
    index: usize,
    stage: &StageParams,
    checks: &mut Vec<Verdict>,
) {
    let n = stage.n;
    let gcd = stage.p_next.gcd(&stage.q_next);
    checks.push(Verdict::fact(
        format!("stage{n}-next-coprime"),
        gcd == BigInt::one(),
        format!("gcd(p', q') = {gcd} for p' = {}, q' = {}", stage.p_next, stage.q_next),
    ));
    checks.push(Verdict::rational_eq(
        format!("stage{n}-rotation-gap"),
        &(stage.alpha_next() - stage.alpha()),
        &stage.gap(),
        "α' − α = 1/(k l q²)",
    ));
    let ric = check_return_identities(stage);
    checks.push(Verdict::fact(
        format!("stage{n}-return-shift-integer"),
        ric.s_is_integer,
        format!("s = (m p − r)/q = {}", ric.s),
    ));
    checks.push(Verdict::rational_eq(
        format!("stage{n}-return-tower1"),
        &ric.lhs1,
        &ric.rhs1,
        "m α' = s + r/q + 1/(2q²)",
    ));
    checks.push(Verdict::rational_eq(
        format!("stage{n}-return-tower2"),
        &ric.lhs2,
        &ric.rhs2,
        "(m+1) α' ≡ (r+p)/q + 1/(2q²) + 1/q' (mod 1)",
    ));
    checks.push(Verdict::fact(
        format!("stage{n}-delta-identity"),
        ParamSchedule::delta_identity_holds(stage),
        format!("δ n q = 1 at δ = {}", stage.delta),
    ));
    let degenerate = stage.l == BigInt::one();
    checks.push(Verdict::fact(
        format!("stage{n}-sector-shape"),
        stage.sector_divisible || degenerate,
        if degenerate {
            "l = 1: degenerate stage, the conjugator is the identity".to_string()
        } else {
            format!("2q = {} divides l = {}", rat_int(2) * Rational::from_integer(stage.q.clone()), stage.l)
        },
    ));
    let ladder_ok = schedule.leven_ok[index];
    checks.push(Verdict::fact(
        format!("stage{n}-ladder-divisibility"),
        ladder_ok || degenerate,
        if ladder_ok {
            "2 l_prev q | l holds".to_string()
        } else if degenerate {
            "degenerate stage, divisibility waived".to_string()
        } else {
            format!("2 l_prev q does not divide l = {}", stage.l)
        },
    ));
}

fn stage_manifest(schedule: &ParamSchedule, index: usize, stage: &StageParams) -> StageManifest {
    StageManifest {
        n: stage.n,
        p: stage.p.to_string(),
        q: stage.q.to_string(),
        k: stage.k.to_string(),
        l: stage.l.to_string(),
        m: stage.m.to_string(),
        r: stage.r.to_string(),
        p_next: stage.p_next.to_string(),
        q_next: stage.q_next.to_string(),
        alpha: stage.alpha().to_string(),
        alpha_next: stage.alpha_next().to_string(),
        delta: stage.delta.to_string(),
        epsilon: stage.epsilon.to_string(),
        cross_stage_divisibility: schedule.leven_ok[index],
        grid_dens: None,
        grid_cells: None,
        analytic: None,
    }
}

fn speed_checks(schedule: &ParamSchedule, checks: &mut Vec<Verdict>) -> Vec<SpeedRow> {
    let speeds = speed_schedule(&schedule.stages);
    for sp in &speeds {
        checks.push(Verdict::rational_eq(
            format!("stage{}-speed-closed-form", sp.n),
            &sp.eta_total,
            &sp.eta_total_closed_form,
            "m(3q/q' + 40dδ') = 3/(2q) + 20d/((n+1)q²)",
        ));
        checks.push(Verdict::rational_eq(
            format!("stage{}-cyclic-speed-closed-form", sp.n),
            &sp.cyclic_total,
            &sp.cyclic_total_closed_form,
            "q'·20dδ' = 20d/(n+1)",
        ));
    }
    if speeds.len() >= 2 {
        checks.push(Verdict::fact(
            "speed-monotone",
            speeds_decrease(&speeds),
            "both speed totals fall strictly from stage to stage",
        ));
    }
    speeds
        .iter()
        .map(|sp| SpeedRow {
            stage: sp.n,
            eta_total: sp.eta_total.to_string(),
            eta_total_f64: sp.eta_total.to_f64().unwrap_or(f64::NAN),
            cyclic_total: sp.cyclic_total.to_string(),
            cyclic_total_f64: sp.cyclic_total.to_f64().unwrap_or(f64::NAN),
        })
        .collect()
}

/// Exact-mode battery: block return sweeps, tower accounting on each
/// stage's own grid, then the composed chain on the final grid.
fn exact_checks(
    config: &RunConfig,
    schedule: &ParamSchedule,
    checks: &mut Vec<Verdict>,
    manifests: &mut [StageManifest],
    figures: &mut FigureData,
    extras: &mut Extras,
) -> Result<()> {
    let budget = config.cell_budget as u128;
    let half = Rational::new(BigInt::one(), BigInt::from(2));

    for (i, stage) in schedule.stages.iter().enumerate() {
        let n = stage.n;
        let degenerate = stage.l == BigInt::one();
        if degenerate {
            continue; // no block structure; the chain-level checks still see it
        }

        let rep = verify_conjugacy_for_stage(stage)?;
        checks.push(Verdict::fact(
            format!("stage{n}-block-return-sweep"),
            rep.all_hold(),
            format!(
                "φ^τ∘𝔥 = 𝔥∘(e↦e+1) on {} + {} blocks ({} boundary blocks skipped), {} failures",
                rep.checked_tau1, rep.checked_tau2, rep.skipped_boundary, rep.failures
            ),
        ));

        if stage.q < BigInt::from(2) || stage.delta >= half {
            continue; // towers need q ≥ 2 and room for the δ-insets
        }
        let dens = stage_dens(stage)?;
        let grid = GridSpec::new(dens.clone(), budget)?;
        manifests[i].grid_dens = Some(dens.iter().map(|d| d.to_string()).collect());
        manifests[i].grid_cells = Some(grid.cell_count().to_string());

        let towers = build_towers(stage, &grid)?;
        let sc = check_tower_speed(stage, &grid, &towers)?;
        checks.push(Verdict::fact(
            format!("stage{n}-tower-interior-steps"),
            sc.interior_levels_exact,
            "φ^{α'} maps every interior level exactly onto its successor",
        ));
        checks.push(Verdict::rational_le(
            format!("stage{n}-tower-top-return"),
            &sc.total_sym,
            &sc.bound,
            "summed top-return defect against 3q/q'",
        ));
        checks.push(Verdict::fact(
            format!("stage{n}-tower-sym-doubles"),
            sc.sym_is_twice_one_sided,
            format!(
                "symmetric defect {} is exactly twice the one-sided defect {}",
                sc.total_sym, sc.total_one_sided
            ),
        ));

        let cyclic = build_cyclic_tower(stage, &grid)?;
        let level_cells = cyclic.levels.first().map(CellSet::len).unwrap_or(0);
        let mut all_cells: Vec<u32> = cyclic
            .levels
            .iter()
            .flat_map(|s| s.cells.iter().copied())
            .collect();
        all_cells.sort_unstable();
        all_cells.dedup();
        checks.push(Verdict::fact(
            format!("stage{n}-cyclic-tiles"),
            all_cells.len() == cyclic.levels.len() * level_cells,
            format!(
                "{} levels of {} cells are pairwise disjoint",
                cyclic.levels.len(),
                level_cells
            ),
        ));

        let stats = partition_refinement_stats(stage, &grid, &towers, &cyclic)?;
        let good_closed = (Rational::one() - rat_int(2) * &stage.delta).pow(stage.d as i32);
        checks.push(Verdict::rational_eq(
            format!("stage{n}-good-domain-mass"),
            &stats.good_mass,
            &good_closed,
            "μ(G̃) = (1−2δ)^d",
        ));
        checks.push(Verdict::fact(
            format!("stage{n}-good-refines-levels"),
            stats.per_level_fraction_uniform,
            "every tower level meets G̃ in the same fraction",
        ));
        checks.push(Verdict::rational_le(
            format!("stage{n}-eta-level-count"),
            &stats.eta_level_threshold,
            &rat_int(stats.eta_levels as i64),
            "tower levels reach 2(1−2δ)m",
        ));
        checks.push(Verdict::rational_le(
            format!("stage{n}-cyclic-level-count"),
            &stats.cyclic_level_threshold,
            &rat_int(stats.cyclic_levels as i64),
            "cyclic levels reach (1−2δ)q'",
        ));
        checks.push(Verdict::rational_le(
            format!("stage{n}-level-drift-cap"),
            &stats.max_drift,
            &stats.drift_limit,
            "max i |α' − α| over i ≤ m stays below 1/(2q²)",
        ));

        if figures.h_pattern.is_none() {
            figures.h_pattern = h_pattern_figure(stage);
        }
        collect_tower_rows(stage, extras)?;
    }

    let chain = build_exact_chain(schedule, schedule.stages.len(), budget)?;
    for (i, stage) in schedule.stages.iter().enumerate() {
        let q_rat = Rational::new(BigInt::one(), stage.q.clone());
        let phi_q = chain.grid.phi(&q_rat)?;
        checks.push(Verdict::fact(
            format!("stage{}-conjugator-commutes", stage.n),
            chain.stage_hs[i].commutes_with(&phi_q),
            format!("h commutes with φ^(1/{}) on the chain grid", stage.q),
        ));
    }
    let spectrum = chain.cycle_spectrum();
    let q_next = chain
        .next_q
        .to_u64()
        .ok_or_else(|| AbcError::Parameter("q' exceeds u64 on the chain grid".into()))?;
    let divides = spectrum.keys().all(|len| q_next % len == 0);
    let attained = spectrum.keys().max().copied() == Some(q_next);
    let spectrum_text: Vec<String> = spectrum
        .iter()
        .map(|(len, cells)| format!("{len}×{cells}"))
        .collect();
    checks.push(Verdict::fact(
        "chain-cycle-divides-order",
        divides,
        format!("cycle spectrum {{{}}} divides q' = {q_next}", spectrum_text.join(", ")),
    ));
    checks.push(Verdict::fact(
        "chain-full-period-attained",
        attained,
        format!("some cell has the full period q' = {q_next}"),
    ));
    Ok(())
}

fn h_pattern_figure(stage: &StageParams) -> Option<HPatternFigure> {
    let l = stage.l.to_u64()?;
    let p = stage.p.to_u64()?;
    let q = stage.q.to_u64()?;
    let r = stage.r.to_u64()?;
    let x1 = stage.block_x1_denominator().to_u64()?;
    if stage.d != 2 || x1.checked_mul(l)? > H_PATTERN_CELL_CAP {
        return None;
    }
    Some(HPatternFigure { l, p, q, r })
}

fn stripes_for_figure(stage: &StageParams) -> Option<TowerStripes1D> {
    let q = stage.q.to_u64()?;
    let m = stage.m.to_u64()?;
    if q < 2 || m == 0 || m > TOWER_FIGURE_M_CAP || q > SPECTRAL_Q_CAP {
        return None;
    }
    tower_x1_stripes(stage).ok()
}

fn tower_figure(schedule: &ParamSchedule) -> Option<TowerFigure> {
    let stage = schedule
        .stages
        .iter()
        .find(|s| s.sector_divisible && s.q >= BigInt::from(2))?;
    let stripes = stripes_for_figure(stage)?;
    let offsets = |levels: &[crate::intervals::IntervalSet]| -> Vec<(String, f64)> {
        levels
            .first()
            .map(|base| {
                base.intervals
                    .iter()
                    .map(|(lo, _)| (lo.to_string(), lo.to_f64().unwrap_or(f64::NAN)))
                    .collect()
            })
            .unwrap_or_default()
    };
    let width = (Rational::from_integer(stage.q.clone())
        / Rational::from_integer(stage.q_next.clone()))
    .to_f64()?;
    Some(TowerFigure {
        q: stage.q.to_u64()?,
        m: stripes.m,
        base1_offsets: offsets(&stripes.levels1),
        base2_offsets: offsets(&stripes.levels2),
        stripe_width: width,
        alpha_next: stripes.alpha_next.to_f64()?,
    })
}

fn collect_tower_rows(stage: &StageParams, extras: &mut Extras) -> Result<()> {
    let Some(stripes) = stripes_for_figure(stage) else {
        return Ok(());
    };
    for (tower, levels) in [(1u8, &stripes.levels1), (2u8, &stripes.levels2)] {
        for (level, set) in levels.iter().enumerate() {
            for (piece, (lo, hi)) in set.intervals.iter().enumerate() {
                extras.tower_rows.push((
                    stage.n,
                    tower,
                    level as u64,
                    piece,
                    lo.to_string(),
                    hi.to_string(),
                ));
            }
        }
    }
    Ok(())
}

/// Spectral layer on the last block stage, entirely through the exact x₁
/// stripe picture, so it works at parameter sizes far past any cell budget.
fn spectral_checks(
    schedule: &ParamSchedule,
    checks: &mut Vec<Verdict>,
    extras: &mut Extras,
) -> Result<Option<SpectralSummary>> {
    let Some(stage) = schedule
        .stages
        .iter()
        .rev()
        .find(|s| s.sector_divisible && s.q >= BigInt::from(2))
    else {
        return Ok(None);
    };
    let (Some(m), Some(q)) = (stage.m.to_u64(), stage.q.to_u64()) else {
        return Ok(None);
    };
    if m > SPECTRAL_M_CAP || q > SPECTRAL_Q_CAP {
        return Ok(None);
    }
    let stripes = tower_x1_stripes(stage)?;
    let atoms = stripes.eta_atoms();
    let sigma = &stripes.side_factor;
    let alpha = &stripes.alpha_next;

    // the Koopman operator of the rotation is unitary: inner products of
    // rotated indicators are preserved exactly
    let unitary = atoms.iter().take(3).all(|a| {
        atoms.iter().take(3).all(|b| {
            indicator_inner_1d(&a.rotate(alpha), &b.rotate(alpha), sigma)
                == indicator_inner_1d(a, b, sigma)
        })
    });
    checks.push(Verdict::fact(
        "spectral-koopman-unitary",
        unitary,
        "⟨Uf, Ug⟩ = ⟨f, g⟩ exactly on the stripe observables",
    ));

    let stab = weak_limit_stability_1d(alpha, sigma, &atoms, stripes.m)?;

    // Fejér check on the base observable's autocorrelation sequence
    let kmax = (4 * (m as usize + 1)).min(128);
    let base = &atoms[0];
    let mut corrs = Vec::with_capacity(kmax + 1);
    let mut back = Rational::zero();
    for k in 0..=kmax as u64 {
        let c = indicator_inner_1d(&base.rotate(&back), base, sigma);
        extras
            .correlation_rows
            .push((k, c.to_string(), c.to_f64().unwrap_or(f64::NAN)));
        corrs.push(c);
        back = back - alpha;
    }
    let fejer = fejer_density(&corrs, FEJER_TOL);
    checks.push(Verdict::fact(
        "spectral-fejer-nonnegative",
        fejer.nonnegative,
        format!("sampled Fejér density minimum {}", fejer.min_density),
    ));
    checks.push(Verdict::fact(
        "spectral-fejer-mass",
        fejer.mass_matches_c0,
        format!("density mass {} against c₀ = {}", fejer.mass, fejer.c0),
    ));

    // density curve for the figure, same Fejér weights on a fixed 256 grid
    let cf: Vec<f64> = corrs.iter().map(|c| c.to_f64().unwrap_or(0.0)).collect();
    let kk = cf.len();
    let density: Vec<(f64, f64)> = (0..256)
        .map(|j| {
            let t = j as f64 / 256.0;
            let theta = 2.0 * std::f64::consts::PI * t;
            let mut rho = cf[0];
            for (k, ck) in cf.iter().enumerate().skip(1) {
                rho += 2.0 * (1.0 - k as f64 / kk as f64) * ck * (k as f64 * theta).cos();
            }
            (t, rho)
        })
        .collect();

    Ok(Some(SpectralSummary {
        h: stripes.m,
        r: stab.all.r,
        rel_residual: stab.all.rel_residual,
        r_gap_between_observable_halves: stab.r_gap,
        fejer_mass: fejer.mass,
        fejer_c0: fejer.c0,
        fejer_min_density: fejer.min_density,
        density,
    }))
}

/// Analytic-mode battery: smoothed conjugators, chain map, and the d_ρ
/// convergence ladder against the per-stage ε targets.
fn analytic_checks(
    config: &RunConfig,
    schedule: &ParamSchedule,
    checks: &mut Vec<Verdict>,
    manifests: &mut [StageManifest],
    figures: &mut FigureData,
    extras: &mut Extras,
) -> Result<()> {
    let a = &config.analytic;
    let upto = schedule.stages.len();
    let chain = build_analytic_chain(schedule, upto, a.eps, a.delta, config.seed)?;

    for (i, st) in chain.stages.iter().enumerate() {
        let n = st.n;
        let commutation =
            commutation_residual(&st.h, st.q, a.commutation_samples, config.seed ^ (n as u64));
        checks.push(Verdict::float_lt(
            format!("stage{n}-smooth-commutation"),
            commutation,
            COMMUTATION_TOL,
            format!("sampled residual of h∘φ^(1/{}) = φ^(1/{})∘h", st.q, st.q),
        ));

        let mut manifest = AnalyticStageManifest {
            eps: st.eps,
            delta: st.delta,
            slides: st.h.slide_count(),
            commutation_residual: commutation,
            closeness_samples: 0,
            closeness_bad_fraction: 0.0,
            closeness_worst_good_error: 0.0,
        };
        if !st.word.slides.is_empty() {
            let rep = closeness_report(
                &st.h,
                &st.word,
                st.eps / 2.0,
                st.delta,
                a.closeness_samples,
                config.seed ^ (0x10 + n as u64),
            );
            checks.push(Verdict::fact(
                format!("stage{n}-step-proximity"),
                rep.passes(),
                format!(
                    "worst displacement error outside E: {} (target {}); bad-set fraction {} (target {})",
                    rep.worst_good_error, rep.eps, rep.bad_fraction, rep.delta
                ),
            ));
            manifest.closeness_samples = rep.samples;
            manifest.closeness_bad_fraction = rep.bad_fraction;
            manifest.closeness_worst_good_error = rep.worst_good_error;
            collect_closeness_rows(st.n, &st.h, &st.word, config, extras);
        }
        manifests[i].analytic = Some(manifest);
        collect_strip_rows(st.n, &st.h, schedule.rho, extras);
        if figures.mollify.is_none() {
            figures.mollify = mollify_figure(&st.h);
        }
    }

    let volume = volume_residual(&chain, a.jacobian_samples, config.seed ^ 0x7a);
    checks.push(Verdict::float_lt(
        "chain-volume-preserving",
        volume,
        VOLUME_TOL,
        format!("max |det DT − 1| over {} points", a.jacobian_samples),
    ));
    let roundtrip = inverse_roundtrip(&chain, a.metric_samples.max(8), config.seed ^ 0x1e);
    checks.push(Verdict::float_lt(
        "chain-inverse-roundtrip",
        roundtrip,
        ROUNDTRIP_TOL,
        "max torus distance of T⁻¹(T(x)) from x",
    ));

    if a.metric_samples > 0 {
        for j in 1..=upto {
            let prefix;
            let current = if j == upto {
                &chain
            } else {
                prefix = build_analytic_chain(schedule, j, a.eps, a.delta, config.seed)?;
                &prefix
            };
            let prev = build_analytic_chain(schedule, j - 1, a.eps, a.delta, config.seed)?;
            let dist = d_rho(
                &current.t,
                &prev.t,
                schedule.rho,
                a.metric_samples,
                config.seed ^ (0x40 + j as u64),
            );
            let eps_n = schedule.stages[j - 1]
                .epsilon
                .to_f64()
                .unwrap_or(f64::INFINITY);
            checks.push(Verdict::float_lt(
                format!("stage{j}-metric-step"),
                dist,
                eps_n,
                format!("sampled d_ρ(T_{j}, T_{}) at ρ = {}", j - 1, schedule.rho),
            ));
        }
    }
    Ok(())
}

fn volume_residual(chain: &AnalyticChain, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..chain.d).map(|_| rng.gen::<f64>()).collect();
        let det = det_lu(&chain.t.jacobian(&x));
        worst = worst.max((det - 1.0).abs());
    }
    worst
}

fn inverse_roundtrip(chain: &AnalyticChain, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = chain.t.inverse();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..chain.d).map(|_| rng.gen::<f64>()).collect();
        let back = inv.eval(&chain.t.eval(&x));
        for (u, v) in back.iter().zip(&x) {
            worst = worst.max(torus_dist(*u, *v));
        }
    }
    worst
}

/// Per-point closeness rows for the CSV table: a bounded resample with its
/// own seed so the table size stays fixed regardless of the check budget.
fn collect_closeness_rows(
    n: u32,
    h: &AnalyticTorusMap,
    word: &crate::blockslide::SlideWord,
    config: &RunConfig,
    extras: &mut Extras,
) {
    const DEN: i64 = 1 << 20;
    let rows = config.analytic.closeness_samples.min(256);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x20 + n as u64));
    for _ in 0..rows {
        let xr: Vec<Rational> = (0..h.d)
            .map(|_| Rational::new(BigInt::from(rng.gen_range(0..DEN)), BigInt::from(DEN)))
            .collect();
        let xf: Vec<f64> = xr.iter().map(|v| v.to_f64().unwrap()).collect();
        let exact = apply_word_exact(word, &xr);
        let (approx, bad) = h.eval_flagged(&xf);
        let mut err = 0.0f64;
        for (e, af) in exact.iter().zip(&approx) {
            err = err.max(torus_dist(e.to_f64().unwrap(), *af));
        }
        let point = xf
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(";");
        extras.closeness_rows.push((n, point, err, bad));
    }
}

/// Strip-norm curve rows: ln of the sampled sup bound of each smoothed step
/// on strips of height ρ/8, 2ρ/8, …, ρ.
fn collect_strip_rows(n: u32, h: &AnalyticTorusMap, rho: f64, extras: &mut Extras) {
    for atom in &h.atoms {
        let AnalyticAtom::Slide(slide) = atom else {
            continue;
        };
        for i in 1..=8 {
            let r = rho * i as f64 / 8.0;
            extras
                .strip_rows
                .push((n, slide.label.clone(), r, slide.step.strip_log_bound(r)));
        }
    }
}

fn mollify_figure(h: &AnalyticTorusMap) -> Option<MollifyFigure> {
    let slide = h.atoms.iter().find_map(|a| match a {
        AnalyticAtom::Slide(s) => Some(s),
        AnalyticAtom::Shift(_) => None,
    })?;
    let step = &slide.step;
    if step.target.den > MOLLIFY_DEN_CAP {
        return None;
    }
    let values = step
        .target
        .values
        .iter()
        .map(|v| v.to_f64().unwrap_or(f64::NAN))
        .collect();
    let curve = (0..=512)
        .map(|i| {
            let x = i as f64 / 512.0;
            (x, step.eval(x))
        })
        .collect();
    Some(MollifyFigure {
        den: step.target.den,
        values,
        curve,
        delta: step.delta,
    })
}

// ---------------------------------------------------------------- artifacts

fn write_file(out: &Path, name: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(name);
    std::fs::write(&path, bytes)
        .map_err(|e| AbcError::Artifact(format!("cannot write {}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

fn write_artifacts(report: &RunReport, extras: &Extras, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)
        .map_err(|e| AbcError::Artifact(format!("cannot create {}: {e}", out.display())))?;
    let mut written = Vec::new();

    write_file(out, "report.json", report.to_json().as_bytes(), &mut written)?;

    let mut params = String::from(
        "stage,p,q,k,l,m,r,p_next,q_next,alpha,alpha_next,delta,epsilon,cross_stage_divisibility\n",
    );
    for s in &report.stages {
        let _ = writeln!(
            params,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.n, s.p, s.q, s.k, s.l, s.m, s.r, s.p_next, s.q_next, s.alpha, s.alpha_next,
            s.delta, s.epsilon, s.cross_stage_divisibility
        );
    }
    write_file(out, "params.csv", params.as_bytes(), &mut written)?;

    let mut checks = String::from("id,passed,lhs,relation,rhs,detail\n");
    for v in &report.checks {
        let _ = writeln!(
            checks,
            "{},{},{},{},{},{}",
            v.id,
            v.passed,
            csv_quote(&v.lhs),
            v.relation,
            csv_quote(&v.rhs),
            csv_quote(&v.detail)
        );
    }
    write_file(out, "checks.csv", checks.as_bytes(), &mut written)?;

    if let Some(rows) = &report.speed {
        let mut speed = String::from("stage,eta_total,eta_total_f64,cyclic_total,cyclic_total_f64\n");
        for r in rows {
            let _ = writeln!(
                speed,
                "{},{},{},{},{}",
                r.stage, r.eta_total, r.eta_total_f64, r.cyclic_total, r.cyclic_total_f64
            );
        }
        write_file(out, "speed.csv", speed.as_bytes(), &mut written)?;
    }

    if !extras.tower_rows.is_empty() {
        let mut t = String::from("stage,tower,level,piece,x1_lo,x1_hi\n");
        for (n, tower, level, piece, lo, hi) in &extras.tower_rows {
            let _ = writeln!(t, "{n},{tower},{level},{piece},{lo},{hi}");
        }
        write_file(out, "towers.csv", t.as_bytes(), &mut written)?;
    }

    if !extras.correlation_rows.is_empty() {
        let mut c = String::from("k,correlation,correlation_f64\n");
        for (k, exact, f) in &extras.correlation_rows {
            let _ = writeln!(c, "{k},{exact},{f}");
        }
        write_file(out, "correlations.csv", c.as_bytes(), &mut written)?;
    }

    if !extras.closeness_rows.is_empty() {
        let mut c = String::from("stage,point,displacement_error,in_bad_set\n");
        for (n, point, err, bad) in &extras.closeness_rows {
            let _ = writeln!(c, "{n},{point},{err},{bad}");
        }
        write_file(out, "closeness.csv", c.as_bytes(), &mut written)?;
    }

    if !extras.strip_rows.is_empty() {
        let mut s = String::from("stage,slide,rho,ln_strip_bound\n");
        for (n, label, rho, bound) in &extras.strip_rows {
            let _ = writeln!(s, "{n},{label},{rho},{bound}");
        }
        write_file(out, "strip.csv", s.as_bytes(), &mut written)?;
    }

    written.extend(render(report, out)?);
    Ok(written)
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Re-emit the SVG figures embedded in a report. An empty figure set writes
/// nothing and succeeds.
pub fn render(report: &RunReport, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)
        .map_err(|e| AbcError::Artifact(format!("cannot create {}: {e}", out.display())))?;
    let mut written = Vec::new();
    let figs = &report.figures;
    if let Some(fig) = &figs.h_pattern {
        write_file(out, "h_pattern.svg", svg::h_pattern_svg(fig)?.as_bytes(), &mut written)?;
    }
    if let Some(fig) = &figs.towers {
        write_file(out, "towers.svg", svg::tower_svg(fig).as_bytes(), &mut written)?;
    }
    if let Some(rows) = &figs.speed {
        if !rows.is_empty() {
            write_file(out, "speed.svg", svg::speed_svg(rows).as_bytes(), &mut written)?;
        }
    }
    if let Some(density) = &figs.spectral_density {
        write_file(out, "spectral.svg", svg::spectral_svg(density).as_bytes(), &mut written)?;
    }
    if let Some(fig) = &figs.mollify {
        write_file(out, "mollify.svg", svg::mollify_svg(fig).as_bytes(), &mut written)?;
    }
    Ok(written)
}

/// Human-readable stage table for the `params` verb.
pub fn params_table(config: &RunConfig) -> Result<String> {
    let schedule = config.schedule()?;
    let mut rows: Vec<[String; 10]> = vec![[
        "n".into(),
        "p".into(),
        "q".into(),
        "k".into(),
        "l".into(),
        "m".into(),
        "r".into(),
        "alpha_next".into(),
        "delta".into(),
        "epsilon".into(),
    ]];
    for s in &schedule.stages {
        rows.push([
            s.n.to_string(),
            s.p.to_string(),
            s.q.to_string(),
            s.k.to_string(),
            s.l.to_string(),
            s.m.to_string(),
            s.r.to_string(),
            s.alpha_next().to_string(),
            s.delta.to_string(),
            s.epsilon.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..10)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(1))
        .collect();
    let mut out = String::new();
    for row in &rows {
        for (cell, &w) in row.iter().zip(&widths) {
            let _ = write!(out, "{cell:<w$}  ");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    let (p, q) = schedule.pending_pq();
    let _ = writeln!(out, "next seed: p/q = {p}/{q}");
    Ok(out)
}

/// Atom boxes as CSV, one row per box with exact fraction bounds per
/// coordinate.
pub fn cells_csv(grid: &GridSpec, sets: &[(String, CellSet)]) -> String {
    let d = grid.d();
    let mut out = String::from("name,cell");
    for axis in 0..d {
        let _ = write!(out, ",x{}_lo,x{}_hi", axis + 1, axis + 1);
    }
    out.push('\n');
    for (name, set) in sets {
        for &cell in &set.cells {
            let _ = write!(out, "{name},{cell}");
            for axis in 0..d {
                let lo = grid.cell_lo(cell, axis);
                let hi = &lo + Rational::new(BigInt::one(), BigInt::from(grid.dens[axis]));
                let _ = write!(out, ",{lo},{hi}");
            }
            out.push('\n');
        }
    }
    out
}

/// A permutation as CSV, cell index → image index.
pub fn permutation_csv(p: &CellPermutation) -> String {
    let mut out = String::from("cell,image\n");
    for (cell, image) in p.map.iter().enumerate() {
        let _ = writeln!(out, "{cell},{image}");
    }
    out
}
