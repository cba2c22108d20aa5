//! Seeded experiment drivers: sparse fuzzing, the power-weight sweep, the
//! `f_m` growth study, norm attainment, the universal maximal estimates and
//! the exact inequality suites.
//!
//! Every driver is a pure function of its settings; rows come back in a fixed
//! order whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    certified_class, counterexample_fm, fit_log_slope, fm_diagnostics, norm_attainment_sup, operator_ratio,
    power_threshold_integral, power_threshold_maximal, sweep_point, transition_points, universal_check, BlockBattery,
    Stability, StabilityRule, SweepRow, SweepSettings,
};
use crate::content::{default_battery, h_norm_dual, make_block, BlockShape};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Cube, Fidelity, Grid, GridFunction};
use crate::norms::{conjugate, holder_morrey_check, lpl_norm, morrey_norm, ExponentSet, EXACT_SLACK};
use crate::operators::OperatorTag;
use crate::sparse::{
    build_sparse_integral, build_sparse_maximal, verify_domination_integral, verify_domination_maximal, verify_sparse,
    verify_stopping, SparseKind,
};
use crate::weights::PowerWeightSpec;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sparse nonnegative field: a log-uniform background on about half the
/// cells plus a few large spikes, so that stopping families have depth.
pub fn spiky_field(grid: Grid, rng: &mut impl Rng) -> GridFunction {
    let n = grid.cell_count();
    let mut v: Vec<f64> =
        (0..n).map(|_| if rng.gen_bool(0.5) { 10f64.powf(rng.gen_range(-3.0..0.0)) } else { 0.0 }).collect();
    for _ in 0..rng.gen_range(1..=5) {
        v[rng.gen_range(0..n)] += 10f64.powf(rng.gen_range(2.0..7.0));
    }
    GridFunction::new(grid, v).expect("length matches")
}

/// Positive weight with values spread over a few decades.
pub fn random_weight(grid: Grid, decades: f64, rng: &mut impl Rng) -> GridFunction {
    let v = (0..grid.cell_count()).map(|_| 10f64.powf(rng.gen_range(-decades..decades))).collect();
    GridFunction::new(grid, v).expect("length matches")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzSettings {
    pub seed: u64,
    /// Instances per dimension.
    pub instances: usize,
    pub level_1d: usize,
    pub level_2d: usize,
    /// `α/n` is drawn uniformly from this range.
    pub alpha_range: [f64; 2],
    pub kappa: f64,
    pub fidelity_1d: Fidelity,
}

impl Default for FuzzSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            instances: 200,
            level_1d: 8,
            level_2d: 5,
            alpha_range: [0.1, 0.9],
            kappa: 2.0,
            fidelity_1d: Fidelity::Aligned,
        }
    }
}

/// One family of the fuzz run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzRow {
    pub instance: usize,
    pub dim: usize,
    pub level: usize,
    pub alpha: f64,
    pub kind: SparseKind,
    pub members: usize,
    pub generations: u32,
    pub min_sparse_ratio: f64,
    pub sparse_ok: bool,
    pub stopping_violations: usize,
    pub min_lower: f64,
    pub max_upper: f64,
    pub stopping_ok: bool,
    /// Local maximal or dyadic integral form over the sparse form.
    pub domination_ratio: f64,
    pub constant: f64,
    pub domination_ok: bool,
    /// Integral scheme: the bound `a/(1-2^{-α})`; maximal scheme: `a`.
    pub proven_constant: f64,
    pub proven_ok: bool,
    /// Measured constant for the full (non-dyadic) operator.
    pub full_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub settings: FuzzSettings,
    pub families: usize,
    pub sparse_failures: usize,
    pub stopping_failures: usize,
    pub maximal_domination_failures: usize,
    pub integral_domination_failures: usize,
    pub integral_proven_failures: usize,
    pub min_sparse_ratio: f64,
    /// Largest dyadic integral ratio in units of `a`.
    pub worst_integral_over_a: f64,
    pub worst_maximal_over_a: f64,
    pub rows: Vec<FuzzRow>,
}

fn fuzz_instance(s: &FuzzSettings, dim: usize, i: usize) -> Result<[FuzzRow; 2]> {
    let level = if dim == 1 { s.level_1d } else { s.level_2d };
    let grid = Grid::new(dim, level)?;
    let mut rng = rng_for(s.seed, (dim as u64) << 32 | i as u64);
    let f = spiky_field(grid, &mut rng);
    let alpha = rng.gen_range(s.alpha_range[0]..s.alpha_range[1]) * dim as f64;
    let q0 = grid.root();
    let fidelity = if dim == 1 { s.fidelity_1d } else { Fidelity::Dyadic };

    let mut mx = build_sparse_maximal(&f, alpha, &q0)?;
    let sp = verify_sparse(&mx.family, 0.5);
    let st = verify_stopping(&f, &mx.family)?;
    let dm = verify_domination_maximal(&f, alpha, &mut mx, fidelity)?;
    let row_m = FuzzRow {
        instance: i,
        dim,
        level,
        alpha,
        kind: SparseKind::Maximal,
        members: mx.family.members.len(),
        generations: mx.family.generations(),
        min_sparse_ratio: sp.min_ratio,
        sparse_ok: sp.ok,
        stopping_violations: st.violations,
        min_lower: st.min_lower,
        max_upper: st.max_upper,
        stopping_ok: st.ok,
        domination_ratio: dm.local_ratio,
        constant: dm.constant,
        domination_ok: dm.local_ok,
        proven_constant: dm.constant,
        proven_ok: dm.local_ok,
        full_ratio: dm.full_ratio,
    };

    let mut it = build_sparse_integral(&f, alpha, &q0, s.kappa)?;
    let sp = verify_sparse(&it.family, 0.5);
    let st = verify_stopping(&f, &it.family)?;
    let di = verify_domination_integral(&f, alpha, &mut it)?;
    let row_i = FuzzRow {
        instance: i,
        dim,
        level,
        alpha,
        kind: SparseKind::Integral,
        members: it.family.members.len(),
        generations: it.family.generations(),
        min_sparse_ratio: sp.min_ratio,
        sparse_ok: sp.ok,
        stopping_violations: st.violations,
        min_lower: st.min_lower,
        max_upper: st.max_upper,
        stopping_ok: st.ok,
        domination_ratio: di.dyadic_ratio,
        constant: di.constant,
        domination_ok: di.dyadic_ok,
        proven_constant: di.proven_constant,
        proven_ok: di.dyadic_ok_proven,
        full_ratio: di.c1,
    };
    Ok([row_m, row_i])
}

/// Builds both sparse families on `instances` random fields per dimension and
/// checks sparseness, the stopping bounds and the domination constants.
pub fn sparse_fuzz(settings: &FuzzSettings) -> Result<FuzzSummary> {
    let jobs: Vec<(usize, usize)> = [1, 2].iter().flat_map(|&d| (0..settings.instances).map(move |i| (d, i))).collect();
    let out = exec::map_slice(&jobs, |&(d, i)| fuzz_instance(settings, d, i));
    let mut rows = Vec::with_capacity(2 * jobs.len());
    for r in out {
        rows.extend(r?);
    }
    let count = |p: &dyn Fn(&FuzzRow) -> bool| rows.iter().filter(|r| p(r)).count();
    let worst = |k: SparseKind| {
        rows.iter().filter(|r| r.kind == k).map(|r| r.domination_ratio / r.constant).fold(0.0, f64::max)
    };
    Ok(FuzzSummary {
        settings: settings.clone(),
        families: rows.len(),
        sparse_failures: count(&|r| !r.sparse_ok),
        stopping_failures: count(&|r| !r.stopping_ok),
        maximal_domination_failures: count(&|r| r.kind == SparseKind::Maximal && !r.domination_ok),
        integral_domination_failures: count(&|r| r.kind == SparseKind::Integral && !r.domination_ok),
        integral_proven_failures: count(&|r| r.kind == SparseKind::Integral && !r.proven_ok),
        min_sparse_ratio: rows.iter().map(|r| r.min_sparse_ratio).fold(f64::INFINITY, f64::min),
        worst_integral_over_a: worst(SparseKind::Integral),
        worst_maximal_over_a: worst(SparseKind::Maximal),
        rows,
    })
}

/// The sweep rows together with the agreement verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepReport {
    pub exponents: ExponentSet,
    pub settings: SweepSettings,
    pub rows: Vec<SweepRow>,
    /// Grid points next to a change of the maximal predicate.
    pub exempt_maximal: Vec<f64>,
    /// Grid points next to a change of the integral predicate.
    pub exempt_integral: Vec<f64>,
    /// Grid points next to a change of the expected doubling outcome.
    pub exempt_doubling: Vec<f64>,
    /// `(ρ, check)` for every disagreement outside the exempt points.
    pub mismatches: Vec<(f64, String)>,
    /// Disagreements of the maximal check under the plain threshold rule, for comparison.
    pub threshold_rule_mismatches: Vec<f64>,
    pub ok: bool,
}

pub fn power_sweep(e: &ExponentSet, settings: &SweepSettings, rhos: &[f64]) -> Result<PowerSweepReport> {
    let max_level = settings.levels.iter().copied().max().ok_or_else(|| Error::InvalidInput("no levels".into()))?;
    let battery = BlockBattery::new(e.n, max_level, e.lambda)?;
    let rows: Result<Vec<SweepRow>> = exec::map_slice(rhos, |&r| sweep_point(r, e, settings, &battery)).into_iter().collect();
    let rows = rows?;
    let exempt_maximal = transition_points(rhos, |r| power_threshold_maximal(r, e).admissible);
    let exempt_integral = transition_points(rhos, |r| power_threshold_integral(r, e).admissible);
    let exempt_doubling = transition_points(rhos, |r| {
        let p = power_threshold_maximal(r, e);
        e.q * r > e.lambda - e.n as f64 && !p.left_boundary
    });
    let mut mismatches = Vec::new();
    let mut threshold_rule_mismatches = Vec::new();
    for row in &rows {
        let checks = [
            ("maximal", row.maximal_agrees, &exempt_maximal),
            ("integral", row.integral_agrees, &exempt_integral),
            ("doubling", row.doubling_agrees, &exempt_doubling),
        ];
        for (name, agrees, exempt) in checks {
            if !agrees && !exempt.contains(&row.rho) {
                mismatches.push((row.rho, name.to_string()));
            }
        }
        let c = certified_class(&row.b_lower, &row.b_upper, StabilityRule::default());
        let agrees = c != Stability::Undetermined && (c == Stability::Finite) == row.maximal.admissible;
        if !agrees && !exempt_maximal.contains(&row.rho) {
            threshold_rule_mismatches.push(row.rho);
        }
    }
    let ok = mismatches.is_empty();
    Ok(PowerSweepReport {
        exponents: *e,
        settings: settings.clone(),
        rows,
        exempt_maximal,
        exempt_integral,
        exempt_doubling,
        mismatches,
        threshold_rule_mismatches,
        ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterexampleSettings {
    pub level: usize,
    pub ms: Vec<usize>,
    /// Side of `Q` in cells; `Q` is centered in the root.
    pub side: i64,
    /// `ρ` of the weight; `None` means the doubling boundary `qρ = λ - n`.
    pub rho: Option<f64>,
    pub fidelity: Fidelity,
    /// Allowed deviation of the fitted exponent from `1 - α/n`.
    pub slope_tolerance: f64,
    /// Maximal-operator ratios must change by less than this from `L` to `L+2`.
    pub stability_change: f64,
}

impl Default for CounterexampleSettings {
    fn default() -> Self {
        Self {
            level: 10,
            ms: vec![4, 16, 64, 256],
            side: 4,
            rho: None,
            fidelity: Fidelity::Aligned,
            slope_tolerance: 0.15,
            stability_change: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub m: usize,
    pub log_m: f64,
    pub integral_ratio: f64,
    pub maximal_ratio: f64,
    pub maximal_ratio_refined: f64,
    /// `min_Q I_α f_m / log m`.
    pub integral_min_over_log: f64,
    /// `‖f_m‖_{L^{n/α}} / (log m)^{α/n}`.
    pub norm_over_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub exponents: ExponentSet,
    pub settings: CounterexampleSettings,
    pub rho: f64,
    pub target_exponent: f64,
    pub fitted_exponent: f64,
    pub growth_ok: bool,
    pub maximal_stable: bool,
    /// Both `f_m` brackets stay within a factor 2 of their value at the smallest `m`.
    pub brackets_ok: bool,
    pub rows: Vec<CounterexampleRow>,
}

fn centered_cube(grid: Grid, side: i64) -> Result<Cube> {
    let lo = grid.side_cells() as i64 / 2 - side / 2;
    grid.cube([lo, if grid.dim() == 2 { lo } else { 0 }], side)
}

/// Operator ratios on `f_m` under the power weight at the doubling boundary.
pub fn counterexample_study(e: &ExponentSet, s: &CounterexampleSettings) -> Result<CounterexampleReport> {
    let n = e.n as f64;
    let rho = s.rho.unwrap_or((e.lambda - n) / e.q);
    let weight = PowerWeightSpec::new(rho, [0.5, 0.5]);
    let grid = Grid::new(e.n, s.level)?;
    let fine = Grid::new(e.n, s.level + 2)?;
    let w = weight.rasterize(grid)?;
    let wf = weight.rasterize(fine)?;
    let q = centered_cube(grid, s.side)?;
    let qf = centered_cube(fine, 4 * s.side)?;
    let rows: Result<Vec<CounterexampleRow>> = s
        .ms
        .iter()
        .map(|&m| {
            let f = counterexample_fm(m, &q, e.alpha)?;
            let ff = counterexample_fm(m, &qf, e.alpha)?;
            let nan = f64::NAN;
            let d = fm_diagnostics(m, &q, e.alpha)?;
            Ok(CounterexampleRow {
                m,
                log_m: (m as f64).ln(),
                integral_ratio: operator_ratio(OperatorTag::FractionalIntegral, &f, &w, e, s.fidelity)?.unwrap_or(nan),
                maximal_ratio: operator_ratio(OperatorTag::FractionalMaximal, &f, &w, e, s.fidelity)?.unwrap_or(nan),
                maximal_ratio_refined: operator_ratio(OperatorTag::FractionalMaximal, &ff, &wf, e, s.fidelity)?
                    .unwrap_or(nan),
                integral_min_over_log: d.integral_ratio,
                norm_over_log: d.norm_ratio,
            })
        })
        .collect();
    let rows = rows?;
    let logs: Vec<f64> = rows.iter().map(|r| r.log_m).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.integral_ratio).collect();
    let fitted_exponent = fit_log_slope(&logs, &ratios);
    let target_exponent = 1.0 - e.alpha / n;
    let within2 = |v: Vec<f64>| v.iter().all(|&x| x <= 2.0 * v[0] && x >= 0.5 * v[0]);
    let brackets_ok = !rows.is_empty()
        && within2(rows.iter().map(|r| r.integral_min_over_log).collect())
        && within2(rows.iter().map(|r| r.norm_over_log).collect());
    let maximal_stable =
        rows.iter().all(|r| (r.maximal_ratio_refined / r.maximal_ratio - 1.0).abs() < s.stability_change);
    Ok(CounterexampleReport {
        exponents: *e,
        settings: s.clone(),
        rho,
        target_exponent,
        fitted_exponent,
        growth_ok: (fitted_exponent - target_exponent).abs() <= s.slope_tolerance,
        maximal_stable,
        brackets_ok,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttainmentSettings {
    pub levels: Vec<usize>,
    /// Weights expected to attain their norm; `ρ = 0` is `w ≡ 1`.
    pub admissible: Vec<f64>,
    /// Weights with `qρ < λ - n`.
    pub singular: Vec<f64>,
    pub bound: f64,
    /// Required growth factor between consecutive levels for the singular weights.
    pub growth: f64,
    pub fidelity: Fidelity,
}

impl Default for AttainmentSettings {
    fn default() -> Self {
        Self {
            levels: vec![4, 6, 8, 10],
            admissible: vec![0.0, -0.08, 0.25, 0.5, 0.85],
            singular: vec![-0.5, -0.9],
            bound: 4.0,
            growth: 1.5,
            fidelity: Fidelity::Aligned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentRow {
    pub rho: f64,
    pub admissible: bool,
    pub level: usize,
    pub value: f64,
    pub witness: Cube,
    /// Ratio to the previous entry of `levels`.
    pub growth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentReport {
    pub exponents: ExponentSet,
    pub settings: AttainmentSettings,
    pub max_admissible: f64,
    pub bounded_ok: bool,
    pub min_singular_growth: f64,
    pub growth_ok: bool,
    pub rows: Vec<AttainmentRow>,
}

pub fn attainment_study(e: &ExponentSet, s: &AttainmentSettings) -> Result<AttainmentReport> {
    for &r in &s.singular {
        if !(e.q * r < e.lambda - e.n as f64) {
            return Err(Error::InvalidInput(format!("rho = {r} is not below the doubling boundary")));
        }
    }
    let jobs: Vec<(f64, bool, usize)> = s
        .admissible
        .iter()
        .map(|&r| (r, true))
        .chain(s.singular.iter().map(|&r| (r, false)))
        .flat_map(|(r, a)| s.levels.iter().map(move |&l| (r, a, l)))
        .collect();
    let vals: Result<Vec<(f64, Cube)>> = exec::map_slice(&jobs, |&(r, _, l)| {
        let w = PowerWeightSpec::new(r, [0.5, 0.5]).rasterize(Grid::new(e.n, l)?)?;
        let sup = norm_attainment_sup(&w, e, s.fidelity)?;
        Ok((sup.value, sup.cube))
    })
    .into_iter()
    .collect();
    let vals = vals?;
    let mut rows: Vec<AttainmentRow> = Vec::with_capacity(jobs.len());
    for (&(rho, admissible, level), (value, witness)) in jobs.iter().zip(vals) {
        let growth = rows.last().filter(|p| p.rho == rho && p.admissible == admissible).map(|p| value / p.value);
        rows.push(AttainmentRow { rho, admissible, level, value, witness, growth });
    }
    let max_admissible = rows.iter().filter(|r| r.admissible).map(|r| r.value).fold(0.0, f64::max);
    let min_singular_growth =
        rows.iter().filter(|r| !r.admissible).filter_map(|r| r.growth).fold(f64::INFINITY, f64::min);
    Ok(AttainmentReport {
        exponents: *e,
        settings: s.clone(),
        max_admissible,
        bounded_ok: max_admissible <= s.bound,
        min_singular_growth,
        growth_ok: min_singular_growth > s.growth,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniversalSettings {
    pub seed: u64,
    pub instances: usize,
    pub level: usize,
    pub dim: usize,
    pub exponents: Vec<f64>,
    /// `λ/n` of the dyadic weighted Morrey norm.
    pub lambda_fraction: f64,
}

impl Default for UniversalSettings {
    fn default() -> Self {
        Self { seed: 7, instances: 50, level: 6, dim: 1, exponents: vec![1.5, 2.0, 4.0], lambda_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalRow {
    pub instance: usize,
    pub p: f64,
    pub lambda: f64,
    pub lp_ratio: f64,
    pub lp_bound: f64,
    pub morrey_ratio: f64,
    pub morrey_bound: f64,
    pub local_ratio: f64,
    pub far_ratio: f64,
    pub identity_error: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalReport {
    pub settings: UniversalSettings,
    pub violations: usize,
    pub rows: Vec<UniversalRow>,
}

pub fn universal_suite(s: &UniversalSettings) -> Result<UniversalReport> {
    if s.exponents.is_empty() {
        return Err(Error::InvalidInput("no exponents".into()));
    }
    let grid = Grid::new(s.dim, s.level)?;
    let lambda = s.lambda_fraction * s.dim as f64;
    let rows: Result<Vec<UniversalRow>> = exec::map_range(s.instances, |i| {
        let mut rng = rng_for(s.seed, i as u64);
        let f = spiky_field(grid, &mut rng);
        let w = random_weight(grid, 2.0, &mut rng);
        let p = s.exponents[i % s.exponents.len()];
        let c = universal_check(&f, &w, p, lambda)?;
        Ok(UniversalRow {
            instance: i,
            p,
            lambda,
            lp_ratio: c.lp_ratio,
            lp_bound: conjugate(p),
            morrey_ratio: c.morrey_ratio,
            morrey_bound: conjugate(p) + 1.0,
            local_ratio: c.local_ratio,
            far_ratio: c.far_ratio,
            identity_error: c.identity_error,
            ok: c.ok,
        })
    })
    .into_iter()
    .collect();
    let rows = rows?;
    Ok(UniversalReport { settings: s.clone(), violations: rows.iter().filter(|r| !r.ok).count(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InequalitySettings {
    pub seed: u64,
    pub triples: usize,
    pub lattice_functions: usize,
    pub level: usize,
    /// `(p₁, p₂, p₀)` with `p₀ ≥ p₁ ≥ p₂ ≥ 1`.
    pub lattice_exponents: Vec<[f64; 3]>,
    pub lambda_fraction: f64,
}

impl Default for InequalitySettings {
    fn default() -> Self {
        Self {
            seed: 11,
            triples: 500,
            lattice_functions: 200,
            level: 4,
            lattice_exponents: vec![[2.0, 1.5, 4.0], [3.0, 1.0, 6.0], [1.5, 1.2, 2.0]],
            lambda_fraction: 0.5,
        }
    }
}

/// One `(f, g, b)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRow {
    pub instance: usize,
    pub p: f64,
    pub block: usize,
    pub holder_lhs: f64,
    pub holder_rhs: f64,
    pub holder_ok: bool,
    /// `∫ f|g| / ‖f‖_{L^{p,λ}}` on the dyadic family.
    pub pairing: f64,
    pub dual_value: f64,
    pub dual_upper: f64,
    pub sandwich_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRow {
    pub instance: usize,
    pub exponents: [f64; 3],
    pub larger: f64,
    pub smaller: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub settings: InequalitySettings,
    pub holder_violations: usize,
    pub sandwich_violations: usize,
    pub lattice_violations: usize,
    pub triples: Vec<TripleRow>,
    pub lattice: Vec<LatticeRow>,
}

/// Hölder against verified blocks, the duality sandwich
/// `∫f|g|/‖f‖ ≤ dual value ≤ dual bound` and Morrey lattice monotonicity.
pub fn inequality_suite(s: &InequalitySettings) -> Result<InequalityReport> {
    let grid = Grid::new(1, s.level)?;
    let lambda = s.lambda_fraction;
    let mut blocks = default_battery(grid, lambda)?;
    blocks.push(make_block(grid, &BlockShape::Uniform, lambda)?);
    let triples: Result<Vec<TripleRow>> = exec::map_range(s.triples, |i| {
        let mut rng = rng_for(s.seed, i as u64);
        let p = rng.gen_range(1.2..5.0);
        let f = random_weight(grid, 1.5, &mut rng).map(|v| if rng_bit(v) { v } else { 0.0 });
        let g = random_weight(grid, 1.5, &mut rng);
        let block = rng.gen_range(0..blocks.len());
        let b = &blocks[block].b;
        let h = holder_morrey_check(&f, &g, b, p)?;
        let pairing = {
            let nf = lpl_norm(&f, p, lambda, Fidelity::Dyadic)?.value;
            if nf > 0.0 { f.dot(&g)? / nf } else { 0.0 }
        };
        let dual = h_norm_dual(&g, p, lambda, 1e-6, Fidelity::Dyadic)?;
        let tol = 1.0 + EXACT_SLACK;
        let sandwich_ok = pairing <= dual.upper * tol && dual.value <= dual.upper * tol;
        Ok(TripleRow {
            instance: i,
            p,
            block,
            holder_lhs: h.lhs,
            holder_rhs: h.rhs,
            holder_ok: h.ok,
            pairing,
            dual_value: dual.value,
            dual_upper: dual.upper,
            sandwich_ok,
        })
    })
    .into_iter()
    .collect();
    let triples = triples?;
    let lattice_grid = Grid::new(1, s.level + 2)?;
    let jobs: Vec<(usize, [f64; 3])> = s
        .lattice_exponents
        .iter()
        .flat_map(|&t| (0..s.lattice_functions).map(move |i| (i, t)))
        .collect();
    for &[p1, p2, p0] in &s.lattice_exponents {
        if !(p0 >= p1 && p1 >= p2 && p2 >= 1.0) {
            return Err(Error::InvalidInput(format!("need p0 >= p1 >= p2 >= 1, got ({p1}, {p2}, {p0})")));
        }
    }
    let lattice: Result<Vec<LatticeRow>> = exec::map_slice(&jobs, |&(i, t)| {
        let mut rng = rng_for(s.seed ^ 0x5eed, i as u64);
        let f = random_weight(lattice_grid, 3.0, &mut rng).map(|v| if rng_bit(v) { v } else { -v });
        let larger = morrey_norm(&f, t[0], t[2], Fidelity::Aligned)?.value;
        let smaller = morrey_norm(&f, t[1], t[2], Fidelity::Aligned)?.value;
        Ok(LatticeRow { instance: i, exponents: t, larger, smaller, ok: smaller <= larger * (1.0 + EXACT_SLACK) })
    })
    .into_iter()
    .collect();
    let lattice = lattice?;
    Ok(InequalityReport {
        settings: s.clone(),
        holder_violations: triples.iter().filter(|r| !r.holder_ok).count(),
        sandwich_violations: triples.iter().filter(|r| !r.sandwich_ok).count(),
        lattice_violations: lattice.iter().filter(|r| !r.ok).count(),
        triples,
        lattice,
    })
}

/// A deterministic coin from the low mantissa bits of a random value.
fn rng_bit(v: f64) -> bool {
    v.to_bits() & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuzz_small_is_deterministic_and_clean() {
        let s = FuzzSettings { instances: 3, level_1d: 6, level_2d: 3, ..Default::default() };
        let a = sparse_fuzz(&s).unwrap();
        let b = sparse_fuzz(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.families, 12);
        assert_eq!(a.sparse_failures + a.stopping_failures + a.maximal_domination_failures, 0);
        assert_eq!(a.integral_proven_failures, 0);
    }

    #[test]
    fn spiky_field_is_nonnegative_with_spikes() {
        let g = Grid::new(1, 6).unwrap();
        let f = spiky_field(g, &mut rng_for(3, 0));
        assert!(f.is_nonnegative());
        assert!(f.max_value() >= 100.0);
    }

    #[test]
    fn attainment_rejects_admissible_singular_list() {
        let e = ExponentSet::coupled(1, 2.0, 4.0, 0.125).unwrap();
        let s = AttainmentSettings { singular: vec![0.0], ..Default::default() };
        assert!(attainment_study(&e, &s).is_err());
    }

    #[test]
    fn small_inequality_suite_passes() {
        let s = InequalitySettings { triples: 10, lattice_functions: 5, level: 3, ..Default::default() };
        let r = inequality_suite(&s).unwrap();
        assert_eq!(r.holder_violations + r.sandwich_violations + r.lattice_violations, 0);
        assert_eq!(r.lattice.len(), 15);
    }
}
