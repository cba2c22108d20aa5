//! Computable forms of the weight conditions: the two-factor quantity with
//! its block-space interval, the local-block checks, the doubling condition,
//! power-weight predicates, norm attainment, operator-norm estimates, the
//! `f_m` family and refinement-stability classification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::content::{h_norm_dual, h_norm_upper, make_block, BlockCertificate, BlockShape};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{dyadic_cubes, Cube, Fidelity, Grid, GridFunction, Integrator};
use crate::norms::{conjugate, dyadic_weighted_morrey_norm, lpl_norm, sup_over, weighted_lp_norm, ExponentSet, Sup};
use crate::operators::{dyadic_weighted_maximal, fractional_integral, fractional_maximal, OperatorTag};
use crate::weights::{ap_constant, PowerWeightSpec};

/// Relative slack for boundary equalities.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Relative slack for exact inequalities.
pub const SLACK: f64 = 1e-9;

/// `sup_{R ⊆ Q} ℓ(R)^{-λ} ∫_R u` for every cube `Q` of a family, by dynamic
/// programming over side lengths.
///
/// Aligned: a proper subcube of `Q` lies in one of the corner subcubes of side
/// `ℓ(Q) - 1`. Dyadic: it lies in a child.
#[derive(Debug, Clone)]
pub struct SubcubeSup {
    grid: Grid,
    fidelity: Fidelity,
    /// Aligned: index `side - 1`; dyadic: index = level.
    layers: Vec<Vec<f64>>,
}

impl SubcubeSup {
    pub fn new(u: &GridFunction, lambda: f64, fidelity: Fidelity) -> Result<Self> {
        let grid = u.grid();
        let ig = Integrator::new(u);
        let n = grid.side_cells();
        let dim = grid.dim();
        let raw = |q: &Cube| ig.integral(q) * q.side_length().powf(-lambda);
        let mut layers: Vec<Vec<f64>> = Vec::new();
        match fidelity {
            Fidelity::Aligned => {
                for s in 1..=n {
                    let c = n - s + 1;
                    let count = if dim == 1 { c } else { c * c };
                    let prev = layers.last();
                    let pc = c + 1;
                    let layer = exec::map_range(count, |k| {
                        let (i, j) = if dim == 1 { (k, 0) } else { (k / c, k % c) };
                        let q = Cube::lattice(grid, [i as i64, j as i64], s as i64);
                        let mut v = raw(&q);
                        if let Some(prev) = prev {
                            for di in 0..2 {
                                for dj in 0..(if dim == 1 { 1 } else { 2 }) {
                                    let idx = if dim == 1 { i + di } else { (i + di) * pc + j + dj };
                                    v = v.max(prev[idx]);
                                }
                            }
                        }
                        v
                    });
                    layers.push(layer);
                }
            }
            Fidelity::Dyadic => {
                let l = grid.level();
                let mut by_level: Vec<Vec<f64>> = vec![Vec::new(); l + 1];
                for k in (0..=l).rev() {
                    let per = 1usize << k;
                    let count = if dim == 1 { per } else { per * per };
                    let below = if k < l { Some(&by_level[k + 1]) } else { None };
                    let layer = exec::map_range(count, |node| {
                        let (a, b) = if dim == 1 { (node, 0) } else { (node / per, node % per) };
                        let q = grid.dyadic(k, [a, b]).expect("in range");
                        let mut v = raw(&q);
                        if let Some(below) = below {
                            let cp = per * 2;
                            for da in 0..2 {
                                for db in 0..(if dim == 1 { 1 } else { 2 }) {
                                    let idx = if dim == 1 { 2 * a + da } else { (2 * a + da) * cp + 2 * b + db };
                                    v = v.max(below[idx]);
                                }
                            }
                        }
                        v
                    });
                    by_level[k] = layer;
                }
                layers = by_level;
            }
            Fidelity::Shifted => {
                return Err(Error::InvalidInput("subcube tables support the dyadic and aligned families".into()));
            }
        }
        Ok(Self { grid, fidelity, layers })
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    /// Value at a cube of the family lying inside the root.
    pub fn get(&self, q: &Cube) -> Option<f64> {
        if q.grid() != self.grid || !q.within_root() {
            return None;
        }
        let dim = self.grid.dim();
        match self.fidelity {
            Fidelity::Aligned => {
                let s = q.side_cells() as usize;
                let c = self.grid.side_cells() - s + 1;
                let lo = q.lo();
                let idx = if dim == 1 { lo[0] as usize } else { lo[0] as usize * c + lo[1] as usize };
                self.layers.get(s - 1).and_then(|l| l.get(idx)).copied()
            }
            _ => {
                let k = q.dyadic_level()?;
                let c = q.dyadic_coords()?;
                let idx = if dim == 1 { c[0] } else { c[0] * (1 << k) + c[1] };
                Some(self.layers[k][idx])
            }
        }
    }

    /// Every cube of the family.
    pub fn cubes(&self) -> Vec<Cube> {
        let n = self.grid.side_cells() as i64;
        let dim = self.grid.dim();
        match self.fidelity {
            Fidelity::Aligned => {
                let mut out = Vec::new();
                for s in 1..=n {
                    for i in 0..=(n - s) {
                        for j in 0..(if dim == 1 { 1 } else { n - s + 1 }) {
                            out.push(Cube::lattice(self.grid, [i, j], s));
                        }
                    }
                }
                out
            }
            _ => dyadic_cubes(self.grid, None).expect("root is dyadic"),
        }
    }
}

/// `‖w 1_Q‖_{L^{q,λ}}` for every cube of a family.
#[derive(Debug, Clone)]
pub struct LocalNormTable {
    table: SubcubeSup,
    q: f64,
}

impl LocalNormTable {
    pub fn new(w: &GridFunction, q: f64, lambda: f64, fidelity: Fidelity) -> Result<Self> {
        w.check_weight()?;
        Ok(Self { table: SubcubeSup::new(&w.map(|v| v.powf(q)), lambda, fidelity)?, q })
    }

    pub fn norm(&self, cube: &Cube) -> Option<f64> {
        self.table.get(cube).map(|v| v.powf(1.0 / self.q))
    }

    pub fn fidelity(&self) -> Fidelity {
        self.table.fidelity()
    }

    pub fn cubes(&self) -> Vec<Cube> {
        self.table.cubes()
    }
}

/// Power exponents used for block candidates in the block-space upper bound:
/// `{jλ/8 : j = 1..7} ∪ {λ/2, λ, (n+λ)/2}`, restricted to `(0, n)`.
pub fn extended_power_exponents(n: usize, lambda: f64) -> Vec<f64> {
    let nf = n as f64;
    let mut s: Vec<f64> = (1..8).map(|j| j as f64 * lambda / 8.0).collect();
    s.extend([lambda, (nf + lambda) / 2.0]);
    s.retain(|&x| x > 0.0 && x < nf);
    s.sort_by(|a, b| a.total_cmp(b));
    s.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    s
}

/// Verified block candidates for every subgrid depth, built once and shared.
#[derive(Debug, Clone)]
pub struct BlockBattery {
    dim: usize,
    lambda: f64,
    levels: Vec<Vec<BlockCertificate>>,
}

impl BlockBattery {
    /// Dyadic indicator blocks and truncated powers centered at lattice vertices
    /// for depths `0..=max_level`.
    pub fn new(dim: usize, max_level: usize, lambda: f64) -> Result<Self> {
        let exps = extended_power_exponents(dim, lambda);
        let mut levels = Vec::with_capacity(max_level + 1);
        for l in 0..=max_level {
            let grid = Grid::new(dim, l)?;
            let mut shapes: Vec<BlockShape> =
                dyadic_cubes(grid, None)?.into_iter().map(|cube| BlockShape::Indicator { cube }).collect();
            let m = grid.side_cells();
            let h = grid.cell_side();
            let ys = if dim == 1 { 1 } else { m + 1 };
            for &s in &exps {
                for i in 0..=m {
                    for j in 0..ys {
                        let center = [i as f64 * h, if dim == 1 { 0.0 } else { j as f64 * h }];
                        shapes.push(BlockShape::TruncatedPower { center, s, eps: h / 2.0, support: None });
                    }
                }
            }
            let built: Result<Vec<_>> = exec::map_slice(&shapes, |sh| make_block(grid, sh, lambda)).into_iter().collect();
            levels.push(built?);
        }
        Ok(Self { dim, lambda, levels })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn level(&self, l: usize) -> Result<&[BlockCertificate]> {
        self.levels
            .get(l)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("battery has no depth {l} (dimension {})", self.dim)))
    }
}

/// Block-space norm of a function supported in a dyadic cube, as a certified interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HInterval {
    /// Duality solver value over the dyadic family.
    pub lower: f64,
    /// Best battery candidate.
    pub upper: f64,
}

/// `‖g 1_Q‖_{H^{p',λ}}` bracketed on the subgrid of `Q`, rescaled by `ℓ(Q)^{n/p' + λ/p}`.
pub fn h_interval_in(g: &GridFunction, q: &Cube, p: f64, lambda: f64, battery: &BlockBattery) -> Result<HInterval> {
    let local = g.zoom(q)?;
    let scale = q.side_length().powf(q.dim() as f64 / conjugate(p) + lambda / p);
    let dual = h_norm_dual(&local, p, lambda, 1e-9, Fidelity::Dyadic)?;
    let upper = h_norm_upper(&local, conjugate(p), lambda, battery.level(local.grid().level())?)?;
    Ok(HInterval { lower: dual.value * scale, upper: upper.value * scale })
}

/// The quantity `|Q|^{α/n-1} ‖w 1_Q‖_{L^{q,λ}} ‖w^{-1} 1_Q‖_{H^{p',λ}}` at one cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BQuantity {
    pub cube: Cube,
    pub lebesgue_factor: f64,
    pub h: HInterval,
    pub lower: f64,
    pub upper: f64,
}

pub fn condition_b_quantity(
    w: &GridFunction,
    e: &ExponentSet,
    q: &Cube,
    fidelity: Fidelity,
    battery: &BlockBattery,
) -> Result<BQuantity> {
    w.check_weight()?;
    // Cubes inside Q suffice for the norm of w 1_Q.
    let wq = w.map(|v| v.powf(e.q)).restrict(q);
    let norm = crate::norms::lpl_norm_in(&wq, 1.0, e.lambda, fidelity, Some(*q))?.value.powf(1.0 / e.q);
    b_from_parts(w, e, q, norm, battery)
}

fn b_from_parts(w: &GridFunction, e: &ExponentSet, q: &Cube, norm: f64, battery: &BlockBattery) -> Result<BQuantity> {
    let n = e.n as f64;
    let lebesgue_factor = q.volume().powf(e.alpha / n - 1.0) * norm;
    let inv = w.map(|v| 1.0 / v);
    let h = h_interval_in(&inv, q, e.p, e.lambda, battery)?;
    Ok(BQuantity { cube: *q, lebesgue_factor, h, lower: lebesgue_factor * h.lower, upper: lebesgue_factor * h.upper })
}

/// Supremum of both ends of the interval over every dyadic cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BSweep {
    pub lower: Sup,
    pub upper: Sup,
}

pub fn condition_b_sup(w: &GridFunction, e: &ExponentSet, fidelity: Fidelity, battery: &BlockBattery) -> Result<BSweep> {
    let table = LocalNormTable::new(w, e.q, e.lambda, fidelity)?;
    let cubes = dyadic_cubes(w.grid(), None)?;
    let vals: Result<Vec<BQuantity>> = exec::map_slice(&cubes, |q| {
        let norm = table.norm(q).ok_or_else(|| Error::Domain("cube outside table".into()))?;
        b_from_parts(w, e, q, norm, battery)
    })
    .into_iter()
    .collect();
    let vals = vals?;
    let pick = |f: &dyn Fn(&BQuantity) -> f64| {
        let mut best = Sup { value: f64::NEG_INFINITY, cube: cubes[0] };
        for v in &vals {
            if f(v) > best.value {
                best = Sup { value: f(v), cube: v.cube };
            }
        }
        best
    };
    Ok(BSweep { lower: pick(&|v| v.lower), upper: pick(&|v| v.upper) })
}

/// Values of the local-block conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionC {
    pub block_average: Sup,
    pub block_ap: Sup,
    pub ok: bool,
}

/// `block_average = sup_{Q ⊆ Q₀} (avg_Q w^q)^{1/q} (avg_Q (w b^{1/p})^{-p'})^{1/p'} / ℓ(Q₀)^{λ/p}`
/// and `block_ap = [w b^{1/p}]_{A_s}`; `ok` when both are at most `c3`.
pub fn condition_c_check(
    w: &GridFunction,
    b: &BlockCertificate,
    e: &ExponentSet,
    q0: &Cube,
    s: f64,
    c3: f64,
    fidelity: Fidelity,
) -> Result<ConditionC> {
    w.check_weight()?;
    w.same_grid(&b.b)?;
    let wb = w.zip_map(&b.b, |wv, bv| wv * bv.powf(1.0 / e.p))?;
    let pc = e.p_conj();
    let up = Integrator::new(&w.map(|v| v.powf(e.q)));
    let down = Integrator::new(&wb.map(|v| if v > 0.0 { v.powf(-pc) } else { f64::INFINITY }));
    let scale = q0.side_length().powf(-e.lambda / e.p);
    let block_average = sup_over(w.grid(), fidelity, Some(*q0), |q| {
        let v = q.volume();
        (up.integral(q) / v).powf(1.0 / e.q) * (down.integral(q) / v).powf(1.0 / pc) * scale
    })?;
    let block_ap = if wb.is_positive() {
        ap_constant(&wb, s, fidelity)?
    } else {
        Sup { value: f64::INFINITY, cube: *q0 }
    };
    let ok = block_average.value <= c3 && block_ap.value <= c3;
    Ok(ConditionC { block_average, block_ap, ok })
}

/// Outcome of the doubling test at one dilation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Doubling {
    pub kappa: f64,
    pub ok: bool,
    /// Cube attaining the smallest ratio.
    pub worst_cube: Cube,
    /// `min_Q ‖w 1_{κQ}‖ / ‖w 1_Q‖` over cubes with `κQ` inside the root.
    pub worst_ratio: f64,
    pub admissible: usize,
}

/// `2‖w 1_Q‖_{L^{q,λ}} ≤ ‖w 1_{κQ}‖_{L^{q,λ}}` over the cubes of `table`.
pub fn doubling_with(table: &LocalNormTable, kappa: f64) -> Result<Doubling> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("need kappa > 1, got {kappa}")));
    }
    let cubes = table.cubes();
    let ratios = exec::map_slice(&cubes, |q| {
        let big = q.dilate(kappa).ok()?;
        if big.is_clipped() {
            return None;
        }
        // Dilates of dyadic cubes are aligned but generally not dyadic.
        let outer = table.norm(&big)?;
        Some(outer / table.norm(q)?)
    });
    let mut best: Option<(usize, f64)> = None;
    let mut admissible = 0;
    for (i, r) in ratios.iter().enumerate() {
        if let Some(r) = *r {
            admissible += 1;
            if best.map_or(true, |(_, b)| r < b) {
                best = Some((i, r));
            }
        }
    }
    let (i, worst_ratio) = best.ok_or(Error::EmptyFamily)?;
    Ok(Doubling { kappa, ok: worst_ratio >= 2.0 * (1.0 - SLACK), worst_cube: cubes[i], worst_ratio, admissible })
}

/// The doubling test over the aligned family.
pub fn doubling_condition(w: &GridFunction, q: f64, lambda: f64, kappa: f64) -> Result<Doubling> {
    let table = LocalNormTable::new(w, q, lambda, Fidelity::Aligned)?;
    doubling_with(&table, kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSearch {
    /// Smallest passing `κ` on the grid `2^{j/4}`, if any.
    pub kappa: Option<f64>,
    pub kappa_max: f64,
    pub tried: Vec<Doubling>,
}

/// Tries `κ = 2^{j/4}` for `j = 1..=4 log₂ N` and stops at the first pass.
pub fn kappa_search(table: &LocalNormTable, grid: Grid) -> Result<KappaSearch> {
    let jmax = 4 * grid.level();
    let kappa_max = 2f64.powf(jmax as f64 / 4.0);
    let mut tried = Vec::new();
    for j in 1..=jmax {
        let kappa = 2f64.powf(j as f64 / 4.0);
        match doubling_with(table, kappa) {
            Ok(d) => {
                let ok = d.ok;
                tried.push(d);
                if ok {
                    return Ok(KappaSearch { kappa: Some(kappa), kappa_max, tried });
                }
            }
            Err(Error::EmptyFamily) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(KappaSearch { kappa: None, kappa_max, tried })
}

/// Analytic admissibility of `w_ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPredicate {
    pub rho: f64,
    pub admissible: bool,
    /// `qρ - (λ - n)`; nonnegative (positive when strict) for admissibility.
    pub left_margin: f64,
    /// `n(p-1) + λ - pρ`; positive for admissibility.
    pub right_margin: f64,
    pub left_boundary: bool,
    pub right_boundary: bool,
    pub strict_left: bool,
}

fn power_predicate(rho: f64, e: &ExponentSet, strict_left: bool) -> PowerPredicate {
    let n = e.n as f64;
    let left_margin = e.q * rho - (e.lambda - n);
    let right_margin = n * (e.p - 1.0) + e.lambda - e.p * rho;
    let tol = |scale: f64| BOUNDARY_TOL * scale.max(1.0);
    let left_boundary = left_margin.abs() <= tol((e.q * rho).abs() + n);
    let right_boundary = right_margin.abs() <= tol((e.p * rho).abs() + n * e.p);
    let left_ok = if strict_left { left_margin > 0.0 && !left_boundary } else { left_margin > 0.0 || left_boundary };
    let right_ok = right_margin > 0.0 && !right_boundary;
    PowerPredicate { rho, admissible: left_ok && right_ok, left_margin, right_margin, left_boundary, right_boundary, strict_left }
}

/// `-n + λ ≤ qρ` and `pρ < n(p-1) + λ`.
pub fn power_threshold_maximal(rho: f64, e: &ExponentSet) -> PowerPredicate {
    power_predicate(rho, e, false)
}

/// `-n + λ < qρ` and `pρ < n(p-1) + λ`.
pub fn power_threshold_integral(rho: f64, e: &ExponentSet) -> PowerPredicate {
    power_predicate(rho, e, true)
}

/// `‖w 1_Q‖_{L^{q,λ}} / (|Q|^{1/q₀} (avg_Q w^q)^{1/q})`; at least one.
pub fn norm_attainment_ratio(w: &GridFunction, e: &ExponentSet, q: &Cube, fidelity: Fidelity) -> Result<f64> {
    let wq = w.map(|v| v.powf(e.q)).restrict(q);
    let norm = crate::norms::lpl_norm_in(&wq, 1.0, e.lambda, fidelity, Some(*q))?.value.powf(1.0 / e.q);
    Ok(attainment(norm, w, e, q))
}

fn attainment(norm: f64, w: &GridFunction, e: &ExponentSet, q: &Cube) -> f64 {
    let avg = w.map(|v| v.powf(e.q)).integrate_extent(q) / q.volume();
    norm / (q.volume().powf(1.0 / e.q0) * avg.powf(1.0 / e.q))
}

/// Largest attainment ratio over every dyadic cube.
pub fn norm_attainment_sup(w: &GridFunction, e: &ExponentSet, fidelity: Fidelity) -> Result<Sup> {
    let table = LocalNormTable::new(w, e.q, e.lambda, fidelity)?;
    let wq = Integrator::new(&w.map(|v| v.powf(e.q)));
    sup_over(w.grid(), Fidelity::Dyadic, None, |q| {
        let norm = table.norm(q).unwrap_or(f64::NAN);
        let avg = wq.integral(q) / q.volume();
        norm / (q.volume().powf(1.0 / e.q0) * avg.powf(1.0 / e.q))
    })
}

/// One test function of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub name: String,
    pub f: GridFunction,
}

/// Nonnegative bounded test functions for operator-norm estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCorpus {
    pub seed: u64,
    pub items: Vec<CorpusItem>,
}

/// Counts of each kind of test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub indicators: usize,
    pub point_masses: usize,
    pub power_bumps: usize,
    pub random_fields: usize,
    /// `f_m` for `m = 4^1, 4^2, ...` around a small cube at the center, while `mQ` fits.
    pub fm: usize,
    pub fm_alpha: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { indicators: 8, point_masses: 4, power_bumps: 6, random_fields: 6, fm: 0, fm_alpha: 0.5 }
    }
}

impl TestCorpus {
    pub fn generate(grid: Grid, seed: u64, spec: &CorpusSpec) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items = Vec::new();
        let l = grid.level();
        let dim = grid.dim();
        let random_dyadic = |rng: &mut ChaCha8Rng| {
            let k = rng.gen_range(0..=l);
            let per = 1usize << k;
            let c = [rng.gen_range(0..per), if dim == 2 { rng.gen_range(0..per) } else { 0 }];
            grid.dyadic(k, c).expect("in range")
        };
        for _ in 0..spec.indicators {
            let q = random_dyadic(&mut rng);
            items.push(CorpusItem { name: format!("indicator{:?}+{}", q.lo(), q.side_cells()), f: GridFunction::indicator(&q) });
        }
        for _ in 0..spec.point_masses {
            let c = rng.gen_range(0..grid.cell_count());
            let mut v = vec![0.0; grid.cell_count()];
            v[c] = 1.0;
            items.push(CorpusItem { name: format!("point{c}"), f: GridFunction::new(grid, v)? });
        }
        for _ in 0..spec.power_bumps {
            let q = random_dyadic(&mut rng);
            let s = rng.gen_range(0.05..0.95) * dim as f64;
            let x0 = q.center();
            let h = grid.cell_side();
            let f = GridFunction::from_centers(grid, |x| {
                let r = ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt();
                r.max(h / 2.0).powf(-s)
            })
            .restrict(&q);
            items.push(CorpusItem { name: format!("bump{:?}+{}^{s:.3}", q.lo(), q.side_cells()), f });
        }
        for i in 0..spec.random_fields {
            let v = (0..grid.cell_count()).map(|_| 10f64.powf(rng.gen_range(-3.0..3.0))).collect();
            items.push(CorpusItem { name: format!("field{i}"), f: GridFunction::new(grid, v)? });
        }
        let side = 4.min(grid.side_cells() as i64);
        let lo = grid.side_cells() as i64 / 2 - side / 2;
        let q = grid.cube([lo, if dim == 2 { lo } else { 0 }], side)?;
        for j in 1..=spec.fm {
            let m = 4usize.pow(j as u32);
            match counterexample_fm(m, &q, spec.fm_alpha) {
                Ok(f) => items.push(CorpusItem { name: format!("fm{m}"), f }),
                Err(Error::Domain(_)) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(Self { seed, items })
    }
}

/// Empirical `sup_f ‖(Tf)w‖_{L^{q,λ}} / ‖f w‖_{L^{p,λ}}`: a lower bound for the operator norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub tag: OperatorTag,
    pub value: f64,
    pub argmax: String,
    /// `None` for excluded items.
    pub ratios: Vec<Option<f64>>,
    pub lower_bound: bool,
}

pub fn operator_ratio(tag: OperatorTag, f: &GridFunction, w: &GridFunction, e: &ExponentSet, fidelity: Fidelity) -> Result<Option<f64>> {
    let tf = match tag {
        OperatorTag::FractionalMaximal => fractional_maximal(f, e.alpha, fidelity)?.result,
        OperatorTag::FractionalIntegral => fractional_integral(f, e.alpha)?.result,
        _ => return Err(Error::InvalidInput(format!("no norm estimate for {tag:?}"))),
    };
    let num = lpl_norm(&tf.mul(w)?, e.q, e.lambda, fidelity)?.value;
    let den = lpl_norm(&f.mul(w)?, e.p, e.lambda, fidelity)?.value;
    Ok(if den > 0.0 { Some(num / den) } else { None })
}

pub fn operator_norm_estimate(
    tag: OperatorTag,
    w: &GridFunction,
    e: &ExponentSet,
    corpus: &TestCorpus,
    fidelity: Fidelity,
) -> Result<NormEstimate> {
    w.check_weight()?;
    let ratios: Result<Vec<Option<f64>>> =
        exec::map_slice(&corpus.items, |it| operator_ratio(tag, &it.f, w, e, fidelity)).into_iter().collect();
    let ratios = ratios?;
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in ratios.iter().enumerate() {
        if let Some(r) = *r {
            if best.map_or(true, |(_, b)| r > b) {
                best = Some((i, r));
            }
        }
    }
    let (i, value) = best.ok_or(Error::EmptyFamily)?;
    Ok(NormEstimate { tag, value, argmax: corpus.items[i].name.clone(), ratios, lower_bound: true })
}

/// `f_m = 1_{mQ∖2Q} |y - c(Q)|^{-α}`, with `mQ` clipped to the root.
pub fn counterexample_fm(m: usize, q: &Cube, alpha: f64) -> Result<GridFunction> {
    if m <= 2 {
        return Err(Error::InvalidInput(format!("need m > 2, got {m}")));
    }
    let grid = q.grid();
    if !q.within_root() {
        return Err(Error::Domain("base cube must lie in the root".into()));
    }
    let outer = q.dilate(m as f64)?;
    if outer.side_cells() as usize > 2 * grid.side_cells() {
        return Err(Error::Domain(format!("{m}Q is too large for the grid")));
    }
    let inner = q.dilate(2.0)?;
    let c = q.center();
    let mut v = vec![0.0; grid.cell_count()];
    for i in outer.cells() {
        if inner.contains_cell(grid.coords(i)) {
            continue;
        }
        let x = grid.cell_center(i);
        let r = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
        v[i] = r.powf(-alpha);
    }
    GridFunction::new(grid, v)
}

/// Diagnostics of `f_m` against its expected growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmDiagnostics {
    pub m: usize,
    pub log_m: f64,
    /// `min_{x ∈ Q} I_α f_m(x)`.
    pub integral_min: f64,
    pub integral_ratio: f64,
    /// `‖f_m‖_{L^{n/α}}`.
    pub lebesgue_norm: f64,
    pub norm_ratio: f64,
    /// `∫_{mQ∖2Q} |y - c|^{-n} dy` in closed form, for an unclipped `mQ`.
    pub radial_closed_form: Option<f64>,
    /// The same integral by cell summation.
    pub radial_cells: f64,
}

pub fn fm_diagnostics(m: usize, q: &Cube, alpha: f64) -> Result<FmDiagnostics> {
    let f = counterexample_fm(m, q, alpha)?;
    let n = q.dim() as f64;
    let i = fractional_integral(&f, alpha)?.result;
    let integral_min = q.cells().map(|c| i.values()[c]).fold(f64::INFINITY, f64::min);
    let log_m = (m as f64).ln();
    let radial_cells = f.abs_pow(n / alpha).total();
    let lebesgue_norm = radial_cells.powf(alpha / n);
    let outer = q.dilate(m as f64)?;
    let radial_closed_form = if outer.is_clipped() {
        None
    } else if q.dim() == 1 {
        Some(2.0 * (m as f64 / 2.0).ln())
    } else {
        // ∫ over a square annulus of |y|^{-2}: 4 × ∫_{-π/4}^{π/4} ∫_{r₀/cos θ}^{r₁/cos θ} dr/r dθ.
        Some(2.0 * std::f64::consts::PI * (m as f64 / 2.0).ln())
    };
    Ok(FmDiagnostics {
        m,
        log_m,
        integral_min,
        integral_ratio: integral_min / log_m,
        lebesgue_norm,
        norm_ratio: lebesgue_norm / log_m.powf(alpha / n),
        radial_closed_form,
        radial_cells,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Refinement behaviour of a quantity sampled at `L, L+2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Finite,
    BlowUp,
    Undetermined,
}

/// How a refinement series is classified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StabilityRule {
    /// Finite if the last relative change is below `finite_change`; blow-up if
    /// the last two relative increases both exceed `blowup_growth`.
    Threshold { finite_change: f64, blowup_growth: f64 },
    /// Classifies by the ratio `r = d₂/d₁` of the last two increments.
    /// Convergent series have `r < 1` (geometric tails), logarithmic growth has
    /// `r ≈ 1` and power growth `r > 1`. A last relative change below
    /// `negligible` is finite outright.
    IncrementRatio { max_ratio: f64, negligible: f64 },
}

impl Default for StabilityRule {
    fn default() -> Self {
        StabilityRule::Threshold { finite_change: 0.10, blowup_growth: 0.50 }
    }
}

pub fn classify(values: &[f64], rule: StabilityRule) -> Stability {
    let k = values.len();
    if k < 2 || values.iter().any(|v| !v.is_finite()) {
        return if values.iter().any(|v| v.is_infinite()) { Stability::BlowUp } else { Stability::Undetermined };
    }
    let rel = |i: usize| values[i] / values[i - 1] - 1.0;
    match rule {
        StabilityRule::Threshold { finite_change, blowup_growth } => {
            if k >= 3 && rel(k - 1) > blowup_growth && rel(k - 2) > blowup_growth {
                Stability::BlowUp
            } else if rel(k - 1).abs() < finite_change {
                Stability::Finite
            } else {
                Stability::Undetermined
            }
        }
        StabilityRule::IncrementRatio { max_ratio, negligible } => {
            if rel(k - 1).abs() < negligible {
                return Stability::Finite;
            }
            if k < 3 {
                return Stability::Undetermined;
            }
            let d1 = values[k - 2] - values[k - 3];
            let d2 = values[k - 1] - values[k - 2];
            if d2 < 0.0 || d1 <= 0.0 {
                return Stability::Undetermined;
            }
            if d2 / d1 < max_ratio {
                Stability::Finite
            } else {
                Stability::BlowUp
            }
        }
    }
}

impl StabilityRule {
    /// The increment-ratio rule used for power sweeps.
    pub fn increment_ratio() -> Self {
        StabilityRule::IncrementRatio { max_ratio: 0.95, negligible: 0.01 }
    }
}

/// Universal estimate for the dyadic weighted maximal operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalCheck {
    /// `‖M f‖_{L^p(w)} / ‖f‖_{L^p(w)}`, bound `p'`.
    pub lp_ratio: f64,
    /// Dyadic weighted Morrey norm ratio, bound `p' + 1`.
    pub morrey_ratio: f64,
    /// Largest local-part ratio over dyadic `Q`, bound `p'`.
    pub local_ratio: f64,
    /// Largest far-part ratio over dyadic `Q`, bound `1`.
    pub far_ratio: f64,
    /// Largest relative spread of `M f₂` over `Q` (zero when the identity holds).
    pub identity_error: f64,
    pub ok: bool,
}

/// Checks the weighted `L^p` bound, the Morrey bound and its split for every dyadic cube.
///
/// Local and far parts are measured as `(w(Q)^{-λ/n} ∫_Q (M f_i)^p w)^{1/p}`
/// against the dyadic weighted Morrey norm of `f`.
pub fn universal_check(f: &GridFunction, w: &GridFunction, p: f64, lambda: f64) -> Result<UniversalCheck> {
    let pc = conjugate(p);
    let n = f.grid().dim() as f64;
    let mf = dyadic_weighted_maximal(f, w)?.result;
    let lp_ratio = weighted_lp_norm(&mf, w, p)? / weighted_lp_norm(f, w, p)?;
    let norm = dyadic_weighted_morrey_norm(f, w, p, lambda)?.value;
    let morrey_ratio = dyadic_weighted_morrey_norm(&mf, w, p, lambda)?.value / norm;
    let cubes = dyadic_cubes(f.grid(), None)?;
    let wi = Integrator::new(w);
    let parts = exec::map_slice(&cubes, |q| -> Result<(f64, f64, f64)> {
        let ind = GridFunction::indicator(q);
        let f1 = f.mul(&ind)?;
        let f2 = f.zip_map(&ind, |a, b| a * (1.0 - b))?;
        let m1 = dyadic_weighted_maximal(&f1, w)?.result;
        let m2 = dyadic_weighted_maximal(&f2, w)?.result;
        let scale = wi.integral(q).powf(-lambda / n);
        let local = |m: &GridFunction| -> f64 {
            let s: f64 = q.cells().map(|c| m.values()[c].powf(p) * w.values()[c]).sum::<f64>() * f.grid().cell_volume();
            (scale * s).powf(1.0 / p)
        };
        let vals: Vec<f64> = q.cells().map(|c| m2.values()[c]).collect();
        let hi = vals.iter().copied().fold(0.0, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        Ok((local(&m1) / norm, local(&m2) / norm, spread))
    });
    let mut local_ratio = 0.0f64;
    let mut far_ratio = 0.0f64;
    let mut identity_error = 0.0f64;
    for r in parts {
        let (a, b, c) = r?;
        local_ratio = local_ratio.max(a);
        far_ratio = far_ratio.max(b);
        identity_error = identity_error.max(c);
    }
    let tol = 1.0 + SLACK;
    let ok = lp_ratio <= pc * tol
        && morrey_ratio <= (pc + 1.0) * tol
        && local_ratio <= pc * tol
        && far_ratio <= tol
        && identity_error <= 1e-12;
    Ok(UniversalCheck { lp_ratio, morrey_ratio, local_ratio, far_ratio, identity_error, ok })
}

/// One line of a condition report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub value: f64,
    pub interval: Option<[f64; 2]>,
    pub witness: Option<Cube>,
    /// Which estimator produced the value.
    pub provenance: String,
    pub pass: Option<bool>,
}

/// Side-by-side conditions for one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub exponents: ExponentSet,
    pub weight: PowerWeightSpec,
    pub level: usize,
    pub fidelity: Fidelity,
    pub entries: Vec<ConditionEntry>,
}

/// Bounds used by [`condition_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionBounds {
    pub c2: f64,
    pub c3: f64,
    pub s: Option<f64>,
}

impl Default for ConditionBounds {
    fn default() -> Self {
        Self { c2: 10.0, c3: 10.0, s: None }
    }
}

pub fn condition_report(
    weight: PowerWeightSpec,
    e: &ExponentSet,
    grid: Grid,
    fidelity: Fidelity,
    battery: &BlockBattery,
    bounds: &ConditionBounds,
) -> Result<ConditionReport> {
    let w = weight.rasterize(grid)?;
    let mut entries = Vec::new();
    let b = condition_b_sup(&w, e, fidelity, battery)?;
    entries.push(ConditionEntry {
        name: "b_quantity".into(),
        value: b.upper.value,
        interval: Some([b.lower.value, b.upper.value]),
        witness: Some(b.upper.cube),
        provenance: format!("lower: dyadic duality solver; upper: block battery; norm: {fidelity:?}"),
        pass: Some(b.upper.value <= bounds.c2),
    });
    let uniform = make_block(grid, &BlockShape::Uniform, e.lambda)?;
    let c = condition_c_check(&w, &uniform, e, &grid.root(), bounds.s.unwrap_or(e.p), bounds.c3, fidelity)?;
    entries.push(ConditionEntry {
        name: "local_block_average".into(),
        value: c.block_average.value,
        interval: None,
        witness: Some(c.block_average.cube),
        provenance: "uniform block on the root".into(),
        pass: Some(c.block_average.value <= bounds.c3),
    });
    entries.push(ConditionEntry {
        name: "local_block_ap".into(),
        value: c.block_ap.value,
        interval: None,
        witness: Some(c.block_ap.cube),
        provenance: format!("uniform block, s = {}", bounds.s.unwrap_or(e.p)),
        pass: Some(c.block_ap.value <= bounds.c3),
    });
    let table = LocalNormTable::new(&w, e.q, e.lambda, Fidelity::Aligned)?;
    let ks = kappa_search(&table, grid)?;
    entries.push(ConditionEntry {
        name: "doubling_kappa".into(),
        value: ks.kappa.unwrap_or(f64::INFINITY),
        interval: None,
        witness: ks.tried.last().map(|d| d.worst_cube),
        provenance: format!("aligned family, kappa = 2^(j/4) up to {}", ks.kappa_max),
        pass: Some(ks.kappa.is_some()),
    });
    let att = norm_attainment_sup(&w, e, fidelity)?;
    entries.push(ConditionEntry {
        name: "norm_attainment".into(),
        value: att.value,
        interval: None,
        witness: Some(att.cube),
        provenance: format!("dyadic cubes, norm: {fidelity:?}"),
        pass: None,
    });
    let pm = power_threshold_maximal(weight.rho, e);
    let pi = power_threshold_integral(weight.rho, e);
    for (name, pr) in [("power_predicate_maximal", pm), ("power_predicate_integral", pi)] {
        entries.push(ConditionEntry {
            name: name.into(),
            value: if pr.admissible { 1.0 } else { 0.0 },
            interval: Some([pr.left_margin, pr.right_margin]),
            witness: None,
            provenance: "analytic".into(),
            pass: Some(pr.admissible),
        });
    }
    Ok(ConditionReport { exponents: *e, weight, level: grid.level(), fidelity, entries })
}

/// Settings for a power-weight sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub levels: Vec<usize>,
    pub fidelity: Fidelity,
    pub rule: StabilityRule,
    pub center: [f64; 2],
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { levels: vec![4, 6, 8, 10], fidelity: Fidelity::Aligned, rule: StabilityRule::increment_ratio(), center: [0.5, 0.5] }
    }
}

/// Measured and analytic classification of one `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub levels: Vec<usize>,
    pub b_lower: Vec<f64>,
    pub b_upper: Vec<f64>,
    /// Refinement class of the certified ends: finite from the upper end, blow-up from the lower end.
    pub b_class: Stability,
    pub kappa: Option<f64>,
    pub maximal: PowerPredicate,
    pub integral: PowerPredicate,
    pub maximal_agrees: bool,
    pub doubling_agrees: bool,
    pub integral_agrees: bool,
}

/// Combines the classes of the two certified ends.
pub fn certified_class(lower: &[f64], upper: &[f64], rule: StabilityRule) -> Stability {
    if classify(upper, rule) == Stability::Finite {
        Stability::Finite
    } else if classify(lower, rule) == Stability::BlowUp {
        Stability::BlowUp
    } else {
        Stability::Undetermined
    }
}

/// Runs one `ρ` of the sweep; `battery` must cover the largest level.
pub fn sweep_point(rho: f64, e: &ExponentSet, settings: &SweepSettings, battery: &BlockBattery) -> Result<SweepRow> {
    let weight = PowerWeightSpec::new(rho, settings.center);
    let mut b_lower = Vec::new();
    let mut b_upper = Vec::new();
    let mut last = None;
    for &l in &settings.levels {
        let grid = Grid::new(e.n, l)?;
        let w = weight.rasterize(grid)?;
        let b = condition_b_sup(&w, e, settings.fidelity, battery)?;
        b_lower.push(b.lower.value);
        b_upper.push(b.upper.value);
        last = Some((grid, w));
    }
    let (grid, w) = last.ok_or_else(|| Error::InvalidInput("sweep needs at least one level".into()))?;
    let table = LocalNormTable::new(&w, e.q, e.lambda, Fidelity::Aligned)?;
    let kappa = kappa_search(&table, grid)?.kappa;
    let b_class = certified_class(&b_lower, &b_upper, settings.rule);
    let maximal = power_threshold_maximal(rho, e);
    let integral = power_threshold_integral(rho, e);
    let maximal_agrees = (b_class == Stability::Finite) == maximal.admissible && b_class != Stability::Undetermined;
    let doubling_expected = e.q * rho > e.lambda - e.n as f64 && !maximal.left_boundary;
    let doubling_agrees = kappa.is_some() == doubling_expected;
    let integral_measured = b_class == Stability::Finite && kappa.is_some();
    let integral_agrees = integral_measured == integral.admissible && b_class != Stability::Undetermined;
    Ok(SweepRow {
        rho,
        levels: settings.levels.clone(),
        b_lower,
        b_upper,
        b_class,
        kappa,
        maximal,
        integral,
        maximal_agrees,
        doubling_agrees,
        integral_agrees,
    })
}

/// Grid points on either side of each change of `pred` along a sorted grid.
pub fn transition_points(grid: &[f64], pred: impl Fn(f64) -> bool) -> Vec<f64> {
    let mut out = Vec::new();
    for w in grid.windows(2) {
        if pred(w[0]) != pred(w[1]) {
            for r in [w[0], w[1]] {
                if !out.contains(&r) {
                    out.push(r);
                }
            }
        }
    }
    out
}

/// `start, start + step, ...` below `stop`.
pub fn rho_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let k = ((stop - start) / step).round() as i64;
    (0..k).map(|i| start + i as f64 * step).collect()
}
