//! Dyadic Hausdorff content, Choquet integrals, blocks and the two one-sided
//! estimators of the block-space norm.
//!
//! Content is taken over dyadic covers only. With that convention every block
//! `b` with `∫ b dH^λ ≤ 1` satisfies `∫ |f|^p b ≤ ‖f‖^p` for the dyadic
//! `L^{p,λ}` norm, so the candidate estimator is a true upper bound for the
//! dual value computed by [`h_norm_dual`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Cube, Fidelity, Grid, GridFunction, Integrator, RangeMin};
use crate::norms::{self, conjugate, dual_weight_integral, EXACT_SLACK};

/// Dyadic tree of content values, updated as cells are added to the set.
#[derive(Debug, Clone)]
pub struct ContentTree {
    grid: Grid,
    lambda: f64,
    caps: Vec<f64>,
    nodes: Vec<Vec<f64>>,
}

impl ContentTree {
    pub fn new(grid: Grid, lambda: f64) -> Result<Self> {
        let n = grid.dim() as f64;
        if !(lambda > 0.0 && lambda <= n) {
            return Err(Error::InvalidInput(format!("need 0 < lambda <= n, got {lambda}")));
        }
        let l = grid.level();
        let caps = (0..=l).map(|k| (-(k as f64) * lambda).exp2()).collect();
        let nodes = (0..=l).map(|k| vec![0.0; 1usize << (k * grid.dim())]).collect();
        Ok(Self { grid, lambda, caps, nodes })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Current content of the whole set.
    pub fn value(&self) -> f64 {
        self.nodes[0][0]
    }

    fn node_of(&self, k: usize, cell: [usize; 2]) -> usize {
        let shift = self.grid.level() - k;
        if self.grid.dim() == 1 {
            cell[0] >> shift
        } else {
            ((cell[0] >> shift) << k) + (cell[1] >> shift)
        }
    }

    fn children_sum(&self, k: usize, node: usize) -> f64 {
        let next = &self.nodes[k + 1];
        if self.grid.dim() == 1 {
            next[2 * node] + next[2 * node + 1]
        } else {
            let per = 1usize << k;
            let (i, j) = (node / per, node % per);
            let w = per * 2;
            next[2 * i * w + 2 * j] + next[2 * i * w + 2 * j + 1] + next[(2 * i + 1) * w + 2 * j] + next[(2 * i + 1) * w + 2 * j + 1]
        }
    }

    /// Adds one cell to the set and refreshes its ancestors.
    pub fn insert(&mut self, cell: usize) {
        let l = self.grid.level();
        let c = self.grid.coords(cell);
        if self.nodes[l][cell] > 0.0 {
            return;
        }
        self.nodes[l][cell] = self.caps[l];
        for k in (0..l).rev() {
            let node = self.node_of(k, c);
            let v = self.children_sum(k, node).min(self.caps[k]);
            if v == self.nodes[k][node] {
                break;
            }
            self.nodes[k][node] = v;
        }
    }

    /// Optimal dyadic cover: a cube is used when its own `ℓ^λ` does not exceed its children's total.
    pub fn cover(&self) -> Vec<Cube> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        let per_dim = self.grid.dim();
        while let Some((k, node)) = stack.pop() {
            let v = self.nodes[k][node];
            if v == 0.0 {
                continue;
            }
            let per = 1usize << k;
            let coords = if per_dim == 1 { [node, 0] } else { [node / per, node % per] };
            if k == self.grid.level() || self.caps[k] <= self.children_sum(k, node) {
                out.push(self.grid.dyadic(k, coords).expect("valid node"));
                continue;
            }
            let w = per * 2;
            if per_dim == 1 {
                stack.push((k + 1, 2 * node + 1));
                stack.push((k + 1, 2 * node));
            } else {
                for (a, b) in [(1, 1), (1, 0), (0, 1), (0, 0)] {
                    stack.push((k + 1, (2 * coords[0] + a) * w + 2 * coords[1] + b));
                }
            }
        }
        out.sort();
        out
    }
}

/// Dyadic Hausdorff content of a cell set with an optimal cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentValue {
    pub mask: Vec<bool>,
    pub lambda: f64,
    pub value: f64,
    pub cover: Vec<Cube>,
}

pub fn hausdorff_content(grid: Grid, mask: &[bool], lambda: f64) -> Result<ContentValue> {
    if mask.len() != grid.cell_count() {
        return Err(Error::InvalidInput(format!("mask has {} cells, grid has {}", mask.len(), grid.cell_count())));
    }
    let mut tree = ContentTree::new(grid, lambda)?;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        tree.insert(i);
    }
    Ok(ContentValue { mask: mask.to_vec(), lambda, value: tree.value(), cover: tree.cover() })
}

/// `∫ φ dH^λ = ∫_0^∞ H^λ({φ > t}) dt`, exact for step functions.
pub fn choquet_integral(phi: &GridFunction, lambda: f64) -> Result<f64> {
    if !phi.is_nonnegative() {
        return Err(Error::InvalidInput("Choquet integral needs a nonnegative function".into()));
    }
    let grid = phi.grid();
    let v = phi.values();
    let mut order: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut tree = ContentTree::new(grid, lambda)?;
    let mut total = 0.0;
    let mut i = 0;
    while i < order.len() {
        let level = v[order[i]];
        while i < order.len() && v[order[i]] == level {
            tree.insert(order[i]);
            i += 1;
        }
        let next = if i < order.len() { v[order[i]] } else { 0.0 };
        total += (level - next) * tree.value();
    }
    Ok(total)
}

/// Shapes accepted by [`make_block`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockShape {
    /// `1_Q / ℓ(Q)^λ`.
    Indicator { cube: Cube },
    /// `max(|x - x0|, ε)^{-s}`, optionally cut to a cube.
    TruncatedPower { center: [f64; 2], s: f64, eps: f64, support: Option<Cube> },
    /// Constant one.
    Uniform,
    Custom { b: GridFunction },
}

/// A block `b ≥ 0` normalized to unit Choquet integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCertificate {
    pub b: GridFunction,
    pub lambda: f64,
    /// `[b]_{A_1}` over dyadic cubes; infinite when `b` vanishes somewhere.
    pub a1_constant: f64,
    pub choquet: f64,
}

impl BlockCertificate {
    pub fn is_admissible(&self) -> bool {
        self.choquet <= 1.0 + EXACT_SLACK && self.b.is_nonnegative()
    }

    pub fn a1_finite(&self) -> bool {
        self.a1_constant.is_finite()
    }
}

/// `[b]_{A_1} = sup_Q avg_Q b / min_Q b` over a cube family.
pub fn a1_of(b: &GridFunction, fidelity: Fidelity) -> Result<f64> {
    let ig = Integrator::new(b);
    let rm = RangeMin::new(b);
    let s = norms::sup_over(b.grid(), fidelity, None, |q| {
        let avg = ig.integral(q) / q.volume();
        let m = rm.min(q);
        if m > 0.0 {
            avg / m
        } else if avg > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    })?;
    Ok(s.value)
}

fn rasterize(grid: Grid, shape: &BlockShape) -> Result<GridFunction> {
    match shape {
        BlockShape::Indicator { cube } => {
            if cube.grid() != grid || !cube.within_root() {
                return Err(Error::Domain("indicator block cube must lie in the root".into()));
            }
            Ok(GridFunction::indicator(cube))
        }
        BlockShape::TruncatedPower { center, s, eps, support } => {
            let n = grid.dim() as f64;
            if !(*s > 0.0 && *s < n) || !(*eps > 0.0) {
                return Err(Error::InvalidInput(format!("truncated power needs 0 < s < n and eps > 0, got s={s}, eps={eps}")));
            }
            let mut f = GridFunction::from_centers(grid, |x| {
                let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                r.max(*eps).powf(-s)
            });
            if let Some(q) = support {
                f = f.restrict(q);
            }
            Ok(f)
        }
        BlockShape::Uniform => Ok(GridFunction::constant(grid, 1.0)),
        BlockShape::Custom { b } => {
            if b.grid() != grid {
                return Err(Error::Mismatch("custom block lives on another grid".into()));
            }
            if !b.is_nonnegative() {
                return Err(Error::InvalidInput("custom block must be nonnegative".into()));
            }
            Ok(b.clone())
        }
    }
}

/// Builds a block and rescales it to unit Choquet integral.
pub fn make_block(grid: Grid, shape: &BlockShape, lambda: f64) -> Result<BlockCertificate> {
    let raw = rasterize(grid, shape)?;
    let c = choquet_integral(&raw, lambda)?;
    if c == 0.0 {
        return Err(Error::InvalidInput("block shape vanishes identically".into()));
    }
    let b = raw.scale(1.0 / c);
    let choquet = choquet_integral(&b, lambda)?;
    let a1_constant = a1_of(&b, Fidelity::Dyadic)?;
    Ok(BlockCertificate { b, lambda, a1_constant, choquet })
}

/// Power exponents used by the default battery: `{λ/2, λ, (n+λ)/2} ∩ (0, n)`.
pub fn default_power_exponents(n: usize, lambda: f64) -> Vec<f64> {
    let n = n as f64;
    let mut s: Vec<f64> = [lambda / 2.0, lambda, (n + lambda) / 2.0]
        .into_iter()
        .filter(|&s| s > 0.0 && s < n)
        .collect();
    s.dedup();
    s
}

/// Normalized dyadic indicator blocks up to depth `L` plus truncated powers
/// centered at every lattice vertex.
pub fn default_battery(grid: Grid, lambda: f64) -> Result<Vec<BlockCertificate>> {
    let mut shapes: Vec<BlockShape> = crate::grid::dyadic_cubes(grid, None)?
        .into_iter()
        .map(|cube| BlockShape::Indicator { cube })
        .collect();
    let m = grid.side_cells();
    let h = grid.cell_side();
    let ys = if grid.dim() == 1 { 1 } else { m + 1 };
    for s in default_power_exponents(grid.dim(), lambda) {
        for i in 0..=m {
            for j in 0..ys {
                let center = [i as f64 * h, if grid.dim() == 1 { 0.0 } else { j as f64 * h }];
                shapes.push(BlockShape::TruncatedPower { center, s, eps: h / 2.0, support: None });
            }
        }
    }
    let built = exec::map_slice(&shapes, |sh| make_block(grid, sh, lambda));
    built.into_iter().collect()
}

/// Best candidate for `sup_b (∫|f|^p b)^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSup {
    pub value: f64,
    pub index: usize,
    /// Dyadic `‖f‖_{L^{p,λ}}`.
    pub morrey: f64,
    pub ratio: f64,
}

fn check_candidates(grid: Grid, candidates: &[BlockCertificate], lambda: f64) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    for (i, c) in candidates.iter().enumerate() {
        if c.b.grid() != grid {
            return Err(Error::Mismatch(format!("candidate {i} lives on another grid")));
        }
        if (c.lambda - lambda).abs() > 1e-12 || !c.is_admissible() {
            return Err(Error::InvalidInput(format!("candidate {i} is not a verified block for lambda={lambda}")));
        }
    }
    Ok(())
}

/// `max_b (∫ |f|^p b)^{1/p}` over candidates: a lower bound for the Morrey norm.
pub fn morrey_norm_via_blocks(f: &GridFunction, p: f64, lambda: f64, candidates: &[BlockCertificate]) -> Result<BlockSup> {
    check_candidates(f.grid(), candidates, lambda)?;
    let fp = f.abs_pow(p);
    let vals: Vec<f64> = exec::map_slice(candidates, |c| fp.dot(&c.b).unwrap_or(f64::NAN));
    let (index, best) = argmax(&vals);
    let value = best.max(0.0).powf(1.0 / p);
    let morrey = norms::lpl_norm(f, p, lambda, Fidelity::Dyadic)?.value;
    let ratio = if morrey > 0.0 { value / morrey } else { 1.0 };
    Ok(BlockSup { value, index, morrey, ratio })
}

fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Best candidate for `inf_b (∫ |g|^{p'} b^{1-p'})^{1/p'}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockInf {
    /// Upper bound for the block-space norm.
    pub value: f64,
    pub index: usize,
}

/// Evaluates the block-space infimand at one block.
pub fn h_infimand(g: &GridFunction, p_prime: f64, b: &GridFunction) -> Result<f64> {
    let p = conjugate(p_prime);
    Ok(dual_weight_integral(g, b, p)?.powf(1.0 / p_prime))
}

pub fn h_norm_upper(g: &GridFunction, p_prime: f64, lambda: f64, candidates: &[BlockCertificate]) -> Result<BlockInf> {
    if !(p_prime > 1.0 && p_prime.is_finite()) {
        return Err(Error::InvalidInput(format!("need 1 < p' < inf, got {p_prime}")));
    }
    check_candidates(g.grid(), candidates, lambda)?;
    let vals: Vec<f64> = exec::map_slice(candidates, |c| h_infimand(g, p_prime, &c.b).unwrap_or(f64::NAN));
    let mut best = (0, f64::INFINITY);
    for (i, &x) in vals.iter().enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    Ok(BlockInf { value: best.1, index: best.0 })
}

/// Result of the duality solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    /// `∫ f g / ‖f‖` at the returned `f`: a certified lower bound.
    pub value: f64,
    /// Lagrangian dual value: a certified upper bound for the same supremum.
    pub upper: f64,
    pub f: GridFunction,
    /// Cubes whose constraint is tight at the returned `f`.
    pub active: Vec<Cube>,
    pub iterations: usize,
    pub fidelity: Fidelity,
}

impl DualSolution {
    pub fn gap(&self) -> f64 {
        if self.upper > 0.0 {
            (self.upper - self.value) / self.upper
        } else {
            0.0
        }
    }
}

pub const DUAL_MAX_ITERATIONS: usize = 10_000;

/// `sup { ∫ f |g| : ‖f‖_{L^{p,λ}} ≤ 1, f ≥ 0 }` with the norm taken over the
/// selected cube family.
///
/// The dyadic family is solved exactly by a price recursion on the tree; the
/// aligned and shifted families start from that solution and run coordinate
/// descent on the Lagrange multipliers until the relative gap is below `tol`.
pub fn h_norm_dual(g: &GridFunction, p: f64, lambda: f64, tol: f64, fidelity: Fidelity) -> Result<DualSolution> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("need 1 < p < inf, got {p}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let grid = g.grid();
    let n = grid.dim() as f64;
    if !(lambda > 0.0 && lambda < n) {
        return Err(Error::InvalidInput(format!("need 0 < lambda < n, got {lambda}")));
    }
    let g = g.abs();
    if g.max_value() == 0.0 {
        return Ok(DualSolution {
            value: 0.0,
            upper: 0.0,
            f: GridFunction::zeros(grid),
            active: Vec::new(),
            iterations: 0,
            fidelity,
        });
    }
    let tree = PriceTree::solve(&g, p, lambda);
    let base = tree.solution();
    if fidelity == Fidelity::Dyadic {
        return Ok(base);
    }
    refine_dual(&g, p, lambda, tol, fidelity, tree)
}

/// Exact solution for dyadic constraints. With `u = f^p` the problem is
/// `max Σ G_i u_i^{1/p}` subject to `Σ_{i∈Q} u_i ≤ c_Q` on a laminar family,
/// so the multiplier accumulated along each root-to-leaf path is found by
/// bisection on each node's own demand curve.
struct PriceTree {
    grid: Grid,
    p: f64,
    lambda: f64,
    weights: Vec<f64>,
    caps: Vec<f64>,
    /// Accumulated price per node, per level.
    price: Vec<Vec<f64>>,
}

impl PriceTree {
    fn children(&self, k: usize, node: usize) -> Vec<usize> {
        if self.grid.dim() == 1 {
            vec![2 * node, 2 * node + 1]
        } else {
            let per = 1usize << k;
            let (i, j) = (node / per, node % per);
            let w = 2 * per;
            vec![2 * i * w + 2 * j, 2 * i * w + 2 * j + 1, (2 * i + 1) * w + 2 * j, (2 * i + 1) * w + 2 * j + 1]
        }
    }

    fn leaf_demand(&self, cell: usize, theta: f64) -> f64 {
        let w = self.weights[cell];
        if w == 0.0 {
            return 0.0;
        }
        let cap = self.caps[self.grid.level()];
        if theta <= 0.0 {
            return cap;
        }
        let pc = conjugate(self.p);
        (w / (self.p * theta)).powf(pc).min(cap)
    }

    /// Total allocation inside a node when the price above it is `theta`.
    fn demand(&self, k: usize, node: usize, theta: f64) -> f64 {
        if k == self.grid.level() {
            return self.leaf_demand(node, theta);
        }
        let s: f64 = self.children(k, node).into_iter().map(|c| self.demand(k + 1, c, theta)).sum();
        s.min(self.caps[k])
    }

    /// Price at which the children of a node exactly fill its cap; zero if they never do.
    fn own_price(&self, k: usize, node: usize) -> f64 {
        let cap = self.caps[k];
        if k == self.grid.level() {
            let w = self.weights[node];
            return if w == 0.0 { 0.0 } else { w / (self.p * cap.powf(1.0 / conjugate(self.p))) };
        }
        let kids = self.children(k, node);
        let load = |t: f64| -> f64 { kids.iter().map(|&c| self.demand(k + 1, c, t)).sum() };
        if load(0.0) <= cap {
            return 0.0;
        }
        // Unconstrained demand bounds the capped one, which gives an upper bracket.
        let pc = conjugate(self.p);
        let shift = self.grid.level() - k;
        let mut mass = 0.0;
        for_cells_below(self.grid, k, node, shift, |cell| mass += (self.weights[cell] / self.p).powf(pc));
        let mut hi = (mass / cap).powf(1.0 / pc);
        let mut lo = hi / 2.0;
        while load(lo) < cap {
            hi = lo;
            lo /= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if load(mid) >= cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn solve(g: &GridFunction, p: f64, lambda: f64) -> Self {
        let grid = g.grid();
        let vol = grid.cell_volume();
        let l = grid.level();
        let caps = (0..=l).map(|k| (-(k as f64) * lambda).exp2() / vol).collect();
        let weights = g.values().iter().map(|&v| v * vol).collect();
        let mut tree = Self { grid, p, lambda, weights, caps, price: Vec::with_capacity(l + 1) };
        for k in 0..=l {
            let count = 1usize << (k * grid.dim());
            let parents: Vec<f64> = if k == 0 {
                vec![0.0]
            } else {
                tree.price[k - 1].clone()
            };
            let t = &tree;
            let prices = exec::map_range(count, |node| {
                let parent = if k == 0 { 0.0 } else { parents[t.parent_of(k, node)] };
                parent.max(t.own_price(k, node))
            });
            tree.price.push(prices);
        }
        tree
    }

    fn parent_of(&self, k: usize, node: usize) -> usize {
        if self.grid.dim() == 1 {
            node / 2
        } else {
            let per = 1usize << k;
            let (i, j) = (node / per, node % per);
            (i / 2) * (per / 2) + j / 2
        }
    }

    /// Per-cell multipliers `m_i` and the dual objective contribution of the caps.
    fn multipliers(&self) -> (Vec<f64>, f64) {
        let l = self.grid.level();
        let mut cap_term = 0.0;
        for k in 0..=l {
            for (node, &t) in self.price[k].iter().enumerate() {
                let parent = if k == 0 { 0.0 } else { self.price[k - 1][self.parent_of(k, node)] };
                cap_term += (t - parent) * self.caps[k];
            }
        }
        (self.price[l].clone(), cap_term)
    }

    fn solution(&self) -> DualSolution {
        let (m, cap_term) = self.multipliers();
        let pc = conjugate(self.p);
        let values: Vec<f64> = (0..self.grid.cell_count())
            .map(|i| {
                let w = self.weights[i];
                if w == 0.0 {
                    0.0
                } else {
                    (w / (self.p * m[i])).powf(pc / self.p)
                }
            })
            .collect();
        let f = GridFunction::new(self.grid, values).expect("finite allocation");
        let upper = lagrangian(&self.weights, &m, self.p) + cap_term;
        finish(f, &self.weights, self.p, self.lambda, upper, 0, Fidelity::Dyadic)
    }
}

fn for_cells_below(grid: Grid, k: usize, node: usize, shift: usize, mut visit: impl FnMut(usize)) {
    let side = 1usize << shift;
    if grid.dim() == 1 {
        for c in node * side..(node + 1) * side {
            visit(c);
        }
    } else {
        let per = 1usize << k;
        let (i, j) = (node / per, node % per);
        for a in i * side..(i + 1) * side {
            for b in j * side..(j + 1) * side {
                visit(grid.index([a, b]));
            }
        }
    }
}

/// `Σ_i max_u (G_i u^{1/p} - m_i u) = Σ_i G_i t_i^{p'-1} / p'` with `t_i = G_i/(p m_i)`.
fn lagrangian(weights: &[f64], m: &[f64], p: f64) -> f64 {
    let pc = conjugate(p);
    let terms: Vec<f64> = weights
        .iter()
        .zip(m)
        .map(|(&w, &mi)| {
            if w == 0.0 {
                0.0
            } else if mi <= 0.0 {
                f64::INFINITY
            } else {
                w * (w / (p * mi)).powf(pc - 1.0) / pc
            }
        })
        .collect();
    crate::grid::pairwise_sum(&terms)
}

fn finish(
    f: GridFunction,
    weights: &[f64],
    p: f64,
    lambda: f64,
    upper: f64,
    iterations: usize,
    fidelity: Fidelity,
) -> DualSolution {
    let grid = f.grid();
    let pairing: f64 = crate::grid::pairwise_sum(&f.values().iter().zip(weights).map(|(a, b)| a * b).collect::<Vec<_>>());
    let norm = norms::lpl_norm(&f, p, lambda, fidelity).map(|s| s.value).unwrap_or(0.0);
    let fnorm = if norm > 0.0 { f.scale(1.0 / norm) } else { f };
    let value = if norm > 0.0 { pairing / norm } else { 0.0 };
    let ig = Integrator::new(&fnorm.abs_pow(p));
    let active = fidelity
        .cubes(grid, None)
        .unwrap_or_default()
        .into_iter()
        .filter(|q| ig.integral(q) * q.side_length().powf(-lambda) >= 1.0 - 1e-9)
        .collect();
    DualSolution { value, upper: upper.max(value), f: fnorm, active, iterations, fidelity }
}

fn refine_dual(
    g: &GridFunction,
    p: f64,
    lambda: f64,
    tol: f64,
    fidelity: Fidelity,
    tree: PriceTree,
) -> Result<DualSolution> {
    let grid = g.grid();
    let pc = conjugate(p);
    let vol = grid.cell_volume();
    let weights = tree.weights.clone();
    let cubes = fidelity.cubes(grid, None)?;
    let caps: Vec<f64> = cubes.iter().map(|q| q.side_length().powf(lambda) / vol).collect();
    // Warm start: dyadic multipliers placed on the matching family members.
    let mut mu = vec![0.0; cubes.len()];
    let index: std::collections::HashMap<Cube, usize> = cubes.iter().enumerate().map(|(i, q)| (*q, i)).collect();
    for k in 0..=grid.level() {
        for (node, &t) in tree.price[k].iter().enumerate() {
            let parent = if k == 0 { 0.0 } else { tree.price[k - 1][tree.parent_of(k, node)] };
            if t > parent {
                let per = 1usize << k;
                let coords = if grid.dim() == 1 { [node, 0] } else { [node / per, node % per] };
                let q = grid.dyadic(k, coords)?;
                mu[index[&q]] = t - parent;
            }
        }
    }
    let mut m = tree.multipliers().0;
    let alloc = |m: &[f64]| -> Vec<f64> {
        weights
            .iter()
            .zip(m)
            .map(|(&w, &mi)| if w == 0.0 { 0.0 } else { (w / (p * mi)).powf(pc) })
            .collect()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut upper = f64::INFINITY;
    let mut last_gap = f64::INFINITY;
    for it in 0..DUAL_MAX_ITERATIONS {
        let u = alloc(&m);
        let ig = Integrator::new(&GridFunction::new(grid, u.clone())?);
        let ratios: Vec<f64> = exec::map_range(cubes.len(), |i| ig.cell_sum(&cubes[i]) / caps[i]);
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        let objective: f64 = weights.iter().zip(&u).map(|(w, x)| w * x.powf(1.0 / p)).sum();
        let lower = objective / worst.powf(1.0 / p);
        let dual = lagrangian(&weights, &m, p) + mu.iter().zip(&caps).map(|(a, c)| a * c).sum::<f64>();
        upper = upper.min(dual);
        if best.as_ref().map_or(true, |(v, _)| lower > *v) {
            best = Some((lower, u.clone()));
        }
        let best_lower = best.as_ref().unwrap().0;
        last_gap = (upper - best_lower) / upper;
        if last_gap <= tol {
            let f = GridFunction::new(grid, best.unwrap().1.iter().map(|x| x.powf(1.0 / p)).collect())?;
            return Ok(finish(f, &weights, p, lambda, upper, it, fidelity));
        }
        // Coordinate with the largest relative KKT violation.
        let mut pick = None;
        let mut score = 0.0;
        for (i, &r) in ratios.iter().enumerate() {
            let s = if r > 1.0 { r - 1.0 } else if mu[i] > 0.0 { 1.0 - r } else { 0.0 };
            if s > score {
                score = s;
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let q = cubes[i];
        let cells: Vec<usize> = q.cells().collect();
        let base: Vec<f64> = cells.iter().map(|&c| m[c] - mu[i]).collect();
        let load = |t: f64| -> f64 {
            cells
                .iter()
                .zip(&base)
                .map(|(&c, &b)| {
                    let w = weights[c];
                    if w == 0.0 {
                        0.0
                    } else {
                        let mm = b + t;
                        if mm <= 0.0 { f64::INFINITY } else { (w / (p * mm)).powf(pc) }
                    }
                })
                .sum()
        };
        let new_mu = if load(0.0) <= caps[i] {
            0.0
        } else {
            let mut hi = mu[i].max(f64::MIN_POSITIVE) * 2.0;
            while load(hi) > caps[i] {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if load(mid) > caps[i] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        for (&c, &b) in cells.iter().zip(&base) {
            m[c] = b + new_mu;
        }
        mu[i] = new_mu;
    }
    let best_value = best.map(|b| b.0).unwrap_or(0.0);
    Err(Error::Convergence { best: best_value, gap: last_gap, iterations: DUAL_MAX_ITERATIONS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g1(l: usize) -> Grid {
        Grid::new(1, l).unwrap()
    }

    /// Minimum of `Σ ℓ^λ` over every set of dyadic cubes covering the mask.
    fn brute_content(grid: Grid, mask: &[bool], lambda: f64) -> f64 {
        // Cubes missing the set never help a cover.
        let cubes: Vec<Cube> = crate::grid::dyadic_cubes(grid, None)
            .unwrap()
            .into_iter()
            .filter(|q| q.cells().any(|c| mask[c]))
            .collect();
        assert!(cubes.len() <= 22);
        let mut best = f64::INFINITY;
        for sel in 0u32..(1 << cubes.len()) {
            let mut covered = vec![false; mask.len()];
            let mut cost = 0.0;
            for (i, q) in cubes.iter().enumerate() {
                if sel >> i & 1 == 1 {
                    cost += q.side_length().powf(lambda);
                    for c in q.cells() {
                        covered[c] = true;
                    }
                }
            }
            if mask.iter().zip(&covered).all(|(m, c)| !m || *c) {
                best = best.min(cost);
            }
        }
        if mask.iter().any(|&m| m) {
            best
        } else {
            0.0
        }
    }

    #[test]
    fn content_of_single_cube_and_root() {
        let g = g1(4);
        for k in 0..=4 {
            let q = g.dyadic(k, [0, 0]).unwrap();
            let mask: Vec<bool> = (0..16).map(|i| q.contains_cell([i, 0])).collect();
            let c = hausdorff_content(g, &mask, 0.3).unwrap();
            assert!((c.value - (-(k as f64) * 0.3).exp2()).abs() < 1e-15);
            assert_eq!(c.cover, vec![q]);
        }
        let empty = hausdorff_content(g, &[false; 16], 0.3).unwrap();
        assert_eq!(empty.value, 0.0);
        assert!(empty.cover.is_empty());
    }

    #[test]
    fn two_end_cells() {
        for l in 1..=4 {
            let g = g1(l);
            let n = g.cell_count();
            let mut mask = vec![false; n];
            mask[0] = true;
            mask[n - 1] = true;
            for lambda in [0.05, 0.2, 0.5, 0.9] {
                let want = (2.0 * (-(l as f64) * lambda).exp2()).min(1.0);
                let c = hausdorff_content(g, &mask, lambda).unwrap();
                assert!((c.value - want).abs() < 1e-15);
                assert!((c.value - brute_content(g, &mask, lambda)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn content_matches_exhaustive_covers() {
        let g = g1(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let mask: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.4)).collect();
            let lambda = rng.gen_range(0.05..1.0);
            let c = hausdorff_content(g, &mask, lambda).unwrap();
            let want = brute_content(g, &mask, lambda);
            assert!((c.value - want).abs() <= 1e-12 * want.max(1e-300));
            let cost: f64 = c.cover.iter().map(|q| q.side_length().powf(lambda)).sum();
            assert!((cost - c.value).abs() < 1e-12);
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    assert!(c.cover.iter().any(|q| q.contains_cell([i, 0])));
                }
            }
        }
    }

    #[test]
    fn choquet_single_layer_and_riemann_sum() {
        let g = g1(2);
        let lambda = 0.6;
        let mask = [true, false, true, true];
        let h = hausdorff_content(g, &mask, lambda).unwrap().value;
        let phi = GridFunction::new(g, mask.iter().map(|&m| if m { 2.5 } else { 0.0 }).collect()).unwrap();
        assert!((choquet_integral(&phi, lambda).unwrap() - 2.5 * h).abs() < 1e-14);
        assert_eq!(choquet_integral(&GridFunction::zeros(g), lambda).unwrap(), 0.0);
        let phi = GridFunction::new(g, vec![1.0, 3.0, 0.5, 3.0]).unwrap();
        let exact = choquet_integral(&phi, lambda).unwrap();
        let steps = 30_000;
        let dt = 3.0 / steps as f64;
        let riemann: f64 = (0..steps)
            .map(|s| {
                let t = (s as f64 + 0.5) * dt;
                let m: Vec<bool> = phi.values().iter().map(|&v| v > t).collect();
                hausdorff_content(g, &m, lambda).unwrap().value * dt
            })
            .sum();
        assert!((exact - riemann).abs() < 1e-9);
        assert!(choquet_integral(&phi.scale(-1.0), lambda).is_err());
    }

    #[test]
    fn indicator_and_uniform_blocks() {
        let g = g1(4);
        let lambda = 0.5;
        let q = g.dyadic(2, [1, 0]).unwrap();
        let b = make_block(g, &BlockShape::Indicator { cube: q }, lambda).unwrap();
        assert!((b.choquet - 1.0).abs() < 1e-12);
        assert!(b.is_admissible());
        assert!(b.a1_constant.is_infinite());
        let expect = 0.25f64.powf(-lambda);
        for i in q.cells() {
            assert!((b.b.values()[i] - expect).abs() < 1e-12);
        }
        let u = make_block(g, &BlockShape::Uniform, lambda).unwrap();
        assert!(u.b.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(u.a1_constant, 1.0);
        let tp = make_block(g, &BlockShape::TruncatedPower { center: [0.0, 0.0], s: 0.5, eps: 1.0 / 32.0, support: None }, lambda).unwrap();
        assert!((tp.choquet - 1.0).abs() < 1e-9);
        assert!(tp.a1_constant.is_finite() && tp.a1_constant >= 1.0);
        assert!(make_block(g, &BlockShape::Custom { b: GridFunction::zeros(g) }, lambda).is_err());
    }

    #[test]
    fn blocks_recover_indicator_norm() {
        let g = g1(5);
        let lambda = 0.5;
        let p = 2.0;
        let q = g.dyadic(3, [2, 0]).unwrap();
        let f = GridFunction::indicator(&q);
        let cand = vec![make_block(g, &BlockShape::Indicator { cube: q }, lambda).unwrap()];
        let s = morrey_norm_via_blocks(&f, p, lambda, &cand).unwrap();
        let want = q.side_length().powf((1.0 - lambda) / p);
        assert!((s.value - want).abs() < 1e-12);
        assert!((s.ratio - 1.0).abs() < 1e-12);
        let one = GridFunction::constant(g, 1.0);
        let u = vec![make_block(g, &BlockShape::Uniform, lambda).unwrap()];
        assert!((morrey_norm_via_blocks(&one, p, lambda, &u).unwrap().value - 1.0).abs() < 1e-14);
        assert!(matches!(morrey_norm_via_blocks(&one, p, lambda, &[]), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn h_upper_closed_form_for_indicator() {
        // ∫ 1_Q (ℓ^{-λ})^{1-p'} = ℓ^{n + λ(p'-1)}.
        let g = g1(5);
        let (lambda, p) = (0.5, 2.0);
        let pc = conjugate(p);
        let q = g.dyadic(2, [3, 0]).unwrap();
        let cand = vec![make_block(g, &BlockShape::Indicator { cube: q }, lambda).unwrap()];
        let v = h_norm_upper(&GridFunction::indicator(&q), pc, lambda, &cand).unwrap().value;
        let l = q.side_length();
        let want = l.powf((1.0 + lambda * (pc - 1.0)) / pc);
        assert!((v - want).abs() < 1e-12 * want);
        assert_eq!(h_norm_upper(&GridFunction::zeros(g), pc, lambda, &cand).unwrap().value, 0.0);
    }

    #[test]
    fn dual_of_indicator_is_single_constraint_value() {
        // With g = 1_Q the best f is constant on Q at the level that makes Q
        // tight, which gives ℓ^{n - (n-λ)/p}.
        let g = g1(6);
        let (lambda, p) = (0.5, 2.0);
        for k in 0..=6 {
            let q = g.dyadic(k, [0, 0]).unwrap();
            let s = h_norm_dual(&GridFunction::indicator(&q), p, lambda, 1e-6, Fidelity::Dyadic).unwrap();
            let l = q.side_length();
            let want = l.powf(1.0 - (1.0 - lambda) / p);
            assert!((s.value - want).abs() < 1e-10 * want, "k={k}: {} vs {want}", s.value);
            assert!(s.upper >= s.value && s.gap() < 1e-9);
        }
        let z = h_norm_dual(&GridFunction::zeros(g), p, lambda, 1e-3, Fidelity::Aligned).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn dual_gap_closes_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for dim in [1, 2] {
            let g = Grid::new(dim, if dim == 1 { 6 } else { 3 }).unwrap();
            for _ in 0..5 {
                let gv = GridFunction::new(g, (0..g.cell_count()).map(|_| rng.gen_range(0.0..2.0f64).powi(3)).collect()).unwrap();
                let p = rng.gen_range(1.3..4.0);
                let lambda = rng.gen_range(0.1..dim as f64 - 0.1);
                let d = h_norm_dual(&gv, p, lambda, 1e-6, Fidelity::Dyadic).unwrap();
                assert!(d.gap() < 1e-9, "gap {}", d.gap());
                for fid in [Fidelity::Aligned, Fidelity::Shifted] {
                    let a = h_norm_dual(&gv, p, lambda, 1e-3, fid).unwrap();
                    assert!(a.gap() <= 1e-3);
                    // More constraints can only shrink the supremum.
                    assert!(a.value <= d.upper * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn dual_below_every_candidate_bound() {
        let g = g1(4);
        let lambda = 0.5;
        let battery = default_battery(g, lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let gv = GridFunction::new(g, (0..16).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let p = rng.gen_range(1.5..3.0);
            let d = h_norm_dual(&gv, p, lambda, 1e-6, Fidelity::Dyadic).unwrap();
            let up = h_norm_upper(&gv, conjugate(p), lambda, &battery).unwrap();
            assert!(d.value <= up.value * (1.0 + 1e-9));
        }
    }

    /// Coarse lattice search: every direction with entries in {0, 1/2, 1},
    /// scaled onto the unit sphere of the aligned norm.
    #[test]
    fn dual_matches_lattice_search() {
        let g = g1(3);
        let (lambda, p) = (0.5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..3 {
            let gv = GridFunction::new(g, (0..8).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let solver = h_norm_dual(&gv, p, lambda, 1e-4, Fidelity::Aligned).unwrap().value;
            let mut best = 0.0f64;
            for code in 0..3usize.pow(8) {
                let mut c = code;
                let vals: Vec<f64> = (0..8)
                    .map(|_| {
                        let v = (c % 3) as f64 / 2.0;
                        c /= 3;
                        v
                    })
                    .collect();
                let f = GridFunction::new(g, vals).unwrap();
                let nrm = norms::lpl_norm(&f, p, lambda, Fidelity::Aligned).unwrap().value;
                if nrm > 0.0 {
                    best = best.max(f.dot(&gv).unwrap() / nrm);
                }
            }
            assert!(best <= solver * (1.0 + 1e-9));
            assert!(solver <= best * 1.05, "solver {solver} vs lattice {best}");
        }
    }
}
