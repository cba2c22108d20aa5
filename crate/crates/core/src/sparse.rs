//! Stopping-time sparse families for the fractional maximal operator and
//! the fractional integral, with verification and proof audits.
//!
//! Thresholds are `t_k = a₀ a^k`. A dyadic cube `Q ⊆ Q₀` stops at generation
//! `k` when its stopping value reaches `t_k` and no strict ancestor's value
//! does; `E_Q` is the part of `Q` not covered by generation `k + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Cube, Fidelity, GridFunction, Integrator};
use crate::operators::{
    dyadic_integral_form, fractional_integral, fractional_maximal, local_dyadic_maximal, sparse_integral_form,
    sparse_maximal_form, triple_average, DyadicTable,
};

/// Relative slack used when comparing against exact constants.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseKind {
    /// Thresholds on `|Q|^{α/n} avg_{3Q} f`, ratio `a = 9^n 2^{n+1-α}`.
    Maximal,
    /// Thresholds on `avg_{3Q} f`, ratio `a = 9^n 2^{n+1}`.
    Integral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMember {
    pub cube: Cube,
    pub generation: u32,
    /// `avg_{3Q} f` over the clipped dilate.
    pub average: f64,
    /// The quantity compared against the thresholds.
    pub value: f64,
    /// Cells of `E_Q`, ascending.
    pub e_cells: Vec<usize>,
    /// Whether `3Q` was clipped to the root.
    pub clipped: bool,
}

impl SparseMember {
    pub fn ratio(&self) -> f64 {
        self.e_cells.len() as f64 / self.cube.extent_cells() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    pub base: Cube,
    pub kind: SparseKind,
    pub alpha: f64,
    pub a0: f64,
    pub a: f64,
    pub members: Vec<SparseMember>,
}

impl SparseFamily {
    pub fn threshold(&self, k: u32) -> f64 {
        self.a0 * self.a.powi(k as i32)
    }

    /// Upper stopping factor: `2^{n-α}` for the maximal scheme, `2^n` for the integral one.
    pub fn upper_factor(&self) -> f64 {
        let n = self.base.dim() as f64;
        match self.kind {
            SparseKind::Maximal => 2f64.powf(n - self.alpha),
            SparseKind::Integral => 2f64.powf(n),
        }
    }

    pub fn generations(&self) -> u32 {
        self.members.iter().map(|m| m.generation + 1).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    /// `c_∞ = sup_{Q ⊇ Q₀ dyadic} |Q|^{α/n} avg_Q f`, truncated at the root.
    Sup { value: f64 },
    /// `C_∞ = Σ_k |κ^k Q₀|^{α/n} avg_{κ^k Q₀} f`, truncated once `κ^k Q₀` covers the root.
    Series { value: f64, kappa: f64, terms: usize },
}

impl Tail {
    pub fn value(&self) -> f64 {
        match *self {
            Tail::Sup { value } | Tail::Series { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseResult {
    pub family: SparseFamily,
    pub tail: Tail,
    /// Filled in by the domination checks.
    pub domination: Option<f64>,
}

fn ratio_for(kind: SparseKind, n: usize, alpha: f64) -> f64 {
    let n = n as f64;
    match kind {
        SparseKind::Maximal => 9f64.powf(n) * 2f64.powf(n + 1.0 - alpha),
        SparseKind::Integral => 9f64.powf(n) * 2f64.powf(n + 1.0),
    }
}

fn check_input(f: &GridFunction, alpha: f64, q0: &Cube, open_left: bool) -> Result<()> {
    let n = f.grid().dim() as f64;
    if !(alpha >= 0.0 && alpha < n) || (open_left && alpha == 0.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} out of range")));
    }
    if !f.is_nonnegative() {
        return Err(Error::Domain("sparse construction needs f >= 0".into()));
    }
    if q0.grid() != f.grid() || !q0.is_dyadic() {
        return Err(Error::Domain("base cube must be a dyadic cube of the function's grid".into()));
    }
    Ok(())
}

fn build(f: &GridFunction, alpha: f64, q0: &Cube, kind: SparseKind) -> Result<SparseFamily> {
    let grid = f.grid();
    let n = grid.dim();
    let ig = Integrator::new(f);
    let power = match kind {
        SparseKind::Maximal => alpha,
        SparseKind::Integral => 0.0,
    };
    let table = DyadicTable::build(q0, |q| triple_average(&ig, q).0 * q.nominal_volume().powf(power / n as f64))?;
    let a = ratio_for(kind, n, alpha);
    let a0 = table.levels[0][0];
    let mut family = SparseFamily { base: *q0, kind, alpha, a0, a, members: Vec::new() };
    if a0 <= 0.0 {
        return Ok(family);
    }
    let threshold = |k: u32| a0 * a.powi(k as i32);
    // Top-down scan carrying the largest value over strict ancestors.
    let depth = table.depth();
    let mut anc = vec![f64::NEG_INFINITY];
    // deepest[cell] = index of the deepest stopping cube seen on the chain.
    let mut stops: Vec<(usize, usize, u32)> = Vec::new();
    for j in 0..=depth {
        let vals = &table.levels[j];
        for (node, &v) in vals.iter().enumerate() {
            let above = anc[node];
            if v < a0 {
                continue;
            }
            let mut k = 0;
            while threshold(k + 1) <= v {
                k += 1;
            }
            if threshold(k) > above {
                stops.push((j, node, k));
            }
        }
        if j < depth {
            let per = 1usize << j;
            let next_per = per << 1;
            let count = if n == 1 { next_per } else { next_per * next_per };
            anc = (0..count)
                .map(|c| {
                    let parent = if n == 1 { c >> 1 } else { ((c / next_per) >> 1) * per + ((c % next_per) >> 1) };
                    anc[parent].max(vals[parent])
                })
                .collect();
        }
    }
    // E_Q: cells whose deepest stopping ancestor is Q.
    let mut owner: Vec<Option<usize>> = vec![None; grid.cell_count()];
    for (idx, &(j, node, _)) in stops.iter().enumerate() {
        for c in table.cube(j, node).cells() {
            owner[c] = Some(idx);
        }
    }
    let mut e_sets: Vec<Vec<usize>> = vec![Vec::new(); stops.len()];
    for c in q0.cells() {
        if let Some(idx) = owner[c] {
            e_sets[idx].push(c);
        }
    }
    for ((j, node, k), e) in stops.into_iter().zip(e_sets) {
        let cube = table.cube(j, node);
        let (average, clipped) = triple_average(&ig, &cube);
        family.members.push(SparseMember { cube, generation: k, average, value: table.levels[j][node], e_cells: e, clipped });
    }
    family.members.sort_by(|x, y| x.generation.cmp(&y.generation).then(x.cube.cmp(&y.cube)));
    Ok(family)
}

/// `c_∞` over the dyadic ancestors of `Q₀` inside the root, `Q₀` included.
pub fn tail_sup(f: &GridFunction, alpha: f64, q0: &Cube) -> f64 {
    let n = f.grid().dim() as f64;
    let ig = Integrator::new(f);
    let mut best = 0.0f64;
    let mut q = Some(*q0);
    while let Some(c) = q {
        best = best.max(c.nominal_volume().powf(alpha / n) * ig.integral(&c) / c.volume());
        q = c.parent();
    }
    best
}

/// `C_∞` with `κ^k Q₀` clipped to the root; the power factor uses the nominal
/// volume and the average the clipped one.
pub fn tail_series(f: &GridFunction, alpha: f64, q0: &Cube, kappa: f64) -> Result<(f64, usize)> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("need kappa > 1, got {kappa}")));
    }
    let n = f.grid().dim() as f64;
    let ig = Integrator::new(f);
    let root_cells = f.grid().cell_count();
    let mut total = 0.0;
    let mut k = 0i32;
    loop {
        let c = q0.dilate(kappa.powi(k))?;
        total += c.nominal_volume().powf(alpha / n) * ig.integral(&c) / c.volume();
        k += 1;
        if c.extent_cells() == root_cells {
            return Ok((total, k as usize));
        }
    }
}

/// Sparse family for `M_α` with `a₀ = |Q₀|^{α/n} avg_{3Q₀} f`, `a = 9^n 2^{n+1-α}`.
pub fn build_sparse_maximal(f: &GridFunction, alpha: f64, q0: &Cube) -> Result<SparseResult> {
    check_input(f, alpha, q0, false)?;
    let family = build(f, alpha, q0, SparseKind::Maximal)?;
    let tail = Tail::Sup { value: if family.is_empty() { 0.0 } else { tail_sup(f, alpha, q0) } };
    Ok(SparseResult { family, tail, domination: None })
}

/// Sparse family for `I_α` with `a₀ = avg_{3Q₀} f`, `a = 9^n 2^{n+1}`.
pub fn build_sparse_integral(f: &GridFunction, alpha: f64, q0: &Cube, kappa: f64) -> Result<SparseResult> {
    check_input(f, alpha, q0, true)?;
    let family = build(f, alpha, q0, SparseKind::Integral)?;
    let tail = if family.is_empty() {
        Tail::Series { value: 0.0, kappa, terms: 0 }
    } else {
        let (value, terms) = tail_series(f, alpha, q0, kappa)?;
        Tail::Series { value, kappa, terms }
    };
    Ok(SparseResult { family, tail, domination: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsenessCheck {
    pub ok: bool,
    pub min_ratio: f64,
    pub witness: Option<Cube>,
    pub disjoint: bool,
    pub contained: bool,
}

/// Checks `E_Q ⊆ Q`, pairwise disjointness and `|E_Q| ≥ η|Q|`.
pub fn verify_sparse(family: &SparseFamily, eta: f64) -> SparsenessCheck {
    let grid = family.base.grid();
    let mut seen = vec![false; grid.cell_count()];
    let mut disjoint = true;
    let mut contained = true;
    let mut min_ratio = f64::INFINITY;
    let mut witness = None;
    for m in &family.members {
        for &c in &m.e_cells {
            if c >= seen.len() || !m.cube.contains_cell(grid.coords(c)) {
                contained = false;
                witness.get_or_insert(m.cube);
                continue;
            }
            if seen[c] {
                disjoint = false;
                witness.get_or_insert(m.cube);
            }
            seen[c] = true;
        }
        let r = m.ratio();
        if r < min_ratio {
            min_ratio = r;
        }
        if r < eta {
            witness.get_or_insert(m.cube);
        }
    }
    let ok = disjoint && contained && min_ratio >= eta;
    SparsenessCheck { ok, min_ratio, witness, disjoint, contained }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingCheck {
    pub ok: bool,
    /// Smallest `value / t_k`; must be at least 1.
    pub min_lower: f64,
    /// Largest `value / (factor · t_k)`; must be at most 1.
    pub max_upper: f64,
    pub violations: usize,
    /// Every generation-(k+1) cube lies in a generation-k cube.
    pub nested: bool,
}

/// The two-sided stopping bound on every member, recomputing each value from `f`.
pub fn verify_stopping(f: &GridFunction, family: &SparseFamily) -> Result<StoppingCheck> {
    check_recorded(f, family)?;
    let factor = family.upper_factor();
    let mut min_lower = f64::INFINITY;
    let mut max_upper = 0.0f64;
    let mut violations = 0;
    for m in &family.members {
        let t = family.threshold(m.generation);
        let lower = m.value / t;
        let upper = m.value / (factor * t);
        min_lower = min_lower.min(lower);
        max_upper = max_upper.max(upper);
        if lower < 1.0 || upper > 1.0 + SLACK {
            violations += 1;
        }
    }
    let nested = family.members.iter().filter(|m| m.generation > 0).all(|m| {
        family.members.iter().any(|p| p.generation + 1 == m.generation && p.cube.contains(&m.cube))
    });
    if family.members.is_empty() {
        min_lower = 1.0;
    }
    Ok(StoppingCheck { ok: violations == 0 && nested, min_lower, max_upper, violations, nested })
}

fn check_recorded(f: &GridFunction, family: &SparseFamily) -> Result<()> {
    if family.base.grid() != f.grid() {
        return Err(Error::Mismatch("family and function live on different grids".into()));
    }
    let ig = Integrator::new(f);
    for m in &family.members {
        let (avg, _) = triple_average(&ig, &m.cube);
        if (avg - m.average).abs() > 1e-12 * avg.abs().max(m.average.abs()) {
            return Err(Error::Mismatch(format!("recorded average {} differs from {}", m.average, avg)));
        }
    }
    Ok(())
}

/// A cell is boundary-affected when some cube of `𝒟(Q₀)` other than `Q₀`
/// containing it has a clipped triple.
fn boundary_mask(q0: &Cube) -> Vec<bool> {
    let grid = q0.grid();
    let mut mask = vec![false; grid.cell_count()];
    let mut stack: Vec<Cube> = q0.children();
    while let Some(q) = stack.pop() {
        if q.dilate(3.0).expect("factor 3").is_clipped() {
            for c in q.cells() {
                mask[c] = true;
            }
        } else if q.side_cells() > 1 {
            stack.extend(q.children());
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    /// The explicit constant from the proof.
    pub constant: f64,
    /// `max_{x ∈ Q₀}` of local operator over sparse form.
    pub local_ratio: f64,
    pub local_ok: bool,
    pub local_witness: Option<usize>,
    /// Measured constant for the full operator, all cells of `Q₀`.
    pub full_ratio: f64,
    pub full_ratio_interior: f64,
    pub full_ratio_boundary: f64,
    pub tail: f64,
    pub interior_cells: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn split_max(cells: &[usize], mask: &[bool], r: impl Fn(usize) -> f64 + Sync + Send) -> (f64, f64, f64, Option<usize>) {
    let vals = exec::map_slice(cells, |&c| r(c));
    let mut all = 0.0f64;
    let mut inner = 0.0f64;
    let mut outer = 0.0f64;
    let mut witness = None;
    for (&c, &v) in cells.iter().zip(&vals) {
        if v > all || witness.is_none() {
            if v > all {
                all = v;
            }
            witness = Some(c);
        }
        if mask[c] {
            outer = outer.max(v);
        } else {
            inner = inner.max(v);
        }
    }
    (all, inner, outer, witness)
}

/// `M̃_α f ≤ a L_α^𝒮 f` on `Q₀` with `a` exact, and the measured constant in
/// `M_α f ≤ C L_α^𝒮 f + c_∞`.
pub fn verify_domination_maximal(
    f: &GridFunction,
    alpha: f64,
    result: &mut SparseResult,
    fidelity: Fidelity,
) -> Result<DominationReport> {
    let fam = &result.family;
    if fam.kind != SparseKind::Maximal || (fam.alpha - alpha).abs() > 0.0 {
        return Err(Error::Mismatch("family was not built by the maximal scheme with this alpha".into()));
    }
    check_recorded(f, fam)?;
    let q0 = fam.base;
    let local = local_dyadic_maximal(f, alpha, &q0)?;
    let sparse = sparse_maximal_form(f, fam, alpha)?;
    let full = fractional_maximal(f, alpha, fidelity)?;
    let cells: Vec<usize> = q0.cells().collect();
    let mask = boundary_mask(&q0);
    let (l, _, _, lw) = split_max(&cells, &mask, |c| ratio(local.values()[c], sparse.values()[c]));
    let tail = result.tail.value();
    let (fr, fi, fb, _) =
        split_max(&cells, &mask, |c| ratio(full.values()[c] - tail, sparse.values()[c]));
    let constant = fam.a;
    let local_ok = l <= constant * (1.0 + SLACK);
    result.domination = Some(fr);
    Ok(DominationReport {
        constant,
        local_ratio: l,
        local_ok,
        local_witness: if local_ok { None } else { lw },
        full_ratio: fr,
        full_ratio_interior: fi,
        full_ratio_boundary: fb,
        tail,
        interior_cells: cells.iter().filter(|&&c| !mask[c]).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralDominationReport {
    /// `a = 9^n 2^{n+1}`, as stated.
    pub constant: f64,
    /// `a / (1 - 2^{-α})`, which the generation-sum argument actually yields.
    pub proven_constant: f64,
    /// `max I_α^{𝒟(Q₀)} f / I_α^𝒮 f` on `Q₀`.
    pub dyadic_ratio: f64,
    pub dyadic_ok: bool,
    pub dyadic_ok_proven: bool,
    pub dyadic_witness: Option<usize>,
    /// Measured `C₁` in `I_α f ≤ C₁ (I_α^{𝒟(Q₀)} f + C_∞)`.
    pub c1: f64,
    pub c1_interior: f64,
    pub c1_boundary: f64,
    pub tail: f64,
    pub interior_cells: usize,
}

/// `I_α^{𝒟(Q₀)} f ≤ a I_α^𝒮 f` with `a` exact and with the proven constant,
/// plus the measured `C₁`.
pub fn verify_domination_integral(f: &GridFunction, alpha: f64, result: &mut SparseResult) -> Result<IntegralDominationReport> {
    let fam = &result.family;
    if fam.kind != SparseKind::Integral || fam.alpha != alpha {
        return Err(Error::Mismatch("family was not built by the integral scheme with this alpha".into()));
    }
    check_recorded(f, fam)?;
    let q0 = fam.base;
    let dyadic = dyadic_integral_form(f, alpha, &q0)?;
    let sparse = sparse_integral_form(f, fam, alpha)?;
    let full = fractional_integral(f, alpha)?;
    let tail = result.tail.value();
    let cells: Vec<usize> = q0.cells().collect();
    let mask = boundary_mask(&q0);
    let (d, _, _, dw) = split_max(&cells, &mask, |c| ratio(dyadic.values()[c], sparse.values()[c]));
    let (c1, ci, cb, _) = split_max(&cells, &mask, |c| ratio(full.values()[c], dyadic.values()[c] + tail));
    let constant = fam.a;
    let proven_constant = fam.a / (1.0 - 2f64.powf(-alpha));
    let dyadic_ok = d <= constant * (1.0 + SLACK);
    result.domination = Some(c1);
    Ok(IntegralDominationReport {
        constant,
        proven_constant,
        dyadic_ratio: d,
        dyadic_ok,
        dyadic_ok_proven: d <= proven_constant * (1.0 + SLACK),
        dyadic_witness: if dyadic_ok { None } else { dw },
        c1,
        c1_interior: ci,
        c1_boundary: cb,
        tail,
        interior_cells: cells.iter().filter(|&&c| !mask[c]).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofAudit {
    pub stopping: StoppingCheck,
    pub sparseness: SparsenessCheck,
    /// Integral scheme only: `max_{Q_j^k, x} Σ_{Q ∈ 𝒟_j^k} 1_Q(x)|Q|^{α/n} / |Q_j^k|^{α/n}`.
    pub generation_sum: Option<f64>,
    /// `max_Q u(Q)/u(E_Q)` with `u = w^q`, when a weight is supplied.
    pub measure_ratio: Option<f64>,
    /// `measure_ratio / C₂^q`, the implied constant in `u(Q) ≤ C C₂^q u(E_Q)`.
    pub measure_constant: Option<f64>,
}

/// Evaluates the intermediate inequalities of the stopping argument.
///
/// `weight` is `(w, q, C₂)`; `𝒟_j^k` is taken as the cubes whose smallest
/// stopping ancestor is `Q_j^k`.
pub fn audit_proof_inequalities(
    f: &GridFunction,
    weight: Option<(&GridFunction, f64, f64)>,
    result: &SparseResult,
) -> Result<ProofAudit> {
    let fam = &result.family;
    let stopping = verify_stopping(f, fam)?;
    let sparseness = verify_sparse(fam, 0.5);
    let generation_sum = match fam.kind {
        SparseKind::Integral if !fam.is_empty() => Some(generation_sum(fam)),
        _ => None,
    };
    let (measure_ratio, measure_constant) = match weight {
        Some((w, q, c2)) => {
            w.same_grid(f)?;
            let u = w.map(|v| v.powf(q));
            let vals = u.values();
            let r = fam
                .members
                .iter()
                .map(|m| {
                    let whole: f64 = m.cube.cells().map(|c| vals[c]).sum();
                    let part: f64 = m.e_cells.iter().map(|&c| vals[c]).sum();
                    ratio(whole, part)
                })
                .fold(0.0, f64::max);
            (Some(r), Some(r / c2.powf(q)))
        }
        None => (None, None),
    };
    Ok(ProofAudit { stopping, sparseness, generation_sum, measure_ratio, measure_constant })
}

fn generation_sum(fam: &SparseFamily) -> f64 {
    let grid = fam.base.grid();
    let n = grid.dim() as f64;
    let alpha = fam.alpha;
    // Smallest stopping cube containing each dyadic cube: walk cells, then
    // the chain of each cell from Q₀ down.
    let stop: std::collections::HashMap<Cube, usize> =
        fam.members.iter().enumerate().map(|(i, m)| (m.cube, i)).collect();
    let cells: Vec<usize> = fam.base.cells().collect();
    let per_cell = exec::map_slice(&cells, |&c| {
        let coords = grid.coords(c);
        let mut chain = Vec::new();
        let mut q = grid.cell(c);
        loop {
            chain.push(q);
            if q == fam.base {
                break;
            }
            q = q.parent().expect("inside base");
        }
        chain.reverse();
        let mut owner = 0usize;
        let mut sums = vec![0.0f64; fam.members.len()];
        for q in &chain {
            if let Some(&i) = stop.get(q) {
                owner = i;
            }
            debug_assert!(q.contains_cell(coords));
            sums[owner] += q.nominal_volume().powf(alpha / n);
        }
        sums.iter()
            .enumerate()
            .filter(|(_, &s)| s > 0.0)
            .map(|(i, s)| s / fam.members[i].cube.nominal_volume().powf(alpha / n))
            .fold(0.0, f64::max)
    });
    per_cell.into_iter().fold(0.0, f64::max)
}
