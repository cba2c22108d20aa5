//! Maximal, fractional maximal and fractional integral operators, their
//! dyadic and weighted variants, and the sparse forms.
//!
//! Every operator is evaluated at cell centers. Dilated cubes are clipped to
//! the root and averaged over the clipped volume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{sliding_max, Cube, Fidelity, Grid, GridFunction, Integrator};
use crate::sparse::SparseFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    FractionalMaximal,
    LocalDyadicMaximal,
    FractionalIntegral,
    CenteredWeightedMaximal,
    DyadicWeightedMaximal,
    SparseMaximalForm,
    SparseIntegralForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorOutput {
    pub result: GridFunction,
    pub tag: OperatorTag,
    pub alpha: Option<f64>,
    pub fidelity: Option<Fidelity>,
    /// Base cube for the local and sparse operators.
    pub base: Option<Cube>,
    /// Dilated cubes that had to be clipped to the root.
    pub clipped: usize,
}

impl OperatorOutput {
    fn new(result: GridFunction, tag: OperatorTag) -> Self {
        Self { result, tag, alpha: None, fidelity: None, base: None, clipped: 0 }
    }

    pub fn values(&self) -> &[f64] {
        self.result.values()
    }
}

fn check_alpha(alpha: f64, n: usize, open_left: bool) -> Result<()> {
    let ok = if open_left { alpha > 0.0 } else { alpha >= 0.0 };
    if !ok || alpha >= n as f64 {
        let lo = if open_left { "0 <" } else { "0 <=" };
        return Err(Error::InvalidInput(format!("need {lo} alpha < n, got {alpha}")));
    }
    Ok(())
}

/// `M_α f(x) = sup_{Q ∋ x} |Q|^{α/n} avg_Q |f|` over the selected family;
/// `α = 0` gives the Hardy–Littlewood maximal function.
pub fn fractional_maximal(f: &GridFunction, alpha: f64, fidelity: Fidelity) -> Result<OperatorOutput> {
    let grid = f.grid();
    check_alpha(alpha, grid.dim(), false)?;
    let ig = Integrator::new(&f.abs());
    let layers = fidelity.layers(grid, None)?;
    let n = grid.side_cells();
    let dim = grid.dim();
    let per_layer = exec::map_slice(&layers, |layer| {
        let scale = (layer.side as f64 * grid.cell_side()).powf(alpha - dim as f64);
        let cnt = layer.count;
        let rows = if dim == 1 { 1 } else { cnt };
        let mut vals = vec![0.0; cnt * rows];
        for i in 0..cnt {
            for j in 0..rows {
                vals[i * rows + j] = ig.integral(&layer.cube(grid, [i, j])) * scale;
            }
        }
        if dim == 1 {
            return sliding_max(&vals, n, |x| layer.covering(0, x as i64));
        }
        // Separable window maximum: along the second axis, then the first.
        let mut inner = vec![f64::NEG_INFINITY; cnt * n];
        for i in 0..cnt {
            let row = sliding_max(&vals[i * cnt..(i + 1) * cnt], n, |y| layer.covering(1, y as i64));
            for y in 0..n {
                inner[y * cnt + i] = row[y];
            }
        }
        let mut out = vec![f64::NEG_INFINITY; n * n];
        for y in 0..n {
            let col = sliding_max(&inner[y * cnt..(y + 1) * cnt], n, |x| layer.covering(0, x as i64));
            for x in 0..n {
                out[x * n + y] = col[x];
            }
        }
        out
    });
    let mut result = vec![0.0f64; grid.cell_count()];
    for layer in per_layer {
        for (r, v) in result.iter_mut().zip(layer) {
            *r = r.max(v);
        }
    }
    let mut out = OperatorOutput::new(GridFunction::new(grid, result)?, OperatorTag::FractionalMaximal);
    out.alpha = Some(alpha);
    out.fidelity = Some(fidelity);
    Ok(out)
}

/// Values of `v` on every dyadic cube inside a dyadic `region`, by level
/// relative to the region; nodes are row-major in relative coordinates.
pub(crate) struct DyadicTable {
    pub region: Cube,
    pub levels: Vec<Vec<f64>>,
}

impl DyadicTable {
    pub fn build(region: &Cube, v: impl Fn(&Cube) -> f64 + Sync + Send) -> Result<Self> {
        if !region.is_dyadic() {
            return Err(Error::Domain("base cube must be dyadic".into()));
        }
        let depth = region.side_cells().trailing_zeros() as usize;
        let dim = region.dim();
        let mut levels = Vec::with_capacity(depth + 1);
        for j in 0..=depth {
            let count = 1usize << (j * dim);
            levels.push(exec::map_range(count, |node| v(&Self::cube_of(region, j, node))));
        }
        Ok(Self { region: *region, levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn cube_of(region: &Cube, j: usize, node: usize) -> Cube {
        let side = region.side_cells() >> j;
        let per = 1usize << j;
        let lo = region.lo();
        let (a, b) = if region.dim() == 1 { (node, 0) } else { (node / per, node % per) };
        let grid = region.grid();
        Cube::lattice(grid, [lo[0] + a as i64 * side, if region.dim() == 1 { 0 } else { lo[1] + b as i64 * side }], side)
    }

    pub fn cube(&self, j: usize, node: usize) -> Cube {
        Self::cube_of(&self.region, j, node)
    }

    /// Node at relative level `j` containing the grid cell with coordinates `c`.
    pub fn node_at(&self, j: usize, c: [usize; 2]) -> usize {
        let shift = self.depth() - j;
        let lo = self.region.lo();
        let a = (c[0] - lo[0] as usize) >> shift;
        if self.region.dim() == 1 {
            a
        } else {
            let b = (c[1] - lo[1] as usize) >> shift;
            (a << j) + b
        }
    }
}

/// `avg_{3Q} f` over the clipped dilate, and whether clipping occurred.
pub(crate) fn triple_average(ig: &Integrator, q: &Cube) -> (f64, bool) {
    let t = q.dilate(3.0).expect("factor 3 is valid");
    (ig.integral(&t) / t.volume(), t.is_clipped())
}

/// `M̃_α f(x) = sup_{Q ∈ 𝒟(Q0), Q ∋ x} |Q|^{α/n} avg_{3Q} |f|` on `Q0`, zero elsewhere.
pub fn local_dyadic_maximal(f: &GridFunction, alpha: f64, q0: &Cube) -> Result<OperatorOutput> {
    let grid = f.grid();
    check_alpha(alpha, grid.dim(), false)?;
    if q0.grid() != grid {
        return Err(Error::Mismatch("base cube belongs to another grid".into()));
    }
    let ig = Integrator::new(&f.abs());
    let n = grid.dim() as f64;
    let table = DyadicTable::build(q0, |q| triple_average(&ig, q).0 * q.nominal_volume().powf(alpha / n))?;
    let clipped = (0..=table.depth())
        .map(|j| (0..table.levels[j].len()).filter(|&k| table.cube(j, k).dilate(3.0).unwrap().is_clipped()).count())
        .sum();
    let mut result = vec![0.0; grid.cell_count()];
    for c in q0.cells() {
        let coords = grid.coords(c);
        result[c] = (0..=table.depth())
            .map(|j| table.levels[j][table.node_at(j, coords)])
            .fold(0.0, f64::max);
    }
    let mut out = OperatorOutput::new(GridFunction::new(grid, result)?, OperatorTag::LocalDyadicMaximal);
    out.alpha = Some(alpha);
    out.base = Some(*q0);
    out.clipped = clipped;
    Ok(out)
}

/// Discrete Riesz kernel: the weight of cell `j` in `I_α f` at the center of cell `i`.
#[derive(Debug, Clone)]
pub struct RieszKernel {
    grid: Grid,
    alpha: f64,
    /// Indexed by absolute offset; row-major over `[0, N)^n`.
    table: Vec<f64>,
}

impl RieszKernel {
    pub fn new(grid: Grid, alpha: f64) -> Result<Self> {
        check_alpha(alpha, grid.dim(), true)?;
        let n = grid.side_cells();
        let h = grid.cell_side();
        let dim = grid.dim();
        let vol = grid.cell_volume();
        let self_cell = if dim == 1 {
            2.0 * (h / 2.0).powf(alpha) / alpha
        } else {
            let c = 2.0 * std::f64::consts::PI / alpha;
            0.5 * (c * (h / 2.0).powf(alpha) + c * (h / std::f64::consts::SQRT_2).powf(alpha))
        };
        let count = n.pow(dim as u32);
        let table = (0..count)
            .map(|k| {
                let (a, b) = if dim == 1 { (k, 0) } else { (k / n, k % n) };
                if a == 0 && b == 0 {
                    self_cell
                } else {
                    let r = ((a * a + b * b) as f64).sqrt() * h;
                    vol * r.powf(alpha - dim as f64)
                }
            })
            .collect();
        Ok(Self { grid, alpha, table })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let a = self.grid.coords(i);
        let b = self.grid.coords(j);
        let d0 = a[0].abs_diff(b[0]);
        let d1 = a[1].abs_diff(b[1]);
        self.table[if self.grid.dim() == 1 { d0 } else { d0 * self.grid.side_cells() + d1 }]
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.grid() != self.grid {
            return Err(Error::Mismatch("kernel and function grids differ".into()));
        }
        let v = f.values();
        let support: Vec<usize> = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
        let values = exec::map_range(self.grid.cell_count(), |i| {
            let terms: Vec<f64> = support.iter().map(|&j| self.weight(i, j) * v[j]).collect();
            crate::grid::pairwise_sum(&terms)
        });
        GridFunction::new(self.grid, values)
    }
}

/// `I_α f(x) = ∫ f(y) |x - y|^{α - n} dy` by dense cell-to-cell summation.
///
/// Off-diagonal cells use the center-to-center distance. The self-cell weight
/// is `2 (h/2)^α / α` in 1D and the midpoint of `(2π/α)(h/2)^α` and
/// `(2π/α)(h/√2)^α` in 2D.
pub fn fractional_integral(f: &GridFunction, alpha: f64) -> Result<OperatorOutput> {
    let kernel = RieszKernel::new(f.grid(), alpha)?;
    let mut out = OperatorOutput::new(kernel.apply(f)?, OperatorTag::FractionalIntegral);
    out.alpha = Some(alpha);
    Ok(out)
}

/// `M^c_σ f(x) = sup_r σ(Q_r)^{-1} ∫_{Q_r} |f| σ` over cubes `Q_r` centered at
/// the cell of `x` with side `2r + 1` cells, clipped to the root.
pub fn centered_weighted_maximal(f: &GridFunction, sigma: &GridFunction) -> Result<OperatorOutput> {
    sigma.check_weight()?;
    let grid = f.grid();
    let num = Integrator::new(&f.abs().mul(sigma)?);
    let den = Integrator::new(sigma);
    let n = grid.side_cells() as i64;
    let values = exec::map_range(grid.cell_count(), |i| {
        let c = grid.coords(i);
        let mut best = 0.0f64;
        for r in 0..n {
            let lo = [c[0] as i64 - r, c[1] as i64 - r];
            let q = Cube::lattice(grid, lo, 2 * r + 1);
            best = best.max(num.integral(&q) / den.integral(&q));
            if q.extent_cells() == grid.cell_count() {
                break;
            }
        }
        best
    });
    Ok(OperatorOutput::new(GridFunction::new(grid, values)?, OperatorTag::CenteredWeightedMaximal))
}

/// `M_{dyadic,w} f(x) = sup_{Q dyadic ∋ x} w(Q)^{-1} ∫_Q |f| w`.
pub fn dyadic_weighted_maximal(f: &GridFunction, w: &GridFunction) -> Result<OperatorOutput> {
    w.check_weight()?;
    let grid = f.grid();
    let num = Integrator::new(&f.abs().mul(w)?);
    let den = Integrator::new(w);
    let table = DyadicTable::build(&grid.root(), |q| num.integral(q) / den.integral(q))?;
    let values = exec::map_range(grid.cell_count(), |i| {
        let c = grid.coords(i);
        (0..=table.depth()).map(|j| table.levels[j][table.node_at(j, c)]).fold(0.0, f64::max)
    });
    let mut out = OperatorOutput::new(GridFunction::new(grid, values)?, OperatorTag::DyadicWeightedMaximal);
    out.fidelity = Some(Fidelity::Dyadic);
    Ok(out)
}

fn sparse_form(f: &GridFunction, family: &SparseFamily, alpha: f64, full_cubes: bool) -> Result<OperatorOutput> {
    let grid = f.grid();
    if family.base.grid() != grid {
        return Err(Error::Mismatch("sparse family belongs to another grid".into()));
    }
    let ig = Integrator::new(&f.abs());
    let n = grid.dim() as f64;
    let mut owner = vec![false; grid.cell_count()];
    let mut result = vec![0.0; grid.cell_count()];
    let mut clipped = 0;
    for m in &family.members {
        let (avg, clip) = triple_average(&ig, &m.cube);
        clipped += clip as usize;
        let value = m.cube.nominal_volume().powf(alpha / n) * avg;
        for &c in &m.e_cells {
            if owner[c] {
                return Err(Error::Overlap { cell: c });
            }
            owner[c] = true;
            if !full_cubes {
                result[c] += value;
            }
        }
        if full_cubes {
            for c in m.cube.cells() {
                result[c] += value;
            }
        }
    }
    let tag = if full_cubes { OperatorTag::SparseIntegralForm } else { OperatorTag::SparseMaximalForm };
    let mut out = OperatorOutput::new(GridFunction::new(grid, result)?, tag);
    out.alpha = Some(alpha);
    out.base = Some(family.base);
    out.clipped = clipped;
    Ok(out)
}

/// `L_α^𝒮 f(x) = Σ_{Q ∈ 𝒮} 1_{E_Q}(x) |Q|^{α/n} avg_{3Q} f`.
pub fn sparse_maximal_form(f: &GridFunction, family: &SparseFamily, alpha: f64) -> Result<OperatorOutput> {
    sparse_form(f, family, alpha, false)
}

/// `I_α^𝒮 f(x) = Σ_{Q ∈ 𝒮} 1_Q(x) |Q|^{α/n} avg_{3Q} f`.
pub fn sparse_integral_form(f: &GridFunction, family: &SparseFamily, alpha: f64) -> Result<OperatorOutput> {
    sparse_form(f, family, alpha, true)
}

/// `I_α^{𝒟(Q0)} f(x) = Σ_{Q ∈ 𝒟(Q0), Q ∋ x} |Q|^{α/n} avg_{3Q} f` on `Q0`.
pub fn dyadic_integral_form(f: &GridFunction, alpha: f64, q0: &Cube) -> Result<GridFunction> {
    let grid = f.grid();
    let ig = Integrator::new(&f.abs());
    let n = grid.dim() as f64;
    let table = DyadicTable::build(q0, |q| triple_average(&ig, q).0 * q.nominal_volume().powf(alpha / n))?;
    let mut result = vec![0.0; grid.cell_count()];
    for c in q0.cells() {
        let coords = grid.coords(c);
        result[c] = (0..=table.depth()).map(|j| table.levels[j][table.node_at(j, coords)]).sum();
    }
    GridFunction::new(grid, result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dyadic_cubes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_nonneg(g: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::new(g, (0..g.cell_count()).map(|_| rng.gen_range(0.0f64..1.0).powi(4) * 3.0).collect()).unwrap()
    }

    /// Direct definition: every family cube containing the cell.
    fn brute_maximal(f: &GridFunction, alpha: f64, fid: Fidelity) -> Vec<f64> {
        let g = f.grid();
        let cubes = fid.cubes(g, None).unwrap();
        (0..g.cell_count())
            .map(|i| {
                let c = g.coords(i);
                cubes
                    .iter()
                    .filter(|q| q.contains_cell(c))
                    .map(|q| q.nominal_volume().powf(alpha / g.dim() as f64) * f.abs().average(q).unwrap())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    #[test]
    fn maximal_of_constant() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 3).unwrap();
            let f = GridFunction::constant(g, 2.5);
            for fid in [Fidelity::Dyadic, Fidelity::Aligned, Fidelity::Shifted] {
                for alpha in [0.0, 0.5] {
                    let m = fractional_maximal(&f, alpha, fid).unwrap();
                    assert!(m.values().iter().all(|&v| (v - 2.5).abs() < 1e-14));
                }
            }
        }
    }

    #[test]
    fn maximal_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (dim, l) in [(1, 5), (2, 3)] {
            let g = Grid::new(dim, l).unwrap();
            for _ in 0..4 {
                let f = random_nonneg(g, &mut rng);
                let alpha = rng.gen_range(0.0..dim as f64);
                for fid in [Fidelity::Dyadic, Fidelity::Aligned, Fidelity::Shifted] {
                    let fast = fractional_maximal(&f, alpha, fid).unwrap();
                    let slow = brute_maximal(&f, alpha, fid);
                    for (a, b) in fast.values().iter().zip(&slow) {
                        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{fid:?}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn maximal_of_half_indicator() {
        // For x in the right half the best interval is [0, x_right).
        let g = Grid::new(1, 5).unwrap();
        let f = GridFunction::from_centers(g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        let m = fractional_maximal(&f, 0.0, Fidelity::Aligned).unwrap();
        for i in 16..32 {
            let right = (i + 1) as f64 / 32.0;
            assert!((m.values()[i] - 0.5 / right).abs() < 1e-14);
        }
        assert!(m.values()[..16].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fidelity_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let g = Grid::new(1, 6).unwrap();
        let f = random_nonneg(g, &mut rng);
        let d = fractional_maximal(&f, 0.3, Fidelity::Dyadic).unwrap();
        let s = fractional_maximal(&f, 0.3, Fidelity::Shifted).unwrap();
        let a = fractional_maximal(&f, 0.3, Fidelity::Aligned).unwrap();
        for i in 0..64 {
            assert!(d.values()[i] <= s.values()[i] * (1.0 + 1e-12));
            assert!(s.values()[i] <= a.values()[i] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn local_dyadic_constant_and_point_mass() {
        let g = Grid::new(1, 3).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let q0 = g.dyadic(1, [0, 0]).unwrap();
        let m = local_dyadic_maximal(&one, 0.5, &q0).unwrap();
        for c in q0.cells() {
            assert!((m.values()[c] - 0.5f64.sqrt()).abs() < 1e-14);
        }
        assert!(m.values()[4..].iter().all(|&v| v == 0.0));
        // Point mass at cell 2; walk the ancestors of each cell by hand.
        let mut vals = vec![0.0; 8];
        vals[2] = 1.0;
        let f = GridFunction::new(g, vals).unwrap();
        let r = local_dyadic_maximal(&f, 0.0, &g.root()).unwrap();
        // Triples in cells: cell 2 → [1,4), cell 3 → [2,5), cell 1 → [0,3), all 1/3;
        // [0,2) → [0,4) gives 1/4; [4,6) → [2,8) gives 1/6; the root gives 1/8.
        assert!((r.values()[2] - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.values()[3] - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.values()[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.values()[0] - 1.0 / 4.0).abs() < 1e-14);
        assert!((r.values()[4] - 1.0 / 6.0).abs() < 1e-14);
        assert!((r.values()[7] - 1.0 / 8.0).abs() < 1e-14);
        assert!(local_dyadic_maximal(&f, 0.0, &g.cube([1, 0], 2).unwrap()).is_err());
    }

    #[test]
    fn riesz_potential_of_one() {
        // I_{1/2} 1 at x = 1/2 is (x^α + (1-x)^α)/α = 2√2. The midpoint rule
        // near the singularity converges like h^α.
        for l in [6, 8, 10] {
            let g = Grid::new(1, l).unwrap();
            let r = fractional_integral(&GridFunction::constant(g, 1.0), 0.5).unwrap();
            let n = g.side_cells();
            let h = g.cell_side();
            // Cells n/2 - 1 and n/2 straddle 1/2; average them.
            let at_half = 0.5 * (r.values()[n / 2 - 1] + r.values()[n / 2]);
            let exact = 2.0 * 2f64.sqrt();
            assert!((at_half - exact).abs() < 0.2 * h.sqrt(), "L={l}: {at_half}");
        }
    }

    #[test]
    fn riesz_linearity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for (dim, l) in [(1, 6), (2, 3)] {
            let g = Grid::new(dim, l).unwrap();
            let f = random_nonneg(g, &mut rng);
            let h = random_nonneg(g, &mut rng);
            let alpha = 0.4;
            let combo = f.scale(2.0).add(&h.scale(-3.0)).unwrap();
            let lhs = fractional_integral(&combo, alpha).unwrap().result;
            let a = fractional_integral(&f, alpha).unwrap().result;
            let b = fractional_integral(&h, alpha).unwrap().result;
            for i in 0..g.cell_count() {
                let want = 2.0 * a.values()[i] - 3.0 * b.values()[i];
                assert!((lhs.values()[i] - want).abs() < 1e-12 * (a.values()[i] + b.values()[i]) * 5.0);
            }
            let fg = a.dot(&h).unwrap();
            let gf = b.dot(&f).unwrap();
            assert!((fg - gf).abs() < 1e-12 * fg);
        }
        assert!(fractional_integral(&GridFunction::constant(Grid::new(1, 2).unwrap(), 1.0), 0.0).is_err());
    }

    #[test]
    fn centered_weighted_maximal_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let g = Grid::new(1, 5).unwrap();
        let sigma = GridFunction::new(g, (0..32).map(|_| rng.gen_range(-1.0f64..1.0).exp()).collect()).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let m = centered_weighted_maximal(&one, &sigma).unwrap();
        assert!(m.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let f = random_nonneg(g, &mut rng);
        let c = centered_weighted_maximal(&f, &one).unwrap();
        let u = fractional_maximal(&f, 0.0, Fidelity::Aligned).unwrap();
        for i in 0..32 {
            assert!(c.values()[i] <= u.values()[i] * (1.0 + 1e-12));
            assert!(u.values()[i] <= 3.0 * c.values()[i] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dyadic_weighted_maximal_constant_and_localization() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let g = Grid::new(1, 5).unwrap();
        let w = GridFunction::new(g, (0..32).map(|_| rng.gen_range(-1.0f64..1.0).exp()).collect()).unwrap();
        let m = dyadic_weighted_maximal(&GridFunction::constant(g, 4.0), &w).unwrap();
        assert!(m.values().iter().all(|&v| (v - 4.0).abs() < 1e-13));
        let q = g.dyadic(2, [1, 0]).unwrap();
        let f = random_nonneg(g, &mut rng);
        let outside = f.zip_map(&GridFunction::indicator(&q), |a, b| a * (1.0 - b)).unwrap();
        let r = dyadic_weighted_maximal(&outside, &w).unwrap();
        let vals: Vec<f64> = q.cells().map(|c| r.values()[c]).collect();
        assert!(vals.iter().all(|&v| v == vals[0]));
    }

    #[test]
    fn dyadic_integral_form_is_chain_sum() {
        let g = Grid::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let f = random_nonneg(g, &mut rng);
        let q0 = g.root();
        let got = dyadic_integral_form(&f, 0.5, &q0).unwrap();
        for c in 0..8 {
            let want: f64 = dyadic_cubes(g, None)
                .unwrap()
                .iter()
                .filter(|q| q.contains_cell([c, 0]))
                .map(|q| {
                    let t = q.dilate(3.0).unwrap();
                    q.side_length().powf(0.5) * f.integrate_extent(&t) / t.volume()
                })
                .sum();
            assert!((got.values()[c] - want).abs() < 1e-13);
        }
    }
}
