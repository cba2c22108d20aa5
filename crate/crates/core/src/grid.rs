//! Dyadic discretization of the root cube `[0,1)^n`.
//!
//! Functions are piecewise constant on the `2^{nL}` cells of a [`Grid`], so
//! every integral over a lattice cube is an exact finite sum. Cubes are
//! addressed in cell units; a [`Cube`] remembers its nominal extent and the
//! part of it that survives clipping to the root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported depth per dimension (keeps dense operators tractable).
pub const MAX_LEVEL_1D: u8 = 16;
pub const MAX_LEVEL_2D: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: u8,
    level: u8,
}

impl Grid {
    pub fn new(dim: usize, level: usize) -> Result<Self> {
        match dim {
            1 if level <= MAX_LEVEL_1D as usize => {}
            2 if level <= MAX_LEVEL_2D as usize => {}
            1 | 2 => {
                return Err(Error::InvalidInput(format!(
                    "level {level} too deep for dimension {dim}"
                )))
            }
            _ => return Err(Error::InvalidInput(format!("dimension must be 1 or 2, got {dim}"))),
        }
        Ok(Self { dim: dim as u8, level: level as u8 })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn level(&self) -> usize {
        self.level as usize
    }

    /// Cells per side, `2^L`.
    pub fn side_cells(&self) -> usize {
        1 << self.level
    }

    pub fn cell_count(&self) -> usize {
        self.side_cells().pow(self.dim as u32)
    }

    pub fn cell_side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_side().powi(self.dim as i32)
    }

    /// Row-major index; the first coordinate varies slowest.
    pub fn index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0]
        } else {
            coords[0] * self.side_cells() + coords[1]
        }
    }

    pub fn coords(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            let n = self.side_cells();
            [index / n, index % n]
        }
    }

    pub fn cell_center(&self, index: usize) -> [f64; 2] {
        let h = self.cell_side();
        let c = self.coords(index);
        let mut x = [0.0; 2];
        for d in 0..self.dim() {
            x[d] = (c[d] as f64 + 0.5) * h;
        }
        x
    }

    pub fn root(&self) -> Cube {
        Cube::lattice(*self, [0, 0], self.side_cells() as i64)
    }

    /// Dyadic cube of level `k` (side `2^{-k}`) with integer coordinates `coords`.
    pub fn dyadic(&self, k: usize, coords: [usize; 2]) -> Result<Cube> {
        if k > self.level() {
            return Err(Error::Domain(format!("dyadic level {k} exceeds grid depth {}", self.level)));
        }
        let side = 1usize << (self.level() - k);
        let per_side = 1usize << k;
        let mut lo = [0i64; 2];
        for d in 0..self.dim() {
            if coords[d] >= per_side {
                return Err(Error::Domain(format!("dyadic coordinate {} out of range at level {k}", coords[d])));
            }
            lo[d] = (coords[d] * side) as i64;
        }
        Ok(Cube::lattice(*self, lo, side as i64))
    }

    /// The cell with index `i` as a cube.
    pub fn cell(&self, index: usize) -> Cube {
        let c = self.coords(index);
        Cube::lattice(*self, [c[0] as i64, c[1] as i64], 1)
    }

    /// Cube from lower corner and side in cell units; errors unless it lies in the root.
    pub fn cube(&self, lo: [i64; 2], side: i64) -> Result<Cube> {
        let q = Cube::lattice(*self, lo, side);
        if side <= 0 || !q.within_root() {
            return Err(Error::Domain(format!("cube {lo:?}+{side} not inside the root")));
        }
        Ok(q)
    }
}

/// Axis-parallel lattice cube. `lo`/`side` describe the nominal cube in cell
/// units; `ext_lo`/`ext_hi` the clipped extent inside the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    dim: u8,
    level: u8,
    lo: [i64; 2],
    side: i64,
    ext_lo: [i64; 2],
    ext_hi: [i64; 2],
}

impl Cube {
    /// Builds a lattice cube and clips it to the root.
    pub fn lattice(grid: Grid, lo: [i64; 2], side: i64) -> Self {
        let n = grid.side_cells() as i64;
        let mut lo = lo;
        let mut ext_lo = [0; 2];
        let mut ext_hi = [0; 2];
        for d in 0..2 {
            if d >= grid.dim() {
                lo[d] = 0;
                ext_lo[d] = 0;
                ext_hi[d] = 1;
                continue;
            }
            ext_lo[d] = lo[d].clamp(0, n);
            ext_hi[d] = (lo[d] + side).clamp(0, n);
        }
        Self { dim: grid.dim, level: grid.level, lo, side, ext_lo, ext_hi }
    }

    pub fn grid(&self) -> Grid {
        Grid { dim: self.dim, level: self.level }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn lo(&self) -> [i64; 2] {
        self.lo
    }

    pub fn side_cells(&self) -> i64 {
        self.side
    }

    pub fn extent(&self) -> ([i64; 2], [i64; 2]) {
        (self.ext_lo, self.ext_hi)
    }

    /// ℓ(Q), the nominal side length.
    pub fn side_length(&self) -> f64 {
        self.side as f64 * self.grid().cell_side()
    }

    /// |Q| of the nominal cube.
    pub fn nominal_volume(&self) -> f64 {
        self.side_length().powi(self.dim as i32)
    }

    /// Volume of the clipped extent; equals the nominal volume for unclipped cubes.
    pub fn volume(&self) -> f64 {
        self.extent_cells() as f64 * self.grid().cell_volume()
    }

    pub fn extent_cells(&self) -> usize {
        (0..self.dim())
            .map(|d| (self.ext_hi[d] - self.ext_lo[d]).max(0) as usize)
            .product()
    }

    /// c(Q) of the nominal cube.
    pub fn center(&self) -> [f64; 2] {
        let h = self.grid().cell_side();
        let mut c = [0.0; 2];
        for d in 0..self.dim() {
            c[d] = (self.lo[d] as f64 + 0.5 * self.side as f64) * h;
        }
        c
    }

    pub fn is_clipped(&self) -> bool {
        (0..self.dim()).any(|d| self.ext_lo[d] != self.lo[d] || self.ext_hi[d] != self.lo[d] + self.side)
    }

    pub fn is_empty(&self) -> bool {
        self.extent_cells() == 0
    }

    pub fn within_root(&self) -> bool {
        !self.is_clipped() && self.side > 0
    }

    pub fn contains_cell(&self, coords: [usize; 2]) -> bool {
        (0..self.dim()).all(|d| {
            let c = coords[d] as i64;
            self.ext_lo[d] <= c && c < self.ext_hi[d]
        })
    }

    /// Extent containment (clipped extents).
    pub fn contains(&self, other: &Cube) -> bool {
        other.is_empty()
            || (0..self.dim()).all(|d| self.ext_lo[d] <= other.ext_lo[d] && other.ext_hi[d] <= self.ext_hi[d])
    }

    pub fn intersects(&self, other: &Cube) -> bool {
        (0..self.dim()).all(|d| self.ext_lo[d].max(other.ext_lo[d]) < self.ext_hi[d].min(other.ext_hi[d]))
    }

    pub fn is_dyadic(&self) -> bool {
        self.within_root()
            && (self.side as u64).is_power_of_two()
            && (0..self.dim()).all(|d| self.lo[d] % self.side == 0)
    }

    /// Dyadic level `k` with side `2^{-k}`, if the cube is dyadic.
    pub fn dyadic_level(&self) -> Option<usize> {
        self.is_dyadic()
            .then(|| self.level as usize - (self.side as u64).trailing_zeros() as usize)
    }

    /// Integer coordinates of a dyadic cube at its own level.
    pub fn dyadic_coords(&self) -> Option<[usize; 2]> {
        self.is_dyadic().then(|| {
            let mut c = [0usize; 2];
            for d in 0..self.dim() {
                c[d] = (self.lo[d] / self.side) as usize;
            }
            c
        })
    }

    pub fn children(&self) -> Vec<Cube> {
        if self.side < 2 {
            return Vec::new();
        }
        let half = self.side / 2;
        let grid = self.grid();
        let mut out = Vec::with_capacity(1 << self.dim());
        if self.dim() == 1 {
            for i in 0..2 {
                out.push(Cube::lattice(grid, [self.lo[0] + i * half, 0], half));
            }
        } else {
            for i in 0..2 {
                for j in 0..2 {
                    out.push(Cube::lattice(grid, [self.lo[0] + i * half, self.lo[1] + j * half], half));
                }
            }
        }
        out
    }

    pub fn parent(&self) -> Option<Cube> {
        let k = self.dyadic_level()?;
        if k == 0 {
            return None;
        }
        let side = self.side * 2;
        let mut lo = [0; 2];
        for d in 0..self.dim() {
            lo[d] = self.lo[d].div_euclid(side) * side;
        }
        Some(Cube::lattice(self.grid(), lo, side))
    }

    /// Cell indices of the clipped extent, row-major.
    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        let grid = self.grid();
        let (lo, hi) = (self.ext_lo, self.ext_hi);
        let dim = self.dim();
        let y_range = if dim == 1 { 0..1 } else { lo[1]..hi[1] };
        (lo[0]..hi[0]).flat_map(move |x| {
            y_range.clone().map(move |y| grid.index([x as usize, y as usize]))
        })
    }

    /// `cQ`: same center, side `c·ℓ(Q)`, snapped outward to the cell lattice and clipped.
    pub fn dilate(&self, c: f64) -> Result<Cube> {
        if !(c >= 1.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("dilation factor must be >= 1, got {c}")));
        }
        // Work with doubled coordinates so the center is an integer.
        let twice_center = 2 * self.lo[0] + self.side;
        let reach = c * self.side as f64;
        let lower = ((twice_center as f64 - reach) / 2.0 + 1e-9).floor() as i64;
        let upper = ((twice_center as f64 + reach) / 2.0 - 1e-9).ceil() as i64;
        let side = upper - lower;
        let mut lo = [lower, 0];
        if self.dim() == 2 {
            lo[1] = self.lo[1] + (lower - self.lo[0]);
        }
        Ok(Cube::lattice(self.grid(), lo, side))
    }
}

/// Which sub-family of lattice cubes realizes "all cubes".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// Dyadic cubes only.
    #[default]
    Dyadic,
    /// Every lattice cube inside the region.
    Aligned,
    /// Dyadic cubes and their half-side translates.
    Shifted,
}

impl Fidelity {
    /// Default per dimension: aligned in 1D, dyadic in 2D.
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            Fidelity::Aligned
        } else {
            Fidelity::Dyadic
        }
    }

    pub fn cubes(&self, grid: Grid, region: Option<Cube>) -> Result<Vec<Cube>> {
        family_cubes(*self, grid, region)
    }
}

impl std::str::FromStr for Fidelity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dyadic" => Ok(Fidelity::Dyadic),
            "aligned" => Ok(Fidelity::Aligned),
            "shifted" => Ok(Fidelity::Shifted),
            other => Err(Error::InvalidInput(format!("unknown fidelity `{other}`"))),
        }
    }
}

fn region_or_root(grid: Grid, region: Option<Cube>) -> Result<Cube> {
    let r = region.unwrap_or_else(|| grid.root());
    if r.grid() != grid || !r.within_root() {
        return Err(Error::Domain("region must be an unclipped cube of this grid".into()));
    }
    Ok(r)
}

/// All cubes of one side length in a family: lower corners `origin + idx·step`
/// for `idx` in `0..count` along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    pub side: i64,
    pub step: i64,
    pub origin: [i64; 2],
    pub count: usize,
}

impl Layer {
    pub fn len(&self, dim: usize) -> usize {
        self.count.pow(dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn cube(&self, grid: Grid, pos: [usize; 2]) -> Cube {
        let mut lo = [0i64; 2];
        for d in 0..grid.dim() {
            lo[d] = self.origin[d] + pos[d] as i64 * self.step;
        }
        Cube::lattice(grid, lo, self.side)
    }

    /// Positions along one axis whose cube covers cell coordinate `x`, as a half-open range.
    pub fn covering(&self, axis: usize, x: i64) -> (usize, usize) {
        let rel = x - self.origin[axis];
        let lo = (rel - self.side + 1).max(0);
        let lo = (lo + self.step - 1) / self.step;
        let hi = if rel < 0 { 0 } else { rel / self.step + 1 };
        let hi = hi.min(self.count as i64);
        (lo as usize, (hi.max(lo)) as usize)
    }

    pub fn cubes(&self, grid: Grid) -> Vec<Cube> {
        let ys = if grid.dim() == 1 { 1 } else { self.count };
        let mut out = Vec::with_capacity(self.count * ys);
        for i in 0..self.count {
            for j in 0..ys {
                out.push(self.cube(grid, [i, j]));
            }
        }
        out
    }
}

impl Fidelity {
    /// The family inside `region` (default root), grouped by side length, largest first.
    pub fn layers(&self, grid: Grid, region: Option<Cube>) -> Result<Vec<Layer>> {
        let r = region_or_root(grid, region)?;
        if *self == Fidelity::Dyadic && !r.is_dyadic() {
            return Err(Error::Domain("region must be dyadic".into()));
        }
        let mut out = Vec::new();
        match self {
            Fidelity::Aligned => {
                for side in (1..=r.side).rev() {
                    out.push(Layer { side, step: 1, origin: r.lo, count: (r.side - side + 1) as usize });
                }
            }
            Fidelity::Dyadic | Fidelity::Shifted => {
                let mut side = r.side;
                while side >= 1 {
                    let step = if *self == Fidelity::Dyadic || side < 2 { side } else { side / 2 };
                    let count = ((r.side - side) / step + 1) as usize;
                    out.push(Layer { side, step, origin: r.lo, count });
                    side /= 2;
                }
            }
        }
        Ok(out)
    }
}

/// 𝒟(Q₀): every dyadic cube contained in `region` (default root), `region` included.
pub fn dyadic_cubes(grid: Grid, region: Option<Cube>) -> Result<Vec<Cube>> {
    Fidelity::Dyadic.cubes(grid, region)
}

fn family_cubes(fid: Fidelity, grid: Grid, region: Option<Cube>) -> Result<Vec<Cube>> {
    Ok(fid.layers(grid, region)?.iter().flat_map(|l| l.cubes(grid)).collect())
}

/// Piecewise-constant real function on the cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} cell values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.cell_count()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn indicator(cube: &Cube) -> Self {
        let mut f = Self::zeros(cube.grid());
        for i in cube.cells() {
            f.values[i] = 1.0;
        }
        f
    }

    /// Samples `g` at cell centers.
    pub fn from_centers(grid: Grid, g: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.cell_count()).map(|i| g(grid.cell_center(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| g(v)).collect() }
    }

    pub fn zip_map(&self, other: &GridFunction, g: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| g(a, b)).collect(),
        })
    }

    pub fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("functions live on different grids".into()));
        }
        Ok(())
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    /// Pointwise `|f|^p`.
    pub fn abs_pow(&self, p: f64) -> Self {
        self.map(|v| v.abs().powf(p))
    }

    /// `f · 1_Q`.
    pub fn restrict(&self, cube: &Cube) -> Self {
        let mut out = Self::zeros(self.grid);
        for i in cube.cells() {
            out.values[i] = self.values[i];
        }
        out
    }

    /// Values on a dyadic cube `q`, re-read as a function on the root of a
    /// grid of depth `L - k`: `x ↦ f(lo(q) + ℓ(q)·x)`.
    pub fn zoom(&self, q: &Cube) -> Result<GridFunction> {
        let k = q
            .dyadic_level()
            .ok_or_else(|| Error::Domain("zoom needs a dyadic cube".into()))?;
        let sub = Grid::new(self.grid.dim(), self.grid.level() - k)?;
        let m = sub.side_cells();
        let lo = q.lo();
        let mut values = Vec::with_capacity(sub.cell_count());
        for c in 0..sub.cell_count() {
            let s = sub.coords(c);
            let mut at = [0usize; 2];
            for d in 0..sub.dim() {
                at[d] = lo[d] as usize + s[d];
            }
            values.push(self.values[self.grid.index(at)]);
        }
        debug_assert_eq!(values.len(), m.pow(sub.dim() as u32));
        Ok(GridFunction { grid: sub, values })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// Ensures the function is a weight (strictly positive on every cell).
    pub fn check_weight(&self) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(i) => Err(Error::Domain(format!("weight is not positive at cell {i}"))),
            None => Ok(()),
        }
    }

    /// ∫ over the root.
    pub fn total(&self) -> f64 {
        pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    /// ∫_Q f dx, exact for the piecewise-constant model.
    pub fn integrate(&self, cube: &Cube) -> Result<f64> {
        if cube.grid() != self.grid || !cube.within_root() {
            return Err(Error::Domain("cube is not inside the root of this grid".into()));
        }
        Ok(self.integrate_extent(cube))
    }

    /// ∫ over the clipped extent of `cube` (no domain check).
    pub fn integrate_extent(&self, cube: &Cube) -> f64 {
        let vals: Vec<f64> = cube.cells().map(|i| self.values[i]).collect();
        pairwise_sum(&vals) * self.grid.cell_volume()
    }

    /// Barred integral: ∫_Q f / |Q|.
    pub fn average(&self, cube: &Cube) -> Result<f64> {
        Ok(self.integrate(cube)? / cube.volume())
    }

    /// Inner product ∫ f g.
    pub fn dot(&self, other: &GridFunction) -> Result<f64> {
        self.same_grid(other)?;
        let prods: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(pairwise_sum(&prods) * self.grid.cell_volume())
    }
}

/// Pairwise summation; error grows like `log n` instead of `n`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[derive(Debug, Clone, Copy, Default)]
struct TwoFloat {
    hi: f64,
    lo: f64,
}

impl TwoFloat {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn add(self, o: TwoFloat) -> Self {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let e = (self.hi - (s - bb)) + (o.hi - bb) + self.lo + o.lo;
        let hi = s + e;
        Self { hi, lo: e - (hi - s) }
    }

    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Summed-area table with compensated accumulation; integrals over any
/// lattice extent in O(1).
#[derive(Debug, Clone)]
pub struct Integrator {
    grid: Grid,
    stride: usize,
    table: Vec<TwoFloat>,
}

impl Integrator {
    pub fn new(f: &GridFunction) -> Self {
        let grid = f.grid();
        let n = grid.side_cells();
        let stride = n + 1;
        let v = f.values();
        if grid.dim() == 1 {
            let mut table = vec![TwoFloat::default(); stride];
            for i in 0..n {
                table[i + 1] = table[i].add(TwoFloat::from(v[i]));
            }
            return Self { grid, stride, table };
        }
        let mut table = vec![TwoFloat::default(); stride * stride];
        for i in 0..n {
            let mut row = TwoFloat::default();
            for j in 0..n {
                row = row.add(TwoFloat::from(v[i * n + j]));
                table[(i + 1) * stride + j + 1] = table[i * stride + j + 1].add(row);
            }
        }
        Self { grid, stride, table }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Sum of cell values over the clipped extent of `cube`.
    pub fn cell_sum(&self, cube: &Cube) -> f64 {
        let (lo, hi) = cube.extent();
        if cube.is_empty() {
            return 0.0;
        }
        if self.grid.dim() == 1 {
            return self.table[hi[0] as usize].add(self.table[lo[0] as usize].neg()).value();
        }
        let s = self.stride;
        let at = |a: i64, b: i64| self.table[a as usize * s + b as usize];
        at(hi[0], hi[1])
            .add(at(lo[0], hi[1]).neg())
            .add(at(hi[0], lo[1]).neg())
            .add(at(lo[0], lo[1]))
            .value()
    }

    /// ∫ over the clipped extent of `cube`.
    pub fn integral(&self, cube: &Cube) -> f64 {
        self.cell_sum(cube) * self.grid.cell_volume()
    }
}

/// Range minimum over lattice rectangles: a sparse table along the last axis,
/// scanned along the first.
#[derive(Debug, Clone)]
pub struct RangeMin {
    grid: Grid,
    levels: Vec<Vec<f64>>,
}

impl RangeMin {
    pub fn new(f: &GridFunction) -> Self {
        let grid = f.grid();
        let n = grid.side_cells();
        let rows = if grid.dim() == 1 { 1 } else { n };
        let mut levels = vec![f.values().to_vec()];
        let mut w = 1;
        while 2 * w <= n {
            let prev = levels.last().unwrap();
            let mut next = vec![f64::INFINITY; rows * n];
            for r in 0..rows {
                for j in 0..=(n - 2 * w) {
                    next[r * n + j] = prev[r * n + j].min(prev[r * n + j + w]);
                }
            }
            levels.push(next);
            w *= 2;
        }
        Self { grid, levels }
    }

    pub fn min(&self, cube: &Cube) -> f64 {
        let (lo, hi) = cube.extent();
        if cube.is_empty() {
            return f64::INFINITY;
        }
        let n = self.grid.side_cells();
        let last = self.grid.dim() - 1;
        let (a, b) = (lo[last] as usize, hi[last] as usize);
        let k = (usize::BITS - 1 - (b - a).leading_zeros()) as usize;
        let t = &self.levels[k];
        let row_min = |r: usize| t[r * n + a].min(t[r * n + b - (1 << k)]);
        if self.grid.dim() == 1 {
            row_min(0)
        } else {
            (lo[0] as usize..hi[0] as usize).map(row_min).fold(f64::INFINITY, f64::min)
        }
    }
}

/// Sliding-window maximum: `out[x] = max(vals[lo(x)..hi(x)])` for windows whose
/// ends are nondecreasing in `x`. Empty windows give `-inf`.
pub fn sliding_max(vals: &[f64], len: usize, window: impl Fn(usize) -> (usize, usize)) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; len];
    let mut dq: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut next = 0;
    for (x, slot) in out.iter_mut().enumerate() {
        let (lo, hi) = window(x);
        while next < hi {
            while let Some(&back) = dq.back() {
                if vals[back] <= vals[next] {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(next);
            next += 1;
        }
        while let Some(&front) = dq.front() {
            if front < lo {
                dq.pop_front();
            } else {
                break;
            }
        }
        if lo < hi {
            if let Some(&front) = dq.front() {
                *slot = vals[front];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(l: usize) -> Grid {
        Grid::new(1, l).unwrap()
    }

    #[test]
    fn integrate_constants() {
        let g = g1(4);
        let one = GridFunction::constant(g, 1.0);
        assert_eq!(one.integrate(&g.root()).unwrap(), 1.0);
        let c = 2.5;
        let f = GridFunction::constant(g, c);
        for k in 0..=4 {
            let q = g.dyadic(k, [0, 0]).unwrap();
            assert!((f.integrate(&q).unwrap() - c * (-(k as f64)).exp2()).abs() < 1e-15);
            assert!((one.average(&q).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn integrate_matches_direct_cell_sum() {
        let g = g1(3);
        let vals = vec![0.3, -1.2, 4.0, 0.5, 2.0, 2.0, -0.1, 7.0];
        let f = GridFunction::new(g, vals.clone()).unwrap();
        let half = g.dyadic(1, [0, 0]).unwrap();
        let direct: f64 = vals[..4].iter().sum::<f64>() / 8.0;
        assert!((f.integrate(&half).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn integrate_outside_root_is_domain_error() {
        let g = g1(3);
        let f = GridFunction::constant(g, 1.0);
        let q = Cube::lattice(g, [6, 0], 4);
        assert!(matches!(f.integrate(&q), Err(Error::Domain(_))));
    }

    #[test]
    fn dilation_examples() {
        let g = g1(3);
        // [1/4, 1/2)
        let q = g.cube([2, 0], 2).unwrap();
        assert_eq!(q.dilate(1.0).unwrap(), q);
        // 3Q = [0, 3/4): fits in the root exactly.
        let q3 = q.dilate(3.0).unwrap();
        assert_eq!(q3.extent(), ([0, 0], [6, 1]));
        assert!(!q3.is_clipped());
        // [3/8, 1/2) dilated by 2 is [5/16, 9/16), snapped outward to [1/4, 5/8).
        let r = g.cube([3, 0], 1).unwrap();
        let r2 = r.dilate(2.0).unwrap();
        assert_eq!(r2.extent(), ([2, 0], [5, 1]));
        // A cube at the edge gets clipped and flagged.
        let e = g.cube([0, 0], 2).unwrap().dilate(3.0).unwrap();
        assert!(e.is_clipped());
        assert_eq!(e.extent(), ([0, 0], [4, 1]));
        assert!(g.root().dilate(0.5).is_err());
    }

    #[test]
    fn dilation_2d_is_a_square() {
        let g = Grid::new(2, 3).unwrap();
        let q = g.cube([2, 4], 2).unwrap();
        let d = q.dilate(3.0).unwrap();
        assert_eq!(d.lo(), [0, 2]);
        assert_eq!(d.side_cells(), 6);
    }

    #[test]
    fn dyadic_counts() {
        assert_eq!(dyadic_cubes(g1(2), None).unwrap().len(), 7);
        assert_eq!(dyadic_cubes(Grid::new(2, 1).unwrap(), None).unwrap().len(), 5);
        let g = g1(3);
        let half = g.dyadic(1, [0, 0]).unwrap();
        let sub = dyadic_cubes(g, Some(half)).unwrap();
        assert_eq!(sub.len(), 7);
        assert!(sub.contains(&half));
        assert!(sub.iter().all(|c| half.contains(c) && c.is_dyadic()));
    }

    #[test]
    fn aligned_and_shifted_counts() {
        let g = g1(3);
        assert_eq!(Fidelity::Aligned.cubes(g, None).unwrap().len(), 36);
        // sides 8,4,2,1 with half steps: 1 + 3 + 7 + 8
        assert_eq!(Fidelity::Shifted.cubes(g, None).unwrap().len(), 19);
        let g2 = Grid::new(2, 2).unwrap();
        assert_eq!(Fidelity::Aligned.cubes(g2, None).unwrap().len(), 16 + 9 + 4 + 1);
    }

    #[test]
    fn parent_child_roundtrip() {
        let g = Grid::new(2, 3).unwrap();
        let q = g.dyadic(2, [1, 3]).unwrap();
        for c in q.children() {
            assert_eq!(c.parent().unwrap(), q);
            assert_eq!(c.dyadic_level(), Some(3));
        }
        assert_eq!(g.root().parent(), None);
    }

    #[test]
    fn additivity_over_children() {
        let g = Grid::new(2, 3).unwrap();
        let f = GridFunction::from_centers(g, |x| (7.0 * x[0]).sin() + x[1] * x[1]);
        for q in dyadic_cubes(g, None).unwrap() {
            if q.side_cells() < 2 {
                continue;
            }
            let s: f64 = q.children().iter().map(|c| f.integrate(c).unwrap()).sum();
            assert!((s - f.integrate(&q).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn integrator_matches_direct_sums() {
        let g = Grid::new(2, 3).unwrap();
        let f = GridFunction::from_centers(g, |x| (11.0 * x[0] * x[1]).cos() + 2.0);
        let ig = Integrator::new(&f);
        for q in Fidelity::Aligned.cubes(g, None).unwrap() {
            let direct = f.integrate(&q).unwrap();
            assert!((ig.integral(&q) - direct).abs() < 1e-14, "{q:?}");
        }
        let g1 = Grid::new(1, 5).unwrap();
        let f1 = GridFunction::from_centers(g1, |x| 1e-8 + x[0] * x[0]);
        let ig1 = Integrator::new(&f1);
        for q in Fidelity::Aligned.cubes(g1, None).unwrap() {
            let direct = f1.integrate(&q).unwrap();
            assert!((ig1.integral(&q) - direct).abs() <= 1e-15 * direct.abs().max(1e-300) * 10.0);
        }
    }

    #[test]
    fn zoom_reads_subcube() {
        let g = Grid::new(2, 3).unwrap();
        let f = GridFunction::new(g, (0..64).map(|i| i as f64).collect()).unwrap();
        let q = g.dyadic(1, [1, 0]).unwrap();
        let z = f.zoom(&q).unwrap();
        assert_eq!(z.grid().level(), 2);
        assert_eq!(z.values()[0], f.values()[g.index([4, 0])]);
        assert_eq!(z.values()[5], f.values()[g.index([5, 1])]);
        let s: f64 = z.values().iter().sum();
        assert_eq!(s, q.cells().map(|i| f.values()[i]).sum::<f64>());
    }

    #[test]
    fn range_min_matches_scan() {
        let g = Grid::new(2, 3).unwrap();
        let f = GridFunction::from_centers(g, |x| (17.0 * x[0] + 5.0 * x[1]).sin());
        let rm = RangeMin::new(&f);
        for q in Fidelity::Aligned.cubes(g, None).unwrap() {
            let direct = q.cells().map(|i| f.values()[i]).fold(f64::INFINITY, f64::min);
            assert_eq!(rm.min(&q), direct);
        }
        let clipped = g.cube([2, 2], 2).unwrap().dilate(5.0).unwrap();
        let direct = clipped.cells().map(|i| f.values()[i]).fold(f64::INFINITY, f64::min);
        assert_eq!(rm.min(&clipped), direct);
    }

    #[test]
    fn sliding_max_matches_naive() {
        let vals = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let w = |x: usize| (x.saturating_sub(2), (x + 1).min(8));
        let out = sliding_max(&vals, 8, w);
        for x in 0..8 {
            let (a, b) = w(x);
            let naive = vals[a..b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(out[x], naive);
        }
    }

    #[test]
    fn layer_covering_ranges() {
        let g = g1(4);
        for fid in [Fidelity::Dyadic, Fidelity::Aligned, Fidelity::Shifted] {
            for layer in fid.layers(g, None).unwrap() {
                for x in 0..16i64 {
                    let (a, b) = layer.covering(0, x);
                    for pos in 0..layer.count {
                        let q = layer.cube(g, [pos, 0]);
                        assert_eq!(q.contains_cell([x as usize, 0]), a <= pos && pos < b);
                    }
                }
            }
        }
    }
}
