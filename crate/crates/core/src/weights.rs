//! Muckenhoupt constants, power weights and the A_p measure comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cube, Fidelity, Grid, GridFunction, Integrator, RangeMin};
use crate::norms::{conjugate, sup_over, Sup};

/// `[w]_{A_p}` over the selected family.
///
/// For `p > 1` this is `sup_Q w(Q) σ(Q)^{p-1} / |Q|^p` with `σ = w^{1-p'}`;
/// for `p = 1` it is `sup_Q avg_Q w / min_Q w`.
pub fn ap_constant(w: &GridFunction, p: f64, fidelity: Fidelity) -> Result<Sup> {
    w.check_weight()?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("need 1 <= p < inf, got {p}")));
    }
    let wi = Integrator::new(w);
    if p == 1.0 {
        let rm = RangeMin::new(w);
        return sup_over(w.grid(), fidelity, None, |q| wi.integral(q) / q.volume() / rm.min(q));
    }
    let sigma = w.map(|v| v.powf(1.0 - conjugate(p)));
    let si = Integrator::new(&sigma);
    sup_over(w.grid(), fidelity, None, |q| {
        let v = q.volume();
        (wi.integral(q) / v) * (si.integral(q) / v).powf(p - 1.0)
    })
}

/// `[w]_{A_{p,q}} = sup_Q (avg_Q w^q)^{1/q} (avg_Q w^{-p'})^{1/p'}`.
pub fn apq_constant(w: &GridFunction, p: f64, q: f64, fidelity: Fidelity) -> Result<Sup> {
    w.check_weight()?;
    if !(p > 1.0 && q >= 1.0 && p.is_finite() && q.is_finite()) {
        return Err(Error::InvalidInput(format!("need p > 1 and q >= 1, got p={p}, q={q}")));
    }
    let pc = conjugate(p);
    let up = Integrator::new(&w.map(|v| v.powf(q)));
    let down = Integrator::new(&w.map(|v| v.powf(-pc)));
    sup_over(w.grid(), fidelity, None, |c| {
        let v = c.volume();
        (up.integral(c) / v).powf(1.0 / q) * (down.integral(c) / v).powf(1.0 / pc)
    })
}

/// `[w]_{A_{p,q}}` together with `[w^q]_{A_{1+q/p'}}`; the two are finite together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApqReport {
    pub apq: Sup,
    pub power_class: Sup,
    pub both_finite: bool,
}

pub fn apq_report(w: &GridFunction, p: f64, q: f64, fidelity: Fidelity) -> Result<ApqReport> {
    let apq = apq_constant(w, p, q, fidelity)?;
    let wq = w.map(|v| v.powf(q));
    let power_class = ap_constant(&wq, 1.0 + q / conjugate(p), fidelity)?;
    let both_finite = apq.value.is_finite() == power_class.value.is_finite();
    Ok(ApqReport { apq, power_class, both_finite })
}

/// `w_ρ(x) = |x - x0|^ρ` rasterized on a grid.
///
/// In 1D every cell holds the exact average of `|x - x0|^ρ` over the cell.
/// In 2D cells hold the value at the cell center, except cells whose closure
/// contains `x0`: those hold the midpoint of the disk averages of radius `h/2`
/// and `h/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerWeightSpec {
    pub rho: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl PowerWeightSpec {
    pub fn new(rho: f64, center: [f64; 2]) -> Self {
        Self { rho, center }
    }

    pub fn rasterize(&self, grid: Grid) -> Result<GridFunction> {
        let n = grid.dim() as f64;
        let rho = self.rho;
        if !(rho > -n) || !rho.is_finite() {
            return Err(Error::Domain(format!("power weight needs rho > -n, got {rho}")));
        }
        let h = grid.cell_side();
        let x0 = self.center;
        let values: Vec<f64> = if grid.dim() == 1 {
            let anti = |t: f64| t.signum() * t.abs().powf(rho + 1.0) / (rho + 1.0);
            (0..grid.cell_count())
                .map(|i| {
                    let a = i as f64 * h - x0[0];
                    (anti(a + h) - anti(a)) / h
                })
                .collect()
        } else {
            let disk = |r: f64| 2.0 * r.powf(rho) / (rho + 2.0);
            let singular = 0.5 * (disk(h / 2.0) + disk(h / std::f64::consts::SQRT_2));
            (0..grid.cell_count())
                .map(|i| {
                    let c = grid.coords(i);
                    let touches = (0..2).all(|d| {
                        let lo = c[d] as f64 * h;
                        lo <= x0[d] && x0[d] <= lo + h
                    });
                    if touches {
                        singular
                    } else {
                        let x = grid.cell_center(i);
                        ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt().powf(rho)
                    }
                })
                .collect()
        };
        let f = GridFunction::new(grid, values)?;
        f.check_weight()?;
        Ok(f)
    }
}

/// Both sides of `(|S|/|Q|)^p w(Q) ≤ C [w]_{A_p} w(S)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureComparison {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluates the measure comparison with `[w]_{A_p}` computed over the default family.
pub fn measure_comparison(w: &GridFunction, p: f64, q: &Cube, s: &[bool]) -> Result<MeasureComparison> {
    let ap = ap_constant(w, p, Fidelity::default_for(w.grid().dim()))?.value;
    measure_comparison_with(w, p, q, s, ap)
}

/// As [`measure_comparison`] with a precomputed `[w]_{A_p}`.
pub fn measure_comparison_with(w: &GridFunction, p: f64, q: &Cube, s: &[bool], ap: f64) -> Result<MeasureComparison> {
    w.check_weight()?;
    if s.len() != w.grid().cell_count() {
        return Err(Error::InvalidInput("set mask does not match the grid".into()));
    }
    if let Some(i) = (0..s.len()).find(|&i| s[i] && !q.contains_cell(w.grid().coords(i))) {
        return Err(Error::InvalidInput(format!("cell {i} of S lies outside Q")));
    }
    let cells = s.iter().filter(|&&m| m).count();
    if cells == 0 {
        return Err(Error::InvalidInput("S must be nonempty".into()));
    }
    let vol = w.grid().cell_volume();
    let ws: f64 = s.iter().zip(w.values()).filter(|(m, _)| **m).map(|(_, v)| v).sum::<f64>() * vol;
    let wq = w.integrate(q)?;
    let lhs = (cells as f64 * vol / q.volume()).powf(p) * wq;
    let rhs = ap * ws;
    Ok(MeasureComparison { lhs, rhs, ratio: lhs / rhs })
}

/// `[w]_{A_1}`, `[w]_{A_p}` and `[w]_{A_{p,q}}` with witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConstants {
    pub a1: Sup,
    pub ap: Sup,
    pub apq: Sup,
    pub fidelity: Fidelity,
}

pub fn weight_constants(w: &GridFunction, p: f64, q: f64, fidelity: Fidelity) -> Result<WeightConstants> {
    Ok(WeightConstants {
        a1: ap_constant(w, 1.0, fidelity)?,
        ap: ap_constant(w, p, fidelity)?,
        apq: apq_constant(w, p, q, fidelity)?,
        fidelity,
    })
}
