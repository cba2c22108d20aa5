//! Morrey norms, weighted and dyadic weighted Morrey norms, and the Hölder
//! inequality against a block weight.
//!
//! All suprema return the attaining cube. Ties go to the smallest cube address.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Cube, Fidelity, Grid, GridFunction, Integrator};

/// Relative slack for exact inequalities.
pub const EXACT_SLACK: f64 = 1e-9;
const COUPLING_TOL: f64 = 1e-12;

/// Supremum over a cube family together with a cube attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sup {
    pub value: f64,
    pub cube: Cube,
}

/// Hölder conjugate `p' = p/(p-1)`; `1' = ∞`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Exponents of the weighted Morrey estimates.
///
/// `coupled` enforces `1/q0 = 1/p0 - α/n`, `q/q0 = p/p0` and
/// `λ/n = 1 - p/p0`; `relaxed` only fixes `(p, p0)` and sets `q = p`, `α = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub n: usize,
    pub p: f64,
    pub p0: f64,
    pub q: f64,
    pub q0: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub coupled: bool,
}

impl ExponentSet {
    pub fn coupled(n: usize, p: f64, p0: f64, alpha: f64) -> Result<Self> {
        if !(n == 1 || n == 2) {
            return Err(Error::InvalidInput(format!("dimension must be 1 or 2, got {n}")));
        }
        let nf = n as f64;
        if !(1.0 < p && p < p0 && p0.is_finite()) {
            return Err(Error::InvalidInput(format!("need 1 < p < p0 < inf, got p={p}, p0={p0}")));
        }
        if !(0.0..nf).contains(&alpha) {
            return Err(Error::InvalidInput(format!("need 0 <= alpha < n, got {alpha}")));
        }
        let inv_q0 = 1.0 / p0 - alpha / nf;
        if inv_q0 <= 0.0 {
            return Err(Error::InvalidInput(format!("1/p0 - alpha/n must be positive, got {inv_q0}")));
        }
        let q0 = 1.0 / inv_q0;
        let q = q0 * p / p0;
        if q <= 1.0 {
            return Err(Error::InvalidInput(format!("derived q = {q} must exceed 1")));
        }
        let lambda = nf * (1.0 - p / p0);
        Ok(Self { n, p, p0, q, q0, alpha, lambda, coupled: true })
    }

    /// Validates a fully specified set against the coupling relations.
    pub fn new(n: usize, p: f64, p0: f64, q: f64, q0: f64, alpha: f64) -> Result<Self> {
        let e = Self::coupled(n, p, p0, alpha)?;
        let close = |a: f64, b: f64| (a - b).abs() <= COUPLING_TOL * a.abs().max(b.abs()).max(1.0);
        if !close(1.0 / q0, 1.0 / e.q0) || !close(q, e.q) {
            return Err(Error::InvalidInput(format!(
                "exponents violate the coupling: expected q={}, q0={}, got q={q}, q0={q0}",
                e.q, e.q0
            )));
        }
        Ok(e)
    }

    /// Norm-only pair `(p, p0)` with `1 <= p <= p0`.
    pub fn relaxed(n: usize, p: f64, p0: f64) -> Result<Self> {
        if !(1.0 <= p && p <= p0 && p0.is_finite()) {
            return Err(Error::InvalidInput(format!("need 1 <= p <= p0 < inf, got p={p}, p0={p0}")));
        }
        let lambda = n as f64 * (1.0 - p / p0);
        Ok(Self { n, p, p0, q: p, q0: p0, alpha: 0.0, lambda, coupled: false })
    }

    pub fn p_conj(&self) -> f64 {
        conjugate(self.p)
    }
}

/// Maximum of `value` over a cube family.
pub fn sup_over(
    grid: Grid,
    fidelity: Fidelity,
    region: Option<Cube>,
    value: impl Fn(&Cube) -> f64 + Sync + Send,
) -> Result<Sup> {
    let cubes = fidelity.cubes(grid, region)?;
    sup_over_cubes(&cubes, value)
}

pub fn sup_over_cubes(cubes: &[Cube], value: impl Fn(&Cube) -> f64 + Sync + Send) -> Result<Sup> {
    if cubes.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let (i, v) = exec::argmax_by(cubes, value).ok_or(Error::EmptyFamily)?;
    Ok(Sup { value: v, cube: cubes[i] })
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("exponent must be in [1, inf), got {p}")));
    }
    Ok(())
}

/// `‖f‖_{L^{p,λ}} = sup_Q (ℓ(Q)^{-λ} ∫_Q |f|^p)^{1/p}` over the selected family.
pub fn lpl_norm(f: &GridFunction, p: f64, lambda: f64, fidelity: Fidelity) -> Result<Sup> {
    lpl_norm_in(f, p, lambda, fidelity, None)
}

/// As [`lpl_norm`], restricted to cubes inside `region`.
pub fn lpl_norm_in(
    f: &GridFunction,
    p: f64,
    lambda: f64,
    fidelity: Fidelity,
    region: Option<Cube>,
) -> Result<Sup> {
    check_exponent(p)?;
    let ig = Integrator::new(&f.abs_pow(p));
    let s = sup_over(f.grid(), fidelity, region, |q| ig.integral(q) * q.side_length().powf(-lambda))?;
    Ok(Sup { value: s.value.max(0.0).powf(1.0 / p), cube: s.cube })
}

/// `‖f‖_{M^{p0}_p} = sup_Q |Q|^{1/p0} (avg_Q |f|^p)^{1/p}`.
pub fn morrey_norm(f: &GridFunction, p: f64, p0: f64, fidelity: Fidelity) -> Result<Sup> {
    if p > p0 {
        return Err(Error::InvalidInput(format!("need p <= p0, got p={p}, p0={p0}")));
    }
    let lambda = f.grid().dim() as f64 * (1.0 - p / p0);
    lpl_norm(f, p, lambda, fidelity)
}

/// `‖f w‖` in the Morrey norm `M^{p0}_p`.
pub fn weighted_morrey_norm(
    f: &GridFunction,
    w: &GridFunction,
    p: f64,
    p0: f64,
    fidelity: Fidelity,
) -> Result<Sup> {
    w.check_weight()?;
    morrey_norm(&f.mul(w)?, p, p0, fidelity)
}

/// `‖f w‖_{L^{p,λ}}`.
pub fn weighted_lpl_norm(
    f: &GridFunction,
    w: &GridFunction,
    p: f64,
    lambda: f64,
    fidelity: Fidelity,
) -> Result<Sup> {
    w.check_weight()?;
    lpl_norm(&f.mul(w)?, p, lambda, fidelity)
}

/// `sup_{Q dyadic} (w(Q)^{-λ/n} ∫_Q |f|^p w)^{1/p}`.
pub fn dyadic_weighted_morrey_norm(f: &GridFunction, w: &GridFunction, p: f64, lambda: f64) -> Result<Sup> {
    check_exponent(p)?;
    w.check_weight()?;
    let n = f.grid().dim() as f64;
    if !(0.0 < lambda && lambda < n) {
        return Err(Error::InvalidInput(format!("need 0 < lambda < n, got {lambda}")));
    }
    let num = Integrator::new(&f.abs_pow(p).mul(w)?);
    let wi = Integrator::new(w);
    let s = sup_over(f.grid(), Fidelity::Dyadic, None, |q| {
        num.integral(q) * wi.integral(q).powf(-lambda / n)
    })?;
    Ok(Sup { value: s.value.max(0.0).powf(1.0 / p), cube: s.cube })
}

/// `(∫ |f|^p)^{1/p}` over the root.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    f.abs_pow(p).total().powf(1.0 / p)
}

/// `(∫ |f|^p w)^{1/p}` over the root.
pub fn weighted_lp_norm(f: &GridFunction, w: &GridFunction, p: f64) -> Result<f64> {
    Ok(f.abs_pow(p).dot(w)?.powf(1.0 / p))
}

/// Both sides of `∫fg ≤ (∫f^p b)^{1/p} (∫g^{p'} b^{1-p'})^{1/p'}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `∫ g^{p'} b^{1-p'}` with `0·∞ = 0` where `b` vanishes.
pub fn dual_weight_integral(g: &GridFunction, b: &GridFunction, p: f64) -> Result<f64> {
    g.same_grid(b)?;
    let pc = conjugate(p);
    let mut terms = Vec::with_capacity(g.values().len());
    for (&gv, &bv) in g.values().iter().zip(b.values()) {
        let ga = gv.abs();
        if ga == 0.0 {
            terms.push(0.0);
        } else if bv <= 0.0 {
            return Ok(f64::INFINITY);
        } else {
            terms.push(ga.powf(pc) * bv.powf(1.0 - pc));
        }
    }
    Ok(crate::grid::pairwise_sum(&terms) * g.grid().cell_volume())
}

pub fn holder_morrey_check(f: &GridFunction, g: &GridFunction, b: &GridFunction, p: f64) -> Result<HolderCheck> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("need 1 < p < inf, got {p}")));
    }
    if !f.is_nonnegative() || !g.is_nonnegative() || !b.is_nonnegative() {
        return Err(Error::InvalidInput("f, g and b must be nonnegative".into()));
    }
    let lhs = f.dot(g)?;
    let a = f.abs_pow(p).dot(b)?.powf(1.0 / p);
    let c = dual_weight_integral(g, b, p)?.powf(1.0 / conjugate(p));
    // An infinite dual factor makes the bound vacuous even when the other factor vanishes.
    let rhs = if c.is_infinite() { f64::INFINITY } else if a == 0.0 || c == 0.0 { 0.0 } else { a * c };
    Ok(HolderCheck { lhs, rhs, ok: lhs <= rhs * (1.0 + EXACT_SLACK) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(g: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::new(g, (0..g.cell_count()).map(|_| rng.gen_range(-2.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn coupling_of_worked_set() {
        let e = ExponentSet::coupled(1, 2.0, 4.0, 0.125).unwrap();
        assert!((e.lambda - 0.5).abs() < 1e-15);
        assert!((e.q0 - 8.0).abs() < 1e-12);
        assert!((e.q - 4.0).abs() < 1e-12);
        assert!(ExponentSet::new(1, 2.0, 4.0, 4.0, 8.0, 0.125).is_ok());
        assert!(ExponentSet::new(1, 2.0, 4.0, 3.0, 8.0, 0.125).is_err());
        assert!(ExponentSet::coupled(1, 2.0, 4.0, 0.5).is_err());
    }

    #[test]
    fn constant_one_has_unit_norm_at_root() {
        let g = Grid::new(1, 4).unwrap();
        let one = GridFunction::constant(g, 1.0);
        for fid in [Fidelity::Dyadic, Fidelity::Aligned, Fidelity::Shifted] {
            let s = morrey_norm(&one, 2.0, 4.0, fid).unwrap();
            assert!((s.value - 1.0).abs() < 1e-15);
            assert_eq!(s.cube, g.root());
        }
    }

    #[test]
    fn indicator_norm_closed_form() {
        let g = Grid::new(1, 5).unwrap();
        for k in 0..=5 {
            let q = g.dyadic(k, [0, 0]).unwrap();
            let f = GridFunction::indicator(&q);
            let s = morrey_norm(&f, 2.0, 3.0, Fidelity::Aligned).unwrap();
            let want = (-(k as f64) / 3.0).exp2();
            assert!((s.value - want).abs() < 1e-14 * want, "k={k}");
            assert_eq!(s.cube, q);
        }
    }

    #[test]
    fn dyadic_below_aligned_below_constant_times_dyadic() {
        let g = Grid::new(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_fn(g, &mut rng);
            let d = morrey_norm(&f, 1.5, 3.0, Fidelity::Dyadic).unwrap().value;
            let a = morrey_norm(&f, 1.5, 3.0, Fidelity::Aligned).unwrap().value;
            assert!(d <= a * (1.0 + 1e-12));
            // Any interval sits in the union of at most two adjacent dyadic
            // intervals of at most twice its length.
            assert!(a <= 4.0 * d);
        }
    }

    #[test]
    fn weighted_reduces_and_cancels() {
        let g = Grid::new(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_fn(g, &mut rng);
        let one = GridFunction::constant(g, 1.0);
        let a = weighted_morrey_norm(&f, &one, 2.0, 5.0, Fidelity::Aligned).unwrap();
        let b = morrey_norm(&f, 2.0, 5.0, Fidelity::Aligned).unwrap();
        assert_eq!(a, b);
        let w = GridFunction::new(g, (0..16).map(|_| rng.gen_range(0.1..4.0)).collect()).unwrap();
        let q = g.dyadic(2, [1, 0]).unwrap();
        let inv = w.map(|v| 1.0 / v).restrict(&q);
        let lhs = weighted_morrey_norm(&inv, &w, 2.0, 5.0, Fidelity::Aligned).unwrap().value;
        let rhs = morrey_norm(&GridFunction::indicator(&q), 2.0, 5.0, Fidelity::Aligned).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-14);
        let bad = GridFunction::constant(g, 0.0);
        assert!(weighted_morrey_norm(&f, &bad, 2.0, 5.0, Fidelity::Aligned).is_err());
    }

    #[test]
    fn dyadic_weighted_closed_form_and_homogeneity() {
        let g = Grid::new(1, 5).unwrap();
        let one = GridFunction::constant(g, 1.0);
        let s = dyadic_weighted_morrey_norm(&one, &one, 2.0, 0.5).unwrap();
        assert!((s.value - 1.0).abs() < 1e-15);
        assert_eq!(s.cube, g.root());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_fn(g, &mut rng);
        let w = GridFunction::new(g, (0..32).map(|_| rng.gen_range(0.1..4.0)).collect()).unwrap();
        let (p, lam, c) = (3.0, 0.4, 2.7);
        let a = dyadic_weighted_morrey_norm(&f, &w, p, lam).unwrap().value;
        let b = dyadic_weighted_morrey_norm(&f, &w.scale(c), p, lam).unwrap().value;
        assert!((b / a - c.powf((1.0 - lam) / p)).abs() < 1e-12);
    }

    #[test]
    fn holder_equality_and_zero() {
        let g = Grid::new(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_fn(g, &mut rng).abs();
        let b = GridFunction::new(g, (0..16).map(|_| rng.gen_range(0.1..4.0)).collect()).unwrap();
        let p = 2.5;
        let gg = f.map(|v| v.powf(p - 1.0)).mul(&b).unwrap();
        let h = holder_morrey_check(&f, &gg, &b, p).unwrap();
        assert!(h.ok);
        assert!((h.lhs - h.rhs).abs() < 1e-12 * h.rhs);
        let z = GridFunction::zeros(g);
        let h0 = holder_morrey_check(&f, &z, &b, p).unwrap();
        assert!(h0.ok && h0.lhs == 0.0);
    }

    #[test]
    fn holder_with_block_missing_the_overlap_is_vacuous() {
        let g = Grid::new(1, 2).unwrap();
        let f = GridFunction::new(g, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let gg = GridFunction::new(g, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let b = GridFunction::new(g, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let h = holder_morrey_check(&f, &gg, &b, 2.0).unwrap();
        assert!(h.ok && h.rhs.is_infinite());
    }

    #[test]
    fn empty_region_family_is_error() {
        assert!(matches!(sup_over_cubes(&[], |_| 0.0), Err(Error::EmptyFamily)));
    }
}
