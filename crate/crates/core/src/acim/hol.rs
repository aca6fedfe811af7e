use super::{resolvent_solve, AcimDensity, UlamOperator, DEFLATION_RADIUS};
use crate::error::{Error, Result};
use crate::observable::{Observable, Perturbation};
use crate::C64;

/// `Ψ^hol` and its first z-derivatives at one point.
#[derive(Clone, Debug)]
pub struct HolValue {
    /// `values[d]` is the d-th derivative.
    pub values: Vec<C64>,
    /// `∫g` of the source before projection.
    pub source_mass: f64,
    pub deflated: bool,
    pub residual: f64,
}

/// `X'ρ_sal + (Xρ_reg)'` on the grid, the derivative by centered differences
/// (one-sided at the ends).
pub fn hol_source(x: &Perturbation, density: &AcimDensity) -> Vec<f64> {
    let g = density.grid;
    let n = g.n;
    let h = g.h();
    let w: Vec<f64> = (0..n).map(|i| x.eval(g.midpoint(i)) * density.rho_reg[i]).collect();
    (0..n)
        .map(|i| {
            let dw = if i == 0 {
                (w[1] - w[0]) / h
            } else if i == n - 1 {
                (w[n - 1] - w[n - 2]) / h
            } else {
                (w[i + 1] - w[i - 1]) / (2.0 * h)
            };
            x.d1(g.midpoint(i)) * density.rho_sal[i] + dw
        })
        .collect()
}

/// `Ψ^hol(z) = −∫ (1 − zL)^{-1} g · φ dx` and its derivatives up to
/// `max_order`, the d-th being `−d! ∫ φ (1 − zL)^{-1} (L (1 − zL)^{-1})^d g`.
///
/// For mean-normalized `φ` the source is projected onto the mean-zero
/// subspace first, which leaves the value unchanged and lets the solve pass
/// through `z = 1`.
pub fn psi_hol_eval(
    x: &Perturbation,
    phi: &Observable,
    density: &AcimDensity,
    op: &UlamOperator,
    z: C64,
    max_order: usize,
) -> Result<HolValue> {
    let grid = density.grid;
    let h = grid.h();
    let src = hol_source(x, density);
    let mass = grid.integral(&src);
    let near_one = (z - 1.0).norm() < DEFLATION_RADIUS;
    if near_one && !phi.is_normalized() {
        return Err(Error::MeanNotZero(phi.mean(&grid, &density.rho).norm()));
    }
    let mut g: Vec<C64> = src.iter().map(|&v| C64::new(v, 0.0)).collect();
    if phi.is_normalized() {
        for (gi, ri) in g.iter_mut().zip(&density.rho) {
            *gi -= mass * ri;
        }
    }
    let phis: Vec<C64> = (0..grid.n).map(|i| phi.eval(grid.midpoint(i))).collect();
    let pair = |u: &[C64]| -> C64 { u.iter().zip(&phis).map(|(a, b)| a * b).sum::<C64>() * h };

    let mut values = Vec::with_capacity(max_order + 1);
    let mut residual: f64 = 0.0;
    let mut deflated = false;
    let mut fact = 1.0;
    let mut u = g;
    for d in 0..=max_order {
        if d > 0 {
            fact *= d as f64;
            u = op.apply_complex(&u);
        }
        let sol = resolvent_solve(op, Some(&density.rho), z, &u)?;
        residual = residual.max(sol.residual);
        deflated |= sol.deflated;
        u = sol.u;
        values.push(-pair(&u) * fact);
    }
    Ok(HolValue { values, source_mass: mass, deflated, residual })
}
