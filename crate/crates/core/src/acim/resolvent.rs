use super::UlamOperator;
use crate::error::{Error, Result};
use crate::C64;
use nalgebra::{DMatrix, DVector};

/// Inside this distance from `z = 1` the eigenvalue 1 is deflated.
pub const DEFLATION_RADIUS: f64 = 0.1;
/// Maximum accepted `‖(I − zL)u − g‖₁`.
pub const SOLVE_RESIDUAL: f64 = 1e-8;
/// Maximum accepted `|∫g|` for a deflated solve.
pub const MEAN_ZERO_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub u: Vec<C64>,
    pub deflated: bool,
    /// `‖(I − zL)u − g‖₁` (grid-weighted).
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `(I − zL)u = g` with restarted GMRES on the sparse operator.
///
/// Near `z = 1` the system is replaced by `(I − zL + ρ⊗1)u = g`, which for
/// mean-zero `g` has the mean-zero solution of the original system; `rho`
/// must then be the unit-mass fixed vector.
pub fn resolvent_solve(op: &UlamOperator, rho: Option<&[f64]>, z: C64, g: &[C64]) -> Result<ResolventSolution> {
    let grid = *op.grid();
    let h = grid.h();
    if z == C64::new(0.0, 0.0) {
        return Ok(ResolventSolution { u: g.to_vec(), deflated: false, residual: 0.0, iterations: 0 });
    }
    let deflated = (z - 1.0).norm() < DEFLATION_RADIUS;
    let rho = if deflated {
        let mean = g.iter().sum::<C64>() * h;
        if mean.norm() > MEAN_ZERO_TOL {
            return Err(Error::MeanNotZero(mean.norm()));
        }
        Some(rho.ok_or_else(|| Error::InvalidSpec("deflated solve needs the invariant density".into()))?)
    } else {
        None
    };
    let n = op.n();
    let apply = |x: &[C64], y: &mut [C64]| {
        op.apply_complex_into(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = *xi - z * *yi;
        }
        if let Some(r) = rho {
            let m = x.iter().sum::<C64>() * h;
            for (yi, ri) in y.iter_mut().zip(r) {
                *yi += m * *ri;
            }
        }
    };
    let mut u = g.to_vec();
    let iterations = gmres(apply, g, &mut u, 60, 1e-13, 4000);

    let mut lu = vec![C64::new(0.0, 0.0); n];
    op.apply_complex_into(&u, &mut lu);
    let residual = h * u.iter().zip(&lu).zip(g).map(|((ui, li), gi)| (*ui - z * *li - *gi).norm()).sum::<f64>();
    if !(residual <= SOLVE_RESIDUAL) {
        return Err(Error::NearSingular(residual));
    }
    Ok(ResolventSolution { u, deflated, residual, iterations })
}

/// Dense LU solve of the undeflated system; an independent check for small grids.
pub fn resolvent_solve_dense(op: &UlamOperator, z: C64, g: &[C64]) -> Result<Vec<C64>> {
    let n = op.n();
    let mut a = DMatrix::<C64>::identity(n, n);
    for (i, j, v) in op.triplets() {
        a[(i as usize, j as usize)] -= z * v;
    }
    let b = DVector::from_column_slice(g);
    let x = a.lu().solve(&b).ok_or(Error::NearSingular(f64::INFINITY))?;
    Ok(x.iter().copied().collect())
}

/// Restarted GMRES with modified Gram–Schmidt and complex Givens rotations.
/// `x` holds the initial guess and receives the solution. Stops when the
/// 2-norm residual falls below `rtol ‖b‖`. Returns the number of inner steps.
pub fn gmres(
    apply: impl Fn(&[C64], &mut [C64]),
    b: &[C64],
    x: &mut [C64],
    restart: usize,
    rtol: f64,
    max_iter: usize,
) -> usize {
    let n = b.len();
    let zero = C64::new(0.0, 0.0);
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return 0;
    }
    let target = rtol * bnorm;
    let mut total = 0;
    let mut r = vec![zero; n];
    let mut w = vec![zero; n];
    loop {
        apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let beta = norm(&r);
        if beta <= target || total >= max_iter {
            return total;
        }
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![zero; restart]; restart + 1];
        let mut cs = vec![0.0f64; restart];
        let mut sn = vec![zero; restart];
        let mut res = vec![zero; restart + 1];
        res[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            apply(&basis[k], &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hij: C64 = vj.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                hess[j][k] = hij;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hij * vi;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = C64::new(hn, 0.0);
            for j in 0..k {
                let (a, bb) = (hess[j][k], hess[j + 1][k]);
                hess[j][k] = a * cs[j] + sn[j] * bb;
                hess[j + 1][k] = -sn[j].conj() * a + bb * cs[j];
            }
            let (a, bb) = (hess[k][k], hess[k + 1][k]);
            let t = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = C64::new(1.0, 0.0);
            } else {
                let phase = a / a.norm();
                cs[k] = a.norm() / t;
                sn[k] = phase * bb.conj() / t;
            }
            hess[k][k] = a * cs[k] + sn[k] * bb;
            hess[k + 1][k] = zero;
            res[k + 1] = -sn[k].conj() * res[k];
            res[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if res[k + 1].norm() <= target || hn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut acc = res[i];
            for j in i + 1..k_used {
                acc -= hess[i][j] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += *yj * vi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acim::{build_ulam, stationary_density};
    use crate::map::{build_map, MapSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l1(grid_h: f64, a: &[C64], b: &[C64]) -> f64 {
        grid_h * a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>()
    }

    fn neumann(op: &UlamOperator, z: C64, g: &[C64], terms: usize) -> Vec<C64> {
        let mut acc = g.to_vec();
        let mut cur = g.to_vec();
        for _ in 1..terms {
            cur = op.apply_complex(&cur).into_iter().map(|v| v * z).collect();
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += c;
            }
        }
        acc
    }

    #[test]
    fn identity_at_zero() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let op = build_ulam(&m, 64).unwrap();
        let g: Vec<C64> = (0..64).map(|i| C64::new(i as f64, -1.0)).collect();
        let s = resolvent_solve(&op, None, C64::new(0.0, 0.0), &g).unwrap();
        assert_eq!(s.u, g);
    }

    #[test]
    fn matches_neumann_series() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let op = build_ulam(&m, 512).unwrap();
        let h = op.grid().h();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let g: Vec<C64> = (0..512).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let z = C64::from_polar(rng.random_range(0.0..0.6), rng.random_range(0.0..6.28));
            let s = resolvent_solve(&op, None, z, &g).unwrap();
            let nm = neumann(&op, z, &g, 80);
            assert!(l1(h, &s.u, &nm) < 1e-8);
        }
        let g: Vec<C64> = (0..512).map(|i| C64::new((i as f64 * 0.1).sin(), 0.0)).collect();
        let s = resolvent_solve(&op, None, C64::new(0.5, 0.0), &g).unwrap();
        assert!(l1(h, &s.u, &neumann(&op, C64::new(0.5, 0.0), &g, 60)) < 1e-9);
    }

    #[test]
    fn matches_dense_lu() {
        let m = build_map(&MapSpec::skewed_tent(0.4, 0.96)).unwrap();
        let op = build_ulam(&m, 128).unwrap();
        let g: Vec<C64> = (0..128).map(|i| C64::new((i as f64).cos(), 0.5)).collect();
        let z = C64::new(0.3, 0.85);
        let s = resolvent_solve(&op, None, z, &g).unwrap();
        let d = resolvent_solve_dense(&op, z, &g).unwrap();
        assert!(l1(op.grid().h(), &s.u, &d) < 1e-10);
    }

    #[test]
    fn deflation_at_one() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let op = build_ulam(&m, 512).unwrap();
        let rho = stationary_density(&op).unwrap().rho;
        let h = op.grid().h();
        let mut g: Vec<C64> = (0..512).map(|i| C64::new((i as f64 * 0.05).sin(), 0.0) * rho[i]).collect();
        let mean = g.iter().sum::<C64>() * h;
        for (gi, ri) in g.iter_mut().zip(&rho) {
            *gi -= mean * ri;
        }
        let at_one = resolvent_solve(&op, Some(&rho), C64::new(1.0, 0.0), &g).unwrap();
        assert!(at_one.deflated);
        assert!((at_one.u.iter().sum::<C64>() * h).norm() < 1e-10);
        let mut prev = f64::INFINITY;
        for j in 2..=5 {
            let z = C64::new(1.0 - 10f64.powi(-j), 0.0);
            let s = resolvent_solve(&op, Some(&rho), z, &g).unwrap();
            let d = l1(h, &s.u, &at_one.u);
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn deflation_rejects_massive_data() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let op = build_ulam(&m, 64).unwrap();
        let rho = stationary_density(&op).unwrap().rho;
        let g = vec![C64::new(1.0, 0.0); 64];
        let e = resolvent_solve(&op, Some(&rho), C64::new(1.02, 0.0), &g).unwrap_err();
        assert!(matches!(e, Error::MeanNotZero(_)));
    }
}
