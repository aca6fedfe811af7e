use super::{rising, SeriesValue};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::map::{PostcriticalOrbit, UnimodalMap};
use crate::observable::{HorizontalityRecord, Observable, Perturbation};
use crate::C64;
use nalgebra::{DMatrix, DVector};

/// Sums below this are treated as vanishing when recording the order.
pub const HORIZONTAL_TOL: f64 = 1e-9;
/// Target for sums after a horizontal correction.
pub const CORRECTED_TOL: f64 = 1e-10;
pub const MAX_CONDITION: f64 = 1e12;

fn sup_x(map: &UnimodalMap, x: &Perturbation) -> f64 {
    // sampled sup, padded so that it bounds the continuous sup of a smooth field
    x.sup_on(map.c2(), map.c1()) * (1.0 + 1e-3)
}

/// Bound for `Σ_{j>=J+1} sup rising(j,d) (rλ)^{-j} r^{-d}` and the `J` that
/// brings it below `tol`.
fn alpha_terms(sup: f64, r: f64, lambda: f64, d: usize, tol: f64) -> (usize, f64) {
    if sup == 0.0 {
        return (0, 0.0);
    }
    let rl = r * lambda;
    let mut j = 0usize;
    loop {
        let m = j + 1;
        let q = (m + d) as f64 / m as f64 / rl;
        if q < 1.0 {
            let log_t = sup.ln() + (0..d).map(|i| ((m + i) as f64).ln()).sum::<f64>()
                - m as f64 * rl.ln()
                - d as f64 * r.ln();
            let bound = log_t.exp() / (1.0 - q);
            if bound <= tol {
                return (j, bound);
            }
        }
        j += 1;
    }
}

/// Full-sum bound `Σ_{j>=1} sup rising(j,d) (rλ)^{-j} r^{-d}`.
fn alpha_sup(sup: f64, r: f64, lambda: f64, d: usize) -> f64 {
    let (j, tail) = alpha_terms(sup, r, lambda, d, 1e-16 * sup.max(1e-300));
    let rl = r * lambda;
    (1..=j).map(|i| sup * rising(i, d) * rl.powi(-(i as i32)) * r.powi(-(d as i32))).sum::<f64>() + tail
}

/// d-th z-derivative of `α(c_ℓ, z) = −Σ_{j>=1} X(c_{ℓ+j}) / (z^j (f^j)'(c_ℓ))`.
pub fn alpha_eval(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x: &Perturbation,
    ell: usize,
    z: C64,
    d: usize,
    tol: f64,
) -> Result<SeriesValue> {
    let r = z.norm();
    let lambda = map.lambda();
    if !(r * lambda > 1.0) {
        return Err(Error::OutsideDomain(r));
    }
    if x.is_zero() {
        return Ok(SeriesValue::exact(C64::new(0.0, 0.0)));
    }
    let (jmax, tail) = alpha_terms(sup_x(map, x), r, lambda, d, tol);
    orbit.require(ell + jmax)?;
    let w = z.inv();
    let mut deriv = 1.0;
    let mut wp = w.powi(d as i32);
    let mut acc = C64::new(0.0, 0.0);
    for j in 1..=jmax {
        deriv *= map.deriv(orbit.point(ell + j - 1));
        wp *= w;
        acc += wp * (x.eval(orbit.point(ell + j)) * rising(j, d) / deriv);
    }
    // ∂^d z^{-j} = (−1)^d rising(j,d) z^{-j-d}, and α carries an overall minus
    let sign = if d % 2 == 0 { -1.0 } else { 1.0 };
    Ok(SeriesValue { value: acc * sign, terms: jmax, tail })
}

/// `U^{(d)}(z)` and `V_φ^{(d)}(z)` for `d = 0..=max_order`.
#[derive(Clone, Debug)]
pub struct SingularFactors {
    pub u: Vec<SeriesValue>,
    pub v: Vec<SeriesValue>,
}

#[allow(clippy::too_many_arguments)]
pub fn singular_factors(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x: &Perturbation,
    phi: &Observable,
    s1: f64,
    z: C64,
    max_order: usize,
    tol: f64,
) -> Result<SingularFactors> {
    let r = z.norm();
    let lambda = map.lambda();
    if !(r * lambda > 1.0) {
        return Err(Error::OutsideDomain(r));
    }
    let zero = C64::new(0.0, 0.0);
    if x.is_zero() {
        let e = SeriesValue::exact(zero);
        return Ok(SingularFactors { u: vec![e; max_order + 1], v: vec![e; max_order + 1] });
    }
    let sx = sup_x(map, x);
    let sphi = phi.sup_on(map.c2(), map.c1()) * (1.0 + 1e-3);
    let geo = lambda / (lambda - 1.0);
    let scale = (s1.abs() * sphi * geo).max(1e-300);
    let mut u = Vec::with_capacity(max_order + 1);
    let mut v = Vec::with_capacity(max_order + 1);
    for d in 0..=max_order {
        let a1 = alpha_eval(map, orbit, x, 1, z, d, tol)?;
        let x1 = if d == 0 { x.eval(orbit.point(1)) } else { 0.0 };
        u.push(SeriesValue { value: (C64::new(x1, 0.0) - a1.value) * s1, terms: a1.terms, tail: s1.abs() * a1.tail });

        // V: outer truncation at J with the sup bound on α, inner α tails at tol/(2 scale)
        let amax = alpha_sup(sx, r, lambda, d);
        let mut jv = 1usize;
        while s1.abs() * sphi * amax * lambda.powi(-(jv as i32)) * geo > 0.5 * tol {
            jv += 1;
        }
        let atol = 0.5 * tol / scale;
        let mut acc = zero;
        let mut tail = s1.abs() * sphi * amax * lambda.powi(-(jv as i32)) * geo;
        let mut terms = 0;
        for j in 1..=jv {
            let inv = orbit.inv_deriv(j - 1);
            let a = alpha_eval(map, orbit, x, j, z, d, atol)?;
            acc += phi.eval(orbit.point(j)) * a.value * inv;
            tail += s1.abs() * phi.eval(orbit.point(j)).norm() * inv.abs() * a.tail;
            terms = terms.max(j + a.terms);
        }
        v.push(SeriesValue { value: -acc * s1, terms, tail });
    }
    Ok(SingularFactors { u, v })
}

/// `Σ_{n>=ℓ} n!/(n−ℓ)! X(c_{n+1}) / D_n`.
pub fn horizontality_sum(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x: &Perturbation,
    ell: usize,
    tol: f64,
) -> Result<SeriesValue> {
    if x.is_zero() {
        return Ok(SeriesValue::exact(C64::new(0.0, 0.0)));
    }
    let lambda = map.lambda();
    let sx = sup_x(map, x);
    // first n past which the ratio-test bound of the remaining terms is <= tol
    let mut n = ell;
    let tail = loop {
        let m = n + 1;
        let q = (m as f64 / (m - ell) as f64) / lambda;
        if q < 1.0 {
            let log_t = sx.ln() + (0..ell).map(|i| ((m - i) as f64).ln()).sum::<f64>() - m as f64 * lambda.ln();
            let bound = log_t.exp() / (1.0 - q);
            if bound <= tol {
                break bound;
            }
        }
        n += 1;
        if n > orbit.derivs_len() || n + 1 > orbit.len() {
            return Err(Error::TailUnreachable { needed: n + 1, available: orbit.len() });
        }
    };
    let mut acc = 0.0;
    for k in ell..=n {
        let fall: f64 = (0..ell).map(|i| (k - i) as f64).product();
        acc += fall * x.eval(orbit.point(k + 1)) * orbit.inv_deriv(k);
    }
    Ok(SeriesValue { value: C64::new(acc, 0.0), terms: n + 1 - ell, tail })
}

/// Sums of orders `0..max_order` and the number of leading vanishing ones.
pub fn horizontality_record(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x: &Perturbation,
    max_order: usize,
) -> Result<HorizontalityRecord> {
    let mut residuals = Vec::with_capacity(max_order);
    for ell in 0..max_order {
        residuals.push(horizontality_sum(map, orbit, x, ell, 1e-15)?.value.re);
    }
    let order = residuals.iter().take_while(|r| r.abs() <= HORIZONTAL_TOL).count();
    Ok(HorizontalityRecord { order, residuals })
}

/// `X = X_0 + Σ t_i X_i` with the sums of orders `0..H` removed.
pub fn make_horizontal(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x0: &Expr,
    basis: &[Expr],
    order: usize,
) -> Result<Perturbation> {
    let a = map.a();
    let base = Perturbation::new(x0.clone(), a)?;
    if order == 0 {
        let rec = horizontality_record(map, orbit, &base, 1)?;
        return Ok(base.with_record(rec));
    }
    if basis.len() != order {
        return Err(Error::SingularSystem(f64::INFINITY));
    }
    let elems: Vec<Perturbation> = basis.iter().map(|e| Perturbation::new(e.clone(), a)).collect::<Result<_>>()?;
    let sums = |p: &Perturbation| -> Result<Vec<f64>> {
        (0..order).map(|ell| Ok(horizontality_sum(map, orbit, p, ell, 1e-16)?.value.re)).collect()
    };
    let mut m = DMatrix::<f64>::zeros(order, order);
    for (i, e) in elems.iter().enumerate() {
        for (ell, s) in sums(e)?.into_iter().enumerate() {
            m[(ell, i)] = s;
        }
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin == 0.0 { f64::INFINITY } else { smax / smin };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularSystem(cond));
    }
    let lu = m.lu();
    let mut t = DVector::<f64>::zeros(order);
    let mut current = base.clone();
    // one step plus a refinement pass against the assembled field
    for _ in 0..2 {
        let rhs = -DVector::from_vec(sums(&current)?);
        let dt = lu.solve(&rhs).ok_or(Error::SingularSystem(cond))?;
        t += dt;
        let expr = x0.linear_combination(t.as_slice(), basis);
        current = Perturbation::new(expr, a)?;
    }
    let rec = horizontality_record(map, orbit, &current, order + 1)?;
    let worst = rec.residuals[..order].iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    if worst > CORRECTED_TOL {
        return Err(Error::SingularSystem(cond));
    }
    Ok(current.with_record(rec))
}

/// `V_φ(1) = Σ_j φ(c_j) Σ_{k>=j} s_1 X(c_{k+1}) / D_k` for horizontal `X`.
pub fn v_at_one_resummed(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x: &Perturbation,
    phi: &Observable,
    s1: f64,
    tol: f64,
) -> Result<SeriesValue> {
    if x.is_zero() {
        return Ok(SeriesValue::exact(C64::new(0.0, 0.0)));
    }
    let h0 = horizontality_sum(map, orbit, x, 0, 1e-14)?.value.re;
    if h0.abs() > 1e-8 {
        return Err(Error::NotHorizontal(h0));
    }
    let lambda = map.lambda();
    let sx = sup_x(map, x);
    let sphi = phi.sup_on(map.c2(), map.c1()) * (1.0 + 1e-3);
    let geo = lambda / (lambda - 1.0);
    // |T_j| <= sx λ^{-j} geo, so the outer tail past J is |s1| sphi sx geo^2 λ^{-J-1}... bounded by
    let outer_tail = |j: usize| s1.abs() * sphi * sx * geo * geo * lambda.powi(-(j as i32 + 1));
    let mut jv = 1;
    while outer_tail(jv) > 0.5 * tol {
        jv += 1;
    }
    // inner sums start at k = j and run to kmax with tail sx λ^{-kmax-1} geo
    let mut kmax = jv;
    while s1.abs() * sphi * jv as f64 * sx * geo * lambda.powi(-(kmax as i32 + 1)) > 0.5 * tol {
        kmax += 1;
    }
    orbit.require(kmax + 1)?;
    if kmax > orbit.derivs_len() {
        return Err(Error::TailUnreachable { needed: kmax, available: orbit.derivs_len() });
    }
    let mut t = 0.0;
    let mut tj = vec![0.0; jv + 1];
    for k in (1..=kmax).rev() {
        t += x.eval(orbit.point(k + 1)) * orbit.inv_deriv(k);
        if k <= jv {
            tj[k] = t;
        }
    }
    let value: C64 = (1..=jv).map(|j| phi.eval(orbit.point(j)) * tj[j]).sum::<C64>() * s1;
    let tail = outer_tail(jv) + s1.abs() * sphi * jv as f64 * sx * geo * lambda.powi(-(kmax as i32 + 1));
    Ok(SeriesValue { value, terms: kmax, tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{build_map, postcritical_orbit, MapSpec};

    fn setup(slope: f64) -> (UnimodalMap, PostcriticalOrbit) {
        let m = build_map(&MapSpec::tent(slope)).unwrap();
        let o = postcritical_orbit(&m, 5000).unwrap();
        (m, o)
    }

    #[test]
    fn tent_two_alpha_vanishes() {
        let (m, o) = setup(2.0);
        let x = Perturbation::parse("x*(1-x)", 0.0).unwrap();
        let a = alpha_eval(&m, &o, &x, 1, C64::new(1.0, 0.0), 0, 1e-14).unwrap();
        assert_eq!(a.value, C64::new(0.0, 0.0));
        let a = alpha_eval(&m, &o, &Perturbation::zero(), 1, C64::new(0.9, 0.1), 2, 1e-14).unwrap();
        assert_eq!(a.value, C64::new(0.0, 0.0));
    }

    #[test]
    fn alpha_domain() {
        let (m, o) = setup(1.9);
        let x = Perturbation::parse("x", 0.0).unwrap();
        assert!(matches!(
            alpha_eval(&m, &o, &x, 1, C64::new(0.5, 0.0), 0, 1e-10),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn alpha_derivative_matches_fd_and_sum() {
        let (m, o) = setup(1.9);
        let x = Perturbation::parse("x*(1-x)", 0.0).unwrap();
        let one = C64::new(1.0, 0.0);
        let h = 1e-5;
        let fd = (alpha_eval(&m, &o, &x, 1, one + h, 0, 1e-15).unwrap().value
            - alpha_eval(&m, &o, &x, 1, one - h, 0, 1e-15).unwrap().value)
            / (2.0 * h);
        let d1 = alpha_eval(&m, &o, &x, 1, one, 1, 1e-14).unwrap().value;
        assert!((fd - d1).norm() < 1e-6);
        let direct: f64 = (1..200).map(|j| j as f64 * x.eval(o.point(1 + j)) * o.inv_deriv(j)).sum();
        assert!((d1.re - direct).abs() < 1e-12);
        let fd2 = (alpha_eval(&m, &o, &x, 1, one + h, 1, 1e-15).unwrap().value
            - alpha_eval(&m, &o, &x, 1, one - h, 1, 1e-15).unwrap().value)
            / (2.0 * h);
        let d2 = alpha_eval(&m, &o, &x, 1, one, 2, 1e-14).unwrap().value;
        assert!((fd2 - d2).norm() < 1e-5);
    }

    #[test]
    fn horizontality_examples() {
        let (m, o) = setup(2.0);
        let x = Perturbation::parse("x*(1-x)", 0.0).unwrap();
        assert_eq!(horizontality_sum(&m, &o, &x, 0, 1e-14).unwrap().value.re, 0.0);
        let x = Perturbation::parse("x", 0.0).unwrap();
        assert_eq!(horizontality_sum(&m, &o, &x, 0, 1e-14).unwrap().value.re, 1.0);
        for ell in 0..4 {
            let z = horizontality_sum(&m, &o, &Perturbation::zero(), ell, 1e-14).unwrap();
            assert_eq!(z.value.re, 0.0);
        }
    }

    #[test]
    fn u_at_one_is_scaled_sum() {
        let (m, o) = setup(1.9);
        let x = Perturbation::parse("x^2*(1-x)", 0.0).unwrap();
        let phi = Observable::parse("x - 0.5").unwrap();
        let s1 = -1.3;
        let f = singular_factors(&m, &o, &x, &phi, s1, C64::new(1.0, 0.0), 0, 1e-13).unwrap();
        let h0 = horizontality_sum(&m, &o, &x, 0, 1e-15).unwrap().value.re;
        assert!((f.u[0].value.re - s1 * h0).abs() < 1e-12);
    }

    #[test]
    fn make_horizontal_order_one_and_two() {
        let (m, o) = setup(1.9);
        let x0 = Expr::parse("x*(1-x)").unwrap();
        let b1 = Expr::parse("x^2*(1-x)").unwrap();
        let b2 = Expr::parse("x^3*(1-x)").unwrap();
        let x = make_horizontal(&m, &o, &x0, &[b1.clone()], 1).unwrap();
        assert!(horizontality_sum(&m, &o, &x, 0, 1e-15).unwrap().value.norm() <= 1e-10);
        assert!(x.record().unwrap().order >= 1);
        let x2 = make_horizontal(&m, &o, &x0, &[b1.clone(), b2], 2).unwrap();
        for ell in 0..2 {
            assert!(horizontality_sum(&m, &o, &x2, ell, 1e-15).unwrap().value.norm() <= 1e-10);
        }
        assert!(matches!(make_horizontal(&m, &o, &x0, &[b1], 2), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn already_horizontal_needs_no_correction() {
        let (m, o) = setup(2.0);
        let x0 = Expr::parse("x*(1-x)").unwrap();
        let x = make_horizontal(&m, &o, &x0, &[Expr::parse("x^2*(1-x)").unwrap()], 1);
        // for the slope-2 tent every basis element vanishes on the orbit too
        assert!(matches!(x, Err(Error::SingularSystem(_))));
        let x = make_horizontal(&m, &o, &x0, &[Expr::parse("x").unwrap()], 1).unwrap();
        assert!(x.eval(0.3) == x0.eval(0.3));
    }

    #[test]
    fn resummation_matches_v_at_one() {
        let (m, o) = setup(1.9);
        let x = make_horizontal(
            &m,
            &o,
            &Expr::parse("x*(1-x)").unwrap(),
            &[Expr::parse("x^2*(1-x)").unwrap()],
            1,
        )
        .unwrap();
        let phi = Observable::parse("cos(3*x)").unwrap();
        let s1 = -1.3;
        let f = singular_factors(&m, &o, &x, &phi, s1, C64::new(1.0, 0.0), 0, 1e-12).unwrap();
        let r = v_at_one_resummed(&m, &o, &x, &phi, s1, 1e-12).unwrap();
        assert!((f.v[0].value - r.value).norm() < 1e-9);
        let nh = Perturbation::parse("x", 0.0).unwrap();
        assert!(matches!(v_at_one_resummed(&m, &o, &nh, &phi, s1, 1e-12), Err(Error::NotHorizontal(_))));
    }

    #[test]
    fn zero_field_gives_zero_factors() {
        let (m, o) = setup(1.9);
        let phi = Observable::parse("x").unwrap();
        let f = singular_factors(&m, &o, &Perturbation::zero(), &phi, -1.3, C64::new(0.8, 0.2), 1, 1e-12).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|s| s.value == C64::new(0.0, 0.0)));
    }
}
