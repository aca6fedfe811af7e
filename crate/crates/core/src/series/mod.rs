//! Power series along the critical orbits with certified truncation tails.

mod rational;
mod singular;
mod suscept;

pub use rational::{rational_sigma, RationalSigma, Residue};
pub use singular::{
    alpha_eval, horizontality_record, horizontality_sum, make_horizontal, singular_factors,
    v_at_one_resummed, SingularFactors,
};
pub use suscept::{susceptibility_direct, Continuation, Route, Susceptibility, SusceptibilityValue, OUTER_RADIUS};

use crate::error::{Error, Result};
use crate::map::{PostcriticalOrbit, PrecriticalOrbit, UnimodalMap};
use crate::observable::Observable;
use crate::C64;
use serde::Serialize;

/// A truncated series value with a bound on the discarded tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: C64,
    /// Number of terms summed.
    pub terms: usize,
    pub tail: f64,
}

impl SeriesValue {
    pub fn exact(value: C64) -> Self {
        SeriesValue { value, terms: 0, tail: 0.0 }
    }
}

/// Summation mode for `σ_φ` inside the disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaMode {
    Direct,
    /// Abel summation through the partial sums rotated by `ω`.
    Abel { omega: f64 },
}

/// `k!/(k-d)!`.
fn falling(k: usize, d: usize) -> f64 {
    (0..d).map(|i| (k - i) as f64).product()
}

/// `k (k+1) ... (k+d-1)`.
fn rising(k: usize, d: usize) -> f64 {
    (0..d).map(|i| (k + i) as f64).product()
}

/// Smallest `K` with `sup r^K/(1-r) <= tol`.
fn geometric_terms(sup: f64, r: f64, tol: f64) -> usize {
    if sup == 0.0 || r == 0.0 {
        return 1;
    }
    let k = ((tol * (1.0 - r) / sup).ln() / r.ln()).ceil();
    if k.is_finite() {
        (k.max(1.0)) as usize
    } else {
        usize::MAX
    }
}

/// Smallest `K > d` such that the tail `Σ_{k>=K} sup k!/(k-d)! r^{k-d}` is
/// bounded by `tol` through the ratio test. Returns `(K, bound)`.
fn derivative_terms(sup: f64, r: f64, d: usize, tol: f64, limit: usize) -> Option<(usize, f64)> {
    if sup == 0.0 {
        return Some((d + 1, 0.0));
    }
    let mut k = d + 1;
    // term t_k = sup * falling(k, d) * r^(k-d), computed in logs to avoid overflow
    loop {
        let q = r * (k + 1) as f64 / (k + 1 - d) as f64;
        if q < 1.0 {
            let log_t = sup.ln() + (0..d).map(|i| ((k - i) as f64).ln()).sum::<f64>() + (k - d) as f64 * r.ln();
            let bound = log_t.exp() / (1.0 - q);
            if bound <= tol {
                return Some((k, bound));
            }
        }
        k += 1;
        if k > limit {
            return None;
        }
    }
}

/// Inner series `σ_φ(z) = Σ_{k>=0} φ(c_{k+1}) z^k`, valid for `|z| < 1`.
#[derive(Clone, Debug)]
pub struct SigmaSeries {
    coeffs: Vec<C64>,
    sup: f64,
}

impl SigmaSeries {
    pub fn new(map: &UnimodalMap, orbit: &PostcriticalOrbit, phi: &Observable) -> Self {
        let coeffs: Vec<C64> = orbit.points().iter().map(|&x| phi.eval(x)).collect();
        let sup = coeffs.iter().map(|c| c.norm()).fold(phi.sup_on(map.c2(), map.c1()), f64::max);
        SigmaSeries { coeffs, sup }
    }

    pub fn from_coeffs(coeffs: Vec<C64>, sup: f64) -> Self {
        let sup = coeffs.iter().map(|c| c.norm()).fold(sup, f64::max);
        SigmaSeries { coeffs, sup }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    fn check(&self, z: C64) -> Result<f64> {
        let r = z.norm();
        if !(r < 1.0) {
            return Err(Error::OutsideDomain(r));
        }
        Ok(r)
    }

    pub fn eval(&self, z: C64, tol: f64) -> Result<SeriesValue> {
        self.eval_mode(z, SigmaMode::Direct, tol)
    }

    pub fn eval_mode(&self, z: C64, mode: SigmaMode, tol: f64) -> Result<SeriesValue> {
        let r = self.check(z)?;
        match mode {
            SigmaMode::Direct => {
                let k = geometric_terms(self.sup, r, tol);
                self.need(k)?;
                let value = self.coeffs[..k].iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c);
                let tail = self.sup * r.powi(k as i32) / (1.0 - r);
                Ok(SeriesValue { value, terms: k, tail })
            }
            SigmaMode::Abel { omega } => self.eval_abel(z, omega, tol),
        }
    }

    fn need(&self, k: usize) -> Result<()> {
        if k > self.coeffs.len() {
            return Err(Error::TailUnreachable { needed: k, available: self.coeffs.len() });
        }
        Ok(())
    }

    /// `(1 - z') Σ_{k>=1} S_k(e^{iω}) z'^{k-1}` with `z = e^{iω} z'`.
    fn eval_abel(&self, z: C64, omega: f64, tol: f64) -> Result<SeriesValue> {
        let r = z.norm();
        let rot = C64::from_polar(1.0, omega);
        let zp = z / rot;
        let w = (C64::new(1.0, 0.0) - zp).norm();
        // |S_k| <= k sup, so the tail beyond K is w sup r^K (K + 1 - K r)/(1 - r)^2
        let bound = |k: usize| {
            let kf = k as f64;
            w * self.sup * r.powi(k as i32) * (kf + 1.0 - kf * r) / ((1.0 - r) * (1.0 - r))
        };
        let mut k = geometric_terms(self.sup, r, tol).max(1);
        while self.sup > 0.0 && bound(k) > tol {
            k += 1 + k / 8;
            if k > self.coeffs.len() {
                return Err(Error::TailUnreachable { needed: k, available: self.coeffs.len() });
            }
        }
        self.need(k)?;
        let mut s = C64::new(0.0, 0.0);
        let mut e = C64::new(1.0, 0.0);
        let mut p = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for a in &self.coeffs[..k] {
            s += e * a;
            e *= rot;
            acc += s * p;
            p *= zp;
        }
        let tail = if self.sup == 0.0 { 0.0 } else { bound(k) };
        Ok(SeriesValue { value: (C64::new(1.0, 0.0) - zp) * acc, terms: k, tail })
    }

    /// d-th derivative `Σ_{k>=d} a_k k!/(k-d)! z^{k-d}`.
    pub fn eval_derivative(&self, z: C64, d: usize, tol: f64) -> Result<SeriesValue> {
        if d == 0 {
            return self.eval(z, tol);
        }
        let r = self.check(z)?;
        let (k, tail) = derivative_terms(self.sup, r, d, tol, self.coeffs.len())
            .ok_or(Error::TailUnreachable { needed: usize::MAX, available: self.coeffs.len() })?;
        self.need(k)?;
        let mut value = C64::new(0.0, 0.0);
        for j in (d..k).rev() {
            value = value * z + self.coeffs[j] * falling(j, d);
        }
        Ok(SeriesValue { value, terms: k, tail })
    }
}

/// Outer series `σ_{φ,c_-}(z) = −Σ_{m>=1} φ(y_{-m}) z^{-m}`, valid for `|z| > 1`.
#[derive(Clone, Debug)]
pub struct OuterSigma {
    coeffs: Vec<C64>,
    sup: f64,
}

impl OuterSigma {
    pub fn new(map: &UnimodalMap, pre: &PrecriticalOrbit, phi: &Observable) -> Self {
        let coeffs: Vec<C64> = pre.points().iter().map(|&y| phi.eval(y)).collect();
        let sup = coeffs.iter().map(|c| c.norm()).fold(phi.sup_on(map.c2(), map.c1()), f64::max);
        OuterSigma { coeffs, sup }
    }

    pub fn from_coeffs(coeffs: Vec<C64>, sup: f64) -> Self {
        let sup = coeffs.iter().map(|c| c.norm()).fold(sup, f64::max);
        OuterSigma { coeffs, sup }
    }

    pub fn depth(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, z: C64, tol: f64) -> Result<SeriesValue> {
        self.eval_derivative(z, 0, tol)
    }

    /// d-th derivative `−Σ_{m>=1} b_m (−1)^d m(m+1)...(m+d-1) z^{-m-d}`.
    pub fn eval_derivative(&self, z: C64, d: usize, tol: f64) -> Result<SeriesValue> {
        let rz = z.norm();
        if !(rz > 1.0) {
            return Err(Error::OutsideDomain(rz));
        }
        let w = z.inv();
        let rw = 1.0 / rz;
        let (k, tail) = if d == 0 {
            let k = geometric_terms(self.sup, rw, tol);
            (k, self.sup * rw.powi(k as i32) / (1.0 - rw))
        } else {
            outer_derivative_terms(self.sup, rw, d, tol, self.coeffs.len())
                .ok_or(Error::TailUnreachable { needed: usize::MAX, available: self.coeffs.len() })?
        };
        if k > self.coeffs.len() {
            return Err(Error::TailUnreachable { needed: k, available: self.coeffs.len() });
        }
        // Σ_{m=1}^{k} b_m rising(m, d) w^{m+d}
        let mut acc = C64::new(0.0, 0.0);
        for m in (1..=k).rev() {
            acc = acc * w + self.coeffs[m - 1] * rising(m, d);
        }
        let sign = if d % 2 == 0 { -1.0 } else { 1.0 };
        let value = acc * w.powi(d as i32 + 1) * sign;
        Ok(SeriesValue { value, terms: k, tail })
    }
}

/// Tail `Σ_{m>K} sup rising(m, d) ρ^{m+d}` by the ratio test.
fn outer_derivative_terms(sup: f64, rw: f64, d: usize, tol: f64, limit: usize) -> Option<(usize, f64)> {
    if sup == 0.0 {
        return Some((1, 0.0));
    }
    let mut k = 1usize;
    loop {
        let m = k + 1;
        let q = rw * (m + d) as f64 / m as f64;
        if q < 1.0 {
            let log_t = sup.ln() + (0..d).map(|i| ((m + i) as f64).ln()).sum::<f64>() + (m + d) as f64 * rw.ln();
            let bound = log_t.exp() / (1.0 - q);
            if bound <= tol {
                return Some((k, bound));
            }
        }
        k += 1;
        if k > limit {
            return None;
        }
    }
}

/// `e^{ikω}` with the product `kω` carried to double-double accuracy, so the
/// phase stays exact to rounding for large `k`.
pub fn phase(k: usize, omega: f64) -> C64 {
    let kf = k as f64;
    let p = kf * omega;
    let err = kf.mul_add(omega, -p);
    C64::from_polar(1.0, p) * C64::new(1.0, err)
}

/// Neumaier-compensated complex accumulator.
#[derive(Clone, Copy, Default)]
struct Compensated {
    re: (f64, f64),
    im: (f64, f64),
}

impl Compensated {
    fn add1(acc: &mut (f64, f64), v: f64) {
        let t = acc.0 + v;
        acc.1 += if acc.0.abs() >= v.abs() { (acc.0 - t) + v } else { (v - t) + acc.0 };
        acc.0 = t;
    }

    fn add(&mut self, v: C64) {
        Self::add1(&mut self.re, v.re);
        Self::add1(&mut self.im, v.im);
    }

    fn value(&self) -> C64 {
        C64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// `S_k(e^{iω}) = Σ_{j<k} e^{ijω} φ(c_{j+1})` for `k = 1..=m_max`.
pub fn rotated_sums(orbit: &PostcriticalOrbit, phi: &Observable, omega: f64, m_max: usize) -> Result<Vec<C64>> {
    orbit.require(m_max)?;
    let mut s = Compensated::default();
    let mut out = Vec::with_capacity(m_max);
    for (j, &x) in orbit.points()[..m_max].iter().enumerate() {
        s.add(phase(j, omega) * phi.eval(x));
        out.push(s.value());
    }
    Ok(out)
}

/// `σ_φ(z)` in the chosen mode.
pub fn sigma_eval(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    phi: &Observable,
    z: C64,
    mode: SigmaMode,
    tol: f64,
) -> Result<SeriesValue> {
    SigmaSeries::new(map, orbit, phi).eval_mode(z, mode, tol)
}

pub fn sigma_outer_eval(
    map: &UnimodalMap,
    pre: &PrecriticalOrbit,
    phi: &Observable,
    z: C64,
    tol: f64,
) -> Result<SeriesValue> {
    OuterSigma::new(map, pre, phi).eval(z, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::map::{build_map, postcritical_orbit, precritical_orbit, MapSpec, Side};
    use std::f64::consts::PI;

    fn tent2() -> (UnimodalMap, PostcriticalOrbit) {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let o = postcritical_orbit(&m, 4000).unwrap();
        (m, o)
    }

    #[test]
    fn constant_term() {
        let (m, o) = tent2();
        let phi = Observable::parse("x - 0.5").unwrap();
        let v = sigma_eval(&m, &o, &phi, C64::new(0.0, 0.0), SigmaMode::Direct, 1e-12).unwrap();
        assert_eq!(v.value, C64::new(0.5, 0.0));
    }

    #[test]
    fn tent_two_closed_form() {
        let (m, o) = tent2();
        let phi = Observable::parse("x - 0.5").unwrap();
        for &z in &[C64::new(0.5, 0.0), C64::new(-0.3, 0.7), C64::new(0.0, -0.9)] {
            let v = sigma_eval(&m, &o, &phi, z, SigmaMode::Direct, 1e-13).unwrap();
            let exact = 0.5 - 0.5 * z / (1.0 - z);
            assert!((v.value - exact).norm() < 1e-12, "{z}");
        }
        let v = sigma_eval(&m, &o, &phi, C64::new(0.5, 0.0), SigmaMode::Direct, 1e-13).unwrap();
        assert!(v.value.norm() < 1e-12);
    }

    #[test]
    fn abel_matches_direct() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 200_000).unwrap();
        let phi = Observable::parse("x").unwrap();
        let s = SigmaSeries::new(&m, &o, &phi);
        let z = C64::from_polar(0.9, 1.0);
        let d = s.eval_mode(z, SigmaMode::Direct, 1e-12).unwrap();
        for &omega in &[0.0, 1.0, 2.5] {
            let a = s.eval_mode(z, SigmaMode::Abel { omega }, 1e-12).unwrap();
            assert!((a.value - d.value).norm() <= a.tail + d.tail + 1e-10);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 10_000).unwrap();
        let s = SigmaSeries::new(&m, &o, &Observable::parse("x").unwrap());
        let z = C64::new(0.4, 0.3);
        let h = 1e-5;
        let fd = (s.eval(z + h, 1e-14).unwrap().value - s.eval(z - h, 1e-14).unwrap().value) / (2.0 * h);
        let d1 = s.eval_derivative(z, 1, 1e-12).unwrap();
        assert!((fd - d1.value).norm() < 1e-8);
        let fd2 = (s.eval_derivative(z + h, 1, 1e-13).unwrap().value - s.eval_derivative(z - h, 1, 1e-13).unwrap().value) / (2.0 * h);
        let d2 = s.eval_derivative(z, 2, 1e-12).unwrap();
        assert!((fd2 - d2.value).norm() < 1e-6);
    }

    #[test]
    fn tail_is_honest_when_doubling() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 100_000).unwrap();
        let s = SigmaSeries::new(&m, &o, &Observable::parse("x - 0.5").unwrap());
        let z = C64::from_polar(0.97, 0.4);
        let v = s.eval(z, 1e-6).unwrap();
        let full: C64 = s.coeffs()[..2 * v.terms].iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c);
        assert!((full - v.value).norm() <= v.tail);
    }

    #[test]
    fn tail_unreachable_for_short_orbit() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 50).unwrap();
        let phi = Observable::parse("x").unwrap();
        let e = sigma_eval(&m, &o, &phi, C64::new(0.99, 0.0), SigmaMode::Direct, 1e-12).unwrap_err();
        assert!(matches!(e, Error::TailUnreachable { .. }));
        assert!(matches!(
            sigma_eval(&m, &o, &phi, C64::new(1.0, 0.0), SigmaMode::Direct, 1e-3),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn rotated_sums_examples() {
        let (_, o) = tent2();
        let one = Observable::constant(C64::new(1.0, 0.0));
        let s = rotated_sums(&o, &one, PI, 6).unwrap();
        for (k, v) in s.iter().enumerate() {
            let expect = if k % 2 == 0 { 1.0 } else { 0.0 };
            assert!((v - expect).norm() < 1e-14);
        }
        let phi = Observable::parse("x - 0.5").unwrap();
        let s = rotated_sums(&o, &phi, 0.0, 8).unwrap();
        assert_eq!(s[0], C64::new(0.5, 0.0));
        for k in 2..=8 {
            assert_eq!(s[k - 1].re, 0.5 - (k as f64 - 1.0) / 2.0);
        }
    }

    #[test]
    fn coboundary_telescopes() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 100_001).unwrap();
        let psi = Expr::parse("sin(pi*x)").unwrap();
        for &omega in &[0.0, 1.0, PI / 2.0] {
            let phi = Observable::coboundary(&m, &psi, omega);
            let s = rotated_sums(&o, &phi, omega, 100_000).unwrap();
            for (k, v) in s.iter().enumerate().step_by(997) {
                let k = k + 1;
                let expect = psi.eval(o.point(1)) - phase(k, omega) * psi.eval(o.point(k + 1));
                assert!((v - expect).norm() < 1e-12, "k={k} omega={omega}");
            }
        }
    }

    #[test]
    fn outer_tent_two_all_left() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let pre = precritical_orbit(&m, &[Side::Left; 80], 81).unwrap();
        let phi = Observable::parse("x").unwrap();
        let v = sigma_outer_eval(&m, &pre, &phi, C64::new(2.0, 0.0), 1e-14).unwrap();
        // y_{-m} = 2^{-m}, so the value is -Σ 4^{-m} = -1/3
        assert!((v.value - C64::new(-1.0 / 3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn outer_vanishes_at_infinity_and_needs_depth() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let pre = precritical_orbit(&m, &[Side::Right; 40], 41).unwrap();
        let phi = Observable::parse("x").unwrap();
        for &r in &[10.0, 100.0, 1000.0] {
            let v = sigma_outer_eval(&m, &pre, &phi, C64::new(0.0, r), 1e-12).unwrap();
            assert!(v.value.norm() <= 1.0 / (r - 1.0));
        }
        let e = sigma_outer_eval(&m, &pre, &phi, C64::new(1.01, 0.0), 1e-10).unwrap_err();
        assert!(matches!(e, Error::TailUnreachable { .. }));
        assert!(matches!(sigma_outer_eval(&m, &pre, &phi, C64::new(0.5, 0.0), 1e-3), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn outer_derivative_matches_fd() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let pre = precritical_orbit(&m, &[Side::Left, Side::Right].repeat(60), 121).unwrap();
        let s = OuterSigma::new(&m, &pre, &Observable::parse("x").unwrap());
        let z = C64::new(1.5, 0.4);
        let h = 1e-5;
        let fd = (s.eval(z + h, 1e-14).unwrap().value - s.eval(z - h, 1e-14).unwrap().value) / (2.0 * h);
        assert!((fd - s.eval_derivative(z, 1, 1e-13).unwrap().value).norm() < 1e-8);
    }
}
