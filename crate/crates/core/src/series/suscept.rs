use super::{singular_factors, OuterSigma, SeriesValue, SigmaSeries};
use crate::acim::{psi_hol_eval, AcimDensity, Grid, UlamOperator};
use crate::error::{Error, Result};
use crate::map::{PostcriticalOrbit, PrecriticalOrbit, UnimodalMap};
use crate::observable::{Observable, Perturbation};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Which continuation of σ the singular part is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Continuation {
    Inner,
    Outer,
}

/// How the singular part was summed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// `−U σ + V`, valid for `|z| λ > 1`.
    Factored,
    /// `−s_1 Σ_j φ(c_j) Σ_{k<=j} z^{j-k} X(c_k)/D_{k-1}`, used inside `|z| <= 1/λ`
    /// where `α` diverges.
    DoubleSeries,
}

#[derive(Clone, Debug, Serialize)]
pub struct SusceptibilityValue {
    pub z: C64,
    pub side: Continuation,
    pub order: usize,
    pub route: Route,
    pub value: C64,
    /// Certified truncation tail of the singular part.
    pub tail: f64,
    pub u: Option<C64>,
    pub sigma: Option<C64>,
    pub v: Option<C64>,
    pub sing: C64,
    pub hol: C64,
    pub hol_residual: f64,
}

/// Inputs for assembling `Ψ_φ` and its outer variant.
pub struct Susceptibility<'a> {
    map: &'a UnimodalMap,
    orbit: &'a PostcriticalOrbit,
    x: &'a Perturbation,
    phi: &'a Observable,
    density: &'a AcimDensity,
    op: &'a UlamOperator,
    sigma: SigmaSeries,
    outer: Option<OuterSigma>,
    tol: f64,
}

/// Sums past this radius (in units of `1/λ`) use the factored form.
const FACTORED_MARGIN: f64 = 1.02;
/// Upper radius of the outer side, where the resolvent is still trusted.
pub const OUTER_RADIUS: f64 = 1.05;

impl<'a> Susceptibility<'a> {
    pub fn new(
        map: &'a UnimodalMap,
        orbit: &'a PostcriticalOrbit,
        x: &'a Perturbation,
        phi: &'a Observable,
        density: &'a AcimDensity,
        op: &'a UlamOperator,
        tol: f64,
    ) -> Self {
        let sigma = SigmaSeries::new(map, orbit, phi);
        Susceptibility { map, orbit, x, phi, density, op, sigma, outer: None, tol }
    }

    pub fn with_outer(mut self, pre: &PrecriticalOrbit) -> Self {
        self.outer = Some(OuterSigma::new(self.map, pre, self.phi));
        self
    }

    pub fn sigma(&self) -> &SigmaSeries {
        &self.sigma
    }

    pub fn outer(&self) -> Option<&OuterSigma> {
        self.outer.as_ref()
    }

    pub fn eval(&self, z: C64, side: Continuation) -> Result<SusceptibilityValue> {
        self.eval_derivative(z, side, 0)
    }

    /// The `d`-th z-derivative of the inner or outer susceptibility.
    pub fn eval_derivative(&self, z: C64, side: Continuation, d: usize) -> Result<SusceptibilityValue> {
        let r = z.norm();
        let lambda = self.map.lambda();
        match side {
            Continuation::Inner if !(r < 1.0) => return Err(Error::OutsideDomain(r)),
            Continuation::Outer if !(r > 1.0 && r < OUTER_RADIUS) => return Err(Error::OutsideDomain(r)),
            _ => {}
        }
        let factored = r * lambda > FACTORED_MARGIN;
        if !factored && d > 0 {
            return Err(Error::OutsideDomain(r));
        }
        let zero = C64::new(0.0, 0.0);
        if self.x.is_zero() {
            return Ok(SusceptibilityValue {
                z,
                side,
                order: d,
                route: if factored { Route::Factored } else { Route::DoubleSeries },
                value: zero,
                tail: 0.0,
                u: Some(zero),
                sigma: None,
                v: Some(zero),
                sing: zero,
                hol: zero,
                hol_residual: 0.0,
            });
        }
        let hol = psi_hol_eval(self.x, self.phi, self.density, self.op, z, d)?;
        let hv = hol.values[d];
        let s1 = self.density.s1;
        if !factored {
            let sing = self.double_series(z)?;
            return Ok(SusceptibilityValue {
                z,
                side,
                order: 0,
                route: Route::DoubleSeries,
                value: sing.value + hv,
                tail: sing.tail,
                u: None,
                sigma: None,
                v: None,
                sing: sing.value,
                hol: hv,
                hol_residual: hol.residual,
            });
        }
        let part_tol = self.tol / 4.0;
        let f = singular_factors(self.map, self.orbit, self.x, self.phi, s1, z, d, part_tol)?;
        let sig: Vec<SeriesValue> = (0..=d)
            .map(|i| match side {
                Continuation::Inner => self.sigma.eval_derivative(z, i, part_tol),
                Continuation::Outer => self
                    .outer
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("outer side needs a precritical orbit".into()))?
                    .eval_derivative(z, i, part_tol),
            })
            .collect::<Result<_>>()?;
        // Leibniz rule on U σ
        let mut prod = zero;
        let mut tail = f.v[d].tail;
        let mut binom = 1.0;
        for i in 0..=d {
            let (u, s) = (&f.u[i], &sig[d - i]);
            prod += u.value * s.value * binom;
            tail += binom * (u.value.norm() * s.tail + s.value.norm() * u.tail + u.tail * s.tail);
            binom = binom * (d - i) as f64 / (i + 1) as f64;
        }
        let sing = -prod + f.v[d].value;
        Ok(SusceptibilityValue {
            z,
            side,
            order: d,
            route: Route::Factored,
            value: sing + hv,
            tail,
            u: Some(f.u[d].value),
            sigma: Some(sig[d].value),
            v: Some(f.v[d].value),
            sing,
            hol: hv,
            hol_residual: hol.residual,
        })
    }

    fn double_series(&self, z: C64) -> Result<SeriesValue> {
        let s1 = self.density.s1;
        let lambda = self.map.lambda();
        let rho = z.norm().max(1.0 / lambda);
        let sx = self.x.sup_on(self.map.c2(), self.map.c1()) * (1.0 + 1e-3);
        let scale = s1.abs() * self.sigma.sup() * sx;
        // |B_j| <= sx j ρ^{j-1}, tail Σ_{j>J} j ρ^{j-1} = ρ^J (J + 1 − J ρ)/(1 − ρ)^2
        let bound = |j: usize| {
            let jf = j as f64;
            scale * rho.powi(j as i32) * (jf + 1.0 - jf * rho) / ((1.0 - rho) * (1.0 - rho))
        };
        let mut jmax = 1;
        while bound(jmax) > self.tol {
            jmax += 1;
        }
        self.orbit.require(jmax)?;
        if jmax > self.orbit.derivs_len() {
            return Err(Error::TailUnreachable { needed: jmax, available: self.orbit.derivs_len() });
        }
        let mut b = C64::new(0.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for j in 1..=jmax {
            let cj = self.orbit.point(j);
            b = b * z + self.x.eval(cj) * self.orbit.inv_deriv(j - 1);
            acc += self.sigma.coeffs()[j - 1] * b;
        }
        Ok(SeriesValue { value: -acc * s1, terms: jmax, tail: bound(jmax) })
    }
}

/// `Σ_{k=0}^{K} z^k ∫ X φ'(f^k x) (f^k)'(x) ρ(x) dx` by the midpoint rule with
/// `sub` points per density cell.
#[allow(clippy::too_many_arguments)]
pub fn susceptibility_direct(
    map: &UnimodalMap,
    x: &Perturbation,
    phi: &Observable,
    grid: &Grid,
    rho: &[f64],
    z: C64,
    k_terms: usize,
    sub: usize,
) -> Result<C64> {
    if x.is_zero() {
        return Ok(C64::new(0.0, 0.0));
    }
    if !phi.has_derivative() {
        return Err(Error::InvalidSpec(format!("observable {} has no derivative", phi.label())));
    }
    let sub = sub.max(1);
    let hq = grid.h() / sub as f64;
    let mut total = C64::new(0.0, 0.0);
    for (i, &r) in rho.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let left = grid.node(i);
        let mut cell = C64::new(0.0, 0.0);
        for q in 0..sub {
            let x0 = left + (q as f64 + 0.5) * hq;
            let w = x.eval(x0);
            if w == 0.0 {
                continue;
            }
            let mut y = x0;
            let mut dk = 1.0;
            let mut zk = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for _ in 0..=k_terms {
                acc += zk * phi.deriv(y).unwrap_or_default() * dk;
                dk *= map.deriv(y);
                y = map.eval(y);
                zk *= z;
            }
            cell += acc * w;
        }
        total += cell * r;
    }
    Ok(total * hq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acim::{build_ulam, saltus_decomposition, stationary_density};
    use crate::map::{build_map, postcritical_orbit, MapSpec};

    struct Setup {
        map: UnimodalMap,
        orbit: PostcriticalOrbit,
        density: AcimDensity,
        op: UlamOperator,
    }

    fn setup(slope: f64, n: usize) -> Setup {
        let map = build_map(&MapSpec::tent(slope)).unwrap();
        let orbit = postcritical_orbit(&map, 20_000).unwrap();
        let op = build_ulam(&map, n).unwrap();
        let sd = stationary_density(&op).unwrap();
        let density = saltus_decomposition(&map, &orbit, &op, &sd, 1e-12).unwrap();
        Setup { map, orbit, density, op }
    }

    #[test]
    fn zero_field_gives_zero() {
        let s = setup(1.9, 256);
        let x = Perturbation::zero();
        let phi = Observable::parse("x").unwrap().normalized(&s.density.grid, &s.density.rho);
        let sus = Susceptibility::new(&s.map, &s.orbit, &x, &phi, &s.density, &s.op, 1e-10);
        for z in [C64::new(0.3, 0.1), C64::new(0.8, -0.3)] {
            assert_eq!(sus.eval(z, Continuation::Inner).unwrap().value, C64::new(0.0, 0.0));
        }
        let g = s.density.grid;
        assert_eq!(susceptibility_direct(&s.map, &x, &phi, &g, &s.density.rho, C64::new(0.3, 0.0), 10, 2).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn routes_agree_on_overlap() {
        let s = setup(1.9, 512);
        let x = Perturbation::parse("x*(1-x)", 0.0).unwrap();
        let phi = Observable::parse("cos(2*x)").unwrap().normalized(&s.density.grid, &s.density.rho);
        let sus = Susceptibility::new(&s.map, &s.orbit, &x, &phi, &s.density, &s.op, 1e-12);
        for z in [C64::new(0.7, 0.0), C64::from_polar(0.8, 2.0), C64::from_polar(0.6, -1.0)] {
            let f = sus.eval(z, Continuation::Inner).unwrap();
            let ds = sus.double_series(z).unwrap();
            assert_eq!(f.route, Route::Factored);
            assert!((f.sing - ds.value).norm() <= f.tail + ds.tail + 1e-10, "z={z} {} vs {}", f.sing, ds.value);
        }
    }

    #[test]
    fn derivative_matches_fd() {
        let s = setup(1.9, 512);
        let x = Perturbation::parse("x*(1-x)", 0.0).unwrap();
        let phi = Observable::parse("x").unwrap().normalized(&s.density.grid, &s.density.rho);
        let sus = Susceptibility::new(&s.map, &s.orbit, &x, &phi, &s.density, &s.op, 1e-12);
        let z = C64::new(0.75, 0.1);
        let h = 1e-5;
        let fd = (sus.eval(z + h, Continuation::Inner).unwrap().value - sus.eval(z - h, Continuation::Inner).unwrap().value) / (2.0 * h);
        let d1 = sus.eval_derivative(z, Continuation::Inner, 1).unwrap().value;
        assert!((fd - d1).norm() < 1e-5 * d1.norm().max(1.0), "{fd} vs {d1}");
    }

    #[test]
    fn direct_oracle_constant_term_refines() {
        let s = setup(1.9, 512);
        let x = Perturbation::parse("x*(1-x)", 0.0).unwrap();
        let phi = Observable::parse("x^2").unwrap();
        let g = s.density.grid;
        let a = susceptibility_direct(&s.map, &x, &phi, &g, &s.density.rho, C64::new(0.0, 0.0), 0, 1).unwrap();
        let b = susceptibility_direct(&s.map, &x, &phi, &g, &s.density.rho, C64::new(0.0, 0.0), 0, 8).unwrap();
        assert!((a - b).norm() < 1e-5);
    }
}
