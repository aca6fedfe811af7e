use crate::error::{Error, Result};
use crate::map::PostcriticalOrbit;
use crate::observable::Observable;
use crate::C64;
use serde::Serialize;

/// `σ_φ(z) = P(z) + Q(z)/(1 − z^p)` for a preperiodic postcritical orbit.
///
/// `P` collects `φ(c_k) z^{k-1}` for `k < m` and `Q` collects the same
/// monomials for `m <= k < m + p`, so the expansion reproduces every direct
/// coefficient exactly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RationalSigma {
    pub preperiod: usize,
    pub period: usize,
    /// Coefficients of `z^0 .. z^{m-2}`.
    pub p: Vec<C64>,
    /// Coefficients of `z^{m-1} .. z^{m+p-2}`; the power of `q[i]` is `m - 1 + i`.
    pub q: Vec<C64>,
}

/// Residue of `σ_φ` at a pole `z_0` on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residue {
    pub z0: C64,
    /// Residue in the variable `z`: `−z_0 Q(z_0)/p`.
    pub in_z: C64,
    /// `Q(z_0)/p`, the normalization in which rotated Cesàro means converge.
    pub cesaro: C64,
}

pub fn rational_sigma(orbit: &PostcriticalOrbit, phi: &Observable) -> Result<RationalSigma> {
    let pp = orbit.preperiodicity().ok_or(Error::NotPreperiodic)?;
    let (m, per) = (pp.preperiod, pp.period);
    orbit.require(m + per - 1)?;
    let p = (1..m).map(|k| phi.eval(orbit.point(k))).collect();
    let q = (m..m + per).map(|k| phi.eval(orbit.point(k))).collect();
    Ok(RationalSigma { preperiod: m, period: per, p, q })
}

impl RationalSigma {
    fn q_poly(&self, z: C64) -> C64 {
        let inner = self.q.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c);
        inner * z.powi(self.preperiod as i32 - 1)
    }

    pub fn eval(&self, z: C64) -> C64 {
        let pv = self.p.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c);
        pv + self.q_poly(z) / (1.0 - z.powi(self.period as i32))
    }

    /// Coefficient of `z^k` in the expansion.
    pub fn coefficient(&self, k: usize) -> C64 {
        let m1 = self.preperiod - 1;
        if k < m1 {
            self.p[k]
        } else {
            self.q[(k - m1) % self.period]
        }
    }

    /// Residues at the `p` roots of unity.
    pub fn residues(&self) -> Vec<Residue> {
        let p = self.period as f64;
        (0..self.period)
            .map(|j| {
                let z0 = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / p);
                let q = self.q_poly(z0);
                Residue { z0, in_z: -z0 * q / p, cesaro: q / p }
            })
            .collect()
    }
}
