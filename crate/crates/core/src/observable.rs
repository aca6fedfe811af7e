//! Observables `φ` and perturbation fields `X`.

use crate::acim::Grid;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::map::UnimodalMap;
use crate::C64;
use std::fmt;
use std::sync::Arc;

type CFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// Mean-normalization is accepted when the residual mean is this small.
pub const MEAN_TOL: f64 = 1e-9;

/// A complex-valued observable with optional exact derivative.
#[derive(Clone)]
pub struct Observable {
    f: CFn,
    df: Option<CFn>,
    shift: C64,
    normalized: bool,
    label: String,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("label", &self.label)
            .field("shift", &self.shift)
            .field("normalized", &self.normalized)
            .finish()
    }
}

impl Observable {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64) -> C64 + Send + Sync + 'static,
        df: Option<CFn>,
    ) -> Self {
        Observable { f: Arc::new(f), df, shift: C64::new(0.0, 0.0), normalized: false, label: label.into() }
    }

    pub fn from_expr(e: &Expr) -> Self {
        let f = e.clone();
        let d = e.derivative();
        Observable::new(
            e.to_string(),
            move |x| C64::new(f.eval(x), 0.0),
            Some(Arc::new(move |x| C64::new(d.eval(x), 0.0))),
        )
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut o = Observable::from_expr(&Expr::parse(src)?);
        o.label = src.to_string();
        Ok(o)
    }

    pub fn constant(c: C64) -> Self {
        Observable::new(format!("{c}"), move |_| c, Some(Arc::new(|_| C64::new(0.0, 0.0))))
    }

    /// `ψ - e^{iω} ψ∘f`, whose rotated partial sums along the postcritical
    /// orbit telescope.
    pub fn coboundary(map: &UnimodalMap, psi: &Expr, omega: f64) -> Self {
        let rot = C64::from_polar(1.0, omega);
        let (p, dp) = (psi.clone(), psi.derivative());
        let (m, m2) = (map.clone(), map.clone());
        Observable::new(
            format!("coboundary({psi}, omega={omega})"),
            move |x| C64::new(p.eval(x), 0.0) - rot * p.eval(m.eval(x)),
            Some(Arc::new(move |x| {
                C64::new(dp.eval(x), 0.0) - rot * dp.eval(m2.eval(x)) * m2.deriv(x)
            })),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64) -> C64 {
        (self.f)(x) - self.shift
    }

    pub fn deriv(&self, x: f64) -> Option<C64> {
        self.df.as_ref().map(|d| d(x))
    }

    pub fn has_derivative(&self) -> bool {
        self.df.is_some()
    }

    /// Constant subtracted from the raw function.
    pub fn shift(&self) -> C64 {
        self.shift
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `∫ φ ρ dx` by midpoint quadrature on the grid. The sum is taken
    /// relative to the first cell value, so constants integrate exactly.
    pub fn mean(&self, grid: &Grid, rho: &[f64]) -> C64 {
        let base = self.eval(grid.midpoint(0));
        let mut acc = C64::new(0.0, 0.0);
        let mut mass = 0.0;
        for (i, &r) in rho.iter().enumerate() {
            acc += (self.eval(grid.midpoint(i)) - base) * r;
            mass += r;
        }
        base + acc / mass
    }

    /// Copy shifted by its `ρ`-mean and flagged as normalized.
    pub fn normalized(&self, grid: &Grid, rho: &[f64]) -> Observable {
        let m = self.mean(grid, rho);
        let mut out = self.clone();
        out.shift += m;
        out.normalized = out.mean(grid, rho).norm() <= MEAN_TOL;
        out
    }

    /// Marks an observable as mean-zero after an external check.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// Sup of `|φ|` over a uniform sample of `[lo, hi]`.
    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        let n = 4096;
        (0..=n)
            .map(|i| self.eval(lo + (hi - lo) * i as f64 / n as f64).norm())
            .fold(0.0, f64::max)
    }
}

/// Sums of order `ℓ` along the postcritical orbit, with the resulting order.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct HorizontalityRecord {
    /// Number of leading orders whose sums vanish.
    pub order: usize,
    pub residuals: Vec<f64>,
}

/// The perturbation field `X` with `X(a) = 0`.
#[derive(Clone, Debug)]
pub struct Perturbation {
    expr: Expr,
    d1: Expr,
    d2: Expr,
    record: Option<HorizontalityRecord>,
}

pub const X_AT_A_TOL: f64 = 1e-14;

impl Perturbation {
    pub fn new(expr: Expr, a: f64) -> Result<Self> {
        let xa = expr.eval(a);
        if xa.abs() > X_AT_A_TOL {
            return Err(Error::InvalidSpec(format!("X(a) = {xa} must vanish")));
        }
        let d1 = expr.derivative();
        let d2 = d1.derivative();
        Ok(Perturbation { expr, d1, d2, record: None })
    }

    pub fn parse(src: &str, a: f64) -> Result<Self> {
        Perturbation::new(Expr::parse(src)?, a)
    }

    pub fn zero() -> Self {
        Perturbation { expr: Expr::Const(0.0), d1: Expr::Const(0.0), d2: Expr::Const(0.0), record: None }
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero()
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.expr.eval(x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.d1.eval(x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.d2.eval(x)
    }

    pub fn record(&self) -> Option<&HorizontalityRecord> {
        self.record.as_ref()
    }

    pub fn with_record(mut self, record: HorizontalityRecord) -> Self {
        self.record = Some(record);
        self
    }

    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        sample_sup(|x| self.eval(x).abs(), lo, hi)
    }

    pub fn sup_d1_on(&self, lo: f64, hi: f64) -> f64 {
        sample_sup(|x| self.d1(x).abs(), lo, hi)
    }
}

fn sample_sup(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 4096;
    (0..=n).map(|i| f(lo + (hi - lo) * i as f64 / n as f64)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{build_map, MapSpec};

    #[test]
    fn constant_mean_is_exact() {
        let g = Grid::new(0.0, 1.0, 64);
        let rho: Vec<f64> = (0..64).map(|i| 1.0 + 0.3 * (i as f64 / 7.0).sin()).collect();
        let o = Observable::constant(C64::new(2.5, -1.0));
        assert_eq!(o.mean(&g, &rho), C64::new(2.5, -1.0));
    }

    #[test]
    fn normalization_removes_mean() {
        let g = Grid::new(0.0, 1.0, 128);
        let rho = vec![1.0; 128];
        let o = Observable::parse("x^2").unwrap().normalized(&g, &rho);
        assert!(o.is_normalized());
        assert!((o.shift().re - (1.0 / 3.0 - 1.0 / (12.0 * 128.0 * 128.0))).abs() < 1e-12);
    }

    #[test]
    fn coboundary_derivative() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let psi = Expr::parse("sin(pi*x)").unwrap();
        let o = Observable::coboundary(&m, &psi, 1.0);
        let h = 1e-6;
        for &x in &[0.2, 0.7] {
            let fd = (o.eval(x + h) - o.eval(x - h)) / (2.0 * h);
            assert!((fd - o.deriv(x).unwrap()).norm() < 1e-6);
        }
    }

    #[test]
    fn perturbation_must_vanish_at_a() {
        assert!(Perturbation::parse("x*(1-x)", 0.0).is_ok());
        assert!(Perturbation::parse("1+x", 0.0).is_err());
    }
}
